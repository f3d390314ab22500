#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mbtrim/prng.hpp"
#include "mbtrim/tensor.hpp"

namespace mbtrim {

enum class Split { train, test };

struct Dataset {
    Tensor inputs;
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;
    Split split = Split::train;

    std::size_t size() const noexcept { return labels.size(); }
    /// Throws ConsistencyError when the invariants do not hold.
    void validate() const;
};

struct BlobsParams {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::size_t classes = 0;
    double cluster_std = 1.0;
    double label_flip_prob = 0.0;
};

/// Gaussian clusters. Centers are drawn once from Normal(0, I) (classes x dim,
/// row-major). Sample i belongs to class i % classes and is drawn from
/// Normal(center, cluster_std^2 I); then one uniform draw decides whether its
/// label is replaced by a uniformly drawn class.
Dataset synth_blobs(Prng& prng, const BlobsParams& params);

/// Rows [0, head) and [head, N) as two datasets.
std::pair<Dataset, Dataset> split_head(const Dataset& data, std::size_t head);

/// MNIST IDX containers: images magic 0x00000803 (N,28,28), labels magic
/// 0x00000801 (N). Pixels scaled to [0,1]; shape [N,1,28,28].
Dataset load_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                 Split split = Split::train);

/// CIFAR-10 binary records: 1 label byte + 3072 pixel bytes (R, G, B planes).
Dataset load_cifar10_bin(std::span<const std::uint8_t> bytes, Split split = Split::train);

/// Inverse of the loaders for datasets whose pixels are multiples of 1/255.
std::vector<std::uint8_t> to_cifar10_bin(const Dataset& data);
std::vector<std::uint8_t> to_idx_images(const Dataset& data);
std::vector<std::uint8_t> to_idx_labels(const Dataset& data);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Mean and std per channel: axis 1 for image tensors [N,C,H,W], every
/// feature for [N,D].
struct Standardization {
    std::vector<double> mean;
    std::vector<double> std;
};

struct StandardizedPair {
    Dataset train;
    Dataset test;
    Standardization stats;
};

constexpr double kStdFloor = 1e-6;

Standardization channel_statistics(const Dataset& data);
Dataset apply_standardization(const Dataset& data, const Standardization& stats);
/// Statistics come from the training split only and are applied to both.
StandardizedPair standardize(const Dataset& train, const Dataset& test);

using BatchSlices = std::vector<std::vector<std::size_t>>;

/// Epoch permutation by Fisher-Yates with a Prng seeded from
/// derive_seed(run_seed, epoch); one advance per swap position.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t run_seed, std::uint64_t epoch);

/// Consecutive slices of the epoch permutation; the last slice may be short.
BatchSlices batches(std::size_t n, std::size_t batch_size, std::uint64_t run_seed, std::uint64_t epoch);

inline BatchSlices batches(const Dataset& data, std::size_t batch_size, std::uint64_t run_seed,
                           std::uint64_t epoch) {
    return batches(data.size(), batch_size, run_seed, epoch);
}

}  // namespace mbtrim
