#include "mbtrim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

namespace mbtrim {

void Dataset::validate() const {
    if (labels.empty()) {
        throw ConsistencyError("dataset must hold at least one sample");
    }
    if (inputs.dim(0) != labels.size()) {
        throw ConsistencyError("dataset has " + std::to_string(inputs.dim(0)) + " inputs but " +
                               std::to_string(labels.size()) + " labels");
    }
    for (auto label : labels) {
        if (label >= class_count) {
            throw ConsistencyError("label " + std::to_string(label) + " out of range [0," +
                                   std::to_string(class_count) + ")");
        }
    }
}

Dataset synth_blobs(Prng& prng, const BlobsParams& p) {
    if (p.classes < 2 || p.dim == 0 || p.n < p.classes) {
        throw ParameterError("synth_blobs: need classes >= 2, dim >= 1 and n >= classes");
    }
    if (!(p.cluster_std > 0.0)) {
        throw ParameterError("synth_blobs: cluster_std must be > 0");
    }
    if (!(p.label_flip_prob >= 0.0 && p.label_flip_prob < 1.0)) {
        throw ParameterError("synth_blobs: label_flip_prob must be in [0, 1)");
    }
    const Tensor centers = randn(prng, {p.classes, p.dim}, 0.0, 1.0);
    Dataset out{Tensor({p.n, p.dim}, 0.0), std::vector<std::size_t>(p.n), p.classes, Split::train};
    for (std::size_t i = 0; i < p.n; ++i) {
        const std::size_t cls = i % p.classes;
        for (std::size_t d = 0; d < p.dim; ++d) {
            out.inputs(i, d) = centers(cls, d) + p.cluster_std * prng.normal();
        }
        std::size_t label = cls;
        if (prng.uniform() < p.label_flip_prob) {
            label = static_cast<std::size_t>(prng.below(p.classes));
        }
        out.labels[i] = label;
    }
    return out;
}

std::pair<Dataset, Dataset> split_head(const Dataset& data, std::size_t head) {
    if (head == 0 || head >= data.size()) {
        throw ParameterError("split_head: both parts must be nonempty");
    }
    std::vector<std::size_t> first(head), second(data.size() - head);
    std::iota(first.begin(), first.end(), std::size_t{0});
    std::iota(second.begin(), second.end(), head);
    Dataset a{gather_rows(data.inputs, std::span<const std::size_t>(first)),
              {data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(head)},
              data.class_count, Split::train};
    Dataset b{gather_rows(data.inputs, std::span<const std::size_t>(second)),
              {data.labels.begin() + static_cast<std::ptrdiff_t>(head), data.labels.end()},
              data.class_count, Split::test};
    return {std::move(a), std::move(b)};
}

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;
constexpr std::size_t kDigitClasses = 10;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    if (bytes.size() < offset + 4) {
        throw LengthError("IDX header truncated");
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint8_t to_byte(double pixel) {
    const double scaled = std::round(pixel * 255.0);
    if (!(scaled >= 0.0 && scaled <= 255.0) || scaled / 255.0 != pixel) {
        throw ParameterError("pixel value is not a multiple of 1/255 in [0,1]");
    }
    return static_cast<std::uint8_t>(scaled);
}

}  // namespace

Dataset load_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels, Split split) {
    if (read_be32(images, 0) != kIdxImagesMagic) {
        throw FormatError("IDX images: bad magic number");
    }
    if (read_be32(labels, 0) != kIdxLabelsMagic) {
        throw FormatError("IDX labels: bad magic number");
    }
    const std::size_t count = read_be32(images, 4);
    const std::size_t rows = read_be32(images, 8);
    const std::size_t cols = read_be32(images, 12);
    const std::size_t label_count = read_be32(labels, 4);
    if (count == 0 || rows == 0 || cols == 0) {
        throw FormatError("IDX images: zero dimension in header");
    }
    if (images.size() != 16 + count * rows * cols) {
        throw LengthError("IDX images: header promises " + std::to_string(count) + " images of " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " but payload has " +
                          std::to_string(images.size() - 16) + " bytes");
    }
    if (labels.size() != 8 + label_count) {
        throw LengthError("IDX labels: header promises " + std::to_string(label_count) +
                          " labels but payload has " + std::to_string(labels.size() - 8) + " bytes");
    }
    if (label_count != count) {
        throw ConsistencyError("IDX: " + std::to_string(count) + " images but " +
                               std::to_string(label_count) + " labels");
    }
    Dataset out{Tensor({count, 1, rows, cols}, 0.0), std::vector<std::size_t>(count), kDigitClasses, split};
    const auto pixels = images.subspan(16);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        out.inputs[i] = pixels[i] / 255.0;
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t label = labels[8 + i];
        if (label >= kDigitClasses) {
            throw FormatError("IDX labels: label byte " + std::to_string(label) + " exceeds 9");
        }
        out.labels[i] = label;
    }
    return out;
}

Dataset load_cifar10_bin(std::span<const std::uint8_t> bytes, Split split) {
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
        throw LengthError("CIFAR-10: length " + std::to_string(bytes.size()) +
                          " is not a positive multiple of 3073");
    }
    const std::size_t count = bytes.size() / kCifarRecord;
    Dataset out{Tensor({count, 3, 32, 32}, 0.0), std::vector<std::size_t>(count), kDigitClasses, split};
    for (std::size_t i = 0; i < count; ++i) {
        const auto record = bytes.subspan(i * kCifarRecord, kCifarRecord);
        if (record[0] >= kDigitClasses) {
            throw FormatError("CIFAR-10: record " + std::to_string(i) + " has label byte " +
                              std::to_string(record[0]));
        }
        out.labels[i] = record[0];
        double* dst = out.inputs.data() + i * kCifarPixels;
        for (std::size_t j = 0; j < kCifarPixels; ++j) {
            dst[j] = record[1 + j] / 255.0;
        }
    }
    return out;
}

std::vector<std::uint8_t> to_cifar10_bin(const Dataset& data) {
    if (data.inputs.rank() != 4 || data.inputs.row_size() != kCifarPixels || data.inputs.dim(1) != 3) {
        throw ShapeError("to_cifar10_bin: expected inputs [N,3,32,32], got " + to_string(data.inputs.shape()));
    }
    std::vector<std::uint8_t> out;
    out.reserve(data.size() * kCifarRecord);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] >= kDigitClasses) {
            throw FormatError("to_cifar10_bin: label exceeds 9");
        }
        out.push_back(static_cast<std::uint8_t>(data.labels[i]));
        const double* src = data.inputs.data() + i * kCifarPixels;
        for (std::size_t j = 0; j < kCifarPixels; ++j) {
            out.push_back(to_byte(src[j]));
        }
    }
    return out;
}

std::vector<std::uint8_t> to_idx_images(const Dataset& data) {
    if (data.inputs.rank() != 4 || data.inputs.dim(1) != 1) {
        throw ShapeError("to_idx_images: expected inputs [N,1,H,W], got " + to_string(data.inputs.shape()));
    }
    std::vector<std::uint8_t> out;
    write_be32(out, kIdxImagesMagic);
    write_be32(out, static_cast<std::uint32_t>(data.inputs.dim(0)));
    write_be32(out, static_cast<std::uint32_t>(data.inputs.dim(2)));
    write_be32(out, static_cast<std::uint32_t>(data.inputs.dim(3)));
    for (double v : data.inputs.values()) {
        out.push_back(to_byte(v));
    }
    return out;
}

std::vector<std::uint8_t> to_idx_labels(const Dataset& data) {
    std::vector<std::uint8_t> out;
    write_be32(out, kIdxLabelsMagic);
    write_be32(out, static_cast<std::uint32_t>(data.size()));
    for (auto label : data.labels) {
        if (label > 255) {
            throw FormatError("to_idx_labels: label does not fit in a byte");
        }
        out.push_back(static_cast<std::uint8_t>(label));
    }
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

// Channel count and contiguous elements per channel within one sample. Rank 2
// treats each feature as its own channel.
struct ChannelLayout {
    std::size_t channels;
    std::size_t run;
};

ChannelLayout channel_layout(const Tensor& inputs) {
    switch (inputs.rank()) {
    case 1: return {1, 1};
    case 2: return {inputs.dim(1), 1};
    default: return {inputs.dim(1), inputs.row_size() / inputs.dim(1)};
    }
}

}  // namespace

Standardization channel_statistics(const Dataset& data) {
    const auto layout = channel_layout(data.inputs);
    const std::size_t n = data.inputs.dim(0);
    const std::size_t row = data.inputs.row_size();
    const double count = static_cast<double>(n * layout.run);
    Standardization stats{std::vector<double>(layout.channels, 0.0), std::vector<double>(layout.channels, 0.0)};
    for (std::size_t c = 0; c < layout.channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = data.inputs.data() + i * row + c * layout.run;
            for (std::size_t e = 0; e < layout.run; ++e) {
                acc += p[e];
            }
        }
        const double mean = acc / count;
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = data.inputs.data() + i * row + c * layout.run;
            for (std::size_t e = 0; e < layout.run; ++e) {
                sq += (p[e] - mean) * (p[e] - mean);
            }
        }
        stats.mean[c] = mean;
        stats.std[c] = std::max(std::sqrt(sq / count), kStdFloor);
    }
    return stats;
}

Dataset apply_standardization(const Dataset& data, const Standardization& stats) {
    const auto layout = channel_layout(data.inputs);
    if (layout.channels != stats.mean.size() || layout.channels != stats.std.size()) {
        throw ShapeError("standardize: channel count mismatch");
    }
    Dataset out = data;
    const std::size_t n = data.inputs.dim(0);
    const std::size_t row = data.inputs.row_size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < layout.channels; ++c) {
            double* p = out.inputs.data() + i * row + c * layout.run;
            for (std::size_t e = 0; e < layout.run; ++e) {
                p[e] = (p[e] - stats.mean[c]) / stats.std[c];
            }
        }
    }
    return out;
}

StandardizedPair standardize(const Dataset& train, const Dataset& test) {
    Shape a = train.inputs.shape(), b = test.inputs.shape();
    a.erase(a.begin());
    b.erase(b.begin());
    if (a != b) {
        throw ShapeError("standardize: train and test feature shapes differ");
    }
    auto stats = channel_statistics(train);
    return {apply_standardization(train, stats), apply_standardization(test, stats), std::move(stats)};
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t run_seed, std::uint64_t epoch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Prng prng(derive_seed(run_seed, epoch));
    for (std::size_t i = n; i-- > 1;) {
        const auto j = static_cast<std::size_t>(prng.below(i + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

BatchSlices batches(std::size_t n, std::size_t batch_size, std::uint64_t run_seed, std::uint64_t epoch) {
    if (batch_size == 0) {
        throw ParameterError("batches: batch size must be >= 1");
    }
    const auto perm = epoch_permutation(n, run_seed, epoch);
    BatchSlices out;
    out.reserve((n + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

}  // namespace mbtrim
