#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mbtrim/data.hpp"
#include "mbtrim/model.hpp"
#include "mbtrim/optim.hpp"
#include "mbtrim/trim.hpp"

namespace mbtrim {

enum class DatasetKind { blobs, cifar10, mnist };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::blobs;
    bool standardize = true;

    // blobs: one draw of n_train + n_test samples; the head is the train split
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::size_t dim = 20;
    std::size_t classes = 10;
    double cluster_std = 1.0;
    double label_flip_prob = 0.0;
    std::uint64_t seed = 0;

    // cifar10
    std::vector<std::string> train_files;
    std::string test_file;

    // mnist
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
};

enum class OptimizerKind { adam, sgd };

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 0.001;
    double weight_decay = 0.0001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double momentum = 0.9;
};

struct TrimSettings {
    bool enabled = true;
    double p_start = 1.0;
    double p_end = 0.2;
};

struct TrainConfig {
    DatasetSpec dataset;
    Architecture model = Architecture::mlp3;
    int epochs = 150;
    std::size_t batch_size = 128;
    OptimizerSpec optimizer;
    std::vector<int> milestones{50, 100};
    double gamma = 0.5;
    TrimSettings trim;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string output = "results";

    LrSchedule lr_schedule() const { return {optimizer.lr, milestones, gamma}; }
    TrimSchedule trim_schedule() const { return {trim.p_start, trim.p_end, epochs}; }
    /// Throws ValidationError naming the first offending field.
    void validate() const;
};

/// JSON config; unknown keys are rejected at every level.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

struct DataSplits {
    Dataset train;
    Dataset test;
};

DataSplits load_datasets(const DatasetSpec& spec);

struct MetricsRow {
    std::uint64_t seed = 0;
    int epoch = 0;
    double p_fraction = 1.0;
    double lr = 0.0;
    /// Mean over batches of the per-batch objective actually optimized.
    double train_loss_trimmed = 0.0;
    /// Mean over batches of the plain per-batch mean loss.
    double train_loss_full = 0.0;
    double test_error = 0.0;
};

struct TrialResult {
    std::vector<MetricsRow> rows;
    Model model;
};

Model make_model(Architecture arch, const Dataset& train);

/// One seeded training run; trimming follows config.trim.enabled.
TrialResult run_trial(const TrainConfig& config, const DataSplits& data, std::uint64_t seed);

struct ComparisonCell {
    std::vector<double> off;  // final test error per seed, percent
    std::vector<double> on;
    double mean_off = 0.0;
    double mean_on = 0.0;

    enum class Winner { off, on, tie };
    Winner winner() const;
    /// "<off> / <on>" with two decimals; the lower value wrapped in ** **.
    std::string format() const;
};

ComparisonCell make_cell(std::vector<double> off_percent, std::vector<double> on_percent);

struct ExperimentResult {
    std::string label;
    ComparisonCell cell;
    std::vector<MetricsRow> rows_off;
    std::vector<MetricsRow> rows_on;
};

/// Runs every seed twice, trimming disabled and enabled.
ExperimentResult run_experiment(const TrainConfig& config, const DataSplits& data);

/// "<label>  <cell>" as written to comparison.txt.
std::string comparison_line(const ExperimentResult& result);

/// Writes trim_off.csv, trim_on.csv and comparison.txt under dir.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

inline constexpr std::string_view kCsvHeader =
    "seed,epoch,p_fraction,lr,train_loss_trimmed,train_loss_full,test_error";

/// Header plus one LF-terminated line per row, sorted by (seed, epoch).
std::string emit_csv(std::vector<MetricsRow> rows);

void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace mbtrim
