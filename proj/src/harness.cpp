#include "mbtrim/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <variant>

namespace mbtrim {

namespace {

// Stream ids for derive_seed; epochs use their own number as the stream.
constexpr std::uint64_t kInitStream = 0xC0FFEE0000000001ULL;

Dataset concat(std::vector<Dataset> parts, Split split) {
    std::size_t total = 0;
    for (const auto& p : parts) {
        total += p.size();
    }
    Shape shape = parts.front().inputs.shape();
    shape[0] = total;
    Dataset out{Tensor(shape, 0.0), {}, parts.front().class_count, split};
    out.labels.reserve(total);
    double* dst = out.inputs.data();
    for (const auto& p : parts) {
        dst = std::copy(p.inputs.data(), p.inputs.data() + p.inputs.size(), dst);
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    }
    return out;
}

std::string format_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string format_2f(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

const char* dataset_tag(DatasetKind kind) {
    switch (kind) {
    case DatasetKind::blobs: return "blobs";
    case DatasetKind::cifar10: return "cifar10";
    case DatasetKind::mnist: return "mnist";
    }
    return "unknown";
}

class Optimizer {
public:
    Optimizer(const OptimizerSpec& spec, std::span<const Tensor> params) : spec_(spec) {
        if (spec.kind == OptimizerKind::adam) {
            state_ = AdamState::zeros_for(params);
        } else {
            state_ = SgdState::zeros_for(params);
        }
    }

    void step(std::span<Tensor> params, std::span<const Tensor> grads, double lr) {
        if (auto* adam = std::get_if<AdamState>(&state_)) {
            adam_step(*adam, params, grads, lr, {spec_.beta1, spec_.beta2, spec_.eps, spec_.weight_decay});
        } else {
            sgd_step(std::get<SgdState>(state_), params, grads, lr, {spec_.momentum, spec_.weight_decay});
        }
    }

private:
    OptimizerSpec spec_;
    std::variant<AdamState, SgdState> state_;
};

}  // namespace

DataSplits load_datasets(const DatasetSpec& spec) {
    DataSplits out{Dataset{Tensor({1}, 0.0), {}, 0, Split::train}, Dataset{Tensor({1}, 0.0), {}, 0, Split::test}};
    switch (spec.kind) {
    case DatasetKind::blobs: {
        Prng prng(spec.seed);
        auto all = synth_blobs(prng, {spec.n_train + spec.n_test, spec.dim, spec.classes, spec.cluster_std,
                                      spec.label_flip_prob});
        auto [train, test] = split_head(all, spec.n_train);
        out = {std::move(train), std::move(test)};
        break;
    }
    case DatasetKind::cifar10: {
        std::vector<Dataset> parts;
        for (const auto& f : spec.train_files) {
            parts.push_back(load_cifar10_bin(read_file(f), Split::train));
        }
        out = {concat(std::move(parts), Split::train), load_cifar10_bin(read_file(spec.test_file), Split::test)};
        break;
    }
    case DatasetKind::mnist:
        out = {load_idx(read_file(spec.train_images), read_file(spec.train_labels), Split::train),
               load_idx(read_file(spec.test_images), read_file(spec.test_labels), Split::test)};
        break;
    }
    out.train.validate();
    out.test.validate();
    if (spec.standardize) {
        auto pair = standardize(out.train, out.test);
        out = {std::move(pair.train), std::move(pair.test)};
    }
    return out;
}

Model make_model(Architecture arch, const Dataset& train) {
    const auto& x = train.inputs;
    switch (arch) {
    case Architecture::mlp3:
        return Model::mlp3(x.row_size(), train.class_count);
    case Architecture::tinycnn:
        if (x.rank() != 4) {
            throw ParameterError("tinycnn needs image inputs [N,C,H,W], got " + to_string(x.shape()));
        }
        return Model::tinycnn(x.dim(1), x.dim(2), x.dim(3), train.class_count);
    }
    throw ParameterError("unknown architecture");
}

TrialResult run_trial(const TrainConfig& config, const DataSplits& data, std::uint64_t seed) {
    config.validate();
    Model model = make_model(config.model, data.train);
    Prng init(derive_seed(seed, kInitStream));
    init_params(model, init);

    Optimizer optimizer(config.optimizer, model.parameters());
    const auto lr_schedule = config.lr_schedule();
    const auto trim_schedule = config.trim_schedule();
    const bool trimming = config.trim.enabled;

    std::vector<MetricsRow> rows;
    rows.reserve(static_cast<std::size_t>(config.epochs));
    std::vector<std::size_t> labels;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double p = trimming ? fraction_at_epoch(trim_schedule, epoch) : 1.0;
        const double lr = lr_at_epoch(lr_schedule, epoch);
        const auto slices = batches(data.train, config.batch_size, seed, static_cast<std::uint64_t>(epoch));

        double trimmed_total = 0.0;
        double full_total = 0.0;
        for (const auto& slice : slices) {
            const Tensor x = gather_rows(data.train.inputs, std::span<const std::size_t>(slice));
            labels.resize(slice.size());
            for (std::size_t i = 0; i < slice.size(); ++i) {
                labels[i] = data.train.labels[slice[i]];
            }

            Tape tape;
            const auto loss = forward_per_sample_loss(tape, model, x, labels);
            NodeId objective{};
            NodeId full{};
            if (trimming) {
                const auto plan = plan_batch(tape.value(loss.node).values(), p);
                objective = trimmed_mean(tape, loss.node, plan);
                // recorded after the objective so it stays outside the backward sweep
                full = tape.mean(loss.node);
            } else {
                objective = full = tape.mean(loss.node);
            }
            tape.backward(objective);
            const auto grads = parameter_gradients(tape, loss);
            optimizer.step(model.parameters(), grads, lr);

            trimmed_total += tape.value(objective)[0];
            full_total += tape.value(full)[0];
        }
        const double batch_count = static_cast<double>(slices.size());
        rows.push_back({seed, epoch, p, lr, trimmed_total / batch_count, full_total / batch_count,
                        top1_error(model, data.test)});
    }
    return {std::move(rows), std::move(model)};
}

ComparisonCell::Winner ComparisonCell::winner() const {
    const auto a = format_2f(mean_off), b = format_2f(mean_on);
    if (a == b) {
        return Winner::tie;
    }
    return mean_off < mean_on ? Winner::off : Winner::on;
}

std::string ComparisonCell::format() const {
    auto off = format_2f(mean_off), on = format_2f(mean_on);
    switch (winner()) {
    case Winner::off: off = "**" + off + "**"; break;
    case Winner::on: on = "**" + on + "**"; break;
    case Winner::tie: break;
    }
    return off + " / " + on;
}

ComparisonCell make_cell(std::vector<double> off_percent, std::vector<double> on_percent) {
    if (off_percent.empty() || off_percent.size() != on_percent.size()) {
        throw ContractError("comparison cell needs matching nonempty per-seed lists");
    }
    const auto mean = [](const std::vector<double>& v) {
        double acc = 0.0;
        for (double x : v) {
            acc += x;
        }
        return acc / static_cast<double>(v.size());
    };
    ComparisonCell cell;
    cell.mean_off = mean(off_percent);
    cell.mean_on = mean(on_percent);
    cell.off = std::move(off_percent);
    cell.on = std::move(on_percent);
    return cell;
}

ExperimentResult run_experiment(const TrainConfig& config, const DataSplits& data) {
    TrainConfig off = config;
    off.trim.enabled = false;
    TrainConfig on = config;
    on.trim.enabled = true;

    std::vector<std::uint64_t> seeds = config.seeds;
    std::sort(seeds.begin(), seeds.end());

    ExperimentResult result;
    result.label = std::string(dataset_tag(config.dataset.kind)) + "/" + to_string(config.model);
    std::vector<double> off_final, on_final;
    for (auto seed : seeds) {
        auto a = run_trial(off, data, seed);
        auto b = run_trial(on, data, seed);
        off_final.push_back(100.0 * a.rows.back().test_error);
        on_final.push_back(100.0 * b.rows.back().test_error);
        result.rows_off.insert(result.rows_off.end(), a.rows.begin(), a.rows.end());
        result.rows_on.insert(result.rows_on.end(), b.rows.begin(), b.rows.end());
    }
    result.cell = make_cell(std::move(off_final), std::move(on_final));
    return result;
}

std::string comparison_line(const ExperimentResult& result) {
    return result.label + "  " + result.cell.format();
}

std::string emit_csv(std::vector<MetricsRow> rows) {
    if (rows.empty()) {
        throw ContractError("emit_csv: no rows");
    }
    std::stable_sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
        return a.seed != b.seed ? a.seed < b.seed : a.epoch < b.epoch;
    });
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += std::to_string(r.seed) + ',' + std::to_string(r.epoch) + ',' + format_g9(r.p_fraction) + ',' +
               format_g9(r.lr) + ',' + format_g9(r.train_loss_trimmed) + ',' + format_g9(r.train_loss_full) +
               ',' + format_g9(r.test_error) + '\n';
    }
    return out;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
    write_text(dir / "trim_off.csv", emit_csv(result.rows_off));
    write_text(dir / "trim_on.csv", emit_csv(result.rows_on));
    write_text(dir / "comparison.txt", comparison_line(result) + "\n");
}

}  // namespace mbtrim
