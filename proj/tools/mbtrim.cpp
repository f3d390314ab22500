// Command-line front end: train, compare, gradcheck, selftest.
//
// Exit codes: 0 success, 1 config/argument error, 2 runtime error or failed check.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mbtrim/gradcheck.hpp"
#include "mbtrim/harness.hpp"
#include "mbtrim/selftest.hpp"

namespace {

using namespace mbtrim;

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

TrainConfig load_with_overrides(const Options& opt) {
    auto cfg = load_config(opt.config);
    if (opt.seed) {
        if (cfg.seeds.empty()) {
            cfg.seeds.push_back(*opt.seed);
        } else {
            cfg.seeds.front() = *opt.seed;
        }
    }
    if (!opt.out.empty()) {
        cfg.output = opt.out;
    }
    return cfg;
}

int cmd_train(const Options& opt) {
    const auto cfg = load_with_overrides(opt);
    const auto data = load_datasets(cfg.dataset);
    const auto seed = cfg.seeds.front();
    const auto trial = run_trial(cfg, data, seed);
    const auto path = std::filesystem::path(cfg.output) / "metrics.csv";
    write_text(path, emit_csv(trial.rows));
    for (const auto& r : trial.rows) {
        std::printf("epoch %3d  p=%.4f  lr=%.6g  loss_trimmed=%.6f  loss_full=%.6f  test_error=%.4f\n", r.epoch,
                    r.p_fraction, r.lr, r.train_loss_trimmed, r.train_loss_full, r.test_error);
    }
    std::printf("wrote %s\n", path.string().c_str());
    return 0;
}

int cmd_compare(const Options& opt) {
    const auto cfg = load_with_overrides(opt);
    const auto data = load_datasets(cfg.dataset);
    const auto result = run_experiment(cfg, data);
    write_experiment(result, cfg.output);
    std::printf("%s\n", comparison_line(result).c_str());
    std::printf("wrote %s/{trim_off.csv,trim_on.csv,comparison.txt}\n", cfg.output.c_str());
    return 0;
}

bool report(const char* name, const GradCheckReport& r) {
    std::printf("%-8s checked=%zu skipped=%zu max_rel_error=%.3e tol=%.0e  %s\n", name, r.checked(), r.skipped(),
                r.max_rel_error(), r.tol, r.passed() ? "PASS" : "FAIL");
    return r.passed();
}

int cmd_gradcheck(const Options& opt) {
    const std::uint64_t seed = opt.seed.value_or(1);
    Prng prng(seed);
    const GradCheckOptions check{1e-5, 1e-4, 64, seed};
    const std::vector<std::size_t> labels{0, 1, 2, 3};

    Model mlp = Model::mlp3(20, 5);
    init_params(mlp, prng);
    const auto x_mlp = randn(prng, {4, 20}, 0.0, 1.0);
    bool ok = report("mlp3", grad_check(mlp, x_mlp, labels, check));

    Model cnn = Model::tinycnn(3, 8, 8, 5);
    init_params(cnn, prng);
    const auto x_cnn = randn(prng, {4, 3, 8, 8}, 0.0, 1.0);
    ok = report("tinycnn", grad_check(cnn, x_cnn, labels, check)) && ok;
    return ok ? 0 : 2;
}

int cmd_selftest(const Options& opt) {
    bool ok = true;
    for (const auto& s : run_selftests(opt.seed.value_or(1))) {
        std::printf("[%s] %s: %s\n", s.passed ? "PASS" : "FAIL", s.name.c_str(), s.detail.c_str());
        ok = ok && s.passed;
    }
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mini-batch trimming trainer"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", opt.config, "JSON experiment config");
        if (needs_config) {
            c->required()->check(CLI::ExistingFile);
        }
        sub->add_option("--out", opt.out, "output directory (overrides config output)");
        sub->add_option("--seed", opt.seed, "seed (overrides the config's first seed)");
    };
    auto* train = app.add_subcommand("train", "run one trial and write metrics.csv");
    add_common(train, true);
    auto* compare = app.add_subcommand("compare", "trimming off vs on over all seeds");
    add_common(compare, true);
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of mlp3 and tinycnn gradients");
    add_common(gradcheck, false);
    auto* selftest = app.add_subcommand("selftest", "run the built-in property suites");
    add_common(selftest, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*train) {
            return cmd_train(opt);
        }
        if (*compare) {
            return cmd_compare(opt);
        }
        if (*gradcheck) {
            return cmd_gradcheck(opt);
        }
        return cmd_selftest(opt);
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
