#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mbtrim/harness.hpp"

namespace mbtrim {

namespace {

using nlohmann::json;

// Reads fields of one JSON object, remembering which keys were consumed so
// leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
        if (!object_.is_object()) {
            throw ValidationError(path_.empty() ? "<root>" : path_, "expected a JSON object");
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return object_.contains(key); }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = object_.find(key);
        return it == object_.end() ? nullptr : &*it;
    }

    const json& require(const std::string& key) {
        if (const json* v = find(key)) {
            return *v;
        }
        throw ValidationError(field(key), "required field is missing");
    }

    void read(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) {
                throw ValidationError(field(key), "expected a number");
            }
            out = v->get<double>();
        }
    }

    template <typename Int>
    void read_int(const std::string& key, Int& out) {
        if (const json* v = find(key)) {
            out = as_int<Int>(*v, field(key));
        }
    }

    void read(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) {
                throw ValidationError(field(key), "expected true or false");
            }
            out = v->get<bool>();
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) {
                throw ValidationError(field(key), "expected a string");
            }
            out = v->get<std::string>();
        }
    }

    void reject_unknown() const {
        for (auto it = object_.begin(); it != object_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ValidationError(field(it.key()), "unknown key");
            }
        }
    }

    template <typename Int>
    static Int as_int(const json& v, const std::string& field) {
        if (v.is_number_unsigned()) {
            const auto u = v.get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) {
                throw ValidationError(field, "integer out of range");
            }
            return static_cast<Int>(u);
        }
        if (v.is_number_integer()) {
            const auto s = v.get<std::int64_t>();
            if constexpr (std::is_unsigned_v<Int>) {
                if (s < 0) {
                    throw ValidationError(field, "expected a nonnegative integer");
                }
            }
            if (s > static_cast<std::int64_t>(std::numeric_limits<Int>::max()) ||
                (std::is_signed_v<Int> && s < static_cast<std::int64_t>(std::numeric_limits<Int>::min()))) {
                throw ValidationError(field, "integer out of range");
            }
            return static_cast<Int>(s);
        }
        throw ValidationError(field, "expected an integer");
    }

private:
    const json& object_;
    std::string path_;
    std::set<std::string> seen_;
};

DatasetSpec parse_dataset(const json& node) {
    ObjectReader r(node, "dataset");
    DatasetSpec spec;
    const json& kind = r.require("kind");
    if (!kind.is_string()) {
        throw ValidationError("dataset.kind", "expected a string");
    }
    const auto tag = kind.get<std::string>();
    r.read("standardize", spec.standardize);
    if (tag == "blobs") {
        spec.kind = DatasetKind::blobs;
        r.read_int("n_train", spec.n_train);
        r.read_int("n_test", spec.n_test);
        r.read_int("dim", spec.dim);
        r.read_int("classes", spec.classes);
        r.read("cluster_std", spec.cluster_std);
        r.read("label_flip_prob", spec.label_flip_prob);
        r.read_int("seed", spec.seed);
    } else if (tag == "cifar10") {
        spec.kind = DatasetKind::cifar10;
        const json& files = r.require("train_files");
        if (!files.is_array() || files.empty()) {
            throw ValidationError("dataset.train_files", "expected a nonempty array of paths");
        }
        for (const auto& f : files) {
            if (!f.is_string()) {
                throw ValidationError("dataset.train_files", "expected string paths");
            }
            spec.train_files.push_back(f.get<std::string>());
        }
        r.require("test_file");
        r.read("test_file", spec.test_file);
    } else if (tag == "mnist") {
        spec.kind = DatasetKind::mnist;
        const std::pair<const char*, std::string*> paths[] = {{"train_images", &spec.train_images},
                                                               {"train_labels", &spec.train_labels},
                                                               {"test_images", &spec.test_images},
                                                               {"test_labels", &spec.test_labels}};
        for (const auto& [key, out] : paths) {
            r.require(key);
            r.read(key, *out);
        }
    } else {
        throw ValidationError("dataset.kind", "expected one of blobs, cifar10, mnist; got '" + tag + "'");
    }
    r.reject_unknown();
    return spec;
}

OptimizerSpec parse_optimizer(const json& node) {
    ObjectReader r(node, "optimizer");
    OptimizerSpec spec;
    std::string kind = "adam";
    r.read("kind", kind);
    if (kind == "adam") {
        spec.kind = OptimizerKind::adam;
        r.read("beta1", spec.beta1);
        r.read("beta2", spec.beta2);
        r.read("eps", spec.eps);
    } else if (kind == "sgd") {
        spec.kind = OptimizerKind::sgd;
        r.read("momentum", spec.momentum);
    } else {
        throw ValidationError("optimizer.kind", "expected adam or sgd; got '" + kind + "'");
    }
    r.read("lr", spec.lr);
    r.read("weight_decay", spec.weight_decay);
    r.reject_unknown();
    return spec;
}

}  // namespace

void TrainConfig::validate() const {
    const auto& d = dataset;
    if (d.kind == DatasetKind::blobs) {
        if (d.n_train < d.classes) {
            throw ValidationError("dataset.n_train", "must be >= classes");
        }
        if (d.n_test < 1) {
            throw ValidationError("dataset.n_test", "must be >= 1");
        }
        if (d.dim < 1) {
            throw ValidationError("dataset.dim", "must be >= 1");
        }
        if (d.classes < 2) {
            throw ValidationError("dataset.classes", "must be >= 2");
        }
        if (!(d.cluster_std > 0.0)) {
            throw ValidationError("dataset.cluster_std", "must be > 0");
        }
        if (!(d.label_flip_prob >= 0.0 && d.label_flip_prob < 1.0)) {
            throw ValidationError("dataset.label_flip_prob", "must be in [0, 1)");
        }
    }
    if (epochs < 1) {
        throw ValidationError("epochs", "must be >= 1");
    }
    if (batch_size < 1) {
        throw ValidationError("batch_size", "must be >= 1");
    }
    if (!(optimizer.lr > 0.0)) {
        throw ValidationError("optimizer.lr", "must be > 0");
    }
    if (!(optimizer.weight_decay >= 0.0)) {
        throw ValidationError("optimizer.weight_decay", "must be >= 0");
    }
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) {
        throw ValidationError("optimizer.beta1", "must be in [0, 1)");
    }
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
        throw ValidationError("optimizer.beta2", "must be in [0, 1)");
    }
    if (!(optimizer.eps > 0.0)) {
        throw ValidationError("optimizer.eps", "must be > 0");
    }
    if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
        throw ValidationError("optimizer.momentum", "must be in [0, 1)");
    }
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 1 || milestones[i] > epochs) {
            throw ValidationError("lr_schedule.milestones", "milestones must lie in [1, epochs]");
        }
        if (i > 0 && milestones[i] <= milestones[i - 1]) {
            throw ValidationError("lr_schedule.milestones", "milestones must be strictly ascending");
        }
    }
    if (!(gamma > 0.0)) {
        throw ValidationError("lr_schedule.gamma", "must be > 0");
    }
    if (!(trim.p_start > 0.0 && trim.p_start <= 1.0)) {
        throw ValidationError("trim.p_start", "must be in (0, 1]");
    }
    if (!(trim.p_end > 0.0 && trim.p_end <= trim.p_start)) {
        throw ValidationError("trim.p_end", "must be in (0, p_start]");
    }
    if (seeds.empty()) {
        throw ValidationError("seeds", "at least one seed is required");
    }
}

TrainConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    ObjectReader r(root, "");
    TrainConfig cfg;

    cfg.dataset = parse_dataset(r.require("dataset"));

    const json& model = r.require("model");
    if (!model.is_string()) {
        throw ValidationError("model", "expected \"mlp3\" or \"tinycnn\"");
    }
    try {
        cfg.model = parse_architecture(model.get<std::string>());
    } catch (const ParameterError&) {
        throw ValidationError("model", "expected \"mlp3\" or \"tinycnn\"");
    }

    cfg.epochs = ObjectReader::as_int<int>(r.require("epochs"), "epochs");
    r.read_int("batch_size", cfg.batch_size);

    if (const json* opt = r.find("optimizer")) {
        cfg.optimizer = parse_optimizer(*opt);
    }

    bool explicit_milestones = false;
    if (const json* sched = r.find("lr_schedule")) {
        ObjectReader s(*sched, "lr_schedule");
        if (const json* ms = s.find("milestones")) {
            if (!ms->is_array()) {
                throw ValidationError("lr_schedule.milestones", "expected an array of epochs");
            }
            cfg.milestones.clear();
            for (const auto& m : *ms) {
                cfg.milestones.push_back(ObjectReader::as_int<int>(m, "lr_schedule.milestones"));
            }
            explicit_milestones = true;
        }
        s.read("gamma", cfg.gamma);
        s.reject_unknown();
    }
    if (!explicit_milestones) {
        // defaults past the final epoch never fire; drop them
        std::erase_if(cfg.milestones, [&](int m) { return m > cfg.epochs; });
    }

    if (const json* trim = r.find("trim")) {
        ObjectReader t(*trim, "trim");
        t.read("enabled", cfg.trim.enabled);
        t.read("p_start", cfg.trim.p_start);
        t.read("p_end", cfg.trim.p_end);
        t.reject_unknown();
    }

    const bool has_seed = r.has("seed"), has_seeds = r.has("seeds");
    if (has_seed && has_seeds) {
        throw ValidationError("seed", "give either seed or seeds, not both");
    }
    if (has_seed) {
        cfg.seeds = {ObjectReader::as_int<std::uint64_t>(r.require("seed"), "seed")};
    } else if (const json* seeds = r.find("seeds")) {
        if (!seeds->is_array()) {
            throw ValidationError("seeds", "expected an array of integers");
        }
        cfg.seeds.clear();
        for (const auto& s : *seeds) {
            cfg.seeds.push_back(ObjectReader::as_int<std::uint64_t>(s, "seeds"));
        }
    }

    r.read("output", cfg.output);
    r.reject_unknown();
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open config " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

}  // namespace mbtrim
