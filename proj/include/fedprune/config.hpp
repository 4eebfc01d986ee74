#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedprune/cost_model.hpp"
#include "fedprune/data.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/federation.hpp"
#include "fedprune/nn.hpp"
#include "fedprune/partition.hpp"
#include "fedprune/rho_optimizer.hpp"

namespace fedprune {

/// Everything one experiment needs, loaded from a single JSON file. CLI flags
/// override individual fields; struct initializers are the defaults, so the
/// precedence is flags > config file > defaults.
struct ExperimentConfig {
    // dataset
    struct DatasetConfig {
        std::string type = "synthetic";  // synthetic | csv
        // synthetic
        int classes = 10;
        int features = 16;
        std::vector<std::size_t> per_class;  // empty -> uniform `samples_per_class`
        std::size_t samples_per_class = 300;
        double separation = 2.5;
        // csv
        std::string path;
        std::string label_col = "label";
        std::string scaling = "minmax";  // minmax | none
        std::vector<std::string> class_order;
    } dataset;

    struct SplitConfig {
        double train_fraction = 0.8;
        bool stratified = true;
    } split;

    std::size_t clients = 10;

    struct PartitionConfig {
        std::string mode = "label";  // quantity | label | mixed
        double alpha = 1e6;
        double beta = 1.0;
        double quantity_alpha = 1e6;  // mixed mode only
        double quantity_beta = 1.0;
    } partition;

    RoundConfig round;

    struct ArchConfig {
        int input_length = 0;  // 0 -> derived from the dataset
        int classes = 0;       // 0 -> derived from the dataset
        struct Conv {
            int out_channels = 0;
            int kernel = 3;
        };
        std::vector<Conv> conv{{32, 3}, {64, 3}};
        std::vector<int> hidden{128};
    } arch;

    std::vector<double> rho_sweep{0.0, 0.3, 0.5, 0.7, 0.9};

    struct ScoreSection {
        std::size_t clients = 0;  // 0 -> experiment client count
        double alpha1 = 1.0;
        double alpha2 = 0.0;
        std::vector<double> beta{2e-5};
        std::vector<double> lambda{10.0};
        double delta = 0.05;
        std::vector<double> acc_unpruned;
        std::vector<double> energy_unpruned;  // empty -> model energy from the cost section
        std::string mode = "uniform-grid";    // uniform-grid | coordinate | hill-climb
    } score;

    struct CostSection {
        EnergyConstants constants;
        bool multi_add = false;
        std::optional<std::uint64_t> published_params;
        std::optional<std::uint64_t> published_flops;
    } cost;

    std::string out_dir = "results";
    std::uint64_t seed = 42;
    std::string notes;

    // ------------------------------------------------------------------

    /// Builds the layer stack from the conv/hidden shorthand.
    Architecture architecture(int derived_input_length, int derived_classes) const {
        Architecture a;
        a.input_length = arch.input_length > 0 ? arch.input_length : derived_input_length;
        a.classes = arch.classes > 0 ? arch.classes : derived_classes;
        int channels = 1;
        for (const auto& c : arch.conv) {
            a.layers.push_back(LayerSpec::conv1d(channels, c.out_channels, c.kernel));
            a.layers.push_back(LayerSpec::relu());
            channels = c.out_channels;
        }
        a.layers.push_back(LayerSpec::flatten());
        for (int h : arch.hidden) {
            a.layers.push_back(LayerSpec::dense(0, h));
            a.layers.push_back(LayerSpec::relu());
        }
        a.layers.push_back(LayerSpec::dense(0, a.classes));
        return a;
    }

    PartitionMode partition_mode() const {
        if (partition.mode == "quantity") return PartitionMode::Quantity;
        if (partition.mode == "label") return PartitionMode::Label;
        if (partition.mode == "mixed") return PartitionMode::Mixed;
        throw ConfigError("partition.mode must be quantity, label, or mixed");
    }

    SearchMode search_mode() const {
        if (score.mode == "uniform-grid") return SearchMode::UniformGrid;
        if (score.mode == "coordinate") return SearchMode::Coordinate;
        if (score.mode == "hill-climb") return SearchMode::HillClimb;
        throw ConfigError("score.mode must be uniform-grid, coordinate, or hill-climb");
    }

    ScoreConfig score_config(double default_energy) const {
        ScoreConfig sc;
        sc.clients = score.clients > 0 ? score.clients : clients;
        sc.acc_unpruned = score.acc_unpruned;
        sc.energy_unpruned =
            score.energy_unpruned.empty() ? std::vector<double>{default_energy} : score.energy_unpruned;
        sc.alpha1 = score.alpha1;
        sc.alpha2 = score.alpha2;
        sc.beta = score.beta;
        sc.lambda = score.lambda;
        sc.delta = score.delta;
        return sc;
    }

    /// Collects every invariant violation without executing anything.
    std::vector<std::string> validate() const {
        std::vector<std::string> v;
        auto bad = [&v](const std::string& msg) { v.push_back(msg); };

        if (dataset.type != "synthetic" && dataset.type != "csv")
            bad("dataset.type must be synthetic or csv");
        if (dataset.type == "synthetic") {
            if (dataset.classes < 2) bad("dataset.classes must be >= 2");
            if (dataset.features < 2) bad("dataset.features must be >= 2");
            if (!dataset.per_class.empty() &&
                dataset.per_class.size() != static_cast<std::size_t>(dataset.classes))
                bad("dataset.per_class must list one count per class");
            if (dataset.per_class.empty() && dataset.samples_per_class < 1)
                bad("dataset.samples_per_class must be >= 1");
        } else {
            if (dataset.path.empty()) bad("dataset.path must name the CSV file");
            if (dataset.label_col.empty()) bad("dataset.label_col must name the label column");
            if (dataset.scaling != "minmax" && dataset.scaling != "none")
                bad("dataset.scaling must be minmax or none");
        }

        if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0))
            bad("split.train_fraction must be in (0, 1)");
        if (clients < 1) bad("clients must be >= 1");

        if (partition.mode != "quantity" && partition.mode != "label" &&
            partition.mode != "mixed")
            bad("partition.mode must be quantity, label, or mixed");
        if (partition.alpha <= 0.0) bad("partition.alpha must be > 0");
        if (partition.beta <= 0.0) bad("partition.beta must be > 0");
        if (partition.quantity_alpha <= 0.0) bad("partition.quantity_alpha must be > 0");
        if (partition.quantity_beta <= 0.0) bad("partition.quantity_beta must be > 0");

        try {
            round.validate(clients);
        } catch (const ConfigError& e) {
            bad(e.what());
        }

        if (arch.conv.empty() && arch.hidden.empty()) bad("arch needs at least one layer");
        for (const auto& c : arch.conv) {
            if (c.out_channels < 1) bad("arch.conv out_channels must be >= 1");
            if (c.kernel < 1) bad("arch.conv kernel must be >= 1");
        }
        for (int h : arch.hidden)
            if (h < 1) bad("arch.hidden entries must be >= 1");
        // With explicit geometry the stack itself can be checked now.
        if (arch.input_length > 0 && arch.classes > 0) {
            try {
                architecture(arch.input_length, arch.classes).resolved();
            } catch (const ConfigError& e) {
                bad(e.what());
            }
        }

        for (double r : rho_sweep)
            if (!(r >= 0.0 && r < 1.0)) bad("rho_sweep entries must lie in [0, 1)");

        if (!score.acc_unpruned.empty()) {
            try {
                score_config(1.0).validate();
            } catch (const ConfigError& e) {
                bad(e.what());
            }
        }
        if (score.mode != "uniform-grid" && score.mode != "coordinate" &&
            score.mode != "hill-climb")
            bad("score.mode must be uniform-grid, coordinate, or hill-climb");

        if (cost.constants.e_flop_pj <= 0.0) bad("cost.e_flop_pj must be > 0");
        if (cost.constants.e_access_pj_per_mb <= 0.0) bad("cost.e_access_pj_per_mb must be > 0");
        if (cost.constants.bytes_per_param <= 0.0) bad("cost.bytes_per_param must be > 0");
        if (cost.published_params.has_value() != cost.published_flops.has_value())
            bad("cost.published needs both params and flops");

        if (out_dir.empty()) bad("out_dir must not be empty");
        return v;
    }
};

// ---------------------------------------------------------------------------
// JSON (de)serialization. Unknown keys are rejected so a typo cannot silently
// fall back to a default.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       std::initializer_list<const char*> known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline void read_broadcastable(const nlohmann::json& j, const char* key,
                               std::vector<double>& out, const std::string& where) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_number()) {
        out = {v.get<double>()};
    } else if (v.is_array()) {
        out = v.get<std::vector<double>>();
    } else {
        throw ConfigError(where + "." + key + ": expected a number or an array");
    }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::read;
    using detail::read_broadcastable;

    ExperimentConfig c;
    check_keys(j, "config",
               {"dataset", "split", "clients", "partition", "round", "arch", "rho_sweep",
                "score", "cost", "out_dir", "seed", "threads", "notes"});

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d, "dataset",
                   {"type", "classes", "features", "per_class", "samples_per_class",
                    "separation", "path", "label_col", "scaling", "class_order"});
        read(d, "type", c.dataset.type, "dataset");
        read(d, "classes", c.dataset.classes, "dataset");
        read(d, "features", c.dataset.features, "dataset");
        if (d.contains("per_class")) {
            if (d.at("per_class").is_number()) {
                c.dataset.samples_per_class = d.at("per_class").get<std::size_t>();
            } else {
                read(d, "per_class", c.dataset.per_class, "dataset");
            }
        }
        read(d, "samples_per_class", c.dataset.samples_per_class, "dataset");
        read(d, "separation", c.dataset.separation, "dataset");
        read(d, "path", c.dataset.path, "dataset");
        read(d, "label_col", c.dataset.label_col, "dataset");
        read(d, "scaling", c.dataset.scaling, "dataset");
        read(d, "class_order", c.dataset.class_order, "dataset");
    }

    if (j.contains("split")) {
        const auto& s = j.at("split");
        check_keys(s, "split", {"train_fraction", "stratified"});
        read(s, "train_fraction", c.split.train_fraction, "split");
        read(s, "stratified", c.split.stratified, "split");
    }

    read(j, "clients", c.clients, "config");

    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        check_keys(p, "partition", {"mode", "alpha", "beta", "quantity_alpha", "quantity_beta"});
        read(p, "mode", c.partition.mode, "partition");
        read(p, "alpha", c.partition.alpha, "partition");
        read(p, "beta", c.partition.beta, "partition");
        read(p, "quantity_alpha", c.partition.quantity_alpha, "partition");
        read(p, "quantity_beta", c.partition.quantity_beta, "partition");
    }

    if (j.contains("round")) {
        const auto& r = j.at("round");
        check_keys(r, "round",
                   {"algorithm", "mu", "local_epochs", "fine_tune_epochs", "rounds", "rho",
                    "aggregation", "learning_rate", "batch_size"});
        std::string algorithm = "fedavg", aggregation = "normalized";
        read(r, "algorithm", algorithm, "round");
        read(r, "aggregation", aggregation, "round");
        if (algorithm == "fedavg") {
            c.round.algorithm = Algorithm::FedAvg;
        } else if (algorithm == "fedprox") {
            c.round.algorithm = Algorithm::FedProx;
        } else {
            throw ConfigError("round.algorithm must be fedavg or fedprox");
        }
        if (aggregation == "normalized") {
            c.round.aggregation = Aggregation::Normalized;
        } else if (aggregation == "literal") {
            c.round.aggregation = Aggregation::Literal;
        } else {
            throw ConfigError("round.aggregation must be normalized or literal");
        }
        read(r, "mu", c.round.mu, "round");
        read(r, "local_epochs", c.round.local_epochs, "round");
        read(r, "fine_tune_epochs", c.round.fine_tune_epochs, "round");
        read(r, "rounds", c.round.rounds, "round");
        read_broadcastable(r, "rho", c.round.rho, "round");
        read(r, "learning_rate", c.round.learning_rate, "round");
        read(r, "batch_size", c.round.batch_size, "round");
    }

    if (j.contains("arch")) {
        const auto& a = j.at("arch");
        check_keys(a, "arch", {"input_length", "classes", "conv", "hidden"});
        read(a, "input_length", c.arch.input_length, "arch");
        read(a, "classes", c.arch.classes, "arch");
        if (a.contains("conv")) {
            c.arch.conv.clear();
            for (const auto& cj : a.at("conv")) {
                check_keys(cj, "arch.conv", {"out_channels", "kernel"});
                ExperimentConfig::ArchConfig::Conv conv;
                read(cj, "out_channels", conv.out_channels, "arch.conv");
                read(cj, "kernel", conv.kernel, "arch.conv");
                c.arch.conv.push_back(conv);
            }
        }
        read(a, "hidden", c.arch.hidden, "arch");
    }

    read(j, "rho_sweep", c.rho_sweep, "config");

    if (j.contains("score")) {
        const auto& s = j.at("score");
        check_keys(s, "score",
                   {"clients", "alpha1", "alpha2", "beta", "lambda", "delta", "acc_unpruned",
                    "energy_unpruned", "mode"});
        read(s, "clients", c.score.clients, "score");
        read(s, "alpha1", c.score.alpha1, "score");
        read(s, "alpha2", c.score.alpha2, "score");
        read_broadcastable(s, "beta", c.score.beta, "score");
        read_broadcastable(s, "lambda", c.score.lambda, "score");
        read(s, "delta", c.score.delta, "score");
        read_broadcastable(s, "acc_unpruned", c.score.acc_unpruned, "score");
        read_broadcastable(s, "energy_unpruned", c.score.energy_unpruned, "score");
        read(s, "mode", c.score.mode, "score");
    }

    if (j.contains("cost")) {
        const auto& k = j.at("cost");
        check_keys(k, "cost",
                   {"e_flop_pj", "e_access_pj_per_mb", "bytes_per_param", "multi_add",
                    "published"});
        read(k, "e_flop_pj", c.cost.constants.e_flop_pj, "cost");
        read(k, "e_access_pj_per_mb", c.cost.constants.e_access_pj_per_mb, "cost");
        read(k, "bytes_per_param", c.cost.constants.bytes_per_param, "cost");
        read(k, "multi_add", c.cost.multi_add, "cost");
        if (k.contains("published")) {
            const auto& p = k.at("published");
            check_keys(p, "cost.published", {"params", "flops"});
            if (p.contains("params")) c.cost.published_params = p.at("params").get<std::uint64_t>();
            if (p.contains("flops")) c.cost.published_flops = p.at("flops").get<std::uint64_t>();
        }
    }

    read(j, "out_dir", c.out_dir, "config");
    read(j, "seed", c.seed, "config");
    read(j, "threads", c.round.threads, "config");
    read(j, "notes", c.notes, "config");
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    auto& d = j["dataset"];
    d["type"] = c.dataset.type;
    if (c.dataset.type == "synthetic") {
        d["classes"] = c.dataset.classes;
        d["features"] = c.dataset.features;
        if (!c.dataset.per_class.empty())
            d["per_class"] = c.dataset.per_class;
        else
            d["samples_per_class"] = c.dataset.samples_per_class;
        d["separation"] = c.dataset.separation;
    } else {
        d["path"] = c.dataset.path;
        d["label_col"] = c.dataset.label_col;
        d["scaling"] = c.dataset.scaling;
        if (!c.dataset.class_order.empty()) d["class_order"] = c.dataset.class_order;
    }
    j["split"] = {{"train_fraction", c.split.train_fraction}, {"stratified", c.split.stratified}};
    j["clients"] = c.clients;
    j["partition"] = {{"mode", c.partition.mode},
                      {"alpha", c.partition.alpha},
                      {"beta", c.partition.beta},
                      {"quantity_alpha", c.partition.quantity_alpha},
                      {"quantity_beta", c.partition.quantity_beta}};
    j["round"] = {{"algorithm", to_string(c.round.algorithm)},
                  {"mu", c.round.mu},
                  {"local_epochs", c.round.local_epochs},
                  {"fine_tune_epochs", c.round.fine_tune_epochs},
                  {"rounds", c.round.rounds},
                  {"rho", c.round.rho},
                  {"aggregation", to_string(c.round.aggregation)},
                  {"learning_rate", c.round.learning_rate},
                  {"batch_size", c.round.batch_size}};
    auto& a = j["arch"];
    a["input_length"] = c.arch.input_length;
    a["classes"] = c.arch.classes;
    a["conv"] = nlohmann::json::array();
    for (const auto& conv : c.arch.conv)
        a["conv"].push_back({{"out_channels", conv.out_channels}, {"kernel", conv.kernel}});
    a["hidden"] = c.arch.hidden;
    j["rho_sweep"] = c.rho_sweep;
    j["score"] = {{"clients", c.score.clients},   {"alpha1", c.score.alpha1},
                  {"alpha2", c.score.alpha2},     {"beta", c.score.beta},
                  {"lambda", c.score.lambda},     {"delta", c.score.delta},
                  {"acc_unpruned", c.score.acc_unpruned},
                  {"energy_unpruned", c.score.energy_unpruned},
                  {"mode", c.score.mode}};
    auto& k = j["cost"];
    k["e_flop_pj"] = c.cost.constants.e_flop_pj;
    k["e_access_pj_per_mb"] = c.cost.constants.e_access_pj_per_mb;
    k["bytes_per_param"] = c.cost.constants.bytes_per_param;
    k["multi_add"] = c.cost.multi_add;
    if (c.cost.published_params && c.cost.published_flops)
        k["published"] = {{"params", *c.cost.published_params},
                          {"flops", *c.cost.published_flops}};
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["threads"] = c.round.threads;
    if (!c.notes.empty()) j["notes"] = c.notes;
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace fedprune
