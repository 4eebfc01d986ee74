#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedprune/config.hpp"
#include "fedprune/cost_model.hpp"
#include "fedprune/csv.hpp"
#include "fedprune/data.hpp"
#include "fedprune/federation.hpp"
#include "fedprune/manifest.hpp"
#include "fedprune/partition.hpp"
#include "fedprune/pruning.hpp"
#include "fedprune/rho_optimizer.hpp"

namespace fedprune {

/// Drives the workflows behind the CLI subcommands. Every function validates
/// the config, writes its artifacts under cfg.out_dir, and records each file
/// in manifest.json with a hash of its deterministic payload.

namespace detail {

inline void ensure_valid(const ExperimentConfig& cfg) {
    const auto violations = cfg.validate();
    if (!violations.empty()) {
        std::string msg = "invalid config:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw ConfigError(msg);
    }
}

inline std::string config_hash(const ExperimentConfig& cfg) {
    return hex64(fnv1a64(config_to_json(cfg).dump()));
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path.string());
    out << content;
}

/// Short stable textual form for rho values in file names: 0.5 -> "0.5".
inline std::string rho_label(double rho) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", rho);
    return buf;
}

}  // namespace detail

inline Dataset make_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset.type == "synthetic") {
        std::vector<std::size_t> counts = cfg.dataset.per_class;
        if (counts.empty())
            counts.assign(static_cast<std::size_t>(cfg.dataset.classes),
                          cfg.dataset.samples_per_class);
        return generate_synthetic(cfg.dataset.classes, cfg.dataset.features, counts,
                                  cfg.dataset.separation, derive_seed(cfg.seed, 0x64617461ULL));
    }
    const Scaling scaling = cfg.dataset.scaling == "minmax" ? Scaling::MinMax : Scaling::None;
    return load_csv(cfg.dataset.path, cfg.dataset.label_col, scaling, cfg.dataset.class_order);
}

inline PartitionPlan make_partition(const ExperimentConfig& cfg, const Dataset& ds) {
    GammaSpec spec{cfg.partition.alpha, cfg.partition.beta, derive_seed(cfg.seed, 0x70617274ULL)};
    switch (cfg.partition_mode()) {
        case PartitionMode::Quantity:
            return partition_quantity(ds, cfg.clients, spec);
        case PartitionMode::Label:
            return partition_label(ds, cfg.clients, spec);
        case PartitionMode::Mixed: {
            GammaSpec qspec{cfg.partition.quantity_alpha, cfg.partition.quantity_beta,
                            derive_seed(cfg.seed, 0x71737065ULL)};
            return partition_mixed(ds, cfg.clients, qspec, spec);
        }
    }
    throw InternalError("unreachable partition mode");
}

namespace detail {

/// Metrics CSV; the seconds column is wall time and is dropped from the
/// payload that gets hashed into the manifest.
struct MetricsText {
    std::string full;
    std::string payload;
};

inline MetricsText metrics_text(const std::vector<RoundMetrics>& rounds) {
    MetricsText out;
    out.full = "round,accuracy,loss,seconds\n";
    out.payload = "round,accuracy,loss\n";
    for (const RoundMetrics& m : rounds) {
        const std::string base = std::to_string(m.round) + "," + csv::format_double(m.accuracy) +
                                 "," + csv::format_double(m.loss);
        out.full += base + "," + csv::format_double(m.seconds) + "\n";
        out.payload += base + "\n";
    }
    return out;
}

inline std::string confusion_text(const std::vector<std::vector<std::int64_t>>& confusion,
                                  const std::vector<std::string>& class_names) {
    std::string out = "true_class";
    for (const auto& n : class_names) out += "," + n;
    out += "\n";
    for (std::size_t r = 0; r < confusion.size(); ++r) {
        out += class_names[r];
        for (std::int64_t v : confusion[r]) out += "," + std::to_string(v);
        out += "\n";
    }
    return out;
}

inline std::string heatmap_text(const PartitionPlan& plan, const Dataset& ds) {
    std::string out = "client";
    for (const auto& n : ds.class_names) out += "," + n;
    out += "\n";
    const auto m = plan.count_matrix(ds);
    for (std::size_t k = 0; k < m.size(); ++k) {
        out += std::to_string(k);
        for (std::size_t c = 0; c < m[k].size(); ++c) out += "," + std::to_string(m[k][c]);
        out += "\n";
    }
    return out;
}

}  // namespace detail

/// `partition`: distributes the full dataset and writes the clients x classes
/// heatmap matrix.
inline std::vector<std::string> run_partition_cmd(const ExperimentConfig& cfg) {
    detail::ensure_valid(cfg);
    const Dataset ds = make_dataset(cfg);
    const PartitionPlan plan = make_partition(cfg, ds);

    const std::filesystem::path out(cfg.out_dir);
    Manifest manifest(detail::config_hash(cfg), cfg.seed);
    const std::string heatmap = detail::heatmap_text(plan, ds);
    detail::write_text(out / "partition_heatmap.csv", heatmap);
    manifest.add("partition_heatmap.csv", heatmap);
    manifest.save((out / "manifest.json").string());
    return {"partition_heatmap.csv", "manifest.json"};
}

/// `train`: one full federated run; emits per-round metrics, the final-round
/// confusion matrix, the partition heatmap, and each client's mask blob.
inline std::vector<std::string> run_train_cmd(const ExperimentConfig& cfg) {
    detail::ensure_valid(cfg);
    const Dataset ds = make_dataset(cfg);
    SplitSpec split_spec{cfg.split.train_fraction, derive_seed(cfg.seed, 0x73706c74ULL),
                         cfg.split.stratified};
    const SplitResult sp = split(ds, split_spec);
    const PartitionPlan plan = make_partition(cfg, sp.train);
    const Architecture arch = cfg.architecture(static_cast<int>(sp.train.feature_count()),
                                               sp.train.class_count());

    const SimulationResult sim = run_simulation(arch, sp.train, plan, cfg.round, sp.test);

    const std::filesystem::path out(cfg.out_dir);
    Manifest manifest(detail::config_hash(cfg), cfg.seed);
    std::vector<std::string> files;

    const detail::MetricsText metrics = detail::metrics_text(sim.rounds);
    detail::write_text(out / "metrics.csv", metrics.full);
    manifest.add("metrics.csv", metrics.payload);
    files.push_back("metrics.csv");

    const std::string confusion =
        detail::confusion_text(sim.rounds.back().confusion, sp.test.class_names);
    detail::write_text(out / "confusion.csv", confusion);
    manifest.add("confusion.csv", confusion);
    files.push_back("confusion.csv");

    const std::string heatmap = detail::heatmap_text(plan, sp.train);
    detail::write_text(out / "partition_heatmap.csv", heatmap);
    manifest.add("partition_heatmap.csv", heatmap);
    files.push_back("partition_heatmap.csv");

    for (std::size_t k = 0; k < sim.client_masks.size(); ++k) {
        const auto blob = serialize_mask(sim.client_masks[k]);
        const std::string rel = "masks/client_" + std::to_string(k) + ".mask";
        const std::string_view payload(reinterpret_cast<const char*>(blob.data()), blob.size());
        detail::write_text(out / rel, std::string(payload));
        manifest.add(rel, payload);
        files.push_back(rel);
    }

    manifest.save((out / "manifest.json").string());
    files.push_back("manifest.json");
    return files;
}

/// `prune-sweep`: reruns the federated pipeline once per rho in the sweep
/// list; each run gets its own metrics file.
inline std::vector<std::string> run_prune_sweep_cmd(const ExperimentConfig& cfg) {
    detail::ensure_valid(cfg);
    const Dataset ds = make_dataset(cfg);
    SplitSpec split_spec{cfg.split.train_fraction, derive_seed(cfg.seed, 0x73706c74ULL),
                         cfg.split.stratified};
    const SplitResult sp = split(ds, split_spec);
    const PartitionPlan plan = make_partition(cfg, sp.train);
    const Architecture arch = cfg.architecture(static_cast<int>(sp.train.feature_count()),
                                               sp.train.class_count());

    const std::filesystem::path out(cfg.out_dir);
    Manifest manifest(detail::config_hash(cfg), cfg.seed);
    std::vector<std::string> files;
    for (double rho : cfg.rho_sweep) {
        RoundConfig rc = cfg.round;
        rc.rho = {rho};
        const SimulationResult sim = run_simulation(arch, sp.train, plan, rc, sp.test);
        const detail::MetricsText metrics = detail::metrics_text(sim.rounds);
        const std::string rel = "metrics_rho_" + detail::rho_label(rho) + ".csv";
        detail::write_text(out / rel, metrics.full);
        manifest.add(rel, metrics.payload);
        files.push_back(rel);
    }
    manifest.save((out / "manifest.json").string());
    files.push_back("manifest.json");
    return files;
}

/// `optimize-rho`: evaluates the score model and writes the score curve plus
/// the solution. Energies default to the config architecture's cost profile
/// when not given explicitly.
inline std::vector<std::string> run_optimize_rho_cmd(const ExperimentConfig& cfg) {
    detail::ensure_valid(cfg);
    if (cfg.score.acc_unpruned.empty())
        throw ConfigError("optimize-rho needs score.acc_unpruned");

    double default_energy = 0.0;
    if (cfg.score.energy_unpruned.empty()) {
        if (cfg.arch.input_length <= 0 || cfg.arch.classes <= 0)
            throw ConfigError(
                "optimize-rho needs score.energy_unpruned or explicit arch.input_length and "
                "arch.classes to derive the model energy");
        const Architecture arch = cfg.architecture(cfg.arch.input_length, cfg.arch.classes);
        default_energy = energy_pj(unpruned_profile(arch), cfg.cost.constants);
    }
    const ScoreConfig sc = cfg.score_config(default_energy);
    const RhoSolution sol = optimize_rho(sc, cfg.search_mode(), derive_seed(cfg.seed, 0x726f7074ULL));

    const std::filesystem::path out(cfg.out_dir);
    std::filesystem::create_directories(out);
    Manifest manifest(detail::config_hash(cfg), cfg.seed);

    write_score_curve_csv(sc, (out / "score_curve.csv").string());
    {
        std::ifstream in(out / "score_curve.csv", std::ios::binary);
        const std::string content((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
        manifest.add("score_curve.csv", content);
    }

    nlohmann::json j;
    j["mode"] = to_string(cfg.search_mode());
    j["rho"] = sol.rho;
    j["score"] = sol.score;
    j["acc_pred"] = sol.acc_pred;
    j["energy_pred_pj"] = sol.energy_pred;
    j["feasible"] = sol.feasible;
    const std::string sol_json = j.dump(2) + "\n";
    detail::write_text(out / "rho_solution.json", sol_json);
    manifest.add("rho_solution.json", sol_json);

    manifest.save((out / "manifest.json").string());
    return {"score_curve.csv", "rho_solution.json", "manifest.json"};
}

/// `cost`: analytic profile of the config architecture as JSON — and of the
/// published parameter/FLOPs pair when the config carries one (the shipped
/// per-dataset reference architectures approximate, but cannot exactly hit,
/// those published counts; see the config notes).
inline std::string cost_json(const ExperimentConfig& cfg) {
    detail::ensure_valid(cfg);
    if (cfg.arch.input_length <= 0 || cfg.arch.classes <= 0)
        throw ConfigError("cost needs explicit arch.input_length and arch.classes");
    const double rho = cfg.round.rho.size() == 1 ? cfg.round.rho[0] : 0.0;

    const auto profile_json = [&](const CostProfile& p) {
        const CostProfile pruned = pruned_profile(p, rho);
        nlohmann::json pj;
        pj["params"] = p.params;
        pj["flops"] = p.flops;
        pj["model_size_bytes"] = p.model_size_bytes(cfg.cost.constants);
        pj["energy_pj"] = energy_pj(p, cfg.cost.constants);
        pj["pruned"] = {{"rho", rho},
                        {"params", pruned.params},
                        {"flops", pruned.flops},
                        {"model_size_bytes", pruned.model_size_bytes(cfg.cost.constants)},
                        {"energy_pj", energy_pj(pruned, cfg.cost.constants)}};
        return pj;
    };

    const Architecture arch = cfg.architecture(cfg.arch.input_length, cfg.arch.classes);
    nlohmann::json j;
    j["rho"] = rho;
    CostProfile model_profile;
    model_profile.params = static_cast<double>(count_params(arch));
    model_profile.flops =
        static_cast<double>(count_flops(arch, arch.input_length, cfg.cost.multi_add));
    j["model"] = profile_json(model_profile);
    if (cfg.cost.published_params && cfg.cost.published_flops) {
        CostProfile published;
        published.params = static_cast<double>(*cfg.cost.published_params);
        published.flops = static_cast<double>(*cfg.cost.published_flops);
        j["published"] = profile_json(published);
    }
    return j.dump(2) + "\n";
}

inline std::vector<std::string> run_cost_cmd(const ExperimentConfig& cfg) {
    const std::string json = cost_json(cfg);
    const std::filesystem::path out(cfg.out_dir);
    Manifest manifest(detail::config_hash(cfg), cfg.seed);
    detail::write_text(out / "cost.json", json);
    manifest.add("cost.json", json);
    manifest.save((out / "manifest.json").string());
    return {"cost.json", "manifest.json"};
}

}  // namespace fedprune
