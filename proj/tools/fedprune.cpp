// Experiment front door: parses a JSON config, applies flag overrides, and
// runs the requested workflow. All result files land in --out and are listed
// in manifest.json.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedprune/config.hpp"
#include "fedprune/experiment.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::string out_dir;
    std::string label_col;
    std::string algorithm;
    std::string aggregation;
    double rho = -1.0;
    double alpha = -1.0;
    std::uint64_t seed = 0;
    std::size_t clients = 0;
    int threads = 0;
    bool seed_set = false;
};

void add_common_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "experiment config JSON")->required();
    cmd->add_option("--out", ov.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", ov.seed, "master seed (overrides config)")
        ->each([&ov](const std::string&) { ov.seed_set = true; });
    cmd->add_option("--label-col", ov.label_col, "CSV label column (overrides config)");
    cmd->add_option("--rho", ov.rho, "uniform pruning ratio (overrides config)")
        ->check(CLI::Range(0.0, 0.999));
    cmd->add_option("--clients", ov.clients, "client count (overrides config)");
    cmd->add_option("--alpha", ov.alpha, "gamma shape alpha (overrides config)");
    cmd->add_option("--algorithm", ov.algorithm, "fedavg or fedprox (overrides config)")
        ->check(CLI::IsMember({"fedavg", "fedprox"}));
    cmd->add_option("--agg", ov.aggregation, "normalized or literal (overrides config)")
        ->check(CLI::IsMember({"normalized", "literal"}));
    cmd->add_option("--threads", ov.threads, "worker threads for client updates");
}

fedprune::ExperimentConfig load_with_overrides(const Overrides& ov) {
    fedprune::ExperimentConfig cfg = fedprune::load_config(ov.config_path);
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
    if (ov.seed_set) cfg.seed = ov.seed;
    if (!ov.label_col.empty()) cfg.dataset.label_col = ov.label_col;
    if (ov.rho >= 0.0) cfg.round.rho = {ov.rho};
    if (ov.clients > 0) cfg.clients = ov.clients;
    if (ov.alpha > 0.0) cfg.partition.alpha = ov.alpha;
    if (ov.algorithm == "fedavg") {
        cfg.round.algorithm = fedprune::Algorithm::FedAvg;
        cfg.round.mu = 0.0;
    } else if (ov.algorithm == "fedprox") {
        cfg.round.algorithm = fedprune::Algorithm::FedProx;
    }
    if (ov.aggregation == "normalized") cfg.round.aggregation = fedprune::Aggregation::Normalized;
    if (ov.aggregation == "literal") cfg.round.aggregation = fedprune::Aggregation::Literal;
    if (ov.threads > 0) cfg.round.threads = ov.threads;
    return cfg;
}

void report_files(const std::vector<std::string>& files, const std::string& out_dir) {
    for (const auto& f : files) std::cout << out_dir << "/" << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated pruning simulator"};
    app.require_subcommand(1);

    Overrides ov;
    CLI::App* cmd_partition = app.add_subcommand("partition", "partition a dataset across clients");
    CLI::App* cmd_train = app.add_subcommand("train", "run one federated training experiment");
    CLI::App* cmd_sweep = app.add_subcommand("prune-sweep", "train once per rho in the sweep list");
    CLI::App* cmd_opt = app.add_subcommand("optimize-rho", "maximize the accuracy-energy score");
    CLI::App* cmd_cost = app.add_subcommand("cost", "print the analytic cost profile as JSON");
    CLI::App* cmd_validate = app.add_subcommand("validate", "check a config without running it");
    for (CLI::App* c : {cmd_partition, cmd_train, cmd_sweep, cmd_opt, cmd_cost, cmd_validate})
        add_common_flags(c, ov);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_validate->parsed()) {
            const fedprune::ExperimentConfig cfg = load_with_overrides(ov);
            const auto violations = cfg.validate();
            if (violations.empty()) {
                std::cout << "config ok\n";
                return 0;
            }
            for (const auto& msg : violations) std::cerr << "violation: " << msg << "\n";
            return 1;
        }

        const fedprune::ExperimentConfig cfg = load_with_overrides(ov);
        if (cmd_partition->parsed()) {
            report_files(fedprune::run_partition_cmd(cfg), cfg.out_dir);
        } else if (cmd_train->parsed()) {
            report_files(fedprune::run_train_cmd(cfg), cfg.out_dir);
        } else if (cmd_sweep->parsed()) {
            report_files(fedprune::run_prune_sweep_cmd(cfg), cfg.out_dir);
        } else if (cmd_opt->parsed()) {
            report_files(fedprune::run_optimize_rho_cmd(cfg), cfg.out_dir);
        } else if (cmd_cost->parsed()) {
            std::cout << fedprune::cost_json(cfg);
            fedprune::run_cost_cmd(cfg);
        }
        return 0;
    } catch (const fedprune::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fedprune::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const fedprune::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    }
}
