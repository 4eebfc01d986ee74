#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedprune/csv.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/rng.hpp"

namespace fedprune {

/// Everything the accuracy-vs-energy score needs: per-client unpruned
/// accuracies and energies, the objective weights, the decay-model parameters,
/// and the accuracy-degradation budget delta.
struct ScoreConfig {
    std::size_t clients = 1;
    std::vector<double> acc_unpruned;   // size 1 broadcasts to all clients
    std::vector<double> energy_unpruned;
    double alpha1 = 1.0;
    double alpha2 = 0.0;
    std::vector<double> beta{2e-5};     // pruning impact factor, broadcastable
    std::vector<double> lambda{10.0};   // exponential decay rate, broadcastable
    double delta = 0.05;

    /// Optional hook replacing the analytic decay model with measured
    /// accuracies (e.g. from a federated run) for both scoring and
    /// feasibility.
    std::function<double(std::size_t client, double rho)> accuracy_provider;

    double acc(std::size_t i) const { return acc_unpruned.size() == 1 ? acc_unpruned[0] : acc_unpruned[i]; }
    double energy(std::size_t i) const {
        return energy_unpruned.size() == 1 ? energy_unpruned[0] : energy_unpruned[i];
    }
    double beta_i(std::size_t i) const { return beta.size() == 1 ? beta[0] : beta[i]; }
    double lambda_i(std::size_t i) const { return lambda.size() == 1 ? lambda[0] : lambda[i]; }

    void validate() const {
        if (clients < 1) throw ConfigError("score config: need at least 1 client");
        auto check_len = [&](std::size_t n, const char* name) {
            if (n != 1 && n != clients)
                throw ConfigError(std::string("score config: ") + name +
                                  " must have 1 entry or one per client");
        };
        check_len(acc_unpruned.size(), "acc_unpruned");
        check_len(energy_unpruned.size(), "energy_unpruned");
        check_len(beta.size(), "beta");
        check_len(lambda.size(), "lambda");
        for (std::size_t i = 0; i < clients; ++i) {
            if (!(acc(i) >= 0.0 && acc(i) <= 1.0))
                throw ConfigError("score config: accuracies must lie in [0, 1]");
            if (energy(i) <= 0.0) throw ConfigError("score config: energies must be > 0");
            if (beta_i(i) <= 0.0) throw ConfigError("score config: beta must be > 0");
            if (lambda_i(i) <= 0.0) throw ConfigError("score config: lambda must be > 0");
        }
        if (delta < 0.0) throw ConfigError("score config: delta must be >= 0");
    }
};

/// Analytic post-pruning accuracy: Acc_unp * (1 - beta * exp(lambda * rho)).
/// Not clamped; clamping is for reporting only, never inside the score.
inline double decayed_accuracy(double acc_unpruned, double beta, double lambda, double rho) {
    return acc_unpruned * (1.0 - beta * std::exp(lambda * rho));
}

namespace detail {
inline double predicted_accuracy(const ScoreConfig& cfg, std::size_t i, double rho) {
    if (cfg.accuracy_provider) return cfg.accuracy_provider(i, rho);
    return decayed_accuracy(cfg.acc(i), cfg.beta_i(i), cfg.lambda_i(i), rho);
}
}  // namespace detail

/// The multi-objective score:
///   (alpha1/N) * sum_i Acc_i^p(rho_i)  +  alpha2 / ((1/N) * sum_i (1-rho_i) * E_i).
inline double score(const std::vector<double>& rho, const ScoreConfig& cfg) {
    if (rho.size() != cfg.clients)
        throw InputError("score: rho vector size does not match client count");
    const double n = static_cast<double>(cfg.clients);
    double acc_sum = 0.0;
    double energy_mean = 0.0;
    for (std::size_t i = 0; i < cfg.clients; ++i) {
        if (!(rho[i] >= 0.0 && rho[i] < 1.0))
            throw InputError("score: every rho_i must lie in [0, 1)");
        acc_sum += detail::predicted_accuracy(cfg, i, rho[i]);
        energy_mean += (1.0 - rho[i]) * cfg.energy(i);
    }
    energy_mean /= n;
    return cfg.alpha1 * acc_sum / n + cfg.alpha2 / energy_mean;
}

/// Accuracy-degradation constraint: Acc_i^p >= Acc_i^unp - delta for all i.
inline bool feasible(const std::vector<double>& rho, const ScoreConfig& cfg) {
    for (std::size_t i = 0; i < cfg.clients; ++i) {
        if (!(rho[i] >= 0.0 && rho[i] < 1.0)) return false;
        if (detail::predicted_accuracy(cfg, i, rho[i]) < cfg.acc(i) - cfg.delta - 1e-15)
            return false;
    }
    return true;
}

enum class SearchMode { UniformGrid, Coordinate, HillClimb };

inline const char* to_string(SearchMode m) {
    switch (m) {
        case SearchMode::UniformGrid: return "uniform-grid";
        case SearchMode::Coordinate: return "coordinate";
        case SearchMode::HillClimb: return "hill-climb";
    }
    return "?";
}

struct RhoSolution {
    std::vector<double> rho;
    double score = 0.0;
    std::vector<double> acc_pred;
    std::vector<double> energy_pred;
    bool feasible = false;
};

namespace detail {

constexpr double kGridStep = 1e-4;
constexpr double kGridMax = 0.999;

inline RhoSolution finish(std::vector<double> rho, const ScoreConfig& cfg, bool feas) {
    RhoSolution s;
    s.score = score(rho, cfg);
    s.rho = std::move(rho);
    s.feasible = feas;
    for (std::size_t i = 0; i < cfg.clients; ++i) {
        s.acc_pred.push_back(predicted_accuracy(cfg, i, s.rho[i]));
        s.energy_pred.push_back((1.0 - s.rho[i]) * cfg.energy(i));
    }
    return s;
}

/// Scans a shared rho over [0, 0.999] in 1e-4 steps. Strict improvement keeps
/// the earlier (smaller) rho on ties. Returns (best feasible, best overall).
inline std::pair<double, double> uniform_scan(const ScoreConfig& cfg, double& best_feasible_score,
                                              double& best_any_score) {
    double best_feasible = -1.0;
    double best_any = 0.0;
    best_feasible_score = -HUGE_VAL;
    best_any_score = -HUGE_VAL;
    std::vector<double> rho(cfg.clients);
    const std::size_t steps = static_cast<std::size_t>(kGridMax / kGridStep) + 1;
    for (std::size_t s = 0; s < steps; ++s) {
        const double r = std::min(static_cast<double>(s) * kGridStep, kGridMax);
        std::fill(rho.begin(), rho.end(), r);
        const double sc = score(rho, cfg);
        if (sc > best_any_score) {
            best_any_score = sc;
            best_any = r;
        }
        if (feasible(rho, cfg) && sc > best_feasible_score) {
            best_feasible_score = sc;
            best_feasible = r;
        }
    }
    return {best_feasible, best_any};
}

}  // namespace detail

/// Finds pruning ratios maximizing the score under the feasibility filter.
///
/// uniform-grid: shared rho scanned at 1e-4 resolution (exact at grid
/// granularity for the smooth closed-form objective). coordinate: cyclic
/// per-client 1-D refinement from the uniform optimum until the score gain
/// drops below 1e-8. hill-climb: seeded Gaussian perturbation search with the
/// same filter, for parity with an agent-style workflow. If no feasible point
/// exists, returns the unconstrained argmax flagged infeasible.
inline RhoSolution optimize_rho(const ScoreConfig& cfg, SearchMode mode = SearchMode::UniformGrid,
                                std::uint64_t seed = 0) {
    cfg.validate();
    double best_feasible_score, best_any_score;
    auto [grid_rho, any_rho] = detail::uniform_scan(cfg, best_feasible_score, best_any_score);

    if (grid_rho < 0.0) {
        // No feasible grid point: report the unconstrained optimum for diagnosis.
        return detail::finish(std::vector<double>(cfg.clients, any_rho), cfg, false);
    }

    std::vector<double> rho(cfg.clients, grid_rho);
    if (mode == SearchMode::UniformGrid) return detail::finish(std::move(rho), cfg, true);

    if (mode == SearchMode::Coordinate) {
        double current = best_feasible_score;
        for (;;) {
            double round_gain = 0.0;
            for (std::size_t i = 0; i < cfg.clients; ++i) {
                const double saved = rho[i];
                double best_r = saved;
                double best_s = current;
                const std::size_t steps =
                    static_cast<std::size_t>(detail::kGridMax / detail::kGridStep) + 1;
                for (std::size_t s = 0; s < steps; ++s) {
                    const double r =
                        std::min(static_cast<double>(s) * detail::kGridStep, detail::kGridMax);
                    rho[i] = r;
                    if (!feasible(rho, cfg)) continue;
                    const double sc = score(rho, cfg);
                    if (sc > best_s) {
                        best_s = sc;
                        best_r = r;
                    }
                }
                rho[i] = best_r;
                round_gain += best_s - current;
                current = best_s;
            }
            if (round_gain < 1e-8) break;
        }
        return detail::finish(std::move(rho), cfg, true);
    }

    // Hill climb: Gaussian moves with a decaying step, accept on improvement.
    Rng rng(derive_seed(seed, 0x68636c6dULL));
    double current = best_feasible_score;
    double sigma = 0.1;
    std::vector<double> cand(cfg.clients);
    for (int iter = 0; iter < 4000; ++iter) {
        for (std::size_t i = 0; i < cfg.clients; ++i) {
            cand[i] = rho[i] + rng.normal(0.0, sigma);
            cand[i] = std::clamp(cand[i], 0.0, detail::kGridMax);
        }
        if (feasible(cand, cfg)) {
            const double sc = score(cand, cfg);
            if (sc > current) {
                current = sc;
                rho = cand;
            }
        }
        sigma = std::max(1e-4, sigma * 0.999);
    }
    return detail::finish(std::move(rho), cfg, true);
}

/// Uniform-rho score sweep written as CSV: rho, score, accuracy term, energy
/// term, feasibility. This is the data behind the score-vs-rho plots.
inline void write_score_curve_csv(const ScoreConfig& cfg, const std::string& path,
                                  double step = 1e-3) {
    cfg.validate();
    csv::Writer w(path);
    w.row({"rho", "score", "acc_term", "energy_term", "feasible"});
    const double n = static_cast<double>(cfg.clients);
    std::vector<double> rho(cfg.clients);
    for (double r = 0.0; r < detail::kGridMax + step * 0.5; r += step) {
        const double rr = std::min(r, detail::kGridMax);
        std::fill(rho.begin(), rho.end(), rr);
        double acc_sum = 0.0, energy_mean = 0.0;
        for (std::size_t i = 0; i < cfg.clients; ++i) {
            acc_sum += detail::predicted_accuracy(cfg, i, rr);
            energy_mean += (1.0 - rr) * cfg.energy(i);
        }
        energy_mean /= n;
        const double acc_term = cfg.alpha1 * acc_sum / n;
        const double energy_term = cfg.alpha2 / energy_mean;
        w.row({csv::format_double(rr), csv::format_double(acc_term + energy_term),
               csv::format_double(acc_term), csv::format_double(energy_term),
               feasible(rho, cfg) ? "1" : "0"});
        if (rr >= detail::kGridMax) break;
    }
    w.save();
}

}  // namespace fedprune
