#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "fedprune/data.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/nn.hpp"
#include "fedprune/partition.hpp"
#include "fedprune/pruning.hpp"
#include "fedprune/rng.hpp"

namespace fedprune {

enum class Algorithm { FedAvg, FedProx };
enum class Aggregation { Normalized, Literal };

inline const char* to_string(Algorithm a) {
    return a == Algorithm::FedAvg ? "fedavg" : "fedprox";
}
inline const char* to_string(Aggregation a) {
    return a == Aggregation::Normalized ? "normalized" : "literal";
}

/// Protocol configuration for one simulation.
struct RoundConfig {
    Algorithm algorithm = Algorithm::FedAvg;
    double mu = 0.0;  // FedProx proximal coefficient
    int local_epochs = 20;
    int fine_tune_epochs = -1;  // after round-0 pruning; -1 means same as local_epochs
    int rounds = 40;
    std::vector<double> rho{0.0};  // one shared value or one per client
    Aggregation aggregation = Aggregation::Normalized;
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    int threads = 1;

    double rho_for(std::size_t client) const {
        return rho.size() == 1 ? rho[0] : rho[client];
    }
    int effective_fine_tune_epochs() const {
        return fine_tune_epochs < 0 ? local_epochs : fine_tune_epochs;
    }

    void validate(std::size_t clients) const {
        if (rounds < 1) throw ConfigError("round config: rounds must be >= 1");
        if (local_epochs < 1) throw ConfigError("round config: local_epochs must be >= 1");
        if (mu < 0.0) throw ConfigError("round config: mu must be >= 0");
        if (algorithm == Algorithm::FedAvg && mu != 0.0)
            throw ConfigError("round config: mu must be 0 under fedavg");
        if (rho.size() != 1 && rho.size() != clients)
            throw ConfigError("round config: rho needs 1 entry or one per client");
        for (double r : rho)
            if (!(r >= 0.0 && r < 1.0))
                throw ConfigError("round config: every rho must lie in [0, 1)");
        if (learning_rate <= 0.0) throw ConfigError("round config: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("round config: batch_size must be >= 1");
        if (threads < 1) throw ConfigError("round config: threads must be >= 1");
    }
};

/// One client's persistent state across rounds: local data, model, mask,
/// optimizer moments, and its private batch-order stream.
struct ClientState {
    int id = 0;
    Dataset data;
    ModelParams model;
    PruneMask mask;
    AdamState opt;
    double weight_pk = 0.0;
    bool mask_built = false;
    int mask_uploads = 0;
    double last_train_loss = 0.0;
    Rng batch_rng{0};
};

struct RoundMetrics {
    int round = 0;
    double accuracy = 0.0;
    double loss = 0.0;
    std::vector<double> client_train_loss;
    std::vector<std::vector<std::int64_t>> confusion;
    double seconds = 0.0;
};

/// Batch-order stream seed for one client; exposed so tests can replay the
/// exact trajectory of a simulated client.
inline std::uint64_t client_stream_seed(std::uint64_t seed, std::size_t client) {
    return derive_seed(seed, 0x62617463ULL, client);
}

/// Mini-batch Adam over `epochs` passes of the data. Batch order reshuffles
/// per epoch from `rng`. With `grad_mask`, gradients of pruned coordinates are
/// zeroed before every step. Returns the mean loss of the final epoch.
inline double train_epochs(ModelParams& model, const Dataset& data, AdamState& opt, Rng& rng,
                           int epochs, std::size_t batch_size, const ProxTerm* prox = nullptr,
                           const PruneMask* grad_mask = nullptr) {
    if (data.size() == 0) return 0.0;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    double epoch_loss = 0.0;
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t stop = std::min(order.size(), start + batch_size);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            auto [x, y] = gather_batch(data, idx);
            LossGrads lg = loss_and_grads(model, x, y, prox);
            if (!std::isfinite(lg.loss)) throw NumericError("training loss is not finite");
            if (grad_mask) mask_grads(lg.grads, *grad_mask);
            adam_step(model, lg.grads, opt);
            epoch_loss += lg.loss;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);
    }
    return epoch_loss;
}

inline void build_and_apply_first_mask(ClientState& client, const RoundConfig& cfg) {
    const ImportanceVector importance = importance_l1(client.model);
    client.mask = build_mask(importance, cfg.rho_for(static_cast<std::size_t>(client.id)),
                             client.model);
    apply_mask(client.model, client.mask);
    mask_adam_moments(client.opt, client.mask);
    client.mask_built = true;
    client.mask_uploads += 1;  // the one and only mask transmission
}

/// One client's round: receive the re-masked global model, train E epochs
/// (FedProx anchors at the received model), and on the first round compute
/// magnitude importance, build and apply the persistent mask, then fine-tune
/// with pruned gradients zeroed. Optimizer moments persist across rounds;
/// moments of pruned coordinates are cleared when the mask lands so momentum
/// cannot resurrect them.
inline void local_update(ClientState& client, const ModelParams& global, const RoundConfig& cfg,
                         bool is_first_round) {
    // Receive step: W_k = M_k (.) W_global. Before round-0 pruning the mask is
    // all ones, so this is a plain copy.
    for (std::size_t p = 0; p < global.weights.size(); ++p) {
        for (std::size_t i = 0; i < global.weights[p].size(); ++i)
            client.model.weights[p][i] = global.weights[p][i] * client.mask.bits[p][i];
        client.model.biases[p] = global.biases[p];
    }

    if (client.data.size() == 0) {
        if (is_first_round && !client.mask_built) {
            // No data to train on, but the magnitude ranking is still defined.
            build_and_apply_first_mask(client, cfg);
        }
        return;
    }

    ModelParams anchor;
    ProxTerm prox;
    const ProxTerm* prox_ptr = nullptr;
    if (cfg.algorithm == Algorithm::FedProx) {
        anchor = client.model;
        prox.mu = cfg.mu;
        prox.anchor = &anchor;
        prox_ptr = &prox;
    }

    try {
        client.last_train_loss =
            train_epochs(client.model, client.data, client.opt, client.batch_rng,
                         cfg.local_epochs, cfg.batch_size, prox_ptr,
                         client.mask_built ? &client.mask : nullptr);
        if (is_first_round && !client.mask_built) {
            build_and_apply_first_mask(client, cfg);
            if (cfg.rho_for(static_cast<std::size_t>(client.id)) > 0.0 &&
                cfg.effective_fine_tune_epochs() > 0) {
                client.last_train_loss =
                    train_epochs(client.model, client.data, client.opt, client.batch_rng,
                                 cfg.effective_fine_tune_epochs(), cfg.batch_size, prox_ptr,
                                 &client.mask);
            }
        }
    } catch (const NumericError& e) {
        throw NumericError("client " + std::to_string(client.id) + " diverged: " + e.what());
    }
}

/// Mask-aware aggregation. Normalized mode averages each coordinate over the
/// clients that kept it, dividing by the coverage sum_k p_k * m_kj; a
/// coordinate pruned everywhere keeps the previous global value. Literal mode
/// computes sum_k p_k * m_kj * w_kj with no renormalization, which shrinks
/// sparsely-kept coordinates toward zero (and zeroes fully-pruned ones).
/// Biases are aggregated by the plain p_k-weighted average in both modes.
inline ModelParams aggregate_masked(const std::vector<ClientState>& clients,
                                    const ModelParams& previous_global, Aggregation mode) {
    double p_sum = 0.0;
    for (const ClientState& c : clients) p_sum += c.weight_pk;
    if (std::fabs(p_sum - 1.0) > 1e-9)
        throw ConfigError("aggregate: client weights sum to " + std::to_string(p_sum) +
                          ", expected 1");

    ModelParams global = previous_global;
    for (std::size_t p = 0; p < global.weights.size(); ++p) {
        Tensor& out = global.weights[p];
        const std::size_t n = out.size();
        std::vector<double> num(n, 0.0), cov(n, 0.0);
        for (const ClientState& c : clients) {
            const double pk = c.weight_pk;
            if (pk == 0.0) continue;
            const Tensor& w = c.model.weights[p];
            const Tensor& m = c.mask.bits[p];
            for (std::size_t i = 0; i < n; ++i) {
                const double keep = m[i];
                num[i] += pk * keep * w[i];
                cov[i] += pk * keep;
            }
        }
        if (mode == Aggregation::Normalized) {
            for (std::size_t i = 0; i < n; ++i)
                out[i] = cov[i] > 0.0 ? num[i] / cov[i] : previous_global.weights[p][i];
        } else {
            for (std::size_t i = 0; i < n; ++i) out[i] = num[i];
        }

        Tensor& bias = global.biases[p];
        bias.fill(0.0);
        for (const ClientState& c : clients)
            for (std::size_t i = 0; i < bias.size(); ++i)
                bias[i] += c.weight_pk * c.model.biases[p][i];
    }
    return global;
}

struct SimulationResult {
    std::vector<RoundMetrics> rounds;
    ModelParams global;
    std::vector<PruneMask> client_masks;  // final per-client masks
    std::vector<int> mask_uploads;        // per client, counts mask transmissions
    std::vector<std::string> warnings;
};

/// Called after each round's aggregation with the updated client states and
/// the new global model; used by tests and exporters, never by the protocol.
using RoundObserver =
    std::function<void(int round, const std::vector<ClientState>&, const ModelParams&)>;

/// Runs the full protocol: round 0 broadcasts the seed model, clients train,
/// prune once, and upload masks; later rounds broadcast, train, and aggregate.
/// Deterministic for a fixed seed: per-client RNG streams and an
/// ascending-client-id reduction make thread count irrelevant to the result.
inline SimulationResult run_simulation(const Architecture& arch, const Dataset& ds,
                                       const PartitionPlan& plan, const RoundConfig& cfg,
                                       const Dataset& test, const RoundObserver& observer = {}) {
    const std::size_t K = plan.client_count();
    cfg.validate(K);
    if (test.size() == 0) throw InputError("run_simulation: empty test set");

    SimulationResult result;
    result.global = build_model(arch, derive_seed(cfg.seed, 0x676c6f62ULL));

    std::vector<ClientState> clients(K);
    std::size_t total_samples = plan.total_assigned();
    if (total_samples == 0) throw InputError("run_simulation: no samples assigned to any client");
    for (std::size_t k = 0; k < K; ++k) {
        ClientState& c = clients[k];
        c.id = static_cast<int>(k);
        c.data = ds.subset(plan.assignments[k]);
        c.model = result.global;
        c.mask = PruneMask::all_ones(c.model);
        c.opt = AdamState::init(c.model, cfg.learning_rate);
        c.weight_pk = static_cast<double>(c.data.size()) / static_cast<double>(total_samples);
        c.batch_rng = Rng(client_stream_seed(cfg.seed, k));
        if (c.data.size() == 0)
            result.warnings.push_back("client " + std::to_string(k) +
                                      " has no samples; it receives the model but trains nothing");
    }

    for (int q = 0; q < cfg.rounds; ++q) {
        const auto t0 = std::chrono::steady_clock::now();
        const bool first = q == 0;

        if (cfg.threads <= 1 || K == 1) {
            for (ClientState& c : clients) local_update(c, result.global, cfg, first);
        } else {
            const int T = std::min<int>(cfg.threads, static_cast<int>(K));
            std::vector<std::exception_ptr> errors(static_cast<std::size_t>(T));
            std::vector<std::thread> pool;
            for (int t = 0; t < T; ++t) {
                pool.emplace_back([&, t] {
                    try {
                        for (std::size_t k = static_cast<std::size_t>(t); k < K;
                             k += static_cast<std::size_t>(T))
                            local_update(clients[k], result.global, cfg, first);
                    } catch (...) {
                        errors[static_cast<std::size_t>(t)] = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }

        result.global = aggregate_masked(clients, result.global, cfg.aggregation);

        const EvalResult eval = evaluate(result.global, test);
        RoundMetrics m;
        m.round = q;
        m.accuracy = eval.accuracy;
        m.loss = eval.loss;
        m.confusion = eval.confusion;
        for (const ClientState& c : clients) m.client_train_loss.push_back(c.last_train_loss);
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.rounds.push_back(std::move(m));

        if (observer) observer(q, clients, result.global);
    }

    for (const ClientState& c : clients) {
        result.mask_uploads.push_back(c.mask_uploads);
        result.client_masks.push_back(c.mask);
    }
    return result;
}

}  // namespace fedprune
