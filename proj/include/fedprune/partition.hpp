#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fedprune/csv.hpp"
#include "fedprune/data.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/rng.hpp"

namespace fedprune {

/// Gamma law controlling heterogeneity: small alpha gives strongly skewed
/// client proportions, alpha around 1e6 is effectively IID. The scale beta
/// cancels under normalization and defaults to 1.
struct GammaSpec {
    double alpha = 10.0;
    double beta = 1.0;
    std::uint64_t seed = 0;
};

enum class PartitionMode { Quantity, Label, Mixed };

inline const char* to_string(PartitionMode m) {
    switch (m) {
        case PartitionMode::Quantity: return "quantity";
        case PartitionMode::Label: return "label";
        case PartitionMode::Mixed: return "mixed";
    }
    return "?";
}

/// Per-client sample assignment plus the proportion draws that produced it.
struct PartitionPlan {
    PartitionMode mode = PartitionMode::Quantity;
    std::vector<std::vector<std::size_t>> assignments;  // client -> sample indices
    std::vector<std::vector<double>> proportions;       // quantity: [K][1]; label: [K][classes]
    std::size_t subsampled = 0;                         // samples dropped by mixed-skew targets
    std::vector<std::string> warnings;

    std::size_t client_count() const { return assignments.size(); }

    std::size_t total_assigned() const {
        std::size_t n = 0;
        for (const auto& a : assignments) n += a.size();
        return n;
    }

    /// clients x classes sample-count matrix (heatmap data).
    std::vector<std::vector<std::size_t>> count_matrix(const Dataset& ds) const {
        std::vector<std::vector<std::size_t>> m(
            assignments.size(), std::vector<std::size_t>(ds.class_names.size(), 0));
        for (std::size_t k = 0; k < assignments.size(); ++k)
            for (std::size_t i : assignments[k])
                ++m[k][static_cast<std::size_t>(ds.labels[i])];
        return m;
    }
};

/// n Gamma(alpha, beta) draws normalized to sum to 1.
inline std::vector<double> sample_gamma_proportions(const GammaSpec& spec, std::size_t n,
                                                    Rng& rng) {
    if (spec.alpha <= 0.0) throw ConfigError("gamma spec: alpha must be > 0");
    if (spec.beta <= 0.0) throw ConfigError("gamma spec: beta must be > 0");
    if (n < 1) throw ConfigError("sample_gamma_proportions: n must be >= 1");
    std::vector<double> theta(n);
    double sum = 0.0;
    for (double& t : theta) {
        t = rng.gamma(spec.alpha, spec.beta);
        sum += t;
    }
    for (double& t : theta) t /= sum;
    return theta;
}

inline std::vector<double> sample_gamma_proportions(const GammaSpec& spec, std::size_t n) {
    Rng rng(derive_seed(spec.seed, 0x67616d6dULL));
    return sample_gamma_proportions(spec, n, rng);
}

namespace detail {

/// Integer allocation of `total` items proportional to theta, by largest
/// remainder. Ties go to the lower index so the result is deterministic.
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& theta,
                                                  std::size_t total) {
    const std::size_t n = theta.size();
    std::vector<std::size_t> counts(n);
    std::vector<std::pair<double, std::size_t>> rema(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = theta[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(exact);
        rema[i] = {exact - static_cast<double>(counts[i]), i};
        assigned += counts[i];
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[rema[r % n].second];
    return counts;
}

}  // namespace detail

/// Quantity skew: clients draw their dataset share from one normalized gamma
/// vector; samples are shuffled first so each client's class mix approximates
/// the global one.
inline PartitionPlan partition_quantity(const Dataset& ds, std::size_t clients,
                                        const GammaSpec& spec) {
    if (clients < 1) throw ConfigError("partition: need at least 1 client");
    if (ds.size() < clients)
        throw ConfigError("partition: fewer samples than clients");

    PartitionPlan plan;
    plan.mode = PartitionMode::Quantity;

    Rng rng(derive_seed(spec.seed, 0x71746974ULL));
    const std::vector<double> theta = sample_gamma_proportions(spec, clients, rng);
    for (double t : theta) plan.proportions.push_back({t});

    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);

    const std::vector<std::size_t> counts = detail::largest_remainder(theta, ds.size());
    plan.assignments.resize(clients);
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < clients; ++k) {
        if (counts[k] == 0)
            plan.warnings.push_back("client " + std::to_string(k) + " received 0 samples");
        plan.assignments[k].assign(idx.begin() + static_cast<std::ptrdiff_t>(cursor),
                                   idx.begin() + static_cast<std::ptrdiff_t>(cursor + counts[k]));
        cursor += counts[k];
    }
    return plan;
}

/// Label skew: every class draws its own normalized gamma vector across
/// clients, then that class's samples are allocated by largest remainder.
inline PartitionPlan partition_label(const Dataset& ds, std::size_t clients,
                                     const GammaSpec& spec) {
    if (clients < 1) throw ConfigError("partition: need at least 1 client");
    const std::size_t n_classes = ds.class_names.size();
    const auto hist = ds.class_histogram();
    for (std::size_t c = 0; c < n_classes; ++c)
        if (hist[c] == 0)
            throw ConfigError("partition_label: class '" + ds.class_names[c] + "' has no samples");

    PartitionPlan plan;
    plan.mode = PartitionMode::Label;
    plan.assignments.resize(clients);
    plan.proportions.assign(clients, std::vector<double>(n_classes, 0.0));

    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    for (std::size_t c = 0; c < n_classes; ++c) {
        Rng rng(derive_seed(spec.seed, 0x6c626c00ULL + c));
        const std::vector<double> theta = sample_gamma_proportions(spec, clients, rng);
        for (std::size_t k = 0; k < clients; ++k) plan.proportions[k][c] = theta[k];

        auto& samples = by_class[c];
        rng.shuffle(samples);
        const std::vector<std::size_t> counts = detail::largest_remainder(theta, samples.size());
        std::size_t cursor = 0;
        for (std::size_t k = 0; k < clients; ++k) {
            plan.assignments[k].insert(plan.assignments[k].end(),
                                       samples.begin() + static_cast<std::ptrdiff_t>(cursor),
                                       samples.begin() + static_cast<std::ptrdiff_t>(cursor + counts[k]));
            cursor += counts[k];
        }
    }
    for (std::size_t k = 0; k < clients; ++k) {
        std::sort(plan.assignments[k].begin(), plan.assignments[k].end());
        if (plan.assignments[k].empty())
            plan.warnings.push_back("client " + std::to_string(k) + " received 0 samples");
    }
    return plan;
}

/// Mixed skew: label-skew allocation followed by per-client subsampling down
/// to quantity-skew targets. Only removes samples, never adds, so the deficit
/// is recorded in `subsampled`.
inline PartitionPlan partition_mixed(const Dataset& ds, std::size_t clients,
                                     const GammaSpec& quantity_spec, const GammaSpec& label_spec) {
    PartitionPlan plan = partition_label(ds, clients, label_spec);
    plan.mode = PartitionMode::Mixed;

    Rng rng(derive_seed(quantity_spec.seed, 0x6d697865ULL));
    const std::vector<double> qtheta = sample_gamma_proportions(quantity_spec, clients, rng);
    const std::vector<std::size_t> targets = detail::largest_remainder(qtheta, ds.size());

    for (std::size_t k = 0; k < clients; ++k) {
        auto& a = plan.assignments[k];
        if (a.size() > targets[k]) {
            rng.shuffle(a);
            plan.subsampled += a.size() - targets[k];
            a.resize(targets[k]);
            std::sort(a.begin(), a.end());
        }
        plan.proportions[k].push_back(qtheta[k]);  // appended after per-class columns
    }
    return plan;
}

/// Writes the clients x classes count matrix as CSV (one row per client).
inline void write_heatmap_csv(const PartitionPlan& plan, const Dataset& ds,
                              const std::string& path) {
    csv::Writer w(path);
    std::vector<std::string> header{"client"};
    for (const auto& name : ds.class_names) header.push_back(name);
    w.row(header);
    const auto m = plan.count_matrix(ds);
    for (std::size_t k = 0; k < m.size(); ++k) {
        std::vector<std::string> cells{std::to_string(k)};
        for (std::size_t c = 0; c < m[k].size(); ++c) cells.push_back(std::to_string(m[k][c]));
        w.row(cells);
    }
    w.save();
}

}  // namespace fedprune
