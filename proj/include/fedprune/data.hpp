#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fedprune/csv.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/rng.hpp"
#include "fedprune/tensor.hpp"

namespace fedprune {

/// Labeled multiclass dataset. Immutable after construction by convention:
/// everything downstream (partitioning, clients) works on index lists into it.
struct Dataset {
    Tensor features;                       // [samples, d]
    std::vector<int> labels;               // values in [0, classes)
    std::vector<std::string> class_names;  // size = classes

    std::size_t size() const { return labels.size(); }
    std::size_t feature_count() const { return features.shape.size() == 2 ? features.shape[1] : 0; }
    int class_count() const { return static_cast<int>(class_names.size()); }

    std::vector<std::size_t> class_histogram() const {
        std::vector<std::size_t> h(class_names.size(), 0);
        for (int y : labels) ++h[static_cast<std::size_t>(y)];
        return h;
    }

    /// Row subset as a new dataset (class names shared).
    Dataset subset(const std::vector<std::size_t>& idx) const {
        Dataset out;
        const std::size_t d = feature_count();
        out.features = Tensor({idx.size(), d});
        out.labels.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const std::size_t src = idx[r];
            std::copy_n(features.values.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                        out.features.values.begin() + static_cast<std::ptrdiff_t>(r * d));
            out.labels.push_back(labels[src]);
        }
        out.class_names = class_names;
        return out;
    }
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    bool stratified = false;
};

/// Isotropic Gaussian cluster per class: the class mean sits at distance
/// `separation` from the origin along a random unit direction, samples get
/// unit-variance noise. Imbalanced per-class counts mimic IDS label skew.
inline Dataset generate_synthetic(int classes, int features,
                                  const std::vector<std::size_t>& per_class_counts,
                                  double separation, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("generate_synthetic: need at least 2 classes");
    if (features < 2) throw ConfigError("generate_synthetic: need at least 2 features");
    if (static_cast<int>(per_class_counts.size()) != classes)
        throw ConfigError("generate_synthetic: per_class_counts size must equal class count");
    for (std::size_t n : per_class_counts)
        if (n < 1) throw ConfigError("generate_synthetic: every class needs >= 1 sample");

    Rng dir_rng(derive_seed(seed, 0x64697273ULL));  // class directions
    Rng noise_rng(derive_seed(seed, 0x6e6f6973ULL));

    std::vector<std::vector<double>> means(static_cast<std::size_t>(classes));
    for (auto& m : means) {
        m.resize(static_cast<std::size_t>(features));
        double norm2 = 0.0;
        for (double& v : m) {
            v = dir_rng.normal();
            norm2 += v * v;
        }
        const double scale = separation / std::sqrt(norm2);
        for (double& v : m) v *= scale;
    }

    std::size_t total = 0;
    for (std::size_t n : per_class_counts) total += n;

    Dataset ds;
    ds.features = Tensor({total, static_cast<std::size_t>(features)});
    ds.labels.reserve(total);
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class_counts[static_cast<std::size_t>(c)]; ++i) {
            double* dst = ds.features.values.data() + row * static_cast<std::size_t>(features);
            for (int f = 0; f < features; ++f)
                dst[f] = means[static_cast<std::size_t>(c)][static_cast<std::size_t>(f)] +
                         noise_rng.normal();
            ds.labels.push_back(c);
            ++row;
        }
    }
    for (int c = 0; c < classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));
    return ds;
}

enum class Scaling { None, MinMax };

/// Loads a CSV with a mandatory header row. Non-label columns are parsed as
/// numbers; labels are mapped to dense ids in first-appearance order unless
/// `class_order` pins an explicit ordering. MinMax scaling maps each feature
/// to [0,1]; constant columns map to 0.
inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        Scaling scaling = Scaling::MinMax,
                        const std::vector<std::string>& class_order = {}) {
    csv::Table t = csv::read_file(path);
    auto lit = std::find(t.header.begin(), t.header.end(), label_column);
    if (lit == t.header.end())
        throw InputError("label column '" + label_column + "' not found in " + path);
    const std::size_t label_idx = static_cast<std::size_t>(lit - t.header.begin());
    const std::size_t n_cols = t.header.size();
    if (n_cols < 2) throw InputError("need at least one feature column besides the label");
    if (t.rows.empty()) throw InputError("no data rows in " + path);

    Dataset ds;
    std::map<std::string, int> label_ids;
    for (const auto& name : class_order) {
        int id = static_cast<int>(ds.class_names.size());
        label_ids.emplace(name, id);
        ds.class_names.push_back(name);
    }

    const std::size_t d = n_cols - 1;
    ds.features = Tensor({t.rows.size(), d});
    ds.labels.reserve(t.rows.size());

    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& cells = t.rows[r];
        if (cells.size() != n_cols)
            throw InputError("row " + std::to_string(r + 2) + ": expected " +
                             std::to_string(n_cols) + " cells, got " +
                             std::to_string(cells.size()));
        std::size_t f = 0;
        for (std::size_t c = 0; c < n_cols; ++c) {
            if (c == label_idx) continue;
            double v;
            if (!csv::parse_double(cells[c], v))
                throw InputError("row " + std::to_string(r + 2) + ", column '" + t.header[c] +
                                 "': cannot parse '" + cells[c] + "' as a number");
            ds.features.at2(r, f++) = v;
        }
        const std::string& lab = cells[label_idx];
        auto it = label_ids.find(lab);
        if (it == label_ids.end()) {
            if (!class_order.empty())
                throw InputError("row " + std::to_string(r + 2) + ": label '" + lab +
                                 "' not in configured class_order");
            int id = static_cast<int>(ds.class_names.size());
            it = label_ids.emplace(lab, id).first;
            ds.class_names.push_back(lab);
        }
        ds.labels.push_back(it->second);
    }

    if (scaling == Scaling::MinMax) {
        const std::size_t n = ds.size();
        for (std::size_t f = 0; f < d; ++f) {
            double lo = ds.features.at2(0, f), hi = lo;
            for (std::size_t r = 1; r < n; ++r) {
                lo = std::min(lo, ds.features.at2(r, f));
                hi = std::max(hi, ds.features.at2(r, f));
            }
            const double range = hi - lo;
            for (std::size_t r = 0; r < n; ++r)
                ds.features.at2(r, f) = range > 0.0 ? (ds.features.at2(r, f) - lo) / range : 0.0;
        }
    }
    return ds;
}

/// Writes a dataset back out in the load_csv format (features then a final
/// label column). Doubles use 17 significant digits so load(save(ds)) == ds.
inline void save_csv(const Dataset& ds, const std::string& path,
                     const std::string& label_column = "label") {
    csv::Writer w(path);
    std::vector<std::string> header;
    for (std::size_t f = 0; f < ds.feature_count(); ++f)
        header.push_back("f" + std::to_string(f));
    header.push_back(label_column);
    w.row(header);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        std::vector<std::string> cells;
        for (std::size_t f = 0; f < ds.feature_count(); ++f)
            cells.push_back(csv::format_double(ds.features.at2(r, f)));
        cells.push_back(ds.class_names[static_cast<std::size_t>(ds.labels[r])]);
        w.row(cells);
    }
    w.save();
}

struct SplitResult {
    Dataset train;
    Dataset test;
    std::vector<std::string> warnings;
};

/// Train/test split. Non-stratified: |train| = round(fraction * n), clamped so
/// both sides stay nonempty. Stratified: the fraction applies per class with
/// the rounding residue going to train; a single-sample class goes to train
/// with a warning.
inline SplitResult split(const Dataset& ds, const SplitSpec& spec) {
    if (ds.size() < 2) throw InputError("split: need at least 2 samples");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("split: train_fraction must be in (0, 1)");

    SplitResult out;
    Rng rng(derive_seed(spec.seed, 0x73706c69ULL));
    std::vector<std::size_t> train_idx, test_idx;

    if (!spec.stratified) {
        std::vector<std::size_t> idx(ds.size());
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        std::size_t n_train = static_cast<std::size_t>(
            std::llround(spec.train_fraction * static_cast<double>(ds.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, ds.size() - 1);
        train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        test_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    } else {
        std::vector<std::vector<std::size_t>> by_class(ds.class_names.size());
        for (std::size_t i = 0; i < ds.size(); ++i)
            by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            auto& idx = by_class[c];
            if (idx.empty()) continue;
            if (idx.size() == 1) {
                out.warnings.push_back("class '" + ds.class_names[c] +
                                       "' has a single sample; assigned to train");
                train_idx.push_back(idx[0]);
                continue;
            }
            rng.shuffle(idx);
            const double exact = spec.train_fraction * static_cast<double>(idx.size());
            std::size_t n_train = static_cast<std::size_t>(std::ceil(exact - 1e-9));
            n_train = std::min(n_train, idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i)
                (i < n_train ? train_idx : test_idx).push_back(idx[i]);
        }
    }

    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    out.train = ds.subset(train_idx);
    out.test = ds.subset(test_idx);
    return out;
}

/// Gathers a feature batch plus labels for the given row indices.
inline std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& ds,
                                                        const std::vector<std::size_t>& idx) {
    const std::size_t d = ds.feature_count();
    Tensor x({idx.size(), d});
    std::vector<int> y(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(ds.features.values.begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d,
                    x.values.begin() + static_cast<std::ptrdiff_t>(r * d));
        y[r] = ds.labels[idx[r]];
    }
    return {std::move(x), std::move(y)};
}

}  // namespace fedprune
