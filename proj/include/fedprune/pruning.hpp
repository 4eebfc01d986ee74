#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "fedprune/errors.hpp"
#include "fedprune/nn.hpp"

namespace fedprune {

/// Binary keep/prune mask congruent with a model's weight tensors. Bits are
/// stored as 0/1 doubles so masking is a plain elementwise product. Biases
/// have no mask; they are never pruned.
struct PruneMask {
    std::vector<Tensor> bits;
    double rho = 0.0;
    std::size_t kept_count = 0;

    std::size_t weight_count() const {
        std::size_t n = 0;
        for (const Tensor& t : bits) n += t.size();
        return n;
    }

    static PruneMask all_ones(const ModelParams& model) {
        PruneMask m;
        for (const Tensor& w : model.weights) m.bits.emplace_back(w.shape, 1.0);
        m.rho = 0.0;
        m.kept_count = model.weight_count();
        return m;
    }
};

/// Per-weight importance scores over the global weight index space.
struct ImportanceVector {
    std::vector<double> scores;
    enum class Method { Exact, L1 } method = Method::L1;
};

/// Squared loss change from zeroing each weight in turn: the reference
/// importance measure. Quadratic in the weight count, so intended as a test
/// oracle for small models only; the model is restored bitwise after probing.
inline ImportanceVector importance_exact(ModelParams& model, const Dataset& ds) {
    if (ds.size() == 0) throw InputError("importance_exact: empty dataset");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto [x, y] = gather_batch(ds, idx);

    const double base = loss_and_grads(model, x, y).loss;
    ImportanceVector iv;
    iv.method = ImportanceVector::Method::Exact;
    iv.scores.resize(model.weight_count());
    for (std::size_t j = 0; j < model.weight_count(); ++j) {
        const double saved = model.get_weight(j);
        model.set_weight(j, 0.0);
        const double probed = loss_and_grads(model, x, y).loss;
        model.set_weight(j, saved);
        const double diff = base - probed;
        iv.scores[j] = diff * diff;
    }
    return iv;
}

/// Magnitude importance |w_j|: the production proxy for the exact measure.
inline ImportanceVector importance_l1(const ModelParams& model) {
    ImportanceVector iv;
    iv.method = ImportanceVector::Method::L1;
    iv.scores.reserve(model.weight_count());
    for (const Tensor& w : model.weights)
        for (double v : w.values) iv.scores.push_back(std::fabs(v));
    return iv;
}

/// Builds the one-shot mask: exactly floor(rho * NP) zeros on the lowest
/// scores, ranked globally across all weight tensors. Score ties keep the
/// lower global index (so the zeros land on the higher indices).
inline PruneMask build_mask(const ImportanceVector& importance, double rho,
                            const ModelParams& model) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("build_mask: rho must be in [0, 1)");
    const std::size_t np = importance.scores.size();
    if (np != model.weight_count())
        throw InternalError("build_mask: importance length does not match model");

    const std::size_t n_prune = static_cast<std::size_t>(rho * static_cast<double>(np));
    PruneMask mask = PruneMask::all_ones(model);
    mask.rho = rho;
    mask.kept_count = np - n_prune;
    if (n_prune == 0) return mask;

    std::vector<std::size_t> order(np);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (importance.scores[a] != importance.scores[b])
            return importance.scores[a] < importance.scores[b];
        return a > b;  // equal scores: prune the higher index first
    });
    for (std::size_t r = 0; r < n_prune; ++r) {
        auto [p, off] = model.locate(order[r]);
        mask.bits[p][off] = 0.0;
    }
    return mask;
}

/// w <- w * m elementwise; biases untouched. Idempotent.
inline void apply_mask(ModelParams& model, const PruneMask& mask) {
    if (mask.bits.size() != model.weights.size())
        throw InternalError("apply_mask: mask not congruent with model");
    for (std::size_t p = 0; p < model.weights.size(); ++p) {
        if (!mask.bits[p].same_shape(model.weights[p]))
            throw InternalError("apply_mask: shape mismatch at tensor " + std::to_string(p));
        for (std::size_t i = 0; i < model.weights[p].size(); ++i)
            model.weights[p][i] *= mask.bits[p][i];
    }
}

/// Kept-weight count: NP - floor(rho * NP).
inline std::size_t remaining_weights(const PruneMask& mask) { return mask.kept_count; }

/// Zeroes gradients of pruned coordinates so an optimizer step cannot
/// resurrect them.
inline void mask_grads(ModelGrads& grads, const PruneMask& mask) {
    for (std::size_t p = 0; p < grads.weights.size(); ++p)
        for (std::size_t i = 0; i < grads.weights[p].size(); ++i)
            grads.weights[p][i] *= mask.bits[p][i];
}

/// Clears Adam moments of pruned coordinates. Called once when the mask is
/// first applied: stale momentum on a pruned weight would otherwise keep
/// moving it off zero even with masked gradients.
inline void mask_adam_moments(AdamState& state, const PruneMask& mask) {
    for (std::size_t p = 0; p < state.m_w.size(); ++p)
        for (std::size_t i = 0; i < state.m_w[p].size(); ++i) {
            state.m_w[p][i] *= mask.bits[p][i];
            state.v_w[p][i] *= mask.bits[p][i];
        }
}

// ---------------------------------------------------------------------------
// Mask wire format: transmitted to the server once, during the first round.
// Header (little-endian): magic "FPMK", u32 version, u64 NP, f64 rho,
// u32 tensor count, u64 per-tensor offsets; then ceil(NP/8) bytes of bits in
// global index order, LSB first within each byte.
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> serialize_mask(const PruneMask& mask) {
    const std::size_t np = mask.weight_count();
    std::vector<std::uint8_t> out;
    auto put = [&out](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    };
    out.insert(out.end(), {'F', 'P', 'M', 'K'});
    const std::uint32_t version = 1;
    put(&version, 4);
    const std::uint64_t np64 = np;
    put(&np64, 8);
    put(&mask.rho, 8);
    const std::uint32_t tensors = static_cast<std::uint32_t>(mask.bits.size());
    put(&tensors, 4);
    std::uint64_t off = 0;
    for (const Tensor& t : mask.bits) {
        put(&off, 8);
        off += t.size();
    }
    std::vector<std::uint8_t> packed((np + 7) / 8, 0);
    std::size_t j = 0;
    for (const Tensor& t : mask.bits)
        for (double v : t.values) {
            if (v != 0.0) packed[j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
            ++j;
        }
    out.insert(out.end(), packed.begin(), packed.end());
    return out;
}

/// Inverse of serialize_mask; the model supplies the tensor shapes.
inline PruneMask deserialize_mask(const std::vector<std::uint8_t>& blob,
                                  const ModelParams& model) {
    auto fail = [] { throw InputError("mask blob: malformed or truncated"); };
    std::size_t pos = 0;
    auto get = [&](void* p, std::size_t n) {
        if (pos + n > blob.size()) throw InputError("mask blob: malformed or truncated");
        std::memcpy(p, blob.data() + pos, n);
        pos += n;
    };
    if (blob.size() < 4 || std::memcmp(blob.data(), "FPMK", 4) != 0) fail();
    pos = 4;
    std::uint32_t version = 0;
    get(&version, 4);
    if (version != 1) throw InputError("mask blob: unsupported version");
    std::uint64_t np = 0;
    get(&np, 8);
    if (np != model.weight_count()) throw InputError("mask blob: weight count mismatch");
    PruneMask mask;
    get(&mask.rho, 8);
    std::uint32_t tensors = 0;
    get(&tensors, 4);
    if (tensors != model.weights.size()) throw InputError("mask blob: tensor count mismatch");
    for (std::uint32_t t = 0; t < tensors; ++t) {
        std::uint64_t off = 0;
        get(&off, 8);
        if (off != model.weight_offsets[t]) throw InputError("mask blob: offset mismatch");
    }
    std::size_t j = 0;
    std::size_t kept = 0;
    for (const Tensor& w : model.weights) {
        Tensor bits(w.shape);
        for (std::size_t i = 0; i < bits.size(); ++i, ++j) {
            if (pos + j / 8 >= blob.size()) fail();
            const bool on = (blob[pos + j / 8] >> (j % 8)) & 1u;
            bits[i] = on ? 1.0 : 0.0;
            kept += on ? 1 : 0;
        }
        mask.bits.push_back(std::move(bits));
    }
    mask.kept_count = kept;
    return mask;
}

inline void write_mask_file(const PruneMask& mask, const std::string& path) {
    const auto blob = serialize_mask(mask);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write mask file: " + path);
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
}

}  // namespace fedprune
