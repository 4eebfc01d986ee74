#pragma once

#include <cstdint>
#include <string>

#include "fedprune/errors.hpp"
#include "fedprune/nn.hpp"

namespace fedprune {

/// Energy accounting constants. E_access is picojoules per megabyte of model
/// size with MB = 2^20 bytes; that reading reproduces the published energy
/// figures, the alternatives do not.
struct EnergyConstants {
    double e_flop_pj = 2.3;
    double e_access_pj_per_mb = 640.0;
    double bytes_per_param = 4.0;
};

/// Analytic complexity profile of a model at a given pruning ratio. NP and
/// FLOPs become real-valued once scaled by (1 - rho); they are modeling
/// quantities, not allocation counts.
struct CostProfile {
    double params = 0.0;  // NP, weights only
    double flops = 0.0;
    double rho = 0.0;

    double model_size_bytes(const EnergyConstants& c) const { return params * c.bytes_per_param; }
};

/// NP = sum conv K*Cin*Cout + sum dense Nin*Nout. Biases excluded.
inline std::uint64_t count_params(const Architecture& arch) {
    const Architecture r = arch.resolved();
    std::uint64_t np = 0;
    for (const LayerSpec& l : r.layers) {
        if (l.kind == LayerKind::Conv1D)
            np += static_cast<std::uint64_t>(l.kernel) * l.in_channels * l.out_channels;
        else if (l.kind == LayerKind::Dense)
            np += static_cast<std::uint64_t>(l.n_in) * l.n_out;
    }
    return np;
}

/// FLOPs for one inference pass, counting multiplications and additions:
/// conv layer i contributes 2*K*Cin*Lout*Cout, dense layer j 2*Nin*Nout,
/// activations are free. `multi_add` halves the totals (one multiply-add
/// counted as a single operation).
inline std::uint64_t count_flops(const Architecture& arch, int input_length,
                                 bool multi_add = false) {
    Architecture a = arch;
    a.input_length = input_length;
    const Architecture r = a.resolved();  // also validates the length
    std::uint64_t flops = 0;
    std::uint64_t length = static_cast<std::uint64_t>(input_length);
    for (const LayerSpec& l : r.layers) {
        if (l.kind == LayerKind::Conv1D) {
            const std::uint64_t l_out = length - static_cast<std::uint64_t>(l.kernel) + 1;
            flops += 2ull * l.kernel * l.in_channels * l_out * l.out_channels;
            length = l_out;
        } else if (l.kind == LayerKind::Dense) {
            flops += 2ull * l.n_in * l.n_out;
        }
    }
    return multi_add ? flops / 2 : flops;
}

inline CostProfile unpruned_profile(const Architecture& arch) {
    CostProfile p;
    p.params = static_cast<double>(count_params(arch));
    p.flops = static_cast<double>(count_flops(arch, arch.input_length));
    p.rho = 0.0;
    return p;
}

/// Scales NP and FLOPs by (1 - rho); size and energy follow from those.
inline CostProfile pruned_profile(const CostProfile& profile, double rho) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("pruned_profile: rho must be in [0, 1)");
    CostProfile p = profile;
    p.params = (1.0 - rho) * profile.params;
    p.flops = (1.0 - rho) * profile.flops;
    p.rho = rho;
    return p;
}

/// Inference energy in picojoules:
///   FLOPs * E_FLOP + (NP * B / 2^20) * E_access.
inline double energy_pj(const CostProfile& profile, const EnergyConstants& c = {}) {
    if (c.e_flop_pj <= 0.0 || c.e_access_pj_per_mb <= 0.0 || c.bytes_per_param <= 0.0)
        throw ConfigError("energy constants must be positive");
    const double size_mb = profile.model_size_bytes(c) / 1048576.0;
    return profile.flops * c.e_flop_pj + size_mb * c.e_access_pj_per_mb;
}

}  // namespace fedprune
