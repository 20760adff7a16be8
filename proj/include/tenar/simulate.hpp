#pragma once

#include "tenar/model.hpp"
#include "tenar/series.hpp"
#include "tenar/types.hpp"

namespace tenar {

/// Innovation covariance families used by the simulation harness.
///  - Identity: standard normal entries.
///  - RandomDense: one random full covariance with |N(0,1)| eigenvalues
///    and a Haar-random eigenbasis.
///  - RandomSeparable: a Kronecker product of per-mode covariances,
///    each drawn as in RandomDense, normalized to the separable scale
///    convention.
enum class NoiseSetting { Identity, RandomDense, RandomSeparable };

NoiseSpec noise_cov(NoiseSetting setting, const Dims& dims, std::uint64_t seed);

/// Random model with the requested shape: factor entries are iid
/// N(0,1), the result is normalized, and a single scalar applied to
/// the last-mode factors rescales the process so the companion
/// spectral radius equals `rho` within 1e-6.  Noise is left at
/// Identity; callers attach a NoiseSpec as needed.
TenArModel random_model(const ModelSpec& spec, double rho, std::uint64_t seed);

/// Simulates T observations after discarding `burn_in` initial steps;
/// the presample state is zero.  Requires a causal model.
TensorSeries simulate_series(const TenArModel& m, Index T, std::uint64_t seed,
                             Index burn_in = 500);

/// One-step conditional mean given the most recent observations;
/// window[0] is the lag-1 observation, window[i] the lag-(i+1) one.
DenseTensor predict_one(const TenArModel& m,
                        std::span<const DenseTensor> window);

}  // namespace tenar
