#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "divas/block.hpp"
#include "divas/core.hpp"
#include "divas/mp.hpp"
#include "divas/shrinkage.hpp"
#include "divas/svd.hpp"

namespace divas {

/// Residual estimator whose energy in the estimated-signal directions has
/// been re-drawn from the matching bulk law. Shares singular vectors with
/// the data: the first r_hat directions carry imputed values, the rest carry
/// the raw spectrum untouched.
struct ImputedNoise {
  Matrix values;              // d x n
  Index imputed_count = 0;    // r_hat
  std::vector<double> draws;  // imputed singular values, one per direction
};

/// Replaces the deficient leading singular values of the naive residual with
/// draws from the bulk law. Draws are made in eigenvalue scale and converted
/// back: nu_imp = sigma_hat * sqrt((d OR n) * lambda) with lambda a quantile
/// of MP(beta) at unit variance. With stratified = true the uniforms come
/// from a shuffled stratified grid instead of iid draws.
inline ImputedNoise impute_noise(const DataBlock& block, const SignalEstimate& est, Rng& rng,
                                 bool stratified = false) {
  const Index d = block.traits(), n = block.objects();
  require(est.raw_singulars.size() == std::min(d, n), "impute_noise: estimate does not match block");

  ImputedNoise out;
  out.imputed_count = est.r_hat;
  if (est.r_hat == 0) {
    out.values = block.values;  // nothing to impute
    return out;
  }

  const MPLaw law{est.aspect_beta, 1.0};
  const double scale = est.sigma_hat * est.sigma_hat * static_cast<double>(std::max(d, n));

  std::vector<double> uniforms(static_cast<std::size_t>(est.r_hat));
  if (stratified) {
    const auto r = static_cast<double>(est.r_hat);
    for (Index i = 0; i < est.r_hat; ++i)
      uniforms[static_cast<std::size_t>(i)] = (static_cast<double>(i) + rng.uniform()) / r;
    for (Index i = est.r_hat - 1; i > 0; --i) {
      const auto j = static_cast<Index>(rng.uniform() * static_cast<double>(i + 1));
      std::swap(uniforms[static_cast<std::size_t>(i)],
                uniforms[static_cast<std::size_t>(std::min(j, i))]);
    }
  } else {
    for (auto& u : uniforms) u = rng.uniform();
  }

  // E_impute = X - sum_{i<=r_hat} (nu_i - nu_imp_i) u_i v_i^T, which equals
  // swapping the leading singular values and keeping the rest verbatim.
  out.values = block.values;
  out.draws.resize(static_cast<std::size_t>(est.r_hat));
  for (Index i = 0; i < est.r_hat; ++i) {
    const double lambda = mp_quantile(law, uniforms[static_cast<std::size_t>(i)]);
    const double nu_imp = std::sqrt(scale * lambda);
    out.draws[static_cast<std::size_t>(i)] = nu_imp;
    const double delta = est.raw_singulars(i) - nu_imp;
    out.values.noalias() -= delta * est.u_hat.col(i) * est.v_hat.col(i).transpose();
  }
  return out;
}

/// Plottable acceptance region for residual spectra: per-rank min/max bands
/// of the sorted unit-variance noise eigenvalues over simulated traces, plus
/// the theoretical quantile curve.
struct QQEnvelope {
  Vector theoretical;  // MP quantiles at (i + 0.5) / m, ascending
  Vector env_min;      // per-rank min over traces
  Vector env_max;      // per-rank max over traces
  int traces = 0;
};

/// Sorted eigenvalues (ascending) of the scaled Gram matrix of m, on the
/// unit-variance comparison scale lambda_i = nu_i^2 / (sigma^2 * (d OR n)).
inline Vector observed_qq_eigenvalues(const Matrix& m, double sigma) {
  require(sigma > 0.0, "observed_qq_eigenvalues: sigma must be positive");
  const double denom = sigma * sigma * static_cast<double>(std::max(m.rows(), m.cols()));
  Vector s = singular_values(m);
  Vector out(s.size());
  for (Index i = 0; i < s.size(); ++i) out(s.size() - 1 - i) = s(i) * s(i) / denom;
  return out;
}

inline QQEnvelope qq_envelope(double beta, Index spectrum_len, double sigma, int n_traces, Rng& rng) {
  require(beta > 0.0 && beta <= 1.0, "qq_envelope: beta must be in (0, 1]");
  require(spectrum_len >= 2, "qq_envelope: spectrum_len must be >= 2");
  require(n_traces >= 1, "qq_envelope: need at least one trace");

  QQEnvelope env;
  env.traces = n_traces;
  const MPLaw law{beta, 1.0};
  env.theoretical.resize(spectrum_len);
  for (Index i = 0; i < spectrum_len; ++i)
    env.theoretical(i) =
        mp_quantile(law, (static_cast<double>(i) + 0.5) / static_cast<double>(spectrum_len));

  const Index small_dim = spectrum_len;
  const auto large_dim =
      static_cast<Index>(std::lround(static_cast<double>(spectrum_len) / beta));

  Matrix per_trace(spectrum_len, n_traces);
  parallel_for(n_traces, [&](Index t) {
    Rng local = rng.child(static_cast<std::uint64_t>(t) + 1000);
    Matrix e = local.gaussian_matrix(small_dim, large_dim) * sigma;
    per_trace.col(t) = observed_qq_eigenvalues(e, sigma);
  });

  env.env_min = per_trace.rowwise().minCoeff();
  env.env_max = per_trace.rowwise().maxCoeff();
  return env;
}

}  // namespace divas
