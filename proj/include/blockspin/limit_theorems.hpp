#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "blockspin/model.hpp"
#include "blockspin/oracle.hpp"
#include "blockspin/stats.hpp"

namespace blockspin {

// ---------------------------------------------------------------------------
// High-temperature Gaussian limit: m_hat => N(0, (Id - G A G)^{-1}).
// ---------------------------------------------------------------------------

inline Mat limiting_covariance(const BlockModelSpec& spec, const BlockScaling& scaling) {
  const SpectralData sd = spectral(spec, scaling, SpectralProfile::Asymptotic);
  if (sd.regime != Regime::HighStrict)
    fail(Errc::NotHighTemperature, "limiting covariance requires op_norm < 1, got " + std::to_string(sd.op_norm));
  Vec inv(spec.k);
  for (int i = 0; i < spec.k; ++i) inv(i) = 1.0 / (1.0 - sd.eigenvalues(i));
  return sd.eigenvectors.transpose() * inv.asDiagonal() * sd.eigenvectors;
}

struct CovarianceReport {
  Mat sigma_inf;
  Mat sigma_n;
  double frobenius_gap = 0.0;
  std::string mode;                 // "exact" or "empirical"
  std::optional<Mat> sigma_n_se;    // empirical mode only
  std::optional<Mat> per_entry_z;   // empirical mode only
};

// Exact finite-n covariance from the oracle pmf.
inline CovarianceReport clt_check(const BlockModelSpec& spec, const BlockScaling& scaling,
                                  const MagnetizationPMF& pmf) {
  CovarianceReport r;
  r.mode = "exact";
  r.sigma_inf = limiting_covariance(spec, scaling);
  r.sigma_n = second_moment_matrix(pmf, spec);
  r.frobenius_gap = (r.sigma_n - r.sigma_inf).norm();
  return r;
}

// Empirical covariance from m_hat samples (rows), with delete-one-batch
// jackknife standard errors and per-entry z-scores against sigma_inf.
inline CovarianceReport clt_check(const BlockModelSpec& spec, const BlockScaling& scaling, const Mat& m_hat,
                                  std::size_t n_chains = 1, std::size_t batch_len = 50) {
  CovarianceReport r;
  r.mode = "empirical";
  r.sigma_inf = limiting_covariance(spec, scaling);
  const Eigen::Index n = m_hat.rows();
  if (n < 2) fail(Errc::InsufficientSamples, "need at least 2 samples");
  const int k = spec.k;

  const BatchLayout batches = make_batches(static_cast<std::size_t>(n), n_chains, batch_len);
  const std::size_t nb = batches.count();

  r.sigma_n.resize(k, k);
  r.sigma_n_se = Mat::Zero(k, k);
  r.per_entry_z = Mat::Zero(k, k);
  std::vector<double> prod(static_cast<std::size_t>(n));
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) {
      for (Eigen::Index i = 0; i < n; ++i) prod[static_cast<std::size_t>(i)] = m_hat(i, a) * m_hat(i, b);
      const double mean = pairwise_mean(prod);
      // Jackknife over batches of the mean statistic.
      std::vector<double> batch_sums(nb);
      for (std::size_t q = 0; q < nb; ++q)
        batch_sums[q] = pairwise_sum(
            std::span<const double>(prod).subspan(batches.begin[q], batches.begin[q + 1] - batches.begin[q]));
      const double total = pairwise_sum(batch_sums);
      const double se = jackknife_se(nb, [&](std::size_t drop) {
        const double cnt = static_cast<double>(n) -
                           static_cast<double>(batches.begin[drop + 1] - batches.begin[drop]);
        return (total - batch_sums[drop]) / cnt;
      });
      r.sigma_n(a, b) = r.sigma_n(b, a) = mean;
      (*r.sigma_n_se)(a, b) = (*r.sigma_n_se)(b, a) = se;
      const double z = (se > 0) ? (mean - r.sigma_inf(a, b)) / se : 0.0;
      (*r.per_entry_z)(a, b) = (*r.per_entry_z)(b, a) = z;
    }
  r.frobenius_gap = (r.sigma_n - r.sigma_inf).norm();
  return r;
}

// ---------------------------------------------------------------------------
// Critical scaling statistic w' = diag(N^{-1/2},...,N^{-1/2},N^{-3/4}) V m,
// uniform case with a simple top eigenvalue lambda_k = k. Rows of V are the
// eigenvectors of A, ascending eigenvalues, model-core sign convention.
// ---------------------------------------------------------------------------

struct CriticalTransform {
  Vec eigenvalues_a;  // eigenvalues of A itself, ascending; last ~ k
  Mat v;              // rows are eigenvectors of A
  double n_sites = 0;
};

namespace detail {

inline CriticalTransform critical_transform(const BlockModelSpec& spec, const BlockScaling& scaling) {
  if (!scaling.uniform()) fail(Errc::NotUniform, "critical statistics require the uniform case");
  const SpectralData sd = spectral(spec, scaling, SpectralProfile::Asymptotic);
  if (sd.regime != Regime::Critical)
    fail(Errc::NotCritical, "op_norm is " + std::to_string(sd.op_norm) + ", not 1");
  const int k = spec.k;
  CriticalTransform t;
  t.eigenvalues_a = static_cast<double>(k) * sd.eigenvalues;  // uniform case: Gamma A Gamma = A/k
  t.v = sd.eigenvectors;
  t.n_sites = static_cast<double>(spec.total_sites());
  if (k >= 2 && !(t.eigenvalues_a(k - 2) < static_cast<double>(k) - 1e-8))
    fail(Errc::NonSimpleTopEigenvalue, "top eigenvalue of A is not simple");
  return t;
}

}  // namespace detail

inline Vec critical_statistic(const BlockModelSpec& spec, const BlockScaling& scaling, const VecI& m) {
  const CriticalTransform t = detail::critical_transform(spec, scaling);
  Vec w = t.v * m.cast<double>();
  const double rt = std::sqrt(t.n_sites);
  for (int i = 0; i < spec.k - 1; ++i) w(i) /= rt;
  w(spec.k - 1) /= std::pow(t.n_sites, 0.75);
  return w;
}

// sigma^2 = k^3/12 * sum_i V_{ki}^4 with v_k the top eigenvector of A.
inline double critical_quartic_coefficient(int k, const Mat& v) {
  const double k3 = static_cast<double>(k) * k * k;
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += std::pow(v(k - 1, i), 4);
  return k3 / 12.0 * s;
}

struct MomentComparison {
  Vec sample;  // moments of order 1..4
  Vec se;      // batch-means standard errors
  Vec target;  // limit-density moments (mode dependent)
};

struct CriticalReport {
  Mat w_prime;        // one w' sample per row (noise added when convolved)
  Vec quad_coeffs;    // lambda_i - lambda_i^2/k, i < k
  double sigma2 = 0;  // quartic coefficient
  bool convolved = false;
  std::vector<MomentComparison> moments;  // per coordinate
  std::optional<double> ks_last;          // plain mode: KS of last coordinate vs quadrature CDF
};

namespace detail {

// CDF grid of the density ~ exp(-sigma2 x^4) by cumulative Simpson.
inline void quartic_cdf_grid(double sigma2, std::vector<double>& xs, std::vector<double>& fs) {
  const double half_width = std::pow(45.0 / sigma2, 0.25);  // exp(-45) tail mass is negligible
  const int nodes = 8192;                                   // even count of intervals
  xs.resize(nodes + 1);
  std::vector<double> w(nodes + 1);
  const double h = 2.0 * half_width / nodes;
  for (int i = 0; i <= nodes; ++i) {
    xs[static_cast<std::size_t>(i)] = -half_width + h * i;
    const double x = xs[static_cast<std::size_t>(i)];
    w[static_cast<std::size_t>(i)] = std::exp(-sigma2 * x * x * x * x);
  }
  fs.assign(nodes + 1, 0.0);
  for (int i = 2; i <= nodes; i += 2)
    fs[static_cast<std::size_t>(i)] =
        fs[static_cast<std::size_t>(i - 2)] +
        h / 3.0 * (w[static_cast<std::size_t>(i - 2)] + 4.0 * w[static_cast<std::size_t>(i - 1)] + w[static_cast<std::size_t>(i)]);
  for (int i = 1; i <= nodes; i += 2)
    fs[static_cast<std::size_t>(i)] = 0.5 * (fs[static_cast<std::size_t>(i - 1)] + fs[static_cast<std::size_t>(std::min(i + 1, nodes))]);
  const double z = fs[static_cast<std::size_t>(nodes)];
  for (auto& f : fs) f /= z;
}

}  // namespace detail

// Compares the first four marginal moments of w' (optionally convolved with
// Y ~ N(0, C_N^{-1}), C_N = diag(lambda_1..lambda_{k-1}, k sqrt(N))) against
// the limit density. No verdicts here; thresholds belong to callers/tests.
inline CriticalReport critical_check(const BlockModelSpec& spec, const BlockScaling& scaling,
                                     const Eigen::MatrixXi& m_samples, bool convolve,
                                     std::uint64_t noise_seed = 0xC0417A57ULL, std::size_t n_chains = 1,
                                     std::size_t batch_len = 50) {
  const CriticalTransform t = detail::critical_transform(spec, scaling);
  const int k = spec.k;
  const Eigen::Index n = m_samples.rows();
  if (n < 2) fail(Errc::InsufficientSamples, "need at least 2 samples");

  CriticalReport rep;
  rep.convolved = convolve;
  rep.quad_coeffs.resize(k - 1);
  for (int i = 0; i < k - 1; ++i) {
    rep.quad_coeffs(i) = t.eigenvalues_a(i) - t.eigenvalues_a(i) * t.eigenvalues_a(i) / k;
    if (!(rep.quad_coeffs(i) > 0.0)) fail(Errc::NonSimpleTopEigenvalue, "nonpositive quadratic coefficient");
  }
  rep.sigma2 = critical_quartic_coefficient(k, t.v);

  // Transform all samples.
  rep.w_prime.resize(n, k);
  const double rt = std::sqrt(t.n_sites);
  const double rt34 = std::pow(t.n_sites, 0.75);
  for (Eigen::Index s = 0; s < n; ++s) {
    Vec w = t.v * m_samples.row(s).transpose().cast<double>();
    for (int i = 0; i < k - 1; ++i) w(i) /= rt;
    w(k - 1) /= rt34;
    rep.w_prime.row(s) = w.transpose();
  }
  if (convolve) {
    std::mt19937_64 rng(stream_seed(noise_seed, 0));
    Vec noise_sd(k);
    for (int i = 0; i < k - 1; ++i) noise_sd(i) = std::sqrt(1.0 / t.eigenvalues_a(i));
    noise_sd(k - 1) = std::sqrt(1.0 / (k * std::sqrt(t.n_sites)));
    for (Eigen::Index s = 0; s < n; ++s)
      for (int i = 0; i < k; ++i) {
        // Box-Muller from explicit uniforms keeps the stream portable.
        const double u1 = uniform01(rng), u2 = uniform01(rng);
        const double z = std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
        rep.w_prime(s, i) += noise_sd(i) * z;
      }
  }

  // Targets: Gaussian coordinates have variance (k - lambda_j)^{-1}, plus
  // lambda_j^{-1} when convolved; the last coordinate follows the pure
  // quartic density, plus the vanishing 1/(k sqrt(N)) noise when convolved.
  const Mat quartic = quartic_gaussian_moments(rep.quad_coeffs, rep.sigma2);
  const double m2_quartic = quartic(quartic.rows() - 1, 1);
  const double m4_quartic = quartic(quartic.rows() - 1, 3);

  const BatchLayout batches = make_batches(static_cast<std::size_t>(n), n_chains, batch_len);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (int i = 0; i < k; ++i) {
    MomentComparison mc;
    mc.sample.resize(4);
    mc.se.resize(4);
    mc.target = Vec::Zero(4);
    for (int p = 1; p <= 4; ++p) {
      for (Eigen::Index s = 0; s < n; ++s) col[static_cast<std::size_t>(s)] = std::pow(rep.w_prime(s, i), p);
      mc.sample(p - 1) = pairwise_mean(col);
      mc.se(p - 1) = batch_means_se(col, batches);
    }
    if (i < k - 1) {
      double var = 1.0 / (static_cast<double>(k) - t.eigenvalues_a(i));
      if (convolve) var += 1.0 / t.eigenvalues_a(i);
      mc.target(1) = var;
      mc.target(3) = 3.0 * var * var;
    } else {
      double m2 = m2_quartic, m4 = m4_quartic;
      if (convolve) {
        const double w = 1.0 / (k * std::sqrt(t.n_sites));
        m4 = m4_quartic + 6.0 * m2_quartic * w + 3.0 * w * w;
        m2 = m2_quartic + w;
      }
      mc.target(1) = m2;
      mc.target(3) = m4;
    }
    rep.moments.push_back(std::move(mc));
  }

  if (!convolve) {
    std::vector<double> xs, fs;
    detail::quartic_cdf_grid(rep.sigma2, xs, fs);
    std::vector<double> last(static_cast<std::size_t>(n));
    for (Eigen::Index s = 0; s < n; ++s) last[static_cast<std::size_t>(s)] = rep.w_prime(s, k - 1);
    rep.ks_last = ks_statistic(std::move(last), xs, fs);
  }
  return rep;
}

}  // namespace blockspin
