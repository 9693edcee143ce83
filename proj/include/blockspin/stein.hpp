#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "blockspin/model.hpp"
#include "blockspin/oracle.hpp"
#include "blockspin/sampler.hpp"
#include "blockspin/stats.hpp"

namespace blockspin {

// ---------------------------------------------------------------------------
// Exchangeable-pair regression: E(m_hat - m_hat' | F) = Lambda m_hat + R(X)
// with Lambda = N^{-1}(Id - Gamma_n A Gamma_n). All finite-n quantities here
// use the finite-n profile.
// ---------------------------------------------------------------------------

struct RegressionMatrix {
  Mat lambda;
  Mat lambda_inv;
  Vec row_sums;  // lambda(i) = sum_m |(Lambda^{-1})_{m,i}|
  double op_norm_finite = 0.0;
};

inline RegressionMatrix regression_matrix(const BlockModelSpec& spec, const BlockScaling& scaling) {
  const SpectralData sd = spectral(spec, scaling, SpectralProfile::FiniteN);
  if (!(sd.op_norm < 1.0))
    fail(Errc::NotInvertible, "finite-n operator norm is " + std::to_string(sd.op_norm) + " >= 1");
  const double n = static_cast<double>(spec.total_sites());
  RegressionMatrix r;
  r.op_norm_finite = sd.op_norm;
  r.lambda = (Mat::Identity(spec.k, spec.k) - sd.matrix) / n;
  Vec inv(spec.k);
  for (int i = 0; i < spec.k; ++i) inv(i) = n / (1.0 - sd.eigenvalues(i));
  r.lambda_inv = sd.eigenvectors.transpose() * inv.asDiagonal() * sd.eigenvectors;
  r.row_sums.resize(spec.k);
  for (int i = 0; i < spec.k; ++i) r.row_sums(i) = r.lambda_inv.col(i).array().abs().sum();
  return r;
}

// ---------------------------------------------------------------------------
// Closed-form conditional statistics of one Glauber step given X. Everything
// depends on the configuration only through m, so per-sample work is O(k^2):
//   phi_i = E((m_hat_i - m_hat_i')^2 | F)
//   psi_i = E(|m_hat_i - m_hat_i'|^3 | F)
//   r_i   = remainder R_i(X)
// ---------------------------------------------------------------------------

struct ConditionalStats {
  Vec phi;
  Vec psi;
  Vec r;
};

inline ConditionalStats conditional_stats(const BlockModelSpec& spec, const VecI& m) {
  const int k = spec.k;
  const double n = static_cast<double>(spec.total_sites());
  ConditionalStats cs;
  cs.phi.resize(k);
  cs.psi.resize(k);
  cs.r.resize(k);

  Vec am(k);
  for (int b = 0; b < k; ++b) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += spec.A(b, j) * static_cast<double>(m(j));
    am(b) = s;
  }
  // (Gamma A Gamma m_hat)_b with the finite-n profile equals (A m)_b * sqrt(B_b)/N.
  for (int b = 0; b < k; ++b) {
    const double bb = static_cast<double>(spec.block_sizes[static_cast<std::size_t>(b)]);
    const double c = am(b) / n;
    const double d = spec.A(b, b) / n;
    const double n_plus = 0.5 * (static_cast<double>(m(b)) + bb);
    const double n_minus = bb - n_plus;
    const double tp = std::tanh(c - d);  // sites currently +1
    const double tm = std::tanh(c + d);  // sites currently -1
    const double t_sum = n_plus * tp - n_minus * tm;   // sum_j X_j tanh(g_j)
    const double s_sum = n_plus * tp + n_minus * tm;   // sum_j tanh(g_j)
    cs.phi(b) = 2.0 / n - 2.0 * t_sum / (n * bb);
    cs.psi(b) = 4.0 / (n * bb * std::sqrt(bb)) * (n_plus * (1.0 - tp) + n_minus * (1.0 + tm));
    // (Gamma_n A Gamma_n m_hat)_b = (A m)_b sqrt(B_b) / N since gamma_j m_hat_j = m_j/sqrt(N).
    const double gag_mhat = am(b) * std::sqrt(bb) / n;
    cs.r(b) = (gag_mhat - s_sum / std::sqrt(bb)) / n;
  }
  return cs;
}

// R(X) as a vector; exact evaluation through the block counts (the finite-n
// profile is implied by the model's own block sizes).
inline Vec remainder_R(const BlockModelSpec& spec, const SpinConfiguration& x) {
  const MagnetizationView v = magnetizations(spec, x);
  return conditional_stats(spec, v.m).r;
}

// ---------------------------------------------------------------------------
// Error terms E1, E2, E3 estimated over Glauber samples. E1 and E2 use the
// closed-form conditional moments (no nested simulation); E3 is the sample
// standard deviation of R. Standard errors come from a delete-one-batch
// jackknife with 50-sweep batches.
// ---------------------------------------------------------------------------

struct SteinErrorReport {
  int n_sites = 0;
  double e1 = 0, e2 = 0, e3 = 0;
  double se1 = 0, se2 = 0, se3 = 0;
  Vec lambda_inv_row_sums;
  std::int64_t n_samples = 0;
  double e2_envelope = 0;       // sum_i 8 N^{-1} |B_i|^{-1/2}, an exact ceiling
  bool e2_within_envelope = false;
  double lambda_row_sum_ratio = 1.0;  // max/min, meaningful in the uniform constant-row-sum case
};

namespace detail {

struct BlockSums {
  // Per batch and block: sums and squared sums of phi and r, sums of psi.
  std::vector<Vec> phi1, phi2, r1, r2, psi1;
  std::vector<std::int64_t> count;
};

inline double leave_out_variance(double s1, double s2, double cnt) {
  if (cnt < 2.0) return 0.0;
  const double v = (s2 - s1 * s1 / cnt) / (cnt - 1.0);
  return v > 0.0 ? v : 0.0;
}

}  // namespace detail

inline SteinErrorReport error_terms(const BlockModelSpec& spec, const BlockScaling& scaling,
                                    const SamplerConfig& cfg) {
  const SpectralData asym = spectral(spec, scaling, SpectralProfile::Asymptotic);
  if (asym.regime != Regime::HighStrict)
    fail(Errc::NotHighTemperature, "error terms are defined in the strict high temperature regime");
  const std::int64_t total = static_cast<std::int64_t>(cfg.n_chains) * cfg.n_samples;
  if (total < 100) fail(Errc::InsufficientSamples, "need at least 100 samples");

  const RegressionMatrix reg = regression_matrix(spec, scaling);
  const int k = spec.k;
  const double n = static_cast<double>(spec.total_sites());

  // Batches of ~50 sweeps, never straddling chains.
  const std::size_t batch_len = static_cast<std::size_t>(std::max(1, 50 / cfg.thinning));
  const BatchLayout batches =
      make_batches(static_cast<std::size_t>(total), static_cast<std::size_t>(cfg.n_chains), batch_len);
  const std::size_t nb = batches.count();

  detail::BlockSums bs;
  bs.phi1.assign(nb, Vec::Zero(k));
  bs.phi2.assign(nb, Vec::Zero(k));
  bs.r1.assign(nb, Vec::Zero(k));
  bs.r2.assign(nb, Vec::Zero(k));
  bs.psi1.assign(nb, Vec::Zero(k));
  bs.count.assign(nb, 0);

  std::int64_t row = 0;
  std::size_t cur_batch = 0;
  run_chains(spec, cfg, [&](int, int, const VecI& m) {
    while (cur_batch + 1 < nb && static_cast<std::size_t>(row) >= batches.begin[cur_batch + 1]) ++cur_batch;
    const ConditionalStats cs = conditional_stats(spec, m);
    bs.phi1[cur_batch] += cs.phi;
    bs.phi2[cur_batch] += cs.phi.cwiseProduct(cs.phi);
    bs.r1[cur_batch] += cs.r;
    bs.r2[cur_batch] += cs.r.cwiseProduct(cs.r);
    bs.psi1[cur_batch] += cs.psi;
    ++bs.count[cur_batch];
    ++row;
  });

  Vec phi1 = Vec::Zero(k), phi2 = Vec::Zero(k), r1 = Vec::Zero(k), r2 = Vec::Zero(k), psi1 = Vec::Zero(k);
  for (std::size_t b = 0; b < nb; ++b) {
    phi1 += bs.phi1[b];
    phi2 += bs.phi2[b];
    r1 += bs.r1[b];
    r2 += bs.r2[b];
    psi1 += bs.psi1[b];
  }

  const double cnt = static_cast<double>(total);
  auto e1_of = [&](std::size_t drop) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
      const double d1 = (drop == SIZE_MAX) ? 0.0 : bs.phi1[drop](i);
      const double d2 = (drop == SIZE_MAX) ? 0.0 : bs.phi2[drop](i);
      const double dc = (drop == SIZE_MAX) ? 0.0 : static_cast<double>(bs.count[drop]);
      s += std::sqrt(detail::leave_out_variance(phi1(i) - d1, phi2(i) - d2, cnt - dc));
    }
    return s;
  };
  auto e3_of = [&](std::size_t drop) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
      const double d1 = (drop == SIZE_MAX) ? 0.0 : bs.r1[drop](i);
      const double d2 = (drop == SIZE_MAX) ? 0.0 : bs.r2[drop](i);
      const double dc = (drop == SIZE_MAX) ? 0.0 : static_cast<double>(bs.count[drop]);
      s += std::sqrt(detail::leave_out_variance(r1(i) - d1, r2(i) - d2, cnt - dc));
    }
    return s;
  };
  auto e2_of = [&](std::size_t drop) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
      const double d1 = (drop == SIZE_MAX) ? 0.0 : bs.psi1[drop](i);
      const double dc = (drop == SIZE_MAX) ? 0.0 : static_cast<double>(bs.count[drop]);
      s += (psi1(i) - d1) / (cnt - dc);
    }
    return s;
  };

  SteinErrorReport rep;
  rep.n_sites = spec.total_sites();
  rep.n_samples = total;
  rep.e1 = e1_of(SIZE_MAX);
  rep.e2 = e2_of(SIZE_MAX);
  rep.e3 = e3_of(SIZE_MAX);
  rep.se1 = jackknife_se(nb, e1_of);
  rep.se2 = jackknife_se(nb, e2_of);
  rep.se3 = jackknife_se(nb, e3_of);
  rep.lambda_inv_row_sums = reg.row_sums;
  rep.lambda_row_sum_ratio = reg.row_sums.maxCoeff() / reg.row_sums.minCoeff();

  rep.e2_envelope = 0.0;
  for (int i = 0; i < k; ++i)
    rep.e2_envelope += 8.0 / (n * std::sqrt(static_cast<double>(spec.block_sizes[static_cast<std::size_t>(i)])));
  rep.e2_within_envelope = rep.e2 <= rep.e2_envelope;
  return rep;
}

// ---------------------------------------------------------------------------
// Scaling sweep: run error_terms along an N ladder with fixed block
// proportions and fit log max(E_i) against log N by weighted least squares.
// ---------------------------------------------------------------------------

struct RateSweepResult {
  std::vector<SteinErrorReport> reports;
  LineFit max_e;    // slope of log max(E1,E2,E3) vs log N
  LineFit n_max_e;  // slope of log(N * max E_i) vs log N
};

// Largest-remainder apportionment of N among the template's proportions.
inline std::vector<int> apportion_sizes(const BlockModelSpec& spec_template, int n_sites) {
  const double n0 = static_cast<double>(spec_template.total_sites());
  const int k = spec_template.k;
  std::vector<int> sizes(static_cast<std::size_t>(k));
  std::vector<std::pair<double, int>> rem;
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    const double exact = static_cast<double>(n_sites) * spec_template.block_sizes[static_cast<std::size_t>(i)] / n0;
    sizes[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact));
    assigned += sizes[static_cast<std::size_t>(i)];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int j = 0; j < n_sites - assigned; ++j) ++sizes[static_cast<std::size_t>(rem[static_cast<std::size_t>(j)].second)];
  for (int i = 0; i < k; ++i)
    if (sizes[static_cast<std::size_t>(i)] < 1) fail(Errc::EmptyBlock, "apportioned block would be empty");
  return sizes;
}

inline RateSweepResult rate_sweep(const BlockModelSpec& spec_template, const std::vector<int>& n_list,
                                  const SamplerConfig& cfg) {
  if (n_list.size() < 4) fail(Errc::InvalidArgument, "need at least 4 system sizes");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1]) fail(Errc::InvalidArgument, "system sizes must be ascending");

  RateSweepResult out;
  std::vector<double> t, y_max, sig_max;
  for (int n_sites : n_list) {
    BlockModelSpec sp = spec_template;
    sp.block_sizes = apportion_sizes(spec_template, n_sites);
    sp.gamma_inf_override = spec_template.gamma_inf_override;
    const BlockScaling scal = validate_spec(sp);
    SamplerConfig c = cfg;
    c.seed = stream_seed(cfg.seed, static_cast<std::uint64_t>(n_sites));
    SteinErrorReport rep = error_terms(sp, scal, c);
    // Which term attains the max determines the SE we propagate into the fit.
    double mx = rep.e1, se = rep.se1;
    if (rep.e2 > mx) { mx = rep.e2; se = rep.se2; }
    if (rep.e3 > mx) { mx = rep.e3; se = rep.se3; }
    t.push_back(std::log(static_cast<double>(n_sites)));
    y_max.push_back(std::log(mx));
    sig_max.push_back(se / mx);  // delta method for log
    out.reports.push_back(std::move(rep));
  }
  out.max_e = weighted_line_fit(t, y_max, sig_max);
  std::vector<double> y_n(y_max.size());
  for (std::size_t i = 0; i < y_max.size(); ++i) y_n[i] = y_max[i] + t[i];
  out.n_max_e = weighted_line_fit(t, y_n, sig_max);
  return out;
}

// ---------------------------------------------------------------------------
// Smooth-function distance sup_h |E h(m_hat) - E h(Sigma_n^{1/2} Z)| over a
// fixed suite of C^3 functions with all partial derivatives (orders 1..3)
// bounded by 1. The suite max is a lower bound on the true sup.
// ---------------------------------------------------------------------------

struct TestFunction {
  std::string name;
  std::function<double(const Vec&)> fn;
};

// Versioned list (f3-v1); derivative bounds are noted per entry.
inline std::vector<TestFunction> builtin_f3_suite(int k) {
  std::vector<TestFunction> fs;
  auto linear_combo = [k](Vec a, const char* name, bool use_sin, double phase = 0.0) {
    return TestFunction{name, [a = std::move(a), use_sin, phase](const Vec& x) {
      const double s = a.dot(x) + phase;
      return use_sin ? std::sin(s) : std::cos(s);
    }};
  };
  // sin/cos of <a,x> with |a_i| <= 1: every mixed partial is bounded by prod |a_i| <= 1.
  fs.push_back(linear_combo(Vec::Ones(k), "sin_sum", true));
  fs.push_back(linear_combo(Vec::Ones(k), "cos_sum", false));
  {
    Vec a(k);
    for (int i = 0; i < k; ++i) a(i) = (i % 2 == 0) ? 1.0 : -1.0;
    fs.push_back(linear_combo(a, "sin_alternating", true));
  }
  {
    Vec a(k);
    for (int i = 0; i < k; ++i) a(i) = std::pow(0.5, i + 1);
    fs.push_back(linear_combo(a, "cos_geometric", false));
  }
  {
    Vec a = Vec::Zero(k);
    a(0) = 1.0;
    fs.push_back(linear_combo(a, "sin_first", true));
    fs.push_back(linear_combo(a, "cos_first", false));
  }
  {
    Vec a(k);
    for (int i = 0; i < k; ++i) a(i) = static_cast<double>(i + 1) / k;
    fs.push_back(linear_combo(a, "cos_weighted", false));
  }
  fs.push_back(linear_combo(Vec::Constant(k, 0.5), "sin_half_shifted", true, 1.0));
  // prod cos(x_i): partials again bounded by 1.
  fs.push_back({"prod_cos", [k](const Vec& x) {
                  double p = 1.0;
                  for (int i = 0; i < k; ++i) p *= std::cos(x(i));
                  return p;
                }});
  // 0.5*tanh(mean x): |d^j tanh| <= 2, scaled by 0.5 * k^{-j} <= 1.
  fs.push_back({"tanh_half_mean", [k](const Vec& x) { return 0.5 * std::tanh(x.sum() / k); }});
  // 0.5*exp(-|x|^2/2): third-order partials bounded by ~0.67 after scaling.
  fs.push_back({"gauss_half", [](const Vec& x) { return 0.5 * std::exp(-0.5 * x.squaredNorm()); }});
  // sin((x_1+x_k)/2).
  fs.push_back({"sin_ends", [k](const Vec& x) { return std::sin(0.5 * (x(0) + x(k - 1))); }});
  return fs;
}

struct SmoothDistanceReport {
  std::vector<std::string> names;
  Vec e_model;
  Vec e_gauss;
  Vec gap;
  double max_gap = 0.0;
};

namespace detail {

// E h(L Z) by quasi-Monte Carlo: Halton points mapped through the inverse
// normal CDF, antithetically paired so odd integrands cancel exactly.
// Deterministic for a fixed point count.
inline double gaussian_qmc_expectation(const std::function<double(const Vec&)>& h, const Mat& sqrt_sigma,
                                       std::size_t n_points) {
  const int k = static_cast<int>(sqrt_sigma.rows());
  std::vector<double> vals(n_points);
  Vec z(k);
  for (std::size_t j = 0; j < n_points; ++j) {
    const auto u = halton_point(static_cast<std::uint64_t>(j + 1), k);
    for (int i = 0; i < k; ++i) z(i) = inverse_normal_cdf(u[static_cast<std::size_t>(i)]);
    const Vec y = sqrt_sigma * z;
    vals[j] = 0.5 * (h(y) + h(-y));
  }
  return pairwise_mean(vals);
}

inline Mat symmetric_sqrt(const Mat& sigma) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
  if (es.info() != Eigen::Success) fail(Errc::EigSolverFailure, "sqrt eigensolver failed");
  Vec d = es.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = d(i) > 0 ? std::sqrt(d(i)) : 0.0;
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

inline SmoothDistanceReport smooth_distance_core(const std::function<double(const TestFunction&)>& model_side,
                                                 const Mat& sigma_n, const std::vector<TestFunction>& suite,
                                                 std::size_t qmc_points) {
  const Mat sq = symmetric_sqrt(sigma_n);
  SmoothDistanceReport rep;
  rep.e_model.resize(static_cast<Eigen::Index>(suite.size()));
  rep.e_gauss.resize(static_cast<Eigen::Index>(suite.size()));
  rep.gap.resize(static_cast<Eigen::Index>(suite.size()));
  for (std::size_t i = 0; i < suite.size(); ++i) {
    rep.names.push_back(suite[i].name);
    const double em = model_side(suite[i]);
    const double eg = gaussian_qmc_expectation(suite[i].fn, sq, qmc_points);
    rep.e_model(static_cast<Eigen::Index>(i)) = em;
    rep.e_gauss(static_cast<Eigen::Index>(i)) = eg;
    rep.gap(static_cast<Eigen::Index>(i)) = std::fabs(em - eg);
  }
  rep.max_gap = rep.gap.maxCoeff();
  return rep;
}

}  // namespace detail

// Exact mode: E h(m_hat) under the oracle pmf, Sigma_n from exact moments.
inline SmoothDistanceReport smooth_distance(const BlockModelSpec& spec, const BlockScaling& scaling,
                                            const MagnetizationPMF& pmf, const std::vector<TestFunction>& suite,
                                            std::size_t qmc_points = 65536) {
  const SpectralData asym = spectral(spec, scaling, SpectralProfile::Asymptotic);
  if (asym.regime != Regime::HighStrict) fail(Errc::NotHighTemperature, "smooth distance requires high temperature");
  const Mat sigma_n = second_moment_matrix(pmf, spec);
  Vec inv_sqrt_b(spec.k);
  for (int i = 0; i < spec.k; ++i)
    inv_sqrt_b(i) = 1.0 / std::sqrt(static_cast<double>(spec.block_sizes[static_cast<std::size_t>(i)]));
  auto model_side = [&](const TestFunction& tf) {
    std::vector<double> vals(static_cast<std::size_t>(pmf.size()));
    Vec mhat(spec.k);
    for (Eigen::Index j = 0; j < pmf.size(); ++j) {
      for (int i = 0; i < spec.k; ++i) mhat(i) = pmf.support(j, i) * inv_sqrt_b(i);
      vals[static_cast<std::size_t>(j)] = pmf.probs(j) * tf.fn(mhat);
    }
    return pairwise_sum(vals);
  };
  return detail::smooth_distance_core(model_side, sigma_n, suite, qmc_points);
}

// Sampled mode: sample means and empirical Sigma_n.
inline SmoothDistanceReport smooth_distance(const BlockModelSpec& spec, const BlockScaling& scaling,
                                            const Mat& m_hat, const std::vector<TestFunction>& suite,
                                            std::size_t qmc_points = 65536) {
  const SpectralData asym = spectral(spec, scaling, SpectralProfile::Asymptotic);
  if (asym.regime != Regime::HighStrict) fail(Errc::NotHighTemperature, "smooth distance requires high temperature");
  if (m_hat.rows() < 2) fail(Errc::InsufficientSamples, "need at least 2 samples");
  const Mat sigma_n = (m_hat.transpose() * m_hat) / static_cast<double>(m_hat.rows());
  auto model_side = [&](const TestFunction& tf) {
    std::vector<double> vals(static_cast<std::size_t>(m_hat.rows()));
    for (Eigen::Index j = 0; j < m_hat.rows(); ++j) vals[static_cast<std::size_t>(j)] = tf.fn(m_hat.row(j).transpose());
    return pairwise_mean(vals);
  };
  return detail::smooth_distance_core(model_side, sigma_n, suite, qmc_points);
}

}  // namespace blockspin
