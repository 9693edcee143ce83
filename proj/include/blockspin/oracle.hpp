#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "blockspin/model.hpp"
#include "blockspin/numeric.hpp"

namespace blockspin {

// ---------------------------------------------------------------------------
// Exact Gibbs distribution of the block magnetization vector. The Hamiltonian
// depends on a configuration only through m, so it suffices to enumerate
// per-block +1 counts: prod(|B_i|+1) states instead of 2^N.
// ---------------------------------------------------------------------------

struct MagnetizationPMF {
  Eigen::MatrixXi support;  // one reachable m vector per row, lexicographic in counts
  Vec probs;
  double log_z = 0.0;

  Eigen::Index size() const { return support.rows(); }
};

inline constexpr std::int64_t kDefaultEnumerationCap = 2'000'000;

namespace detail {

// log C(n, c) table; mirrored halves so table[c] == table[n-c] bit-exactly,
// which keeps the +-m symmetry of the pmf exact in floating point.
inline std::vector<double> log_binom_table(int n) {
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  for (int c = 0; c <= n / 2; ++c)
    t[static_cast<std::size_t>(c)] =
        lgn - std::lgamma(static_cast<double>(c) + 1.0) - std::lgamma(static_cast<double>(n - c) + 1.0);
  for (int c = n / 2 + 1; c <= n; ++c) t[static_cast<std::size_t>(c)] = t[static_cast<std::size_t>(n - c)];
  return t;
}

}  // namespace detail

// Enumerates all reachable m, weights prob(m) by the binomial multiplicity of
// the counts times exp(H), and normalizes through log-sum-exp. Rejects when
// the state count exceeds `cap` (TooLarge reports the required count).
inline MagnetizationPMF exact_pmf(const BlockModelSpec& spec, std::int64_t cap = kDefaultEnumerationCap,
                                  int threads = 1) {
  validate_spec(spec, std::nullopt, SpecChecks::Structural);
  const int k = spec.k;
  const double n_sites = static_cast<double>(spec.total_sites());

  std::int64_t n_states = 1;
  for (int b : spec.block_sizes) {
    n_states *= (b + 1);
    if (n_states > cap)
      fail(Errc::TooLarge, "enumeration needs >= " + std::to_string(n_states) + " states, cap is " +
                               std::to_string(cap));
  }

  std::vector<std::vector<double>> lb(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) lb[static_cast<std::size_t>(i)] = detail::log_binom_table(spec.block_sizes[static_cast<std::size_t>(i)]);

  MagnetizationPMF pmf;
  pmf.support.resize(n_states, k);
  std::vector<double> logw(static_cast<std::size_t>(n_states));

  // Strides of the count odometer (last axis fastest).
  std::vector<std::int64_t> stride(static_cast<std::size_t>(k), 1);
  for (int i = k - 2; i >= 0; --i)
    stride[static_cast<std::size_t>(i)] = stride[static_cast<std::size_t>(i) + 1] * (spec.block_sizes[static_cast<std::size_t>(i) + 1] + 1);

  // Work is partitioned along the first axis; buffer slots are disjoint, so
  // the result is identical for any thread count.
  auto fill_range = [&](int c0_begin, int c0_end) {
    std::vector<int> c(static_cast<std::size_t>(k), 0);
    std::vector<double> m(static_cast<std::size_t>(k));
    for (int c0 = c0_begin; c0 < c0_end; ++c0) {
      c[0] = c0;
      std::fill(c.begin() + 1, c.end(), 0);
      std::int64_t idx = stride[0] * c0;
      while (true) {
        double lw = 0.0;
        for (int i = 0; i < k; ++i) {
          m[static_cast<std::size_t>(i)] =
              static_cast<double>(2 * c[static_cast<std::size_t>(i)] - spec.block_sizes[static_cast<std::size_t>(i)]);
          lw += lb[static_cast<std::size_t>(i)][static_cast<std::size_t>(c[static_cast<std::size_t>(i)])];
          pmf.support(idx, i) = 2 * c[static_cast<std::size_t>(i)] - spec.block_sizes[static_cast<std::size_t>(i)];
        }
        double q = 0.0;
        for (int i = 0; i < k; ++i) {
          double row = 0.0;
          for (int j = 0; j < k; ++j) row += spec.A(i, j) * m[static_cast<std::size_t>(j)];
          q += m[static_cast<std::size_t>(i)] * row;
        }
        logw[static_cast<std::size_t>(idx)] = lw + 0.5 * q / n_sites;

        int axis = k - 1;
        while (axis >= 1) {
          if (++c[static_cast<std::size_t>(axis)] <= spec.block_sizes[static_cast<std::size_t>(axis)]) break;
          c[static_cast<std::size_t>(axis)] = 0;
          --axis;
        }
        if (axis < 1) break;
        ++idx;
      }
    }
  };

  const int axis0 = spec.block_sizes[0] + 1;
  if (threads <= 1 || axis0 == 1) {
    fill_range(0, axis0);
  } else {
    const int t = std::min(threads, axis0);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t));
    for (int w = 0; w < t; ++w) {
      const int lo = axis0 * w / t, hi = axis0 * (w + 1) / t;
      pool.emplace_back(fill_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  const double mx = *std::max_element(logw.begin(), logw.end());
  std::vector<double> e(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) e[i] = std::exp(logw[i] - mx);
  const double total = pairwise_sum(e);
  pmf.log_z = mx + std::log(total);
  pmf.probs.resize(n_states);
  for (std::int64_t i = 0; i < n_states; ++i) pmf.probs(i) = e[static_cast<std::size_t>(i)] / total;
  return pmf;
}

// ---------------------------------------------------------------------------
// Exact moments of m_hat under the pmf. Dense tensor of order 1..4, row-major
// multi-index layout. Odd orders cancel pairwise (m vs -m have bit-equal
// probabilities), so they are returned as exact zeros.
// ---------------------------------------------------------------------------
struct MomentTensor {
  int order = 0;
  int k = 0;
  std::vector<double> data;  // k^order entries, row-major

  double at(std::span<const int> idx) const {
    std::size_t flat = 0;
    for (int i : idx) flat = flat * static_cast<std::size_t>(k) + static_cast<std::size_t>(i);
    return data[flat];
  }
  double at2(int i, int j) const { return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)]; }
};

inline MomentTensor exact_moments(const MagnetizationPMF& pmf, const BlockModelSpec& spec, int order) {
  if (order < 1 || order > 4) fail(Errc::InvalidArgument, "moment order must be 1..4");
  const int k = spec.k;
  MomentTensor t;
  t.order = order;
  t.k = k;
  std::size_t n_entries = 1;
  for (int o = 0; o < order; ++o) n_entries *= static_cast<std::size_t>(k);
  t.data.assign(n_entries, 0.0);
  if (order % 2 == 1) return t;  // exact symmetric cancellation

  Vec inv_sqrt_b(k);
  for (int i = 0; i < k; ++i) inv_sqrt_b(i) = 1.0 / std::sqrt(static_cast<double>(spec.block_sizes[static_cast<std::size_t>(i)]));

  const Eigen::Index n = pmf.size();
  std::vector<double> mhat(static_cast<std::size_t>(k));
  // Pair state j with its negation n-1-j (count-odometer reversal). A middle
  // self-paired state has m = 0 and contributes nothing.
  for (Eigen::Index j = 0; j < n / 2; ++j) {
    const double p = pmf.probs(j) + pmf.probs(n - 1 - j);
    if (p == 0.0) continue;
    for (int i = 0; i < k; ++i) mhat[static_cast<std::size_t>(i)] = pmf.support(j, i) * inv_sqrt_b(i);
    if (order == 2) {
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
          t.data[static_cast<std::size_t>(a) * static_cast<std::size_t>(k) + static_cast<std::size_t>(b)] +=
              p * mhat[static_cast<std::size_t>(a)] * mhat[static_cast<std::size_t>(b)];
    } else {
      std::size_t flat = 0;
      const std::size_t kk = static_cast<std::size_t>(k);
      for (std::size_t a = 0; a < kk; ++a)
        for (std::size_t b = 0; b < kk; ++b)
          for (std::size_t c = 0; c < kk; ++c)
            for (std::size_t d = 0; d < kk; ++d, ++flat)
              t.data[flat] += p * mhat[a] * mhat[b] * mhat[c] * mhat[d];
    }
  }
  return t;
}

// E m_hat m_hat^T as a matrix (the Sigma_n of the high-temperature theory).
inline Mat second_moment_matrix(const MagnetizationPMF& pmf, const BlockModelSpec& spec) {
  const MomentTensor t = exact_moments(pmf, spec, 2);
  Mat s(spec.k, spec.k);
  for (int i = 0; i < spec.k; ++i)
    for (int j = 0; j < spec.k; ++j) s(i, j) = t.at2(i, j);
  return s;
}

// ---------------------------------------------------------------------------
// Moments of the factorized limit density
//   f(x) ~ exp(-1/2 sum_{i<k} c_i x_i^2 - sigma2 * x_k^4)
// by 1-D adaptive quadrature per coordinate. Relative error <= 1e-8.
// ---------------------------------------------------------------------------

// Integral of x^power * weight(x) over the real line.
inline double quadrature_moment(const std::function<double(double)>& weight, int power, double rel_tol = 1e-10) {
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0;
  auto f = [&](double x) { return std::pow(x, power) * weight(x); };
  const double val = gauss_kronrod<double, 61>::integrate(
      f, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 15, rel_tol, &err);
  if (!std::isfinite(val) || (std::fabs(val) > 0 && err / std::fabs(val) > 1e-8 && err > 1e-14))
    fail(Errc::QuadratureNonConvergence, "1-D moment quadrature did not reach tolerance");
  return val;
}

// Rows: coordinates (k-1 Gaussian, then the quartic one); columns: moments of
// order 1..4. Odd moments vanish by symmetry and are returned as exact zeros.
inline Mat quartic_gaussian_moments(const Vec& quad_coeffs, double sigma2) {
  if (!(sigma2 > 0.0)) fail(Errc::DomainError, "quartic coefficient must be positive");
  for (Eigen::Index i = 0; i < quad_coeffs.size(); ++i)
    if (!(quad_coeffs(i) > 0.0)) fail(Errc::DomainError, "quadratic coefficients must be positive");

  const int k = static_cast<int>(quad_coeffs.size()) + 1;
  Mat mom = Mat::Zero(k, 4);
  for (int i = 0; i < k; ++i) {
    std::function<double(double)> w;
    if (i < k - 1) {
      const double c = quad_coeffs(i);
      w = [c](double x) { return std::exp(-0.5 * c * x * x); };
    } else {
      w = [sigma2](double x) { return std::exp(-sigma2 * x * x * x * x); };
    }
    const double z = quadrature_moment(w, 0);
    mom(i, 1) = quadrature_moment(w, 2) / z;
    mom(i, 3) = quadrature_moment(w, 4) / z;
  }
  return mom;
}

}  // namespace blockspin
