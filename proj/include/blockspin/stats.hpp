#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "blockspin/errors.hpp"
#include "blockspin/numeric.hpp"

namespace blockspin {

// ---------------------------------------------------------------------------
// Small statistics toolkit: batch layouts for correlated chain output,
// delete-one-batch jackknife for nonlinear statistics, and a weighted
// least-squares line fit for the rate sweeps.
// ---------------------------------------------------------------------------

struct BatchLayout {
  std::vector<std::size_t> begin;  // batch start offsets, one extra sentinel
  std::size_t count() const { return begin.size() - 1; }
};

// Consecutive batches of `batch_len` samples within each chain (chains given
// by equal-length segments); batches never straddle chains.
inline BatchLayout make_batches(std::size_t n_total, std::size_t n_chains, std::size_t batch_len) {
  if (n_chains == 0 || n_total % n_chains != 0) fail(Errc::InvalidArgument, "samples must split evenly into chains");
  const std::size_t per_chain = n_total / n_chains;
  if (batch_len == 0) batch_len = 1;
  if (batch_len > per_chain) batch_len = per_chain;
  BatchLayout b;
  for (std::size_t c = 0; c < n_chains; ++c) {
    for (std::size_t s = 0; s < per_chain; s += batch_len) b.begin.push_back(c * per_chain + s);
  }
  b.begin.push_back(n_total);
  return b;
}

inline double sample_mean(std::span<const double> v) { return pairwise_mean(v); }

// Unbiased variance.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mu = pairwise_mean(v);
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mu) * (v[i] - mu);
  return pairwise_sum(sq) / static_cast<double>(v.size() - 1);
}

// Raw moment E v^p.
inline double sample_raw_moment(std::span<const double> v, int p) {
  std::vector<double> t(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = std::pow(v[i], p);
  return pairwise_mean(t);
}

// Delete-one-batch jackknife standard error of a statistic computed from
// per-batch sufficient sums. `stat_without` receives the index of the left
// out batch (or SIZE_MAX for the full data set).
inline double jackknife_se(std::size_t n_batches, const std::function<double(std::size_t)>& stat_without) {
  if (n_batches < 2) return 0.0;
  std::vector<double> theta(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) theta[b] = stat_without(b);
  const double mu = pairwise_mean(theta);
  std::vector<double> sq(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) sq[b] = (theta[b] - mu) * (theta[b] - mu);
  const double nb = static_cast<double>(n_batches);
  return std::sqrt((nb - 1.0) / nb * pairwise_sum(sq));
}

// Batch-means standard error of a mean over correlated samples.
inline double batch_means_se(std::span<const double> v, const BatchLayout& batches) {
  const std::size_t nb = batches.count();
  if (nb < 2) return 0.0;
  std::vector<double> bm(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    bm[b] = pairwise_mean(v.subspan(batches.begin[b], batches.begin[b + 1] - batches.begin[b]));
  }
  const double mu = pairwise_mean(bm);
  std::vector<double> sq(nb);
  for (std::size_t b = 0; b < nb; ++b) sq[b] = (bm[b] - mu) * (bm[b] - mu);
  return std::sqrt(pairwise_sum(sq) / (static_cast<double>(nb) * (static_cast<double>(nb) - 1.0)));
}

// Weighted least-squares line y = a + b t; returns slope b and its standard
// error from the supplied per-point standard deviations.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

inline LineFit weighted_line_fit(std::span<const double> t, std::span<const double> y,
                                 std::span<const double> sigma) {
  if (t.size() != y.size() || t.size() != sigma.size() || t.size() < 2)
    fail(Errc::InvalidArgument, "line fit needs matching arrays of length >= 2");
  double sw = 0, swt = 0, swy = 0, swtt = 0, swty = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double s = (sigma[i] > 0) ? sigma[i] : 1e-12;
    const double w = 1.0 / (s * s);
    sw += w;
    swt += w * t[i];
    swy += w * y[i];
    swtt += w * t[i] * t[i];
    swty += w * t[i] * y[i];
  }
  const double denom = sw * swtt - swt * swt;
  LineFit f;
  f.slope = (sw * swty - swt * swy) / denom;
  f.intercept = (swtt * swy - swt * swty) / denom;
  f.slope_se = std::sqrt(sw / denom);
  return f;
}

// Kolmogorov-Smirnov statistic of samples against a CDF given on a grid
// (linear interpolation between grid nodes).
inline double ks_statistic(std::vector<double> samples, std::span<const double> grid_x,
                           std::span<const double> grid_f) {
  if (grid_x.size() != grid_f.size() || grid_x.size() < 2) fail(Errc::InvalidArgument, "bad CDF grid");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  auto cdf = [&](double x) {
    if (x <= grid_x.front()) return grid_f.front();
    if (x >= grid_x.back()) return grid_f.back();
    const auto it = std::upper_bound(grid_x.begin(), grid_x.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - grid_x.begin());
    const double t = (x - grid_x[j - 1]) / (grid_x[j] - grid_x[j - 1]);
    return grid_f[j - 1] + t * (grid_f[j] - grid_f[j - 1]);
  };
  double ks = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    ks = std::max(ks, std::fabs(static_cast<double>(i + 1) / n - f));
    ks = std::max(ks, std::fabs(f - static_cast<double>(i) / n));
  }
  return ks;
}

}  // namespace blockspin
