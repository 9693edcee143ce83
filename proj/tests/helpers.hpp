#pragma once

// Shared test utilities: spec builders, random model generators, and the
// brute-force 2^N enumeration that serves as the independent oracle for the
// block-count enumeration.

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "blockspin/model.hpp"
#include "blockspin/numeric.hpp"

namespace bstest {

using blockspin::BlockModelSpec;
using blockspin::Mat;
using blockspin::Vec;
using blockspin::VecI;

inline BlockModelSpec make_spec(std::vector<int> sizes, const Mat& a) {
  BlockModelSpec s;
  s.k = static_cast<int>(sizes.size());
  s.block_sizes = std::move(sizes);
  s.A = a;
  return s;
}

inline Mat mat2(double a11, double a12, double a21, double a22) {
  Mat m(2, 2);
  m << a11, a12, a21, a22;
  return m;
}

inline Mat mat1(double a) {
  Mat m(1, 1);
  m << a;
  return m;
}

// Symmetric positive definite A scaled so that ||Gamma A Gamma|| equals
// `target_op_norm` for the finite-n profile of `sizes`.
inline BlockModelSpec random_spec(std::mt19937_64& rng, int k, int total_sites, double target_op_norm) {
  std::vector<int> sizes(static_cast<std::size_t>(k), 1);
  int rest = total_sites - k;
  for (int i = 0; i < k; ++i) {
    const int take = (i == k - 1) ? rest : static_cast<int>(blockspin::uniform_below(rng, static_cast<std::uint64_t>(rest + 1)));
    sizes[static_cast<std::size_t>(i)] += take;
    rest -= take;
  }
  Mat m(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) m(i, j) = 2.0 * blockspin::uniform01(rng) - 1.0;
  Mat a = m * m.transpose() + 0.05 * Mat::Identity(k, k);

  BlockModelSpec spec = make_spec(sizes, a);
  const blockspin::BlockScaling scaling = blockspin::validate_spec(spec);
  const blockspin::SpectralData sd = blockspin::spectral(spec, scaling, blockspin::SpectralProfile::FiniteN);
  spec.A *= target_op_norm / sd.op_norm;
  return spec;
}

inline blockspin::SpinConfiguration random_configuration(std::mt19937_64& rng, const BlockModelSpec& spec) {
  std::vector<std::int8_t> spins(static_cast<std::size_t>(spec.total_sites()));
  for (auto& s : spins) s = (rng() >> 63) ? std::int8_t{1} : std::int8_t{-1};
  return blockspin::configuration_from_spins(spec, std::move(spins));
}

// Full 2^N Gibbs enumeration; returns the probability of each magnetization
// vector keyed by its entries, plus logZ. Only sensible for N <= ~20.
struct NaivePMF {
  std::map<std::vector<int>, double> prob;
  double log_z = 0.0;
};

inline NaivePMF naive_pmf(const BlockModelSpec& spec) {
  const int n = spec.total_sites();
  const auto off = spec.block_offsets();
  const double nn = static_cast<double>(n);
  std::map<std::vector<int>, double> weight;
  std::vector<double> all_logw;
  all_logw.reserve(static_cast<std::size_t>(1) << n);

  std::vector<int> m(static_cast<std::size_t>(spec.k));
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
    std::fill(m.begin(), m.end(), 0);
    for (int b = 0; b < spec.k; ++b)
      for (int i = off[static_cast<std::size_t>(b)]; i < off[static_cast<std::size_t>(b) + 1]; ++i)
        m[static_cast<std::size_t>(b)] += ((bits >> i) & 1) ? 1 : -1;
    double q = 0.0;
    for (int i = 0; i < spec.k; ++i)
      for (int j = 0; j < spec.k; ++j) q += spec.A(i, j) * m[static_cast<std::size_t>(i)] * m[static_cast<std::size_t>(j)];
    const double logw = 0.5 * q / nn;
    all_logw.push_back(logw);
    auto [it, inserted] = weight.try_emplace(m, 0.0);
    it->second += std::exp(logw);
  }
  NaivePMF out;
  out.log_z = blockspin::log_sum_exp(all_logw);
  double total = 0.0;
  for (auto& [key, w] : weight) total += w;
  for (auto& [key, w] : weight) out.prob[key] = w / total;
  return out;
}

}  // namespace bstest
