#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <thread>
#include <vector>

#include "blockspin/model.hpp"
#include "blockspin/numeric.hpp"

namespace blockspin {

// ---------------------------------------------------------------------------
// Glauber (heat-bath) dynamics for the block model and the exchangeable pair
// built from one chain step. Site choice must stay uniform: systematic scans
// would break the exchangeability the error-term machinery relies on.
// ---------------------------------------------------------------------------

enum class InitMode { AllPlus, UniformRandom, Custom };

struct SamplerConfig {
  std::uint64_t seed = 0x5EEDB10C'55B1A5ULL;
  int burn_in = 1000;   // sweeps (1 sweep = N single-site updates)
  int thinning = 1;     // sweeps between retained samples
  int n_samples = 1000; // retained samples per chain
  int n_chains = 1;
  InitMode init = InitMode::AllPlus;
  std::vector<std::int8_t> custom_init;  // used when init == Custom
  int threads = 1;

  void validate(int n_sites) const {
    if (burn_in < 0) fail(Errc::InvalidArgument, "burn_in must be >= 0");
    if (thinning < 1) fail(Errc::InvalidArgument, "thinning must be >= 1");
    if (n_samples < 1) fail(Errc::InvalidArgument, "n_samples must be >= 1");
    if (n_chains < 1) fail(Errc::InvalidArgument, "n_chains must be >= 1");
    if (init == InitMode::Custom && static_cast<int>(custom_init.size()) != n_sites)
      fail(Errc::InvalidArgument, "custom_init must have N entries");
  }
};

// tanh(g_i(x)) with g_i(x) = ((A m)_{h(i)} - A_{h(i)h(i)} x_i)/N. The value
// does not depend on x_i: the diagonal contribution inside (A m) cancels the
// subtracted term.
inline double conditional_mean(const BlockModelSpec& spec, const SpinConfiguration& x, int site) {
  const int n = spec.total_sites();
  if (site < 0 || site >= n) fail(Errc::InvalidArgument, "site index out of range");
  const auto off = spec.block_offsets();
  int b = 0;
  while (site >= off[static_cast<std::size_t>(b) + 1]) ++b;
  double am = 0.0;
  for (int j = 0; j < spec.k; ++j)
    am += spec.A(b, j) * static_cast<double>(2 * x.plus_counts(j) - spec.block_sizes[static_cast<std::size_t>(j)]);
  const double g = (am - spec.A(b, b) * static_cast<double>(x.spins[static_cast<std::size_t>(site)])) /
                   static_cast<double>(n);
  return std::tanh(g);
}

// One chain owns one configuration; no internal synchronization.
class GlauberChain {
 public:
  GlauberChain(const BlockModelSpec& spec, std::uint64_t seed)
      : spec_(&spec),
        n_(spec.total_sites()),
        offsets_(spec.block_offsets()),
        block_of_(static_cast<std::size_t>(n_)),
        rng_(seed) {
    for (int b = 0; b < spec.k; ++b)
      for (int i = offsets_[static_cast<std::size_t>(b)]; i < offsets_[static_cast<std::size_t>(b) + 1]; ++i)
        block_of_[static_cast<std::size_t>(i)] = b;
    set_all_plus();
  }

  void set_all_plus() {
    x_.spins.assign(static_cast<std::size_t>(n_), std::int8_t{1});
    x_.plus_counts.resize(spec_->k);
    for (int b = 0; b < spec_->k; ++b) x_.plus_counts(b) = spec_->block_sizes[static_cast<std::size_t>(b)];
    refresh_m();
  }

  void set_uniform_random() {
    x_.spins.resize(static_cast<std::size_t>(n_));
    x_.plus_counts = VecI::Zero(spec_->k);
    for (int i = 0; i < n_; ++i) {
      const std::int8_t s = (rng_() >> 63) ? std::int8_t{1} : std::int8_t{-1};
      x_.spins[static_cast<std::size_t>(i)] = s;
      if (s == 1) ++x_.plus_counts(block_of_[static_cast<std::size_t>(i)]);
    }
    refresh_m();
  }

  void set_configuration(const SpinConfiguration& x) {
    if (static_cast<int>(x.spins.size()) != n_) fail(Errc::InvalidArgument, "configuration has wrong length");
    x_ = x;
    refresh_m();
  }

  // One heat-bath update at a uniformly chosen site; returns the site.
  int step() {
    const int site = static_cast<int>(uniform_below(rng_, static_cast<std::uint64_t>(n_)));
    update_site(site);
    return site;
  }

  void sweep() {
    for (int i = 0; i < n_; ++i) step();
  }

  void sweeps(int count) {
    for (int s = 0; s < count; ++s) sweep();
  }

  const SpinConfiguration& configuration() const { return x_; }
  const std::vector<int>& block_magnetization() const { return m_; }
  MagnetizationView view() const { return view_from_counts(*spec_, x_.plus_counts); }
  std::mt19937_64& rng() { return rng_; }

 private:
  void refresh_m() {
    m_.assign(static_cast<std::size_t>(spec_->k), 0);
    for (int b = 0; b < spec_->k; ++b)
      m_[static_cast<std::size_t>(b)] = 2 * x_.plus_counts(b) - spec_->block_sizes[static_cast<std::size_t>(b)];
  }

  void update_site(int site) {
    const int b = block_of_[static_cast<std::size_t>(site)];
    double am = 0.0;
    for (int j = 0; j < spec_->k; ++j) am += spec_->A(b, j) * static_cast<double>(m_[static_cast<std::size_t>(j)]);
    const double g =
        (am - spec_->A(b, b) * static_cast<double>(x_.spins[static_cast<std::size_t>(site)])) / static_cast<double>(n_);
    const double p_plus = 0.5 * (1.0 + std::tanh(g));
    const std::int8_t s_new = (uniform01(rng_) < p_plus) ? std::int8_t{1} : std::int8_t{-1};
    const std::int8_t s_old = x_.spins[static_cast<std::size_t>(site)];
    if (s_new != s_old) {
      x_.spins[static_cast<std::size_t>(site)] = s_new;
      x_.plus_counts(b) += s_new;  // +1 gained or lost
      m_[static_cast<std::size_t>(b)] += 2 * s_new;
    }
  }

  const BlockModelSpec* spec_;
  int n_;
  std::vector<int> offsets_;
  std::vector<int> block_of_;
  SpinConfiguration x_;
  std::vector<int> m_;
  std::mt19937_64 rng_;
};

// Free-function form of one Glauber update; mutates x, returns the site.
inline int glauber_step(const BlockModelSpec& spec, SpinConfiguration& x, std::mt19937_64& rng) {
  const int n = spec.total_sites();
  const int site = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n)));
  const auto off = spec.block_offsets();
  int b = 0;
  while (site >= off[static_cast<std::size_t>(b) + 1]) ++b;
  double am = 0.0;
  for (int j = 0; j < spec.k; ++j)
    am += spec.A(b, j) * static_cast<double>(2 * x.plus_counts(j) - spec.block_sizes[static_cast<std::size_t>(j)]);
  const double g = (am - spec.A(b, b) * static_cast<double>(x.spins[static_cast<std::size_t>(site)])) /
                   static_cast<double>(n);
  const std::int8_t s_new = (uniform01(rng) < 0.5 * (1.0 + std::tanh(g))) ? std::int8_t{1} : std::int8_t{-1};
  if (s_new != x.spins[static_cast<std::size_t>(site)]) {
    x.spins[static_cast<std::size_t>(site)] = s_new;
    x.plus_counts(b) += s_new;
  }
  return site;
}

// The exchangeable pair (m_hat(X), m_hat(X~)) from one Glauber step; the two
// vectors differ in at most the coordinate h(site), by 0 or 2/sqrt(|B|).
struct ExchangeablePair {
  Vec m_hat_before;
  Vec m_hat_after;
  int site = 0;
};

inline ExchangeablePair exchangeable_pair(const BlockModelSpec& spec, SpinConfiguration& x, std::mt19937_64& rng) {
  ExchangeablePair p;
  p.m_hat_before = view_from_counts(spec, x.plus_counts).m_hat;
  p.site = glauber_step(spec, x, rng);
  p.m_hat_after = view_from_counts(spec, x.plus_counts).m_hat;
  return p;
}

// ---------------------------------------------------------------------------
// Multi-chain driver. Chains are independent (per-chain derived seeds) and
// may run on separate threads; retained samples are emitted in (chain, index)
// order regardless of the thread count, so output is reproducible.
// ---------------------------------------------------------------------------

struct SampleSet {
  std::vector<int> chain;
  std::vector<int> index;
  Eigen::MatrixXi m;  // one retained magnetization vector per row
  Mat m_hat;

  Eigen::Index size() const { return m.rows(); }
};

inline void run_chains(const BlockModelSpec& spec, const SamplerConfig& cfg,
                       const std::function<void(int, int, const VecI&)>& sink) {
  const int n = spec.total_sites();
  cfg.validate(n);

  std::vector<Eigen::MatrixXi> buffers(static_cast<std::size_t>(cfg.n_chains));
  auto run_one = [&](int c) {
    GlauberChain chain(spec, stream_seed(cfg.seed, static_cast<std::uint64_t>(c)));
    switch (cfg.init) {
      case InitMode::AllPlus: chain.set_all_plus(); break;
      case InitMode::UniformRandom: chain.set_uniform_random(); break;
      case InitMode::Custom: chain.set_configuration(configuration_from_spins(spec, cfg.custom_init)); break;
    }
    chain.sweeps(cfg.burn_in);
    Eigen::MatrixXi& buf = buffers[static_cast<std::size_t>(c)];
    buf.resize(cfg.n_samples, spec.k);
    for (int s = 0; s < cfg.n_samples; ++s) {
      chain.sweeps(cfg.thinning);
      const auto& m = chain.block_magnetization();
      for (int b = 0; b < spec.k; ++b) buf(s, b) = m[static_cast<std::size_t>(b)];
    }
  };

  if (cfg.threads <= 1 || cfg.n_chains == 1) {
    for (int c = 0; c < cfg.n_chains; ++c) run_one(c);
  } else {
    std::vector<std::thread> pool;
    const int t = std::min(cfg.threads, cfg.n_chains);
    for (int w = 0; w < t; ++w)
      pool.emplace_back([&, w] {
        for (int c = w; c < cfg.n_chains; c += t) run_one(c);
      });
    for (auto& th : pool) th.join();
  }

  VecI m(spec.k);
  for (int c = 0; c < cfg.n_chains; ++c)
    for (int s = 0; s < cfg.n_samples; ++s) {
      for (int b = 0; b < spec.k; ++b) m(b) = buffers[static_cast<std::size_t>(c)](s, b);
      sink(c, s, m);
    }
}

inline SampleSet collect_samples(const BlockModelSpec& spec, const SamplerConfig& cfg) {
  SampleSet out;
  const Eigen::Index total = static_cast<Eigen::Index>(cfg.n_chains) * cfg.n_samples;
  out.chain.reserve(static_cast<std::size_t>(total));
  out.index.reserve(static_cast<std::size_t>(total));
  out.m.resize(total, spec.k);
  out.m_hat.resize(total, spec.k);
  Vec inv_sqrt_b(spec.k);
  for (int i = 0; i < spec.k; ++i)
    inv_sqrt_b(i) = 1.0 / std::sqrt(static_cast<double>(spec.block_sizes[static_cast<std::size_t>(i)]));
  Eigen::Index row = 0;
  run_chains(spec, cfg, [&](int c, int s, const VecI& m) {
    out.chain.push_back(c);
    out.index.push_back(s);
    for (int b = 0; b < spec.k; ++b) {
      out.m(row, b) = m(b);
      out.m_hat(row, b) = static_cast<double>(m(b)) * inv_sqrt_b(b);
    }
    ++row;
  });
  return out;
}

}  // namespace blockspin
