#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockspin/errors.hpp"

namespace blockspin {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecI = Eigen::VectorXi;

inline constexpr double kTolPositiveDefinite = 1e-10;  // smallest eigenvalue must exceed this
inline constexpr double kTolCriticalBand = 1e-9;       // |op_norm - 1| band classified Critical
inline constexpr double kTolUniform = 1e-9;            // gamma_inf uniformity detection

// ---------------------------------------------------------------------------
// Model parameterization: k blocks of given sizes, symmetric positive-definite
// k x k interaction matrix A. Sites 1..N are block-contiguous.
// ---------------------------------------------------------------------------
struct BlockModelSpec {
  int k = 0;
  std::vector<int> block_sizes;
  Mat A;
  // Optional asymptotic block profile; when absent the finite-n profile is used.
  std::optional<Vec> gamma_inf_override;

  int total_sites() const {
    int n = 0;
    for (int b : block_sizes) n += b;
    return n;
  }

  // First site index of each block plus the end sentinel, block-contiguous layout.
  std::vector<int> block_offsets() const {
    std::vector<int> off(block_sizes.size() + 1, 0);
    for (std::size_t i = 0; i < block_sizes.size(); ++i) off[i + 1] = off[i] + block_sizes[i];
    return off;
  }
};

// Diagonal scaling data: gamma_n[i] = sqrt(|B_i|/N) and the asymptotic profile.
struct BlockScaling {
  Vec gamma_n;
  Vec gamma_inf;

  Mat gamma_n_matrix() const { return gamma_n.asDiagonal(); }
  Mat gamma_inf_matrix() const { return gamma_inf.asDiagonal(); }

  bool uniform() const {
    const double g = 1.0 / std::sqrt(static_cast<double>(gamma_inf.size()));
    return (gamma_inf.array() - g).abs().maxCoeff() <= kTolUniform;
  }
};

enum class Regime { HighStrict, Critical, Low };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::HighStrict: return "HighStrict";
    case Regime::Critical: return "Critical";
    case Regime::Low: return "Low";
  }
  return "?";
}

// Eigendecomposition of Gamma A Gamma (finite-n or asymptotic profile).
// Rows of `eigenvectors` are the eigenvectors, ascending eigenvalue order,
// sign-fixed so each row's first nonzero entry is positive.
struct SpectralData {
  Mat matrix;
  Vec eigenvalues;   // ascending
  Mat eigenvectors;  // rows: V with matrix = V^T diag(eigenvalues) V
  double op_norm = 0.0;
  Regime regime = Regime::HighStrict;
};

enum class SpectralProfile { FiniteN, Asymptotic };

// One +-1 configuration with cached per-block +1 counts.
struct SpinConfiguration {
  std::vector<std::int8_t> spins;  // values -1 or +1
  VecI plus_counts;
};

// The three block magnetization vectors: raw integer sums m, per-block
// averages m_tilde = m_i/|B_i|, and m_hat = m_i/sqrt(|B_i|).
struct MagnetizationView {
  VecI m;
  Vec m_tilde;
  Vec m_hat;
};

// ---------------------------------------------------------------------------
// Validation relaxations: the oracle path accepts any symmetric A (the Gibbs
// measure is defined regardless); the theory path additionally requires A
// positive definite.
// ---------------------------------------------------------------------------
enum class SpecChecks { Structural, Full };

namespace detail {

inline void check_structure(const BlockModelSpec& spec) {
  if (spec.k < 1) fail(Errc::InvalidArgument, "k must be a positive integer");
  if (static_cast<int>(spec.block_sizes.size()) != spec.k)
    fail(Errc::InvalidArgument, "block_sizes must have k entries");
  for (int i = 0; i < spec.k; ++i) {
    if (spec.block_sizes[static_cast<std::size_t>(i)] < 1)
      fail(Errc::EmptyBlock, "block " + std::to_string(i + 1) + " is empty");
  }
  if (spec.A.rows() != spec.k || spec.A.cols() != spec.k)
    fail(Errc::InvalidArgument, "A must be k x k");
  for (int i = 0; i < spec.k; ++i)
    for (int j = i + 1; j < spec.k; ++j)
      if (spec.A(i, j) != spec.A(j, i))
        fail(Errc::AsymmetricMatrix, "A(" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                         ") != A(" + std::to_string(j + 1) + "," + std::to_string(i + 1) + ")");
}

inline void check_positive_definite(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(A, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(Errc::EigSolverFailure, "eigensolver did not converge on A");
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo > kTolPositiveDefinite))
    fail(Errc::NotPositiveDefinite, "smallest eigenvalue of A is " + std::to_string(lo));
}

inline Vec gamma_from_sizes(const BlockModelSpec& spec) {
  const double n = static_cast<double>(spec.total_sites());
  Vec g(spec.k);
  for (int i = 0; i < spec.k; ++i) g(i) = std::sqrt(static_cast<double>(spec.block_sizes[static_cast<std::size_t>(i)]) / n);
  return g;
}

}  // namespace detail

// Validates the spec invariants and produces the scaling vectors. The
// asymptotic profile defaults to the finite-n profile; an explicit override
// (spec field or argument) must satisfy gamma_i > 0 and sum gamma_i^2 = 1.
// For k >= 2 this forces every gamma_i < 1; k = 1 legitimately has gamma = 1.
inline BlockScaling validate_spec(const BlockModelSpec& spec,
                                  const std::optional<Vec>& gamma_inf = std::nullopt,
                                  SpecChecks checks = SpecChecks::Full) {
  detail::check_structure(spec);
  if (checks == SpecChecks::Full) detail::check_positive_definite(spec.A);

  BlockScaling scaling;
  scaling.gamma_n = detail::gamma_from_sizes(spec);

  std::optional<Vec> g = gamma_inf ? gamma_inf : spec.gamma_inf_override;
  if (g) {
    if (g->size() != spec.k) fail(Errc::BadBlockScaling, "gamma_inf must have k entries");
    if (!(g->minCoeff() > 0.0)) fail(Errc::BadBlockScaling, "gamma_inf entries must be positive");
    const double s = g->array().square().sum();
    if (std::fabs(s - 1.0) > 1e-12)
      fail(Errc::BadBlockScaling, "sum of gamma_inf^2 must be 1, got " + std::to_string(s));
    scaling.gamma_inf = *g;
  } else {
    scaling.gamma_inf = scaling.gamma_n;
  }
  return scaling;
}

// ---------------------------------------------------------------------------
// Magnetization algebra. m_i = 2*plus_counts_i - |B_i| exactly.
// ---------------------------------------------------------------------------

inline MagnetizationView view_from_counts(const BlockModelSpec& spec, const VecI& plus_counts) {
  MagnetizationView v;
  v.m.resize(spec.k);
  v.m_tilde.resize(spec.k);
  v.m_hat.resize(spec.k);
  for (int i = 0; i < spec.k; ++i) {
    const int b = spec.block_sizes[static_cast<std::size_t>(i)];
    const int c = plus_counts(i);
    if (c < 0 || c > b) fail(Errc::InvalidArgument, "plus_counts out of range");
    v.m(i) = 2 * c - b;
    v.m_tilde(i) = static_cast<double>(v.m(i)) / static_cast<double>(b);
    v.m_hat(i) = static_cast<double>(v.m(i)) / std::sqrt(static_cast<double>(b));
  }
  return v;
}

inline MagnetizationView magnetizations(const BlockModelSpec& spec, const SpinConfiguration& x) {
  return view_from_counts(spec, x.plus_counts);
}

inline SpinConfiguration configuration_from_spins(const BlockModelSpec& spec, std::vector<std::int8_t> spins) {
  const int n = spec.total_sites();
  if (static_cast<int>(spins.size()) != n) fail(Errc::InvalidArgument, "spin vector has wrong length");
  SpinConfiguration x;
  x.plus_counts = VecI::Zero(spec.k);
  const auto off = spec.block_offsets();
  for (int b = 0; b < spec.k; ++b)
    for (int i = off[static_cast<std::size_t>(b)]; i < off[static_cast<std::size_t>(b) + 1]; ++i) {
      if (spins[static_cast<std::size_t>(i)] != 1 && spins[static_cast<std::size_t>(i)] != -1)
        fail(Errc::InvalidArgument, "spins must be +-1");
      if (spins[static_cast<std::size_t>(i)] == 1) ++x.plus_counts(b);
    }
  x.spins = std::move(spins);
  return x;
}

// H_n = (1/2N) <m, A m>. Identical (up to rounding) whether evaluated from m,
// from m_hat with Gamma_n A Gamma_n, or from m_tilde with Gamma_n^2 A Gamma_n^2.
inline double hamiltonian(const BlockModelSpec& spec, const MagnetizationView& view) {
  const double n = static_cast<double>(spec.total_sites());
  const Vec m = view.m.cast<double>();
  return 0.5 / n * m.dot(spec.A * m);
}

// ---------------------------------------------------------------------------
// Spectral analysis of Gamma A Gamma and temperature-regime classification.
// ---------------------------------------------------------------------------
inline SpectralData spectral(const BlockModelSpec& spec, const BlockScaling& scaling,
                             SpectralProfile which = SpectralProfile::Asymptotic) {
  const Vec& g = (which == SpectralProfile::FiniteN) ? scaling.gamma_n : scaling.gamma_inf;
  SpectralData sd;
  sd.matrix = g.asDiagonal() * spec.A * g.asDiagonal();
  // Symmetrize; the congruence is symmetric in exact arithmetic.
  sd.matrix = 0.5 * (sd.matrix + sd.matrix.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Mat> es(sd.matrix);
  if (es.info() != Eigen::Success) fail(Errc::EigSolverFailure, "eigensolver did not converge");
  sd.eigenvalues = es.eigenvalues();        // ascending
  sd.eigenvectors = es.eigenvectors().transpose();  // rows are eigenvectors
  for (int r = 0; r < spec.k; ++r) {
    for (int c = 0; c < spec.k; ++c) {
      const double v = sd.eigenvectors(r, c);
      if (v != 0.0) {
        if (v < 0.0) sd.eigenvectors.row(r) *= -1.0;
        break;
      }
    }
  }
  sd.op_norm = sd.eigenvalues(spec.k - 1);
  if (std::fabs(sd.op_norm - 1.0) <= kTolCriticalBand)
    sd.regime = Regime::Critical;
  else if (sd.op_norm < 1.0)
    sd.regime = Regime::HighStrict;
  else
    sd.regime = Regime::Low;
  return sd;
}

}  // namespace blockspin
