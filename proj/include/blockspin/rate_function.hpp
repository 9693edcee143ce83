#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "blockspin/model.hpp"
#include "blockspin/numeric.hpp"

namespace blockspin {

inline constexpr double kTolMeanField = 1e-10;       // residual below this counts as solved
inline constexpr double kTolHessDegenerate = 1e-8;   // |eigenvalue| band treated as degenerate
inline constexpr double kDedupRadius = 1e-6;         // sup-norm merge radius for critical points

// ---------------------------------------------------------------------------
// L*(t) = (1+t)/2 log(1+t) + (1-t)/2 log(1-t), the convex conjugate of
// log cosh, extended continuously to L*(+-1) = log 2.
// ---------------------------------------------------------------------------
inline double lstar(double t) {
  if (std::fabs(t) > 1.0) fail(Errc::DomainError, "lstar requires |t| <= 1");
  double s = 0.0;
  if (1.0 + t > 0.0) s += 0.5 * (1.0 + t) * std::log1p(t);
  if (1.0 - t > 0.0) s += 0.5 * (1.0 - t) * std::log1p(-t);
  return s;
}

// ---------------------------------------------------------------------------
// Rate function I(x) = 1/2 <x, G^2 A G^2 x> - sum gamma_i^2 L*(x_i) on
// [-1,1]^k, with gradient and Hessian on the open cube. Critical points solve
// the mean-field equations x = tanh(A G^2 x).
// ---------------------------------------------------------------------------

namespace detail {

inline Mat gamma2_a_gamma2(const BlockModelSpec& spec, const BlockScaling& scaling) {
  const Vec g2 = scaling.gamma_inf.array().square();
  return g2.asDiagonal() * spec.A * g2.asDiagonal();
}

inline void require_closed_cube(const Vec& x) {
  if (x.array().abs().maxCoeff() > 1.0) fail(Errc::DomainError, "x must lie in [-1,1]^k");
}

inline void require_open_cube(const Vec& x) {
  if (x.array().abs().maxCoeff() >= 1.0) fail(Errc::DomainError, "x must lie in (-1,1)^k");
}

}  // namespace detail

inline double rate_I(const BlockModelSpec& spec, const BlockScaling& scaling, const Vec& x) {
  detail::require_closed_cube(x);
  const Mat c = detail::gamma2_a_gamma2(spec, scaling);
  double v = 0.5 * x.dot(c * x);
  for (int i = 0; i < spec.k; ++i) v -= scaling.gamma_inf(i) * scaling.gamma_inf(i) * lstar(x(i));
  return v;
}

inline Vec rate_I_gradient(const BlockModelSpec& spec, const BlockScaling& scaling, const Vec& x) {
  detail::require_open_cube(x);
  Vec g = detail::gamma2_a_gamma2(spec, scaling) * x;
  for (int i = 0; i < spec.k; ++i) g(i) -= scaling.gamma_inf(i) * scaling.gamma_inf(i) * std::atanh(x(i));
  return g;
}

inline Mat rate_I_hessian(const BlockModelSpec& spec, const BlockScaling& scaling, const Vec& x) {
  detail::require_open_cube(x);
  Mat h = detail::gamma2_a_gamma2(spec, scaling);
  for (int i = 0; i < spec.k; ++i) {
    const double g2 = scaling.gamma_inf(i) * scaling.gamma_inf(i);
    h(i, i) -= g2 / (1.0 - x(i) * x(i));
  }
  return h;
}

// r_i = x_i - tanh((A G^2 x)_i); identically zero exactly at critical points.
inline Vec mean_field_residual(const BlockModelSpec& spec, const BlockScaling& scaling, const Vec& x) {
  detail::require_open_cube(x);
  const Vec g2 = scaling.gamma_inf.array().square();
  const Vec t = spec.A * (g2.asDiagonal() * x);
  Vec r(spec.k);
  for (int i = 0; i < spec.k; ++i) r(i) = x(i) - std::tanh(t(i));
  return r;
}

// ---------------------------------------------------------------------------
// Mean-field solvers.
// ---------------------------------------------------------------------------

enum class Definiteness { Max, Min, Saddle, Degenerate };

inline const char* definiteness_name(Definiteness d) {
  switch (d) {
    case Definiteness::Max: return "max";
    case Definiteness::Min: return "min";
    case Definiteness::Saddle: return "saddle";
    case Definiteness::Degenerate: return "degenerate";
  }
  return "?";
}

struct CriticalPoint {
  Vec x;
  double residual = std::numeric_limits<double>::infinity();
  double value = 0.0;  // I(x)
  Definiteness definiteness = Definiteness::Degenerate;
};

enum class SolveMethod { DampedFixedPoint, Newton };

struct SolveOptions {
  SolveMethod method = SolveMethod::DampedFixedPoint;
  double omega = 0.5;  // damping of the fixed-point map
  int max_iter = 20000;
  double tol = kTolMeanField;
  bool capture_trace = false;
};

struct SolveResult {
  CriticalPoint point;
  bool converged = false;
  int iterations = 0;
  std::vector<Vec> trace;
};

namespace detail {

inline double sup_residual(const BlockModelSpec& spec, const BlockScaling& scaling, const Vec& x) {
  return mean_field_residual(spec, scaling, x).array().abs().maxCoeff();
}

inline Definiteness classify(const BlockModelSpec& spec, const BlockScaling& scaling, const Vec& x) {
  Eigen::SelfAdjointEigenSolver<Mat> es(rate_I_hessian(spec, scaling, x), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(Errc::EigSolverFailure, "Hessian eigensolver failed");
  const Vec ev = es.eigenvalues();
  if (ev.array().abs().minCoeff() < kTolHessDegenerate) return Definiteness::Degenerate;
  if (ev.maxCoeff() < 0.0) return Definiteness::Max;
  if (ev.minCoeff() > 0.0) return Definiteness::Min;
  return Definiteness::Saddle;
}

}  // namespace detail

inline SolveResult solve_mean_field(const BlockModelSpec& spec, const BlockScaling& scaling, const Vec& x0,
                                    const SolveOptions& opt = {}) {
  detail::require_open_cube(x0);
  const Vec g2 = scaling.gamma_inf.array().square();

  SolveResult res;
  Vec x = x0;
  if (opt.capture_trace) res.trace.push_back(x);
  double best_res = detail::sup_residual(spec, scaling, x);
  Vec best_x = x;

  for (int it = 0; it < opt.max_iter && best_res >= opt.tol; ++it) {
    res.iterations = it + 1;
    if (opt.method == SolveMethod::DampedFixedPoint) {
      Vec t = spec.A * (g2.asDiagonal() * x);
      for (int i = 0; i < spec.k; ++i) t(i) = std::tanh(t(i));
      x = (1.0 - opt.omega) * x + opt.omega * t;
    } else {
      const Vec grad = rate_I_gradient(spec, scaling, x);
      const Mat hess = rate_I_hessian(spec, scaling, x);
      Eigen::FullPivLU<Mat> lu(hess);
      if (!lu.isInvertible()) break;  // degenerate Hessian; keep best iterate
      Vec step = lu.solve(-grad);
      // Backtrack into the open cube and insist on residual decrease.
      double t = 1.0;
      const double cur = detail::sup_residual(spec, scaling, x);
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
        Vec cand = x + t * step;
        if (cand.array().abs().maxCoeff() >= 1.0 - 1e-14) continue;
        if (detail::sup_residual(spec, scaling, cand) < cur || t < 1e-12) {
          x = cand;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    if (opt.capture_trace) res.trace.push_back(x);
    const double r = detail::sup_residual(spec, scaling, x);
    if (r < best_res) {
      best_res = r;
      best_x = x;
    }
  }

  res.point.x = best_x;
  res.point.residual = best_res;
  res.point.value = rate_I(spec, scaling, best_x);
  res.point.definiteness = detail::classify(spec, scaling, best_x);
  res.converged = best_res < opt.tol;
  return res;
}

// Positive root of tanh(beta*m) = m; returns 0 for beta <= 1.
inline double curie_weiss_root(double beta) {
  if (!(beta > 1.0)) return 0.0;
  double lo = 0.0, hi = 1.0 - 1e-16;
  // f(m) = tanh(beta m) - m is positive near 0+ and negative near 1.
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = std::tanh(beta * mid) - mid;
    if (f > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double m = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it) {  // Newton polish
    const double th = std::tanh(beta * m);
    const double f = th - m;
    const double fp = beta * (1.0 - th * th) - 1.0;
    if (fp == 0.0) break;
    m -= f / fp;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Multi-start search for critical points: every {-1/2, 0, +1/2}^k sign
// pattern (capped at 3^10 patterns) plus `n_starts` Halton points in
// (-0.9, 0.9)^k, solved by the damped fixed-point map and polished / retried
// with Newton. Distinct points are merged with sup-norm radius 1e-6 and
// returned sorted by decreasing value. Completeness is best effort.
// ---------------------------------------------------------------------------
inline std::vector<CriticalPoint> find_maximizers(const BlockModelSpec& spec, const BlockScaling& scaling,
                                                  int n_starts) {
  if (n_starts < 2 * spec.k) fail(Errc::InvalidArgument, "n_starts must be at least 2k");

  std::vector<Vec> seeds;
  std::int64_t patterns = 1;
  for (int i = 0; i < std::min(spec.k, 10); ++i) patterns *= 3;
  for (std::int64_t p = 0; p < patterns; ++p) {
    Vec s = Vec::Zero(spec.k);
    std::int64_t q = p;
    for (int i = 0; i < spec.k; ++i) {
      s(i) = 0.5 * static_cast<double>(q % 3 - 1);
      q /= 3;
    }
    seeds.push_back(std::move(s));
  }
  for (int j = 1; j <= n_starts; ++j) {
    const auto u = halton_point(static_cast<std::uint64_t>(j), spec.k);
    Vec s(spec.k);
    for (int i = 0; i < spec.k; ++i) s(i) = -0.9 + 1.8 * u[static_cast<std::size_t>(i)];
    seeds.push_back(std::move(s));
  }

  std::vector<CriticalPoint> found;
  // Two solved points describe the same root when the whole segment between
  // them also meets the residual tolerance; near criticality the residual is
  // cubic in x and a fixed merge radius would report one flat root as many.
  // Genuine distinct roots always have large interior residuals in between.
  auto same_flat_root = [&](const Vec& a, const Vec& b) {
    for (int s = 1; s <= 7; ++s) {
      const double t = static_cast<double>(s) / 8.0;
      if (detail::sup_residual(spec, scaling, (1.0 - t) * a + t * b) >= kTolMeanField) return false;
    }
    return true;
  };
  auto consider = [&](const SolveResult& r) {
    if (!r.converged) return;
    for (auto& p : found) {
      const double dist = (p.x - r.point.x).array().abs().maxCoeff();
      if (dist < kDedupRadius) return;
      if (dist < 0.05 && same_flat_root(p.x, r.point.x)) {
        if (r.point.residual < p.residual) p = r.point;
        return;
      }
    }
    found.push_back(r.point);
  };

  SolveOptions fp;
  fp.method = SolveMethod::DampedFixedPoint;
  fp.max_iter = 20000;
  SolveOptions nw;
  nw.method = SolveMethod::Newton;
  nw.max_iter = 200;

  for (const auto& s : seeds) {
    const SolveResult r = solve_mean_field(spec, scaling, s, fp);
    consider(r);
    if (!r.converged) consider(solve_mean_field(spec, scaling, r.point.x, nw));
    consider(solve_mean_field(spec, scaling, s, nw));
  }

  std::sort(found.begin(), found.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
    if (a.value != b.value) return a.value > b.value;
    return std::lexicographical_compare(b.x.data(), b.x.data() + b.x.size(), a.x.data(), a.x.data() + a.x.size());
  });
  return found;
}

// The max-value subset of a decreasing-value critical point list. The band
// only absorbs evaluation roundoff (~1e-15); near-critical wells separated
// by less than it are genuinely indistinguishable.
inline std::vector<CriticalPoint> global_maximizers(const std::vector<CriticalPoint>& points) {
  std::vector<CriticalPoint> out;
  if (points.empty()) return out;
  const double top = points.front().value;
  const double band = 1e-12 * std::max(1.0, std::fabs(top));
  for (const auto& p : points)
    if (p.value >= top - band) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Structured low-temperature solution x = m* v for matrices whose top
// eigenvector rescales into {-1,0,1}^k (uniform case, ||A|| > k). m* is the
// positive Curie-Weiss root at beta = lambda_k / k.
// ---------------------------------------------------------------------------
struct StructuredSolution {
  CriticalPoint point;
  double m_star = 0.0;
  double beta_cw = 0.0;
  VecI pattern;  // the rescaled top eigenvector in {-1,0,1}^k
};

inline std::optional<StructuredSolution> structured_solution(const BlockModelSpec& spec,
                                                             const BlockScaling& scaling) {
  if (!scaling.uniform()) return std::nullopt;
  const SpectralData sd = spectral(spec, scaling, SpectralProfile::Asymptotic);
  const double beta = sd.op_norm;  // = lambda_k(A)/k in the uniform case
  if (!(beta > 1.0)) return std::nullopt;

  Vec v = sd.eigenvectors.row(spec.k - 1);
  const double mx = v.array().abs().maxCoeff();
  if (mx == 0.0) return std::nullopt;
  v /= mx;
  VecI pattern(spec.k);
  for (int i = 0; i < spec.k; ++i) {
    const double r = std::round(v(i));
    if (std::fabs(v(i) - r) > 1e-8 || std::fabs(r) > 1.0) return std::nullopt;
    pattern(i) = static_cast<int>(r);
  }

  StructuredSolution s;
  s.beta_cw = beta;
  s.m_star = curie_weiss_root(beta);
  if (!(s.m_star > 0.0)) return std::nullopt;
  s.pattern = pattern;
  s.point.x = s.m_star * pattern.cast<double>();
  s.point.residual = detail::sup_residual(spec, scaling, s.point.x);
  if (s.point.residual >= kTolMeanField) return std::nullopt;
  s.point.value = rate_I(spec, scaling, s.point.x);
  s.point.definiteness = detail::classify(spec, scaling, s.point.x);
  return s;
}

// ---------------------------------------------------------------------------
// Closed-form value of I at a solved critical point:
//   I(x) = -1/2 sum_i gamma_i^2 ( x_i artanh(x_i) + log(1 - x_i^2) ).
// The sign is pinned numerically against rate_I (see tests); the positive
// variant fails the cross-check at every nonzero critical point.
// ---------------------------------------------------------------------------
inline double critical_value_identity(const BlockModelSpec& spec, const BlockScaling& scaling,
                                      const CriticalPoint& p) {
  if (!(p.residual < kTolMeanField))
    fail(Errc::NotACriticalPoint, "residual " + std::to_string(p.residual) + " >= tolerance");
  double v = 0.0;
  for (int i = 0; i < spec.k; ++i) {
    const double g2 = scaling.gamma_inf(i) * scaling.gamma_inf(i);
    const double xi = p.x(i);
    v += g2 * (xi * std::atanh(xi) + std::log1p(-xi * xi));
  }
  return -0.5 * v;
}

}  // namespace blockspin
