#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <random>

#include "blockspin/model.hpp"
#include "blockspin/sampler.hpp"
#include "helpers.hpp"

using namespace blockspin;
using bstest::make_spec;
using bstest::mat1;
using bstest::mat2;

TEST_CASE("validate_spec accepts the uniform two-block model") {
  const auto spec = make_spec({6, 6}, mat2(1.1, 0.6, 0.6, 1.1));
  const BlockScaling s = validate_spec(spec);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(s.gamma_n(0) == Catch::Approx(r).margin(1e-15));
  CHECK(s.gamma_n(1) == Catch::Approx(r).margin(1e-15));
  CHECK(s.gamma_inf == s.gamma_n);
  CHECK(s.gamma_n.array().square().sum() == Catch::Approx(1.0).margin(1e-15));
  CHECK(s.uniform());
}

TEST_CASE("validate_spec accepts the scalar Curie-Weiss model") {
  const auto spec = make_spec({10}, mat1(0.5));
  const BlockScaling s = validate_spec(spec);
  CHECK(s.gamma_n(0) == 1.0);
  CHECK(s.gamma_inf(0) == 1.0);
}

TEST_CASE("validate_spec rejects indefinite and malformed matrices") {
  SECTION("indefinite") {
    const auto spec = make_spec({3, 3}, mat2(1, 2, 2, 1));  // eigenvalues -1 and 3
    try {
      validate_spec(spec);
      FAIL("expected NotPositiveDefinite");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NotPositiveDefinite);
      CHECK(std::string(e.what()).find("-1") != std::string::npos);  // reports the smallest eigenvalue
    }
  }
  SECTION("asymmetric") {
    const auto spec = make_spec({3, 3}, mat2(1, 0.5, 0.4, 1));
    CHECK_THROWS_MATCHES(validate_spec(spec), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::AsymmetricMatrix; }));
  }
  SECTION("empty block") {
    const auto spec = make_spec({3, 0}, mat2(1, 0.1, 0.1, 1));
    CHECK_THROWS_MATCHES(validate_spec(spec), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::EmptyBlock; }));
  }
  SECTION("bad gamma override") {
    auto spec = make_spec({3, 3}, mat2(1, 0.1, 0.1, 1));
    Vec g(2);
    g << 0.9, 0.9;  // squares do not sum to one
    spec.gamma_inf_override = g;
    CHECK_THROWS_MATCHES(validate_spec(spec), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::BadBlockScaling; }));
  }
}

TEST_CASE("hamiltonian closed forms") {
  SECTION("all plus in the scalar model: beta*N/2") {
    const double beta = 0.7;
    const auto spec = make_spec({9}, mat1(beta));
    VecI counts(1);
    counts << 9;
    const auto v = view_from_counts(spec, counts);
    CHECK(hamiltonian(spec, v) == Catch::Approx(beta * 9.0 / 2.0).margin(1e-12));
  }
  SECTION("hand-expanded two-block value") {
    // (1/8)(1.1*4 - 0.6*4 - 0.6*4 + 1.1*4) = 4/8 = 0.5
    const auto spec = make_spec({2, 2}, mat2(1.1, 0.6, 0.6, 1.1));
    VecI counts(2);
    counts << 2, 0;  // m = (2, -2)
    const auto v = view_from_counts(spec, counts);
    CHECK(v.m(0) == 2);
    CHECK(v.m(1) == -2);
    CHECK(hamiltonian(spec, v) == Catch::Approx(0.5).margin(1e-14));
  }
  SECTION("zero magnetization gives zero energy") {
    const auto spec = make_spec({4, 4}, mat2(1.2, 0.3, 0.3, 1.2));
    VecI counts(2);
    counts << 2, 2;
    CHECK(hamiltonian(spec, view_from_counts(spec, counts)) == 0.0);
  }
}

TEST_CASE("hamiltonian identities across the three magnetization scalings") {
  std::mt19937_64 rng(12345);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(uniform_below(rng, 4));
    const int n = std::max(k, 4 + static_cast<int>(uniform_below(rng, 57)));
    const auto spec = bstest::random_spec(rng, k, n, 0.2 + 1.3 * uniform01(rng));
    const BlockScaling scaling = validate_spec(spec);
    const auto x = bstest::random_configuration(rng, spec);
    const auto v = magnetizations(spec, x);

    const double h_m = hamiltonian(spec, v);
    const Mat gag = scaling.gamma_n_matrix() * spec.A * scaling.gamma_n_matrix();
    const double h_hat = 0.5 * v.m_hat.dot(gag * v.m_hat);
    const Vec g2 = scaling.gamma_n.array().square();
    const Mat g2ag2 = g2.asDiagonal() * spec.A * g2.asDiagonal();
    const double h_tilde = 0.5 * n * v.m_tilde.dot(g2ag2 * v.m_tilde);

    const double scale = std::max(1.0, std::fabs(h_m));
    CHECK(std::fabs(h_m - h_hat) / scale < 1e-10);
    CHECK(std::fabs(h_m - h_tilde) / scale < 1e-10);
  }
}

TEST_CASE("magnetization views") {
  SECTION("all plus") {
    const auto spec = make_spec({4, 9}, mat2(1, 0.1, 0.1, 1));
    VecI counts(2);
    counts << 4, 9;
    const auto v = view_from_counts(spec, counts);
    CHECK(v.m(0) == 4);
    CHECK(v.m(1) == 9);
    CHECK(v.m_tilde(0) == 1.0);
    CHECK(v.m_tilde(1) == 1.0);
    CHECK(v.m_hat(0) == Catch::Approx(2.0).margin(1e-15));
    CHECK(v.m_hat(1) == Catch::Approx(3.0).margin(1e-15));
  }
  SECTION("balanced block vanishes") {
    const auto spec = make_spec({4, 4}, mat2(1, 0.1, 0.1, 1));
    VecI counts(2);
    counts << 2, 4;
    const auto v = view_from_counts(spec, counts);
    CHECK(v.m(0) == 0);
    CHECK(v.m_tilde(0) == 0.0);
    CHECK(v.m_hat(0) == 0.0);
  }
  SECTION("counts (5,2) on sizes (6,6)") {
    const auto spec = make_spec({6, 6}, mat2(1.1, 0.6, 0.6, 1.1));
    VecI counts(2);
    counts << 5, 2;
    const auto v = view_from_counts(spec, counts);
    CHECK(v.m(0) == 4);
    CHECK(v.m(1) == -2);
    CHECK(v.m_tilde(0) == Catch::Approx(2.0 / 3.0).margin(1e-15));
    CHECK(v.m_tilde(1) == Catch::Approx(-1.0 / 3.0).margin(1e-15));
    CHECK(v.m_hat(0) == Catch::Approx(4.0 / std::sqrt(6.0)).margin(1e-15));
    CHECK(v.m_hat(1) == Catch::Approx(-2.0 / std::sqrt(6.0)).margin(1e-15));
  }
}

TEST_CASE("single spin flips move one block count by one") {
  std::mt19937_64 rng(777);
  const auto spec = bstest::random_spec(rng, 3, 30, 0.8);
  auto x = bstest::random_configuration(rng, spec);
  const auto off = spec.block_offsets();
  for (int trial = 0; trial < 100; ++trial) {
    const int site = static_cast<int>(uniform_below(rng, 30));
    int b = 0;
    while (site >= off[static_cast<std::size_t>(b) + 1]) ++b;
    const VecI before = x.plus_counts;
    const auto m_before = magnetizations(spec, x).m;

    auto& s = x.spins[static_cast<std::size_t>(site)];
    s = static_cast<std::int8_t>(-s);
    x.plus_counts(b) += s;  // incremental update
    const auto m_after = magnetizations(spec, x).m;

    for (int i = 0; i < spec.k; ++i) {
      if (i == b)
        CHECK(std::abs(m_after(i) - m_before(i)) == 2);
      else
        CHECK(m_after(i) == m_before(i));
    }
    CHECK((x.plus_counts - before).cwiseAbs().sum() == 1);
    // magnetizations() recomputed from scratch agrees with the incremental state
    const auto rebuilt = configuration_from_spins(spec, x.spins);
    CHECK(rebuilt.plus_counts == x.plus_counts);
  }
}

TEST_CASE("spectral analysis of the reference matrices") {
  SECTION("reference high-temperature matrix") {
    const auto spec = make_spec({6, 6}, mat2(1.1, 0.6, 0.6, 1.1));
    const auto sd = spectral(spec, validate_spec(spec));
    CHECK(sd.eigenvalues(0) == Catch::Approx(0.25).margin(1e-12));
    CHECK(sd.eigenvalues(1) == Catch::Approx(0.85).margin(1e-12));
    CHECK(sd.op_norm == Catch::Approx(0.85).margin(1e-12));
    CHECK(sd.regime == Regime::HighStrict);
  }
  SECTION("reference low-temperature matrix") {
    const auto spec = make_spec({6, 6}, mat2(1.8, 0.8, 0.8, 1.8));
    const auto sd = spectral(spec, validate_spec(spec));
    CHECK(sd.op_norm == Catch::Approx(1.3).margin(1e-12));
    CHECK(sd.regime == Regime::Low);
  }
  SECTION("scalar critical point") {
    const auto spec = make_spec({5}, mat1(1.0));
    const auto sd = spectral(spec, validate_spec(spec));
    CHECK(sd.op_norm == Catch::Approx(1.0).margin(1e-15));
    CHECK(sd.regime == Regime::Critical);
  }
}

TEST_CASE("spectral reconstruction and sign convention") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(uniform_below(rng, 4));
    const auto spec = bstest::random_spec(rng, k, 12 * k, 0.3 + uniform01(rng));
    const BlockScaling scaling = validate_spec(spec);
    const auto sd = spectral(spec, scaling);

    const Mat rebuilt = sd.eigenvectors.transpose() * sd.eigenvalues.asDiagonal() * sd.eigenvectors;
    CHECK((rebuilt - sd.matrix).cwiseAbs().maxCoeff() < 1e-10);

    const Mat vvt = sd.eigenvectors * sd.eigenvectors.transpose();
    CHECK((vvt - Mat::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-12);

    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) {
        if (sd.eigenvectors(r, c) != 0.0) {
          CHECK(sd.eigenvectors(r, c) > 0.0);
          break;
        }
      }
    }
    for (int i = 1; i < k; ++i) CHECK(sd.eigenvalues(i - 1) <= sd.eigenvalues(i));
  }
}

TEST_CASE("spectra of Gamma A Gamma and Gamma^2 A agree") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(uniform_below(rng, 3));
    const auto spec = bstest::random_spec(rng, k, 10 * k, 0.5 + uniform01(rng));
    const BlockScaling scaling = validate_spec(spec);
    const auto sd = spectral(spec, scaling);

    const Vec g2 = scaling.gamma_inf.array().square();
    const Mat g2a = g2.asDiagonal() * spec.A;  // not symmetric
    Eigen::EigenSolver<Mat> es(g2a);
    REQUIRE(es.info() == Eigen::Success);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(std::fabs(top - sd.op_norm) < 1e-10);
  }
}

TEST_CASE("conditional mean matches the hand-evaluated example") {
  // k=1, A=[[1]], N=2, x=(+1,+1): g_1 = (1/2)*2 - (1/2)*1 = 1/2.
  const auto spec = make_spec({2}, mat1(1.0));
  const auto x = configuration_from_spins(spec, {1, 1});
  CHECK(conditional_mean(spec, x, 0) == Catch::Approx(std::tanh(0.5)).margin(1e-15));

  // flipping x_i leaves g_i unchanged
  auto y = configuration_from_spins(spec, {-1, 1});
  CHECK(conditional_mean(spec, y, 0) == Catch::Approx(std::tanh(0.5)).margin(1e-15));
}
