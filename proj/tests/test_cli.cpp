#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
  const char* p = std::getenv("BLOCKSPIN_CLI");
  return p ? p : "";
}

std::string data_path(const std::string& name) { return std::string(BLOCKSPIN_TEST_DATA) + "/" + name; }

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "blockspin_cli_test";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("err" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = cli_path() + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("cli validate reports the regime") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const auto r = run_cli("validate " + data_path("ht2.json"));
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["regime"] == "HighStrict");
  CHECK(std::fabs(rep["op_norm"].get<double>() - 0.85) < 1e-12);
  CHECK(rep["N"] == 12);
  CHECK(rep["manifest"]["tool_version"] == "0.1.0");
  CHECK(rep["manifest"]["spec_digest"].get<std::string>().rfind("fnv1a64:", 0) == 0);
}

TEST_CASE("cli validate rejects an asymmetric matrix with exit 2") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const auto r = run_cli("validate " + data_path("asym.json"));
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("AsymmetricMatrix") != std::string::npos);
}

TEST_CASE("cli reports malformed JSON with line and column") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const fs::path bad = fs::temp_directory_path() / "blockspin_bad.json";
  std::ofstream(bad) << "{\n  \"k\": 1,\n  \"block_sizes\": [2\n}\n";
  const auto r = run_cli("validate " + bad.string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("line") != std::string::npos);
  CHECK(r.err.find("column") != std::string::npos);
}

TEST_CASE("cli oracle writes the uniform pmf for the free two-spin model") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const fs::path csv = fs::temp_directory_path() / "blockspin_n2_pmf.csv";
  const auto r = run_cli("oracle " + data_path("n2_zero.json") + " --pmf-csv " + csv.string());
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(std::fabs(rep["logZ"].get<double>() - 2.0 * std::log(2.0)) < 1e-12);

  std::ifstream in(csv);
  std::string header, l1, l2, l3;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  CHECK(header == "m_1,prob");
  CHECK(l1 == "-2,0.25");
  CHECK(l2 == "0,0.5");
  CHECK(l3 == "2,0.25");
}

TEST_CASE("cli sample is reproducible byte for byte") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const fs::path dir = fs::temp_directory_path() / "blockspin_cli_test";
  fs::create_directories(dir);
  const fs::path csv_a = dir / "sa.csv", csv_b = dir / "sb.csv";
  const std::string flags = " --seed 42 --burn-in 50 --n-samples 500 --n-chains 2";
  const auto ra = run_cli("sample " + data_path("ht2.json") + " --samples-csv " + csv_a.string() + flags);
  const auto rb = run_cli("sample " + data_path("ht2.json") + " --samples-csv " + csv_b.string() + flags);
  REQUIRE(ra.exit_code == 0);
  REQUIRE(rb.exit_code == 0);

  std::ifstream fa(csv_a, std::ios::binary), fb(csv_b, std::ios::binary);
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().find("chain,index,m_1,m_2,m_hat_1,m_hat_2") == 0);

  const json meta = json::parse(ra.out);
  CHECK(meta["regime"] == "HighStrict");
  CHECK(meta["metastable"] == false);
  CHECK(meta["config"]["seed"] == 42);
}

TEST_CASE("cli sample flags the metastable regime") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const fs::path csv = fs::temp_directory_path() / "blockspin_cli_test" / "meta.csv";
  const auto r = run_cli("sample " + data_path("lt2.json") + " --samples-csv " + csv.string() +
                         " --burn-in 5 --n-samples 50");
  REQUIRE(r.exit_code == 0);
  const json meta = json::parse(r.out);
  CHECK(meta["metastable"] == true);
  CHECK(meta["warning"].get<std::string>().find("metastable") != std::string::npos);
}

TEST_CASE("cli analyze-rate finds the two low-temperature maximizers") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const auto r = run_cli("analyze-rate " + data_path("lt2.json"));
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["regime"] == "Low");
  CHECK(rep["n_global_maxima"] == 2);
  CHECK(rep["structured_solution"].is_object());
  CHECK(std::fabs(rep["structured_solution"]["beta_cw"].get<double>() - 1.3) < 1e-12);
  // every reported point carries the closed-form cross-check
  for (const auto& p : rep["critical_points"]) {
    CHECK(std::fabs(p["value"].get<double>() - p["closed_form_value"].get<double>()) < 1e-9);
  }
}

TEST_CASE("cli verify-clt exact mode emits both covariance matrices") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const auto r = run_cli("verify-clt " + data_path("ht2.json") + " --exact");
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["mode"] == "exact");
  CHECK(std::fabs(rep["sigma_inf"][0][0].get<double>() - 4.0) < 1e-10);
  CHECK(std::fabs(rep["sigma_inf"][0][1].get<double>() - 8.0 / 3.0) < 1e-10);
  CHECK(rep["frobenius_gap"].get<double>() > 0.0);
}

TEST_CASE("cli verify-clt rejects low-temperature input with exit 2") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const auto r = run_cli("verify-clt " + data_path("lt2.json") + " --exact");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("NotHighTemperature") != std::string::npos);
}

TEST_CASE("cli critical runs on the scalar critical spec") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const auto r = run_cli("critical " + data_path("cw_critical.json") +
                         " --sample --burn-in 200 --thinning 2 --n-samples 2000 --seed 7");
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(std::fabs(rep["sigma2"].get<double>() - 1.0 / 12.0) < 1e-12);
  CHECK(rep["convolved"] == false);
  CHECK(rep["moments"].size() == 1);
  CHECK(rep.contains("ks_last"));
}

TEST_CASE("cli stein-rate produces a sweep with slopes") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const fs::path csv = fs::temp_directory_path() / "blockspin_cli_test" / "sweep.csv";
  const auto r = run_cli("stein-rate " + data_path("ht2.json") +
                         " --sizes 64,128,256,512 --burn-in 100 --n-samples 500 --seed 9 --sweep-csv " +
                         csv.string());
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["per_n"].size() == 4);
  for (const auto& row : rep["per_n"]) CHECK(row["e2_within_envelope"] == true);
  CHECK(rep["slope_max_e"]["slope"].get<double>() < -1.0);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "N,E1,E2,E3,se1,se2,se3,e2_envelope");
}

TEST_CASE("cli gamma-inf override changes the asymptotic profile") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const auto r = run_cli("validate " + data_path("ht2.json") + " --gamma-inf 0.6,0.8");
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(std::fabs(rep["gamma_inf"][0].get<double>() - 0.6) < 1e-15);
  CHECK(rep["uniform"] == false);
  // finite-n spectrum unchanged, asymptotic one moved
  CHECK(std::fabs(rep["spectral_finite_n"]["op_norm"].get<double>() - 0.85) < 1e-12);
  CHECK(std::fabs(rep["spectral_asymptotic"]["op_norm"].get<double>() -
                  rep["spectral_finite_n"]["op_norm"].get<double>()) > 1e-3);
}

#include "blockspin/io.hpp"

TEST_CASE("model spec JSON schema errors are named") {
  using blockspin::Errc;
  using blockspin::Error;
  auto parse = [](const std::string& text) {
    return blockspin::spec_from_json(blockspin::parse_json_text(text, "inline"));
  };
  CHECK_THROWS_MATCHES(parse("{\"block_sizes\": [2], \"A\": [[1]]}"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::ParseError; }));
  CHECK_THROWS_MATCHES(parse("{\"k\": 2, \"block_sizes\": [2, 2], \"A\": [[1, 0], [0]]}"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::ParseError; }));
  // round trip of a valid spec
  const auto spec = parse("{\"k\": 2, \"block_sizes\": [3, 4], \"A\": [[1.5, 0.25], [0.25, 1.5]], "
                          "\"gamma_inf\": [0.6, 0.8]}");
  CHECK(spec.k == 2);
  CHECK(spec.block_sizes == std::vector<int>{3, 4});
  CHECK(spec.A(0, 1) == 0.25);
  REQUIRE(spec.gamma_inf_override.has_value());
  CHECK((*spec.gamma_inf_override)(1) == 0.8);
}

TEST_CASE("cli verify-clt consumes its own sample CSV") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const fs::path dir = fs::temp_directory_path() / "blockspin_cli_test";
  fs::create_directories(dir);
  const fs::path csv = dir / "roundtrip.csv";
  const auto rs = run_cli("sample " + data_path("ht2.json") + " --samples-csv " + csv.string() +
                          " --seed 1 --burn-in 300 --n-samples 20000");
  REQUIRE(rs.exit_code == 0);
  const auto rv = run_cli("verify-clt " + data_path("ht2.json") + " --samples-csv " + csv.string());
  REQUIRE(rv.exit_code == 0);
  const json rep = json::parse(rv.out);
  CHECK(rep["mode"] == "empirical");
  CHECK(rep.contains("per_entry_z"));
  // empirical Sigma_n at N=12 sits near the exact 1.939 / 0.908 values
  CHECK(std::fabs(rep["sigma_n"][0][0].get<double>() - 1.939) < 0.15);
  CHECK(std::fabs(rep["sigma_n"][0][1].get<double>() - 0.908) < 0.15);
}

TEST_CASE("cli respects BLOCKSPIN_THREADS and stays deterministic across thread counts") {
  if (cli_path().empty()) SKIP("BLOCKSPIN_CLI not set");
  const fs::path dir = fs::temp_directory_path() / "blockspin_cli_test";
  fs::create_directories(dir);
  const fs::path p1 = dir / "t1.csv", p2 = dir / "t2.csv";
  const auto r1 = run_cli("oracle " + data_path("ht2.json") + " --pmf-csv " + p1.string() + " --threads 1");
  REQUIRE(r1.exit_code == 0);
  const std::string env_cmd = "BLOCKSPIN_THREADS=3 " + cli_path() + " oracle " + data_path("ht2.json") +
                              " --pmf-csv " + p2.string() + " > /dev/null 2>&1";
  REQUIRE(std::system(env_cmd.c_str()) == 0);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::ostringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
}

TEST_CASE("sample CSV round-trips doubles exactly") {
  using namespace blockspin;
  BlockModelSpec spec;
  spec.k = 2;
  spec.block_sizes = {6, 6};
  spec.A.resize(2, 2);
  spec.A << 1.1, 0.6, 0.6, 1.1;
  SamplerConfig cfg;
  cfg.seed = 321;
  cfg.burn_in = 20;
  cfg.n_samples = 500;
  const SampleSet out = collect_samples(spec, cfg);

  const fs::path path = fs::temp_directory_path() / "blockspin_roundtrip.csv";
  {
    std::ostringstream ss;
    write_samples_csv(ss, out);
    write_text_file(path.string(), ss.str());
  }
  const SampleSet in = read_samples_csv(path.string(), 2);
  REQUIRE(in.size() == out.size());
  CHECK(in.m == out.m);
  CHECK(in.m_hat == out.m_hat);  // 17 significant digits round-trip bit-exactly
  CHECK(in.chain == out.chain);
}
