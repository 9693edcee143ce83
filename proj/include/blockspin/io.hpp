#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockspin/model.hpp"
#include "blockspin/numeric.hpp"
#include "blockspin/sampler.hpp"
#include "blockspin/version.hpp"

namespace blockspin {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Model spec files: {"k": int, "block_sizes": [int], "A": [[float]],
// "gamma_inf": optional [float]}.
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::InvalidArgument, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void line_column_of_offset(const std::string& text, std::size_t offset, std::size_t& line,
                                  std::size_t& column) {
  line = 1;
  column = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 0, col = 0;
    line_column_of_offset(text, e.byte > 0 ? e.byte - 1 : 0, line, col);
    fail(Errc::ParseError,
         origin + ": malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col));
  }
}

inline BlockModelSpec spec_from_json(const json& j) {
  BlockModelSpec spec;
  if (!j.is_object()) fail(Errc::ParseError, "model spec must be a JSON object");
  if (!j.contains("k") || !j["k"].is_number_integer()) fail(Errc::ParseError, "field 'k' (integer) is required");
  spec.k = j["k"].get<int>();
  if (!j.contains("block_sizes") || !j["block_sizes"].is_array())
    fail(Errc::ParseError, "field 'block_sizes' (array of int) is required");
  for (const auto& v : j["block_sizes"]) {
    if (!v.is_number_integer()) fail(Errc::ParseError, "block_sizes entries must be integers");
    spec.block_sizes.push_back(v.get<int>());
  }
  if (!j.contains("A") || !j["A"].is_array()) fail(Errc::ParseError, "field 'A' (matrix) is required");
  const auto& rows = j["A"];
  spec.A.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != rows.size()) fail(Errc::ParseError, "A must be a square matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (!rows[r][c].is_number()) fail(Errc::ParseError, "A entries must be numbers");
      spec.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
    }
  }
  if (j.contains("gamma_inf")) {
    if (!j["gamma_inf"].is_array()) fail(Errc::ParseError, "gamma_inf must be an array");
    Vec g(static_cast<Eigen::Index>(j["gamma_inf"].size()));
    for (std::size_t i = 0; i < j["gamma_inf"].size(); ++i) g(static_cast<Eigen::Index>(i)) = j["gamma_inf"][i].get<double>();
    spec.gamma_inf_override = g;
  }
  return spec;
}

inline BlockModelSpec read_spec_file(const std::string& path) {
  return spec_from_json(parse_json_text(read_file(path), path));
}

inline json json_from_vec(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json json_from_veci(const VecI& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json json_from_mat(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Run manifest: embedded in every JSON report. Identical (command, spec,
// seed, version) implies byte-identical numeric output; the timestamp is the
// only field allowed to differ.
// ---------------------------------------------------------------------------
struct RunManifest {
  std::string command;
  std::string spec_digest;
  std::uint64_t seed = 0;
  std::string tool_version = kVersion;
  std::string timestamp;
};

inline std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline RunManifest make_manifest(const std::string& command, const std::string& spec_text, std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.spec_digest = "fnv1a64:" + fnv1a64_hex(std::span<const char>(spec_text.data(), spec_text.size()));
  m.seed = seed;
  m.timestamp = utc_timestamp_now();
  return m;
}

inline json manifest_to_json(const RunManifest& m) {
  return json{{"command", m.command},
              {"spec_digest", m.spec_digest},
              {"seed", m.seed},
              {"tool_version", m.tool_version},
              {"timestamp", m.timestamp}};
}

// ---------------------------------------------------------------------------
// CSV output. Numeric fields are printed with 17 significant digits so that
// equal doubles produce equal bytes on any platform.
// ---------------------------------------------------------------------------

inline void write_pmf_csv(std::ostream& os, const Eigen::MatrixXi& support, const Vec& probs) {
  const Eigen::Index k = support.cols();
  for (Eigen::Index i = 0; i < k; ++i) os << "m_" << (i + 1) << ",";
  os << "prob\n";
  for (Eigen::Index r = 0; r < support.rows(); ++r) {
    for (Eigen::Index i = 0; i < k; ++i) os << support(r, i) << ",";
    os << fmt17(probs(r)) << "\n";
  }
}

inline void write_samples_csv(std::ostream& os, const SampleSet& s) {
  const Eigen::Index k = s.m.cols();
  os << "chain,index";
  for (Eigen::Index i = 0; i < k; ++i) os << ",m_" << (i + 1);
  for (Eigen::Index i = 0; i < k; ++i) os << ",m_hat_" << (i + 1);
  os << "\n";
  for (Eigen::Index r = 0; r < s.m.rows(); ++r) {
    os << s.chain[static_cast<std::size_t>(r)] << "," << s.index[static_cast<std::size_t>(r)];
    for (Eigen::Index i = 0; i < k; ++i) os << "," << s.m(r, i);
    for (Eigen::Index i = 0; i < k; ++i) os << "," << fmt17(s.m_hat(r, i));
    os << "\n";
  }
}

inline SampleSet read_samples_csv(const std::string& path, int k) {
  std::ifstream in(path);
  if (!in) fail(Errc::InvalidArgument, "cannot open samples CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) fail(Errc::ParseError, path + ": empty samples CSV");
  SampleSet s;
  std::vector<int> chain, index;
  std::vector<std::vector<int>> m;
  std::vector<std::vector<double>> mh;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    if (static_cast<int>(toks.size()) != 2 + 2 * k)
      fail(Errc::ParseError, path + ": line " + std::to_string(lineno) + " has wrong column count");
    chain.push_back(std::stoi(toks[0]));
    index.push_back(std::stoi(toks[1]));
    std::vector<int> mr(static_cast<std::size_t>(k));
    std::vector<double> mhr(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) mr[static_cast<std::size_t>(i)] = std::stoi(toks[static_cast<std::size_t>(2 + i)]);
    for (int i = 0; i < k; ++i) mhr[static_cast<std::size_t>(i)] = std::stod(toks[static_cast<std::size_t>(2 + k + i)]);
    m.push_back(std::move(mr));
    mh.push_back(std::move(mhr));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(m.size());
  s.chain = std::move(chain);
  s.index = std::move(index);
  s.m.resize(n, k);
  s.m_hat.resize(n, k);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int i = 0; i < k; ++i) {
      s.m(r, i) = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
      s.m_hat(r, i) = mh[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
    }
  return s;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::InvalidArgument, "cannot open for writing: " + path);
  out << text;
}

}  // namespace blockspin
