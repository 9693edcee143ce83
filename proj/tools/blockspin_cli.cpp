// Command-line front end: model validation, exact oracle, Glauber sampling,
// rate-function analysis, CLT and critical-scaling checks, and the Stein
// error-term sweep. All reports are JSON (stdout or --out); bulk data is CSV.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "blockspin/blockspin.hpp"

namespace bs = blockspin;
using bs::json;

namespace {

int default_threads() {
  if (const char* env = std::getenv("BLOCKSPIN_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

struct SpecInput {
  std::string path;
  std::string text;
  bs::BlockModelSpec spec;
};

SpecInput load_spec(const std::string& path, const std::string& gamma_inf_csv) {
  SpecInput in;
  in.path = path;
  in.text = bs::read_file(path);
  in.spec = bs::spec_from_json(bs::parse_json_text(in.text, path));
  if (!gamma_inf_csv.empty()) {
    std::vector<double> g;
    std::stringstream ss(gamma_inf_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) g.push_back(std::stod(tok));
    bs::Vec v(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) v(static_cast<Eigen::Index>(i)) = g[i];
    in.spec.gamma_inf_override = v;
  }
  return in;
}

void emit_report(const json& report, const std::string& out_path) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    bs::write_text_file(out_path, text);
  }
}

json spectral_to_json(const bs::SpectralData& sd) {
  return json{{"eigenvalues", bs::json_from_vec(sd.eigenvalues)},
              {"eigenvectors", bs::json_from_mat(sd.eigenvectors)},
              {"op_norm", sd.op_norm},
              {"regime", bs::regime_name(sd.regime)}};
}

json sampler_config_to_json(const bs::SamplerConfig& cfg) {
  const char* init = cfg.init == bs::InitMode::AllPlus        ? "all_plus"
                     : cfg.init == bs::InitMode::UniformRandom ? "uniform_random"
                                                               : "custom";
  return json{{"seed", cfg.seed},       {"burn_in", cfg.burn_in},   {"thinning", cfg.thinning},
              {"n_samples", cfg.n_samples}, {"n_chains", cfg.n_chains}, {"init", init}};
}

struct SamplerFlags {
  std::uint64_t seed = 0x5EEDB10C'55B1A5ULL;
  int burn_in = 1000;
  int thinning = 1;
  int n_samples = 10000;
  int n_chains = 1;
  std::string init = "all_plus";

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_option("--burn-in", burn_in, "burn-in sweeps per chain");
    cmd->add_option("--thinning", thinning, "sweeps between retained samples");
    cmd->add_option("--n-samples", n_samples, "retained samples per chain");
    cmd->add_option("--n-chains", n_chains, "independent chains");
    cmd->add_option("--init", init, "all_plus | uniform_random | all_minus");
  }

  bs::SamplerConfig config(const bs::BlockModelSpec& spec, int threads) const {
    bs::SamplerConfig cfg;
    cfg.seed = seed;
    cfg.burn_in = burn_in;
    cfg.thinning = thinning;
    cfg.n_samples = n_samples;
    cfg.n_chains = n_chains;
    cfg.threads = threads;
    if (init == "all_plus") {
      cfg.init = bs::InitMode::AllPlus;
    } else if (init == "uniform_random") {
      cfg.init = bs::InitMode::UniformRandom;
    } else if (init == "all_minus") {
      cfg.init = bs::InitMode::Custom;
      cfg.custom_init.assign(static_cast<std::size_t>(spec.total_sites()), std::int8_t{-1});
    } else {
      bs::fail(bs::Errc::InvalidArgument, "unknown init mode: " + init);
    }
    return cfg;
  }
};

// ---------------------------------------------------------------------------

int cmd_validate(const SpecInput& in, const std::string& out_path) {
  const bs::BlockScaling scaling = bs::validate_spec(in.spec);
  const bs::SpectralData fin = bs::spectral(in.spec, scaling, bs::SpectralProfile::FiniteN);
  const bs::SpectralData asym = bs::spectral(in.spec, scaling, bs::SpectralProfile::Asymptotic);
  json rep{{"manifest", bs::manifest_to_json(bs::make_manifest("validate", in.text, 0))},
           {"k", in.spec.k},
           {"N", in.spec.total_sites()},
           {"block_sizes", in.spec.block_sizes},
           {"gamma_n", bs::json_from_vec(scaling.gamma_n)},
           {"gamma_inf", bs::json_from_vec(scaling.gamma_inf)},
           {"uniform", scaling.uniform()},
           {"spectral_finite_n", spectral_to_json(fin)},
           {"spectral_asymptotic", spectral_to_json(asym)},
           {"regime", bs::regime_name(asym.regime)},
           {"op_norm", asym.op_norm}};
  emit_report(rep, out_path);
  return 0;
}

int cmd_oracle(const SpecInput& in, const std::string& out_path, const std::string& pmf_csv,
               std::int64_t max_states, int moment_order, int threads) {
  const bs::MagnetizationPMF pmf = bs::exact_pmf(in.spec, max_states, threads);
  std::ostringstream csv;
  bs::write_pmf_csv(csv, pmf.support, pmf.probs);
  bs::write_text_file(pmf_csv, csv.str());

  json moments;
  for (int order = 1; order <= moment_order; ++order) {
    const bs::MomentTensor t = bs::exact_moments(pmf, in.spec, order);
    if (order == 1) {
      bs::Vec v(in.spec.k);
      for (int i = 0; i < in.spec.k; ++i) v(i) = t.data[static_cast<std::size_t>(i)];
      moments["order1"] = bs::json_from_vec(v);
    } else if (order == 2) {
      bs::Mat m(in.spec.k, in.spec.k);
      for (int i = 0; i < in.spec.k; ++i)
        for (int j = 0; j < in.spec.k; ++j) m(i, j) = t.at2(i, j);
      moments["order2"] = bs::json_from_mat(m);
    } else {
      moments["order" + std::to_string(order)] = t.data;
    }
  }

  json rep{{"manifest", bs::manifest_to_json(bs::make_manifest("oracle", in.text, 0))},
           {"logZ", pmf.log_z},
           {"n_states", pmf.size()},
           {"pmf_csv", pmf_csv},
           {"moments", moments}};
  emit_report(rep, out_path);
  return 0;
}

int cmd_sample(const SpecInput& in, const std::string& out_path, const std::string& samples_csv,
               const SamplerFlags& flags, int threads) {
  const bs::BlockScaling scaling = bs::validate_spec(in.spec);
  const bs::SpectralData asym = bs::spectral(in.spec, scaling, bs::SpectralProfile::Asymptotic);
  const bs::SamplerConfig cfg = flags.config(in.spec, threads);
  const bs::SampleSet samples = bs::collect_samples(in.spec, cfg);

  std::ostringstream csv;
  bs::write_samples_csv(csv, samples);
  bs::write_text_file(samples_csv, csv.str());

  json rep{{"manifest", bs::manifest_to_json(bs::make_manifest("sample", in.text, cfg.seed))},
           {"config", sampler_config_to_json(cfg)},
           {"regime", bs::regime_name(asym.regime)},
           {"metastable", asym.regime == bs::Regime::Low},
           {"samples_csv", samples_csv},
           {"n_rows", samples.size()}};
  if (asym.regime == bs::Regime::Low) rep["warning"] = "metastable: chain may not mix";
  emit_report(rep, out_path);
  return 0;
}

int cmd_analyze_rate(const SpecInput& in, const std::string& out_path, int n_starts) {
  const bs::BlockScaling scaling = bs::validate_spec(in.spec);
  const bs::SpectralData asym = bs::spectral(in.spec, scaling, bs::SpectralProfile::Asymptotic);
  const auto points = bs::find_maximizers(in.spec, scaling, n_starts);
  const auto global = bs::global_maximizers(points);
  const double sup_i = points.empty() ? 0.0 : points.front().value;

  json pts = json::array();
  for (const auto& p : points) {
    pts.push_back(json{{"x", bs::json_from_vec(p.x)},
                       {"value", p.value},
                       {"J", sup_i - p.value},
                       {"residual", p.residual},
                       {"classification", bs::definiteness_name(p.definiteness)},
                       {"closed_form_value", bs::critical_value_identity(in.spec, scaling, p)}});
  }

  json rep{{"manifest", bs::manifest_to_json(bs::make_manifest("analyze-rate", in.text, 0))},
           {"regime", bs::regime_name(asym.regime)},
           {"op_norm", asym.op_norm},
           {"sup_I", sup_i},
           {"n_critical_points", points.size()},
           {"n_global_maxima", global.size()},
           {"critical_points", pts}};

  if (const auto s = bs::structured_solution(in.spec, scaling)) {
    rep["structured_solution"] = json{{"x", bs::json_from_vec(s->point.x)},
                                      {"m_star", s->m_star},
                                      {"beta_cw", s->beta_cw},
                                      {"pattern", bs::json_from_veci(s->pattern)},
                                      {"residual", s->point.residual},
                                      {"value", s->point.value}};
  } else {
    rep["structured_solution"] = nullptr;
  }
  emit_report(rep, out_path);
  return 0;
}

int cmd_verify_clt(const SpecInput& in, const std::string& out_path, bool exact, bool sample,
                   const std::string& samples_csv, const SamplerFlags& flags, std::int64_t max_states,
                   int threads) {
  const bs::BlockScaling scaling = bs::validate_spec(in.spec);
  bs::CovarianceReport rep;
  std::uint64_t seed = 0;
  if (exact) {
    rep = bs::clt_check(in.spec, scaling, bs::exact_pmf(in.spec, max_states, threads));
  } else {
    bs::Mat m_hat;
    std::size_t n_chains = 1;
    if (sample) {
      const bs::SamplerConfig cfg = flags.config(in.spec, threads);
      seed = cfg.seed;
      m_hat = bs::collect_samples(in.spec, cfg).m_hat;
      n_chains = static_cast<std::size_t>(cfg.n_chains);
    } else {
      m_hat = bs::read_samples_csv(samples_csv, in.spec.k).m_hat;
    }
    rep = bs::clt_check(in.spec, scaling, m_hat, n_chains);
  }
  json j{{"manifest", bs::manifest_to_json(bs::make_manifest("verify-clt", in.text, seed))},
         {"mode", rep.mode},
         {"sigma_inf", bs::json_from_mat(rep.sigma_inf)},
         {"sigma_n", bs::json_from_mat(rep.sigma_n)},
         {"frobenius_gap", rep.frobenius_gap}};
  if (rep.sigma_n_se) j["sigma_n_se"] = bs::json_from_mat(*rep.sigma_n_se);
  if (rep.per_entry_z) j["per_entry_z"] = bs::json_from_mat(*rep.per_entry_z);
  emit_report(j, out_path);
  return 0;
}

int cmd_critical(const SpecInput& in, const std::string& out_path, bool sample, const std::string& samples_csv,
                 bool convolve, const std::string& wprime_csv, const SamplerFlags& flags, int threads) {
  const bs::BlockScaling scaling = bs::validate_spec(in.spec);
  Eigen::MatrixXi m;
  std::size_t n_chains = 1;
  std::uint64_t seed = 0;
  if (sample) {
    const bs::SamplerConfig cfg = flags.config(in.spec, threads);
    seed = cfg.seed;
    m = bs::collect_samples(in.spec, cfg).m;
    n_chains = static_cast<std::size_t>(cfg.n_chains);
  } else {
    m = bs::read_samples_csv(samples_csv, in.spec.k).m;
  }
  const bs::CriticalReport rep = bs::critical_check(in.spec, scaling, m, convolve, seed, n_chains);

  if (!wprime_csv.empty()) {
    std::ostringstream csv;
    for (int i = 0; i < in.spec.k; ++i) csv << (i ? "," : "") << "w_prime_" << (i + 1);
    csv << "\n";
    for (Eigen::Index r = 0; r < rep.w_prime.rows(); ++r) {
      for (int i = 0; i < in.spec.k; ++i) csv << (i ? "," : "") << bs::fmt17(rep.w_prime(r, i));
      csv << "\n";
    }
    bs::write_text_file(wprime_csv, csv.str());
  }

  json mom = json::array();
  for (std::size_t i = 0; i < rep.moments.size(); ++i) {
    mom.push_back(json{{"coordinate", i + 1},
                       {"sample", bs::json_from_vec(rep.moments[i].sample)},
                       {"se", bs::json_from_vec(rep.moments[i].se)},
                       {"target", bs::json_from_vec(rep.moments[i].target)}});
  }
  json j{{"manifest", bs::manifest_to_json(bs::make_manifest("critical", in.text, seed))},
         {"quad_coeffs", bs::json_from_vec(rep.quad_coeffs)},
         {"sigma2", rep.sigma2},
         {"convolved", rep.convolved},
         {"n_samples", rep.w_prime.rows()},
         {"moments", mom}};
  if (rep.ks_last) j["ks_last"] = *rep.ks_last;
  if (!wprime_csv.empty()) j["wprime_csv"] = wprime_csv;
  emit_report(j, out_path);
  return 0;
}

int cmd_stein_rate(const SpecInput& in, const std::string& out_path, const std::string& sizes_csv,
                   const SamplerFlags& flags, const std::string& sweep_csv, int threads) {
  std::vector<int> sizes;
  {
    std::stringstream ss(sizes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) sizes.push_back(std::stoi(tok));
  }
  const bs::SamplerConfig cfg = flags.config(in.spec, threads);
  bs::validate_spec(in.spec);
  const bs::RateSweepResult sweep = bs::rate_sweep(in.spec, sizes, cfg);

  json per_n = json::array();
  for (std::size_t i = 0; i < sweep.reports.size(); ++i) {
    const auto& r = sweep.reports[i];
    per_n.push_back(json{{"N", r.n_sites},
                         {"E1", r.e1},
                         {"E2", r.e2},
                         {"E3", r.e3},
                         {"se1", r.se1},
                         {"se2", r.se2},
                         {"se3", r.se3},
                         {"e2_envelope", r.e2_envelope},
                         {"e2_within_envelope", r.e2_within_envelope},
                         {"lambda_inv_row_sums", bs::json_from_vec(r.lambda_inv_row_sums)},
                         {"n_samples", r.n_samples}});
  }
  auto fit_json = [](const bs::LineFit& f) {
    return json{{"slope", f.slope},
                {"slope_se", f.slope_se},
                {"ci95", {f.slope - 1.96 * f.slope_se, f.slope + 1.96 * f.slope_se}},
                {"intercept", f.intercept}};
  };
  json j{{"manifest", bs::manifest_to_json(bs::make_manifest("stein-rate", in.text, cfg.seed))},
         {"sizes", sizes},
         {"config", sampler_config_to_json(cfg)},
         {"per_n", per_n},
         {"slope_max_e", fit_json(sweep.max_e)},
         {"slope_n_max_e", fit_json(sweep.n_max_e)}};

  if (!sweep_csv.empty()) {
    std::ostringstream csv;
    csv << "N,E1,E2,E3,se1,se2,se3,e2_envelope\n";
    for (const auto& r : sweep.reports) {
      csv << r.n_sites << "," << bs::fmt17(r.e1) << "," << bs::fmt17(r.e2) << "," << bs::fmt17(r.e3) << ","
          << bs::fmt17(r.se1) << "," << bs::fmt17(r.se2) << "," << bs::fmt17(r.se3) << ","
          << bs::fmt17(r.e2_envelope) << "\n";
    }
    bs::write_text_file(sweep_csv, csv.str());
    j["sweep_csv"] = sweep_csv;
  }
  emit_report(j, out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"block spin Ising model toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // accept global flags after the subcommand name

  int threads = default_threads();
  app.add_option("--threads", threads, "worker threads (env BLOCKSPIN_THREADS)");

  std::string spec_path, out_path, gamma_inf_csv;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("spec", spec_path, "model spec JSON file")->required();
    cmd->add_option("--out", out_path, "write the JSON report here instead of stdout");
    cmd->add_option("--gamma-inf", gamma_inf_csv, "override asymptotic block profile, comma separated");
  };

  auto* validate = app.add_subcommand("validate", "check spec invariants and classify the regime");
  add_common(validate);

  auto* oracle = app.add_subcommand("oracle", "exact magnetization pmf and moments");
  add_common(oracle);
  std::string pmf_csv = "oracle_pmf.csv";
  std::int64_t max_states = bs::kDefaultEnumerationCap;
  int moment_order = 2;
  oracle->add_option("--pmf-csv", pmf_csv, "pmf CSV output path");
  oracle->add_option("--max-states", max_states, "enumeration cap");
  oracle->add_option("--moment-order", moment_order, "report moments up to this order (1..4)");

  auto* sample = app.add_subcommand("sample", "Glauber-dynamics samples");
  add_common(sample);
  std::string samples_csv = "samples.csv";
  sample->add_option("--samples-csv", samples_csv, "samples CSV output path");
  SamplerFlags sample_flags;
  sample_flags.attach(sample);

  auto* analyze = app.add_subcommand("analyze-rate", "critical points and maximizers of the rate function");
  add_common(analyze);
  int n_starts = 64;
  analyze->add_option("--n-starts", n_starts, "extra low-discrepancy starting points");

  auto* clt = app.add_subcommand("verify-clt", "finite-n vs limiting covariance");
  add_common(clt);
  bool clt_exact = false, clt_sample = false;
  std::string clt_samples_csv;
  clt->add_flag("--exact", clt_exact, "use the exact oracle pmf");
  clt->add_flag("--sample", clt_sample, "draw samples inline");
  clt->add_option("--samples-csv", clt_samples_csv, "read samples from CSV");
  SamplerFlags clt_flags;
  clt_flags.attach(clt);
  std::int64_t clt_max_states = bs::kDefaultEnumerationCap;
  clt->add_option("--max-states", clt_max_states, "enumeration cap for --exact");

  auto* critical = app.add_subcommand("critical", "critical-scaling statistic and moment comparison");
  add_common(critical);
  bool crit_sample = false, crit_convolve = false;
  std::string crit_samples_csv, wprime_csv;
  critical->add_flag("--sample", crit_sample, "draw samples inline");
  critical->add_option("--samples-csv", crit_samples_csv, "read samples from CSV");
  critical->add_flag("--convolve", crit_convolve, "add the Gaussian smoothing noise");
  critical->add_option("--wprime-csv", wprime_csv, "write transformed samples here");
  SamplerFlags crit_flags;
  crit_flags.attach(critical);

  auto* stein = app.add_subcommand("stein-rate", "error terms E1,E2,E3 along an N ladder with slope fits");
  add_common(stein);
  std::string sizes_csv, sweep_csv;
  stein->add_option("--sizes", sizes_csv, "comma separated ascending system sizes")->required();
  stein->add_option("--sweep-csv", sweep_csv, "write the per-N sweep as CSV");
  SamplerFlags stein_flags;
  stein_flags.attach(stein);

  CLI11_PARSE(app, argc, argv);

  try {
    const SpecInput in = load_spec(spec_path, gamma_inf_csv);
    if (validate->parsed()) return cmd_validate(in, out_path);
    if (oracle->parsed()) return cmd_oracle(in, out_path, pmf_csv, max_states, moment_order, threads);
    if (sample->parsed()) return cmd_sample(in, out_path, samples_csv, sample_flags, threads);
    if (analyze->parsed()) return cmd_analyze_rate(in, out_path, n_starts);
    if (clt->parsed()) {
      if (static_cast<int>(clt_exact) + static_cast<int>(clt_sample) + static_cast<int>(!clt_samples_csv.empty()) != 1)
        bs::fail(bs::Errc::InvalidArgument, "choose exactly one of --exact, --sample, --samples-csv");
      return cmd_verify_clt(in, out_path, clt_exact, clt_sample, clt_samples_csv, clt_flags, clt_max_states,
                            threads);
    }
    if (critical->parsed()) {
      if (static_cast<int>(crit_sample) + static_cast<int>(!crit_samples_csv.empty()) != 1)
        bs::fail(bs::Errc::InvalidArgument, "choose exactly one of --sample, --samples-csv");
      return cmd_critical(in, out_path, crit_sample, crit_samples_csv, crit_convolve, wprime_csv, crit_flags,
                          threads);
    }
    if (stein->parsed()) return cmd_stein_rate(in, out_path, sizes_csv, stein_flags, sweep_csv, threads);
  } catch (const bs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_validation() ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
