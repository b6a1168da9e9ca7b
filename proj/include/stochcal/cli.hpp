#pragma once

// The stochcal command line: generate, calibrate, compare and report
// subcommands. Every command writes its fully resolved configuration to
// <out>/config.json; `stochcal --config <out>/config.json` repeats the run.
//
// Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
// configuration error.

#include "stochcal/experiments.hpp"
#include "stochcal/io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace stochcal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Relative output paths are placed under $STOCHCAL_OUTPUT_ROOT when it is set.
inline fs::path resolve_output(const std::string& out) {
  fs::path p(out);
  if (p.is_relative()) {
    if (const char* root = std::getenv("STOCHCAL_OUTPUT_ROOT"); root && *root) p = fs::path(root) / p;
  }
  return p;
}

inline std::string absolute_string(const std::string& path) { return fs::absolute(fs::path(path)).lexically_normal().string(); }

/// "M5(60)" -> "M5_60", usable as a directory name.
inline std::string label_dirname(std::string label) {
  std::replace(label.begin(), label.end(), '(', '_');
  label.erase(std::remove(label.begin(), label.end(), ')'), label.end());
  return label;
}

// ---------------------------------------------------------------------------
// Settings

struct SamplerSettings {
  TmcmcConfig tmcmc;
  double grid_dt = 0.001;
  InitialBeliefSettings initial_belief;
  bool chib_jeliazkov = false;
  std::size_t cj_draws = 0;
  unsigned threads = 1;

  CampaignOptions options(std::uint64_t seed) const {
    CampaignOptions o;
    o.tmcmc = tmcmc;
    o.tmcmc.seed = seed;
    o.tmcmc.threads = threads;
    o.grid_dt = grid_dt;
    o.chib_jeliazkov = chib_jeliazkov;
    o.cj_draws = cj_draws;
    o.initial_belief = initial_belief;
    return o;
  }

  void validate() const {
    tmcmc.validate();
    if (!(grid_dt > 0.0)) throw ConfigError("grid_dt must be positive");
    if (!(initial_belief.velocity_std > 0.0) || !(initial_belief.stiffness_std > 0.0)) {
      throw ConfigError("initial belief standard deviations must be positive");
    }
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

inline Json to_json(const SamplerSettings& s) {
  Json tm = to_json(s.tmcmc);
  tm.erase("seed");
  return Json{{"tmcmc", std::move(tm)},
              {"grid_dt", s.grid_dt},
              {"initial_belief",
               {{"velocity_std", s.initial_belief.velocity_std}, {"stiffness_std", s.initial_belief.stiffness_std}}},
              {"chib_jeliazkov", s.chib_jeliazkov},
              {"cj_draws", s.cj_draws}};
}

inline SamplerSettings sampler_from_json(const Json& j) {
  SamplerSettings s;
  Json tm = j.at("tmcmc");
  tm["seed"] = 0;
  s.tmcmc = tmcmc_config_from_json(tm);
  s.grid_dt = j.at("grid_dt").get<double>();
  s.initial_belief.velocity_std = j.at("initial_belief").at("velocity_std").get<double>();
  s.initial_belief.stiffness_std = j.at("initial_belief").at("stiffness_std").get<double>();
  s.chib_jeliazkov = j.at("chib_jeliazkov").get<bool>();
  s.cj_draws = j.at("cj_draws").get<std::size_t>();
  return s;
}

struct GenerateSettings {
  int case_id = 1;
  std::uint64_t seed = 1;
  double sim_dt = 0.001;
  double noise_std = 10.0;
  std::string out;
};

struct CalibrateSettings {
  std::string model = "M2";
  std::optional<double> init_k;
  std::string data;
  std::uint64_t seed = 1;
  SamplerSettings sampler;
  std::string out;
};

struct CompareSettings {
  std::optional<int> case_id;
  std::string data;
  bool all = false;
  std::vector<std::string> models;
  std::vector<std::string> exclude;
  std::string format = "csv";
  std::uint64_t seed = 1;
  SamplerSettings sampler;
  std::string out;
};

struct ReportSettings {
  std::string in;
  double offset = 1600.0;
  std::string out;
};

// The output directory and thread count are not part of the echoed config, so a
// re-run can target any directory and still produce identical files.
inline Json to_json(const GenerateSettings& s) {
  return Json{{"command", "generate"}, {"case", s.case_id}, {"seed", s.seed}, {"sim_dt", s.sim_dt},
              {"noise_std", s.noise_std}};
}

inline Json to_json(const CalibrateSettings& s) {
  return Json{{"command", "calibrate"},
              {"model", s.model},
              {"init_k", s.init_k ? Json(*s.init_k) : Json(nullptr)},
              {"data", s.data},
              {"seed", s.seed},
              {"sampler", to_json(s.sampler)}};
}

inline Json to_json(const CompareSettings& s) {
  return Json{{"command", "compare"},
              {"case", s.case_id ? Json(*s.case_id) : Json(nullptr)},
              {"data", s.data.empty() ? Json(nullptr) : Json(s.data)},
              {"models", s.models},
              {"exclude", s.exclude},
              {"format", s.format},
              {"seed", s.seed},
              {"sampler", to_json(s.sampler)}};
}

inline Json to_json(const ReportSettings& s) {
  return Json{{"command", "report"}, {"in", s.in}, {"offset", s.offset}};
}

// ---------------------------------------------------------------------------
// Rendering

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double std = 0.0;
  double q005 = 0.0;
  double q500 = 0.0;
  double q995 = 0.0;
};

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::vector<ParamSummary> summarize_posterior(const std::vector<std::string>& names, const Matrix& samples) {
  std::vector<ParamSummary> out;
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    std::vector<double> col(samples.col(i).data(), samples.col(i).data() + samples.rows());
    ParamSummary s;
    s.name = names[static_cast<std::size_t>(i)];
    s.mean = samples.col(i).mean();
    s.std = std::sqrt((samples.col(i).array() - s.mean).square().sum() / static_cast<double>(samples.rows() - 1));
    s.q005 = quantile(col, 0.005);
    s.q500 = quantile(col, 0.5);
    s.q995 = quantile(col, 0.995);
    out.push_back(s);
  }
  return out;
}

/// Fixed-width table. The offset is added to the log evidence and data-fit
/// columns, as in the published tables' "(-1600)" convention.
inline std::string render_table(const ModelComparison& full, const std::vector<SubsetRow>& subsets,
                                double offset = 0.0) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  const std::string suffix = offset != 0.0 ? " (" + format_double(-offset) + ")" : "";
  os << std::left << std::setw(10) << "model" << std::right << std::setw(18) << ("log evidence" + suffix)
     << std::setw(18) << ("data-fit" + suffix) << std::setw(12) << "info gain" << std::setw(10) << "P (%)";
  for (const auto& s : subsets) os << std::setw(10) << ("P" + s.tag + " (%)");
  os << '\n';
  for (std::size_t i = 0; i < full.entries.size(); ++i) {
    const auto& e = full.entries[i];
    os << std::left << std::setw(10) << e.label << std::right << std::setw(18) << e.report.log_evidence + offset
       << std::setw(18) << e.report.avg_data_fit + offset << std::setw(12) << e.report.info_gain << std::setw(10)
       << percent(full.probabilities[i]);
    for (const auto& s : subsets) {
      if (const auto p = s.comparison.probability_of(e.label)) {
        os << std::setw(10) << percent(*p);
      } else {
        os << std::setw(10) << "-";
      }
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline void write_config(const fs::path& dir, const Json& config) { write_json_file(dir / "config.json", config); }

inline void write_model_artifacts(const fs::path& dir, const ModelOutcome& o) {
  write_csv(dir / "posterior.csv", posterior_table(o.param_names, o.run.posterior_samples(), o.run.posterior_log_liks()));
  write_json_file(dir / "stages.json", stages_json(o.run));
  Json map = Json::object();
  for (std::size_t i = 0; i < o.param_names.size(); ++i)
    map[o.param_names[i]] = json_number(o.map_theta[static_cast<Eigen::Index>(i)]);
  write_json_file(dir / "evidence.json",
                  Json{{"model", o.label},
                       {"evidence", to_json(o.evidence)},
                       {"cj_evidence", o.cj_evidence ? to_json(*o.cj_evidence) : Json(nullptr)},
                       {"map", std::move(map)},
                       {"band_slot", o.band_slot}});
  write_csv(dir / "band.csv", band_table(o.band));
  write_csv(dir / "innovations.csv", innovations_table(o.innovations));
}

inline int cmd_generate(const GenerateSettings& s, const fs::path& out_dir, Streams io) {
  TruthConfig cfg = TruthConfig::for_case(s.case_id, s.seed);
  cfg.sim_dt = s.sim_dt;
  cfg.noise_std = s.noise_std;
  const SyntheticDataset ds = generate_dataset(cfg);
  write_dataset(out_dir, ds);
  write_config(out_dir, to_json(s));
  io.out << "observations " << ds.observations.size() << '\n'
         << "signal_rms_mm " << format_double(ds.signal_rms) << '\n'
         << "noise_to_signal_pct " << format_double(percent(ds.noise_ratio)) << '\n';
  return kExitOk;
}

inline int cmd_calibrate(const CalibrateSettings& s, const fs::path& out_dir, Streams io) {
  s.sampler.validate();
  ModelSpec spec = ModelSpec::parse(s.model);
  if (s.init_k) {
    spec.initial_stiffness = *s.init_k;
    spec.make_model();
  }
  const LoadedDataset data = read_dataset(s.data);
  io.err << "calibrating " << spec.label() << " on " << s.data << '\n';
  const ModelOutcome o = calibrate_model(spec, data.observations, s.sampler.options(s.seed));
  if (!o.ok) {
    io.err << "calibration of " << o.label << " failed: " << o.error << '\n';
    return kExitFailure;
  }
  write_model_artifacts(out_dir, o);
  write_config(out_dir, to_json(s));

  io.out << "model " << o.label << '\n'
         << "stages " << o.run.stages.size() << '\n'
         << "log_evidence " << format_double(o.evidence.log_evidence) << '\n'
         << "avg_data_fit " << format_double(o.evidence.avg_data_fit) << '\n'
         << "info_gain " << format_double(o.evidence.info_gain) << '\n';
  if (o.cj_evidence) io.out << "log_evidence_cj " << format_double(o.cj_evidence->log_evidence) << '\n';
  io.out << std::fixed << std::setprecision(4);
  io.out << std::left << std::setw(8) << "param" << std::right << std::setw(12) << "mean" << std::setw(12) << "std"
         << std::setw(12) << "q0.5%" << std::setw(12) << "median" << std::setw(12) << "q99.5%" << std::setw(12)
         << "MAP" << '\n';
  const auto summary = summarize_posterior(o.param_names, o.run.posterior_samples());
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& p = summary[i];
    io.out << std::left << std::setw(8) << p.name << std::right << std::setw(12) << p.mean << std::setw(12) << p.std
           << std::setw(12) << p.q005 << std::setw(12) << p.q500 << std::setw(12) << p.q995 << std::setw(12)
           << o.map_theta[static_cast<Eigen::Index>(i)] << '\n';
  }
  io.out.unsetf(std::ios::floatfield);
  return kExitOk;
}

inline std::vector<ModelSpec> resolve_models(const CompareSettings& s) {
  std::vector<ModelSpec> specs;
  if (s.all) specs = full_candidate_set();
  for (const auto& m : s.models) {
    ModelSpec spec = ModelSpec::parse(m);
    const bool dup = std::any_of(specs.begin(), specs.end(), [&](const ModelSpec& x) { return x.label() == spec.label(); });
    if (!dup) specs.push_back(spec);
  }
  if (specs.size() < 2) throw ConfigError("compare needs at least two models (use --all or --models)");
  return specs;
}

inline std::vector<std::pair<std::string, std::vector<std::string>>> resolve_subsets(
    const CompareSettings& s, int case_id, const std::vector<ModelSpec>& specs) {
  std::vector<std::string> labels;
  for (const auto& m : specs) labels.push_back(m.label());
  for (const auto& e : s.exclude) {
    if (std::find(labels.begin(), labels.end(), ModelSpec::parse(e).label()) == labels.end()) {
      throw ConfigError("--exclude names a model that is not being compared: " + e);
    }
  }
  if (!s.exclude.empty()) {
    std::vector<std::string> excluded;
    for (const auto& e : s.exclude) excluded.push_back(ModelSpec::parse(e).label());
    return {{"*", excluded}};
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (auto& [tag, excluded] : default_subsets(case_id)) {
    const bool relevant = std::any_of(excluded.begin(), excluded.end(), [&](const std::string& l) {
      return std::find(labels.begin(), labels.end(), l) != labels.end();
    });
    if (relevant) out.emplace_back(tag, excluded);
  }
  return out;
}

inline int cmd_compare(const CompareSettings& s, const fs::path& out_dir, Streams io) {
  s.sampler.validate();
  if (s.format != "csv" && s.format != "json") throw ConfigError("--format must be csv or json");
  if (s.case_id.has_value() == !s.data.empty()) throw ConfigError("compare needs exactly one of --case or --data");
  const auto specs = resolve_models(s);

  SyntheticDataset ds;
  if (s.case_id) {
    ds = generate_dataset(TruthConfig::for_case(*s.case_id, s.seed));
  } else {
    const LoadedDataset loaded = read_dataset(s.data);
    ds.config = loaded.config;
    ds.observations = loaded.observations;
  }
  const auto subsets = resolve_subsets(s, ds.config.case_id, specs);

  const auto progress = [&io](const std::string& msg) { io.err << msg << '\n'; };
  const CampaignResult result = run_case(ds, specs, s.sampler.options(s.seed), s.seed, subsets, progress);

  if (s.case_id) write_dataset(out_dir / "dataset", ds);
  for (const auto& o : result.outcomes) {
    if (o.ok) write_model_artifacts(out_dir / "models" / label_dirname(o.label), o);
  }
  write_json_file(out_dir / "campaign.json", campaign_json(result));
  if (s.format == "csv") {
    write_text_file(out_dir / "comparison.csv", comparison_csv(result.comparison, result.subsets));
  } else {
    write_json_file(out_dir / "comparison.json", comparison_json(result.comparison, result.subsets));
  }
  write_config(out_dir, to_json(s));

  std::size_t failed = 0;
  for (const auto& o : result.outcomes) {
    if (!o.ok) {
      ++failed;
      io.err << "warning: " << o.label << " failed and is left out of the table: " << o.error << '\n';
    }
  }
  if (result.comparison.entries.empty()) {
    io.err << "every model failed\n";
    return kExitFailure;
  }
  io.out << render_table(result.comparison, result.subsets);
  return kExitOk;
}

inline int cmd_report(const ReportSettings& s, const std::optional<fs::path>& out_dir, Streams io) {
  const fs::path in(s.in);
  const fs::path file = fs::is_directory(in) ? in / "campaign.json" : in;
  if (!fs::exists(file)) throw ConfigError("campaign results not found: '" + file.string() + "'");
  const CampaignResult c = campaign_from_json(read_json_file(file));
  const std::string table = render_table(c.comparison, c.subsets, s.offset);
  io.out << "case " << c.case_id << ", seed " << c.seed << '\n' << table;
  if (out_dir) {
    write_text_file(*out_dir / "table.txt", table);
    write_text_file(*out_dir / "comparison.csv", comparison_csv(c.comparison, c.subsets));
    write_config(*out_dir, to_json(s));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::optional<double> acceptance_target(double v) {
  if (v == 0.0) return std::nullopt;
  return v;
}

inline void add_sampler_options(CLI::App* cmd, SamplerSettings& s, std::optional<double>& beta,
                                double& target_acceptance) {
  cmd->add_option("--samples", s.tmcmc.n_samples, "TMCMC samples per stage")->capture_default_str();
  cmd->add_option("--beta", beta, "initial proposal scale (default 2.38/sqrt(dim))");
  cmd->add_option("--target-acceptance", target_acceptance, "MH acceptance rate the scale adapts to; 0 keeps it fixed")
      ->capture_default_str();
  cmd->add_option("--target-cov", s.tmcmc.target_cov, "target CoV of the plausibility weights")->capture_default_str();
  cmd->add_option("--max-stages", s.tmcmc.max_stages)->capture_default_str();
  cmd->add_option("--mh-steps", s.tmcmc.mh_steps, "MH steps per sample and stage")->capture_default_str();
  cmd->add_option("--grid-dt", s.grid_dt, "filter grid step (s)")->capture_default_str();
  cmd->add_option("--velocity-std", s.initial_belief.velocity_std)->capture_default_str();
  cmd->add_option("--stiffness-std", s.initial_belief.stiffness_std)->capture_default_str();
  cmd->add_flag("--cj", s.chib_jeliazkov, "also compute the Chib-Jeliazkov evidence");
  cmd->add_option("--cj-draws", s.cj_draws, "proposal draws for Chib-Jeliazkov (0: N)")->capture_default_str();
}

inline std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::size_t start = 0;
    while (start <= item.size()) {
      const auto comma = item.find(',', start);
      const auto piece = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!piece.empty()) out.push_back(piece);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

/// Re-runs the command described by an echoed config.json. The output
/// directory defaults to the directory holding the config.
inline int run_config(const fs::path& config_path, const std::string& out_override, std::optional<unsigned> threads,
                      Streams io) {
  const Json j = read_json_file(config_path);
  const fs::path out_dir =
      out_override.empty() ? fs::absolute(config_path).parent_path() : resolve_output(out_override);
  try {
    const std::string command = j.at("command").get<std::string>();
    if (command == "generate") {
      GenerateSettings s;
      s.case_id = j.at("case").get<int>();
      s.seed = j.at("seed").get<std::uint64_t>();
      s.sim_dt = j.at("sim_dt").get<double>();
      s.noise_std = j.at("noise_std").get<double>();
      return cmd_generate(s, out_dir, io);
    }
    if (command == "calibrate") {
      CalibrateSettings s;
      s.model = j.at("model").get<std::string>();
      if (!j.at("init_k").is_null()) s.init_k = j.at("init_k").get<double>();
      s.data = j.at("data").get<std::string>();
      s.seed = j.at("seed").get<std::uint64_t>();
      s.sampler = sampler_from_json(j.at("sampler"));
      if (threads) s.sampler.threads = *threads;
      return cmd_calibrate(s, out_dir, io);
    }
    if (command == "compare") {
      CompareSettings s;
      if (!j.at("case").is_null()) s.case_id = j.at("case").get<int>();
      if (!j.at("data").is_null()) s.data = j.at("data").get<std::string>();
      s.models = j.at("models").get<std::vector<std::string>>();
      s.exclude = j.at("exclude").get<std::vector<std::string>>();
      s.format = j.at("format").get<std::string>();
      s.seed = j.at("seed").get<std::uint64_t>();
      s.sampler = sampler_from_json(j.at("sampler"));
      if (threads) s.sampler.threads = *threads;
      return cmd_compare(s, out_dir, io);
    }
    if (command == "report") {
      ReportSettings s;
      s.in = j.at("in").get<std::string>();
      s.offset = j.at("offset").get<double>();
      return cmd_report(s, out_dir, io);
    }
    throw ConfigError("unknown command '" + command + "' in " + config_path.string());
  } catch (const Json::exception& e) {
    throw ConfigError("malformed config " + config_path.string() + ": " + e.what());
  }
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Streams io{out, err};
  CLI::App app{"Stochastic model calibration: EKF likelihoods, TMCMC and Bayesian model selection", "stochcal"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string top_out;
  std::optional<unsigned> top_threads;
  app.add_option("--config", config_path, "re-run the command recorded in a config.json");
  app.add_option("--out", top_out, "output directory for --config re-runs");
  app.add_option("--threads", top_threads, "worker threads for --config re-runs");

  GenerateSettings gen;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "simulate a synthetic dataset");
  generate->add_option("--case", gen.case_id, "experiment case (1, 2 or 3)")->capture_default_str();
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--sim-dt", gen.sim_dt, "truth integration step (s)")->capture_default_str();
  generate->add_option("--noise-std", gen.noise_std, "sensor noise std (mm)")->capture_default_str();
  generate->add_option("--out", gen_out, "output directory")->required();

  CalibrateSettings cal;
  std::optional<double> cal_beta;
  double cal_acceptance = *TmcmcConfig{}.target_acceptance;
  std::string cal_out;
  auto* calibrate = app.add_subcommand("calibrate", "TMCMC calibration of one model");
  calibrate->add_option("--model", cal.model, "M1, M2, M3, M4a, M4b, M5 or M6")->capture_default_str();
  calibrate->add_option("--init-k", cal.init_k, "initial stiffness mean for M4a, M4b, M5");
  calibrate->add_option("--data", cal.data, "dataset directory")->required();
  calibrate->add_option("--seed", cal.seed)->capture_default_str();
  calibrate->add_option("--threads", cal.sampler.threads)->capture_default_str();
  calibrate->add_option("--out", cal_out, "output directory")->required();
  detail::add_sampler_options(calibrate, cal.sampler, cal_beta, cal_acceptance);

  CompareSettings cmp;
  std::optional<int> cmp_case;
  std::optional<double> cmp_beta;
  double cmp_acceptance = *TmcmcConfig{}.target_acceptance;
  std::vector<std::string> cmp_models;
  std::vector<std::string> cmp_exclude;
  std::string cmp_out;
  auto* compare = app.add_subcommand("compare", "calibrate several models and rank them by evidence");
  compare->add_option("--case", cmp_case, "experiment case; the dataset is generated from --seed");
  compare->add_option("--data", cmp.data, "dataset directory instead of --case");
  compare->add_flag("--all", cmp.all, "the full candidate set, including the E[K(0)]=60 variants");
  compare->add_option("--models", cmp_models, "comma-separated labels, e.g. M1,M4a,M5(60)");
  compare->add_option("--exclude", cmp_exclude, "models left out of the renormalized (*) row");
  compare->add_option("--format", cmp.format, "comparison table format: csv or json")->capture_default_str();
  compare->add_option("--seed", cmp.seed)->capture_default_str();
  compare->add_option("--threads", cmp.sampler.threads)->capture_default_str();
  compare->add_option("--out", cmp_out, "output directory")->required();
  detail::add_sampler_options(compare, cmp.sampler, cmp_beta, cmp_acceptance);

  ReportSettings rep;
  std::string rep_out;
  auto* report = app.add_subcommand("report", "render a campaign's comparison table");
  report->add_option("--in", rep.in, "campaign directory or campaign.json")->required();
  report->add_option("--offset", rep.offset, "added to log evidence and data-fit columns")->capture_default_str();
  report->add_option("--out", rep_out, "optional output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (!config_path.empty()) {
      if (app.get_subcommands().size() > 0) throw ConfigError("--config cannot be combined with a subcommand");
      return detail::run_config(config_path, top_out, top_threads, io);
    }
    if (generate->parsed()) return cmd_generate(gen, resolve_output(gen_out), io);
    if (calibrate->parsed()) {
      cal.sampler.tmcmc.beta = cal_beta;
      cal.sampler.tmcmc.target_acceptance = detail::acceptance_target(cal_acceptance);
      cal.data = absolute_string(cal.data);
      return cmd_calibrate(cal, resolve_output(cal_out), io);
    }
    if (compare->parsed()) {
      cmp.case_id = cmp_case;
      cmp.sampler.tmcmc.beta = cmp_beta;
      cmp.sampler.tmcmc.target_acceptance = detail::acceptance_target(cmp_acceptance);
      cmp.models = detail::split_list(cmp_models);
      cmp.exclude = detail::split_list(cmp_exclude);
      if (!cmp.data.empty()) cmp.data = absolute_string(cmp.data);
      return cmd_compare(cmp, resolve_output(cmp_out), io);
    }
    if (report->parsed()) {
      rep.in = absolute_string(rep.in);
      std::optional<fs::path> dir;
      if (!rep_out.empty()) dir = resolve_output(rep_out);
      return cmd_report(rep, dir, io);
    }
    err << app.help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace stochcal::cli
