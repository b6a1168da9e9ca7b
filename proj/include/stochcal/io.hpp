#pragma once

// CSV and JSON serialization for datasets, posterior samples, filter bands,
// stage diagnostics and campaign results. Doubles are written in shortest
// round-trip form so files reload bit-exactly.

#include "stochcal/experiments.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace stochcal {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Numbers

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("not a number: '" + std::string(s) + "'");
  }
  return x;
}

// JSON has no infinities; non-finite values travel as strings.
inline Json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

inline double number_from_json(const Json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  if (!j.is_number()) throw ConfigError("expected a number in JSON, got " + j.dump());
  return j.get<double>();
}

inline Json json_vector(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(json_number(v[i]));
  return a;
}

inline Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from_json(j[i]);
  return v;
}

inline Json json_matrix(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(json_vector(m.row(r).transpose()));
  return rows;
}

inline Matrix matrix_from_json(const Json& j) {
  if (j.empty()) return Matrix();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    require_size(static_cast<Eigen::Index>(j[r].size()), m.cols(), "matrix row");
    m.row(static_cast<Eigen::Index>(r)) = vector_from_json(j[r]).transpose();
  }
  return m;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline void write_json_file(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline Json read_json_file(const fs::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ConfigError("CSV has no column '" + std::string(name) + "'");
  }
};

inline std::string to_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline CsvTable parse_csv(std::string_view text, std::string_view origin = "CSV") {
  CsvTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(std::string(origin) + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " columns");
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_csv(const fs::path& path, const CsvTable& table) { write_text_file(path, to_csv(table)); }

inline CsvTable read_csv(const fs::path& path) { return parse_csv(read_text_file(path), path.string()); }

// ---------------------------------------------------------------------------
// Configuration records

inline Json to_json(const TruthConfig& c) {
  return Json{{"case", c.case_id},
              {"k1", c.k1},
              {"k2", c.k2},
              {"schedule", std::string(to_string(c.schedule))},
              {"switch_time", c.switch_time},
              {"mass", c.mass},
              {"damping", c.damping},
              {"forcing", c.forcing},
              {"u0", c.u0},
              {"v0", c.v0},
              {"horizon", c.horizon},
              {"sim_dt", c.sim_dt},
              {"sample_rate", c.sample_rate},
              {"noise_std", c.noise_std},
              {"seed", c.seed}};
}

inline TruthConfig truth_config_from_json(const Json& j) {
  try {
    TruthConfig c;
    c.case_id = j.at("case").get<int>();
    c.k1 = j.at("k1").get<double>();
    c.k2 = j.at("k2").get<double>();
    c.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
    c.switch_time = j.at("switch_time").get<double>();
    c.mass = j.at("mass").get<double>();
    c.damping = j.at("damping").get<double>();
    c.forcing = j.at("forcing").get<double>();
    c.u0 = j.at("u0").get<double>();
    c.v0 = j.at("v0").get<double>();
    c.horizon = j.at("horizon").get<double>();
    c.sim_dt = j.at("sim_dt").get<double>();
    c.sample_rate = j.at("sample_rate").get<double>();
    c.noise_std = j.at("noise_std").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("truth config: ") + e.what());
  }
}

inline Json to_json(const TmcmcConfig& c) {
  // An unset beta is written as "auto" (2.38 / sqrt(dim)), a fixed scale as
  // target_acceptance "off".
  return Json{{"n_samples", c.n_samples},
              {"beta", c.beta ? Json(*c.beta) : Json("auto")},
              {"target_cov", c.target_cov},
              {"target_acceptance", c.target_acceptance ? Json(*c.target_acceptance) : Json("off")},
              {"max_stages", c.max_stages},
              {"mh_steps", c.mh_steps},
              {"seed", c.seed}};
}

inline TmcmcConfig tmcmc_config_from_json(const Json& j) {
  try {
    TmcmcConfig c;
    c.n_samples = j.at("n_samples").get<std::size_t>();
    const Json& beta = j.at("beta");
    if (!(beta.is_string() && beta.get<std::string>() == "auto")) c.beta = beta.get<double>();
    c.target_cov = j.at("target_cov").get<double>();
    const Json& acc = j.at("target_acceptance");
    if (acc.is_string() && acc.get<std::string>() == "off") {
      c.target_acceptance.reset();
    } else {
      c.target_acceptance = acc.get<double>();
    }
    c.max_stages = j.at("max_stages").get<std::size_t>();
    c.mh_steps = j.at("mh_steps").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("tmcmc config: ") + e.what());
  }
}

inline Json to_json(const EvidenceReport& r) {
  return Json{{"estimator", std::string(to_string(r.estimator))},
              {"log_evidence", json_number(r.log_evidence)},
              {"avg_data_fit", json_number(r.avg_data_fit)},
              {"info_gain", json_number(r.info_gain)}};
}

inline EvidenceReport evidence_from_json(const Json& j) {
  EvidenceReport r;
  r.estimator = parse_estimator(j.at("estimator").get<std::string>());
  r.log_evidence = number_from_json(j.at("log_evidence"));
  r.avg_data_fit = number_from_json(j.at("avg_data_fit"));
  r.info_gain = number_from_json(j.at("info_gain"));
  return r;
}

// ---------------------------------------------------------------------------
// Datasets: data.csv (t,d), truth.csv (t,u,v,K), provenance.json

struct LoadedDataset {
  TruthConfig config;
  ObservationSeries observations;
};

inline Json dataset_provenance(const SyntheticDataset& ds) {
  return Json{{"truth", to_json(ds.config)},
              {"observations", ds.observations.size()},
              {"observation_noise_std", ds.observations.noise_std},
              {"signal_rms", ds.signal_rms},
              {"noise_to_signal_variance_ratio", ds.noise_ratio}};
}

inline void write_dataset(const fs::path& dir, const SyntheticDataset& ds) {
  CsvTable data{{"t", "d"}, {}};
  for (std::size_t k = 0; k < ds.observations.size(); ++k)
    data.rows.push_back({ds.observations.times[k], ds.observations.values[k]});
  write_csv(dir / "data.csv", data);

  CsvTable truth{{"t", "u", "v", "K"}, {}};
  for (std::size_t k = 0; k < ds.truth.size(); ++k)
    truth.rows.push_back({ds.truth.t[k], ds.truth.u[k], ds.truth.v[k], ds.truth.stiffness[k]});
  write_csv(dir / "truth.csv", truth);
  write_json_file(dir / "provenance.json", dataset_provenance(ds));
}

inline LoadedDataset read_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "data.csv")) throw ConfigError("dataset not found: '" + (dir / "data.csv").string() + "'");
  if (!fs::exists(dir / "provenance.json")) {
    throw ConfigError("dataset provenance not found: '" + (dir / "provenance.json").string() + "'");
  }
  LoadedDataset out;
  const Json prov = read_json_file(dir / "provenance.json");
  out.config = truth_config_from_json(prov.at("truth"));
  const CsvTable data = read_csv(dir / "data.csv");
  const auto ti = data.column("t");
  const auto di = data.column("d");
  for (const auto& row : data.rows) {
    out.observations.times.push_back(row[ti]);
    out.observations.values.push_back(row[di]);
  }
  out.observations.noise_std = prov.at("observation_noise_std").get<double>();
  out.observations.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Per-model artifacts

inline CsvTable posterior_table(const std::vector<std::string>& names, const Matrix& samples, const Vector& lls) {
  CsvTable t{names, {}};
  t.header.push_back("log_lik");
  for (Eigen::Index k = 0; k < samples.rows(); ++k) {
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(samples.cols()) + 1);
    for (Eigen::Index i = 0; i < samples.cols(); ++i) row.push_back(samples(k, i));
    row.push_back(lls[k]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable band_table(const std::vector<BandRow>& band) {
  CsvTable t{{"t", "mean", "lo3", "hi3"}, {}};
  for (const auto& r : band) t.rows.push_back({r.t, r.mean, r.lo3, r.hi3});
  return t;
}

inline CsvTable innovations_table(const std::vector<Innovation>& innovations) {
  CsvTable t{{"t", "residual", "variance"}, {}};
  for (const auto& i : innovations) t.rows.push_back({i.t, i.residual, i.variance});
  return t;
}

/// Stage-by-stage diagnostics: exponents, achieved CoV, acceptance rates and
/// evidence increments.
inline Json stages_json(const TmcmcRun& run) {
  Json stages = Json::array();
  for (std::size_t j = 0; j < run.stages.size(); ++j) {
    const Stage& s = run.stages[j];
    stages.push_back(Json{{"stage", j + 1},
                          {"p", s.p},
                          {"achieved_cov", json_number(s.achieved_cov)},
                          {"acceptance_rate", s.acceptance_rate},
                          {"beta", s.beta},
                          {"log_evidence_increment", json_number(s.log_evidence_increment)},
                          {"proposal_cov", json_matrix(s.proposal_cov)}});
  }
  return Json{{"stage_count", run.stages.size()},
              {"log_evidence", json_number(run.log_evidence)},
              {"stages", std::move(stages)}};
}

// ---------------------------------------------------------------------------
// Comparison tables

inline double percent(double p) { return 100.0 * p; }

/// One row per model; probability columns for the full set and every subset
/// (empty cell when the model is excluded from that subset).
inline std::string comparison_csv(const ModelComparison& full, const std::vector<SubsetRow>& subsets) {
  std::string out = "model,log_evidence,avg_data_fit,info_gain,probability_pct";
  for (const auto& s : subsets) out += ",probability_pct(" + s.tag + ")";
  out += '\n';
  for (std::size_t i = 0; i < full.entries.size(); ++i) {
    const auto& e = full.entries[i];
    out += e.label + ',' + format_double(e.report.log_evidence) + ',' + format_double(e.report.avg_data_fit) + ',' +
           format_double(e.report.info_gain) + ',' + format_double(percent(full.probabilities[i]));
    for (const auto& s : subsets) {
      out += ',';
      if (const auto p = s.comparison.probability_of(e.label)) out += format_double(percent(*p));
    }
    out += '\n';
  }
  return out;
}

inline Json comparison_json(const ModelComparison& full, const std::vector<SubsetRow>& subsets) {
  Json models = Json::array();
  for (std::size_t i = 0; i < full.entries.size(); ++i) {
    const auto& e = full.entries[i];
    models.push_back(Json{{"model", e.label},
                          {"log_evidence", json_number(e.report.log_evidence)},
                          {"avg_data_fit", json_number(e.report.avg_data_fit)},
                          {"info_gain", json_number(e.report.info_gain)},
                          {"probability_pct", json_number(percent(full.probabilities[i]))}});
  }
  Json rows = Json::array();
  for (const auto& s : subsets) {
    Json probs = Json::object();
    for (std::size_t i = 0; i < s.comparison.entries.size(); ++i)
      probs[s.comparison.entries[i].label] = json_number(percent(s.comparison.probabilities[i]));
    rows.push_back(Json{{"tag", s.tag}, {"excluded", s.excluded}, {"probability_pct", std::move(probs)}});
  }
  return Json{{"models", std::move(models)}, {"subsets", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// Campaign results. The JSON keeps everything needed to rebuild the tables,
// the MAP bands and the posterior: stage diagnostics, final-stage samples and
// log-likelihoods, evidence reports, MAP parameters, bands and innovations.

inline Json outcome_json(const ModelOutcome& o) {
  Json j{{"label", o.label}, {"ok", o.ok}, {"error", o.error}, {"param_names", o.param_names}};
  if (!o.ok) return j;
  j["evidence"] = to_json(o.evidence);
  j["cj_evidence"] = o.cj_evidence ? to_json(*o.cj_evidence) : Json(nullptr);
  j["map_theta"] = json_vector(o.map_theta);
  j["stages"] = stages_json(o.run)["stages"];
  j["run_log_evidence"] = json_number(o.run.log_evidence);
  j["posterior_samples"] = json_matrix(o.run.posterior_samples());
  j["posterior_log_liks"] = json_vector(o.run.posterior_log_liks());
  j["band_slot"] = o.band_slot;
  Json band = Json::array();
  for (const auto& r : o.band) band.push_back(Json::array({json_number(r.t), json_number(r.mean), json_number(r.lo3), json_number(r.hi3)}));
  j["band"] = std::move(band);
  Json innov = Json::array();
  for (const auto& i : o.innovations) innov.push_back(Json::array({json_number(i.t), json_number(i.residual), json_number(i.variance)}));
  j["innovations"] = std::move(innov);
  return j;
}

inline ModelOutcome outcome_from_json(const Json& j) {
  ModelOutcome o;
  o.label = j.at("label").get<std::string>();
  o.ok = j.at("ok").get<bool>();
  o.error = j.at("error").get<std::string>();
  o.param_names = j.at("param_names").get<std::vector<std::string>>();
  if (!o.ok) return o;
  o.evidence = evidence_from_json(j.at("evidence"));
  if (!j.at("cj_evidence").is_null()) o.cj_evidence = evidence_from_json(j.at("cj_evidence"));
  o.map_theta = vector_from_json(j.at("map_theta"));
  const Json& stages = j.at("stages");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    Stage st;
    st.p = stages[s].at("p").get<double>();
    st.achieved_cov = number_from_json(stages[s].at("achieved_cov"));
    st.acceptance_rate = stages[s].at("acceptance_rate").get<double>();
    st.beta = stages[s].at("beta").get<double>();
    st.log_evidence_increment = number_from_json(stages[s].at("log_evidence_increment"));
    st.proposal_cov = matrix_from_json(stages[s].at("proposal_cov"));
    o.run.stages.push_back(std::move(st));
  }
  if (o.run.stages.empty()) throw ConfigError("campaign model '" + o.label + "' has no stages");
  o.run.log_evidence = number_from_json(j.at("run_log_evidence"));
  o.run.stages.back().samples = matrix_from_json(j.at("posterior_samples"));
  o.run.stages.back().log_liks = vector_from_json(j.at("posterior_log_liks"));
  o.band_slot = j.at("band_slot").get<std::string>();
  for (const auto& r : j.at("band"))
    o.band.push_back({number_from_json(r[0]), number_from_json(r[1]), number_from_json(r[2]), number_from_json(r[3])});
  for (const auto& r : j.at("innovations"))
    o.innovations.push_back({number_from_json(r[0]), number_from_json(r[1]), number_from_json(r[2])});
  return o;
}

inline Json campaign_json(const CampaignResult& c) {
  Json outcomes = Json::array();
  for (const auto& o : c.outcomes) outcomes.push_back(outcome_json(o));
  Json subsets = Json::array();
  for (const auto& s : c.subsets) subsets.push_back(Json{{"tag", s.tag}, {"excluded", s.excluded}});
  return Json{{"case", c.case_id},
              {"seed", c.seed},
              {"truth", to_json(c.truth)},
              {"models", std::move(outcomes)},
              {"subsets", std::move(subsets)},
              {"comparison", comparison_json(c.comparison, c.subsets)}};
}

/// Rebuilds a campaign; comparisons are recomputed from the stored evidence.
inline CampaignResult campaign_from_json(const Json& j) {
  try {
    CampaignResult c;
    c.case_id = j.at("case").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.truth = truth_config_from_json(j.at("truth"));
    for (const auto& m : j.at("models")) c.outcomes.push_back(outcome_from_json(m));
    c.comparison = comparison_from(c.outcomes);
    for (const auto& s : j.at("subsets")) {
      const auto excluded = s.at("excluded").get<std::vector<std::string>>();
      c.subsets.push_back({s.at("tag").get<std::string>(), excluded, c.comparison.without(excluded)});
    }
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("campaign JSON: ") + e.what());
  }
}

}  // namespace stochcal
