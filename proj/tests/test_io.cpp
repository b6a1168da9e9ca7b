#include "stochcal/io.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

using namespace stochcal;

namespace {

class DatasetFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("stochcal_io_" + std::to_string(::getpid()) + "_" + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

const CampaignResult& small_campaign() {
  static const CampaignResult r = [] {
    CampaignOptions o;
    o.tmcmc.n_samples = 120;
    o.grid_dt = 0.004;
    o.chib_jeliazkov = true;
    o.cj_draws = 50;
    return run_case(2, {ModelSpec::parse("M1"), ModelSpec::parse("M5"), ModelSpec::parse("M5(60)")}, o, 4);
  }();
  return r;
}

}  // namespace

TEST(Numbers, FormatRoundTrips) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::ldexp(standard_normal(rng), static_cast<int>(60.0 * standard_normal(rng)));
    ASSERT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-kNegInf), "inf");
  EXPECT_EQ(parse_double(" -inf\r"), kNegInf);
  EXPECT_TRUE(std::isnan(parse_double("nan")));
  EXPECT_THROW(parse_double("1.5x"), ConfigError);
  EXPECT_THROW(parse_double(""), ConfigError);
}

TEST(Numbers, NonFiniteJson) {
  EXPECT_EQ(json_number(kNegInf), Json("-inf"));
  EXPECT_EQ(number_from_json(Json("-inf")), kNegInf);
  EXPECT_EQ(number_from_json(Json(2.5)), 2.5);
  EXPECT_THROW(number_from_json(Json::array()), ConfigError);
  Matrix m(2, 3);
  m << 1, 2, 3, 4, kNegInf, 6;
  const Matrix back = matrix_from_json(Json::parse(json_matrix(m).dump()));
  EXPECT_EQ(back(1, 1), kNegInf);
  EXPECT_EQ(back(1, 2), 6.0);
}

TEST(Csv, ParseAndFormat) {
  const CsvTable t{{"a", "b"}, {{1.0, 2.5}, {-0.125, kNegInf}}};
  const std::string text = to_csv(t);
  EXPECT_EQ(text, "a,b\n1,2.5\n-0.125,-inf\n");
  const auto back = parse_csv(text);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.column("b"), 1u);
  EXPECT_THROW(back.column("c"), ConfigError);
  EXPECT_EQ(parse_csv("x\r\n1\r\n\r\n2\n").rows.size(), 2u);
  EXPECT_THROW(parse_csv("a,b\n1\n"), ConfigError);
  EXPECT_THROW(parse_csv(""), ConfigError);
  EXPECT_EQ(split_csv_line("a,,b"), (std::vector<std::string>{"a", "", "b"}));
}

TEST(Configs, TruthRoundTrip) {
  auto c = TruthConfig::for_case(3, 99);
  c.noise_std = 2.5;
  c.sim_dt = 0.0005;
  const auto back = truth_config_from_json(Json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.schedule, ScheduleKind::linear);
  EXPECT_EQ(back.seed, 99u);
}

TEST(Configs, TmcmcRoundTrip) {
  TmcmcConfig c;
  EXPECT_EQ(to_json(c).at("beta"), Json("auto"));
  EXPECT_FALSE(tmcmc_config_from_json(to_json(c)).beta.has_value());
  c.beta = 0.2;
  c.n_samples = 321;
  c.mh_steps = 2;
  const auto back = tmcmc_config_from_json(Json::parse(to_json(c).dump()));
  EXPECT_EQ(back.beta, 0.2);
  EXPECT_EQ(back.n_samples, 321u);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.target_acceptance, 0.234);
  c.target_acceptance.reset();
  EXPECT_EQ(to_json(c).at("target_acceptance"), Json("off"));
  EXPECT_FALSE(tmcmc_config_from_json(to_json(c)).target_acceptance.has_value());
}

TEST_F(DatasetFiles, DatasetRoundTrip) {
  const auto ds = generate_dataset(TruthConfig::for_case(1, 8));
  write_dataset(dir_ / "ds", ds);
  EXPECT_TRUE(fs::exists(dir_ / "ds" / "truth.csv"));
  const auto back = read_dataset(dir_ / "ds");
  EXPECT_EQ(back.observations.values, ds.observations.values);
  EXPECT_EQ(back.observations.times, ds.observations.times);
  EXPECT_EQ(back.observations.noise_std, 10.0);
  EXPECT_EQ(to_json(back.config), to_json(ds.config));
  const auto prov = read_json_file(dir_ / "ds" / "provenance.json");
  EXPECT_EQ(prov.at("observations"), 501);
  EXPECT_NEAR(prov.at("noise_to_signal_variance_ratio").get<double>(), ds.noise_ratio, 1e-15);
}

TEST_F(DatasetFiles, MissingDatasetIsAConfigError) {
  try {
    read_dataset(dir_ / "nowhere");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dataset not found"), std::string::npos);
  }
  write_text_file(dir_ / "bad.json", "{ nope");
  EXPECT_THROW(read_json_file(dir_ / "bad.json"), ConfigError);
}

TEST(Artifacts, PosteriorAndStageTables) {
  const auto& o = small_campaign().outcomes[0];
  ASSERT_TRUE(o.ok) << o.error;
  const auto t = posterior_table(o.param_names, o.run.posterior_samples(), o.run.posterior_log_liks());
  EXPECT_EQ(t.header, (std::vector<std::string>{"k1", "k2", "ts", "c", "sigma", "log_lik"}));
  EXPECT_EQ(t.rows.size(), 120u);
  EXPECT_EQ(t.rows[7][2], o.run.posterior_samples()(7, 2));
  const auto st = stages_json(o.run);
  EXPECT_EQ(st.at("stage_count"), o.run.stage_count());
  EXPECT_EQ(st.at("stages").back().at("p"), 1.0);
  EXPECT_EQ(st.at("stages")[0].at("proposal_cov").size(), 5u);
}

TEST(Artifacts, ComparisonCsvMatchesJson) {
  const auto& c = small_campaign();
  const std::string text = comparison_csv(c.comparison, c.subsets);
  const Json j = comparison_json(c.comparison, c.subsets);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "model,log_evidence,avg_data_fit,info_gain,probability_pct,probability_pct(*),probability_pct(**)");
  std::size_t i = 0;
  while (std::getline(in, line)) {
    const auto cells = split_csv_line(line);
    ASSERT_EQ(cells.size(), 7u);
    const Json& m = j.at("models")[i];
    EXPECT_EQ(cells[0], m.at("model").get<std::string>());
    EXPECT_EQ(parse_double(cells[1]), number_from_json(m.at("log_evidence")));
    EXPECT_EQ(parse_double(cells[4]), number_from_json(m.at("probability_pct")));
    for (std::size_t s = 0; s < 2; ++s) {
      const Json& probs = j.at("subsets")[s].at("probability_pct");
      if (cells[5 + s].empty()) {
        EXPECT_FALSE(probs.contains(cells[0]));
      } else {
        EXPECT_EQ(parse_double(cells[5 + s]), number_from_json(probs.at(cells[0])));
      }
    }
    ++i;
  }
  EXPECT_EQ(i, 3u);
}

TEST(Artifacts, CampaignRoundTripIsLossless) {
  const auto& c = small_campaign();
  const std::string once = campaign_json(c).dump();
  const auto back = campaign_from_json(Json::parse(once));
  EXPECT_EQ(campaign_json(back).dump(), once);
  ASSERT_EQ(back.outcomes.size(), c.outcomes.size());
  for (std::size_t i = 0; i < c.outcomes.size(); ++i) {
    EXPECT_EQ(back.outcomes[i].run.posterior_samples(), c.outcomes[i].run.posterior_samples());
    EXPECT_EQ(back.outcomes[i].map_theta, c.outcomes[i].map_theta);
    EXPECT_EQ(back.outcomes[i].band.size(), c.outcomes[i].band.size());
  }
  EXPECT_EQ(back.comparison.probabilities, c.comparison.probabilities);
  EXPECT_THROW(campaign_from_json(Json::parse("{\"case\": 1}")), ConfigError);
}

TEST(Artifacts, FailedOutcomeRoundTrip) {
  ModelOutcome o;
  o.label = "M3";
  o.error = "boom";
  o.param_names = {"K", "c", "sigma", "tau"};
  const auto back = outcome_from_json(Json::parse(outcome_json(o).dump()));
  EXPECT_FALSE(back.ok);
  EXPECT_EQ(back.error, "boom");
  EXPECT_EQ(back.param_names, o.param_names);
}
