#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "mjslqr/bench.hpp"

using namespace mjslqr;
using namespace mjslqr::bench;

namespace {

std::string config_path(const std::string& name) { return std::string(MJS_CONFIG_DIR) + "/" + name; }

// Independent oracle: linear interpolation at position (N - 1) q of the sorted sample.
double naive_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const double lo = std::floor(h), hi = std::ceil(h);
  return v[static_cast<std::size_t>(lo)] + (h - lo) * (v[static_cast<std::size_t>(hi)] - v[static_cast<std::size_t>(lo)]);
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, UnknownFieldIsNamed) {
  const json j = json::parse(R"({"kind": "sysid-sweep", "sigma_ww": 0.1})");
  EXPECT_THROW(parse_config(j), ConfigError);
  EXPECT_NE(message_of([&] { parse_config(j); }).find("sigma_ww"), std::string::npos);
  const json nested = json::parse(R"({"sysid": {"cx": 1}})");
  EXPECT_NE(message_of([&] { parse_config(nested); }).find("sysid.cx"), std::string::npos);
}

TEST(Config, RejectsEmptyGridsAndBadCounts) {
  EXPECT_THROW(parse_config(json::parse(R"({"T": []})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"replications": 0})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"sigma_w": -1})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"gamma": 1.0})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"kind": "bogus"})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"n": "three"})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse("[1, 2]")), ConfigError);
}

TEST(Config, ScalarsBecomeSingletonGrids) {
  const auto cfg = parse_config(json::parse(R"({"sigma_w": 0.5, "T": [10, 20], "base_seed": 9})"));
  EXPECT_EQ(cfg.sigma_w, std::vector<double>{0.5});
  EXPECT_EQ(cfg.T, (std::vector<int>{10, 20}));
  EXPECT_EQ(cfg.base_seed, 9u);
}

TEST(Config, SysidOverridesApply) {
  const auto cfg = parse_config(json::parse(R"({"sysid": {"c_x": 2.5, "min_samples": 7}})"));
  const auto sc = sysid_config_for(cfg, 4, 2, false);
  EXPECT_EQ(sc.c_x, 2.5);
  EXPECT_EQ(sc.min_samples_per_mode, 7);
  EXPECT_EQ(sc.c_z, SysidConfig::defaults(4, 2).c_z);
}

TEST(Json, ParseErrorReportsByteOffset) {
  const std::string msg = message_of([] { parse_json_text("{\"n\": 3,,}", "inline"); });
  EXPECT_NE(msg.find("byte"), std::string::npos);
  EXPECT_THROW(parse_json_text("{", "inline"), ConfigError);
}

TEST(Json, ModelRoundTripAndFlatArrays) {
  const auto problem = random_model(3, 2, 2, 0.5, 4);
  const json j = model_to_json(problem.model);
  const MjsModel back = model_from_json(j);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(back.A(i), problem.model.A(i));
    EXPECT_EQ(back.B(i), problem.model.B(i));
  }
  EXPECT_EQ(back.chain().transition(), problem.model.chain().transition());

  const json flat = json::parse(
      R"({"n": 2, "p": 1, "s": 1, "A": [[1, 2, 3, 4]], "B": [[5, 6]], "T": [1]})");
  const MjsModel m = model_from_json(flat);
  EXPECT_EQ(m.A(0)(0, 1), 2.0);
  EXPECT_EQ(m.A(0)(1, 0), 3.0);
  EXPECT_EQ(m.B(0)(1, 0), 6.0);
  const json wrong = json::parse(R"({"n": 2, "p": 1, "s": 1, "A": [[1, 2, 3]], "B": [[5, 6]], "T": [1]})");
  EXPECT_ANY_THROW(model_from_json(wrong));
}

TEST(Statistics, QuantilesMatchOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v;
    for (int i = 0; i < 3 + trial; ++i) v.push_back(rng.normal());
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) EXPECT_NEAR(quantile(v, q), naive_quantile(v, q), 1e-15);
  }
  EXPECT_EQ(median({1.0, 3.0, 2.0, 10.0}), 2.5);
  EXPECT_EQ(iqr({1.0, 2.0, 3.0, 4.0, 5.0}), 2.0);
  EXPECT_THROW(quantile({}, 0.5), InvalidArgument);
}

TEST(Csv, RowsRoundTrip) {
  SysidRow r;
  r.n = 5, r.p = 3, r.s = 4, r.sigma_w = 0.1, r.sigma_z = 1.0 / 3.0, r.T = 4000, r.seed = 18446744073709551615ull;
  r.err_A = 0.123456789012345678, r.err_B = 1e-300, r.err_T = std::nan(""), r.rel_Psi = 2.0, r.samples_min = 17;
  const auto table = parse_csv(std::string(kSysidHeader) + "\n" + r.to_csv() + "\n");
  ASSERT_EQ(table.rows.size(), 1u);
  const auto back = sysid_row_from_fields(table.rows[0]);
  EXPECT_EQ(back.to_csv(), r.to_csv());
  EXPECT_EQ(back.sigma_z, r.sigma_z);
  EXPECT_EQ(back.err_A, r.err_A);
  EXPECT_TRUE(std::isnan(back.err_T));

  RegretRow g;
  g.kind = "regret-median", g.n = 2, g.p = 1, g.s = 3, g.sigma_w = 0.01, g.T0 = 200, g.gamma = 2, g.epoch = 3,
  g.t = 3000, g.regret = -1.5, g.failed_cdare = 2;
  const auto gt = parse_csv(std::string(kRegretHeader) + "\n" + g.to_csv() + "\n");
  const auto gb = regret_row_from_fields(gt.rows[0]);
  EXPECT_FALSE(gb.seed.has_value());
  EXPECT_EQ(gb.to_csv(), g.to_csv());
}

TEST(Tasks, ResultsAreIndexOrdered) {
  const std::function<int(std::size_t)> sq = [](std::size_t k) { return static_cast<int>(k * k); };
  const auto a = run_tasks<int>(50, 1, sq), b = run_tasks<int>(50, 4, sq);
  EXPECT_EQ(a, b);
  EXPECT_EQ(b[7], 49);
}

TEST(SysidSweep, DeterministicAcrossJobsAndAggregated) {
  auto cfg = load_config(config_path("smoke_sysid.json"));
  const auto one = run_sysid_sweep(cfg, 1);
  const auto four = run_sysid_sweep(cfg, 4);
  EXPECT_EQ(one.text(), four.text());

  const auto table = parse_csv(one.text());
  const std::size_t cells = cfg.sigma_w.size() * cfg.sigma_z.size() * cfg.T.size();
  const auto reps = static_cast<std::size_t>(cfg.replications);
  ASSERT_EQ(table.rows.size(), cells * reps + 2 * cells);
  // Aggregate rows agree with a direct median over the raw rows.
  for (std::size_t c = 0; c < cells; ++c) {
    std::vector<double> errs;
    for (std::size_t r = 0; r < reps; ++r) errs.push_back(sysid_row_from_fields(table.rows[c * reps + r]).err_A);
    const auto med = sysid_row_from_fields(table.rows[cells * reps + 2 * c]);
    const auto spread = sysid_row_from_fields(table.rows[cells * reps + 2 * c + 1]);
    EXPECT_EQ(med.kind, "sysid-median");
    EXPECT_EQ(spread.kind, "sysid-iqr");
    EXPECT_NEAR(med.err_A, naive_quantile(errs, 0.5), 1e-15);
    EXPECT_NEAR(spread.err_A, naive_quantile(errs, 0.75) - naive_quantile(errs, 0.25), 1e-15);
  }

  cfg.base_seed += 1;
  EXPECT_NE(run_sysid_sweep(cfg, 1).text(), one.text());
}

TEST(RegretSweep, DeterministicAcrossJobs) {
  const auto cfg = load_config(config_path("smoke_regret.json"));
  const auto one = run_regret_sweep(cfg, 1);
  EXPECT_EQ(one.text(), run_regret_sweep(cfg, 3).text());
  const auto table = parse_csv(one.text());
  ASSERT_FALSE(table.rows.empty());
  for (const auto& row : table.rows) {
    const auto r = regret_row_from_fields(row);
    if (r.kind == "regret") EXPECT_TRUE(r.seed.has_value());
  }
}

TEST(SingleRun, FixedModelReport) {
  const auto cfg = load_config(config_path("unstable_mode_single.json"));
  const json report = run_single(cfg);
  EXPECT_NEAR(report["open_loop_rho"].get<double>(), 0.99405, 1e-5);
  EXPECT_TRUE(report["open_loop_mss"].get<bool>());
  EXPECT_NEAR(report["stationary_distribution"][0].get<double>(), 3.0 / 7.0, 1e-12);
  EXPECT_EQ(report["run"]["epochs"].size(), static_cast<std::size_t>(cfg.num_epochs));
  EXPECT_EQ(run_single(cfg).dump(), report.dump());
}
