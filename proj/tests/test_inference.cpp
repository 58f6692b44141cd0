#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "ccrs/inference.hpp"

using namespace ccrs;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ccrs::Error thrown";
  return ErrorCode::Config;
}

ScoreMatrix random_matrix(std::mt19937_64& gen, std::size_t rows, std::size_t cols, int levels = 20) {
  std::uniform_int_distribution<int> d(0, levels);
  ScoreMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = static_cast<double>(d(gen)) / levels;
  return m;
}

// Exact randomization p-values over every assignment of within-row
// permutations (cols! ^ rows of them).
std::vector<double> exhaustive_p(const ScoreMatrix& x, const std::vector<SystemPair>& pairs) {
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<std::size_t> base(m);
  for (std::size_t c = 0; c < m; ++c) base[c] = c;
  std::vector<std::vector<std::size_t>> perms;
  do perms.push_back(base);
  while (std::next_permutation(base.begin(), base.end()));

  const auto means = x.column_means();
  std::vector<double> qs;
  std::vector<std::size_t> choice(n, 0);
  while (true) {
    std::vector<double> sums(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) sums[c] += x(r, perms[choice[r]][c]);
    double lo = INFINITY, hi = -INFINITY;
    for (double s : sums) {
      lo = std::min(lo, s / static_cast<double>(n));
      hi = std::max(hi, s / static_cast<double>(n));
    }
    qs.push_back(hi - lo);
    std::size_t r = 0;
    while (r < n && ++choice[r] == perms.size()) choice[r++] = 0;
    if (r == n) break;
  }
  std::vector<double> out;
  for (const auto& [i, j] : pairs) {
    const double d = std::abs(means[i] - means[j]);
    double count = 0;
    for (double q : qs) count += q >= d - 1e-9;
    out.push_back(count / static_cast<double>(qs.size()));
  }
  return out;
}

ScoreTensor six_system_tensor(std::size_t n, std::uint64_t seed) {
  // A and B strongest, then D/F, then C/E, with metric-specific noise.
  const std::array<double, 6> level{0.9, 0.92, 0.5, 0.62, 0.48, 0.6};
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, 0.08);
  ScoreTensor t;
  t.system_labels = {"A", "B", "C", "D", "E", "F"};
  t.metric_names = {"CC", "QR", "ID", "AC", "IR"};
  for (std::size_t q = 0; q < n; ++q) t.query_ids.push_back(static_cast<std::int64_t>(q));
  t.scores.assign(n * 5 * 6, 0.0);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t s = 0; s < 6; ++s)
        t.at(q, k, s) = std::clamp(std::round((level[s] + noise(gen)) * 20.0) / 20.0, 0.0, 1.0);
  return t;
}

}  // namespace

TEST(Permutation, RowsKeepTheirValuesAndMissingCells) {
  std::mt19937_64 gen(1);
  auto x = random_matrix(gen, 30, 5);
  x(3, 1) = kMissing;
  x(7, 0) = kMissing;
  x(7, 4) = kMissing;
  Rng rng(99);
  const auto y = permute_rows(x, rng);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<double> a, b;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      EXPECT_EQ(std::isnan(x(r, c)), std::isnan(y(r, c)));
      if (!std::isnan(x(r, c))) {
        a.push_back(x(r, c));
        b.push_back(y(r, c));
      }
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
  Rng again(99);
  EXPECT_EQ(permute_rows(x, again), y);
}

TEST(Tukey, IdenticalColumnsGivePOne) {
  std::mt19937_64 gen(2);
  auto x = random_matrix(gen, 40, 1);
  ScoreMatrix m(40, 3);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 3; ++c) m(r, c) = x(r, 0);
  InferenceConfig cfg;
  cfg.B = 500;
  const auto res = tukey_hsd_randomization(m, all_pairs(3), cfg);
  for (const auto& p : res.pairs) {
    EXPECT_EQ(p.p_value, 1.0);
    EXPECT_FALSE(p.significant);
  }
  cfg.plus_one_estimator = true;
  EXPECT_EQ(tukey_hsd_randomization(m, all_pairs(3), cfg).pairs[0].p_value, 1.0);
}

TEST(Tukey, LargeShiftIsSignificant) {
  std::mt19937_64 gen(3);
  auto x = random_matrix(gen, 60, 3, 10);
  for (std::size_t r = 0; r < 60; ++r) x(r, 0) = std::min(1.0, x(r, 0) * 0.2 + 0.8);
  for (std::size_t r = 0; r < 60; ++r) x(r, 1) = x(r, 1) * 0.2;
  InferenceConfig cfg;
  cfg.B = 2000;
  const auto res = tukey_hsd_randomization(x, {{0, 1}}, cfg);
  EXPECT_EQ(res.pairs[0].p_value, 0.0);
  EXPECT_TRUE(res.pairs[0].significant);
  EXPECT_GT(res.pairs[0].mean_diff, 0.5);
  cfg.plus_one_estimator = true;
  EXPECT_DOUBLE_EQ(tukey_hsd_randomization(x, {{0, 1}}, cfg).pairs[0].p_value, 1.0 / 2001.0);
}

TEST(Tukey, SerialAndParallelAgreeExactly) {
  std::mt19937_64 gen(4);
  const auto x = random_matrix(gen, 50, 4);
  InferenceConfig cfg;
  cfg.B = 3000;
  cfg.seed = 17;
  cfg.threads = 1;
  const auto serial = tukey_hsd_randomization(x, all_pairs(4), cfg);
  cfg.threads = 7;
  const auto parallel = tukey_hsd_randomization(x, all_pairs(4), cfg);
  for (std::size_t k = 0; k < serial.pairs.size(); ++k) EXPECT_EQ(serial.pairs[k].p_value, parallel.pairs[k].p_value);
  EXPECT_EQ(randomization_null(x, 500, 3, 1).q_star, randomization_null(x, 500, 3, 5).q_star);
}

TEST(Tukey, ShiftInvariance) {
  std::mt19937_64 gen(5);
  const auto x = random_matrix(gen, 40, 3);
  ScoreMatrix shifted = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) shifted(r, c) += 0.25;
  InferenceConfig cfg;
  cfg.B = 1000;
  const auto a = tukey_hsd_randomization(x, all_pairs(3), cfg);
  const auto b = tukey_hsd_randomization(shifted, all_pairs(3), cfg);
  for (std::size_t k = 0; k < a.pairs.size(); ++k) EXPECT_EQ(a.pairs[k].p_value, b.pairs[k].p_value);
}

TEST(Tukey, MatchesExhaustiveEnumeration) {
  std::mt19937_64 gen(6);
  for (int t = 0; t < 5; ++t) {
    const auto x = random_matrix(gen, 4, 3);
    const auto pairs = all_pairs(3);
    const auto exact = exhaustive_p(x, pairs);
    InferenceConfig cfg;
    cfg.B = 10000;
    cfg.seed = static_cast<std::uint64_t>(t);
    const auto res = tukey_hsd_randomization(x, pairs, cfg);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double p = exact[k];
      EXPECT_NEAR(res.pairs[k].p_value, p, 4.0 * std::sqrt(p * (1 - p) / 10000.0) + 1e-12);
    }
  }
}

TEST(Tukey, MissingValues) {
  ScoreMatrix x(4, 3, std::vector<double>{0.1, 0.5, kMissing, 0.2, 0.6, kMissing, 0.3, kMissing, kMissing, 0.4, 0.8,
                                          kMissing});
  InferenceConfig cfg;
  cfg.B = 200;
  const auto res = tukey_hsd_randomization(x, all_pairs(3), cfg);
  EXPECT_FALSE(std::isnan(res.find(0, 1).p_value));
  EXPECT_TRUE(std::isnan(res.find(0, 2).mean_diff));
  EXPECT_TRUE(std::isnan(res.find(0, 2).p_value));
  EXPECT_FALSE(res.find(0, 2).significant);
  EXPECT_NEAR(res.means[1], (0.5 + 0.6 + 0.8) / 3.0, 1e-12);

  ScoreMatrix mostly_missing(3, 2, std::vector<double>{0.1, kMissing, 0.2, kMissing, 0.3, kMissing});
  EXPECT_EQ(code_of([&] { tukey_hsd_randomization(mostly_missing, {{0, 1}}, cfg); }), ErrorCode::AllMissingColumn);
}

TEST(Tukey, InputValidation) {
  ScoreMatrix x(3, 3, 0.5);
  InferenceConfig cfg;
  cfg.B = 10;
  EXPECT_EQ(code_of([&] { tukey_hsd_randomization(x, {{0, 3}}, cfg); }), ErrorCode::InvalidPair);
  EXPECT_EQ(code_of([&] { tukey_hsd_randomization(x, {{1, 1}}, cfg); }), ErrorCode::InvalidPair);
  EXPECT_EQ(code_of([&] { tukey_hsd_randomization(ScoreMatrix(1, 3, 0.5), {{0, 1}}, cfg); }),
            ErrorCode::InsufficientSamples);
  cfg.B = 0;
  EXPECT_EQ(code_of([&] { tukey_hsd_randomization(x, {{0, 1}}, cfg); }), ErrorCode::Config);
  cfg.B = 10;
  cfg.alpha = 1.0;
  EXPECT_EQ(code_of([&] { tukey_hsd_randomization(x, {{0, 1}}, cfg); }), ErrorCode::Config);
}

TEST(OneSided, AdjustmentRules) {
  EXPECT_DOUBLE_EQ(one_sided_p(0.04, 0.1, +1), 0.02);
  EXPECT_DOUBLE_EQ(one_sided_p(0.04, -0.1, -1), 0.02);
  EXPECT_DOUBLE_EQ(one_sided_p(0.04, -0.1, +1), 0.98);
  EXPECT_DOUBLE_EQ(one_sided_p(1.0, 0.0, +1), 0.5);
  EXPECT_DOUBLE_EQ(one_sided_p(0.3, 1e-12, +1), 0.5);
  EXPECT_TRUE(std::isnan(one_sided_p(std::nan(""), 0.1, 1)));
}

TEST(OneSided, TukeyUsesExpectedDirections) {
  std::mt19937_64 gen(8);
  auto x = random_matrix(gen, 30, 3);
  for (std::size_t r = 0; r < 30; ++r) x(r, 0) = std::min(1.0, x(r, 0) + 0.1);
  InferenceConfig cfg;
  cfg.B = 2000;
  const auto two = tukey_hsd_randomization(x, {{0, 1}, {1, 2}}, cfg);
  cfg.one_sided = true;
  cfg.expected_directions = {{{0, 1}, +1}, {{2, 1}, +1}};
  const auto one = tukey_hsd_randomization(x, {{0, 1}, {1, 2}}, cfg);
  const auto& t01 = two.find(0, 1);
  const auto& o01 = one.find(0, 1);
  EXPECT_GT(t01.mean_diff, 0);
  EXPECT_DOUBLE_EQ(o01.p_value, t01.p_value / 2);
  // (1,2) is looked up as the reverse of (2,1) with the sign flipped.
  const auto& t12 = two.find(1, 2);
  EXPECT_DOUBLE_EQ(one.find(1, 2).p_value, one_sided_p(t12.p_value, t12.mean_diff, -1));
  cfg.expected_directions.clear();
  EXPECT_EQ(code_of([&] { tukey_hsd_randomization(x, {{0, 1}}, cfg); }), ErrorCode::Config);
}

TEST(Holm, WorkedExamples) {
  auto h = holm_bonferroni({0.01, 0.02, 0.04}, {"H1", "H2", "H3"});
  EXPECT_EQ(h.reject, (std::vector<bool>{true, true, true}));
  EXPECT_NEAR(h.adjusted[0], 0.03, 1e-15);
  EXPECT_NEAR(h.adjusted[1], 0.04, 1e-15);
  EXPECT_NEAR(h.adjusted[2], 0.04, 1e-15);

  h = holm_bonferroni({0.0, 0.0, 0.0070}, {"H1", "H2", "H3"});
  EXPECT_EQ(h.reject, (std::vector<bool>{true, true, true}));
  EXPECT_EQ(h.adjusted[2], 0.0070);

  h = holm_bonferroni({0.01, 0.04, 0.03}, {"a", "b", "c"});
  EXPECT_EQ(h.reject, (std::vector<bool>{true, false, false}));
  EXPECT_NEAR(h.adjusted[0], 0.03, 1e-15);
  EXPECT_NEAR(h.adjusted[1], 0.06, 1e-15);
  EXPECT_NEAR(h.adjusted[2], 0.06, 1e-15);
}

TEST(Holm, EdgeCases) {
  auto h = holm_bonferroni({0.05}, {"only"});
  EXPECT_TRUE(h.reject[0]);
  EXPECT_EQ(h.adjusted[0], 0.05);
  h = holm_bonferroni({std::nan(""), 0.001}, {"nan", "small"});
  EXPECT_FALSE(h.reject[0]);
  EXPECT_TRUE(h.reject[1]);
  EXPECT_EQ(h.adjusted[0], 1.0);
  EXPECT_NEAR(h.adjusted[1], 0.002, 1e-15);
  h = holm_bonferroni({0.5, 0.9}, {"x", "y"});
  // 0.5 * 2 caps at 1 and the running max carries it to 0.9's slot.
  EXPECT_EQ(h.adjusted[0], 1.0);
  EXPECT_EQ(h.adjusted[1], 1.0);
  EXPECT_TRUE(holm_bonferroni({}, {}).reject.empty());
  EXPECT_EQ(code_of([] { holm_bonferroni({0.1, 0.2}, {"a"}); }), ErrorCode::LengthMismatch);
}

TEST(Holm, AdjustedValuesAreMonotoneInRawOrder) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(0, 0.2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(6);
    for (auto& v : p) v = u(gen);
    const auto h = holm_bonferroni(p, std::vector<std::string>(6, "h"));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        if (p[i] < p[j]) {
          EXPECT_LE(h.adjusted[i], h.adjusted[j]);
        }
        if (h.reject[j] && p[i] <= p[j]) {
          EXPECT_TRUE(h.reject[i]);
        }
      }
  }
}

TEST(Aggregate, MaxMaxAndBonferroniMin) {
  HypothesisSpec spec;
  spec.metrics = {"CC", "QR"};
  spec.h1_pairs = {{"A", "C"}, {"B", "D"}};
  spec.h2_pairs = {{"D", "C"}};
  spec.h2_metrics = {"QR"};
  spec.h3_pairs = {{"C", "E"}, {"D", "F"}};
  MetricPairPValues pv;
  pv.h1["CC"] = {{{"A", "C"}, 0.01}, {{"B", "D"}, 0.03}};
  pv.h1["QR"] = {{{"A", "C"}, 0.0}, {{"B", "D"}, 0.02}};
  pv.h2["QR"] = {{{"D", "C"}, 0.004}};
  pv.h3["CC"] = {{{"C", "E"}, 0.5}, {{"D", "F"}, 0.025}};
  pv.h3["QR"] = {{{"C", "E"}, 0.04}, {{"D", "F"}, 0.9}};
  const auto a = aggregate_hypotheses(pv, spec);
  EXPECT_DOUBLE_EQ(a.h1, 0.03);
  EXPECT_DOUBLE_EQ(a.h2, 0.004);
  EXPECT_DOUBLE_EQ(a.h3_min_raw, 0.025);
  EXPECT_DOUBLE_EQ(a.h3, 0.05);
  EXPECT_DOUBLE_EQ(a.h3_metric_min.at("CC"), 0.025);
  EXPECT_DOUBLE_EQ(a.h3_metric_min.at("QR"), 0.04);

  for (auto& [m, t] : pv.h3)
    for (auto& [k, v] : t) v = 1.0;
  EXPECT_EQ(aggregate_hypotheses(pv, spec).h3, 1.0);

  pv.h1["QR"].erase({"B", "D"});
  EXPECT_EQ(code_of([&] { aggregate_hypotheses(pv, spec); }), ErrorCode::MissingPValue);
  pv.h1["QR"][{"B", "D"}] = std::nan("");
  EXPECT_EQ(code_of([&] { aggregate_hypotheses(pv, spec); }), ErrorCode::MissingPValue);
}

TEST(DiscriminativePower, Counting) {
  const auto d = discriminative_power({0.01, 0.2, std::nan(""), 0.049, 0.05}, 0.05, "QR");
  EXPECT_EQ(d.metric, "QR");
  EXPECT_EQ(d.significant_pairs, 2u);
  EXPECT_EQ(d.total_pairs, 5u);
  EXPECT_DOUBLE_EQ(d.dp, 0.4);
  EXPECT_EQ(discriminative_power(std::vector<double>(15, 0.0)).dp, 1.0);
  EXPECT_EQ(code_of([] { discriminative_power(std::vector<double>{}); }), ErrorCode::EmptyInput);
}

TEST(DiscriminativePower, FromTensorUsesAllPairs) {
  const auto t = six_system_tensor(80, 1);
  InferenceConfig cfg;
  cfg.B = 1000;
  cfg.one_sided = true;
  const auto d = discriminative_power(t, 1, cfg);
  EXPECT_EQ(d.total_pairs, 15u);
  EXPECT_EQ(d.metric, "QR");
  EXPECT_GE(d.significant_pairs, 8u);
}

TEST(Asl, SortedWithMissingLast) {
  const auto c = asl_curve({0.3, std::nan(""), 0.0, 0.1});
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c[0].rank, 1u);
  EXPECT_EQ(c[0].p_value, 0.0);
  EXPECT_EQ(c[1].p_value, 0.1);
  EXPECT_EQ(c[2].p_value, 0.3);
  EXPECT_TRUE(std::isnan(c[3].p_value));
  EXPECT_EQ(asl_csv({{"CC", c}}), "metric,rank,p_value\nCC,1,0\nCC,2,0.10000000000000001\nCC,3,0.29999999999999999\nCC,4,\n");
  EXPECT_EQ(code_of([] { asl_curve({}); }), ErrorCode::EmptyInput);
}

TEST(RunHypotheses, ReportShapeAndConclusions) {
  const auto t = six_system_tensor(120, 2);
  InferenceConfig cfg;
  cfg.B = 2000;
  cfg.seed = 5;
  const auto r = run_hypotheses(t, HypothesisSpec{}, cfg);
  ASSERT_EQ(r.hypotheses.size(), 3u);
  EXPECT_EQ(r.hypotheses[0].name, "H1");
  // A/B clearly beat C..F and D/F beat C/E, so H1 and H2 hold.
  EXPECT_TRUE(r.hypotheses[0].significant);
  EXPECT_TRUE(r.hypotheses[1].significant);
  EXPECT_EQ(r.metrics.size(), 5u);
  EXPECT_EQ(r.metrics.at("QR").h2.size(), 2u);
  EXPECT_FALSE(r.metrics.at("CC").has_h2);
  EXPECT_EQ(r.metrics.at("AC").all_pairs.size(), 15u);
  EXPECT_EQ(r.metrics.at("AC").h1.front().first, "A_vs_C");
  EXPECT_EQ(r.discriminative_power.size(), 5u);
  for (const auto& h : r.hypotheses) EXPECT_GE(h.final_adjusted_p, h.raw_aggregated_p);

  const json j = to_json(r);
  for (const char* key : {"meta", "hypothesis_results", "metric_results", "discriminative_power"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j["hypothesis_results"]["H3"].contains("min_p_across_metrics_raw"));
  EXPECT_TRUE(j["metric_results"]["CC"]["h2_pairs_results"].is_null());
  EXPECT_TRUE(j["metric_results"]["QR"]["h1_pairs_results"].contains("B_vs_F"));

  const auto back = hypothesis_report_from_json(j);
  EXPECT_EQ(to_json(back), j);

  const auto again = run_hypotheses(t, HypothesisSpec{}, cfg);
  EXPECT_EQ(to_json(again).dump(), j.dump());
  EXPECT_NE(hypothesis_summary(r).find("H3: Bonf-corr Min Raw p="), std::string::npos);
}

TEST(RunHypotheses, Errors) {
  const auto t = six_system_tensor(10, 3);
  InferenceConfig cfg;
  cfg.B = 50;
  HypothesisSpec spec;
  spec.h3_pairs.push_back({"A", "G"});
  try {
    run_hypotheses(t, spec, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSystem);
    EXPECT_NE(std::string(e.what()).find('G'), std::string::npos);
  }
  spec = HypothesisSpec{};
  spec.metrics.push_back("XX");
  EXPECT_EQ(code_of([&] { run_hypotheses(t, spec, cfg); }), ErrorCode::Config);
}
