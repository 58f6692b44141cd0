#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ccrs/error.hpp"
#include "ccrs/matrix.hpp"
#include "ccrs/random.hpp"
#include "ccrs/records.hpp"
#include "ccrs/util.hpp"

namespace ccrs {

using SystemPair = std::pair<std::size_t, std::size_t>;

struct InferenceConfig {
  std::size_t B = 10000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  bool one_sided = false;
  /// +1: mean_i > mean_j expected, -1: mean_i < mean_j expected.
  std::map<SystemPair, int> expected_directions;
  /// Worker threads for the permutation loop; 0 = hardware concurrency.
  std::size_t threads = 0;
  /// (count + 1) / (B + 1) instead of count / B.
  bool plus_one_estimator = false;

  void validate() const {
    if (B < 1) throw Error(ErrorCode::Config, "B must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::Config, "alpha must be in (0,1)");
  }
};

/// Shuffles each row's non-missing values among that row's non-missing
/// positions. Missing entries stay in place.
inline void permute_rows_inplace(ScoreMatrix& m, Rng& rng) {
  std::vector<double> vals;
  std::vector<std::size_t> pos;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    vals.clear();
    pos.clear();
    for (std::size_t c = 0; c < row.size(); ++c)
      if (!std::isnan(row[c])) {
        vals.push_back(row[c]);
        pos.push_back(c);
      }
    if (vals.size() < 2) continue;
    rng.shuffle(std::span<double>(vals));
    for (std::size_t k = 0; k < pos.size(); ++k) row[pos[k]] = vals[k];
  }
}

inline ScoreMatrix permute_rows(const ScoreMatrix& m, Rng& rng) {
  ScoreMatrix out = m;
  permute_rows_inplace(out, rng);
  return out;
}

/// Sampled range statistic q* = max - min of permuted column means.
/// Entries are NaN for permutations that left fewer than two defined means.
struct NullDistribution {
  std::size_t B = 0;
  std::vector<double> q_star;

  /// Number of permutations with q* >= threshold - 1e-9.
  std::size_t count_at_least(double threshold) const {
    std::size_t n = 0;
    for (double q : q_star)
      if (!std::isnan(q) && q >= threshold - 1e-9) ++n;
    return n;
  }
};

namespace detail {

inline std::size_t resolve_threads(std::size_t requested, std::size_t work) {
  std::size_t t = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(t, work));
}

}  // namespace detail

/// Draws B permutations; permutation b uses Rng::stream(seed, b), so serial
/// and parallel runs agree exactly.
inline NullDistribution randomization_null(const ScoreMatrix& x, std::size_t B, std::uint64_t seed,
                                           std::size_t threads = 0) {
  const std::size_t n = x.rows(), m = x.cols();
  // Non-missing cells per row, and column counts (constant under permutation).
  std::vector<std::vector<std::size_t>> present(n);
  std::vector<std::size_t> col_count(m, 0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c)
      if (!std::isnan(x(r, c))) {
        present[r].push_back(c);
        ++col_count[c];
      }

  NullDistribution out;
  out.B = B;
  out.q_star.assign(B, std::nan(""));
  auto run = [&](std::size_t begin, std::size_t end) {
    std::vector<double> sums(m), vals;
    for (std::size_t b = begin; b < end; ++b) {
      Rng rng = Rng::stream(seed, b);
      std::fill(sums.begin(), sums.end(), 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        const auto& cols = present[r];
        if (cols.empty()) continue;
        vals.clear();
        for (std::size_t c : cols) vals.push_back(x(r, c));
        if (vals.size() > 1) rng.shuffle(std::span<double>(vals));
        for (std::size_t k = 0; k < cols.size(); ++k) sums[cols[k]] += vals[k];
      }
      double lo = INFINITY, hi = -INFINITY;
      std::size_t defined = 0;
      for (std::size_t c = 0; c < m; ++c) {
        if (!col_count[c]) continue;
        const double mean = sums[c] / static_cast<double>(col_count[c]);
        lo = std::min(lo, mean);
        hi = std::max(hi, mean);
        ++defined;
      }
      if (defined >= 2) out.q_star[b] = hi - lo;
    }
  };

  const std::size_t t = detail::resolve_threads(threads, B / 64 + 1);
  if (t == 1) {
    run(0, B);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (B + t - 1) / t;
    for (std::size_t w = 0; w < t; ++w) {
      const std::size_t begin = std::min(B, w * chunk), end = std::min(B, begin + chunk);
      pool.emplace_back(run, begin, end);
    }
  }
  return out;
}

struct PairResult {
  std::size_t i = 0, j = 0;
  /// mean_i - mean_j on the matrix's own scale; NaN if either column is all missing.
  double mean_diff = 0;
  /// NaN exactly when mean_diff is NaN.
  double p_value = 0;
  bool significant = false;
};

struct TukeyResult {
  std::vector<PairResult> pairs;
  std::vector<double> means;

  const PairResult& find(std::size_t i, std::size_t j) const {
    for (const auto& p : pairs)
      if (p.i == i && p.j == j) return p;
    throw Error(ErrorCode::InvalidPair, std::to_string(i) + "," + std::to_string(j) + " not tested");
  }
};

namespace detail {

inline void check_pairs(const ScoreMatrix& x, const std::vector<SystemPair>& pairs) {
  for (const auto& [i, j] : pairs)
    if (i >= x.cols() || j >= x.cols() || i == j)
      throw Error(ErrorCode::InvalidPair, std::to_string(i) + "," + std::to_string(j));
}

inline void check_columns(const std::vector<double>& means) {
  const auto defined = std::count_if(means.begin(), means.end(), [](double v) { return !std::isnan(v); });
  if (defined < 2) throw Error(ErrorCode::AllMissingColumn, "fewer than two systems have any scores");
}

inline int expected_direction(const InferenceConfig& cfg, std::size_t i, std::size_t j) {
  if (auto it = cfg.expected_directions.find({i, j}); it != cfg.expected_directions.end()) return it->second;
  if (auto it = cfg.expected_directions.find({j, i}); it != cfg.expected_directions.end()) return -it->second;
  throw Error(ErrorCode::Config, "no expected direction for pair " + std::to_string(i) + "," + std::to_string(j));
}

}  // namespace detail

/// One-sided adjustment of a two-sided p-value for an expected sign.
inline double one_sided_p(double two_sided_p, double observed_diff, int expected_dir) {
  if (std::isnan(two_sided_p) || std::isnan(observed_diff)) return two_sided_p;
  const bool correct = (expected_dir > 0 && observed_diff > 1e-9) || (expected_dir < 0 && observed_diff < -1e-9);
  if (correct) return two_sided_p / 2.0;
  if (expected_dir == 0) return two_sided_p;
  if (std::abs(observed_diff) < 1e-9) return 0.5;
  return std::min(1.0, 1.0 - two_sided_p / 2.0);
}

/// Pairwise p-values from an already drawn null distribution of x.
inline TukeyResult tukey_from_null(const ScoreMatrix& x, const std::vector<SystemPair>& pairs,
                                   const InferenceConfig& cfg, const NullDistribution& null) {
  detail::check_pairs(x, pairs);
  TukeyResult out;
  out.means = x.column_means();
  detail::check_columns(out.means);
  const double B = static_cast<double>(null.B);
  for (const auto& [i, j] : pairs) {
    PairResult r{i, j, out.means[i] - out.means[j], std::nan(""), false};
    if (!std::isnan(r.mean_diff)) {
      const double count = static_cast<double>(null.count_at_least(std::abs(r.mean_diff)));
      r.p_value = cfg.plus_one_estimator ? (count + 1.0) / (B + 1.0) : count / B;
      if (cfg.one_sided) r.p_value = one_sided_p(r.p_value, r.mean_diff, detail::expected_direction(cfg, i, j));
      r.significant = r.p_value < cfg.alpha;
    }
    out.pairs.push_back(r);
  }
  return out;
}

/// Randomized Tukey HSD: p_ij = #{q* >= |mean_i - mean_j|} / B.
inline TukeyResult tukey_hsd_randomization(const ScoreMatrix& x, const std::vector<SystemPair>& pairs,
                                           const InferenceConfig& cfg) {
  cfg.validate();
  detail::check_pairs(x, pairs);
  if (x.rows() < 2) throw Error(ErrorCode::InsufficientSamples, "randomization test needs >= 2 rows");
  detail::check_columns(x.column_means());
  return tukey_from_null(x, pairs, cfg, randomization_null(x, cfg.B, cfg.seed, cfg.threads));
}

inline std::vector<SystemPair> all_pairs(std::size_t m) {
  std::vector<SystemPair> out;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) out.emplace_back(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Holm-Bonferroni
// ---------------------------------------------------------------------------

struct HolmResult {
  std::vector<std::string> names;
  std::vector<bool> reject;
  std::vector<double> adjusted;
};

/// Step-down Holm. Missing p-values sort as 1.0 and report adjusted 1.0.
inline HolmResult holm_bonferroni(const std::vector<double>& p, const std::vector<std::string>& names,
                                  double alpha = 0.05) {
  if (p.size() != names.size()) throw Error(ErrorCode::LengthMismatch, "p-values vs names");
  const std::size_t n = p.size();
  HolmResult out{names, std::vector<bool>(n, false), std::vector<double>(n, 1.0)};
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto key = [&](std::size_t i) { return std::isnan(p[i]) ? 1.0 : p[i]; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (key(a) != key(b)) return key(a) < key(b);
    return a < b;
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (key(order[i]) > alpha / static_cast<double>(n - i)) break;
    out.reject[order[i]] = true;
  }
  double running = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    running = std::max(running, std::min(1.0, key(order[i]) * static_cast<double>(n - i)));
    out.adjusted[order[i]] = std::isnan(p[order[i]]) ? 1.0 : running;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hypotheses
// ---------------------------------------------------------------------------

/// Named pairs over system labels plus which metrics feed each hypothesis.
struct HypothesisSpec {
  std::vector<std::string> metrics{"CC", "QR", "ID", "AC", "IR"};
  std::vector<std::pair<std::string, std::string>> h1_pairs{{"A", "C"}, {"A", "E"}, {"B", "D"}, {"B", "F"}};
  std::vector<std::pair<std::string, std::string>> h2_pairs{{"D", "C"}, {"F", "E"}};
  std::vector<std::string> h2_metrics{"QR", "IR"};
  std::vector<std::pair<std::string, std::string>> h3_pairs{{"C", "E"}, {"D", "F"}};

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    auto add = [&](const std::string& l) {
      if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    };
    for (const auto* set : {&h1_pairs, &h2_pairs, &h3_pairs})
      for (const auto& [a, b] : *set) {
        add(a);
        add(b);
      }
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Per-metric p-values keyed by (first, second) label pairs.
struct MetricPairPValues {
  std::map<std::string, std::map<std::pair<std::string, std::string>, double>> h1, h2, h3;
};

struct AggregatedHypotheses {
  double h1 = 1.0, h2 = 1.0, h3 = 1.0;
  double h3_min_raw = 1.0;
  std::map<std::string, double> h3_metric_min;
};

/// H1/H2: max over their one-sided sets; H3: Bonferroni over metrics of the
/// per-metric minimum two-sided p.
inline AggregatedHypotheses aggregate_hypotheses(const MetricPairPValues& in, const HypothesisSpec& spec = {}) {
  auto lookup = [](const auto& table, const char* set, const std::string& metric, const auto& pair) {
    auto mt = table.find(metric);
    double p = std::nan("");
    if (mt != table.end())
      if (auto it = mt->second.find(pair); it != mt->second.end()) p = it->second;
    if (std::isnan(p))
      throw Error(ErrorCode::MissingPValue,
                  std::string(set) + " " + pair.first + "_vs_" + pair.second + " on " + metric);
    return p;
  };
  AggregatedHypotheses out;
  double h1 = 0.0, h2 = 0.0;
  bool any1 = false, any2 = false;
  for (const auto& metric : spec.metrics) {
    for (const auto& pr : spec.h1_pairs) {
      h1 = std::max(h1, lookup(in.h1, "H1", metric, pr));
      any1 = true;
    }
    if (std::find(spec.h2_metrics.begin(), spec.h2_metrics.end(), metric) != spec.h2_metrics.end())
      for (const auto& pr : spec.h2_pairs) {
        h2 = std::max(h2, lookup(in.h2, "H2", metric, pr));
        any2 = true;
      }
    double mmin = 1.0;
    for (const auto& pr : spec.h3_pairs) mmin = std::min(mmin, lookup(in.h3, "H3", metric, pr));
    out.h3_metric_min[metric] = mmin;
  }
  out.h1 = any1 ? h1 : 1.0;
  out.h2 = any2 ? h2 : 1.0;
  for (const auto& [_, v] : out.h3_metric_min) out.h3_min_raw = std::min(out.h3_min_raw, v);
  out.h3 = std::min(1.0, out.h3_min_raw * static_cast<double>(spec.metrics.size()));
  return out;
}

struct PairDetail {
  double p_value = std::nan("");
  double difference = std::nan("");
};

struct HypothesisOutcome {
  std::string name;
  bool significant = false;
  double raw_aggregated_p = 1.0;
  double final_adjusted_p = 1.0;
  std::string conclusion() const { return significant ? "Reject H0" : "Fail to reject H0"; }
};

struct DpResult {
  std::string metric;
  std::size_t significant_pairs = 0;
  std::size_t total_pairs = 0;
  double dp = 0.0;
};

struct MetricHypothesisDetail {
  std::vector<std::pair<std::string, PairDetail>> h1, h2, h3;
  bool has_h2 = false;
  /// Column means on the matrix scale.
  std::vector<double> means;
  /// Two-sided results for every system pair (shares the null with h1-h3).
  std::vector<std::pair<std::string, PairDetail>> all_pairs;
};

struct HypothesisReport {
  std::vector<std::string> system_labels;
  std::vector<HypothesisOutcome> hypotheses;
  double h3_min_raw = 1.0;
  std::map<std::string, double> h3_metric_min;
  std::vector<std::string> metric_order;
  std::map<std::string, MetricHypothesisDetail> metrics;
  std::vector<DpResult> discriminative_power;
  json meta = json::object();

  bool empty() const { return hypotheses.empty(); }
};

namespace detail {

inline json p_json(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

inline json pairs_json(const std::vector<std::pair<std::string, PairDetail>>& v) {
  json o = json::object();
  for (const auto& [k, d] : v) o[k] = {{"p_value", p_json(d.p_value)}, {"difference", p_json(d.difference)}};
  return o;
}

inline std::vector<std::pair<std::string, PairDetail>> pairs_from_json(const json& o) {
  std::vector<std::pair<std::string, PairDetail>> out;
  if (!o.is_object()) return out;
  auto num = [](const json& v) { return v.is_number() ? v.get<double>() : std::nan(""); };
  for (const auto& [k, v] : o.items()) out.push_back({k, {num(v.value("p_value", json())), num(v.value("difference", json()))}});
  return out;
}

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace detail

/// Layout of the listing's output object, plus "all_pairs_results" per
/// metric, a top-level "discriminative_power" and "meta".
inline json to_json(const HypothesisReport& r) {
  json hyp = json::object();
  for (const auto& h : r.hypotheses) {
    json e = {{"significant", h.significant},
              {"raw_aggregated_p_value", detail::p_json(h.raw_aggregated_p)},
              {"final_adjusted_p_value", detail::p_json(h.final_adjusted_p)},
              {"conclusion", h.conclusion()}};
    if (h.name == "H3") {
      e["min_p_across_metrics_raw"] = detail::p_json(r.h3_min_raw);
      json mm = json::object();
      for (const auto& m : r.metric_order)
        if (auto it = r.h3_metric_min.find(m); it != r.h3_metric_min.end()) mm[m] = detail::p_json(it->second);
      e["metric_min_p_values"] = mm;
    }
    hyp[h.name] = e;
  }
  json metrics = json::object();
  for (const auto& name : r.metric_order) {
    const auto& d = r.metrics.at(name);
    json means = json::array();
    if (std::any_of(d.means.begin(), d.means.end(), [](double v) { return !std::isnan(v); }))
      for (double v : d.means) means.push_back(std::isnan(v) ? json(nullptr) : json(detail::round3(v * 100.0)));
    metrics[name] = {{"h1_pairs_results", detail::pairs_json(d.h1)},
                     {"h2_pairs_results", d.has_h2 ? detail::pairs_json(d.h2) : json(nullptr)},
                     {"h3_pairs_results", detail::pairs_json(d.h3)},
                     {"means", means},
                     {"all_pairs_results", detail::pairs_json(d.all_pairs)}};
  }
  json dp = json::object();
  for (const auto& d : r.discriminative_power)
    dp[d.metric] = {{"significant_pairs", d.significant_pairs}, {"total_pairs", d.total_pairs}, {"dp", d.dp}};
  json meta = r.meta;
  meta["system_labels"] = r.system_labels;
  meta["metric_order"] = r.metric_order;
  return {{"meta", meta}, {"hypothesis_results", hyp}, {"metric_results", metrics}, {"discriminative_power", dp}};
}

inline HypothesisReport hypothesis_report_from_json(const json& j) {
  HypothesisReport r;
  auto num = [](const json& v) { return v.is_number() ? v.get<double>() : std::nan(""); };
  if (auto m = j.find("meta"); m != j.end() && m->is_object()) {
    r.meta = *m;
    if (m->contains("system_labels")) r.system_labels = (*m)["system_labels"].get<std::vector<std::string>>();
    if (m->contains("metric_order")) r.metric_order = (*m)["metric_order"].get<std::vector<std::string>>();
    r.meta.erase("system_labels");
    r.meta.erase("metric_order");
  }
  if (auto h = j.find("hypothesis_results"); h != j.end() && h->is_object()) {
    for (const auto& [name, e] : h->items()) {
      r.hypotheses.push_back({name, e.value("significant", false), num(e.value("raw_aggregated_p_value", json())),
                              num(e.value("final_adjusted_p_value", json()))});
      if (name == "H3") {
        r.h3_min_raw = num(e.value("min_p_across_metrics_raw", json()));
        if (auto mm = e.find("metric_min_p_values"); mm != e.end() && mm->is_object())
          for (const auto& [k, v] : mm->items()) r.h3_metric_min[k] = num(v);
      }
    }
  }
  if (auto ms = j.find("metric_results"); ms != j.end() && ms->is_object()) {
    for (const auto& [name, e] : ms->items()) {
      if (std::find(r.metric_order.begin(), r.metric_order.end(), name) == r.metric_order.end())
        r.metric_order.push_back(name);
      MetricHypothesisDetail d;
      d.h1 = detail::pairs_from_json(e.value("h1_pairs_results", json()));
      d.has_h2 = e.contains("h2_pairs_results") && e["h2_pairs_results"].is_object();
      if (d.has_h2) d.h2 = detail::pairs_from_json(e["h2_pairs_results"]);
      d.h3 = detail::pairs_from_json(e.value("h3_pairs_results", json()));
      d.all_pairs = detail::pairs_from_json(e.value("all_pairs_results", json()));
      if (auto mv = e.find("means"); mv != e.end() && mv->is_array())
        for (const auto& v : *mv) d.means.push_back(num(v) / 100.0);
      r.metrics[name] = std::move(d);
    }
  }
  if (auto dp = j.find("discriminative_power"); dp != j.end() && dp->is_object())
    for (const auto& [name, e] : dp->items())
      r.discriminative_power.push_back({name, e.value("significant_pairs", std::size_t{0}),
                                        e.value("total_pairs", std::size_t{0}), e.value("dp", 0.0)});
  return r;
}

// ---------------------------------------------------------------------------
// Discriminative power and ASL
// ---------------------------------------------------------------------------

/// Fraction of pairs with p < alpha. Missing p-values count as not significant.
inline DpResult discriminative_power(const std::vector<double>& pair_pvalues, double alpha = 0.05,
                                     std::string metric = {}) {
  if (pair_pvalues.empty()) throw Error(ErrorCode::EmptyInput, "discriminative_power needs pairs");
  DpResult d{std::move(metric), 0, pair_pvalues.size(), 0.0};
  for (double p : pair_pvalues) d.significant_pairs += (!std::isnan(p) && p < alpha);
  d.dp = static_cast<double>(d.significant_pairs) / static_cast<double>(d.total_pairs);
  return d;
}

/// Two-sided randomized Tukey HSD over all C(M,2) pairs of one metric.
inline DpResult discriminative_power(const ScoreTensor& t, std::size_t metric, InferenceConfig cfg) {
  if (t.num_systems() < 2) throw Error(ErrorCode::InsufficientSamples, "discriminative power needs >= 2 systems");
  cfg.one_sided = false;
  const auto res = tukey_hsd_randomization(t.metric_matrix(metric), all_pairs(t.num_systems()), cfg);
  std::vector<double> ps;
  for (const auto& p : res.pairs) ps.push_back(p.p_value);
  return discriminative_power(ps, cfg.alpha, t.metric_names[metric]);
}

struct AslPoint {
  std::size_t rank;
  double p_value;
};

/// Sorted p-values against 1-based rank.
inline std::vector<AslPoint> asl_curve(std::vector<double> pair_pvalues) {
  if (pair_pvalues.empty()) throw Error(ErrorCode::EmptyInput, "asl_curve");
  std::sort(pair_pvalues.begin(), pair_pvalues.end(), [](double a, double b) {
    if (std::isnan(a)) return false;
    if (std::isnan(b)) return true;
    return a < b;
  });
  std::vector<AslPoint> out;
  for (std::size_t i = 0; i < pair_pvalues.size(); ++i) out.push_back({i + 1, pair_pvalues[i]});
  return out;
}

inline std::string asl_csv(const std::map<std::string, std::vector<AslPoint>>& curves) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,rank,p_value\n";
  for (const auto& [metric, pts] : curves)
    for (const auto& p : pts) {
      os << metric << ',' << p.rank << ',';
      if (!std::isnan(p.p_value)) os << p.p_value;
      os << '\n';
    }
  return os.str();
}

// ---------------------------------------------------------------------------
// Full hypothesis run
// ---------------------------------------------------------------------------

/// Tests H1-H3 on every metric. One null distribution is drawn per metric
/// (stream seed + metric index) and shared by all pair sets of that metric.
inline HypothesisReport run_hypotheses(const ScoreTensor& t, const HypothesisSpec& spec, const InferenceConfig& cfg) {
  cfg.validate();
  for (const auto& label : spec.labels())
    if (!t.system_index(label)) throw Error(ErrorCode::MissingSystem, label);
  for (const auto& m : spec.metrics)
    if (!t.metric_index(m)) throw Error(ErrorCode::Config, "unknown metric " + m);
  if (t.num_queries() < 2) throw Error(ErrorCode::InsufficientSamples, "hypothesis tests need >= 2 queries");

  auto idx = [&](const std::pair<std::string, std::string>& p) -> SystemPair {
    return {*t.system_index(p.first), *t.system_index(p.second)};
  };
  auto to_pairs = [&](const auto& named) {
    std::vector<SystemPair> out;
    for (const auto& p : named) out.push_back(idx(p));
    return out;
  };
  const auto h1 = to_pairs(spec.h1_pairs), h2 = to_pairs(spec.h2_pairs), h3 = to_pairs(spec.h3_pairs);
  const auto every = all_pairs(t.num_systems());

  InferenceConfig one = cfg;
  one.one_sided = true;
  for (const auto& p : h1) one.expected_directions[p] = 1;
  for (const auto& p : h2) one.expected_directions[p] = 1;
  InferenceConfig two = cfg;
  two.one_sided = false;

  HypothesisReport report;
  report.system_labels = t.system_labels;
  report.metric_order = spec.metrics;
  MetricPairPValues pv;

  auto key = [&](const SystemPair& p) { return t.system_labels[p.first] + "_vs_" + t.system_labels[p.second]; };
  auto collect = [&](const TukeyResult& r, auto& detail_out, auto& pmap, const auto& named) {
    for (std::size_t k = 0; k < r.pairs.size(); ++k) {
      const auto& pr = r.pairs[k];
      detail_out.push_back({key({pr.i, pr.j}), {pr.p_value, pr.mean_diff}});
      pmap[named[k]] = pr.p_value;
    }
  };

  for (const auto& mname : spec.metrics) {
    const std::size_t k = *t.metric_index(mname);
    const ScoreMatrix x = t.metric_matrix(k);
    const auto null = randomization_null(x, cfg.B, splitmix64(cfg.seed) + k, cfg.threads);
    MetricHypothesisDetail d;
    collect(tukey_from_null(x, h1, one, null), d.h1, pv.h1[mname], spec.h1_pairs);
    d.has_h2 = std::find(spec.h2_metrics.begin(), spec.h2_metrics.end(), mname) != spec.h2_metrics.end();
    if (d.has_h2) collect(tukey_from_null(x, h2, one, null), d.h2, pv.h2[mname], spec.h2_pairs);
    const auto r3 = tukey_from_null(x, h3, two, null);
    collect(r3, d.h3, pv.h3[mname], spec.h3_pairs);
    d.means = r3.means;
    const auto ra = tukey_from_null(x, every, two, null);
    std::vector<double> all_p;
    for (const auto& pr : ra.pairs) {
      d.all_pairs.push_back({key({pr.i, pr.j}), {pr.p_value, pr.mean_diff}});
      all_p.push_back(pr.p_value);
    }
    report.discriminative_power.push_back(discriminative_power(all_p, cfg.alpha, mname));
    report.metrics[mname] = std::move(d);
  }

  const auto agg = aggregate_hypotheses(pv, spec);
  report.h3_min_raw = agg.h3_min_raw;
  report.h3_metric_min = agg.h3_metric_min;
  const std::vector<std::string> names{"H1", "H2", "H3"};
  const std::vector<double> raw{agg.h1, agg.h2, agg.h3};
  const auto holm = holm_bonferroni(raw, names, cfg.alpha);
  for (std::size_t i = 0; i < names.size(); ++i)
    report.hypotheses.push_back({names[i], holm.reject[i], raw[i], holm.adjusted[i]});
  report.meta = {{"seed", cfg.seed}, {"B", cfg.B}, {"alpha", cfg.alpha},
                 {"estimator", cfg.plus_one_estimator ? "(count+1)/(B+1)" : "count/B"}};
  return report;
}

/// Console summary in the listing's wording.
inline std::string hypothesis_summary(const HypothesisReport& r) {
  std::ostringstream os;
  char buf[256];
  os << "===== Final Conclusions after Holm-Bonferroni Correction =====\n";
  for (const auto& h : r.hypotheses) {
    const char* desc = h.name == "H3" ? "Bonf-corr Min Raw p" : "Max Raw p";
    std::snprintf(buf, sizeof buf, "%s: %s=%.6f; Final adj. p=%.6f -> %s\n", h.name.c_str(), desc,
                  h.raw_aggregated_p, h.final_adjusted_p, h.conclusion().c_str());
    os << buf;
  }
  return os.str();
}

}  // namespace ccrs
