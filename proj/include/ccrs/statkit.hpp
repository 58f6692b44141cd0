#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccrs/error.hpp"

namespace ccrs::stats {

/// Non-missing values, in order.
inline std::vector<double> drop_missing(std::span<const double> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs)
    if (!std::isnan(x)) out.push_back(x);
  return out;
}

/// Quantile of sorted data by linear interpolation between order statistics
/// at position (n - 1) * p.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct PopulationStats {
  std::size_t n = 0;
  double mean = 0;
  double geometric_mean = 0;
  double median = 0;
  double q1 = 0;
  double q3 = 0;
  double midhinge = 0;
  /// Sample variance (n - 1 denominator); undefined for n < 2.
  std::optional<double> variance;
  double min = 0;
  double max = 0;
  double range = 0;
  double iqr = 0;
  /// m3 / m2^1.5 with central moments over n; undefined when m2 == 0 or n < 2.
  std::optional<double> skewness;
  /// m4 / m2^2 - 3; undefined when m2 == 0 or n < 2.
  std::optional<double> kurtosis;
};

/// Descriptive statistics over non-missing values (listwise exclusion).
/// The geometric mean is 0 whenever any value is 0.
inline PopulationStats population_stats(std::span<const double> values) {
  std::vector<double> xs = drop_missing(values);
  if (xs.empty()) throw Error(ErrorCode::EmptyInput, "population_stats");
  std::sort(xs.begin(), xs.end());
  PopulationStats s;
  s.n = xs.size();
  const double n = static_cast<double>(s.n);
  s.min = xs.front();
  s.max = xs.back();
  s.range = s.max - s.min;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (s.min < 0) throw Error(ErrorCode::ValueOutOfRange, "geometric mean of negative data");
  if (s.min == 0) {
    s.geometric_mean = 0;
  } else {
    double log_sum = 0;
    for (double x : xs) log_sum += std::log(x);
    s.geometric_mean = std::exp(log_sum / n);
  }
  s.median = quantile_sorted(xs, 0.5);
  s.q1 = quantile_sorted(xs, 0.25);
  s.q3 = quantile_sorted(xs, 0.75);
  s.midhinge = (s.q1 + s.q3) / 2.0;
  s.iqr = s.q3 - s.q1;
  if (s.n >= 2) {
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : xs) {
      const double d = x - s.mean;
      const double d2 = d * d;
      m2 += d2;
      m3 += d2 * d;
      m4 += d2 * d2;
    }
    s.variance = m2 / (n - 1.0);
    m2 /= n;
    m3 /= n;
    m4 /= n;
    // Relative threshold: constant data can leave round-off residue in m2.
    if (m2 > 1e-24 * std::max(1.0, s.mean * s.mean)) {
      s.skewness = m3 / std::pow(m2, 1.5);
      s.kurtosis = m4 / (m2 * m2) - 3.0;
    } else {
      s.variance = 0.0;
    }
  }
  return s;
}

struct BoundFrequencies {
  std::size_t n = 0;
  std::size_t count_at_zero = 0;
  std::size_t count_at_one = 0;
  double pct_at_zero = 0;
  double pct_at_one = 0;
};

/// Exact counts of 0 and 1 among non-missing [0,1] scores.
inline BoundFrequencies bound_frequencies(std::span<const double> scores) {
  const auto xs = drop_missing(scores);
  if (xs.empty()) throw Error(ErrorCode::EmptyInput, "bound_frequencies");
  BoundFrequencies b;
  b.n = xs.size();
  for (double x : xs) {
    b.count_at_zero += x == 0.0;
    b.count_at_one += x == 1.0;
  }
  b.pct_at_zero = 100.0 * static_cast<double>(b.count_at_zero) / static_cast<double>(b.n);
  b.pct_at_one = 100.0 * static_cast<double>(b.count_at_one) / static_cast<double>(b.n);
  return b;
}

enum class TieSampling {
  /// Two distinct responses: sum c(c-1) / (N(N-1)).
  WithoutReplacement,
  /// Independent draws: sum c^2 / N^2.
  WithReplacement,
};

/// Probability that two randomly chosen responses share the same score.
inline double tie_probability(std::span<const double> scores,
                              TieSampling sampling = TieSampling::WithoutReplacement) {
  std::vector<double> xs = drop_missing(scores);
  if (xs.size() < 2) throw Error(ErrorCode::InsufficientSamples, "tie_probability needs N >= 2");
  std::sort(xs.begin(), xs.end());
  double same = 0;
  for (std::size_t i = 0; i < xs.size();) {
    std::size_t j = i;
    while (j < xs.size() && xs[j] == xs[i]) ++j;
    const double c = static_cast<double>(j - i);
    same += sampling == TieSampling::WithoutReplacement ? c * (c - 1.0) : c * c;
    i = j;
  }
  const double n = static_cast<double>(xs.size());
  return same / (sampling == TieSampling::WithoutReplacement ? n * (n - 1.0) : n * n);
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

enum class CorrelationMethod { Pearson, Spearman, Kendall };

inline constexpr std::string_view to_string(CorrelationMethod m) {
  switch (m) {
    case CorrelationMethod::Pearson: return "pearson";
    case CorrelationMethod::Spearman: return "spearman";
    case CorrelationMethod::Kendall: return "kendall";
  }
  return "?";
}

/// Average ranks (1-based); ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

/// Product-moment correlation; nullopt when either side is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

/// Kendall tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)) over all pairs.
inline std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  // Sort by (x, y) so each x-tie group is contiguous; then count per pair.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[order[i]], yi = y[order[i]];
    for (std::size_t j = i + 1; j < n; ++j) {
      const double xj = x[order[j]], yj = y[order[j]];
      const bool tx = xi == xj, ty = yi == yj;
      if (tx) ++ties_x;
      if (ty) ++ties_y;
      if (tx || ty) continue;
      // xj > xi by sort order.
      if (yj > yi) ++concordant;
      else ++discordant;
    }
  }
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double denom = std::sqrt((n0 - static_cast<double>(ties_x)) * (n0 - static_cast<double>(ties_y)));
  if (denom <= 0) return std::nullopt;
  return std::clamp(static_cast<double>(concordant - discordant) / denom, -1.0, 1.0);
}

inline std::optional<double> correlation(std::span<const double> x, std::span<const double> y, CorrelationMethod m) {
  switch (m) {
    case CorrelationMethod::Pearson: return pearson(x, y);
    case CorrelationMethod::Spearman: return spearman(x, y);
    case CorrelationMethod::Kendall: return kendall_tau_b(x, y);
  }
  return std::nullopt;
}

struct CorrelationMatrix {
  CorrelationMethod method = CorrelationMethod::Pearson;
  std::vector<std::string> labels;
  /// Row-major; nullopt marks an undefined correlation (constant column or
  /// too few complete pairs). The diagonal is always exactly 1.
  std::vector<std::optional<double>> values;
  /// Labels of columns that are constant over their non-missing values.
  std::vector<std::string> degenerate;

  std::size_t size() const { return labels.size(); }
  std::optional<double> at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
};

/// Pairwise-complete correlations between aligned columns.
inline CorrelationMatrix correlation_matrix(const std::vector<std::vector<double>>& columns,
                                            const std::vector<std::string>& labels, CorrelationMethod method) {
  if (columns.size() < 2) throw Error(ErrorCode::InsufficientSamples, "correlation_matrix needs >= 2 columns");
  if (labels.size() != columns.size()) throw Error(ErrorCode::LengthMismatch, "labels vs columns");
  const std::size_t n = columns.front().size();
  for (const auto& c : columns)
    if (c.size() != n) throw Error(ErrorCode::LengthMismatch, "columns differ in length");
  CorrelationMatrix out;
  out.method = method;
  out.labels = labels;
  const std::size_t k = columns.size();
  out.values.assign(k * k, std::nullopt);
  for (std::size_t i = 0; i < k; ++i) {
    const auto present = drop_missing(columns[i]);
    if (present.size() < 3) throw Error(ErrorCode::InsufficientSamples, labels[i] + " has fewer than 3 values");
    if (std::all_of(present.begin(), present.end(), [&](double v) { return v == present.front(); }))
      out.degenerate.push_back(labels[i]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    out.values[i * k + i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      std::vector<double> x, y;
      for (std::size_t r = 0; r < n; ++r)
        if (!std::isnan(columns[i][r]) && !std::isnan(columns[j][r])) {
          x.push_back(columns[i][r]);
          y.push_back(columns[j][r]);
        }
      std::optional<double> r;
      if (x.size() >= 3) r = correlation(x, y, method);
      out.values[i * k + j] = r;
      out.values[j * k + i] = r;
    }
  }
  return out;
}

/// tanh(mean(atanh(r_i))).
inline double fisher_z_average(std::span<const double> correlations) {
  if (correlations.empty()) throw Error(ErrorCode::EmptyInput, "fisher_z_average");
  double sum = 0;
  for (double r : correlations) {
    if (!(std::abs(r) < 1.0)) throw Error(ErrorCode::PerfectCorrelation, "r = " + std::to_string(r));
    sum += std::atanh(r);
  }
  return std::tanh(sum / static_cast<double>(correlations.size()));
}

/// Cell-wise Fisher-Z average of same-shaped matrices. A cell is undefined
/// if it is undefined in any input; perfect off-diagonal correlations are
/// clamped just inside (-1, 1).
inline CorrelationMatrix fisher_z_average(const std::vector<CorrelationMatrix>& mats) {
  if (mats.empty()) throw Error(ErrorCode::EmptyInput, "fisher_z_average of no matrices");
  CorrelationMatrix out;
  out.method = mats.front().method;
  out.labels = mats.front().labels;
  const std::size_t k = out.size();
  out.values.assign(k * k, std::nullopt);
  for (const auto& m : mats) {
    if (m.labels != out.labels) throw Error(ErrorCode::LengthMismatch, "matrices have different labels");
    for (const auto& d : m.degenerate)
      if (std::find(out.degenerate.begin(), out.degenerate.end(), d) == out.degenerate.end()) out.degenerate.push_back(d);
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) {
        out.values[i * k + j] = 1.0;
        continue;
      }
      std::vector<double> rs;
      bool defined = true;
      for (const auto& m : mats) {
        const auto v = m.at(i, j);
        if (!v) {
          defined = false;
          break;
        }
        rs.push_back(std::clamp(*v, -1.0 + 1e-12, 1.0 - 1e-12));
      }
      if (defined) out.values[i * k + j] = fisher_z_average(rs);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

struct Histogram {
  double lo = 0, hi = 100, width = 5;
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [lo, hi]; the last bin is closed on the right.
inline Histogram histogram(std::span<const double> values, double lo = 0, double hi = 100, double width = 5) {
  Histogram h{lo, hi, width, {}};
  const auto bins = static_cast<std::size_t>(std::ceil((hi - lo) / width - 1e-9));
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (std::isnan(v) || v < lo || v > hi) continue;
    auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

struct FiveNumberSummary {
  double min, q1, median, q3, max;
};

inline FiveNumberSummary five_number_summary(std::span<const double> values) {
  const auto s = population_stats(values);
  return {s.min, s.q1, s.median, s.q3, s.max};
}

}  // namespace ccrs::stats
