#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ccrs/records.hpp"
#include "test_support.hpp"

using namespace ccrs;
using ccrs::testing::TempDir;

namespace {

constexpr const char* kQueries = R"([
  {
    "query_id": 0,
    "text": "Is Hirschsprung disease a mendelian or a multifactorial disorder?",
    "metadata": {},
    "gt_answer": "Coding sequence mutations in RET, GDNF, EDNRB, EDN3, and SOX10 are involved in the development of Hirschsprung disease."
  },
  {
    "query_id": 1,
    "text": "List signaling molecules (ligands) that interact with the receptor EGFR?",
    "metadata": {},
    "gt_answer": "The 7 known EGFR ligands are: epidermal growth factor (EGF), betacellulin (BTC), epiregulin (EPR)."
  }
])";

constexpr const char* kDocuments = R"([
  {"title": "", "text": "INTRODUCTION: The majority of patients with type 1 diabetes mellitus do not achieve glycemic targets.", "metadata": {}, "doc_id": "33108240"},
  {"title": "", "text": "The World Health Organization is still revising the epidemiology of MIS-C.", "metadata": {}, "doc_id": "33110725"}
])";

json item(double cc, double qr, double id, double ac, double ir) {
  return {{"metrics",
           {{"Contextual_Coherence", cc},
            {"Question_Relevance", qr},
            {"Information_Density", id},
            {"Answer_Correctness", ac},
            {"Information_Recall", ir}}}};
}

SystemRun run_of(std::string label, std::vector<MetricVector> v, bool with_ids = false) {
  SystemRun r;
  r.system_label = std::move(label);
  for (std::size_t i = 0; i < v.size(); ++i)
    r.records.push_back({with_ids ? std::optional<std::int64_t>(static_cast<std::int64_t>(i)) : std::nullopt, v[i]});
  return r;
}

}  // namespace

TEST(LoadDataset, QueryListingGivesTwoRecords) {
  TempDir dir;
  const auto ds = load_dataset(dir.write("q.json", kQueries));
  ASSERT_EQ(ds.queries.size(), 2u);
  EXPECT_EQ(ds.queries[0].query_id, 0);
  EXPECT_EQ(ds.queries[1].query_id, 1);
  EXPECT_TRUE(ds.queries[0].metadata.empty());
  EXPECT_TRUE(ds.documents.empty());
}

TEST(LoadDataset, SeparateQueryAndDocumentFiles) {
  TempDir dir;
  const auto ds = load_dataset(dir.write("q.json", kQueries), dir.write("d.json", kDocuments));
  EXPECT_EQ(ds.queries.size(), 2u);
  ASSERT_EQ(ds.documents.size(), 2u);
  EXPECT_EQ(ds.documents[0].doc_id, "33108240");
}

TEST(LoadDataset, CombinedObjectShape) {
  const json doc = {{"queries", json::parse(kQueries)}, {"documents", json::parse(kDocuments)}};
  const auto ds = parse_dataset(doc);
  EXPECT_EQ(ds.queries.size(), 2u);
  EXPECT_EQ(ds.documents.size(), 2u);
}

TEST(LoadDataset, EmptyListIsEmptyDataset) {
  TempDir dir;
  const auto ds = load_dataset(dir.write("e.json", "[]"));
  EXPECT_TRUE(ds.queries.empty());
  EXPECT_TRUE(ds.documents.empty());
}

TEST(LoadDataset, DuplicateIdRejected) {
  const json doc = json::parse(R"([{"query_id": 7, "text": "a"}, {"query_id": 7, "text": "b"}])");
  try {
    parse_dataset(doc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
    EXPECT_NE(std::string(e.what()).find('7'), std::string::npos);
  }
}

TEST(LoadDataset, MissingFileAndMalformedJson) {
  TempDir dir;
  try {
    load_dataset(dir / "nope.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
  try {
    load_dataset(dir.write("bad.json", "[\n{\"query_id\": 0,\n \"text\": }\n]"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedJson);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  try {
    parse_dataset(json::parse(R"([{"query_id": 0}])"), "f.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedJson);
    EXPECT_NE(std::string(e.what()).find("'text'"), std::string::npos);
  }
}

TEST(LoadResults, DividesByHundred) {
  const json doc = {{"ccrs_results", json::array({item(95, 100, 85, 24, 60)})}};
  const auto run = parse_results(doc, "A", "mem");
  ASSERT_EQ(run.records.size(), 1u);
  EXPECT_EQ(run.records[0].scores, (MetricVector{0.95, 1.00, 0.85, 0.24, 0.60}));
  EXPECT_EQ(run.warnings, 0u);
}

TEST(LoadResults, ItemLackingMetricIsSkipped) {
  json bad = item(1, 2, 3, 4, 5);
  bad["metrics"].erase("Information_Recall");
  const json doc = {{"ccrs_results", json::array({item(95, 100, 85, 24, 60), bad})}};
  const auto run = parse_results(doc, "A", "mem");
  EXPECT_EQ(run.records.size(), 1u);
  EXPECT_EQ(run.warnings, 1u);
  EXPECT_THROW(parse_results(doc, "A", "mem", LoadOptions{true}), Error);
}

TEST(LoadResults, SchemaErrors) {
  auto code_of = [](const json& doc) {
    try {
      parse_results(doc, "A", "mem");
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Config;
  };
  EXPECT_EQ(code_of(json{{"ccrs_results", json::object()}}), ErrorCode::NotAList);
  EXPECT_EQ(code_of(json{{"results", json::array()}}), ErrorCode::MissingKey);
  EXPECT_EQ(code_of(json{{"ccrs_results", json::array({json{{"metrics", {{"x", 1}}}}})}}), ErrorCode::AllItemsInvalid);
}

TEST(LoadResults, OutOfRangeAndNonNumericAreRejectedNotClamped) {
  json hi = item(101, 1, 1, 1, 1), neg = item(1, 1, -0.5, 1, 1), str = item(1, 1, 1, 1, 1), boolean = item(1, 1, 1, 1, 1);
  str["metrics"]["Answer_Correctness"] = "50";
  boolean["metrics"]["Answer_Correctness"] = true;
  const json doc = {{"ccrs_results", json::array({hi, neg, str, boolean, item(0, 100, 50, 30, 0)})}};
  const auto run = parse_results(doc, "A", "mem");
  ASSERT_EQ(run.records.size(), 1u);
  EXPECT_EQ(run.warnings, 4u);
  EXPECT_EQ(run.records[0].scores.ac, 0.30);
  try {
    parse_results(doc, "A", "mem", LoadOptions{true});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidItem);
  }
}

TEST(LoadResults, MetaKeyIgnored) {
  const json doc = {{"meta", {{"seed", 1}, {"anything", "x"}}}, {"ccrs_results", json::array({item(1, 2, 3, 4, 5)})}};
  EXPECT_EQ(parse_results(doc, "A", "mem").records.size(), 1u);
}

TEST(WireScale, RoundTripsEveryHundredthExactly) {
  for (int i = 0; i <= 100; ++i) {
    const double x = i / 100.0;
    EXPECT_EQ(to_wire_scale(x), static_cast<double>(i));
    EXPECT_EQ(to_wire_scale(x) / 100.0, x);
  }
  EXPECT_EQ(to_wire_scale(0.3), 30.0);
  EXPECT_EQ(to_wire_scale(0.7 * 1 + 0.3 * 0.8), 94.0);
}

// Binary division by 100 cannot reach every double in [0,1], so the exact
// round trip runs through decimal text instead.
TEST(WireScale, DecimalTextRoundTripsRandomReals) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = u(gen);
    const std::string text = detail::shifted_decimal(x, 2);
    EXPECT_EQ(detail::parse_shifted(text, -2), x) << text;
    const double w = to_wire_scale(x);
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 100.0);
    EXPECT_LE(std::abs(w / 100.0 - x), 2 * std::numeric_limits<double>::epsilon()) << x;
  }
}

TEST(WireScale, DecimalTextFormatting) {
  EXPECT_EQ(detail::shifted_decimal(0.0, 2), "0");
  EXPECT_EQ(detail::shifted_decimal(1.0, 2), "100");
  EXPECT_EQ(detail::shifted_decimal(0.95, 2), "95");
  EXPECT_EQ(detail::shifted_decimal(0.24, 2), "24");
  EXPECT_EQ(detail::shifted_decimal(0.005, 2), "0.5");
  EXPECT_EQ(detail::shifted_decimal(0.7 + 0.3 * 0.8, 2), "94");
  EXPECT_EQ(detail::shifted_decimal(0.9400000000000001, 2), "94.00000000000001");
  EXPECT_EQ(detail::shifted_decimal(1e-8, 2), "0.000001");
  EXPECT_EQ(detail::shifted_decimal(1e-9, 2), "1e-7");
  EXPECT_EQ(detail::shifted_decimal(1e-30, 2), "1e-28");
  EXPECT_EQ(detail::parse_shifted("94.00000000000001", -2), 0.9400000000000001);
  EXPECT_EQ(detail::parse_shifted("1E+2", -2), 1.0);
  EXPECT_EQ(detail::parse_shifted("2.5e-1", -2), 0.0025);
}

TEST(ResultFile, RandomRealsSurviveFileRoundTrip) {
  TempDir dir;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricVector> v;
  for (int i = 0; i < 400; ++i) v.push_back({u(gen), u(gen), u(gen), u(gen), u(gen)});
  v.push_back({0, 1, 1e-300, 0.5, std::nextafter(1.0, 0.0)});
  const auto run = run_of("A", v, false);
  write_results_file(dir / "A.json", run);
  const auto back = load_results_file(dir / "A.json", "A");
  EXPECT_EQ(back.records, run.records);
  EXPECT_EQ(back.warnings, 0u);
}

TEST(ResultFile, TextMatchesJsonLayout) {
  auto run = run_of("A", {{0.1, 0.2, 0.3, 0.4, 0.5}, {0.5, 0.4, 0.3, 0.2, 0.1}}, true);
  run.missing_query_ids = {7};
  const json meta{{"seed", 3}, {"artifact", "results"}};
  const std::string text = results_to_text(run, meta);
  EXPECT_EQ(json::parse(text), results_to_json(run, meta));
  EXPECT_NE(text.find("\n        \"Answer_Correctness\": 40,\n"), std::string::npos);
  const json empty_doc{{"ccrs_results", json::array()}};
  EXPECT_EQ(results_to_text(run_of("B", {}, false)), empty_doc.dump(2) + "\n");
}

TEST(ResultFile, SerializeAndReloadIsIdentical) {
  TempDir dir;
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> pct(0, 100);
  std::vector<MetricVector> v;
  for (int i = 0; i < 50; ++i) {
    const int llm = pct(gen);
    v.push_back({pct(gen) / 100.0, pct(gen) / 100.0, pct(gen) / 100.0, 0.7 * (i % 2) + 0.3 * (llm / 100.0),
                 pct(gen) / 100.0});
  }
  const auto run = run_of("A", v, true);
  const auto path = dir / "A-results.json";
  write_results_file(path, run, json{{"seed", 9}});
  const auto back = load_results_file(path, "A");
  EXPECT_EQ(back.records, run.records);
  EXPECT_EQ(back.warnings, 0u);
}

TEST(ResultFile, MissingQueriesRoundTrip) {
  auto run = run_of("A", {{0.1, 0.2, 0.3, 0.4, 0.5}, {0.5, 0.4, 0.3, 0.2, 0.1}}, true);
  run.missing_query_ids = {2};
  const json doc = results_to_json(run);
  EXPECT_EQ(doc["meta"]["missing_query_ids"], json::array({2}));
  const auto back = parse_results(doc, "A", "mem");
  EXPECT_EQ(back.records, run.records);
  EXPECT_EQ(back.missing_query_ids, std::vector<std::int64_t>{2});
  EXPECT_EQ(back.warnings, 0u);
}

TEST(Align, ShapeAndOrder) {
  const auto a = run_of("A", {{0.1, 0.2, 0.3, 0.4, 0.5}, {0.2, 0.2, 0.2, 0.2, 0.2}, {1, 1, 1, 1, 1}});
  const auto b = run_of("B", {{0.9, 0.8, 0.7, 0.6, 0.5}, {0, 0, 0, 0, 0}, {0.5, 0.5, 0.5, 0.5, 0.5}});
  const auto t = align_systems({a, b});
  EXPECT_EQ(t.num_queries(), 3u);
  EXPECT_EQ(t.num_metrics(), 5u);
  EXPECT_EQ(t.num_systems(), 2u);
  EXPECT_EQ(t.metric_names, (std::vector<std::string>{"CC", "QR", "ID", "AC", "IR"}));
  EXPECT_DOUBLE_EQ(t.at(0, 3, 1), 0.6);
  EXPECT_DOUBLE_EQ(t.at(2, 0, 0), 1.0);

  // Permuting run order permutes only the system axis.
  const auto u = align_systems({b, a});
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(t.at(q, k, 0), u.at(q, k, 1));
      EXPECT_EQ(t.at(q, k, 1), u.at(q, k, 0));
    }
}

TEST(Align, CountMismatchAndEmptyRun) {
  std::vector<MetricVector> ten(10), nine(9);
  try {
    align_systems({run_of("A", ten), run_of("B", nine)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SampleCountMismatch);
  }
  try {
    align_systems({run_of("A", ten), run_of("B", {})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyRun);
  }
}

TEST(Align, ByIdLeavesGapsAsMissing) {
  auto a = run_of("A", {{0.1, 0.1, 0.1, 0.1, 0.1}, {0.2, 0.2, 0.2, 0.2, 0.2}, {0.3, 0.3, 0.3, 0.3, 0.3}}, true);
  auto b = run_of("B", {{0.9, 0.9, 0.9, 0.9, 0.9}, {0.7, 0.7, 0.7, 0.7, 0.7}}, true);
  b.records[1].query_id = 2;  // query 1 missing for B
  const auto t = align_systems({a, b});
  ASSERT_EQ(t.num_queries(), 3u);
  EXPECT_EQ(t.query_ids, (std::vector<std::int64_t>{0, 1, 2}));
  EXPECT_TRUE(std::isnan(t.at(1, 0, 1)));
  EXPECT_DOUBLE_EQ(t.at(2, 0, 1), 0.7);
}

TEST(ExternalMetrics, LoadsOwnNames) {
  TempDir dir;
  const auto path = dir.write("rc.json", R"({"results": [
      {"metrics": {"Precision": 50, "Recall": 25, "Faithfulness": 100}},
      {"metrics": {"Precision": 10, "Recall": 20, "Faithfulness": 30}}]})");
  const auto run = load_external_metrics_file(path, "A", {"Precision", "Recall", "Faithfulness"});
  const auto t = align_external({run, run});
  EXPECT_EQ(t.metric_names, (std::vector<std::string>{"Precision", "Recall", "Faithfulness"}));
  EXPECT_DOUBLE_EQ(t.at(0, 1, 0), 0.25);
  EXPECT_DOUBLE_EQ(t.at(1, 2, 1), 0.30);
}
