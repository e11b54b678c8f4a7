#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "doctest.h"
#include "gqr/error.hpp"
#include "gqr/eval.hpp"
#include "gqr/random.hpp"
#include "test_util.hpp"

using namespace gqr;
using gqr::testing::TempDir;
using gqr::testing::read_file;

namespace {

const std::vector<std::string> kDomains{"law", "finance", "health"};

// Looks the query up in a table of outcomes: a domain name, "reject" or "error".
class TableRouter : public Router {
 public:
  explicit TableRouter(std::map<std::string, std::string> table) : table_(std::move(table)) {}
  const std::vector<std::string>& domains() const override { return kDomains; }
  RouteDecision route(std::string_view query) const override {
    const auto& outcome = table_.at(std::string(query));
    if (outcome == "error") throw TransportError("stub failure");
    RouteDecision d{std::nullopt, {0.0, 0.0, 0.0}, true};
    for (std::size_t i = 0; i < kDomains.size(); ++i)
      if (kDomains[i] == outcome) d.domain = i;
    return d;
  }

 private:
  std::map<std::string, std::string> table_;
};

class ConstantRouter : public Router {
 public:
  explicit ConstantRouter(std::optional<std::size_t> domain) : domain_(domain) {}
  const std::vector<std::string>& domains() const override { return kDomains; }
  RouteDecision route(std::string_view) const override { return {domain_, {0.0, 0.0, 0.0}, true}; }

 private:
  std::optional<std::size_t> domain_;
};

// Sleeps a fixed time per batch regardless of its size.
class SleepyRouter : public Router {
 public:
  explicit SleepyRouter(std::chrono::microseconds per_batch) : per_batch_(per_batch) {}
  const std::vector<std::string>& domains() const override { return kDomains; }
  RouteDecision route(std::string_view) const override { return {}; }
  std::vector<RouteDecision> route_batch(std::span<const std::string> queries) const override {
    std::this_thread::sleep_for(per_batch_);
    return std::vector<RouteDecision>(queries.size());
  }

 private:
  std::chrono::microseconds per_batch_;
};

DatasetSplit split_of(std::string name, SplitRole role, OodCategory cat,
                      const std::vector<std::pair<std::string, std::string>>& rows) {
  DatasetSplit s{std::move(name), {}, role, cat};
  for (const auto& [t, l] : rows) s.examples.push_back({t, l});
  return s;
}

EvalReport report(std::string label, double id, double ood, double unsafe, double score) {
  EvalReport r;
  r.label = std::move(label);
  r.id_accuracy = id;
  r.ood_accuracy = ood;
  r.unsafe_avg = unsafe;
  r.gqr_score = score;
  r.ood_per_set = {{"a", ood}};
  return r;
}

}  // namespace

TEST_CASE("gqr_score is the harmonic mean of the two accuracies") {
  CHECK(round_percent(gqr_score(84.49, 91.25)) == 87.74);
  CHECK(round_percent(gqr_score(26.37, 99.82)) == 41.72);
  for (double x : {0.0, 1.0, 50.0, 100.0}) {
    CHECK(gqr_score(x, 0.0) == 0.0);
    CHECK(gqr_score(0.0, x) == 0.0);
  }
  CHECK(gqr_score(100, 100) == doctest::Approx(100));
}

TEST_CASE("gqr_score properties hold on random inputs") {
  Rng rng(1);
  for (int i = 0; i < 10'000; ++i) {
    const double a = rng.uniform(0.01, 100), b = rng.uniform(0.01, 100);
    const double s = gqr_score(a, b);
    CHECK(s == gqr_score(b, a));
    CHECK(s >= std::min(a, b) - 1e-9);
    CHECK(s <= (a + b) / 2 + 1e-9);
    CHECK(gqr_score(a, a) == doctest::Approx(a));
  }
}

TEST_CASE("round_percent rounds half to even") {
  CHECK(round_percent(0.125) == 0.12);
  CHECK(round_percent(0.375) == 0.38);
  CHECK(round_percent(91.2514285) == 91.25);
  CHECK(round_percent(100.0) == 100.0);
}

TEST_CASE("aggregate macro-averages the per-set values") {
  const PerSetAccuracy per_set{{"jigsaw", 93.83},  {"olid", 93.49},  {"hatexplain", 91.00},
                               {"dkhate", 86.93},  {"tuke_sk", 80.60}, {"web_q", 99.16},
                               {"ml_q", 93.75}};
  const std::vector<std::string> unsafe{"jigsaw", "olid", "hatexplain", "dkhate", "tuke_sk"};
  const auto agg = aggregate(per_set, unsafe);
  CHECK(round_percent(agg.ood_accuracy) == 91.25);
  CHECK(round_percent(agg.unsafe_avg) == 89.17);

  // Permutation invariance.
  PerSetAccuracy reversed(per_set.rbegin(), per_set.rend());
  const auto agg2 = aggregate(reversed, unsafe);
  CHECK(agg2.ood_accuracy == doctest::Approx(agg.ood_accuracy).epsilon(1e-15));
  CHECK(agg2.unsafe_avg == doctest::Approx(agg.unsafe_avg).epsilon(1e-15));

  const auto full = aggregate({{"a", 100}, {"b", 100}}, std::vector<std::string>{"a"});
  CHECK(full.ood_accuracy == 100);
  CHECK(full.unsafe_avg == 100);

  CHECK_THROWS_AS(aggregate({}, {}), InvariantError);
  CHECK_THROWS_AS(aggregate(per_set, std::vector<std::string>{"nope"}), InvariantError);
}

TEST_CASE("id_accuracy counts rejection and misrouting as wrong") {
  const TableRouter router({{"q1", "law"}, {"q2", "finance"}, {"q3", "health"}, {"q4", "reject"}});
  const std::vector<DatasetSplit> test{split_of("t", SplitRole::kTestId, OodCategory::kNone,
                                                {{"q1", "law"}, {"q2", "finance"}, {"q3", "health"},
                                                 {"q4", "law"}})};
  CHECK(id_accuracy(router, test) == 75.0);
  CHECK(id_accuracy(ConstantRouter(std::nullopt), test) == 0.0);

  const std::vector<DatasetSplit> wrong_role{split_of("t", SplitRole::kTestOod, OodCategory::kUnsafe, {{"q1", "OOD"}})};
  CHECK_THROWS_AS(id_accuracy(router, wrong_role), InvariantError);
  const std::vector<DatasetSplit> empty{split_of("t", SplitRole::kTestId, OodCategory::kNone, {})};
  CHECK_THROWS_AS(id_accuracy(router, empty), InvariantError);
}

TEST_CASE("an exact-label oracle scores 100 on ID data") {
  std::map<std::string, std::string> table;
  std::vector<std::pair<std::string, std::string>> rows;
  for (int i = 0; i < 30; ++i) {
    const std::string q = "q" + std::to_string(i);
    table[q] = kDomains[i % 3];
    rows.emplace_back(q, kDomains[i % 3]);
  }
  const std::vector<DatasetSplit> test{split_of("t", SplitRole::kTestId, OodCategory::kNone, rows)};
  CHECK(id_accuracy(TableRouter(table), test) == 100.0);
}

TEST_CASE("ID breakdown partitions into accuracy, rejection and misroute") {
  Rng rng(8);
  std::map<std::string, std::string> table;
  std::vector<std::pair<std::string, std::string>> rows;
  const std::vector<std::string> outcomes{"law", "finance", "health", "reject", "error"};
  for (int i = 0; i < 997; ++i) {
    const std::string q = "q" + std::to_string(i);
    table[q] = outcomes[rng.index(outcomes.size())];
    rows.emplace_back(q, kDomains[rng.index(3)]);
  }
  const std::vector<DatasetSplit> test{split_of("t", SplitRole::kTestId, OodCategory::kNone, rows)};
  const auto b = id_breakdown(TableRouter(table), test);
  CHECK(b.correct + b.rejected + b.misrouted == b.total);
  CHECK(b.accuracy() + b.rejection_rate() + b.misroute_rate() == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(b.errors > 0);
  CHECK(b.errors <= b.rejected);
}

TEST_CASE("ood accuracy is the rejected fraction") {
  std::map<std::string, std::string> table;
  std::vector<std::pair<std::string, std::string>> rows;
  for (int i = 0; i < 128; ++i) {
    const std::string q = "ml" + std::to_string(i);
    table[q] = i < 120 ? "reject" : "law";
    rows.emplace_back(q, "OOD");
  }
  const auto split = split_of("ml_q", SplitRole::kTestOod, OodCategory::kOtherDomain, rows);
  CHECK(ood_accuracy_per_set(TableRouter(table), split) == 93.75);
  CHECK(ood_accuracy_per_set(ConstantRouter(std::nullopt), split) == 100.0);
  CHECK(ood_accuracy_per_set(ConstantRouter(0), split) == 0.0);

  CHECK_THROWS_AS(ood_accuracy_per_set(ConstantRouter(0),
                                       split_of("e", SplitRole::kTestOod, OodCategory::kUnsafe, {})),
                  InvariantError);
}

TEST_CASE("backend errors count as rejections and are tallied") {
  const TableRouter router({{"a", "error"}, {"b", "law"}, {"c", "error"}});
  const auto ood = split_of("o", SplitRole::kTestOod, OodCategory::kUnsafe,
                            {{"a", "OOD"}, {"b", "OOD"}, {"c", "OOD"}, {"a", "OOD"}});
  std::size_t errors = 0;
  CHECK(ood_accuracy_per_set(router, ood, {}, &errors) == 75.0);
  CHECK(errors == 3);
}

TEST_CASE("threaded evaluation agrees with sequential evaluation") {
  Rng rng(4);
  std::map<std::string, std::string> table;
  std::vector<std::pair<std::string, std::string>> rows;
  const std::vector<std::string> outcomes{"law", "finance", "health", "reject", "error"};
  for (int i = 0; i < 5000; ++i) {
    const std::string q = "q" + std::to_string(i);
    table[q] = outcomes[rng.index(outcomes.size())];
    rows.emplace_back(q, kDomains[rng.index(3)]);
  }
  const TableRouter router(table);
  const std::vector<DatasetSplit> test{split_of("t", SplitRole::kTestId, OodCategory::kNone, rows)};
  const auto seq = id_breakdown(router, test, {1});
  for (unsigned threads : {0u, 2u, 7u}) {
    const auto par = id_breakdown(router, test, {threads});
    CHECK(par.correct == seq.correct);
    CHECK(par.rejected == seq.rejected);
    CHECK(par.errors == seq.errors);
  }
}

TEST_CASE("evaluate assembles a rounded report") {
  LoadedBenchmark bench;
  bench.domains = kDomains;
  bench.test_id = {split_of("t", SplitRole::kTestId, OodCategory::kNone,
                            {{"q1", "law"}, {"q2", "finance"}, {"q3", "health"}})};
  bench.test_ood = {split_of("u", SplitRole::kTestOod, OodCategory::kUnsafe, {{"o1", "OOD"}, {"o2", "OOD"}}),
                    split_of("d", SplitRole::kTestOod, OodCategory::kOtherDomain, {{"o3", "OOD"}})};
  bench.unsafe_set = {"u"};
  const TableRouter router(
      {{"q1", "law"}, {"q2", "finance"}, {"q3", "reject"}, {"o1", "reject"}, {"o2", "law"}, {"o3", "error"}});
  const auto r = evaluate(router, bench, "stub");
  CHECK(r.label == "stub");
  CHECK(r.id_accuracy == 66.67);
  REQUIRE(r.ood_per_set.size() == 2);
  CHECK(r.ood_per_set[0] == std::pair<std::string, double>{"u", 50.0});
  CHECK(r.ood_per_set[1] == std::pair<std::string, double>{"d", 100.0});
  CHECK(r.unsafe_avg == 50.0);
  CHECK(r.ood_accuracy == 75.0);
  CHECK(r.gqr_score == round_percent(gqr_score(66.67, 75.0)));
  CHECK(r.error_count == 1);
}

TEST_CASE("bench_latency divides batch time by batch size") {
  const SleepyRouter router(std::chrono::milliseconds(10));
  const std::vector<std::string> queries{"a", "b", "c"};
  BenchOptions opts;
  opts.batch_sizes = {1, 100};
  opts.warmup = 2;
  opts.iterations = 20;
  const auto t = bench_latency(router, queries, opts, "sleepy");
  REQUIRE(t.rows.size() == 2);
  CHECK(*t.seconds_per_query(1) == doctest::Approx(0.010).epsilon(0.2));
  CHECK(*t.seconds_per_query(100) == doctest::Approx(0.0001).epsilon(0.2));
  CHECK_FALSE(t.seconds_per_query(7));
  CHECK(t.warmup == 2);
  CHECK(t.iterations == 20);
}

TEST_CASE("bench_latency reports one row per default batch size") {
  const SleepyRouter router(std::chrono::microseconds(0));
  const std::vector<std::string> queries{"a"};
  BenchOptions opts;
  opts.iterations = 3;
  const auto t = bench_latency(router, queries, opts);
  REQUIRE(t.rows.size() == 5);
  const std::vector<std::size_t> expected{1, 32, 64, 128, 256};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(t.rows[i].batch_size == expected[i]);
    CHECK(t.rows[i].seconds_per_query >= 0);
  }
  CHECK_THROWS_AS(bench_latency(router, std::vector<std::string>{}, opts), InvariantError);
}

TEST_CASE("bench_latency records the artifact size") {
  TempDir dir;
  gqr::testing::write_file(dir / "model.bin", std::string(1234, 'x'));
  BenchOptions opts;
  opts.batch_sizes = {1};
  opts.iterations = 1;
  opts.model_path = dir / "model.bin";
  const std::vector<std::string> queries{"a"};
  CHECK(bench_latency(SleepyRouter(std::chrono::microseconds(0)), queries, opts).model_size_bytes == 1234u);
}

TEST_CASE("bench_latency draws queries cyclically") {
  class Recording : public Router {
   public:
    const std::vector<std::string>& domains() const override { return kDomains; }
    RouteDecision route(std::string_view q) const override {
      seen.emplace_back(q);
      return {};
    }
    mutable std::vector<std::string> seen;
  } router;
  const std::vector<std::string> queries{"a", "b", "c"};
  BenchOptions opts;
  opts.batch_sizes = {2};
  opts.warmup = 1;
  opts.iterations = 2;
  bench_latency(router, queries, opts);
  CHECK(router.seen == std::vector<std::string>{"a", "b", "c", "a", "b", "c"});
}

TEST_CASE("report CSV has a header and one row per model sorted by score") {
  const std::vector<EvalReport> one{report("only", 90, 80, 70, 84.71)};
  const auto csv1 = format_report_csv(one, {});
  CHECK(csv1 ==
        "label,id_accuracy,ood_accuracy,unsafe_avg,gqr_score,latency_b1_s,size_on_disk_bytes\n"
        "only,90.00,80.00,70.00,84.71,,\n");

  const std::vector<EvalReport> two{report("low", 50, 50, 50, 50), report("high, quoted", 99, 98, 97, 98.5)};
  LatencyTable lat;
  lat.label = "low";
  lat.rows = {{1, 0.00123}, {32, 0.0001}};
  lat.model_size_bytes = 4096;
  const std::vector<LatencyTable> lats{lat};
  const auto rows = parse_report_csv(format_report_csv(two, lats));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].label == "high, quoted");
  CHECK(rows[1].label == "low");
  CHECK(rows[0].gqr_score == 98.5);
  CHECK(rows[1].latency_b1 == 0.00123);
  CHECK(rows[1].size_on_disk == 4096u);
  CHECK_FALSE(rows[0].latency_b1);
}

TEST_CASE("report CSV round-trips every reported number") {
  Rng rng(6);
  std::vector<EvalReport> reports;
  for (int i = 0; i < 20; ++i) {
    auto r = report("model" + std::to_string(i), round_percent(rng.uniform(0, 100)),
                    round_percent(rng.uniform(0, 100)), round_percent(rng.uniform(0, 100)), 0);
    r.gqr_score = round_percent(gqr_score(r.id_accuracy, r.ood_accuracy));
    reports.push_back(r);
  }
  const auto rows = parse_report_csv(format_report_csv(reports, {}));
  REQUIRE(rows.size() == reports.size());
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].gqr_score >= rows[i].gqr_score);
  for (const auto& row : rows) {
    auto it = std::find_if(reports.begin(), reports.end(), [&](const EvalReport& r) { return r.label == row.label; });
    REQUIRE(it != reports.end());
    CHECK(row.id_accuracy == it->id_accuracy);
    CHECK(row.ood_accuracy == it->ood_accuracy);
    CHECK(row.unsafe_avg == it->unsafe_avg);
    CHECK(row.gqr_score == it->gqr_score);
  }
  CHECK_THROWS_AS(parse_report_csv("bad header\n"), ParseError);
}

TEST_CASE("emit_report writes the table and CSV") {
  TempDir dir;
  auto r = report("m", 84.49, 91.25, 89.17, 87.74);
  r.ood_per_set = {{"jigsaw", 93.83}, {"olid", 93.49}};
  const std::vector<EvalReport> reports{r};
  emit_report(reports, {}, dir.path() / "out");
  const auto table = read_file(dir.path() / "out" / kReportTableName);
  CHECK(table.find("jigsaw") != std::string::npos);
  CHECK(table.find("GQR score") != std::string::npos);
  CHECK(table.find("87.74") != std::string::npos);
  CHECK(parse_report_csv(read_file(dir.path() / "out" / kReportCsvName)).size() == 1);
  CHECK_THROWS_AS(emit_report(std::vector<EvalReport>{}, {}, dir.path()), InvariantError);
}
