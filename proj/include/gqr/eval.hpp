#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gqr/corpus.hpp"
#include "gqr/route.hpp"

namespace gqr {

/// Rounds a percentage to 2 decimals, ties to even.
double round_percent(double value);

/// Harmonic mean of two percentages; 0 when either is 0.
double gqr_score(double acc_id, double acc_ood);

struct EvalOptions {
  /// Worker threads for local routers. 0 picks the hardware concurrency.
  unsigned threads = 1;
};

/// Tally of an in-domain evaluation. Backend errors count as rejections.
struct IdBreakdown {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t rejected = 0;
  std::size_t misrouted = 0;
  std::size_t errors = 0;

  double accuracy() const;
  double rejection_rate() const;
  double misroute_rate() const;
};

IdBreakdown id_breakdown(const Router& router, std::span<const DatasetSplit> test_id,
                         EvalOptions options = {});

/// Percentage of in-domain queries routed to their true domain. Rejections
/// and wrong domains are both incorrect.
double id_accuracy(const Router& router, std::span<const DatasetSplit> test_id,
                   EvalOptions options = {}, std::size_t* errors = nullptr);

/// Percentage of queries in one OOD split that are rejected.
double ood_accuracy_per_set(const Router& router, const DatasetSplit& split,
                            EvalOptions options = {}, std::size_t* errors = nullptr);

using PerSetAccuracy = std::vector<std::pair<std::string, double>>;

struct OodAggregate {
  double unsafe_avg = 0;
  double ood_accuracy = 0;
};

/// Macro averages: unsafe_avg over `unsafe_set`, ood_accuracy over every set.
/// An empty unsafe_set yields unsafe_avg = 0.
OodAggregate aggregate(const PerSetAccuracy& per_set, std::span<const std::string> unsafe_set);

struct EvalReport {
  std::string label;
  PerSetAccuracy ood_per_set;
  double unsafe_avg = 0;
  double ood_accuracy = 0;
  double id_accuracy = 0;
  double gqr_score = 0;
  std::size_t error_count = 0;
};

struct LoadedBenchmark {
  std::vector<std::string> domains;
  std::vector<DatasetSplit> train;
  std::vector<DatasetSplit> valid;
  std::vector<DatasetSplit> test_id;
  std::vector<DatasetSplit> test_ood;
  std::vector<std::string> unsafe_set;
};

LoadedBenchmark load_benchmark(const BenchmarkManifest& manifest);

/// Full evaluation. Every figure is rounded to 2 decimals and the aggregates
/// are computed from the rounded per-set values.
EvalReport evaluate(const Router& router, const LoadedBenchmark& bench, std::string label,
                    EvalOptions options = {});

struct LatencyRow {
  std::size_t batch_size = 0;
  double seconds_per_query = 0;
};

struct LatencyTable {
  std::string label;
  std::vector<LatencyRow> rows;
  std::size_t warmup = 0;
  std::size_t iterations = 0;
  std::optional<std::uintmax_t> model_size_bytes;

  std::optional<double> seconds_per_query(std::size_t batch_size) const;
};

struct BenchOptions {
  std::vector<std::size_t> batch_sizes{1, 32, 64, 128, 256};
  std::size_t warmup = 10;
  std::size_t iterations = 100;
  std::optional<std::filesystem::path> model_path;
};

/// Single-threaded latency benchmark. For each batch size, runs `warmup`
/// untimed batches then times `iterations` batches drawn cyclically from
/// `queries` with a monotonic clock, reporting mean seconds per query.
LatencyTable bench_latency(const Router& router, std::span<const std::string> queries,
                           const BenchOptions& options, std::string label = {});

struct ReportCsvRow {
  std::string label;
  double id_accuracy = 0;
  double ood_accuracy = 0;
  double unsafe_avg = 0;
  double gqr_score = 0;
  std::optional<double> latency_b1;
  std::optional<std::uintmax_t> size_on_disk;
};

inline constexpr const char* kReportCsvName = "report.csv";
inline constexpr const char* kReportTableName = "report.txt";

/// Writes report.txt (per-set columns, Unsafe Avg., ID Acc., OOD Acc., GQR
/// score, then latencies) and report.csv (one row per model sorted by
/// descending gqr_score) into `directory`. Latency tables match reports by label.
void emit_report(std::span<const EvalReport> reports, std::span<const LatencyTable> latency,
                 const std::filesystem::path& directory);

std::string format_report_table(std::span<const EvalReport> reports,
                                std::span<const LatencyTable> latency);
std::string format_report_csv(std::span<const EvalReport> reports,
                              std::span<const LatencyTable> latency);
std::vector<ReportCsvRow> parse_report_csv(std::string_view csv);

}  // namespace gqr
