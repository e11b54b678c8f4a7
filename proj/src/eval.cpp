#include "gqr/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "gqr/error.hpp"

namespace gqr {

double round_percent(double value) { return std::nearbyint(value * 100.0) / 100.0; }

double gqr_score(double acc_id, double acc_ood) {
  if (acc_id <= 0.0 || acc_ood <= 0.0) return 0.0;
  return 2.0 * acc_id * acc_ood / (acc_id + acc_ood);
}

namespace {

double percent(std::size_t num, std::size_t den) {
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

// Routes every query; nullopt marks a backend error.
std::vector<std::optional<RouteDecision>> route_all(const Router& router,
                                                    const std::vector<const std::string*>& queries,
                                                    EvalOptions options) {
  std::vector<std::optional<RouteDecision>> out(queries.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        out[i] = router.route(*queries[i]);
      } catch (const BackendError&) {
        out[i].reset();
      }
    }
  };
  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                          : options.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, queries.size())));
  if (threads <= 1) {
    work(0, queries.size());
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (queries.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk, end = std::min(queries.size(), begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  return out;
}

}  // namespace

double IdBreakdown::accuracy() const { return percent(correct, total); }
double IdBreakdown::rejection_rate() const { return percent(rejected, total); }
double IdBreakdown::misroute_rate() const { return percent(misrouted, total); }

IdBreakdown id_breakdown(const Router& router, std::span<const DatasetSplit> test_id,
                         EvalOptions options) {
  std::vector<const std::string*> queries;
  std::vector<const std::string*> labels;
  for (const auto& split : test_id) {
    if (split.role != SplitRole::kTestId)
      throw InvariantError("id_accuracy: split '" + split.name + "' is not test_id");
    for (const auto& ex : split.examples) {
      queries.push_back(&ex.text);
      labels.push_back(&ex.label);
    }
  }
  if (queries.empty()) throw InvariantError("id_accuracy: empty evaluation set");
  const auto decisions = route_all(router, queries, options);
  IdBreakdown b;
  b.total = queries.size();
  const auto& domains = router.domains();
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (!decisions[i]) {
      ++b.errors;
      ++b.rejected;
    } else if (decisions[i]->rejected()) {
      ++b.rejected;
    } else if (domains.at(*decisions[i]->domain) == *labels[i]) {
      ++b.correct;
    } else {
      ++b.misrouted;
    }
  }
  return b;
}

double id_accuracy(const Router& router, std::span<const DatasetSplit> test_id,
                   EvalOptions options, std::size_t* errors) {
  const auto b = id_breakdown(router, test_id, options);
  if (errors) *errors += b.errors;
  return b.accuracy();
}

double ood_accuracy_per_set(const Router& router, const DatasetSplit& split, EvalOptions options,
                            std::size_t* errors) {
  if (split.role != SplitRole::kTestOod)
    throw InvariantError("ood_accuracy: split '" + split.name + "' is not test_ood");
  if (split.examples.empty()) throw InvariantError("ood_accuracy: empty split '" + split.name + "'");
  std::vector<const std::string*> queries;
  for (const auto& ex : split.examples) queries.push_back(&ex.text);
  const auto decisions = route_all(router, queries, options);
  std::size_t rejected = 0;
  for (const auto& d : decisions) {
    if (!d) {
      ++rejected;
      if (errors) ++*errors;
    } else if (d->rejected()) {
      ++rejected;
    }
  }
  return percent(rejected, queries.size());
}

OodAggregate aggregate(const PerSetAccuracy& per_set, std::span<const std::string> unsafe_set) {
  if (per_set.empty()) throw InvariantError("aggregate: no OOD sets");
  std::map<std::string, double> by_name(per_set.begin(), per_set.end());
  OodAggregate out;
  double total = 0;
  for (const auto& [name, acc] : by_name) total += acc;
  out.ood_accuracy = total / static_cast<double>(by_name.size());
  if (!unsafe_set.empty()) {
    double unsafe = 0;
    for (const auto& name : unsafe_set) {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw InvariantError("aggregate: unknown unsafe set '" + name + "'");
      unsafe += it->second;
    }
    out.unsafe_avg = unsafe / static_cast<double>(unsafe_set.size());
  }
  return out;
}

LoadedBenchmark load_benchmark(const BenchmarkManifest& manifest) {
  LoadedBenchmark b;
  b.domains = manifest.domains;
  b.unsafe_set = manifest.unsafe_set;
  for (const auto& desc : manifest.splits) {
    auto split = load_split(desc);
    validate_split(split, manifest.domains);
    switch (desc.role) {
      case SplitRole::kTrain: b.train.push_back(std::move(split)); break;
      case SplitRole::kValid: b.valid.push_back(std::move(split)); break;
      case SplitRole::kTestId: b.test_id.push_back(std::move(split)); break;
      case SplitRole::kTestOod: b.test_ood.push_back(std::move(split)); break;
    }
  }
  return b;
}

EvalReport evaluate(const Router& router, const LoadedBenchmark& bench, std::string label,
                    EvalOptions options) {
  EvalReport r;
  r.label = std::move(label);
  r.id_accuracy = round_percent(id_accuracy(router, bench.test_id, options, &r.error_count));
  for (const auto& split : bench.test_ood)
    r.ood_per_set.emplace_back(
        split.name, round_percent(ood_accuracy_per_set(router, split, options, &r.error_count)));
  if (!r.ood_per_set.empty()) {
    const auto agg = aggregate(r.ood_per_set, bench.unsafe_set);
    r.unsafe_avg = round_percent(agg.unsafe_avg);
    r.ood_accuracy = round_percent(agg.ood_accuracy);
  }
  r.gqr_score = round_percent(gqr_score(r.id_accuracy, r.ood_accuracy));
  return r;
}

std::optional<double> LatencyTable::seconds_per_query(std::size_t batch_size) const {
  for (const auto& row : rows)
    if (row.batch_size == batch_size) return row.seconds_per_query;
  return std::nullopt;
}

LatencyTable bench_latency(const Router& router, std::span<const std::string> queries,
                           const BenchOptions& options, std::string label) {
  if (queries.empty()) throw InvariantError("bench_latency: empty query pool");
  if (options.iterations == 0) throw InvariantError("bench_latency: iterations must be positive");
  using Clock = std::chrono::steady_clock;
  static_assert(Clock::is_steady);

  LatencyTable table;
  table.label = std::move(label);
  table.warmup = options.warmup;
  table.iterations = options.iterations;
  if (options.model_path) table.model_size_bytes = std::filesystem::file_size(*options.model_path);

  std::size_t cursor = 0;
  std::vector<std::string> batch;
  auto next_batch = [&](std::size_t size) {
    batch.clear();
    for (std::size_t i = 0; i < size; ++i) {
      batch.push_back(queries[cursor]);
      cursor = (cursor + 1) % queries.size();
    }
  };
  std::size_t sink = 0;
  for (std::size_t b : options.batch_sizes) {
    if (b == 0) throw InvariantError("bench_latency: batch sizes must be positive");
    for (std::size_t i = 0; i < options.warmup; ++i) {
      next_batch(b);
      sink += router.route_batch(batch).size();
    }
    double total = 0;
    for (std::size_t i = 0; i < options.iterations; ++i) {
      next_batch(b);
      const auto start = Clock::now();
      sink += router.route_batch(batch).size();
      const auto stop = Clock::now();
      total += std::chrono::duration<double>(stop - start).count() / static_cast<double>(b);
    }
    table.rows.push_back({b, total / static_cast<double>(options.iterations)});
  }
  if (sink == 0) throw Error("bench_latency: router returned no decisions");
  return table;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const LatencyTable* find_latency(std::span<const LatencyTable> latency, const std::string& label) {
  for (const auto& t : latency)
    if (t.label == label) return &t;
  return nullptr;
}

std::vector<const EvalReport*> sorted_by_score(std::span<const EvalReport> reports) {
  std::vector<const EvalReport*> out;
  for (const auto& r : reports) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(),
                   [](const EvalReport* a, const EvalReport* b) { return a->gqr_score > b->gqr_score; });
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

constexpr const char* kCsvHeader =
    "label,id_accuracy,ood_accuracy,unsafe_avg,gqr_score,latency_b1_s,size_on_disk_bytes";

}  // namespace

std::string format_report_csv(std::span<const EvalReport> reports,
                              std::span<const LatencyTable> latency) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto* r : sorted_by_score(reports)) {
    out << csv_field(r->label) << ',' << fixed2(r->id_accuracy) << ',' << fixed2(r->ood_accuracy)
        << ',' << fixed2(r->unsafe_avg) << ',' << fixed2(r->gqr_score) << ',';
    const auto* lat = find_latency(latency, r->label);
    if (lat) {
      if (auto s = lat->seconds_per_query(1)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", *s);
        out << buf;
      }
    }
    out << ',';
    if (lat && lat->model_size_bytes) out << *lat->model_size_bytes;
    out << '\n';
  }
  return out.str();
}

std::vector<ReportCsvRow> parse_report_csv(std::string_view csv) {
  std::vector<ReportCsvRow> rows;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ParseError("report csv: bad header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7)
      throw ParseError("report csv: line " + std::to_string(line_no) + ": expected 7 fields");
    try {
      ReportCsvRow r;
      r.label = f[0];
      r.id_accuracy = std::stod(f[1]);
      r.ood_accuracy = std::stod(f[2]);
      r.unsafe_avg = std::stod(f[3]);
      r.gqr_score = std::stod(f[4]);
      if (!f[5].empty()) r.latency_b1 = std::stod(f[5]);
      if (!f[6].empty()) r.size_on_disk = std::stoull(f[6]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError("report csv: line " + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

std::string format_report_table(std::span<const EvalReport> reports,
                                std::span<const LatencyTable> latency) {
  const auto sorted = sorted_by_score(reports);
  std::vector<std::string> header{"Model"};
  for (const auto& [name, acc] : reports.front().ood_per_set) header.push_back(name);
  for (const char* h : {"Unsafe Avg.", "ID Acc.", "OOD Acc.", "GQR score", "Errors"}) header.push_back(h);

  std::vector<std::vector<std::string>> rows{header};
  for (const auto* r : sorted) {
    std::vector<std::string> row{r->label};
    for (const auto& [name, acc] : r->ood_per_set) row.push_back(fixed2(acc));
    row.push_back(fixed2(r->unsafe_avg));
    row.push_back(fixed2(r->id_accuracy));
    row.push_back(fixed2(r->ood_accuracy));
    row.push_back(fixed2(r->gqr_score));
    row.push_back(std::to_string(r->error_count));
    rows.push_back(std::move(row));
  }

  auto render = [](const std::vector<std::vector<std::string>>& table) {
    std::vector<std::size_t> width;
    for (const auto& row : table)
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (width.size() <= i) width.push_back(0);
        width[i] = std::max(width[i], row[i].size());
      }
    std::ostringstream out;
    for (std::size_t r = 0; r < table.size(); ++r) {
      for (std::size_t i = 0; i < table[r].size(); ++i) {
        if (i > 0) out << "  ";
        if (i == 0)
          out << std::left << std::setw(static_cast<int>(width[i])) << table[r][i];
        else
          out << std::right << std::setw(static_cast<int>(width[i])) << table[r][i];
      }
      out << '\n';
      if (r == 0) {
        std::size_t total = 0;
        for (auto w : width) total += w + 2;
        out << std::string(total - 2, '-') << '\n';
      }
    }
    return out.str();
  };

  std::string text = render(rows);
  if (!latency.empty()) {
    std::vector<std::size_t> sizes;
    for (const auto& t : latency)
      for (const auto& row : t.rows)
        if (std::find(sizes.begin(), sizes.end(), row.batch_size) == sizes.end())
          sizes.push_back(row.batch_size);
    std::vector<std::vector<std::string>> lat{{"Model"}};
    for (auto b : sizes) lat[0].push_back("b=" + std::to_string(b) + " (s/query)");
    lat[0].push_back("Size (bytes)");
    for (const auto& t : latency) {
      std::vector<std::string> row{t.label};
      for (auto b : sizes) {
        char buf[64];
        if (auto s = t.seconds_per_query(b))
          std::snprintf(buf, sizeof buf, "%.6f", *s);
        else
          std::snprintf(buf, sizeof buf, "-");
        row.push_back(buf);
      }
      row.push_back(t.model_size_bytes ? std::to_string(*t.model_size_bytes) : "-");
      lat.push_back(std::move(row));
    }
    text += "\nLatency (mean seconds per query)\n" + render(lat);
  }
  return text;
}

void emit_report(std::span<const EvalReport> reports, std::span<const LatencyTable> latency,
                 const std::filesystem::path& directory) {
  if (reports.empty()) throw InvariantError("emit_report: at least one report is required");
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  auto write = [&](const char* name, const std::string& content) {
    const auto path = directory / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("write failed: " + path.string());
  };
  write(kReportTableName, format_report_table(reports, latency));
  write(kReportCsvName, format_report_csv(reports, latency));
}

}  // namespace gqr
