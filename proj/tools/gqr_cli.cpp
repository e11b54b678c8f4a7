// gqr: train, evaluate, benchmark and serve guarded query routers.

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include <pthread.h>

#include <json.hpp>

#include "CLI11.hpp"
#include "gqr/corpus.hpp"
#include "gqr/error.hpp"
#include "gqr/eval.hpp"
#include "gqr/gateway.hpp"
#include "gqr/llm_backend.hpp"
#include "gqr/model_io.hpp"
#include "gqr/synth.hpp"
#include "gqr/text.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingFile = 3,
  kInvalidInput = 4,
  kBadModel = 5,
  kTrainingFailed = 6,
  kBackendFailed = 7,
};

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 success, 1 other failure, 2 usage error, 3 missing file, "
    "4 invalid input (manifest, dataset, config), 5 bad model file, 6 training failure, "
    "7 routing backend failure.";

std::vector<std::string> read_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gqr::FileNotFoundError(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = gqr::trim_unicode(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '{') {
      try {
        out.push_back(nlohmann::json::parse(trimmed).at("text").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw gqr::ParseError(path + ": " + e.what());
      }
    } else {
      out.emplace_back(trimmed);
    }
  }
  if (out.empty()) throw gqr::ParseError(path + ": no queries");
  return out;
}

struct TrainArgs {
  std::string manifest, out, kind = "mlp";
  double threshold = 0.99;
  gqr::MlpTrainConfig mlp;
  gqr::LinearTrainConfig linear;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr;
  std::uint64_t seed = 42;
};

int run_train(const TrainArgs& a) {
  const auto manifest = gqr::load_manifest(a.manifest);
  const auto bench = gqr::load_benchmark(manifest);
  gqr::GuardedModel model;
  if (a.kind == "mlp") {
    auto cfg = a.mlp;
    cfg.seed = a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    if (a.lr) cfg.learning_rate = *a.lr;
    model = gqr::mlp_train(bench.train, bench.valid, bench.domains, cfg, a.threshold);
  } else {
    auto cfg = a.linear;
    cfg.seed = a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    if (a.lr) cfg.learning_rate = *a.lr;
    model = gqr::linear_train(bench.train, bench.domains, cfg);
  }
  gqr::save_model(model, a.out);
  std::cout << "wrote " << gqr::model_kind(model) << " model to " << a.out << " ("
            << std::filesystem::file_size(a.out) << " bytes)\n";
  return kOk;
}

struct EvalArgs {
  std::string manifest, out = "report", label;
  std::string model, llm_config, replay;
  std::vector<double> thresholds;
  unsigned threads = 0;
  bool bench = false;
};

int run_eval(const EvalArgs& a) {
  const auto manifest = gqr::load_manifest(a.manifest);
  const auto bench = gqr::load_benchmark(manifest);
  std::vector<gqr::EvalReport> reports;
  std::vector<gqr::LatencyTable> latency;
  std::vector<std::string> pool;
  for (const auto& s : bench.test_id)
    for (const auto& ex : s.examples) pool.push_back(ex.text);

  if (!a.model.empty()) {
    auto model = gqr::load_model(a.model);
    const std::string base = a.label.empty() ? std::string(gqr::model_kind(model)) : a.label;
    std::vector<std::optional<double>> sweep;
    for (double t : a.thresholds) sweep.emplace_back(t);
    if (sweep.empty()) sweep.emplace_back(std::nullopt);
    for (const auto& t : sweep) {
      if (t) gqr::override_threshold(model, *t);
      std::string label = base;
      if (const auto* mlp = std::get_if<gqr::MlpModel>(&model)) {
        std::ostringstream l;
        l << base << " (t=" << mlp->threshold() << ")";
        label = l.str();
      }
      const auto& router = gqr::as_router(model);
      reports.push_back(gqr::evaluate(router, bench, label, {a.threads}));
      if (a.bench) {
        gqr::BenchOptions opts;
        opts.model_path = a.model;
        latency.push_back(gqr::bench_latency(router, pool, opts, label));
      }
    }
  } else {
    auto config = gqr::load_llm_config(a.llm_config);
    std::shared_ptr<gqr::ChatTransport> transport;
    if (!a.replay.empty())
      transport = gqr::ReplayChatTransport::from_fixture(a.replay);
    else
      transport = std::make_shared<gqr::HttpChatTransport>(config);
    const gqr::LlmRouter router(config, bench.domains, transport);
    const std::string label = a.label.empty() ? "llm:" + config.model : a.label;
    // Remote calls are I/O bound; fan out unless the user pinned a count.
    reports.push_back(gqr::evaluate(router, bench, label, {a.threads == 0 ? 8u : a.threads}));
  }

  gqr::emit_report(reports, latency, a.out);
  std::cout << gqr::format_report_table(reports, latency);
  for (const auto& r : reports)
    std::cout << r.label << " gqr_score " << std::fixed << std::setprecision(2) << r.gqr_score << '\n';
  return kOk;
}

struct BenchArgs {
  std::string model, queries, out;
  std::vector<std::size_t> batch_sizes{1, 32, 64, 128, 256};
  std::size_t warmup = 10, iters = 100;
  std::optional<double> threshold;
};

int run_bench(const BenchArgs& a) {
  auto model = gqr::load_model(a.model);
  if (a.threshold) gqr::override_threshold(model, *a.threshold);
  const auto queries = read_queries(a.queries);
  gqr::BenchOptions opts{a.batch_sizes, a.warmup, a.iters, a.model};
  const auto table = gqr::bench_latency(gqr::as_router(model), queries, opts, std::string(gqr::model_kind(model)));
  std::cout << "batch_size,seconds_per_query\n";
  for (const auto& row : table.rows)
    std::cout << row.batch_size << ',' << std::setprecision(9) << row.seconds_per_query << '\n';
  std::cout << "model_size_bytes," << table.model_size_bytes.value_or(0) << '\n';
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw gqr::Error("cannot write " + a.out);
    out << "batch_size,seconds_per_query\n";
    for (const auto& row : table.rows)
      out << row.batch_size << ',' << std::setprecision(9) << row.seconds_per_query << '\n';
  }
  return kOk;
}

int run_serve(const std::string& config_path, std::optional<double> threshold) {
  auto config = gqr::load_gateway_config(config_path);
  if (threshold) config.threshold = threshold;
  auto router = gqr::make_router(config);

  // Route SIGINT/SIGTERM to a waiter thread so shutdown is not done from a
  // signal handler. Must happen before the server spawns its workers.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  gqr::Gateway gateway(config, router);
  const int port = gateway.bind();
  std::jthread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    gateway.stop();
  });
  std::cerr << "gqr gateway listening on " << config.host << ":" << port
            << (gateway.forwarding() ? " (forwarding)" : " (classify-only)") << std::endl;
  gateway.run();
  // A stop from elsewhere leaves the waiter blocked; wake it.
  pthread_kill(waiter.native_handle(), SIGTERM);
  return kOk;
}

int run_route(const std::string& model_path, std::optional<double> threshold, const std::string& text) {
  auto model = gqr::load_model(model_path);
  if (threshold) gqr::override_threshold(model, *threshold);
  const auto& router = gqr::as_router(model);
  const auto decision = router.route(text);
  std::cout << router.decision_label(decision) << '\n';
  for (std::size_t i = 0; i < router.domains().size(); ++i)
    std::cout << router.domains()[i] << '\t' << std::fixed << std::setprecision(6) << decision.scores[i] << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guarded query routing: train, evaluate, benchmark and serve routers."};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a guarded classifier from a manifest");
  train_cmd->add_option("--manifest", train.manifest, "Benchmark manifest")->required();
  train_cmd->add_option("--kind", train.kind, "Model kind")->check(CLI::IsMember({"mlp", "linear"}));
  train_cmd->add_option("--out", train.out, "Output model artifact")->required();
  train_cmd->add_option("--threshold", train.threshold, "MLP rejection threshold")->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--epochs", train.epochs);
  train_cmd->add_option("--lr", train.lr, "Learning rate");
  train_cmd->add_option("--batch-size", train.batch_size);
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--hidden", train.mlp.hidden, "MLP hidden width");
  train_cmd->add_option("--dropout", train.mlp.dropout, "MLP hidden dropout");
  train_cmd->add_option("--min-df", train.mlp.vocabulary.min_df);
  train_cmd->add_option("--max-vocab", train.mlp.vocabulary.max_size);
  train_cmd->add_option("--buckets", train.linear.hash.buckets, "Hash buckets (power of two)");
  train_cmd->add_option("--min-n", train.linear.hash.min_n);
  train_cmd->add_option("--max-n", train.linear.hash.max_n);
  train_cmd->add_flag("--verbose", train.mlp.verbose);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a router and write report.txt / report.csv");
  eval_cmd->add_option("--manifest", eval.manifest, "Benchmark manifest")->required();
  auto* model_opt = eval_cmd->add_option("--model", eval.model, "Model artifact");
  auto* llm_opt = eval_cmd->add_option("--llm-config", eval.llm_config, "LLM backend config (JSON)");
  model_opt->excludes(llm_opt);
  eval_cmd->add_option("--replay", eval.replay, "Replay LLM completions from a JSON-lines fixture")->needs(llm_opt);
  eval_cmd->add_option("--thresholds", eval.thresholds, "MLP thresholds to sweep")->delimiter(',');
  eval_cmd->add_option("--out", eval.out, "Report directory");
  eval_cmd->add_option("--label", eval.label, "Model label in the report");
  eval_cmd->add_option("--threads", eval.threads, "Evaluation threads (0 = all cores)");
  eval_cmd->add_flag("--bench", eval.bench, "Also run the latency benchmark on the ID test queries");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Measure mean per-query latency by batch size");
  bench_cmd->add_option("--model", bench.model, "Model artifact")->required();
  bench_cmd->add_option("--queries", bench.queries, "Query file (plain lines or JSON lines with 'text')")->required();
  bench_cmd->add_option("--batch-sizes", bench.batch_sizes)->delimiter(',');
  bench_cmd->add_option("--warmup", bench.warmup);
  bench_cmd->add_option("--iters", bench.iters)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--threshold", bench.threshold);
  bench_cmd->add_option("--out", bench.out, "Optional CSV output");

  std::string serve_config;
  std::optional<double> serve_threshold;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP gateway");
  serve_cmd->add_option("--config", serve_config, "Gateway config (JSON)")->required();
  serve_cmd->add_option("--threshold", serve_threshold, "Override the model threshold");

  std::string route_model, route_text;
  std::optional<double> route_threshold;
  auto* route_cmd = app.add_subcommand("route", "Route one query and print the decision and scores");
  route_cmd->add_option("--model", route_model, "Model artifact")->required();
  route_cmd->add_option("--text", route_text, "Query text")->required();
  route_cmd->add_option("--threshold", route_threshold, "Override the model threshold");

  std::string synth_out;
  gqr::synth::SynthOptions synth_opts;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic 3-domain benchmark");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_opts.seed);
  synth_cmd->add_option("--train-per-domain", synth_opts.train_per_domain);
  synth_cmd->add_option("--valid-per-domain", synth_opts.valid_per_domain);
  synth_cmd->add_option("--test-per-domain", synth_opts.test_per_domain);
  synth_cmd->add_option("--ood-per-set", synth_opts.ood_per_set);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) {
      if (eval.model.empty() && eval.llm_config.empty()) {
        std::cerr << "gqr eval: one of --model or --llm-config is required\n";
        return kUsage;
      }
      return run_eval(eval);
    }
    if (*bench_cmd) return run_bench(bench);
    if (*serve_cmd) return run_serve(serve_config, serve_threshold);
    if (*route_cmd) return run_route(route_model, route_threshold, route_text);
    if (*synth_cmd) {
      const auto manifest = gqr::synth::write_benchmark(synth_out, synth_opts);
      std::cout << "wrote " << manifest.string() << '\n';
      return kOk;
    }
  } catch (const gqr::FileNotFoundError& e) {
    std::cerr << "gqr: " << e.what() << '\n';
    return kMissingFile;
  } catch (const gqr::ModelFormatError& e) {
    std::cerr << "gqr: " << e.what() << '\n';
    return kBadModel;
  } catch (const gqr::TrainingError& e) {
    std::cerr << "gqr: " << e.what() << '\n';
    return kTrainingFailed;
  } catch (const gqr::BackendError& e) {
    std::cerr << "gqr: " << e.what() << '\n';
    return kBackendFailed;
  } catch (const gqr::ParseError& e) {
    std::cerr << "gqr: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const gqr::InvariantError& e) {
    std::cerr << "gqr: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "gqr: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
