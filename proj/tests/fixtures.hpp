#pragma once

#include <httplib.h>

#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "gqr/mlp.hpp"
#include "gqr/synth.hpp"

namespace gqr::testing {

inline std::vector<DatasetSplit> splits_with_role(const synth::SynthBenchmark& b, SplitRole role) {
  std::vector<DatasetSplit> out;
  for (const auto& s : b.splits)
    if (s.role == role) out.push_back(s);
  return out;
}

/// Small MLP trained on a reduced synthetic benchmark; cheap enough for unit tests.
inline MlpModel small_synth_mlp(double threshold = 0.99) {
  synth::SynthOptions opts;
  opts.train_per_domain = 300;
  opts.valid_per_domain = 60;
  opts.test_per_domain = 60;
  opts.ood_per_set = 60;
  const auto bench = synth::generate(opts);
  MlpTrainConfig cfg;
  cfg.hidden = 64;
  cfg.epochs = 20;
  cfg.learning_rate = 5e-3;
  return mlp_train(splits_with_role(bench, SplitRole::kTrain),
                   splits_with_role(bench, SplitRole::kValid), bench.domains, cfg, threshold);
}

/// Upstream double that records every request it receives.
class RecordingUpstream {
 public:
  struct Hit {
    std::string path;
    std::string domain_header;
    std::string body;
  };

  explicit RecordingUpstream(std::string reply = "ok") {
    server_.Post(R"(/.*)", [this, reply](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        hits_.push_back({req.path, req.get_header_value("X-GQR-Domain"), req.body});
      }
      res.set_content(reply, "text/plain");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~RecordingUpstream() {
    server_.stop();
    thread_.join();
  }
  RecordingUpstream(const RecordingUpstream&) = delete;
  RecordingUpstream& operator=(const RecordingUpstream&) = delete;

  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }
  std::vector<Hit> hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<Hit> hits_;
};

/// Runs a Gateway's accept loop on a background thread.
template <typename GatewayT>
class ServingThread {
 public:
  explicit ServingThread(GatewayT& gw) : gw_(gw) {
    port_ = gw_.bind();
    thread_ = std::thread([this] { gw_.run(); });
    gw_.wait_until_ready();
  }
  ~ServingThread() {
    gw_.stop();
    thread_.join();
  }
  int port() const { return port_; }

 private:
  GatewayT& gw_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace gqr::testing
