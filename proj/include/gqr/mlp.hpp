#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gqr/corpus.hpp"
#include "gqr/route.hpp"
#include "gqr/text.hpp"

namespace gqr {

/// IDF-weighted average pooling weights: each in-vocabulary token
/// occurrence contributes idf / sum(idf). Empty when nothing is in vocabulary.
SparseVector pooling_weights(const Vocabulary& vocab, std::string_view text);

/// Wide one-hidden-layer network whose first layer is an embedding table.
/// Row-major storage: embedding is V x H, output is H x k.
template <typename Real>
struct MlpParameters {
  std::size_t vocab_size = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;
  std::vector<Real> embedding;
  std::vector<Real> hidden_bias;
  std::vector<Real> output;
  std::vector<Real> output_bias;

  MlpParameters() = default;
  MlpParameters(std::size_t v, std::size_t h, std::size_t k)
      : vocab_size(v), hidden(h), classes(k), embedding(v * h), hidden_bias(h), output(h * k),
        output_bias(k) {}

  friend bool operator==(const MlpParameters&, const MlpParameters&) = default;
};

/// Sparse gradient: only embedding rows touched by the batch are present.
template <typename Real>
struct MlpGradient {
  std::map<std::uint32_t, std::vector<Real>> embedding_rows;
  std::vector<Real> hidden_bias;
  std::vector<Real> output;
  std::vector<Real> output_bias;
};

/// One training example after pooling: weights over vocabulary ids and the
/// index of its domain.
struct PooledExample {
  SparseVector weights;
  std::size_t label = 0;
};

/// Sigmoid scores for one pooled input.
template <typename Real>
std::vector<double> mlp_scores(const MlpParameters<Real>& params, const SparseVector& pooled);

/// Mean over the batch of the mean per-class binary cross-entropy against
/// one-hot targets. When `dropout_masks` is given it holds one
/// batch.size() x H block of multipliers (0 or 1/(1-p)) applied after ReLU.
template <typename Real>
Real mlp_loss_and_gradient(const MlpParameters<Real>& params, std::span<const PooledExample> batch,
                           std::span<const Real> dropout_masks, MlpGradient<Real>* gradient);

struct MlpTrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 42;
  std::size_t hidden = 1024;
  double dropout = 0.5;
  VocabularyOptions vocabulary;
  /// Print per-epoch progress to stderr.
  bool verbose = false;

  void validate() const;
};

class MlpModel : public Router {
 public:
  MlpModel() = default;
  MlpModel(Vocabulary vocab, MlpParameters<float> params, std::vector<std::string> domains,
           double dropout, double threshold);

  const std::vector<std::string>& domains() const override { return domains_; }
  RouteDecision route(std::string_view query) const override;
  RouteDecision route(std::string_view query, double threshold) const;

  std::vector<double> scores(std::string_view text) const;

  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  const MlpParameters<float>& parameters() const noexcept { return params_; }
  double dropout() const noexcept { return dropout_; }
  double threshold() const noexcept { return threshold_; }
  void set_threshold(double t);

 private:
  Vocabulary vocab_;
  MlpParameters<float> params_;
  std::vector<std::string> domains_;
  double dropout_ = 0.5;
  double threshold_ = 0.99;
};

/// Trains with mini-batch Adam on per-class BCE and hidden-layer dropout,
/// returning the epoch with the best validation ID accuracy at `threshold`.
MlpModel mlp_train(std::span<const DatasetSplit> train, std::span<const DatasetSplit> valid,
                   std::span<const std::string> domains, const MlpTrainConfig& config,
                   double threshold);

}  // namespace gqr
