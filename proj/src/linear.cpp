#include "gqr/linear.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "gqr/error.hpp"
#include "gqr/nn_util.hpp"
#include "gqr/random.hpp"

namespace gqr {

SparseVector averaged_bucket_features(std::string_view text, const HashConfig& config) {
  const auto hashed = hash_ngrams(text, config);
  std::map<std::uint32_t, std::uint32_t> counts;
  for (auto b : hashed.buckets) ++counts[b];
  SparseVector out;
  out.reserve(counts.size());
  const double total = static_cast<double>(hashed.buckets.size());
  for (auto [b, n] : counts) out.push_back({b, n / total});
  return out;
}

namespace {

template <typename Real>
Real class_logit(const OvrParameters<Real>& p, std::size_t cls, const SparseVector& x) {
  const Real* w = p.weights.data() + cls * p.buckets;
  Real z = p.bias[cls];
  for (const auto& [b, v] : x) z += w[b] * static_cast<Real>(v);
  return z;
}

}  // namespace

template <typename Real>
Real ovr_class_loss_and_gradient(const OvrParameters<Real>& p, std::size_t cls,
                                 std::span<const FeatureExample> batch, SparseVector* weight_grad,
                                 Real* bias_grad) {
  const Real scale = Real(1) / static_cast<Real>(batch.size());
  std::map<std::uint32_t, double> g;
  Real loss = 0, gb = 0;
  for (const auto& ex : batch) {
    const Real y = ex.label == cls ? Real(1) : Real(0);
    const Real z = class_logit(p, cls, ex.features);
    loss += bce_with_logits(z, y);
    const Real dz = (static_cast<Real>(sigmoid(static_cast<double>(z))) - y) * scale;
    gb += dz;
    if (weight_grad)
      for (const auto& [b, v] : ex.features) g[b] += static_cast<double>(dz) * v;
  }
  if (weight_grad) {
    weight_grad->clear();
    for (auto [b, v] : g) weight_grad->push_back({b, v});
  }
  if (bias_grad) *bias_grad = gb;
  return loss * scale;
}

template float ovr_class_loss_and_gradient(const OvrParameters<float>&, std::size_t,
                                           std::span<const FeatureExample>, SparseVector*, float*);
template double ovr_class_loss_and_gradient(const OvrParameters<double>&, std::size_t,
                                            std::span<const FeatureExample>, SparseVector*,
                                            double*);

void LinearTrainConfig::validate() const {
  if (epochs == 0) throw InvariantError("train config: epochs must be positive");
  if (!(learning_rate > 0)) throw InvariantError("train config: learning rate must be positive");
  if (batch_size == 0) throw InvariantError("train config: batch size must be positive");
  hash.validate();
}

LinearOvrModel::LinearOvrModel(HashConfig hash, OvrParameters<float> params,
                               std::vector<std::string> domains)
    : hash_(hash), params_(std::move(params)), domains_(std::move(domains)) {
  hash_.validate();
  if (domains_.size() < 2) throw InvariantError("linear model: need at least 2 domains");
  if (params_.buckets != hash_.buckets || params_.classes != domains_.size() ||
      params_.weights.size() != static_cast<std::size_t>(params_.buckets) * params_.classes ||
      params_.bias.size() != params_.classes)
    throw InvariantError("linear model: parameter shapes disagree");
  if (!all_finite(std::span<const float>(params_.weights)) ||
      !all_finite(std::span<const float>(params_.bias)))
    throw InvariantError("linear model: non-finite weight");
}

std::vector<double> LinearOvrModel::scores(std::string_view text) const {
  const auto x = averaged_bucket_features(text, hash_);
  std::vector<double> s(params_.classes);
  for (std::size_t c = 0; c < params_.classes; ++c)
    s[c] = sigmoid(static_cast<double>(class_logit(params_, c, x)));
  return s;
}

RouteDecision LinearOvrModel::route(std::string_view query) const {
  // Rejects iff every class scores below 0.5; otherwise the highest score wins.
  return threshold_gate(scores(query), kDecisionThreshold);
}

LinearOvrModel linear_train(std::span<const DatasetSplit> train,
                            std::span<const std::string> domains, const LinearTrainConfig& config) {
  config.validate();
  if (domains.size() < 2) throw InvariantError("linear_train: need at least 2 domains");
  std::vector<FeatureExample> data;
  for (const auto& split : train)
    for (const auto& ex : split.examples)
      data.push_back({averaged_bucket_features(ex.text, config.hash), domain_index(domains, ex.label)});
  if (data.empty()) throw TrainingError("linear_train: empty train split");

  const std::size_t K = domains.size();
  OvrParameters<float> p(config.hash.buckets, K);
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<FeatureExample> batch;
  SparseVector grad;
  float bias_grad = 0;

  const std::size_t batches_per_epoch = (data.size() + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(batches_per_epoch * config.epochs);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      const auto lr = static_cast<float>(config.learning_rate * (1.0 - step / total_steps));
      ++step;
      for (std::size_t c = 0; c < K; ++c) {
        const float loss = ovr_class_loss_and_gradient(p, c, std::span<const FeatureExample>(batch),
                                                       &grad, &bias_grad);
        if (!std::isfinite(loss))
          throw TrainingError("linear_train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(b));
        float* w = p.weights.data() + c * p.buckets;
        for (const auto& [bucket, g] : grad) w[bucket] -= lr * static_cast<float>(g);
        p.bias[c] -= lr * bias_grad;
      }
    }
  }
  std::vector<std::string> names(domains.begin(), domains.end());
  return LinearOvrModel(config.hash, std::move(p), std::move(names));
}

}  // namespace gqr
