#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gqr/corpus.hpp"
#include "gqr/route.hpp"
#include "gqr/text.hpp"

namespace gqr {

/// Bucket-indicator vector averaged over all emitted buckets of a document.
SparseVector averaged_bucket_features(std::string_view text, const HashConfig& config);

/// One logistic regression per class over hashed buckets.
/// weights holds classes x buckets, class-major.
template <typename Real>
struct OvrParameters {
  std::uint32_t buckets = 0;
  std::size_t classes = 0;
  std::vector<Real> weights;
  std::vector<Real> bias;

  OvrParameters() = default;
  OvrParameters(std::uint32_t b, std::size_t k) : buckets(b), classes(k), weights(b * k), bias(k) {}

  friend bool operator==(const OvrParameters&, const OvrParameters&) = default;
};

struct FeatureExample {
  SparseVector features;
  std::size_t label = 0;
};

/// Mean logistic loss of class `cls` over the batch (positive iff label == cls).
/// Gradient entries for the class's weights are returned sparsely, merged by bucket.
template <typename Real>
Real ovr_class_loss_and_gradient(const OvrParameters<Real>& params, std::size_t cls,
                                 std::span<const FeatureExample> batch, SparseVector* weight_grad,
                                 Real* bias_grad);

struct LinearTrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 1.0;
  std::size_t batch_size = 1;
  std::uint64_t seed = 42;
  HashConfig hash;

  void validate() const;
};

class LinearOvrModel : public Router {
 public:
  /// A class fires iff its sigmoid score reaches this value.
  static constexpr double kDecisionThreshold = 0.5;

  LinearOvrModel() = default;
  LinearOvrModel(HashConfig hash, OvrParameters<float> params, std::vector<std::string> domains);

  const std::vector<std::string>& domains() const override { return domains_; }
  RouteDecision route(std::string_view query) const override;
  std::vector<double> scores(std::string_view text) const;

  const HashConfig& hash_config() const noexcept { return hash_; }
  const OvrParameters<float>& parameters() const noexcept { return params_; }

 private:
  HashConfig hash_;
  OvrParameters<float> params_;
  std::vector<std::string> domains_;
};

/// k independent logistic regressions trained by SGD with a linearly
/// decaying learning rate.
LinearOvrModel linear_train(std::span<const DatasetSplit> train,
                            std::span<const std::string> domains, const LinearTrainConfig& config);

}  // namespace gqr
