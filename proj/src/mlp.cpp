#include "gqr/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "gqr/error.hpp"
#include "gqr/nn_util.hpp"
#include "gqr/random.hpp"

namespace gqr {

SparseVector pooling_weights(const Vocabulary& vocab, std::string_view text) {
  SparseVector v = vectorize_tfidf(vocab, text);
  double total = 0.0;
  for (const auto& e : v) total += e.weight;
  if (total > 0.0)
    for (auto& e : v) e.weight /= total;
  return v;
}

namespace {

template <typename Real>
void hidden_preactivation(const MlpParameters<Real>& p, const SparseVector& pooled,
                          std::vector<Real>& out) {
  out.assign(p.hidden_bias.begin(), p.hidden_bias.end());
  for (const auto& [id, w] : pooled) {
    const Real a = static_cast<Real>(w);
    const Real* row = p.embedding.data() + static_cast<std::size_t>(id) * p.hidden;
    for (std::size_t j = 0; j < p.hidden; ++j) out[j] += a * row[j];
  }
}

template <typename Real>
void output_logits(const MlpParameters<Real>& p, std::span<const Real> hidden,
                   std::vector<Real>& out) {
  out.assign(p.output_bias.begin(), p.output_bias.end());
  for (std::size_t j = 0; j < p.hidden; ++j) {
    const Real h = hidden[j];
    if (h == Real(0)) continue;
    const Real* w = p.output.data() + j * p.classes;
    for (std::size_t c = 0; c < p.classes; ++c) out[c] += h * w[c];
  }
}

}  // namespace

template <typename Real>
std::vector<double> mlp_scores(const MlpParameters<Real>& params, const SparseVector& pooled) {
  std::vector<Real> h;
  hidden_preactivation(params, pooled, h);
  for (auto& x : h) x = std::max(x, Real(0));
  std::vector<Real> z;
  output_logits(params, std::span<const Real>(h), z);
  std::vector<double> s(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) s[c] = sigmoid(static_cast<double>(z[c]));
  return s;
}

template <typename Real>
Real mlp_loss_and_gradient(const MlpParameters<Real>& p, std::span<const PooledExample> batch,
                           std::span<const Real> dropout_masks, MlpGradient<Real>* grad) {
  const std::size_t H = p.hidden;
  const std::size_t K = p.classes;
  if (!dropout_masks.empty() && dropout_masks.size() != batch.size() * H)
    throw std::invalid_argument("dropout mask size mismatch");
  if (grad) {
    grad->embedding_rows.clear();
    grad->hidden_bias.assign(H, Real(0));
    grad->output.assign(H * K, Real(0));
    grad->output_bias.assign(K, Real(0));
  }
  const Real scale = Real(1) / static_cast<Real>(batch.size() * K);
  Real loss = 0;
  std::vector<Real> pre, hidden, z, dz(K), dhidden(H);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& ex = batch[b];
    hidden_preactivation(p, ex.weights, pre);
    hidden.resize(H);
    for (std::size_t j = 0; j < H; ++j) {
      hidden[j] = std::max(pre[j], Real(0));
      if (!dropout_masks.empty()) hidden[j] *= dropout_masks[b * H + j];
    }
    output_logits(p, std::span<const Real>(hidden), z);
    for (std::size_t c = 0; c < K; ++c) {
      const Real y = c == ex.label ? Real(1) : Real(0);
      loss += bce_with_logits(z[c], y);
      dz[c] = (static_cast<Real>(sigmoid(static_cast<double>(z[c]))) - y) * scale;
    }
    if (!grad) continue;

    for (std::size_t c = 0; c < K; ++c) grad->output_bias[c] += dz[c];
    for (std::size_t j = 0; j < H; ++j) {
      const Real* w = p.output.data() + j * K;
      Real* gw = grad->output.data() + j * K;
      Real acc = 0;
      for (std::size_t c = 0; c < K; ++c) {
        gw[c] += hidden[j] * dz[c];
        acc += w[c] * dz[c];
      }
      if (!dropout_masks.empty()) acc *= dropout_masks[b * H + j];
      dhidden[j] = pre[j] > Real(0) ? acc : Real(0);
      grad->hidden_bias[j] += dhidden[j];
    }
    for (const auto& [id, w] : ex.weights) {
      auto& row = grad->embedding_rows[id];
      if (row.empty()) row.assign(H, Real(0));
      const Real a = static_cast<Real>(w);
      for (std::size_t j = 0; j < H; ++j) row[j] += a * dhidden[j];
    }
  }
  return loss * scale;
}

template std::vector<double> mlp_scores(const MlpParameters<float>&, const SparseVector&);
template std::vector<double> mlp_scores(const MlpParameters<double>&, const SparseVector&);
template float mlp_loss_and_gradient(const MlpParameters<float>&, std::span<const PooledExample>,
                                     std::span<const float>, MlpGradient<float>*);
template double mlp_loss_and_gradient(const MlpParameters<double>&,
                                      std::span<const PooledExample>, std::span<const double>,
                                      MlpGradient<double>*);

void MlpTrainConfig::validate() const {
  if (epochs == 0) throw InvariantError("train config: epochs must be positive");
  if (!(learning_rate > 0)) throw InvariantError("train config: learning rate must be positive");
  if (batch_size == 0) throw InvariantError("train config: batch size must be positive");
  if (hidden == 0) throw InvariantError("train config: hidden width must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw InvariantError("train config: dropout must be in [0,1)");
}

MlpModel::MlpModel(Vocabulary vocab, MlpParameters<float> params,
                   std::vector<std::string> domains, double dropout, double threshold)
    : vocab_(std::move(vocab)), params_(std::move(params)), domains_(std::move(domains)),
      dropout_(dropout) {
  if (domains_.size() < 2) throw InvariantError("mlp model: need at least 2 domains");
  if (params_.hidden < 1) throw InvariantError("mlp model: hidden width must be >= 1");
  if (params_.classes != domains_.size() || params_.vocab_size != vocab_.size() ||
      params_.embedding.size() != params_.vocab_size * params_.hidden ||
      params_.hidden_bias.size() != params_.hidden ||
      params_.output.size() != params_.hidden * params_.classes ||
      params_.output_bias.size() != params_.classes)
    throw InvariantError("mlp model: parameter shapes disagree");
  if (!(dropout_ >= 0 && dropout_ < 1)) throw InvariantError("mlp model: dropout must be in [0,1)");
  for (const auto* block : {&params_.embedding, &params_.hidden_bias, &params_.output,
                            &params_.output_bias})
    if (!all_finite(std::span<const float>(*block)))
      throw InvariantError("mlp model: non-finite weight");
  set_threshold(threshold);
}

void MlpModel::set_threshold(double t) {
  if (!(t > 0 && t < 1)) throw InvariantError("threshold must lie in (0,1)");
  threshold_ = t;
}

std::vector<double> MlpModel::scores(std::string_view text) const {
  return mlp_scores(params_, pooling_weights(vocab_, text));
}

RouteDecision MlpModel::route(std::string_view query) const { return route(query, threshold_); }

RouteDecision MlpModel::route(std::string_view query, double threshold) const {
  return threshold_gate(scores(query), threshold);
}

namespace {

std::vector<PooledExample> pool_examples(const Vocabulary& vocab,
                                         std::span<const DatasetSplit> splits,
                                         std::span<const std::string> domains) {
  std::vector<PooledExample> out;
  for (const auto& split : splits)
    for (const auto& ex : split.examples)
      out.push_back({pooling_weights(vocab, ex.text), domain_index(domains, ex.label)});
  return out;
}

double gated_accuracy(const MlpParameters<float>& p, std::span<const PooledExample> examples,
                      double threshold) {
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const auto d = threshold_gate(mlp_scores(p, ex.weights), threshold);
    if (d.domain && *d.domain == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace

MlpModel mlp_train(std::span<const DatasetSplit> train, std::span<const DatasetSplit> valid,
                   std::span<const std::string> domains, const MlpTrainConfig& config,
                   double threshold) {
  config.validate();
  if (domains.size() < 2) throw InvariantError("mlp_train: need at least 2 domains");
  std::size_t n_train = 0;
  for (const auto& s : train) n_train += s.examples.size();
  if (n_train == 0) throw TrainingError("mlp_train: empty train split");

  Vocabulary vocab = build_vocabulary(train, config.vocabulary);
  auto train_set = pool_examples(vocab, train, domains);
  const auto valid_set = pool_examples(vocab, valid, domains);

  const std::size_t V = vocab.size(), H = config.hidden, K = domains.size();
  MlpParameters<float> p(V, H, K);
  Rng rng(config.seed);
  // Unit-variance uniform embeddings; output layer uses fan-in scaling.
  const double emb = std::sqrt(3.0);
  for (auto& w : p.embedding) w = static_cast<float>(rng.uniform(-emb, emb));
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(H));
  for (auto& w : p.output) w = static_cast<float>(rng.uniform(-out_bound, out_bound));
  for (auto& w : p.output_bias) w = static_cast<float>(rng.uniform(-out_bound, out_bound));

  AdamState<float> adam_emb(p.embedding.size()), adam_hb(H), adam_out(H * K), adam_ob(K);
  const AdamHyper hyper{config.learning_rate};
  MlpGradient<float> grad;
  std::vector<float> masks;
  const float keep_scale = static_cast<float>(1.0 / (1.0 - config.dropout));

  MlpParameters<float> best = p;
  double best_acc = -1.0;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PooledExample> batch;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      masks.resize(batch.size() * H);
      for (auto& m : masks) m = rng.bernoulli(config.dropout) ? 0.0f : keep_scale;

      const float loss = mlp_loss_and_gradient(p, std::span<const PooledExample>(batch),
                                               std::span<const float>(masks), &grad);
      if (!std::isfinite(loss))
        throw TrainingError("mlp_train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b));
      ++step;
      for (const auto& [id, row] : grad.embedding_rows)
        adam_emb.update_range(hyper, step, std::span<float>(p.embedding).subspan(id * H, H),
                              std::span<const float>(row), id * H);
      adam_hb.update(hyper, step, std::span<float>(p.hidden_bias),
                     std::span<const float>(grad.hidden_bias));
      adam_out.update(hyper, step, std::span<float>(p.output), std::span<const float>(grad.output));
      adam_ob.update(hyper, step, std::span<float>(p.output_bias),
                     std::span<const float>(grad.output_bias));
    }

    const double acc = valid_set.empty()
                           ? 0.0
                           : gated_accuracy(p, std::span<const PooledExample>(valid_set), threshold);
    if (config.verbose)
      std::cerr << "epoch " << epoch << " valid_id_acc " << acc * 100.0 << "\n";
    if (valid_set.empty() || acc > best_acc) {
      best_acc = acc;
      best = p;
    }
  }

  std::vector<std::string> names(domains.begin(), domains.end());
  return MlpModel(std::move(vocab), std::move(best), std::move(names), config.dropout, threshold);
}

}  // namespace gqr
