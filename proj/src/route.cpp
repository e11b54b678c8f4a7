#include "gqr/route.hpp"

#include "gqr/error.hpp"

namespace gqr {

std::size_t argmax_first(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

RouteDecision threshold_gate(std::vector<double> scores, double threshold) {
  RouteDecision decision;
  if (!scores.empty()) {
    const std::size_t best = argmax_first(scores);
    if (scores[best] >= threshold) decision.domain = best;
  }
  decision.scores = std::move(scores);
  return decision;
}

std::vector<RouteDecision> Router::route_batch(std::span<const std::string> queries) const {
  std::vector<RouteDecision> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(route(q));
  return out;
}

std::string Router::decision_label(const RouteDecision& decision) const {
  if (decision.rejected()) return "reject";
  return domains().at(*decision.domain);
}

}  // namespace gqr
