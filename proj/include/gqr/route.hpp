#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gqr {

/// Either a domain index into the router's domain list, or a rejection.
/// Scores are aligned with that domain list.
struct RouteDecision {
  std::optional<std::size_t> domain;
  std::vector<double> scores;
  /// False for backends whose scores are not probabilities (e.g. LLM verdicts).
  bool calibrated = true;

  bool rejected() const noexcept { return !domain.has_value(); }
  friend bool operator==(const RouteDecision&, const RouteDecision&) = default;
};

/// Returns the first index holding the maximal score.
std::size_t argmax_first(std::span<const double> scores);

/// Accept the top-scoring domain iff its score reaches `threshold`.
/// Shared by the MLP gate (t) and the one-vs-rest gate (0.5), since
/// "no classifier fires" equals "max score below 0.5".
RouteDecision threshold_gate(std::vector<double> scores, double threshold);

class Router {
 public:
  virtual ~Router() = default;

  virtual const std::vector<std::string>& domains() const = 0;
  virtual RouteDecision route(std::string_view query) const = 0;

  /// Default routes each query in turn.
  virtual std::vector<RouteDecision> route_batch(std::span<const std::string> queries) const;

  /// "reject" or the domain name.
  std::string decision_label(const RouteDecision& decision) const;
};

}  // namespace gqr
