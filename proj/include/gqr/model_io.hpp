#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "gqr/linear.hpp"
#include "gqr/mlp.hpp"

namespace gqr {

/// A trained guarded classifier of either kind.
using GuardedModel = std::variant<MlpModel, LinearOvrModel>;

const Router& as_router(const GuardedModel& model);
std::string_view model_kind(const GuardedModel& model);

/// Applies a serve-time threshold. Only the MLP gate is parameterized;
/// the one-vs-rest gate is fixed at 0.5 and the call is rejected for it.
void override_threshold(GuardedModel& model, double threshold);

inline constexpr std::uint32_t kModelSchemaVersion = 1;

/// Binary artifact layout (see docs/model_format.md): "GQRM" magic, schema
/// version, model kind, section table, sections, trailing CRC-32.
std::vector<std::uint8_t> serialize_model(const GuardedModel& model);
GuardedModel deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const GuardedModel& model, const std::filesystem::path& path);
GuardedModel load_model(const std::filesystem::path& path);

}  // namespace gqr
