#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gqr {

/// Reserved label carried by every out-of-distribution example.
inline constexpr std::string_view kOodLabel = "OOD";

struct LabeledExample {
  std::string text;
  std::string label;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

enum class SplitRole { kTrain, kValid, kTestId, kTestOod };

enum class OodCategory { kNone, kUnsafe, kOtherLanguage, kOtherDomain };

std::string_view to_string(SplitRole role);
std::string_view to_string(OodCategory category);
SplitRole parse_split_role(std::string_view s);
OodCategory parse_ood_category(std::string_view s);

struct DatasetSplit {
  std::string name;
  std::vector<LabeledExample> examples;
  SplitRole role = SplitRole::kTrain;
  OodCategory ood_category = OodCategory::kNone;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Where a split lives on disk and what it is expected to contain.
struct SplitDescriptor {
  std::string name;
  SplitRole role = SplitRole::kTrain;
  OodCategory ood_category = OodCategory::kNone;
  std::filesystem::path path;
  std::optional<std::size_t> expected_count;
};

struct BenchmarkManifest {
  std::vector<std::string> domains;
  std::vector<SplitDescriptor> splits;
  std::vector<std::string> unsafe_set;

  std::size_t num_domains() const noexcept { return domains.size(); }
  std::vector<const SplitDescriptor*> splits_with_role(SplitRole role) const;
};

/// Lowercases a label and maps any casing of "ood" onto the sentinel.
std::string normalize_label(std::string_view label);

/// Checks the role/category/label invariants of a split against `domains`.
/// An empty `domains` list skips the label-membership check.
void validate_split(const DatasetSplit& split, std::span<const std::string> domains);

/// Reads a JSON-lines stream. `source` names the stream in error messages.
DatasetSplit parse_split(std::istream& in, const SplitDescriptor& descriptor,
                         std::string_view source);
DatasetSplit load_split(const SplitDescriptor& descriptor);
void write_split(std::ostream& out, const DatasetSplit& split);
void save_split(const DatasetSplit& split, const std::filesystem::path& path);

/// Loads and fully validates a manifest, including the contents of every
/// referenced split file. Relative split paths resolve against the
/// manifest's directory.
BenchmarkManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const BenchmarkManifest& manifest, const std::filesystem::path& path);

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct StratifiedSplits {
  DatasetSplit train;
  DatasetSplit valid;
  DatasetSplit test;
};

/// Partitions in-domain examples per label. Each output keeps the input order.
StratifiedSplits stratified_split(std::span<const LabeledExample> examples,
                                  SplitFractions fractions, std::uint64_t seed,
                                  std::string_view base_name = "split");

}  // namespace gqr
