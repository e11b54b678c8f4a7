#include "gqr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gqr/error.hpp"
#include "gqr/random.hpp"
#include "gqr/text.hpp"

namespace gqr {

using nlohmann::json;

namespace {

constexpr int kManifestSchemaVersion = 1;

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::pair<std::string_view, Enum> (&table)[N],
                std::string_view what) {
  for (const auto& [name, value] : table)
    if (name == s) return value;
  throw ParseError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::pair<std::string_view, SplitRole> kRoles[] = {
    {"train", SplitRole::kTrain},
    {"valid", SplitRole::kValid},
    {"test_id", SplitRole::kTestId},
    {"test_ood", SplitRole::kTestOod},
};

constexpr std::pair<std::string_view, OodCategory> kCategories[] = {
    {"none", OodCategory::kNone},
    {"unsafe", OodCategory::kUnsafe},
    {"other_language", OodCategory::kOtherLanguage},
    {"other_domain", OodCategory::kOtherDomain},
};

std::string split_error(std::string_view split, std::string_view msg) {
  return "split '" + std::string(split) + "': " + std::string(msg);
}

}  // namespace

std::string_view to_string(SplitRole role) {
  for (const auto& [name, value] : kRoles)
    if (value == role) return name;
  return "?";
}

std::string_view to_string(OodCategory category) {
  for (const auto& [name, value] : kCategories)
    if (value == category) return name;
  return "?";
}

SplitRole parse_split_role(std::string_view s) { return parse_enum(s, kRoles, "split role"); }

OodCategory parse_ood_category(std::string_view s) {
  return parse_enum(s, kCategories, "ood category");
}

std::vector<const SplitDescriptor*> BenchmarkManifest::splits_with_role(SplitRole role) const {
  std::vector<const SplitDescriptor*> out;
  for (const auto& s : splits)
    if (s.role == role) out.push_back(&s);
  return out;
}

std::string normalize_label(std::string_view label) {
  std::string lower = to_lower_utf8(trim_unicode(label));
  if (lower == "ood") return std::string(kOodLabel);
  return lower;
}

void validate_split(const DatasetSplit& split, std::span<const std::string> domains) {
  const bool is_ood = split.role == SplitRole::kTestOod;
  if (is_ood != (split.ood_category != OodCategory::kNone))
    throw InvariantError(split_error(split.name, "ood_category must be set exactly for test_ood"));
  for (std::size_t i = 0; i < split.examples.size(); ++i) {
    const auto& ex = split.examples[i];
    const std::string where = "example " + std::to_string(i + 1) + ": ";
    if (trim_unicode(ex.text).empty())
      throw InvariantError(split_error(split.name, where + "empty text"));
    const bool ood_label = ex.label == kOodLabel;
    if (is_ood && !ood_label)
      throw InvariantError(split_error(split.name, where + "test_ood split holds label '" +
                                                       ex.label + "'"));
    if (!is_ood && ood_label)
      throw InvariantError(
          split_error(split.name, where + "label OOD in " + std::string(to_string(split.role)) +
                                      " split"));
    if (!is_ood && !domains.empty() &&
        std::find(domains.begin(), domains.end(), ex.label) == domains.end())
      throw InvariantError(split_error(split.name, where + "undeclared domain '" + ex.label + "'"));
  }
}

DatasetSplit parse_split(std::istream& in, const SplitDescriptor& descriptor,
                         std::string_view source) {
  DatasetSplit split{descriptor.name, {}, descriptor.role, descriptor.ood_category};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) fail("byte order mark not allowed");
    if (trim_unicode(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string() ||
        !obj.contains("label") || !obj["label"].is_string())
      fail("expected an object with string fields 'text' and 'label'");
    const std::string_view text = trim_unicode(obj["text"].get_ref<const std::string&>());
    if (text.empty()) fail("empty text field");
    std::string label = normalize_label(obj["label"].get_ref<const std::string&>());
    if (label.empty()) fail("empty label field");
    split.examples.push_back({std::string(text), std::move(label)});
  }
  if (split.examples.empty()) throw ParseError(std::string(source) + ": empty dataset file");
  if (descriptor.expected_count && *descriptor.expected_count != split.examples.size())
    throw InvariantError(split_error(descriptor.name, "expected " +
                                                          std::to_string(*descriptor.expected_count) +
                                                          " examples, found " +
                                                          std::to_string(split.examples.size())));
  return split;
}

DatasetSplit load_split(const SplitDescriptor& descriptor) {
  std::ifstream in(descriptor.path, std::ios::binary);
  if (!in) throw FileNotFoundError(descriptor.path.string());
  auto split = parse_split(in, descriptor, descriptor.path.string());
  validate_split(split, {});
  return split;
}

void write_split(std::ostream& out, const DatasetSplit& split) {
  for (const auto& ex : split.examples)
    out << json{{"text", ex.text}, {"label", ex.label}}.dump() << '\n';
}

void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_split(out, split);
}

BenchmarkManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  BenchmarkManifest manifest;
  try {
    if (doc.value("schema_version", 0) != kManifestSchemaVersion)
      throw ParseError("manifest: unsupported or missing schema_version");
    for (const auto& d : doc.at("domains")) manifest.domains.push_back(normalize_label(d.get<std::string>()));
    const auto base = path.parent_path();
    for (const auto& s : doc.at("splits")) {
      SplitDescriptor desc;
      desc.name = s.at("name").get<std::string>();
      desc.role = parse_split_role(s.at("role").get<std::string>());
      desc.ood_category = parse_ood_category(s.value("ood_category", std::string("none")));
      desc.path = s.at("path").get<std::string>();
      if (desc.path.is_relative()) desc.path = base / desc.path;
      if (s.contains("expected_count") && !s["expected_count"].is_null())
        desc.expected_count = s["expected_count"].get<std::size_t>();
      manifest.splits.push_back(std::move(desc));
    }
    if (doc.contains("unsafe_set"))
      manifest.unsafe_set = doc["unsafe_set"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  // Structural invariants.
  if (manifest.domains.size() < 2) throw InvariantError("manifest: domains: need at least 2");
  std::set<std::string> seen;
  for (const auto& d : manifest.domains) {
    if (d.empty() || d == kOodLabel) throw InvariantError("manifest: domains: invalid name '" + d + "'");
    if (!seen.insert(d).second) throw InvariantError("manifest: domains: duplicate '" + d + "'");
  }
  std::set<std::string> split_names;
  for (const auto& s : manifest.splits) {
    if (!split_names.insert(s.name).second)
      throw InvariantError("manifest: splits: duplicate name '" + s.name + "'");
    if ((s.role == SplitRole::kTestOod) != (s.ood_category != OodCategory::kNone))
      throw InvariantError("manifest: splits: '" + s.name +
                           "': ood_category must be set exactly for test_ood");
  }
  for (const auto& u : manifest.unsafe_set) {
    auto it = std::find_if(manifest.splits.begin(), manifest.splits.end(),
                           [&](const SplitDescriptor& s) { return s.name == u; });
    if (it == manifest.splits.end() || it->role != SplitRole::kTestOod)
      throw InvariantError("manifest: unsafe_set: '" + u + "' is not a test_ood split");
  }
  for (const auto& s : manifest.splits)
    if (!std::filesystem::exists(s.path)) throw FileNotFoundError(s.path.string());

  // Content invariants and per-domain coverage.
  std::map<std::string, std::set<SplitRole>> coverage;
  for (const auto& s : manifest.splits) {
    const auto split = load_split(s);
    validate_split(split, manifest.domains);
    for (const auto& ex : split.examples)
      if (ex.label != kOodLabel) coverage[ex.label].insert(s.role);
  }
  for (const auto& d : manifest.domains)
    for (auto role : {SplitRole::kTrain, SplitRole::kValid, SplitRole::kTestId})
      if (!coverage[d].contains(role))
        throw InvariantError("manifest: domain '" + d + "' has no " + std::string(to_string(role)) +
                             " examples");
  return manifest;
}

void save_manifest(const BenchmarkManifest& manifest, const std::filesystem::path& path) {
  json splits = json::array();
  const auto base = path.parent_path();
  for (const auto& s : manifest.splits) {
    json entry{{"name", s.name},
               {"role", to_string(s.role)},
               {"ood_category", to_string(s.ood_category)},
               {"path", s.path.lexically_relative(base).generic_string()}};
    if (s.expected_count) entry["expected_count"] = *s.expected_count;
    splits.push_back(std::move(entry));
  }
  json doc{{"schema_version", kManifestSchemaVersion},
           {"domains", manifest.domains},
           {"splits", std::move(splits)},
           {"unsafe_set", manifest.unsafe_set}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

StratifiedSplits stratified_split(std::span<const LabeledExample> examples,
                                  SplitFractions fractions, std::uint64_t seed,
                                  std::string_view base_name) {
  if (fractions.train <= 0 || fractions.valid <= 0 || fractions.test <= 0 ||
      std::abs(fractions.train + fractions.valid + fractions.test - 1.0) > 1e-9)
    throw InvariantError("stratified_split: fractions must be positive and sum to 1");

  // Group indices by label in order of first appearance.
  std::vector<std::string> labels;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& label = examples[i].label;
    if (label == kOodLabel) throw InvariantError("stratified_split: OOD examples cannot be split");
    auto [it, inserted] = groups.try_emplace(label);
    if (inserted) labels.push_back(label);
    it->second.push_back(i);
  }
  if (labels.empty()) throw InvariantError("stratified_split: no examples");

  Rng rng(seed);
  std::vector<int> assignment(examples.size(), -1);
  for (const auto& label : labels) {
    auto& idx = groups[label];
    rng.shuffle(std::span<std::size_t>(idx));
    const double n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * n));
    const auto n_valid = static_cast<std::size_t>(std::llround(fractions.valid * n));
    if (n_train < 1 || n_valid < 1 || n_train + n_valid >= idx.size())
      throw InvariantError("stratified_split: too few examples of label '" + label +
                           "' (" + std::to_string(idx.size()) + ") to stratify");
    for (std::size_t j = 0; j < idx.size(); ++j)
      assignment[idx[j]] = j < n_train ? 0 : (j < n_train + n_valid ? 1 : 2);
  }

  StratifiedSplits out;
  out.train = {std::string(base_name) + "_train", {}, SplitRole::kTrain, OodCategory::kNone};
  out.valid = {std::string(base_name) + "_valid", {}, SplitRole::kValid, OodCategory::kNone};
  out.test = {std::string(base_name) + "_test", {}, SplitRole::kTestId, OodCategory::kNone};
  DatasetSplit* targets[] = {&out.train, &out.valid, &out.test};
  for (std::size_t i = 0; i < examples.size(); ++i)
    targets[assignment[i]]->examples.push_back(examples[i]);
  return out;
}

}  // namespace gqr
