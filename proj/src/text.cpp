#include "gqr/text.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "gqr/error.hpp"

namespace gqr {
namespace {

// Decodes one code point at `pos`, advancing it. Ill-formed input yields a
// negative value and consumes at least one byte.
UChar32 next_code_point(std::string_view s, std::int32_t& pos) {
  UChar32 c;
  U8_NEXT(reinterpret_cast<const std::uint8_t*>(s.data()), pos,
          static_cast<std::int32_t>(s.size()), c);
  return c;
}

void append_utf8(std::string& out, UChar32 c) {
  std::uint8_t buf[U8_MAX_LENGTH];
  std::int32_t len = 0;
  UBool error = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, c, error);
  if (!error) out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
}

// Byte offsets of each code point boundary, including the end.
std::vector<std::size_t> code_point_offsets(std::string_view s) {
  std::vector<std::size_t> offsets;
  std::int32_t pos = 0;
  const auto n = static_cast<std::int32_t>(s.size());
  while (pos < n) {
    offsets.push_back(static_cast<std::size_t>(pos));
    next_code_point(s, pos);
  }
  offsets.push_back(s.size());
  return offsets;
}

}  // namespace

std::string to_lower_utf8(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::int32_t pos = 0;
  const auto n = static_cast<std::int32_t>(text.size());
  while (pos < n) {
    const std::int32_t start = pos;
    const UChar32 c = next_code_point(text, pos);
    if (c < 0) {
      out.append(text.substr(start, pos - start));
    } else {
      append_utf8(out, u_tolower(c));
    }
  }
  return out;
}

std::string_view trim_unicode(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool seen = false;
  std::int32_t pos = 0;
  const auto n = static_cast<std::int32_t>(text.size());
  while (pos < n) {
    const std::int32_t start = pos;
    const UChar32 c = next_code_point(text, pos);
    if (c >= 0 && u_isUWhiteSpace(c)) continue;
    if (!seen) begin = static_cast<std::size_t>(start);
    seen = true;
    end = static_cast<std::size_t>(pos);
  }
  return seen ? text.substr(begin, end - begin) : std::string_view{};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::int32_t pos = 0;
  const auto n = static_cast<std::int32_t>(text.size());
  while (pos < n) {
    const UChar32 c = next_code_point(text, pos);
    if (c >= 0 && u_isalnum(c)) {
      append_utf8(current, u_tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens,
                       std::vector<std::uint32_t> document_frequency,
                       std::uint32_t num_documents)
    : tokens_(std::move(tokens)), df_(std::move(document_frequency)),
      num_documents_(num_documents) {
  if (num_documents_ == 0) throw InvariantError("vocabulary: document count must be positive");
  if (tokens_.size() != df_.size())
    throw InvariantError("vocabulary: token and df lists differ in length");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (df_[i] < 1 || df_[i] > num_documents_)
      throw InvariantError("vocabulary: df out of range for token '" + tokens_[i] + "'");
    if (!index_.emplace(tokens_[i], static_cast<std::uint32_t>(i)).second)
      throw InvariantError("vocabulary: duplicate token '" + tokens_[i] + "'");
  }
}

std::int64_t Vocabulary::id(std::string_view token) const {
  // Heterogeneous lookup on unordered_map needs C++20 transparent hashing;
  // a temporary string is fine at query lengths.
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::uint32_t Vocabulary::df(std::size_t id) const {
  if (id >= df_.size()) throw std::out_of_range("vocabulary id out of range");
  return df_[id];
}

double Vocabulary::idf(std::size_t id) const {
  const double n = num_documents_;
  return std::log((1.0 + n) / (1.0 + df(id))) + 1.0;
}

Vocabulary build_vocabulary(std::span<const std::string> documents, VocabularyOptions options) {
  if (options.min_df < 1) throw InvariantError("build_vocabulary: min_df must be >= 1");
  if (options.max_size < 1) throw InvariantError("build_vocabulary: max_size must be >= 1");
  if (documents.empty()) throw InvariantError("build_vocabulary: empty training corpus");

  std::map<std::string, std::uint32_t> df;
  for (const auto& doc : documents) {
    auto tokens = tokenize(doc);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++df[std::move(t)];
  }

  std::vector<std::pair<std::string, std::uint32_t>> kept;
  for (auto& [token, count] : df)
    if (count >= options.min_df) kept.emplace_back(token, count);
  // std::map iteration is lexicographic, so a stable sort on df keeps the tie-break.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.size() > options.max_size) kept.resize(options.max_size);

  std::vector<std::string> tokens;
  std::vector<std::uint32_t> counts;
  tokens.reserve(kept.size());
  counts.reserve(kept.size());
  for (auto& [token, count] : kept) {
    tokens.push_back(std::move(token));
    counts.push_back(count);
  }
  return Vocabulary(std::move(tokens), std::move(counts),
                    static_cast<std::uint32_t>(documents.size()));
}

Vocabulary build_vocabulary(std::span<const DatasetSplit> splits, VocabularyOptions options) {
  std::vector<std::string> docs;
  for (const auto& split : splits)
    for (const auto& ex : split.examples) docs.push_back(ex.text);
  return build_vocabulary(std::span<const std::string>(docs), options);
}

SparseVector vectorize_tfidf(const Vocabulary& vocab, std::string_view text) {
  std::map<std::uint32_t, std::uint32_t> counts;
  for (const auto& token : tokenize(text)) {
    const auto id = vocab.id(token);
    if (id >= 0) ++counts[static_cast<std::uint32_t>(id)];
  }
  SparseVector out;
  out.reserve(counts.size());
  for (auto [id, count] : counts) out.push_back({id, count * vocab.idf(id)});
  return out;
}

void HashConfig::validate() const {
  if (buckets == 0 || (buckets & (buckets - 1)) != 0)
    throw InvariantError("hash config: bucket count must be a power of two");
  if (min_n < 1 || min_n > max_n) throw InvariantError("hash config: need 1 <= min_n <= max_n");
}

HashedFeatures hash_ngrams(std::string_view text, const HashConfig& config) {
  config.validate();
  const std::uint64_t mask = config.buckets - 1;
  HashedFeatures out{config, {}};
  for (const auto& token : tokenize(text)) {
    out.buckets.push_back(static_cast<std::uint32_t>(fnv1a64(token) & mask));
    const std::string wrapped = "<" + token + ">";
    const auto offsets = code_point_offsets(wrapped);
    const std::size_t chars = offsets.size() - 1;
    for (std::size_t start = 0; start < chars; ++start) {
      for (std::size_t n = config.min_n; n <= config.max_n && start + n <= chars; ++n) {
        const std::string_view gram(wrapped.data() + offsets[start],
                                    offsets[start + n] - offsets[start]);
        out.buckets.push_back(static_cast<std::uint32_t>(fnv1a64(gram) & mask));
      }
    }
  }
  return out;
}

}  // namespace gqr
