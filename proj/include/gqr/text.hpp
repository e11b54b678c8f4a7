#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gqr/corpus.hpp"

namespace gqr {

// Unicode helpers. Input is UTF-8; ill-formed sequences act as separators.
std::string to_lower_utf8(std::string_view text);
std::string_view trim_unicode(std::string_view text);

/// Lowercases, then splits on maximal runs of non-alphanumeric code points.
std::vector<std::string> tokenize(std::string_view text);

/// 64-bit FNV-1a with the standard offset basis and prime.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Validates dense ids, unique tokens and 1 <= df <= num_documents.
  Vocabulary(std::vector<std::string> tokens, std::vector<std::uint32_t> document_frequency,
             std::uint32_t num_documents);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::uint32_t num_documents() const noexcept { return num_documents_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<std::uint32_t>& document_frequencies() const noexcept { return df_; }

  /// Returns -1 for out-of-vocabulary tokens.
  std::int64_t id(std::string_view token) const;
  std::uint32_t df(std::size_t id) const;
  /// Smoothed inverse document frequency: ln((1+N)/(1+df)) + 1.
  double idf(std::size_t id) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.df_ == b.df_ && a.num_documents_ == b.num_documents_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint32_t> df_;
  std::uint32_t num_documents_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct VocabularyOptions {
  std::uint32_t min_df = 2;
  std::size_t max_size = 100'000;
};

Vocabulary build_vocabulary(std::span<const std::string> documents, VocabularyOptions options = {});
Vocabulary build_vocabulary(std::span<const DatasetSplit> splits, VocabularyOptions options = {});

struct SparseEntry {
  std::uint32_t id;
  double weight;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Entries sorted by strictly increasing id.
using SparseVector = std::vector<SparseEntry>;

/// Term count times idf for every in-vocabulary token; OOV tokens dropped.
SparseVector vectorize_tfidf(const Vocabulary& vocab, std::string_view text);

struct HashConfig {
  std::uint32_t buckets = 1u << 21;
  std::uint32_t min_n = 3;
  std::uint32_t max_n = 6;

  void validate() const;
  friend bool operator==(const HashConfig&, const HashConfig&) = default;
};

struct HashedFeatures {
  HashConfig config;
  std::vector<std::uint32_t> buckets;
};

/// For every token: one bucket for the bare token, then one per character
/// n-gram of the token wrapped as "<token>", for n in [min_n, max_n].
/// Buckets are fnv1a64 of the UTF-8 bytes masked to buckets - 1.
HashedFeatures hash_ngrams(std::string_view text, const HashConfig& config);

}  // namespace gqr
