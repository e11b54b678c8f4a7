#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gqr/corpus.hpp"
#include "gqr/random.hpp"

namespace gqr::synth {

/// Desk-scale stand-in for the three-domain benchmark: law, finance and
/// health queries drawn from disjoint content vocabularies that share a
/// pool of function words, plus two OOD sets (an unrelated English
/// vocabulary and non-Latin-script queries).
struct SynthOptions {
  std::size_t train_per_domain = 1000;
  std::size_t valid_per_domain = 200;
  std::size_t test_per_domain = 200;
  std::size_t ood_per_set = 500;
  std::uint64_t seed = 2025;
};

const std::vector<std::string>& domains();

/// One query for domain index `domain` (see domains()).
std::string domain_query(std::size_t domain, Rng& rng);
/// English query over vocabulary disjoint from every domain.
std::string shifted_vocabulary_query(Rng& rng);
/// Query written entirely in Cyrillic or Greek script.
std::string non_latin_query(Rng& rng);
/// Random lowercase letter strings.
std::string gibberish_query(Rng& rng);

struct SynthBenchmark {
  std::vector<std::string> domains;
  std::vector<DatasetSplit> splits;
};

SynthBenchmark generate(const SynthOptions& options);

/// Writes every split as JSON lines plus manifest.json into `directory`
/// and returns the manifest path.
std::filesystem::path write_benchmark(const std::filesystem::path& directory,
                                      const SynthOptions& options);

}  // namespace gqr::synth
