#include "gqr/synth.hpp"

#include <array>

#include "gqr/error.hpp"

namespace gqr::synth {
namespace {

using WordList = std::vector<std::string_view>;

const WordList kFunctionWords = {"how", "do",   "i",    "what", "is",   "the",  "a",    "my",
                                 "can", "should", "about", "for", "with", "when", "why", "to",
                                 "of",  "in",   "it",   "be",   "if",   "on",   "does", "this"};

const std::array<WordList, 3> kDomainWords = {{
    // law
    {"contest",   "will",      "court",      "attorney",  "lawsuit",   "contract",  "tenant",
     "landlord",  "lease",     "custody",    "divorce",   "judge",     "statute",   "liability",
     "plaintiff", "defendant", "probate",    "estate",    "copyright", "trademark", "patent",
     "felony",    "misdemeanor", "appeal",   "verdict",   "jury",      "subpoena",  "testimony",
     "eviction",  "negligence", "arbitration", "settlement", "litigation", "lawyer", "legal",
     "clause",    "breach",    "injunction", "warrant",   "police",    "arrest",    "bail",
     "parole",    "sue",       "rights",     "constitution", "ordinance", "notary", "affidavit",
     "deed"},
    // finance
    {"invest",    "stock",     "bond",       "dividend",  "portfolio", "mortgage",  "loan",
     "interest",  "credit",    "debt",       "budget",    "savings",   "retirement", "401",
     "ira",       "tax",       "deduction",  "refund",    "income",    "salary",    "inflation",
     "equity",    "asset",     "liabilities", "broker", "fund",      "etf",       "index",
     "market",    "bank",      "account",    "checking",  "capital",   "gains",     "crypto",
     "bitcoin",   "insurance", "premium",    "annuity",   "pension",   "forex",     "currency",
     "exchange",  "valuation", "revenue",    "profit",    "accounting", "audit",    "financial",
     "money"},
    // health
    {"doctor",    "symptom",   "pain",       "fever",     "headache",  "cough",     "rash",
     "infection", "diabetes",  "blood",      "pressure",  "heart",     "medication", "dose",
     "allergy",   "asthma",    "cancer",     "tumor",     "surgery",   "nausea",    "vomiting",
     "diarrhea",  "stomach",   "kidney",     "liver",     "thyroid",   "hormone",   "pregnancy",
     "vaccine",   "antibiotic", "injury",    "fracture",  "swelling",  "anxiety",   "depression",
     "insomnia",  "cholesterol", "migraine", "dizziness", "fatigue",   "skin",      "lump",
     "clinic",    "hospital",  "nurse",      "patient",   "therapy",   "prescription", "health",
     "medical"},
}};

const WordList kShiftedWords = {
    "recipe",  "oven",    "pasta",    "garlic",   "football", "soccer",   "goal",     "referee",
    "guitar",  "piano",   "melody",   "concert",  "hiking",   "mountain", "camping",  "tent",
    "planet",  "galaxy",  "telescope", "orbit",   "painting", "canvas",   "sculpture", "museum",
    "garden",  "tomato",  "compost",  "seedling", "puppy",    "kitten",   "aquarium", "parrot",
    "chess",   "puzzle",  "knitting", "origami",  "volcano",  "glacier",  "desert",   "rainbow",
    "python",  "compiler", "keyboard", "laptop",  "movie",    "novel",    "poetry",   "theater"};

const WordList kCyrillicWords = {"как", "что", "почему", "где", "когда", "мой", "это", "можно",
                                 "погода", "город", "книга", "музыка", "кошка", "собака", "река",
                                 "лес", "дорога", "поезд", "школа", "друг", "вечер", "утро",
                                 "море", "солнце"};

const WordList kGreekWords = {"πώς", "τι", "γιατί", "πού", "πότε", "μου", "αυτό", "μπορώ",
                              "καιρός", "πόλη", "βιβλίο", "μουσική", "γάτα", "σκύλος", "ποτάμι",
                              "δάσος", "δρόμος", "τρένο", "σχολείο", "φίλος", "βράδυ", "πρωί",
                              "θάλασσα", "ήλιος"};

const std::vector<std::string> kDomains = {"law", "finance", "health"};

std::string_view pick(const WordList& words, Rng& rng) { return words[rng.index(words.size())]; }

// 2-3 function words, then `content` words with occasional function words
// between them, ending with '?'.
std::string compose(const WordList& content, Rng& rng) {
  std::string out;
  auto append = [&](std::string_view w) {
    if (!out.empty()) out += ' ';
    out += w;
  };
  const std::size_t lead = 2 + rng.index(2);
  for (std::size_t i = 0; i < lead; ++i) append(pick(kFunctionWords, rng));
  const std::size_t n = 3 + rng.index(3);
  for (std::size_t i = 0; i < n; ++i) {
    append(pick(content, rng));
    if (i + 1 < n && rng.bernoulli(0.3)) append(pick(kFunctionWords, rng));
  }
  if (!out.empty()) out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out + "?";
}

DatasetSplit make_split(std::string name, SplitRole role, OodCategory category) {
  return DatasetSplit{std::move(name), {}, role, category};
}

}  // namespace

const std::vector<std::string>& domains() { return kDomains; }

std::string domain_query(std::size_t domain, Rng& rng) {
  return compose(kDomainWords.at(domain), rng);
}

std::string shifted_vocabulary_query(Rng& rng) { return compose(kShiftedWords, rng); }

std::string non_latin_query(Rng& rng) {
  const WordList& words = rng.bernoulli(0.5) ? kCyrillicWords : kGreekWords;
  std::string out;
  const std::size_t n = 4 + rng.index(4);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += ' ';
    out += pick(words, rng);
  }
  return out + "?";
}

std::string gibberish_query(Rng& rng) {
  std::string out;
  const std::size_t words = 2 + rng.index(5);
  for (std::size_t w = 0; w < words; ++w) {
    if (w > 0) out += ' ';
    const std::size_t len = 4 + rng.index(6);
    for (std::size_t i = 0; i < len; ++i) out += static_cast<char>('a' + rng.index(26));
  }
  return out;
}

SynthBenchmark generate(const SynthOptions& options) {
  Rng rng(options.seed);
  SynthBenchmark b;
  b.domains = kDomains;
  const std::pair<const char*, std::pair<SplitRole, std::size_t>> id_roles[] = {
      {"train", {SplitRole::kTrain, options.train_per_domain}},
      {"valid", {SplitRole::kValid, options.valid_per_domain}},
      {"test", {SplitRole::kTestId, options.test_per_domain}},
  };
  for (std::size_t d = 0; d < kDomains.size(); ++d) {
    for (const auto& [suffix, role_count] : id_roles) {
      auto split = make_split(kDomains[d] + "_" + suffix, role_count.first, OodCategory::kNone);
      for (std::size_t i = 0; i < role_count.second; ++i)
        split.examples.push_back({domain_query(d, rng), kDomains[d]});
      b.splits.push_back(std::move(split));
    }
  }
  auto shifted = make_split("shifted_vocabulary", SplitRole::kTestOod, OodCategory::kOtherDomain);
  for (std::size_t i = 0; i < options.ood_per_set; ++i)
    shifted.examples.push_back({shifted_vocabulary_query(rng), std::string(kOodLabel)});
  auto non_latin = make_split("non_latin", SplitRole::kTestOod, OodCategory::kOtherLanguage);
  for (std::size_t i = 0; i < options.ood_per_set; ++i)
    non_latin.examples.push_back({non_latin_query(rng), std::string(kOodLabel)});
  b.splits.push_back(std::move(shifted));
  b.splits.push_back(std::move(non_latin));
  return b;
}

std::filesystem::path write_benchmark(const std::filesystem::path& directory,
                                      const SynthOptions& options) {
  std::filesystem::create_directories(directory);
  const auto bench = generate(options);
  BenchmarkManifest manifest;
  manifest.domains = bench.domains;
  for (const auto& split : bench.splits) {
    const auto path = directory / (split.name + ".jsonl");
    save_split(split, path);
    manifest.splits.push_back(
        {split.name, split.role, split.ood_category, path, split.examples.size()});
  }
  const auto manifest_path = directory / "manifest.json";
  save_manifest(manifest, manifest_path);
  return manifest_path;
}

}  // namespace gqr::synth
