#include "gqr/model_io.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "gqr/error.hpp"

namespace gqr {

const Router& as_router(const GuardedModel& model) {
  return std::visit([](const auto& m) -> const Router& { return m; }, model);
}

std::string_view model_kind(const GuardedModel& model) {
  return std::holds_alternative<MlpModel>(model) ? "mlp" : "linear";
}

void override_threshold(GuardedModel& model, double threshold) {
  auto* mlp = std::get_if<MlpModel>(&model);
  if (!mlp) throw InvariantError("the one-vs-rest model has a fixed 0.5 decision threshold");
  mlp->set_threshold(threshold);
}

namespace {

constexpr std::array<char, 4> kMagic = {'G', 'Q', 'R', 'M'};
constexpr std::uint32_t kKindMlp = 1;
constexpr std::uint32_t kKindLinear = 2;
constexpr std::size_t kHeaderSize = 16;
constexpr std::size_t kTableEntrySize = 24;

constexpr std::uint32_t tag(const char (&s)[5]) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(s[0])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[3])) << 24;
}

constexpr std::uint32_t kMeta = tag("META");
constexpr std::uint32_t kVocab = tag("VOCB");
constexpr std::uint32_t kEmbedding = tag("EMBD");
constexpr std::uint32_t kHiddenBias = tag("HBIA");
constexpr std::uint32_t kOutput = tag("OUTW");
constexpr std::uint32_t kOutputBias = tag("OBIA");
constexpr std::uint32_t kLinearWeights = tag("LINW");
constexpr std::uint32_t kLinearBias = tag("LINB");

std::string tag_name(std::uint32_t t);

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void matrix(std::span<const float> data, std::uint64_t rows, std::uint64_t cols) {
    u64(rows);
    u64(cols);
    bytes_.reserve(bytes_.size() + data.size() * 4);
    for (float f : data) f32(f);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string_view section)
      : bytes_(bytes), section_(section) {}


  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  std::vector<float> matrix(std::uint64_t rows, std::uint64_t cols) {
    if (u64() != rows || u64() != cols)
      throw ModelFormatError("section " + section_ + ": unexpected matrix shape");
    if (rows != 0 && cols > (bytes_.size() - pos_) / 4 / rows)
      throw ModelFormatError("truncated file: section " + section_);
    std::vector<float> out(rows * cols);
    for (auto& f : out) f = f32();
    return out;
  }
  void expect_end() const {
    if (pos_ != bytes_.size())
      throw ModelFormatError("section " + section_ + ": trailing bytes");
  }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n)
      throw ModelFormatError("truncated file: section " + section_);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string section_;
};

using Sections = std::vector<std::pair<std::uint32_t, std::vector<std::uint8_t>>>;

void write_domains(ByteWriter& w, const std::vector<std::string>& domains) {
  w.u32(static_cast<std::uint32_t>(domains.size()));
  for (const auto& d : domains) w.str(d);
}

std::vector<std::string> read_domains(ByteReader& r) {
  std::vector<std::string> out(r.u32());
  for (auto& d : out) d = r.str();
  return out;
}

Sections mlp_sections(const MlpModel& m) {
  Sections s;
  const auto& p = m.parameters();
  {
    ByteWriter w;
    write_domains(w, m.domains());
    w.f64(m.threshold());
    w.f64(m.dropout());
    w.u64(p.hidden);
    s.emplace_back(kMeta, std::move(w.bytes()));
  }
  {
    ByteWriter w;
    const auto& v = m.vocabulary();
    w.u32(v.num_documents());
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      w.str(v.tokens()[i]);
      w.u32(v.document_frequencies()[i]);
    }
    s.emplace_back(kVocab, std::move(w.bytes()));
  }
  auto add_matrix = [&](std::uint32_t t, const std::vector<float>& data, std::uint64_t rows,
                        std::uint64_t cols) {
    ByteWriter w;
    w.matrix(data, rows, cols);
    s.emplace_back(t, std::move(w.bytes()));
  };
  add_matrix(kEmbedding, p.embedding, p.vocab_size, p.hidden);
  add_matrix(kHiddenBias, p.hidden_bias, 1, p.hidden);
  add_matrix(kOutput, p.output, p.hidden, p.classes);
  add_matrix(kOutputBias, p.output_bias, 1, p.classes);
  return s;
}

Sections linear_sections(const LinearOvrModel& m) {
  Sections s;
  const auto& p = m.parameters();
  {
    ByteWriter w;
    write_domains(w, m.domains());
    w.u32(m.hash_config().buckets);
    w.u32(m.hash_config().min_n);
    w.u32(m.hash_config().max_n);
    s.emplace_back(kMeta, std::move(w.bytes()));
  }
  ByteWriter weights;
  weights.matrix(p.weights, p.classes, p.buckets);
  s.emplace_back(kLinearWeights, std::move(weights.bytes()));
  ByteWriter bias;
  bias.matrix(p.bias, 1, p.classes);
  s.emplace_back(kLinearBias, std::move(bias.bytes()));
  return s;
}

std::string tag_name(std::uint32_t t) {
  std::string out(4, '?');
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((t >> (8 * i)) & 0xff);
  return out;
}

MlpModel read_mlp(const std::map<std::uint32_t, std::span<const std::uint8_t>>& sections) {
  auto section = [&](std::uint32_t t) {
    auto it = sections.find(t);
    if (it == sections.end()) throw ModelFormatError("missing section " + tag_name(t));
    return ByteReader(it->second, tag_name(t));
  };
  auto meta = section(kMeta);
  auto domains = read_domains(meta);
  const double threshold = meta.f64();
  const double dropout = meta.f64();
  const std::uint64_t hidden = meta.u64();
  meta.expect_end();

  auto vr = section(kVocab);
  const std::uint32_t n_docs = vr.u32();
  std::vector<std::string> tokens(vr.u32());
  std::vector<std::uint32_t> df(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tokens[i] = vr.str();
    df[i] = vr.u32();
  }
  vr.expect_end();

  MlpParameters<float> p;
  p.vocab_size = tokens.size();
  p.hidden = hidden;
  p.classes = domains.size();
  auto read_matrix = [&](std::uint32_t t, std::uint64_t rows, std::uint64_t cols) {
    auto r = section(t);
    auto m = r.matrix(rows, cols);
    r.expect_end();
    return m;
  };
  p.embedding = read_matrix(kEmbedding, p.vocab_size, p.hidden);
  p.hidden_bias = read_matrix(kHiddenBias, 1, p.hidden);
  p.output = read_matrix(kOutput, p.hidden, p.classes);
  p.output_bias = read_matrix(kOutputBias, 1, p.classes);
  return MlpModel(Vocabulary(std::move(tokens), std::move(df), n_docs), std::move(p),
                  std::move(domains), dropout, threshold);
}

LinearOvrModel read_linear(const std::map<std::uint32_t, std::span<const std::uint8_t>>& sections) {
  auto section = [&](std::uint32_t t) {
    auto it = sections.find(t);
    if (it == sections.end()) throw ModelFormatError("missing section " + tag_name(t));
    return ByteReader(it->second, tag_name(t));
  };
  auto meta = section(kMeta);
  auto domains = read_domains(meta);
  HashConfig hash;
  hash.buckets = meta.u32();
  hash.min_n = meta.u32();
  hash.max_n = meta.u32();
  meta.expect_end();
  hash.validate();

  OvrParameters<float> p;
  p.buckets = hash.buckets;
  p.classes = domains.size();
  auto wr = section(kLinearWeights);
  p.weights = wr.matrix(p.classes, p.buckets);
  wr.expect_end();
  auto br = section(kLinearBias);
  p.bias = br.matrix(1, p.classes);
  br.expect_end();
  return LinearOvrModel(hash, std::move(p), std::move(domains));
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const GuardedModel& model) {
  const bool is_mlp = std::holds_alternative<MlpModel>(model);
  const Sections sections = is_mlp ? mlp_sections(std::get<MlpModel>(model))
                                   : linear_sections(std::get<LinearOvrModel>(model));
  ByteWriter w;
  for (char c : kMagic) w.bytes().push_back(static_cast<std::uint8_t>(c));
  w.u32(kModelSchemaVersion);
  w.u32(is_mlp ? kKindMlp : kKindLinear);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  std::uint64_t offset = kHeaderSize + kTableEntrySize * sections.size();
  for (const auto& [t, payload] : sections) {
    w.u32(t);
    w.u32(0);
    w.u64(offset);
    w.u64(payload.size());
    offset += payload.size();
  }
  auto& bytes = w.bytes();
  for (const auto& [t, payload] : sections) bytes.insert(bytes.end(), payload.begin(), payload.end());
  const auto crc = crc32(0L, bytes.data(), static_cast<uInt>(bytes.size()));
  w.u32(static_cast<std::uint32_t>(crc));
  return std::move(bytes);
}

GuardedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw NotAModelFileError("not a model file (bad magic)");
  if (bytes.size() < kHeaderSize + 4) throw ModelFormatError("truncated file: header");
  ByteReader header(bytes.subspan(4, kHeaderSize - 4), "header");
  const std::uint32_t version = header.u32();
  const std::uint32_t kind = header.u32();
  const std::uint32_t count = header.u32();
  if (version != kModelSchemaVersion)
    throw ModelFormatError("unsupported model schema version " + std::to_string(version));
  const std::size_t body_end = bytes.size() - 4;
  if (count > (body_end - kHeaderSize) / kTableEntrySize)
    throw ModelFormatError("truncated file: section table");

  std::map<std::uint32_t, std::span<const std::uint8_t>> sections;
  ByteReader table(bytes.subspan(kHeaderSize, kTableEntrySize * count), "table");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t t = table.u32();
    table.u32();
    const std::uint64_t off = table.u64();
    const std::uint64_t len = table.u64();
    if (off > body_end || len > body_end - off)
      throw ModelFormatError("truncated file: section " + tag_name(t));
    sections[t] = bytes.subspan(off, len);
  }

  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body_end + i]) << (8 * i);
  const auto actual =
      static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body_end)));
  if (stored != actual) throw ChecksumError("model checksum mismatch");

  switch (kind) {
    case kKindMlp:
      return read_mlp(sections);
    case kKindLinear:
      return read_linear(sections);
    default:
      throw ModelFormatError("unknown model kind " + std::to_string(kind));
  }
}

void save_model(const GuardedModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

GuardedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError(path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace gqr
