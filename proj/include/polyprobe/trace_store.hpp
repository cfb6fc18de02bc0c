#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "polyprobe/corpus.hpp"
#include "polyprobe/error.hpp"
#include "polyprobe/io.hpp"
#include "polyprobe/matrix_view.hpp"

namespace polyprobe {

/// Half-open token interval [begin, end).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  bool empty() const noexcept { return end <= begin; }
  bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
  bool overlaps(const TokenSpan& other) const noexcept {
    return begin < other.end && other.begin < end;
  }
  bool valid_for(std::size_t n) const noexcept { return begin < end && end <= n; }

  bool operator==(const TokenSpan&) const = default;
};

struct SentenceTraceHeader {
  std::string sentence_uid;
  std::vector<std::string> tokens;
  TokenSpan target_span;
  TokenSpan cue_span;
  std::vector<bool> special_mask;

  std::size_t n_tokens() const noexcept { return tokens.size(); }

  bool operator==(const SentenceTraceHeader&) const = default;
};

inline std::string sentence_uid(std::string_view pair_id, char side) {
  return std::string(pair_id) + '#' + side;
}

/// Hidden states (L+1) x n x D, then attention L x H x n x n; both row-major f32.
struct ActivationTrace {
  SentenceTraceHeader header;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t hidden_dim = 0;
  std::vector<float> hidden;
  std::vector<float> attention;

  ActivationTrace() = default;
  ActivationTrace(SentenceTraceHeader h, std::size_t layers, std::size_t heads, std::size_t dim)
      : header(std::move(h)), num_layers(layers), num_heads(heads), hidden_dim(dim) {
    const std::size_t n = header.n_tokens();
    hidden.assign((layers + 1) * n * dim, 0.0F);
    attention.assign(layers * heads * n * n, 0.0F);
  }

  std::size_t n_tokens() const noexcept { return header.n_tokens(); }

  /// Layer 0 is the embedding output; 1..L are transformer layer outputs.
  RowMatrixView<float> hidden_layer(std::size_t layer) const {
    const std::size_t block = n_tokens() * hidden_dim;
    return {std::span<const float>(hidden).subspan(layer * block, block), n_tokens(), hidden_dim};
  }
  std::span<float> hidden_row(std::size_t layer, std::size_t token) {
    return std::span<float>(hidden).subspan((layer * n_tokens() + token) * hidden_dim, hidden_dim);
  }

  /// Attention for layer in 1..L.
  RowMatrixView<float> attention_map(std::size_t layer, std::size_t head) const {
    const std::size_t n = n_tokens();
    const std::size_t offset = ((layer - 1) * num_heads + head) * n * n;
    return {std::span<const float>(attention).subspan(offset, n * n), n, n};
  }
  std::span<float> attention_row(std::size_t layer, std::size_t head, std::size_t query) {
    const std::size_t n = n_tokens();
    const std::size_t offset = (((layer - 1) * num_heads + head) * n + query) * n;
    return std::span<float>(attention).subspan(offset, n);
  }

  std::size_t payload_bytes() const noexcept {
    return (hidden.size() + attention.size()) * sizeof(float);
  }

  /// Bitwise equality of header, shape and both tensors.
  bool bitwise_equal(const ActivationTrace& other) const {
    return header == other.header && num_layers == other.num_layers &&
           num_heads == other.num_heads && hidden_dim == other.hidden_dim &&
           hidden.size() == other.hidden.size() && attention.size() == other.attention.size() &&
           std::memcmp(hidden.data(), other.hidden.data(), hidden.size() * sizeof(float)) == 0 &&
           std::memcmp(attention.data(), other.attention.data(), attention.size() * sizeof(float)) == 0;
  }
};

inline constexpr double kAttentionRowTolerance = 1e-4;

inline std::size_t expected_payload_floats(std::size_t layers, std::size_t heads, std::size_t dim,
                                           std::size_t n) {
  return (layers + 1) * n * dim + layers * heads * n * n;
}

/// Header invariants: spans valid, non-empty, disjoint; mask length matches.
inline std::vector<std::string> header_violations(const SentenceTraceHeader& header) {
  std::vector<std::string> reasons;
  const std::size_t n = header.n_tokens();
  if (n == 0) reasons.emplace_back("no tokens");
  if (!header.target_span.valid_for(n)) reasons.emplace_back("invalid target span");
  if (!header.cue_span.valid_for(n)) reasons.emplace_back("invalid cue span");
  if (header.target_span.overlaps(header.cue_span)) reasons.emplace_back("span overlap");
  if (header.special_mask.size() != n) reasons.emplace_back("special mask length");
  return reasons;
}

/// Value invariants over a float payload; each reason is reported once.
inline std::vector<std::string> payload_violations(std::span<const float> hidden,
                                                   std::span<const float> attention,
                                                   std::size_t n) {
  std::vector<std::string> reasons;
  bool non_finite = false;
  for (float v : hidden) non_finite |= !std::isfinite(v);
  bool out_of_range = false;
  bool row_sum = false;
  for (std::size_t row = 0; n > 0 && row * n < attention.size(); ++row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const float w = attention[row * n + j];
      if (!std::isfinite(w)) {
        non_finite = true;
        continue;
      }
      if (w < 0.0F || w > 1.0F) out_of_range = true;
      sum += w;
    }
    if (std::abs(sum - 1.0) > kAttentionRowTolerance) row_sum = true;
  }
  if (non_finite) reasons.emplace_back("non-finite value");
  if (out_of_range) reasons.emplace_back("weight out of range");
  if (row_sum) reasons.emplace_back("row-sum violation");
  return reasons;
}

inline std::vector<std::string> trace_violations(const ActivationTrace& trace) {
  auto reasons = header_violations(trace.header);
  const std::size_t n = trace.n_tokens();
  if (trace.hidden.size() != (trace.num_layers + 1) * n * trace.hidden_dim ||
      trace.attention.size() != trace.num_layers * trace.num_heads * n * n) {
    reasons.emplace_back("tensor shape");
    return reasons;
  }
  auto payload = payload_violations(trace.hidden, trace.attention, n);
  reasons.insert(reasons.end(), payload.begin(), payload.end());
  return reasons;
}

// --- manifest ----------------------------------------------------------------

struct ByteOffsets {
  std::uint64_t hidden = 0;
  std::uint64_t attention = 0;
  std::uint64_t end = 0;

  bool operator==(const ByteOffsets&) const = default;
};

struct TraceEntry {
  SentenceTraceHeader header;
  std::string file;
  ByteOffsets offsets;

  bool operator==(const TraceEntry&) const = default;
};

struct TraceManifest {
  ModelMeta model;
  std::string dataset_id;
  std::string dtype = "f32";
  std::string endianness = "little";
  std::vector<TraceEntry> sentences;

  const TraceEntry* find(std::string_view uid) const {
    for (const auto& s : sentences) {
      if (s.header.sentence_uid == uid) return &s;
    }
    return nullptr;
  }

  bool operator==(const TraceManifest&) const = default;
};

inline constexpr std::string_view kManifestName = "manifest.json";

inline nlohmann::json manifest_to_json(const TraceManifest& m) {
  nlohmann::json sentences = nlohmann::json::array();
  for (const auto& s : m.sentences) {
    std::vector<int> mask(s.header.special_mask.begin(), s.header.special_mask.end());
    sentences.push_back({{"sentence_uid", s.header.sentence_uid},
                         {"file", s.file},
                         {"n_tokens", s.header.n_tokens()},
                         {"tokens", s.header.tokens},
                         {"target_span", {s.header.target_span.begin, s.header.target_span.end}},
                         {"cue_span", {s.header.cue_span.begin, s.header.cue_span.end}},
                         {"special_mask", mask},
                         {"byte_offsets",
                          {{"hidden", s.offsets.hidden},
                           {"attention", s.offsets.attention},
                           {"end", s.offsets.end}}}});
  }
  return {{"format", "polyprobe-trace"}, {"version", 1},         {"model", m.model},
          {"dataset_id", m.dataset_id},  {"dtype", m.dtype},     {"endianness", m.endianness},
          {"sentences", sentences}};
}

inline TraceManifest manifest_from_json(const nlohmann::json& j) {
  TraceManifest m;
  m.model = j.at("model").get<ModelMeta>();
  m.dataset_id = j.at("dataset_id").get<std::string>();
  m.dtype = j.at("dtype").get<std::string>();
  m.endianness = j.at("endianness").get<std::string>();
  for (const auto& s : j.at("sentences")) {
    TraceEntry e;
    e.header.sentence_uid = s.at("sentence_uid").get<std::string>();
    e.file = s.at("file").get<std::string>();
    e.header.tokens = s.at("tokens").get<std::vector<std::string>>();
    if (s.at("n_tokens").get<std::size_t>() != e.header.tokens.size()) {
      fail(ErrorKind::ShapeMismatch, e.header.sentence_uid + ": n_tokens disagrees with tokens");
    }
    const auto t = s.at("target_span").get<std::vector<std::size_t>>();
    const auto c = s.at("cue_span").get<std::vector<std::size_t>>();
    if (t.size() != 2 || c.size() != 2) fail(ErrorKind::ShapeMismatch, "span must have two entries");
    e.header.target_span = {t[0], t[1]};
    e.header.cue_span = {c[0], c[1]};
    for (int flag : s.at("special_mask").get<std::vector<int>>()) e.header.special_mask.push_back(flag != 0);
    const auto& off = s.at("byte_offsets");
    e.offsets = {off.at("hidden").get<std::uint64_t>(), off.at("attention").get<std::uint64_t>(),
                 off.at("end").get<std::uint64_t>()};
    m.sentences.push_back(std::move(e));
  }
  return m;
}

inline TraceManifest load_trace_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  if (!std::filesystem::exists(path)) fail(ErrorKind::MissingTrace, "no manifest in " + dir.string());
  try {
    return manifest_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptPayload, path.string() + ": " + e.what());
  }
}

// --- binary payload ----------------------------------------------------------

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

inline void append_floats(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(float));
  char* dst = out.data() + start;
  for (float v : values) {
    const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(v));
    std::memcpy(dst, &bits, sizeof bits);
    dst += sizeof bits;
  }
}

inline void read_floats(std::string_view bytes, std::span<float> out) {
  const char* src = bytes.data();
  for (float& v : out) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, src, sizeof bits);
    v = std::bit_cast<float>(to_little(bits));
    src += sizeof bits;
  }
}

inline std::string payload_file_name(std::string_view uid) {
  std::string name;
  for (char c : uid) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '#' || c == '-' ||
                      c == '_' || c == '.';
    name.push_back(keep ? c : '_');
  }
  return "sentences/" + name + ".bin";
}

}  // namespace detail

/// Single writer for one trace directory; the manifest is written by finish().
class TraceWriter {
 public:
  TraceWriter(std::filesystem::path dir, ModelMeta model, std::string dataset_id)
      : dir_(std::move(dir)) {
    model.validate();
    manifest_.model = std::move(model);
    manifest_.dataset_id = std::move(dataset_id);
    std::error_code ec;
    std::filesystem::create_directories(dir_ / "sentences", ec);
    if (ec) fail(ErrorKind::IoFailure, "cannot create " + dir_.string() + ": " + ec.message());
    lock_ = dir_ / ".write.lock";
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) fail(ErrorKind::IoFailure, dir_.string() + " is locked by another writer");
    std::fclose(f);
  }

  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;

  ~TraceWriter() {
    std::error_code ec;
    std::filesystem::remove(lock_, ec);
  }

  void add(const ActivationTrace& trace) {
    const auto& m = manifest_.model;
    if (trace.num_layers != m.num_layers || trace.num_heads != m.num_heads ||
        trace.hidden_dim != m.hidden_dim) {
      fail(ErrorKind::ShapeMismatch, trace.header.sentence_uid + ": shape differs from model");
    }
    if (auto reasons = trace_violations(trace); !reasons.empty()) {
      fail(ErrorKind::ShapeMismatch, trace.header.sentence_uid + ": " + reasons.front());
    }
    if (!uids_.insert(trace.header.sentence_uid).second) {
      fail(ErrorKind::ShapeMismatch, "duplicate sentence uid " + trace.header.sentence_uid);
    }
    TraceEntry entry;
    entry.header = trace.header;
    entry.file = detail::payload_file_name(trace.header.sentence_uid);
    if (!files_.insert(entry.file).second) {
      fail(ErrorKind::ShapeMismatch, "payload file name collision for " + trace.header.sentence_uid);
    }
    entry.offsets.hidden = 0;
    entry.offsets.attention = trace.hidden.size() * sizeof(float);
    entry.offsets.end = trace.payload_bytes();

    std::string bytes;
    bytes.reserve(trace.payload_bytes());
    detail::append_floats(bytes, trace.hidden);
    detail::append_floats(bytes, trace.attention);
    std::ofstream out(dir_ / entry.file, std::ios::binary | std::ios::trunc);
    if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
      fail(ErrorKind::IoFailure, "cannot write " + (dir_ / entry.file).string());
    }
    manifest_.sentences.push_back(std::move(entry));
  }

  const TraceManifest& finish() {
    io::write_file_atomic(dir_ / kManifestName, manifest_to_json(manifest_).dump(2) + "\n");
    return manifest_;
  }

 private:
  std::filesystem::path dir_;
  std::filesystem::path lock_;
  TraceManifest manifest_;
  std::set<std::string> uids_;
  std::set<std::string> files_;
};

/// Writes every trace and the manifest. Sentence entries of `manifest` are replaced.
template <class Range>
TraceManifest write_trace(const TraceManifest& manifest, const Range& traces,
                          const std::filesystem::path& dir) {
  TraceWriter writer(dir, manifest.model, manifest.dataset_id);
  for (const ActivationTrace& t : traces) writer.add(t);
  return writer.finish();
}

/// Reads traces from one directory; the manifest is parsed once.
class TraceReader {
 public:
  explicit TraceReader(std::filesystem::path dir)
      : dir_(std::move(dir)), manifest_(load_trace_manifest(dir_)) {
    if (manifest_.dtype != "f32" || manifest_.endianness != "little") {
      fail(ErrorKind::CorruptPayload, dir_.string() + ": unsupported dtype or endianness");
    }
    for (std::size_t i = 0; i < manifest_.sentences.size(); ++i) {
      index_.emplace(manifest_.sentences[i].header.sentence_uid, i);
    }
  }

  const TraceManifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }
  bool contains(const std::string& uid) const { return index_.contains(uid); }

  ActivationTrace read(const std::string& uid) const {
    auto it = index_.find(uid);
    if (it == index_.end()) fail(ErrorKind::UnknownSentence, uid + " not in " + dir_.string());
    const TraceEntry& entry = manifest_.sentences[it->second];
    const auto& model = manifest_.model;
    ActivationTrace trace(entry.header, model.num_layers, model.num_heads, model.hidden_dim);

    const auto path = dir_ / entry.file;
    if (!std::filesystem::exists(path)) fail(ErrorKind::CorruptPayload, uid + ": payload file missing");
    const std::string bytes = io::read_file(path);
    const std::size_t hidden_bytes = trace.hidden.size() * sizeof(float);
    if (bytes.size() != trace.payload_bytes() || entry.offsets.attention != hidden_bytes ||
        entry.offsets.end != bytes.size()) {
      fail(ErrorKind::CorruptPayload, uid + ": payload size disagrees with declared shape");
    }
    detail::read_floats(std::string_view(bytes).substr(0, hidden_bytes), trace.hidden);
    detail::read_floats(std::string_view(bytes).substr(hidden_bytes), trace.attention);
    for (float v : trace.hidden) {
      if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, uid + ": non-finite hidden state");
    }
    for (float v : trace.attention) {
      if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, uid + ": non-finite attention weight");
    }
    return trace;
  }

 private:
  std::filesystem::path dir_;
  TraceManifest manifest_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline ActivationTrace read_trace(const std::filesystem::path& dir, const std::string& uid) {
  return TraceReader(dir).read(uid);
}

// --- validation --------------------------------------------------------------

struct SentenceValidation {
  std::string sentence_uid;
  std::vector<std::string> reasons;

  bool ok() const noexcept { return reasons.empty(); }
};

struct ValidationReport {
  std::filesystem::path dir;
  std::vector<std::string> directory_errors;
  std::vector<SentenceValidation> sentences;

  bool passed() const {
    if (!directory_errors.empty()) return false;
    for (const auto& s : sentences) {
      if (!s.ok()) return false;
    }
    return true;
  }

  std::size_t n_failed() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.ok() ? 0 : 1;
    return n;
  }

  const SentenceValidation* find(std::string_view uid) const {
    for (const auto& s : sentences) {
      if (s.sentence_uid == uid) return &s;
    }
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& s : sentences) {
      if (!s.ok()) failures.push_back({{"sentence_uid", s.sentence_uid}, {"reasons", s.reasons}});
    }
    return {{"dir", dir.string()},
            {"passed", passed()},
            {"n_sentences", sentences.size()},
            {"n_failed", n_failed()},
            {"directory_errors", directory_errors},
            {"failures", failures}};
  }
};

/// Checks every invariant of every sentence. `strict` also flags payload files
/// not referenced by the manifest and spans that cover special tokens.
inline ValidationReport validate_trace_dir(const std::filesystem::path& dir, bool strict = false) {
  namespace fs = std::filesystem;
  ValidationReport report;
  report.dir = dir;

  TraceManifest manifest;
  try {
    manifest = load_trace_manifest(dir);
  } catch (const std::exception& e) {
    report.directory_errors.emplace_back(std::string("manifest: ") + e.what());
    return report;
  }
  try {
    manifest.model.validate();
  } catch (const Error& e) {
    report.directory_errors.emplace_back(std::string("model: ") + e.what());
    return report;
  }
  if (manifest.dtype != "f32") report.directory_errors.push_back("unsupported dtype " + manifest.dtype);
  if (manifest.endianness != "little") {
    report.directory_errors.push_back("unsupported endianness " + manifest.endianness);
  }
  if (!report.directory_errors.empty()) return report;

  const auto& model = manifest.model;
  std::set<std::string> seen;
  std::set<std::string> referenced;
  for (const auto& entry : manifest.sentences) {
    SentenceValidation result;
    result.sentence_uid = entry.header.sentence_uid;
    if (!seen.insert(entry.header.sentence_uid).second) result.reasons.emplace_back("duplicate uid");
    referenced.insert(fs::path(entry.file).lexically_normal().string());

    auto header_reasons = header_violations(entry.header);
    result.reasons.insert(result.reasons.end(), header_reasons.begin(), header_reasons.end());
    const std::size_t n = entry.header.n_tokens();
    if (strict && header_reasons.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        if (entry.header.special_mask[i] &&
            (entry.header.target_span.contains(i) || entry.header.cue_span.contains(i))) {
          result.reasons.emplace_back("span covers special token");
          break;
        }
      }
    }

    const std::size_t hidden_floats = (model.num_layers + 1) * n * model.hidden_dim;
    const std::size_t total_floats =
        expected_payload_floats(model.num_layers, model.num_heads, model.hidden_dim, n);
    if (entry.offsets.hidden != 0 || entry.offsets.attention != hidden_floats * sizeof(float) ||
        entry.offsets.end != total_floats * sizeof(float)) {
      result.reasons.emplace_back("byte offsets disagree with shape");
    }

    const fs::path path = dir / entry.file;
    std::error_code ec;
    if (!fs::exists(path, ec)) {
      result.reasons.emplace_back("missing payload file");
    } else if (fs::file_size(path, ec) != total_floats * sizeof(float)) {
      result.reasons.emplace_back("payload size mismatch");
    } else {
      const std::string bytes = io::read_file(path);
      std::vector<float> hidden(hidden_floats);
      std::vector<float> attention(total_floats - hidden_floats);
      const std::size_t hidden_bytes = hidden_floats * sizeof(float);
      detail::read_floats(std::string_view(bytes).substr(0, hidden_bytes), hidden);
      detail::read_floats(std::string_view(bytes).substr(hidden_bytes), attention);
      auto payload_reasons = payload_violations(hidden, attention, n);
      result.reasons.insert(result.reasons.end(), payload_reasons.begin(), payload_reasons.end());
    }
    report.sentences.push_back(std::move(result));
  }

  if (strict) {
    std::error_code ec;
    for (const auto& item : fs::directory_iterator(dir / "sentences", ec)) {
      const auto rel = item.path().lexically_relative(dir).lexically_normal().string();
      if (!referenced.contains(rel)) report.directory_errors.push_back("orphan payload " + rel);
    }
  }
  return report;
}

}  // namespace polyprobe
