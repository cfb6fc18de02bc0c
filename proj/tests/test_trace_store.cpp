#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "polyprobe/io.hpp"
#include "polyprobe/trace_store.hpp"
#include "traces.hpp"

using namespace polyprobe;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected polyprobe::Error";
  return ErrorKind::InvalidConfig;
}

ModelMeta model(std::size_t layers, std::size_t heads, std::size_t dim) {
  return {"toy-model", "toy", false, 1000, layers, heads, dim, {Language::english}};
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("polyprobe_" + name)) {
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<ActivationTrace> random_traces(Rng& rng, std::size_t count, std::size_t layers, std::size_t heads,
                                           std::size_t dim) {
  std::vector<ActivationTrace> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(oracle::random_trace(rng, sentence_uid("p" + std::to_string(i / 2), i % 2 ? 'b' : 'a'), layers,
                                       heads, dim));
  }
  return out;
}

TraceManifest manifest_for(const ModelMeta& m) {
  TraceManifest manifest;
  manifest.model = m;
  manifest.dataset_id = "toy";
  return manifest;
}

// Independent re-scan: decode every payload by hand and check every invariant.
bool rescan_ok(const fs::path& dir, const nlohmann::json& entry, const nlohmann::json& model) {
  const std::size_t layers = model.at("num_layers");
  const std::size_t heads = model.at("num_heads");
  const std::size_t dim = model.at("hidden_dim");
  const std::size_t n = entry.at("tokens").size();
  const auto target = entry.at("target_span").get<std::vector<std::size_t>>();
  const auto cue = entry.at("cue_span").get<std::vector<std::size_t>>();
  if (!(target[0] < target[1] && target[1] <= n && cue[0] < cue[1] && cue[1] <= n)) return false;
  if (target[0] < cue[1] && cue[0] < target[1]) return false;
  const std::size_t hidden = (layers + 1) * n * dim;
  const std::size_t attention = layers * heads * n * n;
  std::ifstream in(dir / entry.at("file").get<std::string>(), std::ios::binary);
  if (!in) return false;
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != (hidden + attention) * 4) return false;
  std::vector<float> values(hidden + attention);
  std::memcpy(values.data(), bytes.data(), bytes.size());
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  for (std::size_t row = 0; row < layers * heads * n; ++row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const float w = values[hidden + row * n + j];
      if (w < 0.0F || w > 1.0F) return false;
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-4) return false;
  }
  return true;
}

}  // namespace

TEST(TraceStore, PayloadSizeArithmetic) {
  TempDir dir("size");
  SentenceTraceHeader h{"p#a", {"a", "b", "c"}, {0, 1}, {2, 3}, {false, false, false}};
  ActivationTrace t(h, 2, 2, 4);
  for (std::size_t l = 1; l <= 2; ++l) {
    for (std::size_t hd = 0; hd < 2; ++hd) {
      for (std::size_t i = 0; i < 3; ++i) t.attention_row(l, hd, i)[i] = 1.0F;
    }
  }
  write_trace(manifest_for(model(2, 2, 4)), std::vector<ActivationTrace>{t}, dir.path());
  EXPECT_EQ(fs::file_size(dir.path() / "sentences/p#a.bin"), 288u);
  EXPECT_EQ(expected_payload_floats(2, 2, 4, 3) * 4, 288u);
}

TEST(TraceStore, RejectsRowSumViolationOnWrite) {
  TempDir dir("rowsum");
  Rng rng(1);
  auto t = oracle::random_trace(rng, "p#a", 2, 2, 4);
  auto row = t.attention_row(1, 0, 0);
  for (auto& v : row) v *= 0.9F;
  EXPECT_EQ(kind_of([&] { write_trace(manifest_for(model(2, 2, 4)), std::vector<ActivationTrace>{t}, dir.path()); }),
            ErrorKind::ShapeMismatch);
}

TEST(TraceStore, RejectsShapeDifferentFromModel) {
  TempDir dir("shape");
  Rng rng(1);
  auto t = oracle::random_trace(rng, "p#a", 3, 2, 4);
  EXPECT_EQ(kind_of([&] { write_trace(manifest_for(model(2, 2, 4)), std::vector<ActivationTrace>{t}, dir.path()); }),
            ErrorKind::ShapeMismatch);
}

TEST(TraceStore, RandomRoundTripIsBitwise) {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    TempDir dir("roundtrip");
    const std::size_t layers = 1 + rng.below(4);
    const std::size_t heads = 1 + rng.below(3);
    const std::size_t dim = 1 + rng.below(16);
    auto traces = random_traces(rng, 6, layers, heads, dim);
    write_trace(manifest_for(model(layers, heads, dim)), traces, dir.path());
    TraceReader reader(dir.path());
    for (const auto& t : traces) EXPECT_TRUE(reader.read(t.header.sentence_uid).bitwise_equal(t));
  }
}

TEST(TraceStore, ByteLayoutIsDeterministic) {
  Rng rng(3);
  auto traces = random_traces(rng, 8, 2, 2, 6);
  TempDir a("det_a");
  TempDir b("det_b");
  write_trace(manifest_for(model(2, 2, 6)), traces, a.path());
  write_trace(manifest_for(model(2, 2, 6)), traces, b.path());
  for (const auto& item : fs::recursive_directory_iterator(a.path())) {
    if (!item.is_regular_file()) continue;
    const auto rel = fs::relative(item.path(), a.path());
    ASSERT_TRUE(fs::exists(b.path() / rel)) << rel;
    EXPECT_EQ(io::read_file(item.path()), io::read_file(b.path() / rel)) << rel;
  }
}

TEST(TraceStore, ReadErrors) {
  TempDir dir("read_errors");
  Rng rng(4);
  auto traces = random_traces(rng, 2, 2, 2, 4);
  write_trace(manifest_for(model(2, 2, 4)), traces, dir.path());
  EXPECT_EQ(kind_of([&] { read_trace(dir.path(), "missing#a"); }), ErrorKind::UnknownSentence);

  const auto file = dir.path() / "sentences/p0#b.bin";
  std::string bytes = io::read_file(file);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + 8, &nan, 4);
  io::write_file_atomic(file, bytes);
  EXPECT_EQ(kind_of([&] { read_trace(dir.path(), "p0#b"); }), ErrorKind::NonFiniteValue);

  io::write_file_atomic(file, bytes.substr(0, bytes.size() - 4));
  EXPECT_EQ(kind_of([&] { read_trace(dir.path(), "p0#b"); }), ErrorKind::CorruptPayload);

  TempDir empty("empty_trace");
  fs::create_directories(empty.path());
  EXPECT_EQ(kind_of([&] { TraceReader reader(empty.path()); }), ErrorKind::MissingTrace);
}

TEST(TraceStore, SingleWriterPerDirectory) {
  TempDir dir("lock");
  TraceWriter first(dir.path(), model(1, 1, 2), "toy");
  EXPECT_EQ(kind_of([&] { TraceWriter second(dir.path(), model(1, 1, 2), "toy"); }), ErrorKind::IoFailure);
}

TEST(ValidateTraceDir, WrittenDirectoryPasses) {
  TempDir dir("valid");
  Rng rng(5);
  write_trace(manifest_for(model(2, 3, 5)), random_traces(rng, 10, 2, 3, 5), dir.path());
  auto report = validate_trace_dir(dir.path(), true);
  EXPECT_TRUE(report.passed()) << report.to_json().dump(2);
  EXPECT_EQ(report.sentences.size(), 10u);
}

TEST(ValidateTraceDir, FlagsCorruptedAttentionRow) {
  TempDir dir("corrupt_row");
  Rng rng(6);
  auto traces = random_traces(rng, 4, 2, 2, 4);
  write_trace(manifest_for(model(2, 2, 4)), traces, dir.path());
  const auto& victim = traces[2];
  const auto file = dir.path() / "sentences/p1#a.bin";
  std::string bytes = io::read_file(file);
  const float bumped = victim.attention[0] + 0.2F;
  std::memcpy(bytes.data() + victim.hidden.size() * 4, &bumped, 4);
  io::write_file_atomic(file, bytes);

  auto report = validate_trace_dir(dir.path());
  EXPECT_FALSE(report.passed());
  EXPECT_EQ(report.n_failed(), 1u);
  const auto* s = report.find("p1#a");
  ASSERT_NE(s, nullptr);
  EXPECT_NE(std::find(s->reasons.begin(), s->reasons.end(), "row-sum violation"), s->reasons.end());
}

TEST(ValidateTraceDir, StrictModeFlagsOrphansAndSpecialSpans) {
  TempDir dir("strict");
  Rng rng(7);
  auto traces = random_traces(rng, 2, 1, 1, 3);
  traces[0].header.target_span = {0, 1};  // covers [CLS]
  if (traces[0].header.cue_span.overlaps(traces[0].header.target_span)) traces[0].header.cue_span = {1, 2};
  write_trace(manifest_for(model(1, 1, 3)), traces, dir.path());
  io::write_file_atomic(dir.path() / "sentences/stray.bin", "xxxx");
  EXPECT_TRUE(validate_trace_dir(dir.path(), false).passed());
  auto strict = validate_trace_dir(dir.path(), true);
  EXPECT_FALSE(strict.passed());
  EXPECT_EQ(strict.directory_errors.size(), 1u);
  EXPECT_FALSE(strict.find("p0#a")->ok());
}

TEST(ValidateTraceDir, AgreesWithIndependentRescanOnFuzzedDirectories) {
  Rng rng(8);
  for (int rep = 0; rep < 40; ++rep) {
    TempDir dir("fuzz");
    const std::size_t layers = 1 + rng.below(3);
    const std::size_t heads = 1 + rng.below(3);
    const std::size_t dim = 1 + rng.below(6);
    auto traces = random_traces(rng, 6, layers, heads, dim);
    write_trace(manifest_for(model(layers, heads, dim)), traces, dir.path());

    nlohmann::json manifest = nlohmann::json::parse(io::read_file(dir.path() / "manifest.json"));
    for (auto& entry : manifest.at("sentences")) {
      const auto file = dir.path() / entry.at("file").get<std::string>();
      std::string bytes = io::read_file(file);
      switch (rng.below(8)) {
        case 0: {  // random byte
          bytes[rng.below(bytes.size())] = static_cast<char>(rng.below(256));
          break;
        }
        case 1: {  // non-finite value
          const float inf = std::numeric_limits<float>::infinity();
          std::memcpy(bytes.data() + 4 * rng.below(bytes.size() / 4), &inf, 4);
          break;
        }
        case 2:
          bytes.resize(bytes.size() - 4 * (1 + rng.below(3)));
          break;
        case 3: {  // negative weight that still sums to one
          const std::size_t offset = entry.at("byte_offsets").at("attention");
          float a = 0, b = 0;
          std::memcpy(&a, bytes.data() + offset, 4);
          std::memcpy(&b, bytes.data() + offset + 4, 4);
          a -= 1.5F;
          b += 1.5F;
          std::memcpy(bytes.data() + offset, &a, 4);
          std::memcpy(bytes.data() + offset + 4, &b, 4);
          break;
        }
        case 4:
          entry["target_span"] = entry.at("cue_span");
          break;
        default:
          break;
      }
      io::write_file_atomic(file, bytes);
    }
    io::write_file_atomic(dir.path() / "manifest.json", manifest.dump(2));

    auto report = validate_trace_dir(dir.path());
    ASSERT_TRUE(report.directory_errors.empty());
    for (const auto& entry : manifest.at("sentences")) {
      const auto* s = report.find(entry.at("sentence_uid").get<std::string>());
      ASSERT_NE(s, nullptr);
      EXPECT_EQ(s->ok(), rescan_ok(dir.path(), entry, manifest.at("model"))) << entry.dump();
    }
  }
}
