#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "colortrigger/feature_io.hpp"
#include "oracles.hpp"

using namespace colortrigger;

namespace {

errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return errc::io_error;
}

std::string header(std::uint32_t version, std::uint64_t frames, std::uint32_t dim) {
  std::string out = "CTFS";
  auto put = [&](auto v) {
    for (std::size_t i = 0; i < sizeof v; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put(version);
  put(frames);
  put(dim);
  return out;
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("colortrigger_fio_" + name);
}

}  // namespace

TEST(DecodeCtfs, NormalizesRows) {
  std::string bytes = header(1, 2, 3);
  for (float f : {1.f, 0.f, 0.f, 0.f, 2.f, 0.f}) put_f32(bytes, f);
  const auto s = decode_ctfs(bytes);
  ASSERT_EQ(s.frames.size(), 2u);
  EXPECT_EQ(s.dim, 3u);
  EXPECT_EQ(s.frames[0].f, (Vector{1, 0, 0}));
  EXPECT_EQ(s.frames[1].f, (Vector{0, 1, 0}));
  EXPECT_EQ(s.frames[1].t, 1u);
}

TEST(DecodeCtfs, TypedStructuralFailures) {
  EXPECT_EQ(code_of([] { decode_ctfs(header(1, 0, 8).substr(0, 19)); }), errc::truncated_file);
  EXPECT_EQ(code_of([] { decode_ctfs("XTFS" + header(1, 0, 8).substr(4)); }), errc::bad_magic);
  EXPECT_EQ(code_of([] { decode_ctfs(header(2, 0, 8)); }), errc::version_mismatch);
  EXPECT_EQ(code_of([] { decode_ctfs(header(1, 2, 2) + std::string(12, '\0')); }), errc::truncated_file);
  EXPECT_EQ(code_of([] { decode_ctfs(header(1, 1, 2) + std::string(12, '\0')); }), errc::dimension_mismatch);
  EXPECT_EQ(code_of([] { decode_ctfs(header(1, 1, 0)); }), errc::dimension_mismatch);
  std::string zero_row = header(1, 1, 2);
  put_f32(zero_row, 0.f);
  put_f32(zero_row, 0.f);
  EXPECT_EQ(code_of([&] { decode_ctfs(zero_row); }), errc::zero_vector);
}

TEST(DecodeJsonl, DimensionChangeRejected) {
  const std::string text = R"({"t":0,"f":[1,0,0]})"
                           "\n"
                           R"({"t":1,"f":[1,0,0,0]})"
                           "\n";
  EXPECT_EQ(code_of([&] { decode_jsonl(text); }), errc::dimension_mismatch);
}

TEST(DecodeJsonl, Failures) {
  EXPECT_EQ(code_of([] { decode_jsonl("{not json}\n"); }), errc::parse_error);
  EXPECT_EQ(code_of([] { decode_jsonl(R"({"t":0})"); }), errc::parse_error);
  EXPECT_EQ(code_of([] { decode_jsonl("{\"t\":3,\"f\":[1]}\n{\"t\":3,\"f\":[1]}\n"); }),
            errc::non_monotonic_timestep);
}

TEST(DecodeJsonl, KeepsTimestampsSkipsBlankLines) {
  const auto s = decode_jsonl("{\"t\":4,\"f\":[0,3]}\n\n{\"t\":9,\"f\":[2,0]}\n");
  ASSERT_EQ(s.frames.size(), 2u);
  EXPECT_EQ(s.frames[0].t, 4u);
  EXPECT_EQ(s.frames[1].t, 9u);
  EXPECT_EQ(s.frames[0].f, (Vector{0, 1}));
}

TEST(WriteFeatures, SizeFormula) {
  const auto path = temp_path("size.ctfs").string();
  EXPECT_EQ(write_features({8, {}}, path, FeatureFormat::binary), 20u);
  EXPECT_EQ(std::filesystem::file_size(path), 20u);
  std::mt19937_64 rng(61);
  FeatureStream s{16, {}};
  for (Timestep t = 0; t < 5; ++t) s.frames.push_back({t, normalize_feature(oracle::random_vector(rng, 16))});
  EXPECT_EQ(write_features(s, path, FeatureFormat::binary), 340u);
  EXPECT_EQ(std::filesystem::file_size(path), 340u);
  std::filesystem::remove(path);
}

TEST(EncodeCtfs, RequiresDenseTimesteps) {
  FeatureStream s{2, {{0, {1, 0}}, {2, {0, 1}}}};
  EXPECT_THROW(encode_ctfs(s), error);
}

TEST(EncodeCtfs, BitExactAndRoundTrips) {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t frames = rng() % 20, d = 1 + rng() % 24;
    FeatureStream s{d, {}};
    for (Timestep t = 0; t < frames; ++t) s.frames.push_back({t, normalize_feature(oracle::random_vector(rng, d))});
    const auto bytes = encode_ctfs(s);
    ASSERT_EQ(bytes, encode_ctfs(s));
    ASSERT_EQ(bytes.size(), 20 + 4 * frames * d);
    const auto back = decode_ctfs(bytes);
    ASSERT_EQ(back.dim, d);
    ASSERT_EQ(back.frames.size(), frames);
    for (std::size_t i = 0; i < frames; ++i) {
      EXPECT_EQ(back.frames[i].t, i);
      for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(back.frames[i].f[k], s.frames[i].f[k], 1e-6);
    }
    const auto via_json = decode_jsonl(encode_jsonl(s));
    EXPECT_EQ(via_json.frames.size(), frames);
    for (std::size_t i = 0; i < frames; ++i) {
      for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(via_json.frames[i].f[k], s.frames[i].f[k], 1e-12);
    }
  }
}

TEST(ReadFeatures, FileRoundTripBothFormats) {
  const auto syn = synth_scenes({2, 5, {}, 8, 0.05, 1});
  for (auto fmt : {FeatureFormat::binary, FeatureFormat::jsonl}) {
    const auto path = temp_path(fmt == FeatureFormat::binary ? "rt.ctfs" : "rt.jsonl").string();
    write_features(syn.stream, path, fmt);
    const auto back = read_features(path, fmt);
    EXPECT_EQ(back.frames.size(), 10u);
    EXPECT_EQ(back.dim, 8u);
    std::filesystem::remove(path);
  }
  EXPECT_EQ(code_of([] { read_features(temp_path("missing").string(), FeatureFormat::binary); }),
            errc::io_error);
}

TEST(SynthScenes, Structure) {
  const auto syn = synth_scenes({3, 20, {}, 32, 0.05, 7});
  EXPECT_EQ(syn.stream.frames.size(), 60u);
  EXPECT_EQ(syn.boundaries, (std::vector<Timestep>{20, 40}));
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(syn.stream.frames[i].t, i);
}

TEST(SynthScenes, Deterministic) {
  const SceneSpec spec{3, 20, {}, 32, 0.05, 7};
  EXPECT_EQ(synth_scenes(spec).stream, synth_scenes(spec).stream);
  EXPECT_EQ(encode_ctfs(synth_scenes(spec).stream), encode_ctfs(synth_scenes(spec).stream));
}

TEST(SynthScenes, ZeroNoiseScenesAreConstant) {
  const auto syn = synth_scenes({3, 6, {}, 16, 0.0, 2});
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t i = 1; i < 6; ++i) EXPECT_EQ(syn.stream.frames[6 * s + i].f, syn.stream.frames[6 * s].f);
  }
  EXPECT_LT(dot(syn.stream.frames[0].f, syn.stream.frames[6].f), 1.0);
}

TEST(SynthScenes, ExplicitLengths) {
  SceneSpec spec;
  spec.scene_lengths = {4, 1, 7};
  const auto syn = synth_scenes(spec);
  EXPECT_EQ(syn.stream.frames.size(), 12u);
  EXPECT_EQ(syn.boundaries, (std::vector<Timestep>{4, 5}));
}

TEST(SynthScenes, WithinSceneCloserThanAcross) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const double sigma = 0.02 * static_cast<double>(1 + seed % 5);
    const std::size_t d = 16 + 8 * (seed % 4);
    const auto syn = synth_scenes({4, 15, {}, d, sigma, seed});
    const auto& f = syn.stream.frames;
    double within = 0.0, across = 0.0;
    std::size_t nw = 0, na = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      for (std::size_t j = i + 1; j < f.size(); ++j) {
        const double c = dot(f[i].f, f[j].f);
        if (i / 15 == j / 15) {
          within += c;
          ++nw;
        } else {
          across += c;
          ++na;
        }
      }
    }
    EXPECT_GT(within / nw, across / na) << "seed " << seed;
  }
}

TEST(SynthScenes, RejectsBadSpecs) {
  EXPECT_EQ(code_of([] { synth_scenes({0, 20, {}, 32, 0.05, 0}); }), errc::invalid_config);
  EXPECT_EQ(code_of([] { synth_scenes({3, 20, {}, 0, 0.05, 0}); }), errc::invalid_config);
  EXPECT_EQ(code_of([] { synth_scenes({3, 20, {}, 32, -1.0, 0}); }), errc::invalid_config);
  // Three pairwise-separated directions cannot fit on a line.
  EXPECT_EQ(code_of([] { synth_scenes({3, 2, {}, 1, 0.0, 0}); }), errc::invalid_config);
}

TEST(FeatureFormat, Parse) {
  EXPECT_EQ(parse_feature_format("ctfs"), FeatureFormat::binary);
  EXPECT_EQ(parse_feature_format("jsonl"), FeatureFormat::jsonl);
  EXPECT_THROW(parse_feature_format("csv"), error);
}
