#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "colortrigger/errors.hpp"
#include "colortrigger/window_affinity.hpp"

namespace colortrigger {

/// Frames of one stream plus its dimension (known even when the stream is empty).
struct FeatureStream {
  std::size_t dim = 0;
  std::vector<FrameFeature> frames;

  friend bool operator==(const FeatureStream&, const FeatureStream&) = default;
};

enum class FeatureFormat { binary, jsonl };

inline FeatureFormat parse_feature_format(std::string_view s) {
  if (s == "binary" || s == "ctfs") return FeatureFormat::binary;
  if (s == "jsonl") return FeatureFormat::jsonl;
  throw error(errc::invalid_config, "unknown feature format '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// CTFS binary layout (all little-endian):
//   0  char[4]  "CTFS"
//   4  u32      version = 1
//   8  u64      frame count T
//  16  u32      dimension d
//  20  f32[T*d] row-major, one row per frame, timesteps 0..T-1

inline constexpr std::array<char, 4> kCtfsMagic = {'C', 'T', 'F', 'S'};
inline constexpr std::uint32_t kCtfsVersion = 1;
inline constexpr std::size_t kCtfsHeaderBytes = 20;

namespace detail {

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFFu));
  }
}

template <typename U>
U get_le(std::string_view in, std::size_t offset) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return value;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::io_error, "cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw error(errc::io_error, "read failed for '" + path + "'");
  return bytes;
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error(errc::io_error, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw error(errc::io_error, "write failed for '" + path + "'");
}

}  // namespace detail

/// Serializes to CTFS. Binary rows carry no timestep, so the stream must be
/// indexed 0..T-1.
inline std::string encode_ctfs(const FeatureStream& stream) {
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    const auto& fr = stream.frames[i];
    if (fr.t != i) {
      throw error(errc::invalid_config, "CTFS stores implicit timesteps; frame " + std::to_string(i) +
                                            " has t=" + std::to_string(fr.t));
    }
    if (fr.f.size() != stream.dim) {
      throw error(errc::dimension_mismatch, "frame " + std::to_string(i) + " has dim " +
                                                std::to_string(fr.f.size()));
    }
  }
  if (stream.dim > UINT32_MAX) throw error(errc::dimension_mismatch, "dimension exceeds u32");

  std::string out;
  out.reserve(kCtfsHeaderBytes + 4 * stream.frames.size() * stream.dim);
  out.append(kCtfsMagic.data(), kCtfsMagic.size());
  detail::put_le<std::uint32_t>(out, kCtfsVersion);
  detail::put_le<std::uint64_t>(out, stream.frames.size());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.dim));
  for (const auto& fr : stream.frames) {
    for (double x : fr.f) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

/// Parses CTFS bytes; every row is normalized on the way in.
inline FeatureStream decode_ctfs(std::string_view bytes) {
  if (bytes.size() < kCtfsHeaderBytes) {
    throw error(errc::truncated_file, "header needs " + std::to_string(kCtfsHeaderBytes) +
                                          " bytes, have " + std::to_string(bytes.size()));
  }
  if (!std::equal(kCtfsMagic.begin(), kCtfsMagic.end(), bytes.begin())) {
    throw error(errc::bad_magic, "expected \"CTFS\"");
  }
  const auto version = detail::get_le<std::uint32_t>(bytes, 4);
  if (version != kCtfsVersion) {
    throw error(errc::version_mismatch, "unsupported version " + std::to_string(version));
  }
  const auto frames = detail::get_le<std::uint64_t>(bytes, 8);
  const auto dim = detail::get_le<std::uint32_t>(bytes, 16);
  if (frames > 0 && dim == 0) throw error(errc::dimension_mismatch, "zero dimension with frames present");

  const std::size_t payload = bytes.size() - kCtfsHeaderBytes;
  // Compare in floats-per-row units to avoid overflow on hostile headers.
  const std::size_t floats_available = payload / 4;
  const bool fits = dim == 0 || frames <= floats_available / dim;
  if (!fits || payload < 4 * frames * dim) {
    throw error(errc::truncated_file, "payload of " + std::to_string(payload) + " bytes is short for T=" +
                                          std::to_string(frames) + ", d=" + std::to_string(dim));
  }
  if (payload != 4 * frames * dim) {
    throw error(errc::dimension_mismatch, "payload of " + std::to_string(payload) +
                                              " bytes exceeds T*d*4 for T=" + std::to_string(frames) +
                                              ", d=" + std::to_string(dim));
  }

  FeatureStream stream;
  stream.dim = dim;
  stream.frames.reserve(frames);
  std::vector<float> row(dim);
  std::size_t offset = kCtfsHeaderBytes;
  for (std::uint64_t t = 0; t < frames; ++t) {
    for (std::uint32_t k = 0; k < dim; ++k, offset += 4) {
      row[k] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, offset));
    }
    stream.frames.push_back(FrameFeature{t, normalize_feature(std::span<const float>(row))});
  }
  return stream;
}

inline std::string encode_jsonl(const FeatureStream& stream) {
  std::string out;
  for (const auto& fr : stream.frames) {
    if (fr.f.size() != stream.dim) {
      throw error(errc::dimension_mismatch, "frame t=" + std::to_string(fr.t) + " has dim " +
                                                std::to_string(fr.f.size()));
    }
    nlohmann::json line = {{"t", fr.t}, {"f", fr.f}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

/// Parses {"t": int, "f": [real...]} lines; blank lines are skipped.
inline FeatureStream decode_jsonl(std::string_view text) {
  FeatureStream stream;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw error(errc::parse_error, where + ": not a JSON object");
    const auto t_it = obj.find("t");
    const auto f_it = obj.find("f");
    if (t_it == obj.end() || !t_it->is_number_unsigned()) {
      throw error(errc::parse_error, where + ": \"t\" must be a non-negative integer");
    }
    if (f_it == obj.end() || !f_it->is_array()) throw error(errc::parse_error, where + ": \"f\" must be an array");

    Vector raw;
    raw.reserve(f_it->size());
    for (const auto& x : *f_it) {
      if (!x.is_number()) throw error(errc::parse_error, where + ": non-numeric feature component");
      raw.push_back(x.get<double>());
    }
    if (raw.empty()) throw error(errc::dimension_mismatch, where + ": empty feature");
    if (stream.frames.empty()) {
      stream.dim = raw.size();
    } else if (raw.size() != stream.dim) {
      throw error(errc::dimension_mismatch, where + ": dim " + std::to_string(raw.size()) +
                                                ", expected " + std::to_string(stream.dim));
    }
    const auto t = t_it->get<Timestep>();
    if (!stream.frames.empty() && t <= stream.frames.back().t) {
      throw error(errc::non_monotonic_timestep, where + ": t=" + std::to_string(t) +
                                                    " after t=" + std::to_string(stream.frames.back().t));
    }
    stream.frames.push_back(FrameFeature{t, normalize_feature(raw)});
  }
  return stream;
}

inline FeatureStream read_features(const std::string& path, FeatureFormat format) {
  const std::string bytes = detail::read_file(path);
  return format == FeatureFormat::binary ? decode_ctfs(bytes) : decode_jsonl(bytes);
}

/// Writes the stream and returns the number of bytes written.
inline std::size_t write_features(const FeatureStream& stream, const std::string& path,
                                  FeatureFormat format) {
  const std::string bytes = format == FeatureFormat::binary ? encode_ctfs(stream) : encode_jsonl(stream);
  detail::write_file(path, bytes);
  return bytes.size();
}

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SceneSpec {
  std::size_t num_scenes = 3;
  std::size_t frames_per_scene = 20;
  /// Explicit per-scene lengths; overrides num_scenes/frames_per_scene when set.
  std::vector<std::size_t> scene_lengths;
  std::size_t dim = 32;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  std::vector<std::size_t> lengths() const {
    return scene_lengths.empty() ? std::vector<std::size_t>(num_scenes, frames_per_scene) : scene_lengths;
  }
};

struct SyntheticStream {
  FeatureStream stream;
  std::vector<Timestep> boundaries;  // first timestep of every scene but the first
};

inline constexpr double kMaxAnchorCosine = 0.5;

/// Piecewise-static stream: each scene jitters a random unit anchor with
/// isotropic gaussian noise. Anchors are resampled until every pair has
/// |cos| <= 0.5.
inline SyntheticStream synth_scenes(const SceneSpec& spec) {
  const auto lengths = spec.lengths();
  if (lengths.empty()) throw error(errc::invalid_config, "need at least one scene");
  if (std::any_of(lengths.begin(), lengths.end(), [](std::size_t n) { return n == 0; })) {
    throw error(errc::invalid_config, "scene lengths must be >= 1");
  }
  if (spec.dim < 1) throw error(errc::invalid_config, "dim must be >= 1");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw error(errc::invalid_config, "noise sigma must be >= 0");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_unit = [&] {
    Vector v(spec.dim);
    for (;;) {
      for (double& x : v) x = gauss(rng);
      double sq = 0.0;
      for (double x : v) sq += x * x;
      if (sq > 1e-12) break;
    }
    return normalize_feature(v);
  };

  constexpr int kMaxAttempts = 10000;
  std::vector<Vector> anchors;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == kMaxAttempts) {
        throw error(errc::invalid_config, "cannot place " + std::to_string(lengths.size()) +
                                              " separated anchors in dim " + std::to_string(spec.dim));
      }
      Vector cand = random_unit();
      const bool separated = std::all_of(anchors.begin(), anchors.end(), [&](const Vector& a) {
        return std::abs(dot(a, cand)) <= kMaxAnchorCosine;
      });
      if (separated) {
        anchors.push_back(std::move(cand));
        break;
      }
    }
  }

  SyntheticStream out;
  out.stream.dim = spec.dim;
  Timestep t = 0;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    if (s > 0) out.boundaries.push_back(t);
    for (std::size_t i = 0; i < lengths[s]; ++i, ++t) {
      Vector v = anchors[s];
      if (spec.noise_sigma > 0.0) {
        for (double& x : v) x += spec.noise_sigma * gauss(rng);
      }
      out.stream.frames.push_back(FrameFeature{t, normalize_feature(v)});
    }
  }
  return out;
}

}  // namespace colortrigger
