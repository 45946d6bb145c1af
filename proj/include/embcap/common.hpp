#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace embcap {

// ---------------------------------------------------------------------------
// Errors. Each failure class the tools distinguish gets its own type so the
// CLI can map it to an exit code.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scene specification cannot be realized (bounds too small, too much object volume).
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Agent pose is inside an occupied voxel column or out of bounds.
class PoseError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a precondition (shape mismatch, misaligned inputs, empty tally).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NoPathError : public Error {
 public:
  using Error::Error;
};

class NoGoalError : public Error {
 public:
  using Error::Error;
};

/// No frontier left: every reachable region of the map is known.
class ExplorationComplete : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Remote service (LLM, captioner, embedder) unreachable or returned garbage.
class TransportError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class DegenerateCorpusError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Small geometry helpers.
// ---------------------------------------------------------------------------

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

/// Integer voxel coordinate. Ordered lexicographically (x, y, z) so maps keyed
/// on it iterate deterministically.
struct VoxelKey {
  int x = 0;
  int y = 0;
  int z = 0;

  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

/// Grid cell in a K x K top-down map. Row follows world y, column world x.
struct Cell {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle into [0, 2*pi).
inline double normalize_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Random numbers. SplitMix64 state with hand-rolled distributions; the std::
// distributions are not bit-for-bit portable across standard libraries and
// every artifact here must be reproducible from a seed.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (no cached second variate).
  double normal();

  /// Derives an independent child stream; used to give each phase or
  /// episode its own generator.
  Rng split(std::uint64_t salt);

 private:
  std::uint64_t state_;
};

/// 64-bit FNV-1a. Used for hashing tokens into embedding buckets.
std::uint64_t fnv1a64(std::string_view s);

/// Lowercase and split on any non-alphanumeric ASCII byte.
std::vector<std::string> tokenize(std::string_view text);

std::string to_lower(std::string_view s);

/// Collapses runs of whitespace to single spaces and trims both ends.
std::string collapse_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace embcap
