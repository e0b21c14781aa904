#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace recpilot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

/// A caller violated a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Index into the unified action/item/special vocabulary.
using Token = std::int32_t;

enum class Action : std::uint8_t { kClick = 0, kCollect = 1, kCart = 2, kPurchase = 3 };

inline constexpr int kNumActions = 4;

std::string_view action_name(Action action);
std::optional<Action> parse_action(std::string_view label);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

// splitmix64 finalizer; used to derive independent RNG substreams.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

// Percent-encodes everything outside [A-Za-z0-9._-] (and a leading dot) so
// an opaque id can be used as a file name.
std::string file_stem(std::string_view id);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions from any
// worker are rethrown on the caller thread (first one wins).
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn);

}  // namespace recpilot

#include "recpilot/detail/parallel.hpp"
