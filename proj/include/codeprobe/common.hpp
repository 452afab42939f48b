#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace codeprobe {

/// Half-open byte interval [start, end) into a source buffer.
struct ByteRange {
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  constexpr std::uint32_t length() const { return end - start; }
  constexpr bool empty() const { return end <= start; }
  constexpr bool contains(const ByteRange& other) const {
    return start <= other.start && other.end <= end;
  }
  constexpr bool overlaps(const ByteRange& other) const {
    return start < other.end && other.start < end;
  }
  friend constexpr auto operator<=>(const ByteRange&, const ByteRange&) = default;
};

enum class Language { Java, C };

std::string_view to_string(Language lang);
Language language_from_string(std::string_view name);

// Error taxonomy. Each pipeline stage throws the most specific kind.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error { using Error::Error; };
struct ImportError : Error { using Error::Error; };
struct UnsupportedConstruct : Error { using Error::Error; };
struct AlignmentError : Error { using Error::Error; };
struct StoreError : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };
struct InsufficientSamples : Error { using Error::Error; };
struct EmptySpan : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

/// 64-bit FNV-1a; stable across platforms, used for seed derivation and
/// content addressing.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Mixes a base seed with a textual tag into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// Seeded generator whose integer and real draws are bit-reproducible across
/// standard library implementations (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, n); n > 0.
  std::size_t uniform_index(std::size_t n);
  /// Uniform in [0, 1).
  double uniform01();
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);
/// Writes "warning: <message>" to stderr unless warnings are silenced.
void log_warning(std::string_view message);
void set_warnings_enabled(bool enabled);

std::string lowercase(std::string_view text);
/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);
/// Fixed-precision decimal rendering used by every report writer.
std::string format_fixed(double value, int digits = 6);

}  // namespace codeprobe
