#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "codeprobe/align.hpp"

namespace codeprobe {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-source manifest entry.
struct StoreSource {
  TokenizedSource tokens;
  std::size_t T = 0;
  std::map<std::string, std::string> checksums;  // file name -> crc32 hex
};

struct Manifest {
  std::string model;
  int layers = 0;      // L; hidden states exist for 0..L, attention for 1..L
  int hidden_dim = 0;  // D
  int heads = 0;       // H
  std::string dtype = "f32le";
  /// For encoder-decoder stacks: number of leading layers that belong to the
  /// encoder.
  std::optional<int> encoder_layers;
  std::vector<StoreSource> sources;

  const StoreSource& source(std::string_view source_id) const;
  std::string to_json() const;
  static Manifest from_json(std::string_view text);
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr double kRowSumTolerance = 1e-4;

std::string hidden_file_name(int layer);
std::string attention_file_name(int layer);

/// Read-only view of a store directory. Reads verify size and checksum of
/// every tensor file; attention reads additionally check row sums.
class RepresentationStore {
 public:
  static RepresentationStore open(const std::filesystem::path& dir);

  const Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& path() const { return dir_; }
  bool has_source(std::string_view source_id) const;
  const TokenizedSource& tokens(std::string_view source_id) const;

  /// [T x D] hidden states of `layer` in 0..L.
  RowMatrix<float> read_layer(std::string_view source_id, int layer) const;
  /// [T x T] attention of one head of `layer` in 1..L.
  RowMatrix<float> read_attention(std::string_view source_id, int layer, int head) const;
  /// All H heads of a layer from a single file read.
  std::vector<RowMatrix<float>> read_attention_heads(std::string_view source_id, int layer) const;

  /// Reads every tensor once; throws StoreError on the first problem.
  void validate() const;

 private:
  std::size_t index_of(std::string_view source_id) const;
  std::vector<float> read_tensor(const StoreSource& src, const std::string& name, std::size_t count) const;

  std::filesystem::path dir_;
  Manifest manifest_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Creates a store directory. Used by tests, the synthetic store generator and
/// any C++ producer; the primary pipeline never writes to an existing store.
class StoreWriter {
 public:
  StoreWriter(std::filesystem::path dir, std::string model, int layers, int hidden_dim, int heads);

  void set_encoder_layers(int n) { manifest_.encoder_layers = n; }
  /// hidden: L+1 matrices [T x D]; attention: L layers of H matrices [T x T].
  void add_source(const TokenizedSource& tokens, const std::vector<RowMatrix<float>>& hidden,
                  const std::vector<std::vector<RowMatrix<float>>>& attention);
  /// Writes the manifest; the store is complete afterwards.
  void finish();

 private:
  std::string write_tensor(const std::filesystem::path& file, const float* data, std::size_t count);

  std::filesystem::path dir_;
  Manifest manifest_;
};

std::uint32_t crc32_of(std::string_view bytes);

/// Hash over relative paths and contents of every regular file below `dir`.
std::string directory_content_hash(const std::filesystem::path& dir);

}  // namespace codeprobe
