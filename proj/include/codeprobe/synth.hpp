#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "codeprobe/store.hpp"

namespace codeprobe {

struct SynthStoreOptions {
  std::string model = "synthetic";
  int layers = 4;
  int hidden_dim = 16;
  int heads = 4;
  std::uint64_t seed = 0;
  std::size_t max_piece = 4;
};

/// Writes a store for `sources` (id, text) using subword_tokenize. Hidden
/// states mix a per-token-text embedding with layer-dependent noise and
/// attention rows are softmaxed random scores, so every value is a pure
/// function of the options and the sources.
void synthesize_store(const std::filesystem::path& dir, const std::vector<std::pair<std::string, std::string>>& sources,
                      const SynthStoreOptions& options);

}  // namespace codeprobe
