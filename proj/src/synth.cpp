#include "codeprobe/synth.hpp"

#include <cmath>

namespace codeprobe {

void synthesize_store(const std::filesystem::path& dir, const std::vector<std::pair<std::string, std::string>>& sources,
                      const SynthStoreOptions& options) {
  StoreWriter writer(dir, options.model, options.layers, options.hidden_dim, options.heads);
  for (const auto& [id, text] : sources) {
    const auto tok = subword_tokenize(text, id, options.max_piece);
    const auto T = static_cast<Eigen::Index>(tok.size());
    RowMatrix<float> base(T, options.hidden_dim);
    for (Eigen::Index t = 0; t < T; ++t) {
      Rng rng(derive_seed(options.seed, "token/" + tok.tokens[static_cast<std::size_t>(t)].text));
      for (Eigen::Index d = 0; d < options.hidden_dim; ++d) base(t, d) = static_cast<float>(rng.normal());
    }
    Rng rng(derive_seed(options.seed, "source/" + id));
    std::vector<RowMatrix<float>> hidden;
    RowMatrix<float> current = base;
    hidden.push_back(current);
    for (int l = 1; l <= options.layers; ++l) {
      // each layer blends in the previous token and some noise
      RowMatrix<float> next = current;
      for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index d = 0; d < options.hidden_dim; ++d) {
          const float prev = t > 0 ? current(t - 1, d) : 0.0f;
          next(t, d) = 0.7f * current(t, d) + 0.3f * prev + 0.1f * static_cast<float>(rng.normal());
        }
      }
      current = next;
      hidden.push_back(current);
    }
    std::vector<std::vector<RowMatrix<float>>> attention;
    for (int l = 1; l <= options.layers; ++l) {
      std::vector<RowMatrix<float>> heads;
      for (int h = 0; h < options.heads; ++h) {
        RowMatrix<float> a(T, T);
        for (Eigen::Index r = 0; r < T; ++r) {
          Eigen::VectorXd scores(T);
          for (Eigen::Index c = 0; c < T; ++c) scores(c) = rng.normal();
          scores = (scores.array() - scores.maxCoeff()).exp();
          scores /= scores.sum();
          a.row(r) = scores.cast<float>().transpose();
        }
        heads.push_back(std::move(a));
      }
      attention.push_back(std::move(heads));
    }
    writer.add_source(tok, hidden, attention);
  }
  writer.finish();
}

}  // namespace codeprobe
