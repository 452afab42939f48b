#include "codeprobe/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <json.hpp>
#include <zlib.h>

namespace codeprobe {

static_assert(std::endian::native == std::endian::little, "store I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace fs = std::filesystem;
using nlohmann::json;

std::string hidden_file_name(int layer) { return "h" + std::to_string(layer) + ".bin"; }
std::string attention_file_name(int layer) { return "a" + std::to_string(layer) + ".bin"; }

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset), static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

}  // namespace

const StoreSource& Manifest::source(std::string_view source_id) const {
  for (const auto& s : sources) {
    if (s.tokens.source_id == source_id) return s;
  }
  throw StoreError("source '" + std::string(source_id) + "' is not in the store");
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["layers"] = layers;
  j["hidden_dim"] = hidden_dim;
  j["heads"] = heads;
  j["dtype"] = dtype;
  if (encoder_layers) j["encoder_layers"] = *encoder_layers;
  j["sources"] = nlohmann::ordered_json::array();
  for (const auto& s : sources) {
    nlohmann::ordered_json e;
    e["source_id"] = s.tokens.source_id;
    e["tokens"] = nlohmann::ordered_json::array();
    for (const auto& t : s.tokens.tokens) {
      e["tokens"].push_back({{"start", t.range.start}, {"end", t.range.end}, {"text", t.text}});
    }
    e["T"] = s.T;
    e["checksums"] = nlohmann::ordered_json::object();
    for (const auto& [file, sum] : s.checksums) e["checksums"][file] = sum;
    j["sources"].push_back(std::move(e));
  }
  return j.dump(1) + "\n";
}

Manifest Manifest::from_json(std::string_view text) {
  Manifest m;
  try {
    const json j = json::parse(text);
    m.model = j.at("model").get<std::string>();
    m.layers = j.at("layers").get<int>();
    m.hidden_dim = j.at("hidden_dim").get<int>();
    m.heads = j.at("heads").get<int>();
    m.dtype = j.at("dtype").get<std::string>();
    if (j.contains("encoder_layers")) m.encoder_layers = j["encoder_layers"].get<int>();
    for (const auto& e : j.at("sources")) {
      StoreSource s;
      s.tokens.source_id = e.at("source_id").get<std::string>();
      for (const auto& t : e.at("tokens")) {
        s.tokens.tokens.push_back(
            {{t.at("start").get<std::uint32_t>(), t.at("end").get<std::uint32_t>()}, t.at("text").get<std::string>()});
      }
      s.T = e.at("T").get<std::size_t>();
      for (const auto& [file, sum] : e.at("checksums").items()) s.checksums[file] = sum.get<std::string>();
      m.sources.push_back(std::move(s));
    }
  } catch (const json::exception& ex) {
    throw StoreError(std::string("malformed manifest: ") + ex.what());
  }
  if (m.dtype != "f32le") throw StoreError("unsupported dtype '" + m.dtype + "'");
  if (m.layers < 1 || m.hidden_dim < 1 || m.heads < 1) throw StoreError("manifest dimensions must be positive");
  for (const auto& s : m.sources) {
    if (s.T != s.tokens.size()) {
      throw StoreError(s.tokens.source_id + ": T=" + std::to_string(s.T) + " but " +
                       std::to_string(s.tokens.size()) + " tokens listed");
    }
    try {
      s.tokens.validate();
    } catch (const AlignmentError& ex) {
      throw StoreError(ex.what());
    }
  }
  return m;
}

RepresentationStore RepresentationStore::open(const fs::path& dir) {
  RepresentationStore store;
  store.dir_ = dir;
  const fs::path manifest_path = dir / kManifestName;
  if (!fs::is_regular_file(manifest_path)) throw StoreError("no manifest at " + manifest_path.string());
  store.manifest_ = Manifest::from_json(read_file(manifest_path));
  for (std::size_t i = 0; i < store.manifest_.sources.size(); ++i) {
    const auto& id = store.manifest_.sources[i].tokens.source_id;
    if (!store.index_.emplace(id, i).second) throw StoreError("duplicate source id '" + id + "'");
  }
  return store;
}

std::size_t RepresentationStore::index_of(std::string_view source_id) const {
  auto it = index_.find(source_id);
  if (it == index_.end()) throw StoreError("source '" + std::string(source_id) + "' is not in the store");
  return it->second;
}

bool RepresentationStore::has_source(std::string_view source_id) const {
  return index_.find(source_id) != index_.end();
}

const TokenizedSource& RepresentationStore::tokens(std::string_view source_id) const {
  return manifest_.sources[index_of(source_id)].tokens;
}

std::vector<float> RepresentationStore::read_tensor(const StoreSource& src, const std::string& name,
                                                    std::size_t count) const {
  const fs::path file = dir_ / src.tokens.source_id / name;
  const std::string where = src.tokens.source_id + "/" + name;
  std::string bytes;
  try {
    bytes = read_file(file);
  } catch (const Error&) {
    throw StoreError("missing tensor file " + where);
  }
  if (bytes.size() != count * sizeof(float)) {
    throw StoreError(where + ": expected " + std::to_string(count * sizeof(float)) + " bytes, found " +
                     std::to_string(bytes.size()));
  }
  auto sum = src.checksums.find(name);
  if (sum == src.checksums.end()) throw StoreError(where + ": no checksum in manifest");
  if (sum->second != hex32(crc32_of(bytes))) throw StoreError(where + ": checksum mismatch");
  std::vector<float> values(count);
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

RowMatrix<float> RepresentationStore::read_layer(std::string_view source_id, int layer) const {
  if (layer < 0 || layer > manifest_.layers) {
    throw StoreError("layer " + std::to_string(layer) + " outside 0.." + std::to_string(manifest_.layers));
  }
  const auto& src = manifest_.sources[index_of(source_id)];
  const auto T = static_cast<Eigen::Index>(src.T);
  const auto D = static_cast<Eigen::Index>(manifest_.hidden_dim);
  const auto values = read_tensor(src, hidden_file_name(layer), src.T * static_cast<std::size_t>(D));
  return Eigen::Map<const RowMatrix<float>>(values.data(), T, D);
}

std::vector<RowMatrix<float>> RepresentationStore::read_attention_heads(std::string_view source_id,
                                                                         int layer) const {
  if (layer < 1 || layer > manifest_.layers) {
    throw StoreError("attention layer " + std::to_string(layer) + " outside 1.." +
                     std::to_string(manifest_.layers));
  }
  const auto& src = manifest_.sources[index_of(source_id)];
  const auto T = static_cast<Eigen::Index>(src.T);
  const std::size_t block = src.T * src.T;
  const auto values = read_tensor(src, attention_file_name(layer), block * static_cast<std::size_t>(manifest_.heads));
  std::vector<RowMatrix<float>> heads;
  heads.reserve(static_cast<std::size_t>(manifest_.heads));
  for (int h = 0; h < manifest_.heads; ++h) {
    RowMatrix<float> m = Eigen::Map<const RowMatrix<float>>(values.data() + block * static_cast<std::size_t>(h), T, T);
    for (Eigen::Index r = 0; r < T; ++r) {
      const double s = m.row(r).cast<double>().sum();
      if (!(std::abs(s - 1.0) <= kRowSumTolerance)) {
        throw StoreError(std::string(source_id) + "/" + attention_file_name(layer) + ": head " +
                         std::to_string(h) + " row " + std::to_string(r) + " sums to " + std::to_string(s));
      }
    }
    heads.push_back(std::move(m));
  }
  return heads;
}

RowMatrix<float> RepresentationStore::read_attention(std::string_view source_id, int layer, int head) const {
  if (head < 0 || head >= manifest_.heads) throw StoreError("head " + std::to_string(head) + " out of range");
  return read_attention_heads(source_id, layer)[static_cast<std::size_t>(head)];
}

void RepresentationStore::validate() const {
  for (const auto& src : manifest_.sources) {
    for (int l = 0; l <= manifest_.layers; ++l) read_layer(src.tokens.source_id, l);
    for (int l = 1; l <= manifest_.layers; ++l) read_attention_heads(src.tokens.source_id, l);
  }
}

StoreWriter::StoreWriter(fs::path dir, std::string model, int layers, int hidden_dim, int heads)
    : dir_(std::move(dir)) {
  if (fs::exists(dir_ / kManifestName)) throw StoreError("refusing to overwrite store at " + dir_.string());
  manifest_.model = std::move(model);
  manifest_.layers = layers;
  manifest_.hidden_dim = hidden_dim;
  manifest_.heads = heads;
  fs::create_directories(dir_);
}

std::string StoreWriter::write_tensor(const fs::path& file, const float* data, std::size_t count) {
  std::string bytes(count * sizeof(float), '\0');
  std::memcpy(bytes.data(), data, bytes.size());
  write_file(file, bytes);
  return hex32(crc32_of(bytes));
}

void StoreWriter::add_source(const TokenizedSource& tokens, const std::vector<RowMatrix<float>>& hidden,
                             const std::vector<std::vector<RowMatrix<float>>>& attention) {
  tokens.validate();
  const auto T = static_cast<Eigen::Index>(tokens.size());
  if (hidden.size() != static_cast<std::size_t>(manifest_.layers + 1)) throw StoreError("need L+1 hidden layers");
  if (attention.size() != static_cast<std::size_t>(manifest_.layers)) throw StoreError("need L attention layers");
  StoreSource src{tokens, tokens.size(), {}};
  const fs::path sdir = dir_ / tokens.source_id;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const auto& m = hidden[l];
    if (m.rows() != T || m.cols() != manifest_.hidden_dim) throw StoreError("hidden matrix shape mismatch");
    const auto name = hidden_file_name(static_cast<int>(l));
    src.checksums[name] = write_tensor(sdir / name, m.data(), static_cast<std::size_t>(m.size()));
  }
  for (std::size_t l = 0; l < attention.size(); ++l) {
    if (attention[l].size() != static_cast<std::size_t>(manifest_.heads)) throw StoreError("head count mismatch");
    std::vector<float> block;
    block.reserve(static_cast<std::size_t>(manifest_.heads * T * T));
    for (const auto& a : attention[l]) {
      if (a.rows() != T || a.cols() != T) throw StoreError("attention matrix shape mismatch");
      block.insert(block.end(), a.data(), a.data() + a.size());
    }
    const auto name = attention_file_name(static_cast<int>(l + 1));
    src.checksums[name] = write_tensor(sdir / name, block.data(), block.size());
  }
  manifest_.sources.push_back(std::move(src));
}

void StoreWriter::finish() { write_file(dir_ / kManifestName, manifest_.to_json()); }

std::string directory_content_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a64("");
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, dir).generic_string();
    h = fnv1a64(rel, h);
    h = fnv1a64(read_file(f), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace codeprobe
