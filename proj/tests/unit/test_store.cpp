#include <doctest.h>

#include <cstring>

#include "codeprobe/store.hpp"
#include "planted.hpp"

using namespace codeprobe;
using namespace codeprobe::testing;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  TokenizedSource tok = subword_tokenize("int x = 1;", "p0", 4);
  std::vector<RowMatrix<float>> hidden;
  std::vector<std::vector<RowMatrix<float>>> attention;

  // L=2, D=3, H=2
  Fixture() {
    const auto T = static_cast<Eigen::Index>(tok.size());
    Rng rng(11);
    for (int l = 0; l <= 2; ++l) {
      RowMatrix<float> h(T, 3);
      for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = static_cast<float>(rng.normal());
      hidden.push_back(h);
    }
    for (int l = 1; l <= 2; ++l) {
      std::vector<RowMatrix<float>> heads;
      for (int k = 0; k < 2; ++k) {
        RowMatrix<float> a(T, T);
        for (Eigen::Index r = 0; r < T; ++r) {
          Eigen::VectorXf w(T);
          for (Eigen::Index c = 0; c < T; ++c) w(c) = static_cast<float>(rng.uniform01()) + 0.01f;
          a.row(r) = (w / w.sum()).transpose();
        }
        heads.push_back(a);
      }
      attention.push_back(heads);
    }
  }

  void write(const fs::path& dir) const {
    StoreWriter w(dir, "toy", 2, 3, 2);
    w.set_encoder_layers(1);
    w.add_source(tok, hidden, attention);
    w.finish();
  }
};

bool bitwise_equal(const RowMatrix<float>& a, const RowMatrix<float>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("crc32 check value") {
  CHECK(crc32_of("123456789") == 0xCBF43926u);
  CHECK(crc32_of("") == 0u);
}

TEST_CASE("tensors round-trip bit for bit") {
  TempDir dir("store");
  const Fixture f;
  f.write(dir.path());
  const auto store = RepresentationStore::open(dir.path());
  CHECK(store.manifest().layers == 2);
  CHECK(store.manifest().hidden_dim == 3);
  CHECK(store.manifest().heads == 2);
  CHECK(store.manifest().encoder_layers == 1);
  CHECK(store.has_source("p0"));
  CHECK_FALSE(store.has_source("p1"));
  CHECK(store.tokens("p0").tokens.size() == f.tok.tokens.size());
  for (int l = 0; l <= 2; ++l) CHECK(bitwise_equal(store.read_layer("p0", l), f.hidden[static_cast<std::size_t>(l)]));
  for (int l = 1; l <= 2; ++l) {
    const auto all = store.read_attention_heads("p0", l);
    REQUIRE(all.size() == 2);
    for (int h = 0; h < 2; ++h) {
      const auto& expected = f.attention[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(h)];
      CHECK(bitwise_equal(store.read_attention("p0", l, h), expected));
      CHECK(bitwise_equal(all[static_cast<std::size_t>(h)], expected));
    }
  }
  CHECK_NOTHROW(store.validate());
  CHECK_THROWS_AS(store.read_layer("p0", 3), StoreError);
  CHECK_THROWS_AS(store.read_attention("p0", 0, 0), StoreError);
  CHECK_THROWS_AS(store.read_attention("p0", 1, 2), StoreError);
  CHECK_THROWS_AS(store.read_layer("nope", 0), StoreError);
}

TEST_CASE("manifest JSON") {
  TempDir dir("manifest");
  Fixture().write(dir.path());
  const auto text = read_file((dir.path() / kManifestName).string());
  const auto m = Manifest::from_json(text);
  CHECK(m.to_json() == text);
  CHECK(m.model == "toy");
  CHECK(m.sources.size() == 1);
  CHECK(m.sources[0].checksums.size() == 5);
  CHECK(m.sources[0].checksums.count(hidden_file_name(0)) == 1);
  CHECK(m.sources[0].checksums.count(attention_file_name(2)) == 1);

  auto without = m;
  without.encoder_layers.reset();
  CHECK(without.to_json().find("encoder_layers") == std::string::npos);
  CHECK_FALSE(Manifest::from_json(without.to_json()).encoder_layers.has_value());

  CHECK_THROWS_AS(Manifest::from_json("{"), StoreError);
  CHECK_THROWS_AS(Manifest::from_json(R"({"model":"m","layers":0,"hidden_dim":1,"heads":1,"dtype":"f32le","sources":[]})"),
                  StoreError);
  CHECK_THROWS_AS(Manifest::from_json(R"({"model":"m","layers":1,"hidden_dim":1,"heads":1,"dtype":"f16","sources":[]})"),
                  StoreError);
}

TEST_CASE("corrupted stores are rejected") {
  TempDir dir("corrupt");
  const Fixture f;
  f.write(dir.path());
  const auto h0 = dir.path() / "p0" / hidden_file_name(0);
  const auto a1 = dir.path() / "p0" / attention_file_name(1);

  SUBCASE("truncated tensor") {
    const auto bytes = read_file(h0.string());
    write_file(h0.string(), bytes.substr(0, bytes.size() - 4));
    const auto store = RepresentationStore::open(dir.path());
    CHECK_THROWS_AS(store.read_layer("p0", 0), StoreError);
    CHECK_THROWS_AS(store.validate(), StoreError);
  }
  SUBCASE("flipped byte") {
    auto bytes = read_file(h0.string());
    bytes[5] = static_cast<char>(bytes[5] ^ 0x10);
    write_file(h0.string(), bytes);
    CHECK_THROWS_AS(RepresentationStore::open(dir.path()).read_layer("p0", 0), StoreError);
  }
  SUBCASE("missing tensor") {
    fs::remove(a1);
    CHECK_THROWS_AS(RepresentationStore::open(dir.path()).read_attention("p0", 1, 0), StoreError);
  }
  SUBCASE("missing manifest") {
    fs::remove(dir.path() / kManifestName);
    CHECK_THROWS_AS(RepresentationStore::open(dir.path()), StoreError);
  }
}

TEST_CASE("attention rows must sum to one") {
  Fixture f;
  SUBCASE("row summing to 0.9") {
    f.attention[0][1].row(2) *= 0.9f;
    TempDir dir("rowsum");
    f.write(dir.path());
    const auto store = RepresentationStore::open(dir.path());
    // the whole layer file is checked on every read
    CHECK_THROWS_AS(store.read_attention("p0", 1, 0), StoreError);
    CHECK_THROWS_AS(store.read_attention("p0", 1, 1), StoreError);
    CHECK_NOTHROW(store.read_attention("p0", 2, 1));
    CHECK_THROWS_AS(store.validate(), StoreError);
  }
  SUBCASE("within tolerance") {
    f.attention[0][1].row(2) *= static_cast<float>(1.0 + kRowSumTolerance / 4);
    TempDir dir("rowsum-ok");
    f.write(dir.path());
    CHECK_NOTHROW(RepresentationStore::open(dir.path()).read_attention("p0", 1, 1));
  }
}

TEST_CASE("writer refuses to overwrite and checks shapes") {
  TempDir dir("overwrite");
  const Fixture f;
  f.write(dir.path());
  CHECK_THROWS_AS(StoreWriter(dir.path(), "again", 2, 3, 2), StoreError);

  TempDir other("shapes");
  StoreWriter w(other.path(), "toy", 2, 3, 2);
  auto short_hidden = f.hidden;
  short_hidden.pop_back();
  CHECK_THROWS_AS(w.add_source(f.tok, short_hidden, f.attention), StoreError);
  auto wide = f.hidden;
  wide[1] = RowMatrix<float>::Zero(wide[1].rows(), 4);
  CHECK_THROWS_AS(w.add_source(f.tok, wide, f.attention), StoreError);
}

TEST_CASE("directory content hash") {
  TempDir a("hash-a"), b("hash-b");
  Fixture().write(a.path());
  Fixture().write(b.path());
  CHECK(directory_content_hash(a.path()) == directory_content_hash(b.path()));
  write_file((b.path() / "extra.txt").string(), "x");
  CHECK(directory_content_hash(a.path()) != directory_content_hash(b.path()));
}
