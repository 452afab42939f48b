#include <doctest.h>

#include <cmath>
#include <cstring>
#include <regex>

#include "codeprobe/probe.hpp"
#include "planted.hpp"

using namespace codeprobe;
using namespace codeprobe::testing;

namespace {

// Pearson correlation of the flattened one-hot truth and prediction matrices.
double pearson_of_one_hots(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  const auto n = static_cast<double>(truth.size());
  std::vector<double> mx(static_cast<std::size_t>(k)), my(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    mx[static_cast<std::size_t>(truth[i])] += 1 / n;
    my[static_cast<std::size_t>(pred[i])] += 1 / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int c = 0; c < k; ++c) {
      const double x = (truth[i] == c) - mx[static_cast<std::size_t>(c)];
      const double y = (pred[i] == c) - my[static_cast<std::size_t>(c)];
      sxy += x * y;
      sxx += x * x;
      syy += y * y;
    }
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<ProbeInput<double>> blobs(Rng& rng, int n, int dim, double shift) {
  std::vector<ProbeInput<double>> out;
  for (int i = 0; i < n; ++i) {
    ProbeInput<double> in;
    in.label = i % 2;
    for (int s = 0; s < 2; ++s) {
      Matrix<double> r(1 + static_cast<int>(rng.uniform_index(3)), dim);
      for (Eigen::Index j = 0; j < r.size(); ++j) r.data()[j] = rng.normal();
      r.col(0).array() += in.label ? shift : -shift;
      in.spans.push_back(r);
    }
    out.push_back(in);
  }
  return out;
}

EvalReport report(const std::string& task, int layer, std::uint64_t seed, double m, double f) {
  EvalReport r;
  r.task = task;
  r.graph_kind = "CDG";
  r.layer = layer;
  r.seed = seed;
  r.mcc = m;
  r.macro_f1 = f;
  return r;
}

}  // namespace

TEST_CASE("softmax") {
  Vector<double> s(2);
  s << 0.0, std::log(3.0);
  const auto p = softmax(s);
  CHECK(p(0) == doctest::Approx(0.25));
  CHECK(p(1) == doctest::Approx(0.75));
  Vector<double> big(3);
  big << 1000.0, 1000.0, -1000.0;
  const auto q = softmax(big);
  CHECK(q(0) == doctest::Approx(0.5));
  CHECK(q(2) == doctest::Approx(0.0));
  CHECK(std::isfinite(q.sum()));
}

TEST_CASE("attention pooling") {
  Rng rng(3);
  Vector<double> query(4);
  for (int i = 0; i < 4; ++i) query(i) = rng.normal();

  Matrix<double> one(1, 4);
  one << 1, -2, 3, 0.5;
  CHECK((attention_pool(one, query) - one.row(0).transpose()).norm() < 1e-12);

  Matrix<double> same(3, 4);
  for (int r = 0; r < 3; ++r) same.row(r) = one.row(0);
  CHECK((attention_pool(same, query) - one.row(0).transpose()).norm() < 1e-12);

  // two-pass oracle in long double
  Matrix<double> reps(5, 4);
  for (Eigen::Index i = 0; i < reps.size(); ++i) reps.data()[i] = 3 * rng.normal();
  std::vector<long double> score(5);
  long double z = 0;
  for (int r = 0; r < 5; ++r) {
    score[static_cast<std::size_t>(r)] = 0;
    for (int c = 0; c < 4; ++c) score[static_cast<std::size_t>(r)] += reps(r, c) * query(c);
  }
  for (auto& v : score) z += std::exp(v);
  const auto pooled = attention_pool(reps, query);
  for (int c = 0; c < 4; ++c) {
    long double expected = 0;
    for (int r = 0; r < 5; ++r) expected += std::exp(score[static_cast<std::size_t>(r)]) / z * reps(r, c);
    CHECK(pooled(c) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(attention_pool(Matrix<double>(0, 4), query), EmptySpan);
}

TEST_CASE("parameter layout") {
  ProbeModel<double> m(5, 2, 6, 3);
  CHECK(m.theta().size() == 2 * 5 + 6 * 10 + 6 + 3 * 6 + 3);
  CHECK(m.w1().rows() == 6);
  CHECK(m.w1().cols() == 10);
  CHECK(m.w2().rows() == 3);
  CHECK_THROWS_AS(ProbeModel<double>(5, 2, 6, 1), ConfigError);
  CHECK_THROWS_AS(ProbeModel<double>(0, 2, 6, 2), ConfigError);
}

TEST_CASE("MCC matches the correlation of one-hot encodings") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_index(4));
    const int n = 5 + static_cast<int>(rng.uniform_index(60));
    std::vector<int> truth, pred;
    for (int i = 0; i < n; ++i) {
      truth.push_back(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(k))));
      pred.push_back(rng.uniform01() < 0.6 ? truth.back() : static_cast<int>(rng.uniform_index(static_cast<std::size_t>(k))));
    }
    const auto cm = ConfusionMatrix::from_predictions(truth, pred, k);
    CHECK(cm.total() == n);
    const double oracle = pearson_of_one_hots(truth, pred, k);
    if (!std::isfinite(oracle)) continue;
    CHECK(mcc(cm) == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("binary MCC") {
  CHECK(binary_mcc(90, 80, 20, 10) == doctest::Approx(0.70353).epsilon(1e-5));
  CHECK(mcc(ConfusionMatrix::binary(90, 80, 20, 10)) == doctest::Approx(binary_mcc(90, 80, 20, 10)));
  // flipping every prediction negates the score
  Rng rng(5);
  std::vector<int> truth, pred, flipped;
  for (int i = 0; i < 100; ++i) {
    truth.push_back(rng.uniform01() < 0.4);
    pred.push_back(rng.uniform01() < 0.7 ? truth.back() : 1 - truth.back());
    flipped.push_back(1 - pred.back());
  }
  const double m = mcc(ConfusionMatrix::from_predictions(truth, pred, 2));
  CHECK(m > 0);
  CHECK(mcc(ConfusionMatrix::from_predictions(truth, flipped, 2)) == doctest::Approx(-m));

  set_warnings_enabled(false);
  CHECK(binary_mcc(10, 0, 5, 0) == 0.0);
  CHECK(mcc(ConfusionMatrix(3)) == 0.0);
  set_warnings_enabled(true);
}

TEST_CASE("macro F1") {
  // class 0: tp 2 fp 1 fn 0; class 1: tp 1 fp 0 fn 1; class 2 absent
  const auto cm = ConfusionMatrix::from_predictions({0, 0, 1, 1}, {0, 0, 0, 1}, 3);
  const double f0 = 2.0 * 2 / (2 * 2 + 1 + 0), f1 = 2.0 * 1 / (2 * 1 + 0 + 1);
  CHECK(macro_f1(cm) == doctest::Approx((f0 + f1) / 2));
  // a class that is only predicted counts with F1 = 0
  const auto extra = ConfusionMatrix::from_predictions({0, 0}, {0, 2}, 3);
  CHECK(macro_f1(extra) == doctest::Approx((2.0 / 3 + 0) / 2));
}

TEST_CASE("training is deterministic per seed") {
  Rng rng(8);
  const auto train = blobs(rng, 80, 3, 1.5);
  const auto valid = blobs(rng, 40, 3, 1.5);
  ProbeHyper h;
  h.hidden = 8;
  h.max_epochs = 10;
  h.learning_rate = 1e-2;
  const auto a = train_probe(train, valid, 2, 42, h);
  const auto b = train_probe(train, valid, 2, 42, h);
  const auto c = train_probe(train, valid, 2, 43, h);
  REQUIRE(a.model.theta().size() == b.model.theta().size());
  CHECK(std::memcmp(a.model.theta().data(), b.model.theta().data(),
                    sizeof(double) * static_cast<std::size_t>(a.model.theta().size())) == 0);
  CHECK(a.epochs_run == b.epochs_run);
  CHECK(a.model.theta() != c.model.theta());
  CHECK(a.best_valid_mcc > 0.5);
  CHECK(a.epochs_run <= h.max_epochs);

  const auto back = TrainedProbe::from_json(a.to_json());
  CHECK(back.model.theta() == a.model.theta());
  CHECK(predict(back.model, valid) == predict(a.model, valid));
}

TEST_CASE("predictions ignore positive rescaling of the logits") {
  Rng rng(9);
  const auto inputs = blobs(rng, 60, 3, 0.5);
  ProbeModel<double> m(3, 2, 5, 2);
  m.initialize(rng);
  auto scaled = m;
  scaled.w2() *= 7.5;
  scaled.b2() *= 7.5;
  CHECK(predict(m, inputs) == predict(scaled, inputs));
}

TEST_CASE("evaluation reports") {
  Rng rng(12);
  const auto train = blobs(rng, 60, 3, 2.0);
  const auto test = blobs(rng, 30, 3, 2.0);
  ProbeHyper h;
  h.hidden = 8;
  h.max_epochs = 5;
  auto probe = train_probe(train, test, 2, 1, h);
  probe.task = "relation_cdg";
  probe.layer = 4;
  const auto r = evaluate(probe, test, "CDG");
  CHECK(r.n_test == 30);
  CHECK(r.confusion.total() == 30);
  CHECK(r.layer == 4);
  CHECK(r.task == "relation_cdg");
  CHECK(r.precision.size() == 2);
}

TEST_CASE("aggregation over seeds") {
  const auto rows = aggregate_runs({report("relation_cdg", 3, 1, 0.6, 0.7), report("relation_cdg", 3, 2, 0.8, 0.9)});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].runs == 2);
  CHECK(rows[0].mcc_mean == doctest::Approx(0.7));
  CHECK(rows[0].mcc_min == doctest::Approx(0.6));
  CHECK(rows[0].mcc_max == doctest::Approx(0.8));
  CHECK(rows[0].f1_mean == doctest::Approx(0.8));

  std::vector<EvalReport> many;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (int layer = 12; layer >= 0; --layer) many.push_back(report("ast_pair", layer, seed, 0.01 * layer, 0.5));
  }
  const auto grid = aggregate_runs(many);
  REQUIRE(grid.size() == 13);
  for (int l = 0; l <= 12; ++l) {
    CHECK(grid[static_cast<std::size_t>(l)].layer == l);
    CHECK(grid[static_cast<std::size_t>(l)].runs == 3);
  }
}

TEST_CASE("CSV and SVG output") {
  const std::vector<EvalReport> reports{report("tagging", 0, 1, 0.25, 0.5), report("tagging", 1, 1, 0.75, 0.5)};
  const auto csv = eval_csv(reports);
  CHECK(csv.rfind("task,graph_kind,layer,seed,mcc,macro_f1,n_test\n", 0) == 0);
  CHECK(split(csv, '\n').size() >= 3);
  const auto rows = aggregate_runs(reports);
  CHECK(aggregate_csv(rows).rfind(
            "task,graph_kind,layer,runs,mcc_mean,mcc_min,mcc_max,macro_f1_mean,macro_f1_min,macro_f1_max\n", 0) == 0);

  const auto svg = layer_chart_svg("tagging <AST>", {{"model-a", rows}});
  CHECK(svg.find("tagging &lt;AST&gt;") != std::string::npos);
  const std::regex point("data-layer=\"(\\d+)\" data-mcc=\"([-0-9.]+)\"");
  std::map<int, double> parsed;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), point); it != std::sregex_iterator(); ++it) {
    parsed[std::stoi((*it)[1])] = std::stod((*it)[2]);
  }
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0] == doctest::Approx(0.25));
  CHECK(parsed[1] == doctest::Approx(0.75));
}

TEST_CASE("span representations come from the store") {
  TempDir dir("gather");
  const auto data = write_planted_store(dir.path(), TaskKind::Relation, true, 20, 0, 0, 1);
  const auto store = RepresentationStore::open(dir.path());
  const auto inputs = gather_inputs(data.train, store, 1);
  REQUIRE(inputs.size() == data.train.size());
  const auto& ex = data.train[3];
  const auto layer = store.read_layer(ex.source_id, 1);
  const auto& in = inputs[3];
  REQUIRE(in.spans.size() == 2);
  CHECK(in.label == ex.label);
  CHECK(in.spans[0].rows() == ex.a.length());
  for (std::uint32_t t = 0; t < ex.a.length(); ++t) {
    CHECK((in.spans[0].row(t) - layer.row(ex.a.start + t).cast<double>()).norm() == 0.0);
  }
  auto bad = data.train;
  bad[0].a.end = 10000;
  CHECK_THROWS_AS(gather_inputs(bad, store, 1), StoreError);
  CHECK_THROWS_AS(gather_inputs(data.train, store, 2), StoreError);
}
