#include "codeprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace codeprobe {

std::vector<ProbeInput<double>> gather_inputs(const std::vector<ProbingExample>& examples,
                                              const RepresentationStore& store, int layer) {
  std::map<std::string, Matrix<double>, std::less<>> cache;
  std::vector<ProbeInput<double>> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    auto it = cache.find(e.source_id);
    if (it == cache.end()) {
      it = cache.emplace(e.source_id, store.read_layer(e.source_id, layer).cast<double>()).first;
    }
    const auto& reps = it->second;
    ProbeInput<double> input;
    input.label = e.label;
    auto take = [&](const TokenSpan& s) {
      if (s.start >= s.end || s.end > reps.rows()) {
        throw StoreError(e.source_id + ": span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                         ") outside " + std::to_string(reps.rows()) + " tokens");
      }
      input.spans.push_back(reps.middleRows(s.start, s.length()));
    };
    take(e.a);
    if (e.b) take(*e.b);
    out.push_back(std::move(input));
  }
  return out;
}

std::vector<int> predict(const ProbeModel<double>& model, const std::vector<ProbeInput<double>>& inputs) {
  std::vector<int> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    Eigen::Index best = 0;
    probe_logits(model, in).maxCoeff(&best);
    out.push_back(static_cast<int>(best));
  }
  return out;
}

namespace {

double mcc_impl(const ConfusionMatrix& c, bool warn) {
  const auto k = static_cast<std::size_t>(c.classes());
  long double s = 0, correct = 0, pt = 0, pp = 0, tt = 0;
  std::vector<long double> t(k, 0), p(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto v = static_cast<long double>(c.counts[i][j]);
      s += v;
      t[i] += v;
      p[j] += v;
      if (i == j) correct += v;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    pt += p[i] * t[i];
    pp += p[i] * p[i];
    tt += t[i] * t[i];
  }
  const long double denom = (s * s - pp) * (s * s - tt);
  if (denom <= 0) {
    if (warn) log_warning("MCC denominator is zero; reporting 0");
    return 0.0;
  }
  return static_cast<double>((correct * s - pt) / std::sqrt(denom));
}

std::vector<int> labels_of(const std::vector<ProbeInput<double>>& inputs) {
  std::vector<int> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) out.push_back(in.label);
  return out;
}

}  // namespace

TrainedProbe train_probe(const std::vector<ProbeInput<double>>& train, const std::vector<ProbeInput<double>>& valid,
                         int classes, std::uint64_t seed, const ProbeHyper& hyper) {
  if (train.empty()) throw InsufficientData("no training examples");
  const int slots = static_cast<int>(train.front().spans.size());
  const int dim = static_cast<int>(train.front().spans.front().cols());
  for (const auto& in : train) {
    if (in.label < 0 || in.label >= classes) throw ConfigError("label outside class range");
  }

  TrainedProbe result;
  result.seed = seed;
  ProbeModel<double> model(dim, slots, hyper.hidden, classes);
  Rng rng(derive_seed(seed, "probe"));
  model.initialize(rng);

  const Eigen::Index n_params = model.theta().size();
  Vector<double> m = Vector<double>::Zero(n_params);
  Vector<double> v = Vector<double>::Zero(n_params);
  Vector<double> grad(n_params);
  long long step = 0;

  const auto& monitor = valid.empty() ? train : valid;
  const auto monitor_truth = labels_of(monitor);
  ProbeModel<double> best = model;
  double best_mcc = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const ProbeInput<double>*> batch;
  const auto batch_size = static_cast<std::size_t>(std::max(1, hyper.batch_size));
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      batch.clear();
      for (std::size_t i = begin; i < std::min(order.size(), begin + batch_size); ++i) batch.push_back(&train[order[i]]);
      grad.setZero();
      const double loss = probe_loss(model, batch, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch));
      }
      ++step;
      m = hyper.beta1 * m + (1.0 - hyper.beta1) * grad;
      v = hyper.beta2 * v + (1.0 - hyper.beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
      model.theta().array() -=
          hyper.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + hyper.epsilon);
    }
    result.epochs_run = epoch;
    const auto confusion = ConfusionMatrix::from_predictions(monitor_truth, predict(model, monitor), classes);
    const double score = mcc_impl(confusion, false);
    if (score > best_mcc) {
      best_mcc = score;
      best = model;
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }
  result.model = std::move(best);
  result.best_valid_mcc = best_mcc;
  return result;
}

std::string TrainedProbe::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["layer"] = layer;
  j["seed"] = seed;
  j["epochs_run"] = epochs_run;
  j["best_valid_mcc"] = best_valid_mcc;
  j["input_dim"] = model.input_dim();
  j["slots"] = model.slots();
  j["hidden"] = model.hidden();
  j["classes"] = model.classes();
  j["theta"] = std::vector<double>(model.theta().data(), model.theta().data() + model.theta().size());
  return j.dump() + "\n";
}

TrainedProbe TrainedProbe::from_json(std::string_view text) {
  TrainedProbe p;
  try {
    const auto j = nlohmann::json::parse(text);
    p.task = j.at("task").get<std::string>();
    p.layer = j.at("layer").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.epochs_run = j.at("epochs_run").get<int>();
    p.best_valid_mcc = j.at("best_valid_mcc").get<double>();
    p.model = ProbeModel<double>(j.at("input_dim").get<int>(), j.at("slots").get<int>(), j.at("hidden").get<int>(),
                                 j.at("classes").get<int>());
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(theta.size()) != p.model.theta().size()) {
      throw ConfigError("probe parameter count does not match its dimensions");
    }
    p.model.theta() = Eigen::Map<const Vector<double>>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed probe parameters: ") + ex.what());
  }
  if (!p.model.theta().allFinite()) throw ConfigError("probe parameters are not finite");
  return p;
}

ConfusionMatrix ConfusionMatrix::from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                                  int classes) {
  if (truth.size() != predicted.size()) throw Error("truth and prediction lengths differ");
  ConfusionMatrix c(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
      throw Error("class index out of range");
    }
    ++c.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return c;
}

ConfusionMatrix ConfusionMatrix::binary(long long tp, long long tn, long long fp, long long fn) {
  ConfusionMatrix c(2);
  c.counts[1][1] = tp;
  c.counts[0][0] = tn;
  c.counts[0][1] = fp;
  c.counts[1][0] = fn;
  return c;
}

long long ConfusionMatrix::total() const {
  long long s = 0;
  for (const auto& row : counts) s = std::accumulate(row.begin(), row.end(), s);
  return s;
}

double mcc(const ConfusionMatrix& confusion) { return mcc_impl(confusion, true); }

double binary_mcc(long long tp, long long tn, long long fp, long long fn) {
  return mcc(ConfusionMatrix::binary(tp, tn, fp, fn));
}

namespace {

struct ClassStats {
  std::vector<double> precision, recall, f1;
  std::vector<bool> present;
};

ClassStats class_stats(const ConfusionMatrix& c) {
  const auto k = static_cast<std::size_t>(c.classes());
  ClassStats s{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0), std::vector<double>(k, 0.0),
               std::vector<bool>(k, false)};
  for (std::size_t i = 0; i < k; ++i) {
    long long tp = c.counts[i][i], row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += c.counts[i][j];
      col += c.counts[j][i];
    }
    s.present[i] = row > 0 || col > 0;
    if (col > 0) s.precision[i] = double(tp) / double(col);
    if (row > 0) s.recall[i] = double(tp) / double(row);
    if (row + col > 0) s.f1[i] = 2.0 * double(tp) / double(row + col);
  }
  return s;
}

}  // namespace

double macro_f1(const ConfusionMatrix& confusion) {
  const auto s = class_stats(confusion);
  double sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < s.f1.size(); ++i) {
    if (!s.present[i]) continue;
    sum += s.f1[i];
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

EvalReport evaluate(const TrainedProbe& probe, const std::vector<ProbeInput<double>>& test,
                    const std::string& graph_kind) {
  EvalReport r;
  r.task = probe.task;
  r.graph_kind = graph_kind;
  r.layer = probe.layer;
  r.seed = probe.seed;
  r.n_test = test.size();
  r.confusion = ConfusionMatrix::from_predictions(labels_of(test), predict(probe.model, test), probe.model.classes());
  r.mcc = mcc(r.confusion);
  r.macro_f1 = macro_f1(r.confusion);
  const auto s = class_stats(r.confusion);
  r.precision = s.precision;
  r.recall = s.recall;
  return r;
}

std::vector<AggregateRow> aggregate_runs(const std::vector<EvalReport>& reports) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) groups[{r.task, r.graph_kind, r.layer}].push_back(&r);
  std::vector<AggregateRow> rows;
  for (const auto& [key, members] : groups) {
    AggregateRow row;
    std::tie(row.task, row.graph_kind, row.layer) = key;
    row.runs = members.size();
    row.mcc_min = row.f1_min = std::numeric_limits<double>::infinity();
    row.mcc_max = row.f1_max = -std::numeric_limits<double>::infinity();
    for (const auto* r : members) {
      row.mcc_mean += r->mcc;
      row.f1_mean += r->macro_f1;
      row.mcc_min = std::min(row.mcc_min, r->mcc);
      row.mcc_max = std::max(row.mcc_max, r->mcc);
      row.f1_min = std::min(row.f1_min, r->macro_f1);
      row.f1_max = std::max(row.f1_max, r->macro_f1);
    }
    row.mcc_mean /= double(row.runs);
    row.f1_mean /= double(row.runs);
    rows.push_back(row);
  }
  return rows;
}

std::string eval_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "task,graph_kind,layer,seed,mcc,macro_f1,n_test\n";
  for (const auto& r : reports) {
    out << r.task << ',' << r.graph_kind << ',' << r.layer << ',' << r.seed << ',' << format_fixed(r.mcc) << ','
        << format_fixed(r.macro_f1) << ',' << r.n_test << '\n';
  }
  return out.str();
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "task,graph_kind,layer,runs,mcc_mean,mcc_min,mcc_max,macro_f1_mean,macro_f1_min,macro_f1_max\n";
  for (const auto& r : rows) {
    out << r.task << ',' << r.graph_kind << ',' << r.layer << ',' << r.runs << ',' << format_fixed(r.mcc_mean) << ','
        << format_fixed(r.mcc_min) << ',' << format_fixed(r.mcc_max) << ',' << format_fixed(r.f1_mean) << ','
        << format_fixed(r.f1_min) << ',' << format_fixed(r.f1_max) << '\n';
  }
  return out.str();
}

namespace {

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string layer_chart_svg(const std::string& title, const std::map<std::string, std::vector<AggregateRow>>& series) {
  constexpr double width = 640, height = 400, left = 60, right = 150, top = 40, bottom = 50;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  int max_layer = 1;
  double lo = 0.0, hi = 1.0;
  for (const auto& [_, rows] : series) {
    for (const auto& r : rows) {
      max_layer = std::max(max_layer, r.layer);
      lo = std::min(lo, r.mcc_mean);
      hi = std::max(hi, r.mcc_mean);
    }
  }
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  auto x_of = [&](int layer) { return left + plot_w * layer / max_layer; };
  auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\">"
      << xml_escape(title) << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  for (int l = 0; l <= max_layer; ++l) {
    out << "<text x=\"" << format_fixed(x_of(l), 1) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << l << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4;
    out << "<text x=\"" << left - 8 << "\" y=\"" << format_fixed(y_of(v) + 4, 1)
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << format_fixed(v, 2) << "</text>\n";
  }
  out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\">layer</text>\n";
  out << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 " << top + plot_h / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\">MCC</text>\n";
  std::size_t index = 0;
  for (const auto& [label, rows] : series) {
    const char* color = palette[index % std::size(palette)];
    std::vector<const AggregateRow*> sorted;
    for (const auto& r : rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->layer < b->layer; });
    out << "<g data-series=\"" << xml_escape(label) << "\">\n<polyline fill=\"none\" stroke=\"" << color
        << "\" points=\"";
    for (const auto* r : sorted) out << format_fixed(x_of(r->layer), 1) << ',' << format_fixed(y_of(r->mcc_mean), 1) << ' ';
    out << "\"/>\n";
    for (const auto* r : sorted) {
      out << "<circle cx=\"" << format_fixed(x_of(r->layer), 1) << "\" cy=\"" << format_fixed(y_of(r->mcc_mean), 1)
          << "\" r=\"3\" fill=\"" << color << "\" data-layer=\"" << r->layer << "\" data-mcc=\""
          << format_fixed(r->mcc_mean) << "\"/>\n";
    }
    out << "<text x=\"" << left + plot_w + 12 << "\" y=\"" << top + 16 * (index + 1) << "\" fill=\"" << color
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << xml_escape(label) << "</text>\n</g>\n";
    ++index;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace codeprobe
