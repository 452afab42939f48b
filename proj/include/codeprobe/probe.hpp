#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "codeprobe/dataset.hpp"
#include "codeprobe/store.hpp"

namespace codeprobe {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Numerically stable softmax.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& scores) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = scores.maxCoeff();
  Vector<Scalar> e = (scores.array() - peak).exp().matrix();
  return e / e.sum();
}

/// weights = softmax(reps * query); returns reps^T * weights. `reps` is [k x D].
template <typename DerivedR, typename DerivedQ>
Vector<typename DerivedR::Scalar> attention_pool(const Eigen::MatrixBase<DerivedR>& reps,
                                                 const Eigen::MatrixBase<DerivedQ>& query) {
  if (reps.rows() == 0) throw EmptySpan("attention pool over an empty span");
  const auto weights = softmax(reps * query);
  return reps.transpose() * weights;
}

/// Pool queries and MLP weights in one flat parameter vector, so the
/// optimizer and the gradient check treat the model as a single point.
template <typename Scalar>
class ProbeModel {
 public:
  ProbeModel() = default;
  ProbeModel(int input_dim, int slots, int hidden, int classes)
      : input_dim_(input_dim), slots_(slots), hidden_(hidden), classes_(classes),
        theta_(Vector<Scalar>::Zero(parameter_count(input_dim, slots, hidden, classes))) {
    if (classes < 2) throw ConfigError("a probe needs at least two classes");
    if (input_dim < 1 || slots < 1 || hidden < 1) throw ConfigError("probe dimensions must be positive");
  }

  static Eigen::Index parameter_count(int d, int slots, int hidden, int classes) {
    return Eigen::Index(slots) * d + Eigen::Index(hidden) * slots * d + hidden + Eigen::Index(classes) * hidden +
           classes;
  }

  int input_dim() const { return input_dim_; }
  int slots() const { return slots_; }
  int hidden() const { return hidden_; }
  int classes() const { return classes_; }

  Vector<Scalar>& theta() { return theta_; }
  const Vector<Scalar>& theta() const { return theta_; }

  auto query(int slot) { return theta_.segment(Eigen::Index(slot) * input_dim_, input_dim_); }
  auto query(int slot) const { return theta_.segment(Eigen::Index(slot) * input_dim_, input_dim_); }
  auto w1() { return Eigen::Map<Matrix<Scalar>>(theta_.data() + off_w1(), hidden_, Eigen::Index(slots_) * input_dim_); }
  auto w1() const {
    return Eigen::Map<const Matrix<Scalar>>(theta_.data() + off_w1(), hidden_, Eigen::Index(slots_) * input_dim_);
  }
  auto b1() { return theta_.segment(off_b1(), hidden_); }
  auto b1() const { return theta_.segment(off_b1(), hidden_); }
  auto w2() { return Eigen::Map<Matrix<Scalar>>(theta_.data() + off_w2(), classes_, hidden_); }
  auto w2() const { return Eigen::Map<const Matrix<Scalar>>(theta_.data() + off_w2(), classes_, hidden_); }
  auto b2() { return theta_.segment(off_b2(), classes_); }
  auto b2() const { return theta_.segment(off_b2(), classes_); }

  /// Queries normal with std 0.1; weights uniform in +-sqrt(6 / (fan_in + fan_out)).
  void initialize(Rng& rng) {
    theta_.setZero();
    for (int s = 0; s < slots_; ++s) {
      for (Eigen::Index i = 0; i < input_dim_; ++i) query(s)(i) = Scalar(0.1 * rng.normal());
    }
    auto glorot = [&](auto m) {
      const double bound = std::sqrt(6.0 / double(m.rows() + m.cols()));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar((2.0 * rng.uniform01() - 1.0) * bound);
    };
    glorot(w1());
    glorot(w2());
  }

 private:
  Eigen::Index off_w1() const { return Eigen::Index(slots_) * input_dim_; }
  Eigen::Index off_b1() const { return off_w1() + Eigen::Index(hidden_) * slots_ * input_dim_; }
  Eigen::Index off_w2() const { return off_b1() + hidden_; }
  Eigen::Index off_b2() const { return off_w2() + Eigen::Index(classes_) * hidden_; }

  int input_dim_ = 0;
  int slots_ = 0;
  int hidden_ = 0;
  int classes_ = 0;
  Vector<Scalar> theta_;
};

/// Token representations of one example, one [k x D] block per span slot.
template <typename Scalar>
struct ProbeInput {
  std::vector<Matrix<Scalar>> spans;
  int label = 0;
};

template <typename Scalar>
Vector<Scalar> probe_logits(const ProbeModel<Scalar>& model, const ProbeInput<Scalar>& input) {
  const Eigen::Index d = model.input_dim();
  Vector<Scalar> x(Eigen::Index(model.slots()) * d);
  for (int s = 0; s < model.slots(); ++s) x.segment(Eigen::Index(s) * d, d) = attention_pool(input.spans[s], model.query(s));
  const Vector<Scalar> h = ((model.w1() * x + model.b1()).array().max(Scalar(0))).matrix();
  return model.w2() * h + model.b2();
}

/// Mean cross-entropy over `batch`; adds d(loss)/d(theta) into `grad` when
/// it is non-null.
template <typename Scalar>
Scalar probe_loss(const ProbeModel<Scalar>& model, const std::vector<const ProbeInput<Scalar>*>& batch,
                  Vector<Scalar>* grad) {
  const Eigen::Index d = model.input_dim();
  const Scalar inv_n = Scalar(1) / Scalar(batch.size());
  ProbeModel<Scalar> g;
  if (grad) g = ProbeModel<Scalar>(model.input_dim(), model.slots(), model.hidden(), model.classes());
  Scalar loss = 0;
  for (const auto* ex : batch) {
    std::vector<Vector<Scalar>> weights(static_cast<std::size_t>(model.slots()));
    Vector<Scalar> x(Eigen::Index(model.slots()) * d);
    for (int s = 0; s < model.slots(); ++s) {
      const auto& r = ex->spans[static_cast<std::size_t>(s)];
      if (r.rows() == 0) throw EmptySpan("attention pool over an empty span");
      weights[static_cast<std::size_t>(s)] = softmax(r * model.query(s));
      x.segment(Eigen::Index(s) * d, d) = r.transpose() * weights[static_cast<std::size_t>(s)];
    }
    const Vector<Scalar> pre = model.w1() * x + model.b1();
    const Vector<Scalar> h = pre.array().max(Scalar(0)).matrix();
    const Vector<Scalar> logits = model.w2() * h + model.b2();
    const Scalar peak = logits.maxCoeff();
    const Scalar log_z = peak + std::log((logits.array() - peak).exp().sum());
    loss += (log_z - logits(ex->label)) * inv_n;
    if (!grad) continue;

    Vector<Scalar> dlogits = (logits.array() - log_z).exp().matrix();
    dlogits(ex->label) -= Scalar(1);
    dlogits *= inv_n;
    g.w2() += dlogits * h.transpose();
    g.b2() += dlogits;
    const Vector<Scalar> dpre = ((model.w2().transpose() * dlogits).array() * (pre.array() > Scalar(0)).template cast<Scalar>()).matrix();
    g.w1() += dpre * x.transpose();
    g.b1() += dpre;
    const Vector<Scalar> dx = model.w1().transpose() * dpre;
    for (int s = 0; s < model.slots(); ++s) {
      const auto& r = ex->spans[static_cast<std::size_t>(s)];
      const auto& a = weights[static_cast<std::size_t>(s)];
      const Vector<Scalar> da = r * dx.segment(Eigen::Index(s) * d, d);
      const Vector<Scalar> dscore = (a.array() * (da.array() - a.dot(da))).matrix();
      g.query(s) += r.transpose() * dscore;
    }
  }
  if (grad) *grad += g.theta();
  return loss;
}

struct ProbeHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 5;
  int hidden = 256;
};

struct TrainedProbe {
  ProbeModel<double> model;
  std::string task;
  int layer = 0;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  double best_valid_mcc = 0.0;

  std::string to_json() const;
  static TrainedProbe from_json(std::string_view text);
};

/// Span representations of `layer` for each example, reading each source's
/// layer matrix once. Throws StoreError when a span exceeds the source's T.
std::vector<ProbeInput<double>> gather_inputs(const std::vector<ProbingExample>& examples,
                                              const RepresentationStore& store, int layer);

/// Adam on mini-batches with early stopping on validation MCC; returns the
/// best-validation parameters. Deterministic for a given seed.
TrainedProbe train_probe(const std::vector<ProbeInput<double>>& train, const std::vector<ProbeInput<double>>& valid,
                         int classes, std::uint64_t seed, const ProbeHyper& hyper = {});

std::vector<int> predict(const ProbeModel<double>& model, const std::vector<ProbeInput<double>>& inputs);

/// counts[truth][predicted]
struct ConfusionMatrix {
  std::vector<std::vector<long long>> counts;

  explicit ConfusionMatrix(int classes = 2)
      : counts(static_cast<std::size_t>(classes), std::vector<long long>(static_cast<std::size_t>(classes), 0)) {}
  static ConfusionMatrix from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted, int classes);
  static ConfusionMatrix binary(long long tp, long long tn, long long fp, long long fn);
  int classes() const { return static_cast<int>(counts.size()); }
  long long total() const;
};

/// Multi-class MCC (Gorodkin's R_K); equals the usual formula for two
/// classes. Zero denominator gives 0 and a warning.
double mcc(const ConfusionMatrix& confusion);
double binary_mcc(long long tp, long long tn, long long fp, long long fn);
/// Unweighted mean of per-class F1 over classes that occur in the truth or
/// the predictions.
double macro_f1(const ConfusionMatrix& confusion);

struct EvalReport {
  std::string task;
  std::string graph_kind;
  int layer = 0;
  std::uint64_t seed = 0;
  double mcc = 0.0;
  double macro_f1 = 0.0;
  std::size_t n_test = 0;
  ConfusionMatrix confusion;
  std::vector<double> precision, recall;
};

EvalReport evaluate(const TrainedProbe& probe, const std::vector<ProbeInput<double>>& test,
                    const std::string& graph_kind);

struct AggregateRow {
  std::string task;
  std::string graph_kind;
  int layer = 0;
  std::size_t runs = 0;
  double mcc_mean = 0, mcc_min = 0, mcc_max = 0;
  double f1_mean = 0, f1_min = 0, f1_max = 0;
};

/// Mean/min/max per (task, layer), ordered by task then layer.
std::vector<AggregateRow> aggregate_runs(const std::vector<EvalReport>& reports);

std::string eval_csv(const std::vector<EvalReport>& reports);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
/// Score-vs-layer line chart for one task; one series per label.
std::string layer_chart_svg(const std::string& title, const std::map<std::string, std::vector<AggregateRow>>& series);

}  // namespace codeprobe
