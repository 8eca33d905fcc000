#include "labnoise/learners.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "labnoise/error.hpp"
#include "labnoise/rng.hpp"

namespace labnoise {
namespace {

constexpr double kDivergenceLoss = 1e6;
constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kShuffleStream = 12;

void check_dim(const LabeledDataset& data, int dim) {
  if (data.dim() != static_cast<std::size_t>(dim)) {
    throw DomainError("feature dimension " + std::to_string(data.dim()) + " does not match learner dimension " +
                      std::to_string(dim));
  }
}

// In-place softmax of logits; returns log-sum-exp.
double softmax_inplace(std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double denom = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    denom += v;
  }
  for (auto& v : z) v /= denom;
  return zmax + std::log(denom);
}

nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw ValidationError("matrix checkpoint has wrong element count");
  return m;
}

}  // namespace

double Prediction::log_probability(int j) const {
  return std::log(std::max(probabilities[static_cast<std::size_t>(j)], kMinProbability));
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

std::vector<double> per_sample_loss(std::span<const Prediction> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DomainError("prediction and label counts differ");
  std::vector<double> losses(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) losses[t] = -predictions[t].log_probability(labels[t]);
  return losses;
}

std::vector<double> per_sample_loss(const Learner& learner, const LabeledDataset& data) {
  const auto predictions = learner.predict(data);
  return per_sample_loss(predictions, data.observed);
}

double accuracy(std::span<const Prediction> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DomainError("prediction and label counts differ");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) hits += predictions[t].label == labels[t];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// --- oracle -----------------------------------------------------------------

OracleLearner::OracleLearner(TransitionMatrix transition, std::uint64_t seed)
    : transition_(std::move(transition)), seed_(seed) {}

void OracleLearner::fit(const LabeledDataset& train, int /*epochs*/) {
  if (train.classes != classes()) throw DomainError("training set class count differs from the oracle's");
}

std::vector<Prediction> OracleLearner::predict(const LabeledDataset& data) const {
  if (!data.truth) throw ValidationError("oracle learner needs true labels at prediction time");
  const int c = classes();
  std::vector<Prediction> out(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    const int truth = (*data.truth)[r];
    if (truth < 0 || truth >= c) throw DomainError("true label outside [0, c)");
    const auto row = transition_.row(truth);
    const double u = hash_uniform(seed_, static_cast<std::uint64_t>(data.ids[r]));
    const int drawn = sample_categorical(row, u);
    auto& p = out[r].probabilities;
    p.resize(c);
    for (int j = 0; j < c; ++j) p[j] = 0.5 * row[j];
    p[drawn] += 0.5;
    out[r].label = argmax(p);
  }
  return out;
}

nlohmann::json OracleLearner::checkpoint() const {
  return {{"kind", "oracle"}, {"transition", matrix_json(transition_.entries())}, {"seed", seed_}};
}

std::unique_ptr<OracleLearner> oracle_train(const TransitionMatrix& transition, std::uint64_t seed) {
  return std::make_unique<OracleLearner>(transition, seed);
}

// --- k nearest neighbours -----------------------------------------------------

KnnLearner::KnnLearner(int classes, int k) : classes_(classes), k_(k) {
  if (classes < 2) throw DomainError("class count must be >= 2");
  if (k < 1) throw DomainError("k must be >= 1");
}

void KnnLearner::reinitialize() {
  train_features_ = Matrix();
  train_labels_.clear();
}

void KnnLearner::fit(const LabeledDataset& train, int /*epochs*/) {
  if (train.size() == 0) throw DomainError("k-NN needs a non-empty training set");
  if (train.classes != classes_) throw DomainError("training set class count differs from the learner's");
  train_features_ = train.features;
  train_labels_ = train.observed;
}

std::vector<Prediction> KnnLearner::predict(const LabeledDataset& data) const {
  if (train_labels_.empty()) throw DomainError("k-NN learner has not been trained");
  if (data.dim() != train_features_.cols) throw DomainError("feature dimension mismatch");
  const std::size_t n_train = train_labels_.size();
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), n_train);
  const std::size_t d = train_features_.cols;

  std::vector<Prediction> out(data.size());
  std::vector<std::pair<double, std::size_t>> best;  // ascending (distance, row)
  std::vector<int> votes(classes_);
  for (std::size_t q = 0; q < data.size(); ++q) {
    const double* x = data.features.row(q).data();
    best.clear();
    for (std::size_t t = 0; t < n_train; ++t) {
      const double* y = train_features_.data.data() + t * d;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[j] - y[j];
        dist += diff * diff;
      }
      if (best.size() == k && dist >= best.back().first) continue;
      // Strict '<' above keeps the earlier row on equal distance.
      auto pos = std::upper_bound(best.begin(), best.end(), std::make_pair(dist, t));
      best.insert(pos, {dist, t});
      if (best.size() > k) best.pop_back();
    }
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& [dist, t] : best) ++votes[train_labels_[t]];
    auto& p = out[q].probabilities;
    p.resize(classes_);
    const double denom = static_cast<double>(k) + classes_;
    for (int j = 0; j < classes_; ++j) p[j] = (votes[j] + 1.0) / denom;
    out[q].label = argmax(p);
  }
  return out;
}

nlohmann::json KnnLearner::checkpoint() const {
  return {{"kind", "knn"},
          {"classes", classes_},
          {"k", k_},
          {"features", matrix_json(train_features_)},
          {"labels", train_labels_}};
}

std::unique_ptr<KnnLearner> knn_train(const LabeledDataset& data, int k) {
  auto learner = std::make_unique<KnnLearner>(data.classes, k);
  learner->fit(data, 1);
  return learner;
}

// --- softmax ------------------------------------------------------------------

double LearningSchedule::rate(int epoch) const {
  double r = initial;
  for (const auto& [after, factor] : decay) {
    if (epoch > after) r *= factor;
  }
  return r;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (batch_size < 1) throw DomainError("batch size must be >= 1");
  if (!(schedule.initial > 0.0)) throw DomainError("learning rate must be positive");
  for (const auto& [after, factor] : schedule.decay) {
    if (!(factor > 0.0)) throw DomainError("learning-rate decay factors must be positive");
  }
  if (!(init_scale >= 0.0)) throw DomainError("init scale must be non-negative");
}

SoftmaxLearner::SoftmaxLearner(int classes, int dim, TrainConfig config, std::optional<int> hidden)
    : classes_(classes), dim_(dim), config_(std::move(config)), hidden_(hidden) {
  if (classes < 2) throw DomainError("class count must be >= 2");
  if (dim < 1) throw DomainError("feature dimension must be >= 1");
  if (hidden && *hidden < 1) throw DomainError("hidden width must be >= 1");
  config_.validate();
  reinitialize();
}

void SoftmaxLearner::reinitialize() {
  const std::size_t c = classes_, d = dim_;
  epochs_trained_ = 0;
  Rng rng(derive_seed(config_.seed, kInitStream));
  if (!hidden_) {
    params_.assign(c * d + c, 0.0);
    const double scale = config_.init_scale * std::sqrt(1.0 / d);
    for (std::size_t i = 0; i < c * d; ++i) params_[i] = scale * rng.normal();
    return;
  }
  const std::size_t h = static_cast<std::size_t>(*hidden_);
  params_.assign(h * d + h + c * h + c, 0.0);
  const double scale1 = config_.init_scale * std::sqrt(2.0 / d);
  const double scale2 = config_.init_scale * std::sqrt(1.0 / h);
  for (std::size_t i = 0; i < h * d; ++i) params_[i] = scale1 * rng.normal();
  double* w2 = params_.data() + h * d + h;
  for (std::size_t i = 0; i < c * h; ++i) w2[i] = scale2 * rng.normal();
}

void SoftmaxLearner::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) throw DomainError("parameter count mismatch");
  params_.assign(values.begin(), values.end());
}

void SoftmaxLearner::forward(std::span<const double> x, std::vector<double>& hidden_act,
                             std::vector<double>& probs) const {
  const std::size_t c = classes_, d = dim_;
  probs.assign(c, 0.0);
  const double* p = params_.data();
  if (!hidden_) {
    for (std::size_t k = 0; k < c; ++k) {
      double z = p[c * d + k];
      const double* w = p + k * d;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
      probs[k] = z;
    }
    return;
  }
  const std::size_t h = static_cast<std::size_t>(*hidden_);
  hidden_act.assign(h, 0.0);
  const double* b1 = p + h * d;
  const double* w2 = b1 + h;
  const double* b2 = w2 + c * h;
  for (std::size_t u = 0; u < h; ++u) {
    double a = b1[u];
    const double* w = p + u * d;
    for (std::size_t j = 0; j < d; ++j) a += w[j] * x[j];
    hidden_act[u] = a;  // pre-activation; ReLU applied below, sign kept for backprop
  }
  for (std::size_t k = 0; k < c; ++k) {
    double z = b2[k];
    const double* w = w2 + k * h;
    for (std::size_t u = 0; u < h; ++u) z += w[u] * std::max(hidden_act[u], 0.0);
    probs[k] = z;
  }
}

double SoftmaxLearner::loss_and_gradient(const LabeledDataset& data, std::span<const std::size_t> rows,
                                         std::vector<double>* gradient) const {
  check_dim(data, dim_);
  if (rows.empty()) throw DomainError("empty batch");
  const std::size_t c = classes_, d = dim_;
  const std::size_t h = hidden_ ? static_cast<std::size_t>(*hidden_) : 0;
  if (gradient) gradient->assign(params_.size(), 0.0);
  std::vector<double> pre, z, delta_hidden;
  double total = 0.0;
  for (std::size_t r : rows) {
    const auto x = data.features.row(r);
    const int y = data.observed[r];
    forward(x, pre, z);
    const double label_logit = z[y];
    total += softmax_inplace(z) - label_logit;
    if (!gradient) continue;
    double* g = gradient->data();
    z[y] -= 1.0;  // dL/dlogits
    if (!hidden_) {
      for (std::size_t k = 0; k < c; ++k) {
        double* gw = g + k * d;
        for (std::size_t j = 0; j < d; ++j) gw[j] += z[k] * x[j];
        g[c * d + k] += z[k];
      }
      continue;
    }
    const double* w2 = params_.data() + h * d + h;
    double* gb1 = g + h * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + c * h;
    delta_hidden.assign(h, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t u = 0; u < h; ++u) {
        gw2[k * h + u] += z[k] * std::max(pre[u], 0.0);
        delta_hidden[u] += z[k] * w2[k * h + u];
      }
      gb2[k] += z[k];
    }
    for (std::size_t u = 0; u < h; ++u) {
      if (pre[u] <= 0.0) continue;
      double* gw1 = g + u * d;
      for (std::size_t j = 0; j < d; ++j) gw1[j] += delta_hidden[u] * x[j];
      gb1[u] += delta_hidden[u];
    }
  }
  const double m = static_cast<double>(rows.size());
  if (gradient) {
    for (auto& v : *gradient) v /= m;
  }
  return total / m;
}

std::vector<double> SoftmaxLearner::sample_losses(const LabeledDataset& data,
                                                  std::span<const std::size_t> rows) const {
  check_dim(data, dim_);
  std::vector<double> losses(rows.size());
  std::vector<double> pre, z;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    forward(data.features.row(rows[k]), pre, z);
    const double label_logit = z[data.observed[rows[k]]];
    losses[k] = softmax_inplace(z) - label_logit;
  }
  return losses;
}

double SoftmaxLearner::sgd_step(const LabeledDataset& data, std::span<const std::size_t> rows,
                                double learning_rate) {
  std::vector<double> gradient;
  const double loss = loss_and_gradient(data, rows, &gradient);
  if (!std::isfinite(loss) || loss > kDivergenceLoss) {
    throw DivergenceError("mean batch loss " + std::to_string(loss) + " is non-finite or exploding");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= learning_rate * gradient[i];
  return loss;
}

void SoftmaxLearner::fit(const LabeledDataset& train, int epochs) {
  check_dim(train, dim_);
  if (train.classes != classes_) throw DomainError("training set class count differs from the learner's");
  if (train.size() == 0) return;
  std::vector<std::size_t> order(train.size());
  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  for (int e = 0; e < epochs; ++e) {
    const int epoch = ++epochs_trained_;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(config_.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    const double lr = config_.schedule.rate(epoch);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      sgd_step(train, std::span<const std::size_t>(order).subspan(start, len), lr);
    }
  }
}

std::vector<Prediction> SoftmaxLearner::predict(const LabeledDataset& data) const {
  check_dim(data, dim_);
  std::vector<Prediction> out(data.size());
  std::vector<double> pre;
  for (std::size_t r = 0; r < data.size(); ++r) {
    forward(data.features.row(r), pre, out[r].probabilities);
    softmax_inplace(out[r].probabilities);
    out[r].label = argmax(out[r].probabilities);
  }
  return out;
}

nlohmann::json SoftmaxLearner::checkpoint() const {
  return {{"kind", "softmax"},
          {"classes", classes_},
          {"dim", dim_},
          {"hidden", hidden_ ? nlohmann::json(*hidden_) : nlohmann::json(nullptr)},
          {"config", config_},
          {"epochs_trained", epochs_trained_},
          {"parameters", params_}};
}

std::unique_ptr<SoftmaxLearner> softmax_train(const LabeledDataset& data, const TrainConfig& config,
                                              std::optional<int> hidden) {
  auto learner = std::make_unique<SoftmaxLearner>(data.classes, static_cast<int>(data.dim()), config, hidden);
  learner->fit(data, config.epochs);
  return learner;
}

void to_json(nlohmann::json& j, const TrainConfig& config) {
  j = nlohmann::json{{"epochs", config.epochs},
                     {"batch_size", config.batch_size},
                     {"learning_rate", config.schedule.initial},
                     {"decay", config.schedule.decay},
                     {"seed", config.seed},
                     {"init_scale", config.init_scale}};
}

void from_json(const nlohmann::json& j, TrainConfig& config) {
  config.epochs = j.at("epochs").get<int>();
  config.batch_size = j.at("batch_size").get<int>();
  config.schedule.initial = j.at("learning_rate").get<double>();
  config.schedule.decay = j.at("decay").get<std::vector<std::pair<int, double>>>();
  config.seed = j.at("seed").get<std::uint64_t>();
  config.init_scale = j.value("init_scale", 1.0);
}

std::unique_ptr<Learner> learner_from_checkpoint(const nlohmann::json& checkpoint) {
  const auto kind = checkpoint.at("kind").get<std::string>();
  if (kind == "oracle") {
    return std::make_unique<OracleLearner>(TransitionMatrix(matrix_from_json(checkpoint.at("transition"))),
                                           checkpoint.at("seed").get<std::uint64_t>());
  }
  if (kind == "knn") {
    auto learner = std::make_unique<KnnLearner>(checkpoint.at("classes").get<int>(), checkpoint.at("k").get<int>());
    LabeledDataset train;
    train.classes = learner->classes();
    train.features = matrix_from_json(checkpoint.at("features"));
    train.observed = checkpoint.at("labels").get<std::vector<int>>();
    train.ids.resize(train.observed.size());
    if (!train.observed.empty()) learner->fit(train, 1);
    return learner;
  }
  if (kind == "softmax") {
    std::optional<int> hidden;
    if (!checkpoint.at("hidden").is_null()) hidden = checkpoint.at("hidden").get<int>();
    auto learner = std::make_unique<SoftmaxLearner>(checkpoint.at("classes").get<int>(),
                                                    checkpoint.at("dim").get<int>(),
                                                    checkpoint.at("config").get<TrainConfig>(), hidden);
    learner->set_parameters(checkpoint.at("parameters").get<std::vector<double>>());
    learner->set_epochs_trained(checkpoint.value("epochs_trained", 0));
    return learner;
  }
  throw DomainError("unknown learner kind '" + kind + "'");
}

}  // namespace labnoise
