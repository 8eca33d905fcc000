#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "labnoise/dataset.hpp"
#include "labnoise/matrix.hpp"
#include "labnoise/noise_model.hpp"
#include "json.hpp"

namespace labnoise {

inline constexpr double kMinProbability = 1e-12;

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;

  double log_probability(int j) const;
};

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

// Trainable classifier f(x; w). Implementations are single-threaded while
// training; predict() is const and may be called concurrently.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::string_view kind() const = 0;
  virtual int classes() const = 0;

  // Restores the freshly constructed state; nothing from earlier training
  // survives.
  virtual void reinitialize() = 0;

  virtual void fit(const LabeledDataset& train, int epochs) = 0;
  virtual std::vector<Prediction> predict(const LabeledDataset& data) const = 0;

  virtual nlohmann::json checkpoint() const = 0;
};

using LearnerFactory = std::function<std::unique_ptr<Learner>(std::uint64_t seed)>;

// Cross-entropy -log p(observed | x) per sample, p clamped at 1e-12.
std::vector<double> per_sample_loss(std::span<const Prediction> predictions, std::span<const int> labels);
std::vector<double> per_sample_loss(const Learner& learner, const LabeledDataset& data);

// Fraction of predictions equal to `labels`.
double accuracy(std::span<const Prediction> predictions, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Distributional oracle: a sample of true class i is predicted as j with
// probability T_ij, independently per sample. The draw is a hash of
// (seed, sample id), so a given learner always answers the same way for the
// same sample. Requires true labels at prediction time.
//
// The reported distribution is 0.5 * onehot(drawn label) + 0.5 * T[i], whose
// argmax is always the drawn label; the T[i] part gives label-dependent
// losses for large-loss removal.
class OracleLearner final : public Learner {
 public:
  OracleLearner(TransitionMatrix transition, std::uint64_t seed);

  std::string_view kind() const override { return "oracle"; }
  int classes() const override { return transition_.classes(); }
  void reinitialize() override {}
  void fit(const LabeledDataset& train, int epochs) override;
  std::vector<Prediction> predict(const LabeledDataset& data) const override;
  nlohmann::json checkpoint() const override;

  const TransitionMatrix& transition() const { return transition_; }
  std::uint64_t seed() const { return seed_; }

 private:
  TransitionMatrix transition_;
  std::uint64_t seed_;
};

// Builds an oracle learner; `seed` fixes its per-sample draws.
std::unique_ptr<OracleLearner> oracle_train(const TransitionMatrix& transition, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Brute-force k-nearest-neighbour vote under Euclidean distance. Distance
// ties go to the earlier training row. Probabilities are Laplace-smoothed
// vote fractions (count + 1) / (k + c).
class KnnLearner final : public Learner {
 public:
  KnnLearner(int classes, int k);

  std::string_view kind() const override { return "knn"; }
  int classes() const override { return classes_; }
  int k() const { return k_; }
  void reinitialize() override;
  void fit(const LabeledDataset& train, int epochs) override;
  std::vector<Prediction> predict(const LabeledDataset& data) const override;
  nlohmann::json checkpoint() const override;

 private:
  int classes_;
  int k_;
  Matrix train_features_;
  std::vector<int> train_labels_;
};

std::unique_ptr<KnnLearner> knn_train(const LabeledDataset& data, int k);

// ---------------------------------------------------------------------------

// Step-decay learning rate: rate(e) = initial * product of factors whose
// epoch threshold is < e (epochs are 1-based).
struct LearningSchedule {
  double initial = 0.1;
  std::vector<std::pair<int, double>> decay;  // (after epoch, multiplier)

  double rate(int epoch) const;
  bool operator==(const LearningSchedule&) const = default;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  LearningSchedule schedule;
  std::uint64_t seed = 0;
  // Multiplier on the default (He-style) init; 0 gives all-zero weights.
  double init_scale = 1.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Learner updated by explicit gradient steps on chosen rows; what the
// co-training loop needs.
class GradientLearner : public Learner {
 public:
  virtual std::vector<double> sample_losses(const LabeledDataset& data,
                                            std::span<const std::size_t> rows) const = 0;
  // One SGD step on the mean cross-entropy over `rows`; returns the pre-step
  // mean loss. Throws DivergenceError on a non-finite or exploding loss.
  virtual double sgd_step(const LabeledDataset& data, std::span<const std::size_t> rows,
                          double learning_rate) = 0;
  virtual double learning_rate(int epoch) const = 0;
};

using GradientLearnerFactory = std::function<std::unique_ptr<GradientLearner>(std::uint64_t seed)>;

// Multinomial logistic regression, or a one-hidden-layer ReLU network when
// `hidden` is set, trained by mini-batch SGD on cross-entropy.
//
// Parameter layout (flattened, row-major):
//   linear:  W [c x d], b [c]
//   hidden:  W1 [h x d], b1 [h], W2 [c x h], b2 [c]
class SoftmaxLearner final : public GradientLearner {
 public:
  SoftmaxLearner(int classes, int dim, TrainConfig config, std::optional<int> hidden = std::nullopt);

  std::string_view kind() const override { return "softmax"; }
  int classes() const override { return classes_; }
  int dim() const { return dim_; }
  std::optional<int> hidden() const { return hidden_; }
  const TrainConfig& config() const { return config_; }

  void reinitialize() override;
  void fit(const LabeledDataset& train, int epochs) override;
  std::vector<Prediction> predict(const LabeledDataset& data) const override;
  nlohmann::json checkpoint() const override;

  std::vector<double> sample_losses(const LabeledDataset& data,
                                    std::span<const std::size_t> rows) const override;
  double sgd_step(const LabeledDataset& data, std::span<const std::size_t> rows,
                  double learning_rate) override;
  double learning_rate(int epoch) const override { return config_.schedule.rate(epoch); }

  // Mean cross-entropy over `rows`, and its gradient w.r.t. parameters()
  // when `gradient` is non-null.
  double loss_and_gradient(const LabeledDataset& data, std::span<const std::size_t> rows,
                           std::vector<double>* gradient) const;

  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::span<const double> values);

  // Epochs run since the last reinitialize(); drives the shuffle stream.
  int epochs_trained() const { return epochs_trained_; }
  void set_epochs_trained(int epochs) { epochs_trained_ = epochs; }

 private:
  void forward(std::span<const double> x, std::vector<double>& hidden_act,
               std::vector<double>& probs) const;

  int classes_;
  int dim_;
  TrainConfig config_;
  std::optional<int> hidden_;
  std::vector<double> params_;
  int epochs_trained_ = 0;
};

std::unique_ptr<SoftmaxLearner> softmax_train(const LabeledDataset& data, const TrainConfig& config,
                                              std::optional<int> hidden = std::nullopt);

// Rebuilds any learner from checkpoint().
std::unique_ptr<Learner> learner_from_checkpoint(const nlohmann::json& checkpoint);

void to_json(nlohmann::json& j, const TrainConfig& config);
void from_json(const nlohmann::json& j, TrainConfig& config);

}  // namespace labnoise
