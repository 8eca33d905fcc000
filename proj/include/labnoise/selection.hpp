#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labnoise/dataset.hpp"
#include "labnoise/learners.hpp"
#include "labnoise/matrix.hpp"
#include "json.hpp"

namespace labnoise {

// Which closed-form law inverts the fold agreement rate into a noise ratio.
enum class EpsilonEstimator { symmetric, asymmetric };

struct IterationRecord {
  int iteration = 0;
  std::size_t selected_fold1 = 0;  // |S1|, picked from C2 by the learner trained on C1
  std::size_t selected_fold2 = 0;  // |S2|
  std::size_t removed_fold1 = 0;   // |R1|
  std::size_t removed_fold2 = 0;   // |R2|
  double accuracy_fold1 = 0.0;     // |S1| / |C2|
  double accuracy_fold2 = 0.0;     // |S2| / |C1|
  double remove_ratio = 0.0;       // r in effect during this iteration
  std::size_t selected_total = 0;  // |S| after the iteration
  std::size_t candidate_total = 0;
  std::size_t removed_total = 0;
};

// S, C and R partition the input ids. Id lists are sorted ascending.
struct SelectionResult {
  std::vector<std::int64_t> selected;
  std::vector<std::int64_t> candidate;
  std::vector<std::int64_t> removed;
  double epsilon_hat = 0.0;
  bool epsilon_clamped = false;
  std::vector<IterationRecord> history;
  std::optional<std::string> halted;  // reason when stopped before N iterations
};

// Throws ValidationError unless S, C, R are disjoint and cover `ids`.
void check_partition(const SelectionResult& result, std::span<const std::int64_t> ids);

struct RemoveRatio {
  // nullopt means automatic: 0 during iteration 1, then eps_hat / (1 - eps_hat).
  std::optional<double> fixed;

  static RemoveRatio automatic() { return {}; }
  static RemoveRatio value(double r) { return {r}; }
};

struct IncvOptions {
  int iterations = 4;
  int epochs = 50;
  RemoveRatio remove_ratio = RemoveRatio::automatic();
  EpsilonEstimator estimator = EpsilonEstimator::symmetric;
  std::uint64_t seed = 0;
  // Called after every iteration with the running result.
  std::function<void(const SelectionResult&)> on_iteration;
};

// Noisy cross-validation: one split, two folds, agreement-based selection.
SelectionResult ncv(const LabeledDataset& data, const LearnerFactory& factory, int epochs,
                    std::uint64_t seed, EpsilonEstimator estimator = EpsilonEstimator::symmetric);

// Iterative noisy cross-validation with large-loss removal.
SelectionResult incv(const LabeledDataset& data, const LearnerFactory& factory, const IncvOptions& options);

struct ConfusionMatrix {
  Matrix rates;                      // rates(i, j) = P(pred = j | true = i)
  std::vector<std::size_t> support;  // samples per true class; 0 rows are all-zero

  bool row_supported(int i) const { return support[static_cast<std::size_t>(i)] > 0; }
};

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> truth, int classes);
ConfusionMatrix confusion_matrix(std::span<const Prediction> predictions, std::span<const int> truth,
                                 int classes);

struct SelectionMetrics {
  double lp = 0.0;
  double lr = 0.0;
  std::vector<std::optional<double>> lp_class;  // nullopt: no selected sample of that true class
  std::vector<std::optional<double>> lr_class;  // nullopt: no clean sample of that class in D
  // Observed-vs-true label transition inside S (the selected set's own noise).
  ConfusionMatrix confusion;
  double eps_s = 0.0;  // 1 - lp
};

// Requires true labels. Throws UndefinedMetricError when S is empty or D has
// no clean sample.
SelectionMetrics selection_metrics(std::span<const std::int64_t> selected, const LabeledDataset& data);

void to_json(nlohmann::json& j, const SelectionResult& result);
void from_json(const nlohmann::json& j, SelectionResult& result);

}  // namespace labnoise
