#include "labnoise/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "labnoise/error.hpp"
#include "labnoise/rng.hpp"
#include "labnoise/theory.hpp"

namespace labnoise {
namespace {

constexpr std::uint64_t kSplitStream = 21;
constexpr std::uint64_t kLearnerStream = 22;

using Rows = std::vector<std::size_t>;

Rows merge_sorted(const Rows& a, const Rows& b) {
  Rows out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<std::int64_t> ids_of(const LabeledDataset& data, const Rows& rows) {
  std::vector<std::int64_t> ids;
  ids.reserve(rows.size());
  for (auto r : rows) ids.push_back(data.ids[r]);
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct FoldOutcome {
  Rows selected;
  Rows removed;
  double accuracy = 0.0;
};

// Trains on `train_rows`, keeps the rows of `eval_rows` whose observed label
// the learner reproduces, and marks the floor(r * |selected|) largest-loss
// rows among the rest for removal (ties: smaller id first).
FoldOutcome run_fold(const LabeledDataset& data, const Rows& train_rows, const Rows& eval_rows,
                     const LearnerFactory& factory, std::uint64_t learner_seed, int epochs, double remove_ratio) {
  auto learner = factory(learner_seed);
  learner->fit(data.subset(train_rows), epochs);
  const LabeledDataset eval = data.subset(eval_rows);
  const auto predictions = learner->predict(eval);
  const auto losses = per_sample_loss(predictions, eval.observed);

  FoldOutcome out;
  std::vector<std::size_t> rest;  // positions in eval_rows
  for (std::size_t k = 0; k < eval_rows.size(); ++k) {
    if (predictions[k].label == eval.observed[k]) {
      out.selected.push_back(eval_rows[k]);
    } else {
      rest.push_back(k);
    }
  }
  out.accuracy = eval_rows.empty() ? 0.0 : static_cast<double>(out.selected.size()) / eval_rows.size();

  const auto to_remove = std::min(
      rest.size(), static_cast<std::size_t>(std::floor(remove_ratio * static_cast<double>(out.selected.size()))));
  if (to_remove > 0) {
    std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
      if (losses[a] != losses[b]) return losses[a] > losses[b];
      return eval.ids[a] < eval.ids[b];
    });
    for (std::size_t k = 0; k < to_remove; ++k) out.removed.push_back(eval_rows[rest[k]]);
    std::sort(out.removed.begin(), out.removed.end());
  }
  return out;
}

Rows set_difference(const Rows& from, const Rows& minus) {
  Rows out;
  std::set_difference(from.begin(), from.end(), minus.begin(), minus.end(), std::back_inserter(out));
  return out;
}

SelectionResult run_incv(const LabeledDataset& data, const LearnerFactory& factory, const IncvOptions& options) {
  if (options.iterations < 1) throw DomainError("INCV needs at least one iteration");
  if (options.remove_ratio.fixed && !(*options.remove_ratio.fixed >= 0.0)) {
    throw DomainError("remove ratio must be >= 0");
  }
  if (data.size() < 2) throw DomainError("selection needs at least 2 samples");

  Rows selected, removed;
  Rows candidate(data.size());
  std::iota(candidate.begin(), candidate.end(), std::size_t{0});
  SelectionResult result;
  double remove_ratio = options.remove_ratio.fixed.value_or(0.0);

  auto publish = [&] {
    result.selected = ids_of(data, selected);
    result.candidate = ids_of(data, candidate);
    result.removed = ids_of(data, removed);
  };

  for (int it = 1; it <= options.iterations; ++it) {
    if (candidate.size() < 2) {
      result.halted = "candidate set has " + std::to_string(candidate.size()) + " sample(s) before iteration " +
                      std::to_string(it);
      break;
    }
    const auto [pos1, pos2] = split_half_rows(candidate.size(), derive_seed(options.seed, kSplitStream, it));
    Rows c1, c2;
    for (auto p : pos1) c1.push_back(candidate[p]);
    for (auto p : pos2) c2.push_back(candidate[p]);

    const auto fold1 = run_fold(data, merge_sorted(selected, c1), c2, factory,
                                derive_seed(options.seed, kLearnerStream, 2 * it), options.epochs, remove_ratio);
    const auto fold2 = run_fold(data, merge_sorted(selected, c2), c1, factory,
                                derive_seed(options.seed, kLearnerStream, 2 * it + 1), options.epochs, remove_ratio);

    IterationRecord record;
    record.iteration = it;
    record.selected_fold1 = fold1.selected.size();
    record.selected_fold2 = fold2.selected.size();
    record.removed_fold1 = fold1.removed.size();
    record.removed_fold2 = fold2.removed.size();
    record.accuracy_fold1 = fold1.accuracy;
    record.accuracy_fold2 = fold2.accuracy;
    record.remove_ratio = remove_ratio;

    if (it == 1) {
      const double rate = static_cast<double>(fold1.selected.size() + fold2.selected.size()) / candidate.size();
      const auto estimate = options.estimator == EpsilonEstimator::symmetric
                                ? estimate_epsilon_symmetric(rate, data.classes)
                                : estimate_epsilon_asymmetric(rate);
      result.epsilon_hat = estimate.epsilon;
      result.epsilon_clamped = estimate.clamped;
      if (estimate.clamped) warn("fold agreement rate below the accuracy law's minimum; noise estimate clamped");
      if (!options.remove_ratio.fixed) remove_ratio = estimate.epsilon / (1.0 - estimate.epsilon);
    }

    const Rows new_selected = merge_sorted(fold1.selected, fold2.selected);
    const Rows new_removed = merge_sorted(fold1.removed, fold2.removed);
    selected = merge_sorted(selected, new_selected);
    removed = merge_sorted(removed, new_removed);
    candidate = set_difference(set_difference(candidate, new_selected), new_removed);

    record.selected_total = selected.size();
    record.candidate_total = candidate.size();
    record.removed_total = removed.size();
    result.history.push_back(record);
    publish();
    if (options.on_iteration) options.on_iteration(result);
  }
  publish();
  return result;
}

}  // namespace

void check_partition(const SelectionResult& result, std::span<const std::int64_t> ids) {
  std::unordered_set<std::int64_t> seen;
  seen.reserve(ids.size());
  for (const auto* part : {&result.selected, &result.candidate, &result.removed}) {
    for (auto id : *part) {
      if (!seen.insert(id).second) throw ValidationError("id " + std::to_string(id) + " assigned twice");
    }
  }
  if (seen.size() != ids.size()) throw ValidationError("selection does not cover the dataset");
  for (auto id : ids) {
    if (!seen.count(id)) throw ValidationError("id " + std::to_string(id) + " missing from selection");
  }
}

SelectionResult ncv(const LabeledDataset& data, const LearnerFactory& factory, int epochs, std::uint64_t seed,
                    EpsilonEstimator estimator) {
  IncvOptions options;
  options.iterations = 1;
  options.epochs = epochs;
  options.remove_ratio = RemoveRatio::value(0.0);
  options.estimator = estimator;
  options.seed = seed;
  return run_incv(data, factory, options);
}

SelectionResult incv(const LabeledDataset& data, const LearnerFactory& factory, const IncvOptions& options) {
  return run_incv(data, factory, options);
}

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> truth, int classes) {
  if (predictions.size() != truth.size()) throw DomainError("prediction and truth lengths differ");
  if (classes < 1) throw DomainError("class count must be positive");
  ConfusionMatrix m{Matrix(classes, classes), std::vector<std::size_t>(classes, 0)};
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const int i = truth[t], j = predictions[t];
    if (i < 0 || i >= classes || j < 0 || j >= classes) throw DomainError("label outside [0, c)");
    m.rates(i, j) += 1.0;
    ++m.support[i];
  }
  for (int i = 0; i < classes; ++i) {
    if (m.support[i] == 0) continue;
    for (auto& v : m.rates.row(i)) v /= static_cast<double>(m.support[i]);
  }
  return m;
}

ConfusionMatrix confusion_matrix(std::span<const Prediction> predictions, std::span<const int> truth, int classes) {
  std::vector<int> labels(predictions.size());
  for (std::size_t t = 0; t < predictions.size(); ++t) labels[t] = predictions[t].label;
  return confusion_matrix(labels, truth, classes);
}

SelectionMetrics selection_metrics(std::span<const std::int64_t> selected, const LabeledDataset& data) {
  if (!data.truth) throw ValidationError("selection metrics need true labels");
  const auto& truth = *data.truth;
  const int c = data.classes;
  std::unordered_map<std::int64_t, std::size_t> row_of;
  row_of.reserve(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) row_of.emplace(data.ids[r], r);

  std::vector<std::size_t> clean_in_d(c, 0), clean_in_s(c, 0), true_in_s(c, 0);
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (data.observed[r] == truth[r]) ++clean_in_d[truth[r]];
  }
  std::vector<int> s_observed, s_truth;
  s_observed.reserve(selected.size());
  s_truth.reserve(selected.size());
  for (auto id : selected) {
    const auto it = row_of.find(id);
    if (it == row_of.end()) throw ValidationError("selected id " + std::to_string(id) + " not in dataset");
    const std::size_t r = it->second;
    ++true_in_s[truth[r]];
    if (data.observed[r] == truth[r]) ++clean_in_s[truth[r]];
    s_observed.push_back(data.observed[r]);
    s_truth.push_back(truth[r]);
  }

  const std::size_t clean_s = std::accumulate(clean_in_s.begin(), clean_in_s.end(), std::size_t{0});
  const std::size_t clean_d = std::accumulate(clean_in_d.begin(), clean_in_d.end(), std::size_t{0});
  if (selected.empty()) throw UndefinedMetricError("label precision undefined: selected set is empty");
  if (clean_d == 0) throw UndefinedMetricError("label recall undefined: dataset has no clean sample");

  SelectionMetrics m;
  m.lp = static_cast<double>(clean_s) / static_cast<double>(selected.size());
  m.lr = static_cast<double>(clean_s) / static_cast<double>(clean_d);
  m.eps_s = 1.0 - m.lp;
  m.lp_class.resize(c);
  m.lr_class.resize(c);
  for (int i = 0; i < c; ++i) {
    if (true_in_s[i] > 0) m.lp_class[i] = static_cast<double>(clean_in_s[i]) / true_in_s[i];
    if (clean_in_d[i] > 0) m.lr_class[i] = static_cast<double>(clean_in_s[i]) / clean_in_d[i];
  }
  m.confusion = confusion_matrix(s_observed, s_truth, c);
  return m;
}

void to_json(nlohmann::json& j, const SelectionResult& result) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : result.history) {
    history.push_back({{"iteration", h.iteration},
                       {"s1", h.selected_fold1},
                       {"s2", h.selected_fold2},
                       {"r1", h.removed_fold1},
                       {"r2", h.removed_fold2},
                       {"acc1", h.accuracy_fold1},
                       {"acc2", h.accuracy_fold2},
                       {"remove_ratio", h.remove_ratio},
                       {"selected_total", h.selected_total},
                       {"candidate_total", h.candidate_total},
                       {"removed_total", h.removed_total}});
  }
  j = nlohmann::json{{"selected", result.selected},
                     {"candidate", result.candidate},
                     {"removed", result.removed},
                     {"epsilon_hat", result.epsilon_hat},
                     {"epsilon_clamped", result.epsilon_clamped},
                     {"history", history},
                     {"halted", result.halted ? nlohmann::json(*result.halted) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, SelectionResult& result) {
  result = SelectionResult{};
  result.selected = j.at("selected").get<std::vector<std::int64_t>>();
  result.candidate = j.at("candidate").get<std::vector<std::int64_t>>();
  result.removed = j.at("removed").get<std::vector<std::int64_t>>();
  result.epsilon_hat = j.at("epsilon_hat").get<double>();
  result.epsilon_clamped = j.value("epsilon_clamped", false);
  if (j.contains("history")) {
    for (const auto& h : j.at("history")) {
      IterationRecord r;
      r.iteration = h.at("iteration").get<int>();
      r.selected_fold1 = h.at("s1").get<std::size_t>();
      r.selected_fold2 = h.at("s2").get<std::size_t>();
      r.removed_fold1 = h.at("r1").get<std::size_t>();
      r.removed_fold2 = h.at("r2").get<std::size_t>();
      r.accuracy_fold1 = h.at("acc1").get<double>();
      r.accuracy_fold2 = h.at("acc2").get<double>();
      r.remove_ratio = h.at("remove_ratio").get<double>();
      r.selected_total = h.at("selected_total").get<std::size_t>();
      r.candidate_total = h.at("candidate_total").get<std::size_t>();
      r.removed_total = h.at("removed_total").get<std::size_t>();
      result.history.push_back(r);
    }
  }
  if (j.contains("halted") && !j.at("halted").is_null()) result.halted = j.at("halted").get<std::string>();
}

}  // namespace labnoise
