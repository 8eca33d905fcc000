#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "labnoise/dataset.hpp"
#include "labnoise/learners.hpp"

namespace labnoise {

// floor(batch_total * (1 - eps_s * min(e / 10, 1))), at least 1.
int keep_count(int epoch, int batch_total, double selected_noise);

struct BatchMix {
  int from_selected;
  int from_candidate;
};

// |B_C| = round(base * min(0.5, |C| / |S|)); throws DomainError when S is empty.
BatchMix batch_mix(std::size_t selected_size, std::size_t candidate_size, int base);

struct CoTrainConfig {
  int warmup_epochs = 0;   // E0: epochs 1..E0 draw from S only
  int total_epochs = 1;    // E_max
  int batch_size = 128;    // |B_S|
  double selected_noise = 0.0;  // eps_S
  std::string noise_source = "given";
  std::uint64_t seed = 0;

  void validate() const;
};

struct CoTrainReport {
  std::vector<double> accuracy_f1;  // clean-test accuracy after each epoch (NaN without a test set)
  std::vector<double> accuracy_f2;
  std::vector<int> keep;            // n(e) for a full S-batch
  std::vector<std::size_t> candidate_used;  // C samples drawn into batches
  std::string noise_source;
};

// One mini-batch step, for inspection. Ids, in batch order.
struct CoTrainStep {
  int epoch = 0;
  std::size_t batch = 0;
  std::vector<std::int64_t> batch_ids;
  std::vector<std::int64_t> kept_by_f1;  // small-loss under f1; used to update f2
  std::vector<std::int64_t> kept_by_f2;  // small-loss under f2; used to update f1
};

struct CoTrainResult {
  std::unique_ptr<GradientLearner> f1;
  std::unique_ptr<GradientLearner> f2;
  CoTrainReport report;
};

// Two learners (seeds cfg.seed and cfg.seed + 1) exchange small-loss subsets
// of each batch. `clean_test` is scored with its true labels when present,
// otherwise with its observed labels.
CoTrainResult cotrain(const LabeledDataset& selected, const LabeledDataset& candidate, const CoTrainConfig& config,
                      const GradientLearnerFactory& factory, const LabeledDataset* clean_test = nullptr,
                      const std::function<void(const CoTrainStep&)>& on_step = {});

// eps_S for the co-training stage: 1 - LP when `data` has true labels,
// otherwise the LP predicted from eps_hat by the symmetric law. The second
// member names the source ("measured" or "theory").
std::pair<double, std::string> default_selected_noise(std::span<const std::int64_t> selected,
                                                      const LabeledDataset& data, double epsilon_hat);

// Header: epoch,n_e,acc_f1,acc_f2,c_samples_used
std::string cotrain_report_csv(const CoTrainReport& report);

}  // namespace labnoise
