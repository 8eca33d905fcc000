#include "labnoise/cotraining.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "labnoise/error.hpp"
#include "labnoise/format.hpp"
#include "labnoise/rng.hpp"
#include "labnoise/selection.hpp"
#include "labnoise/theory.hpp"

namespace labnoise {
namespace {

constexpr std::uint64_t kSelectedShuffle = 31;
constexpr std::uint64_t kCandidateShuffle = 32;
constexpr int kRampEpochs = 10;

// Positions of the `keep` smallest losses, returned in batch order. Ties go
// to the earlier position.
std::vector<std::size_t> smallest(const std::vector<double>& losses, std::size_t keep) {
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  order.resize(std::min(keep, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

double score(const GradientLearner& learner, const LabeledDataset& test) {
  const auto predictions = learner.predict(test);
  return accuracy(predictions, test.truth ? *test.truth : test.observed);
}

}  // namespace

int keep_count(int epoch, int batch_total, double selected_noise) {
  if (epoch < 0) throw DomainError("epoch must be >= 0");
  const double ramp = std::min(static_cast<double>(epoch) / kRampEpochs, 1.0);
  const int kept = static_cast<int>(std::floor(batch_total * (1.0 - selected_noise * ramp)));
  return std::max(kept, 1);
}

BatchMix batch_mix(std::size_t selected_size, std::size_t candidate_size, int base) {
  if (base < 1) throw DomainError("base batch size must be >= 1");
  if (selected_size == 0) throw DomainError("selected set is empty");
  if (candidate_size == 0) return {base, 0};
  const double ratio = std::min(0.5, static_cast<double>(candidate_size) / static_cast<double>(selected_size));
  return {base, static_cast<int>(std::lround(base * ratio))};
}

void CoTrainConfig::validate() const {
  if (warmup_epochs < 0 || warmup_epochs > total_epochs) {
    throw DomainError("warm-up epochs must lie in [0, total epochs]");
  }
  if (total_epochs < 1) throw DomainError("total epochs must be >= 1");
  if (batch_size < 2) throw DomainError("batch size must be >= 2");
  if (!(selected_noise >= 0.0 && selected_noise < 1.0)) throw DomainError("selected-set noise must lie in [0, 1)");
}

CoTrainResult cotrain(const LabeledDataset& selected, const LabeledDataset& candidate, const CoTrainConfig& config,
                      const GradientLearnerFactory& factory, const LabeledDataset* clean_test,
                      const std::function<void(const CoTrainStep&)>& on_step) {
  config.validate();
  if (selected.size() == 0) throw DomainError("co-training needs a non-empty selected set");

  // One pool: rows [0, |S|) are S, the rest are C.
  const LabeledDataset pool = concat(selected, candidate);
  const std::size_t n_s = selected.size();
  const std::size_t n_c = candidate.size();
  const BatchMix mix = batch_mix(n_s, n_c, config.batch_size);
  const std::size_t bs = static_cast<std::size_t>(mix.from_selected);
  const std::size_t bc = static_cast<std::size_t>(mix.from_candidate);
  const std::size_t batches = (n_s + bs - 1) / bs;

  CoTrainResult result;
  result.f1 = factory(config.seed);
  result.f2 = factory(config.seed + 1);
  auto& report = result.report;
  report.noise_source = config.noise_source;

  std::vector<std::size_t> s_order(n_s), c_order(n_c);
  for (int epoch = 1; epoch <= config.total_epochs; ++epoch) {
    const bool use_candidates = epoch > config.warmup_epochs && n_c > 0;
    std::iota(s_order.begin(), s_order.end(), std::size_t{0});
    Rng s_rng(derive_seed(config.seed, kSelectedShuffle, static_cast<std::uint64_t>(epoch)));
    s_rng.shuffle(s_order);
    std::iota(c_order.begin(), c_order.end(), n_s);
    Rng c_rng(derive_seed(config.seed, kCandidateShuffle, static_cast<std::uint64_t>(epoch)));
    c_rng.shuffle(c_order);
    std::size_t c_cursor = 0;
    std::size_t c_used = 0;
    const double lr1 = result.f1->learning_rate(epoch);
    const double lr2 = result.f2->learning_rate(epoch);

    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t start = b * bs;
      const std::size_t len = std::min(bs, n_s - start);
      std::vector<std::size_t> batch(s_order.begin() + static_cast<std::ptrdiff_t>(start),
                                     s_order.begin() + static_cast<std::ptrdiff_t>(start + len));
      if (use_candidates) {
        for (std::size_t k = 0; k < bc; ++k) {
          if (c_cursor == n_c) {
            c_rng.shuffle(c_order);
            c_cursor = 0;
          }
          batch.push_back(c_order[c_cursor++]);
        }
        c_used += bc;
      }
      const auto keep = static_cast<std::size_t>(keep_count(epoch, static_cast<int>(len), config.selected_noise));
      const auto losses1 = result.f1->sample_losses(pool, batch);
      const auto losses2 = result.f2->sample_losses(pool, batch);
      std::vector<std::size_t> kept1, kept2;  // rows of pool
      for (auto p : smallest(losses1, keep)) kept1.push_back(batch[p]);
      for (auto p : smallest(losses2, keep)) kept2.push_back(batch[p]);

      if (on_step) {
        CoTrainStep step;
        step.epoch = epoch;
        step.batch = b;
        for (auto r : batch) step.batch_ids.push_back(pool.ids[r]);
        for (auto r : kept1) step.kept_by_f1.push_back(pool.ids[r]);
        for (auto r : kept2) step.kept_by_f2.push_back(pool.ids[r]);
        on_step(step);
      }
      result.f1->sgd_step(pool, kept2, lr1);
      result.f2->sgd_step(pool, kept1, lr2);
    }

    report.keep.push_back(keep_count(epoch, config.batch_size, config.selected_noise));
    report.candidate_used.push_back(c_used);
    if (clean_test && clean_test->size() > 0) {
      report.accuracy_f1.push_back(score(*result.f1, *clean_test));
      report.accuracy_f2.push_back(score(*result.f2, *clean_test));
    } else {
      report.accuracy_f1.push_back(std::numeric_limits<double>::quiet_NaN());
      report.accuracy_f2.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return result;
}

std::pair<double, std::string> default_selected_noise(std::span<const std::int64_t> selected,
                                                      const LabeledDataset& data, double epsilon_hat) {
  if (data.truth && !selected.empty()) {
    return {selection_metrics(selected, data).eps_s, "measured"};
  }
  const auto point = theory_curve(NoiseKind::symmetric, data.classes, std::span<const double>(&epsilon_hat, 1));
  return {point.front().eps_s, "theory"};
}

std::string cotrain_report_csv(const CoTrainReport& report) {
  std::ostringstream out;
  out << "epoch,n_e,acc_f1,acc_f2,c_samples_used\n";
  for (std::size_t e = 0; e < report.keep.size(); ++e) {
    out << (e + 1) << ',' << report.keep[e] << ',' << format_double(report.accuracy_f1[e]) << ','
        << format_double(report.accuracy_f2[e]) << ',' << report.candidate_used[e] << '\n';
  }
  return out.str();
}

}  // namespace labnoise
