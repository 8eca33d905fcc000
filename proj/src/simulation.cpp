#include "labnoise/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "labnoise/dataset.hpp"
#include "labnoise/error.hpp"
#include "labnoise/learners.hpp"
#include "labnoise/rng.hpp"
#include "labnoise/selection.hpp"
#include "labnoise/theory.hpp"

namespace labnoise {

double SimulationOutcome::max_dev() const {
  return std::max({std::abs(acc_emp - acc_theory), std::abs(lp_emp - lp_theory), std::abs(lr_emp - lr_theory)});
}

SimulationOutcome simulate(const SimulationSpec& spec) {
  const int c = spec.classes;
  if (spec.n < 2LL * c) throw DomainError("simulation needs at least two samples per class");
  if (spec.kind == NoiseKind::custom) throw DomainError("simulation supports symmetric or asymmetric noise");

  SimulationOutcome out;
  out.transition = spec.kind == NoiseKind::symmetric ? symmetric_matrix(c, spec.epsilon)
                                                     : asymmetric_matrix(c, spec.epsilon, cyclic_mapping(c));
  const TransitionMatrix& t = out.transition;
  const auto per_class = static_cast<int>(spec.n / c);
  const bool oracle = spec.learner == SimulatedLearner::oracle;

  LabeledDataset data = oracle ? make_blobs({c, 1, per_class, 0.0, 1.0, derive_seed(spec.seed, 0)})
                               : make_blobs({c, spec.dim, per_class, spec.separation, spec.spread,
                                             derive_seed(spec.seed, 0)});
  data.observed = corrupt_labels(*data.truth, t, derive_seed(spec.seed, 1));
  out.samples = static_cast<long long>(data.size());

  const auto [train, test] = split_half(data, derive_seed(spec.seed, 2));
  std::unique_ptr<Learner> learner;
  if (oracle) {
    learner = oracle_train(t, derive_seed(spec.seed, 3));
  } else {
    learner = knn_train(train, spec.k);
  }
  const auto predictions = learner->predict(test);
  out.acc_emp = accuracy(predictions, test.observed);
  out.confusion = confusion_matrix(predictions, *test.truth, c).rates;
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) out.max_m_dev = std::max(out.max_m_dev, std::abs(out.confusion(i, j) - t(i, j)));
  }

  LearnerFactory factory;
  if (oracle) {
    factory = [&t](std::uint64_t s) -> std::unique_ptr<Learner> { return oracle_train(t, s); };
  } else {
    factory = [c, k = spec.k](std::uint64_t) -> std::unique_ptr<Learner> { return std::make_unique<KnnLearner>(c, k); };
  }
  const auto selection = ncv(data, factory, 1, derive_seed(spec.seed, 4));
  const auto metrics = selection_metrics(selection.selected, data);
  out.lp_emp = metrics.lp;
  out.lr_emp = metrics.lr;

  // Classes are balanced, so pooled values are plain class averages.
  double diag2 = 0.0, diag = 0.0;
  for (int i = 0; i < c; ++i) {
    out.acc_theory += class_accuracy(t, i) / c;
    diag2 += t(i, i) * t(i, i) / c;
    diag += t(i, i) / c;
  }
  out.lp_theory = diag2 / out.acc_theory;
  out.lr_theory = diag > 0.0 ? diag2 / diag : 0.0;
  return out;
}

}  // namespace labnoise
