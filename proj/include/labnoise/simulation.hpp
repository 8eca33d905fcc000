#pragma once

#include <cstdint>
#include <string>

#include "labnoise/matrix.hpp"
#include "labnoise/noise_model.hpp"

namespace labnoise {

enum class SimulatedLearner { oracle, knn };

// One Monte Carlo point: corrupt a balanced dataset with T, train on one
// half, predict the other, and run one NCV pass.
struct SimulationSpec {
  SimulatedLearner learner = SimulatedLearner::oracle;
  NoiseKind kind = NoiseKind::symmetric;
  int classes = 10;
  double epsilon = 0.5;
  long long n = 100000;  // total samples; half train, half test
  // Blob geometry for the knn learner (the oracle ignores features).
  int dim = 10;
  double separation = 20.0;
  double spread = 1.0;
  int k = 1;
  std::uint64_t seed = 0;
};

struct SimulationOutcome {
  TransitionMatrix transition = TransitionMatrix::identity(2);
  double acc_theory = 0.0;
  double acc_emp = 0.0;     // prediction vs noisy test label
  double lp_theory = 0.0;   // pooled over classes
  double lp_emp = 0.0;      // from one NCV pass over the whole set
  double lr_theory = 0.0;
  double lr_emp = 0.0;
  Matrix confusion;         // prediction vs true test label
  double max_m_dev = 0.0;   // max |M - T|
  long long samples = 0;

  double max_dev() const;   // max deviation of accuracy, LP and LR
};

SimulationOutcome simulate(const SimulationSpec& spec);

}  // namespace labnoise
