#pragma once

#include <span>
#include <string>
#include <vector>

#include "labnoise/noise_model.hpp"

namespace labnoise {

// Closed-form predictions for a memorizing classifier trained on one noisy
// half of a dataset and evaluated on the other. All functions are pure.

// P(prediction == observed label | true class i) = sum_j T_ij^2.
double class_accuracy(const TransitionMatrix& transition, int i);

// (1 - e)^2 + e^2 / (c - 1)
double symmetric_accuracy(double ratio, int classes);

// (1 - e)^2 + e^2
double asymmetric_accuracy(double ratio);

// Label precision / recall of agreement-based selection, per class.
struct ClassPrecisionRecall {
  std::vector<double> precision;  // T_ii^2 / sum_j T_ij^2
  std::vector<double> recall;     // T_ii
};
ClassPrecisionRecall lp_lr_general(const TransitionMatrix& transition);

// Range of per-class precision given only the diagonal entry t_ii. The lower
// bound is attained by asymmetric noise, the upper by symmetric noise.
struct PrecisionBounds {
  double lower;
  double upper;
};
PrecisionBounds lp_bounds(double diagonal, int classes);

struct EpsilonEstimate {
  double epsilon;
  // Observed accuracy fell outside the invertible range and was clamped.
  bool clamped;
};

// Inverts the symmetric accuracy law on the branch e <= (c-1)/c.
EpsilonEstimate estimate_epsilon_symmetric(double observed_accuracy, int classes);

// Inverts the asymmetric accuracy law on the branch e <= 0.5.
EpsilonEstimate estimate_epsilon_asymmetric(double observed_accuracy);

struct TheoryPoint {
  NoiseKind kind;
  int classes;
  double epsilon;
  double accuracy;
  double lp;
  double lr;
  double eps_s;  // 1 - lp
};

// Symmetric or asymmetric only; custom throws DomainError.
std::vector<TheoryPoint> theory_curve(NoiseKind kind, int classes, std::span<const double> grid);

// Header: kind,c,epsilon,accuracy,lp,lr,eps_s
std::string theory_csv(std::span<const TheoryPoint> points);

}  // namespace labnoise
