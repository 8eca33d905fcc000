#include "labnoise/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "labnoise/error.hpp"
#include "labnoise/format.hpp"

namespace labnoise {
namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("noise ratio must lie in [0, 1]");
}

void check_classes(int classes) {
  if (classes < 2) throw DomainError("class count must be >= 2");
}

// Radicands below this are rounding noise of the accuracy value; the
// inversion snaps them to the vertex.
constexpr double kRadicandFloor = 8.0 * std::numeric_limits<double>::epsilon();

double sum_of_squares(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return s;
}

}  // namespace

double class_accuracy(const TransitionMatrix& transition, int i) {
  if (i < 0 || i >= transition.classes()) throw DomainError("class index out of range");
  return sum_of_squares(transition.row(i));
}

double symmetric_accuracy(double ratio, int classes) {
  check_ratio(ratio);
  check_classes(classes);
  return (1.0 - ratio) * (1.0 - ratio) + ratio * ratio / (classes - 1);
}

double asymmetric_accuracy(double ratio) {
  check_ratio(ratio);
  return (1.0 - ratio) * (1.0 - ratio) + ratio * ratio;
}

ClassPrecisionRecall lp_lr_general(const TransitionMatrix& transition) {
  const int c = transition.classes();
  ClassPrecisionRecall out;
  out.precision.resize(c);
  out.recall.resize(c);
  for (int i = 0; i < c; ++i) {
    const double diag = transition(i, i);
    // A stochastic row has sum of squares >= 1/c, so the ratio is defined.
    out.precision[i] = diag * diag / sum_of_squares(transition.row(i));
    out.recall[i] = diag;
  }
  return out;
}

PrecisionBounds lp_bounds(double diagonal, int classes) {
  if (!(diagonal > 0.0 && diagonal <= 1.0)) throw DomainError("diagonal entry must lie in (0, 1]");
  check_classes(classes);
  const double d2 = diagonal * diagonal;
  const double off = (1.0 - diagonal) * (1.0 - diagonal);
  return {d2 / (d2 + off), d2 / (d2 + off / (classes - 1))};
}

EpsilonEstimate estimate_epsilon_symmetric(double observed_accuracy, int classes) {
  check_classes(classes);
  const double a_coef = static_cast<double>(classes) / (classes - 1);
  const double vertex = static_cast<double>(classes - 1) / classes;
  if (observed_accuracy >= 1.0) return {0.0, observed_accuracy > 1.0};
  // 1 - A(1 - a) rewritten to avoid cancellation near the vertex
  const double radicand = a_coef * (observed_accuracy - 1.0 / classes);
  if (radicand <= kRadicandFloor) return {vertex, radicand < -kRadicandFloor};
  const double eps = (1.0 - std::sqrt(radicand)) / a_coef;
  return {std::min(eps, vertex), false};
}

EpsilonEstimate estimate_epsilon_asymmetric(double observed_accuracy) {
  if (observed_accuracy >= 1.0) return {0.0, observed_accuracy > 1.0};
  const double radicand = 2.0 * observed_accuracy - 1.0;
  if (radicand <= kRadicandFloor) return {0.5, radicand < -kRadicandFloor};
  return {std::min((1.0 - std::sqrt(radicand)) / 2.0, 0.5), false};
}

std::vector<TheoryPoint> theory_curve(NoiseKind kind, int classes, std::span<const double> grid) {
  check_classes(classes);
  if (kind == NoiseKind::custom) throw DomainError("theory curves need symmetric or asymmetric noise");
  std::vector<TheoryPoint> points;
  points.reserve(grid.size());
  for (double eps : grid) {
    check_ratio(eps);
    TheoryPoint p{kind, classes, eps, 0.0, 0.0, 0.0, 0.0};
    const double keep = (1.0 - eps) * (1.0 - eps);
    if (kind == NoiseKind::symmetric) {
      p.accuracy = symmetric_accuracy(eps, classes);
    } else {
      p.accuracy = asymmetric_accuracy(eps);
    }
    p.lp = keep / p.accuracy;
    p.lr = 1.0 - eps;
    p.eps_s = 1.0 - p.lp;
    points.push_back(p);
  }
  return points;
}

std::string theory_csv(std::span<const TheoryPoint> points) {
  std::ostringstream out;
  out << "kind,c,epsilon,accuracy,lp,lr,eps_s\n";
  for (const auto& p : points) {
    out << to_string(p.kind) << ',' << p.classes << ',' << format_double(p.epsilon) << ','
        << format_double(p.accuracy) << ',' << format_double(p.lp) << ',' << format_double(p.lr) << ','
        << format_double(p.eps_s) << '\n';
  }
  return out.str();
}

}  // namespace labnoise
