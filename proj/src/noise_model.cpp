#include "labnoise/noise_model.hpp"

#include <cmath>
#include <string>

#include "labnoise/error.hpp"
#include "labnoise/rng.hpp"

namespace labnoise {
namespace {

constexpr double kRowTolerance = 1e-12;

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw DomainError("noise ratio must lie in [0, 1], got " + std::to_string(ratio));
  }
}

void check_classes(int classes) {
  if (classes < 2) throw DomainError("class count must be >= 2, got " + std::to_string(classes));
}

}  // namespace

TransitionMatrix::TransitionMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows != entries_.cols) throw DomainError("transition matrix must be square");
  check_classes(static_cast<int>(entries_.rows));
  for (std::size_t i = 0; i < entries_.rows; ++i) {
    double sum = 0.0;
    for (double v : entries_.row(i)) {
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("transition entry outside [0, 1] in row " + std::to_string(i));
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowTolerance) {
      throw DomainError("transition row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

TransitionMatrix TransitionMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw DomainError("transition matrix must be square");
    for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
  }
  return TransitionMatrix(std::move(m));
}

TransitionMatrix TransitionMatrix::identity(int classes) {
  check_classes(classes);
  Matrix m(classes, classes);
  for (int i = 0; i < classes; ++i) m(i, i) = 1.0;
  return TransitionMatrix(std::move(m));
}

bool TransitionMatrix::diagonal_dominant() const {
  for (int i = 0; i < classes(); ++i) {
    for (int j = 0; j < classes(); ++j) {
      if (j != i && entries_(i, j) >= entries_(i, i)) return false;
    }
  }
  return true;
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric: return "asymmetric";
    case NoiseKind::custom: return "custom";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view text) {
  if (text == "symmetric") return NoiseKind::symmetric;
  if (text == "asymmetric") return NoiseKind::asymmetric;
  if (text == "custom") return NoiseKind::custom;
  throw DomainError("unknown noise kind '" + std::string(text) + "'");
}

TransitionMatrix symmetric_matrix(int classes, double ratio) {
  check_classes(classes);
  check_ratio(ratio);
  const double threshold = static_cast<double>(classes - 1) / classes;
  if (ratio >= threshold) {
    warn("symmetric noise ratio " + std::to_string(ratio) + " >= (c-1)/c; diagonal no longer dominates");
  }
  Matrix m(classes, classes, ratio / (classes - 1));
  for (int i = 0; i < classes; ++i) m(i, i) = 1.0 - ratio;
  return TransitionMatrix(std::move(m));
}

TransitionMatrix asymmetric_matrix(int classes, double ratio, std::span<const int> mapping) {
  check_classes(classes);
  check_ratio(ratio);
  if (mapping.size() != static_cast<std::size_t>(classes)) {
    throw DomainError("asymmetric mapping must have one target per class");
  }
  std::vector<bool> seen(classes, false);
  for (int i = 0; i < classes; ++i) {
    const int target = mapping[i];
    if (target < 0 || target >= classes) throw DomainError("mapping target out of range");
    if (target == i) throw DomainError("mapping has a fixed point at class " + std::to_string(i));
    if (seen[target]) throw DomainError("mapping is not a permutation");
    seen[target] = true;
  }
  if (ratio >= 0.5) {
    warn("asymmetric noise ratio " + std::to_string(ratio) + " >= 0.5; diagonal no longer dominates");
  }
  Matrix m(classes, classes);
  for (int i = 0; i < classes; ++i) {
    m(i, i) = 1.0 - ratio;
    m(i, mapping[i]) = ratio;
  }
  return TransitionMatrix(std::move(m));
}

std::vector<int> cyclic_mapping(int classes) {
  std::vector<int> mapping(classes);
  for (int i = 0; i < classes; ++i) mapping[i] = (i + 1) % classes;
  return mapping;
}

TransitionMatrix transition_matrix(const NoiseSpec& spec, int classes) {
  switch (spec.kind) {
    case NoiseKind::symmetric:
      return symmetric_matrix(classes, spec.ratio);
    case NoiseKind::asymmetric:
      return asymmetric_matrix(classes, spec.ratio, spec.mapping.empty() ? cyclic_mapping(classes) : spec.mapping);
    case NoiseKind::custom:
      if (!spec.matrix) throw DomainError("custom noise requires a matrix");
      if (spec.matrix->classes() != classes) throw DomainError("custom matrix size does not match class count");
      return *spec.matrix;
  }
  throw DomainError("unknown noise kind");
}

int sample_categorical(std::span<const double> probabilities, double u) {
  double cumulative = 0.0;
  int last_positive = -1;
  for (std::size_t j = 0; j < probabilities.size(); ++j) {
    if (probabilities[j] <= 0.0) continue;
    last_positive = static_cast<int>(j);
    cumulative += probabilities[j];
    if (u < cumulative) return last_positive;
  }
  // u landed in the rounding gap between the cumulative sum and 1.
  return last_positive;
}

std::vector<int> corrupt_labels(std::span<const int> true_labels, const TransitionMatrix& transition,
                                std::uint64_t seed) {
  const int c = transition.classes();
  Rng rng(seed);
  std::vector<int> out(true_labels.size());
  for (std::size_t t = 0; t < true_labels.size(); ++t) {
    const int label = true_labels[t];
    if (label < 0 || label >= c) {
      throw DomainError("label " + std::to_string(label) + " at index " + std::to_string(t) + " outside [0, c)");
    }
    out[t] = sample_categorical(transition.row(label), rng.uniform());
  }
  return out;
}

double actual_noise_ratio(std::span<const int> observed, std::span<const int> truth) {
  if (observed.size() != truth.size()) throw DomainError("label vectors differ in length");
  if (observed.empty()) return 0.0;
  std::size_t mismatched = 0;
  for (std::size_t t = 0; t < observed.size(); ++t) mismatched += observed[t] != truth[t];
  return static_cast<double>(mismatched) / static_cast<double>(observed.size());
}

void to_json(nlohmann::json& j, const NoiseSpec& spec) {
  j = nlohmann::json{{"kind", std::string(to_string(spec.kind))}, {"ratio", spec.ratio}};
  if (spec.kind == NoiseKind::asymmetric) {
    j["mapping"] = spec.mapping;
  } else {
    j["mapping"] = nullptr;
  }
  j["seed"] = spec.seed;
  if (spec.matrix) {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < spec.matrix->classes(); ++i) {
      const auto r = spec.matrix->row(i);
      rows.emplace_back(r.begin(), r.end());
    }
    j["matrix"] = rows;
  }
}

void from_json(const nlohmann::json& j, NoiseSpec& spec) {
  spec = NoiseSpec{};
  spec.kind = parse_noise_kind(j.at("kind").get<std::string>());
  spec.ratio = j.at("ratio").get<double>();
  if (j.contains("mapping") && !j.at("mapping").is_null()) spec.mapping = j.at("mapping").get<std::vector<int>>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("matrix") && !j.at("matrix").is_null()) {
    spec.matrix = TransitionMatrix::from_rows(j.at("matrix").get<std::vector<std::vector<double>>>());
  }
}

}  // namespace labnoise
