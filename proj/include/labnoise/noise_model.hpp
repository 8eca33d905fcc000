#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "labnoise/matrix.hpp"
#include "json.hpp"

namespace labnoise {

// Row-stochastic c x c matrix with T(i, j) = P(observed = j | true = i).
// Construction validates: entries in [0, 1], rows summing to 1 within 1e-12.
class TransitionMatrix {
 public:
  explicit TransitionMatrix(Matrix entries);
  static TransitionMatrix from_rows(const std::vector<std::vector<double>>& rows);
  static TransitionMatrix identity(int classes);

  int classes() const { return static_cast<int>(entries_.rows); }
  double operator()(int i, int j) const { return entries_(i, j); }
  std::span<const double> row(int i) const { return entries_.row(i); }
  const Matrix& entries() const { return entries_; }

  // T_ii is the strict maximum of every row.
  bool diagonal_dominant() const;

  bool operator==(const TransitionMatrix&) const = default;

 private:
  Matrix entries_;
};

enum class NoiseKind { symmetric, asymmetric, custom };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view text);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double ratio = 0.0;
  // Target class per source class; asymmetric only.
  std::vector<int> mapping;
  std::uint64_t seed = 0;
  // Full matrix; custom only.
  std::optional<TransitionMatrix> matrix;

  bool operator==(const NoiseSpec&) const = default;
};

TransitionMatrix symmetric_matrix(int classes, double ratio);
TransitionMatrix asymmetric_matrix(int classes, double ratio, std::span<const int> mapping);

// i -> (i + 1) mod c.
std::vector<int> cyclic_mapping(int classes);

// Builds T for a spec. Asymmetric specs with an empty mapping use the cyclic one.
TransitionMatrix transition_matrix(const NoiseSpec& spec, int classes);

// Inverse-CDF draw from a probability row. `u` must lie in [0, 1).
// Zero-probability entries are never returned.
int sample_categorical(std::span<const double> probabilities, double u);

// Replaces each label i by a draw from row T[i]; one uniform draw per label
// in index order, so the output is a pure function of (labels, T, seed).
std::vector<int> corrupt_labels(std::span<const int> true_labels, const TransitionMatrix& transition,
                                std::uint64_t seed);

double actual_noise_ratio(std::span<const int> observed, std::span<const int> truth);

void to_json(nlohmann::json& j, const NoiseSpec& spec);
void from_json(const nlohmann::json& j, NoiseSpec& spec);

}  // namespace labnoise
