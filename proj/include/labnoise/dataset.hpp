#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "labnoise/matrix.hpp"
#include "labnoise/noise_model.hpp"
#include "json.hpp"

namespace labnoise {

// Gaussian class blobs: class means lie on a sphere of radius `separation`,
// samples are isotropic Gaussians of std `spread` around their mean.
struct BlobSpec {
  int classes = 2;
  int dim = 2;
  int per_class = 1;
  double separation = 1.0;
  double spread = 1.0;
  std::uint64_t seed = 0;
  // Independent sample sets from the same class means; 0 is the default draw.
  std::uint64_t draw = 0;

  bool operator==(const BlobSpec&) const = default;
};

struct LabeledDataset {
  Matrix features;                          // n x d
  std::vector<int> observed;                // possibly noisy labels
  std::optional<std::vector<int>> truth;    // hidden true labels
  std::vector<std::int64_t> ids;            // stable, unique
  int classes = 0;
  std::optional<NoiseSpec> noise;
  std::optional<BlobSpec> blob;

  std::size_t size() const { return observed.size(); }
  std::size_t dim() const { return features.cols; }
  bool has_truth() const { return truth.has_value(); }

  // Rows in the given order; metadata is carried over.
  LabeledDataset subset(std::span<const std::size_t> rows) const;

  // Throws ValidationError when an invariant is broken.
  void validate() const;

  bool operator==(const LabeledDataset&) const = default;
};

// Means of the blob classes, one row per class.
Matrix blob_means(const BlobSpec& spec);

LabeledDataset make_blobs(const BlobSpec& spec);

// Uniform random partition of [0, n) into halves of sizes ceil(n/2) and
// floor(n/2). Each half is returned in ascending order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_half_rows(std::size_t n,
                                                                              std::uint64_t seed);

std::pair<LabeledDataset, LabeledDataset> split_half(const LabeledDataset& data, std::uint64_t seed);

// Row-concatenation; both parts must agree on dim, classes and truth presence.
LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

// Directory layout: data.csv + manifest.json.
void save_dataset(const LabeledDataset& data, const std::filesystem::path& dir);
LabeledDataset load_dataset(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const BlobSpec& spec);
void from_json(const nlohmann::json& j, BlobSpec& spec);

}  // namespace labnoise
