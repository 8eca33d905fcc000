#include "labnoise/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "labnoise/error.hpp"
#include "labnoise/format.hpp"
#include "labnoise/rng.hpp"

namespace labnoise {
namespace {

constexpr int kSchemaVersion = 1;
constexpr std::uint64_t kMeanStream = 1;
constexpr std::uint64_t kSampleStream = 2;

void check_labels(const std::vector<int>& labels, int classes, const char* what) {
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0 || labels[t] >= classes) {
      throw ValidationError(std::string(what) + " label " + std::to_string(labels[t]) + " at row " +
                            std::to_string(t) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.classes = classes;
  out.noise = noise;
  out.blob = blob;
  out.features = Matrix(rows.size(), features.cols);
  out.observed.reserve(rows.size());
  out.ids.reserve(rows.size());
  if (truth) out.truth.emplace().reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    std::copy_n(features.row(r).begin(), features.cols, out.features.row(k).begin());
    out.observed.push_back(observed[r]);
    out.ids.push_back(ids[r]);
    if (truth) out.truth->push_back((*truth)[r]);
  }
  return out;
}

void LabeledDataset::validate() const {
  if (classes < 2) throw ValidationError("class count must be >= 2");
  if (features.rows != observed.size()) throw ValidationError("feature rows differ from label count");
  if (ids.size() != observed.size()) throw ValidationError("id count differs from label count");
  if (truth && truth->size() != observed.size()) throw ValidationError("true label count differs from observed");
  check_labels(observed, classes, "observed");
  if (truth) check_labels(*truth, classes, "true");
  std::unordered_set<std::int64_t> seen;
  seen.reserve(ids.size());
  for (auto id : ids) {
    if (!seen.insert(id).second) throw ValidationError("duplicate id " + std::to_string(id));
  }
}

Matrix blob_means(const BlobSpec& spec) {
  Rng rng(derive_seed(spec.seed, kMeanStream));
  Matrix means(spec.classes, spec.dim);
  for (int k = 0; k < spec.classes; ++k) {
    auto row = means.row(k);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& v : row) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& v : row) v *= spec.separation / norm;
  }
  return means;
}

LabeledDataset make_blobs(const BlobSpec& spec) {
  if (spec.classes < 2) throw DomainError("blobs need at least 2 classes");
  if (spec.dim < 1) throw DomainError("blob dimension must be >= 1");
  if (spec.per_class < 1) throw DomainError("blobs need at least one sample per class");
  if (!(spec.spread > 0.0)) throw DomainError("blob spread must be positive");
  if (!(spec.separation >= 0.0)) throw DomainError("blob separation must be non-negative");

  const Matrix means = blob_means(spec);
  const std::size_t n = static_cast<std::size_t>(spec.classes) * spec.per_class;
  LabeledDataset data;
  data.classes = spec.classes;
  data.blob = spec;
  data.features = Matrix(n, spec.dim);
  data.observed.resize(n);
  data.ids.resize(n);
  Rng rng(spec.draw == 0 ? derive_seed(spec.seed, kSampleStream) : derive_seed(spec.seed, kSampleStream, spec.draw));
  std::size_t r = 0;
  for (int k = 0; k < spec.classes; ++k) {
    for (int s = 0; s < spec.per_class; ++s, ++r) {
      auto row = data.features.row(r);
      for (int j = 0; j < spec.dim; ++j) row[j] = means(k, j) + spec.spread * rng.normal();
      data.observed[r] = k;
      data.ids[r] = static_cast<std::int64_t>(r);
    }
  }
  data.truth = data.observed;
  return data;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_half_rows(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t first = (n + 1) / 2;
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {std::move(a), std::move(b)};
}

std::pair<LabeledDataset, LabeledDataset> split_half(const LabeledDataset& data, std::uint64_t seed) {
  if (data.size() < 2) throw DomainError("cannot split fewer than 2 samples");
  const auto [a, b] = split_half_rows(data.size(), seed);
  return {data.subset(a), data.subset(b)};
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.dim() != b.dim() || a.classes != b.classes || a.has_truth() != b.has_truth()) {
    throw ValidationError("cannot concatenate datasets of different shape");
  }
  LabeledDataset out = a;
  out.features.rows += b.features.rows;
  out.features.data.insert(out.features.data.end(), b.features.data.begin(), b.features.data.end());
  out.observed.insert(out.observed.end(), b.observed.begin(), b.observed.end());
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  if (out.truth) out.truth->insert(out.truth->end(), b.truth->begin(), b.truth->end());
  return out;
}

void to_json(nlohmann::json& j, const BlobSpec& spec) {
  j = nlohmann::json{{"c", spec.classes},          {"d", spec.dim},          {"n_per_class", spec.per_class},
                     {"separation", spec.separation}, {"spread", spec.spread}, {"seed", spec.seed}};
  if (spec.draw != 0) j["draw"] = spec.draw;
}

void from_json(const nlohmann::json& j, BlobSpec& spec) {
  spec.classes = j.at("c").get<int>();
  spec.dim = j.at("d").get<int>();
  spec.per_class = j.at("n_per_class").get<int>();
  spec.separation = j.at("separation").get<double>();
  spec.spread = j.at("spread").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.draw = j.value("draw", std::uint64_t{0});
}

void save_dataset(const LabeledDataset& data, const std::filesystem::path& dir) {
  data.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string text;
  text.reserve(data.size() * (data.dim() + 3) * 12);
  text += "id";
  for (std::size_t j = 0; j < data.dim(); ++j) text += ",f" + std::to_string(j);
  text += ",observed_label";
  if (data.truth) text += ",true_label";
  text += '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    text += std::to_string(data.ids[r]);
    for (double v : data.features.row(r)) {
      text += ',';
      text += format_double(v);
    }
    text += ',';
    text += std::to_string(data.observed[r]);
    if (data.truth) {
      text += ',';
      text += std::to_string((*data.truth)[r]);
    }
    text += '\n';
  }
  std::ofstream csv(dir / "data.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (dir / "data.csv").string());
  csv << text;

  nlohmann::json manifest;
  manifest["n"] = data.size();
  manifest["d"] = data.dim();
  manifest["c"] = data.classes;
  manifest["noise"] = data.noise ? nlohmann::json(*data.noise) : nlohmann::json(nullptr);
  manifest["blob"] = data.blob ? nlohmann::json(*data.blob) : nlohmann::json(nullptr);
  manifest["schema_version"] = kSchemaVersion;
  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw IoError("cannot write " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << '\n';
  if (!csv || !mf) throw IoError("write failed in " + dir.string());
}

LabeledDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot read " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("manifest.json: ") + e.what(), 0);
  }

  LabeledDataset data;
  std::size_t n = 0, d = 0;
  try {
    if (manifest.at("schema_version").get<int>() != kSchemaVersion) {
      throw SchemaError("manifest.json: unsupported schema_version", 0);
    }
    n = manifest.at("n").get<std::size_t>();
    d = manifest.at("d").get<std::size_t>();
    data.classes = manifest.at("c").get<int>();
    if (manifest.contains("noise") && !manifest["noise"].is_null()) data.noise = manifest["noise"].get<NoiseSpec>();
    if (manifest.contains("blob") && !manifest["blob"].is_null()) data.blob = manifest["blob"].get<BlobSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("manifest.json: ") + e.what(), 0);
  }

  std::ifstream csv(dir / "data.csv", std::ios::binary);
  if (!csv) throw IoError("cannot read " + (dir / "data.csv").string());
  std::string line;
  if (!std::getline(csv, line)) throw SchemaError("data.csv: missing header", 1);
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "id") throw SchemaError("data.csv: missing column 'id'", 1);
  std::size_t feature_cols = 0;
  while (1 + feature_cols < header.size() && header[1 + feature_cols] == "f" + std::to_string(feature_cols)) {
    ++feature_cols;
  }
  const std::size_t label_col = 1 + feature_cols;
  if (label_col >= header.size() || header[label_col] != "observed_label") {
    throw SchemaError("data.csv: missing column 'observed_label'", 1);
  }
  bool has_truth = false;
  if (label_col + 1 < header.size()) {
    if (header[label_col + 1] != "true_label" || label_col + 2 != header.size()) {
      throw SchemaError("data.csv: unexpected column '" + header[label_col + 1] + "'", 1);
    }
    has_truth = true;
  }
  if (feature_cols != d) {
    throw ValidationError("manifest d=" + std::to_string(d) + " but data.csv has " + std::to_string(feature_cols) +
                          " feature columns");
  }

  data.features = Matrix(0, d);
  data.features.data.reserve(n * d);
  data.observed.reserve(n);
  data.ids.reserve(n);
  if (has_truth) data.truth.emplace().reserve(n);
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw SchemaError("data.csv: expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()),
                        line_no);
    }
    try {
      data.ids.push_back(parse_int(fields[0]));
      for (std::size_t j = 0; j < d; ++j) data.features.data.push_back(parse_double(fields[1 + j]));
      data.observed.push_back(static_cast<int>(parse_int(fields[label_col])));
      if (has_truth) data.truth->push_back(static_cast<int>(parse_int(fields[label_col + 1])));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(std::string("data.csv: ") + e.what(), line_no);
    }
    ++data.features.rows;
  }
  if (data.size() != n) {
    throw ValidationError("manifest n=" + std::to_string(n) + " but data.csv has " + std::to_string(data.size()) +
                          " rows");
  }
  data.validate();
  return data;
}

}  // namespace labnoise
