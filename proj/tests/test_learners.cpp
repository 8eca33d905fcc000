#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "labnoise/dataset.hpp"
#include "labnoise/error.hpp"
#include "labnoise/learners.hpp"
#include "labnoise/noise_model.hpp"
#include "labnoise/rng.hpp"
#include "labnoise/theory.hpp"

using namespace labnoise;

namespace {

LabeledDataset noisy_blobs(int c, int d, int per_class, double sep, double eps, std::uint64_t seed) {
  auto data = make_blobs({c, d, per_class, sep, 1.0, seed});
  data.observed = corrupt_labels(*data.truth, symmetric_matrix(c, eps), derive_seed(seed, 1));
  return data;
}

TrainConfig config(int epochs, double lr, std::uint64_t seed, int batch = 16) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.schedule.initial = lr;
  cfg.seed = seed;
  return cfg;
}

// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double gradient_error(const SoftmaxLearner& model, const LabeledDataset& data, std::span<const std::size_t> rows) {
  std::vector<double> grad;
  model.loss_and_gradient(data, rows, &grad);
  SoftmaxLearner probe = model;
  std::vector<double> params(model.parameters().begin(), model.parameters().end());
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const double keep = params[p];
    params[p] = keep + h;
    probe.set_parameters(params);
    const double up = probe.loss_and_gradient(data, rows, nullptr);
    params[p] = keep - h;
    probe.set_parameters(params);
    const double down = probe.loss_and_gradient(data, rows, nullptr);
    params[p] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(grad[p]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(grad[p] - numeric) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("argmax and predictions") {
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax(std::vector<double>{0.1, 0.2, 0.7}) == 2);
  Prediction p{1, {0.0, 1.0}};
  CHECK(p.log_probability(0) == doctest::Approx(std::log(kMinProbability)));
  CHECK(p.log_probability(1) == 0.0);
}

TEST_CASE("per_sample_loss") {
  const std::vector<Prediction> preds{{0, {1.0, 0.0}}, {1, std::vector<double>(2, 0.5)}, {0, {1.0, 0.0}}};
  const auto loss = per_sample_loss(preds, std::vector<int>{0, 0, 1});
  CHECK(loss[0] <= 1e-9);
  CHECK(loss[1] == doctest::Approx(std::log(2.0)));
  CHECK(loss[2] == doctest::Approx(-std::log(1e-12)));
  const std::vector<Prediction> uniform{{0, std::vector<double>(10, 0.1)}};
  CHECK(per_sample_loss(uniform, std::vector<int>{7})[0] == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK_THROWS_AS(per_sample_loss(preds, std::vector<int>{0}), DomainError);
}

TEST_CASE("top-n losses match a brute-force sort") {
  // ten hand-made samples: probability of the observed label
  const std::vector<double> p_obs{0.9, 0.05, 0.5, 0.3, 0.99, 0.05, 0.7, 0.01, 0.4, 0.2};
  std::vector<Prediction> preds;
  std::vector<int> labels;
  for (double p : p_obs) {
    preds.push_back({0, {p, 1.0 - p}});
    labels.push_back(0);
  }
  const auto loss = per_sample_loss(preds, labels);
  std::vector<std::size_t> order(loss.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return loss[a] > loss[b]; });
  CHECK(std::vector<std::size_t>(order.begin(), order.begin() + 4) == std::vector<std::size_t>{7, 1, 5, 9});
}

TEST_CASE("oracle learner") {
  const auto data = make_blobs({10, 1, 10000, 0.0, 1.0, 1});

  SUBCASE("identity T reproduces true labels") {
    const auto oracle = oracle_train(TransitionMatrix::identity(10), 5);
    const auto preds = oracle->predict(data);
    for (std::size_t i = 0; i < preds.size(); ++i) CHECK(preds[i].label == (*data.truth)[i]);
  }
  SUBCASE("confusion converges to T, accuracy follows the quadratic law") {
    // 0.01 is 3 sigma for the 0.5 diagonal at 1e5 draws per class
    const auto big = make_blobs({10, 1, 100000, 0.0, 1.0, 2});
    const auto t = symmetric_matrix(10, 0.5);
    const auto oracle = oracle_train(t, 6);
    std::vector<double> counts(100, 0.0);
    const auto all = oracle->predict(big);
    for (std::size_t i = 0; i < all.size(); ++i) counts[(*big.truth)[i] * 10 + all[i].label] += 1.0;
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) CHECK(std::abs(counts[i * 10 + j] / 100000.0 - t(i, j)) <= 0.01);
    }
    const auto preds = oracle->predict(data);
    const auto noisy = corrupt_labels(*data.truth, t, 77);
    CHECK(std::abs(accuracy(preds, noisy) - 0.277778) <= 0.01);
  }
  SUBCASE("argmax equals the draw and probabilities sum to one") {
    const auto oracle = oracle_train(asymmetric_matrix(10, 0.4, cyclic_mapping(10)), 8);
    for (const auto& p : oracle->predict(data.subset(std::vector<std::size_t>{0, 5000, 99999}))) {
      CHECK(argmax(p.probabilities) == p.label);
      CHECK(std::abs(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0) - 1.0) <= 1e-9);
    }
  }
  SUBCASE("deterministic per id") {
    const auto oracle = oracle_train(symmetric_matrix(10, 0.5), 9);
    const auto a = oracle->predict(data.subset(std::vector<std::size_t>{3, 4, 5}));
    const auto b = oracle->predict(data.subset(std::vector<std::size_t>{5, 4, 3}));
    CHECK(a[0].label == b[2].label);
    CHECK(a[2].label == b[0].label);
  }
  SUBCASE("needs true labels") {
    auto blind = data.subset(std::vector<std::size_t>{0});
    blind.truth.reset();
    CHECK_THROWS_AS(oracle_train(symmetric_matrix(10, 0.1), 1)->predict(blind), ValidationError);
  }
}

TEST_CASE("oracle independence factorization and per-class accuracy") {
  const int c = 5;
  const int per_class = 40000;
  const auto t = TransitionMatrix::from_rows({{0.6, 0.1, 0.1, 0.1, 0.1},
                                              {0.2, 0.5, 0.2, 0.1, 0.0},
                                              {0.05, 0.05, 0.8, 0.05, 0.05},
                                              {0.0, 0.3, 0.0, 0.7, 0.0},
                                              {0.1, 0.2, 0.1, 0.2, 0.4}});
  const auto data = make_blobs({c, 1, per_class, 0.0, 1.0, 3});
  const auto preds = oracle_train(t, 11)->predict(data);
  const auto noisy = corrupt_labels(*data.truth, t, 12);
  std::vector<double> joint(c * c * c, 0.0);
  std::vector<double> agree(c, 0.0);
  for (std::size_t s = 0; s < data.size(); ++s) {
    const int i = (*data.truth)[s];
    joint[(i * c + preds[s].label) * c + noisy[s]] += 1.0;
    if (preds[s].label == noisy[s]) agree[i] += 1.0;
  }
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      for (int k = 0; k < c; ++k) {
        const double p = t(i, j) * t(i, k);
        const double sigma = std::sqrt(p * (1.0 - p) / per_class);
        CHECK(std::abs(joint[(i * c + j) * c + k] / per_class - p) <= 3.0 * sigma + 1e-12);
      }
    }
    const double a = class_accuracy(t, i);
    CHECK(std::abs(agree[i] / per_class - a) <= 3.0 * std::sqrt(a * (1.0 - a) / per_class));
  }
}

TEST_CASE("knn learner") {
  const auto data = noisy_blobs(4, 3, 50, 2.0, 0.5, 4);
  const auto knn = knn_train(data, 1);

  SUBCASE("1-NN memorizes its training labels") {
    const auto preds = knn->predict(data);
    for (std::size_t i = 0; i < preds.size(); ++i) CHECK(preds[i].label == data.observed[i]);
  }
  SUBCASE("smoothed vote probabilities") {
    const auto p = knn->predict(data.subset(std::vector<std::size_t>{0}))[0];
    CHECK(p.probabilities[p.label] == doctest::Approx(2.0 / 5.0));
    const auto k3 = knn_train(data, 3)->predict(data.subset(std::vector<std::size_t>{0}))[0];
    double sum = 0.0;
    for (double v : k3.probabilities) {
      CHECK(v >= 1.0 / 7.0 - 1e-15);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0));
  }
  SUBCASE("duplicate rows predict identically") {
    const auto dup = data.subset(std::vector<std::size_t>{7, 7, 12, 12});
    const auto p = knn_train(data, 3)->predict(dup);
    CHECK(p[0].label == p[1].label);
    CHECK(p[0].probabilities == p[1].probabilities);
    CHECK(p[2].probabilities == p[3].probabilities);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(KnnLearner(4, 0), DomainError);
    KnnLearner fresh(4, 1);
    CHECK_THROWS_AS(fresh.predict(data), DomainError);
    CHECK_THROWS_AS(fresh.fit(data.subset(std::vector<std::size_t>{}), 1), DomainError);
    CHECK_THROWS_AS(knn->predict(make_blobs({4, 2, 1, 1.0, 1.0, 0})), DomainError);
  }
  SUBCASE("reinitialize forgets") {
    KnnLearner k(4, 1);
    k.fit(data, 1);
    k.reinitialize();
    CHECK_THROWS_AS(k.predict(data), DomainError);
  }
}

TEST_CASE("train config") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = TrainConfig{};
  cfg.schedule.initial = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);

  LearningSchedule s{0.1, {{10, 0.5}, {20, 0.1}}};
  CHECK(s.rate(1) == 0.1);
  CHECK(s.rate(10) == 0.1);
  CHECK(s.rate(11) == doctest::Approx(0.05));
  CHECK(s.rate(21) == doctest::Approx(0.005));

  cfg = config(7, 0.2, 99);
  cfg.schedule.decay = {{3, 0.5}};
  nlohmann::json j = cfg;
  CHECK(j.get<TrainConfig>() == cfg);
}

TEST_CASE("softmax learner basics") {
  SUBCASE("zero init gives ln c") {
    const auto data = noisy_blobs(10, 4, 3, 1.0, 0.0, 2);
    TrainConfig cfg = config(1, 0.1, 1);
    cfg.init_scale = 0.0;
    SoftmaxLearner model(10, 4, cfg);
    for (double l : per_sample_loss(model, data)) CHECK(l == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    SoftmaxLearner deep(10, 4, cfg, 8);
    for (double l : per_sample_loss(deep, data)) CHECK(l == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("separable classes are fit exactly") {
    const auto data = make_blobs({2, 2, 100, 6.0, 0.5, 3});
    const auto model = softmax_train(data, config(50, 0.1, 4));
    CHECK(accuracy(model->predict(data), data.observed) == 1.0);
    const auto deep = softmax_train(data, config(50, 0.1, 4), 16);
    CHECK(accuracy(deep->predict(data), data.observed) == 1.0);
  }
  SUBCASE("labels are argmax of probabilities") {
    const auto data = noisy_blobs(5, 3, 40, 1.0, 0.3, 5);
    const auto model = softmax_train(data, config(5, 0.1, 6), 8);
    for (const auto& p : model->predict(data)) {
      CHECK(p.label == argmax(p.probabilities));
      CHECK(std::abs(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0) - 1.0) <= 1e-9);
    }
  }
  SUBCASE("deterministic given seed") {
    const auto data = noisy_blobs(3, 2, 30, 1.0, 0.2, 7);
    const auto a = softmax_train(data, config(3, 0.1, 8), 4);
    const auto b = softmax_train(data, config(3, 0.1, 8), 4);
    CHECK(std::ranges::equal(a->parameters(), b->parameters()));
    const auto other = softmax_train(data, config(3, 0.1, 9), 4);
    CHECK_FALSE(std::ranges::equal(a->parameters(), other->parameters()));
  }
  SUBCASE("dimension mismatch") {
    SoftmaxLearner model(3, 2, config(1, 0.1, 1));
    CHECK_THROWS_AS(model.predict(make_blobs({3, 5, 1, 1.0, 1.0, 0})), DomainError);
  }
  SUBCASE("divergence is reported") {
    auto data = make_blobs({3, 2, 30, 1e4, 1.0, 1});
    SoftmaxLearner model(3, 2, config(20, 1e6, 1));
    CHECK_THROWS_AS(model.fit(data, 20), DivergenceError);
  }
}

TEST_CASE("reinitialization independence") {
  const auto first = noisy_blobs(4, 3, 40, 1.5, 0.3, 10);
  const auto second = noisy_blobs(4, 3, 40, 1.5, 0.6, 11);
  for (std::optional<int> hidden : {std::optional<int>{}, std::optional<int>{8}}) {
    SoftmaxLearner fresh(4, 3, config(4, 0.1, 12), hidden);
    fresh.fit(first, 4);
    SoftmaxLearner reused(4, 3, config(4, 0.1, 12), hidden);
    reused.fit(second, 4);
    reused.reinitialize();
    reused.fit(first, 4);
    CHECK(std::ranges::equal(fresh.parameters(), reused.parameters()));
  }
}

TEST_CASE("checkpoint round trip") {
  const auto data = noisy_blobs(3, 2, 20, 1.0, 0.2, 13);
  std::vector<std::unique_ptr<Learner>> learners;
  learners.push_back(softmax_train(data, config(2, 0.1, 14)));
  learners.push_back(softmax_train(data, config(2, 0.1, 14), 5));
  learners.push_back(knn_train(data, 3));
  learners.push_back(oracle_train(symmetric_matrix(3, 0.2), 15));
  for (const auto& l : learners) {
    const auto j = l->checkpoint();
    const auto back = learner_from_checkpoint(nlohmann::json::parse(j.dump()));
    CHECK(back->kind() == l->kind());
    CHECK(back->checkpoint() == j);
    const auto a = l->predict(data);
    const auto b = back->predict(data);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].probabilities == b[i].probabilities);
  }
  CHECK_THROWS_AS(learner_from_checkpoint({{"kind", "forest"}}), DomainError);
}

TEST_CASE("gradient matches central differences") {
  const auto data = noisy_blobs(4, 5, 16, 1.5, 0.4, 20);
  Rng rng(21);
  for (std::optional<int> hidden : {std::optional<int>{}, std::optional<int>{8}, std::optional<int>{32}}) {
    SoftmaxLearner model(4, 5, config(1, 0.1, 22), hidden);
    model.fit(data, 1);
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<std::size_t> rows;
      for (int k = 0; k < 32; ++k) rows.push_back(rng.below(data.size()));
      CHECK(gradient_error(model, data, rows) <= 1e-5);
    }
  }
}

TEST_CASE("sgd_step lowers the batch loss for a small rate") {
  const auto data = noisy_blobs(3, 4, 20, 1.0, 0.0, 30);
  SoftmaxLearner model(3, 4, config(1, 0.1, 31), 6);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  const double before = model.sgd_step(data, rows, 0.01);
  CHECK(before == doctest::Approx(model.loss_and_gradient(data, rows, nullptr)).epsilon(0.05));
  CHECK(model.loss_and_gradient(data, rows, nullptr) < before);
  const auto losses = model.sample_losses(data, rows);
  CHECK(std::accumulate(losses.begin(), losses.end(), 0.0) / losses.size() ==
        doctest::Approx(model.loss_and_gradient(data, rows, nullptr)).epsilon(1e-12));
}
