#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "doctest.h"
#include "labnoise/dataset.hpp"
#include "labnoise/error.hpp"
#include "labnoise/learners.hpp"
#include "labnoise/noise_model.hpp"
#include "labnoise/rng.hpp"
#include "labnoise/selection.hpp"
#include "labnoise/theory.hpp"

using namespace labnoise;

namespace {

// Answers with the observed label for ids in `agree`, otherwise with the next
// class. The observed label gets probability p[id]; all calls are logged.
struct StubLog {
  std::vector<std::vector<std::int64_t>> fitted;
  std::vector<std::vector<std::int64_t>> predicted;
};

class StubLearner final : public Learner {
 public:
  StubLearner(int classes, std::set<std::int64_t> agree, std::map<std::int64_t, double> p, StubLog* log)
      : classes_(classes), agree_(std::move(agree)), p_(std::move(p)), log_(log) {}
  std::string_view kind() const override { return "stub"; }
  int classes() const override { return classes_; }
  void reinitialize() override {}
  void fit(const LabeledDataset& train, int) override {
    if (log_) log_->fitted.push_back(train.ids);
  }
  std::vector<Prediction> predict(const LabeledDataset& data) const override {
    if (log_) log_->predicted.push_back(data.ids);
    std::vector<Prediction> out;
    for (std::size_t r = 0; r < data.size(); ++r) {
      const int y = data.observed[r];
      const bool match = agree_.count(data.ids[r]) > 0;
      const auto it = p_.find(data.ids[r]);
      const double p = it == p_.end() ? (match ? 0.9 : 0.1) : it->second;
      std::vector<double> probs(static_cast<std::size_t>(classes_), 0.0);
      probs[static_cast<std::size_t>(y)] = p;
      probs[static_cast<std::size_t>((y + 1) % classes_)] = 1.0 - p;
      out.push_back({match ? y : (y + 1) % classes_, probs});
    }
    return out;
  }
  nlohmann::json checkpoint() const override { return {{"kind", "stub"}}; }

 private:
  int classes_;
  std::set<std::int64_t> agree_;
  std::map<std::int64_t, double> p_;
  StubLog* log_;
};

LabeledDataset noisy(int c, int per_class, const TransitionMatrix& t, std::uint64_t seed) {
  auto data = make_blobs({c, 1, per_class, 0.0, 1.0, seed});
  data.observed = corrupt_labels(*data.truth, t, derive_seed(seed, 1));
  return data;
}

LearnerFactory oracle_factory(const TransitionMatrix& t) {
  return [t](std::uint64_t seed) -> std::unique_ptr<Learner> { return oracle_train(t, seed); };
}

}  // namespace

TEST_CASE("ncv on a stubbed four-sample dataset") {
  auto data = make_blobs({2, 1, 2, 0.0, 1.0, 0});
  const std::set<std::int64_t> agree{0, 2};
  const LearnerFactory factory = [&](std::uint64_t) -> std::unique_ptr<Learner> {
    return std::make_unique<StubLearner>(2, agree, std::map<std::int64_t, double>{}, nullptr);
  };
  const auto result = ncv(data, factory, 1, 5);
  CHECK(result.selected == std::vector<std::int64_t>{0, 2});
  CHECK(result.candidate == std::vector<std::int64_t>{1, 3});
  CHECK(result.removed.empty());
  CHECK(result.epsilon_hat == doctest::Approx(0.5).epsilon(1e-12));
  REQUIRE(result.history.size() == 1);
  CHECK(result.history[0].selected_fold1 + result.history[0].selected_fold2 == 2);
}

TEST_CASE("ncv with the oracle") {
  SUBCASE("identity selects everything") {
    const auto t = TransitionMatrix::identity(10);
    const auto data = noisy(10, 100, t, 1);
    const auto result = ncv(data, oracle_factory(t), 1, 2);
    CHECK(result.selected == data.ids);
    CHECK(result.candidate.empty());
    CHECK(result.epsilon_hat == 0.0);
  }
  SUBCASE("symmetric 0.5 matches the closed form") {
    const auto t = symmetric_matrix(10, 0.5);
    const auto data = noisy(10, 10000, t, 3);
    const auto result = ncv(data, oracle_factory(t), 1, 4);
    check_partition(result, data.ids);
    const auto m = selection_metrics(result.selected, data);
    CHECK(std::abs(m.lp - 0.9) <= 0.01);
    CHECK(std::abs(m.lr - 0.5) <= 0.01);
    CHECK(std::abs(result.epsilon_hat - 0.5) <= 0.03);
  }
  SUBCASE("asymmetric 0.4 matches the closed form") {
    const auto t = asymmetric_matrix(10, 0.4, cyclic_mapping(10));
    const auto data = noisy(10, 10000, t, 5);
    const auto result = ncv(data, oracle_factory(t), 1, 6, EpsilonEstimator::asymmetric);
    const auto m = selection_metrics(result.selected, data);
    CHECK(std::abs(m.lp - 0.6923) <= 0.01);
    CHECK(std::abs(m.lr - 0.6) <= 0.01);
    CHECK(std::abs(result.epsilon_hat - 0.4) <= 0.03);
  }
}

TEST_CASE("purity improvement over diagonal-dominant noise") {
  const int per_class = 5000;
  for (int k = 1; k <= 8; ++k) {
    const double eps = 0.1 * k;
    std::vector<TransitionMatrix> ts{symmetric_matrix(10, eps)};
    if (eps < 0.5) ts.push_back(asymmetric_matrix(10, eps, cyclic_mapping(10)));
    for (const auto& t : ts) {
      const auto data = noisy(10, per_class, t, 40 + k);
      const auto result = ncv(data, oracle_factory(t), 1, 50 + k);
      const auto m = selection_metrics(result.selected, data);
      const double n_s = static_cast<double>(result.selected.size());
      const double slack = 3.0 * std::sqrt(m.eps_s * (1.0 - m.eps_s) / n_s);
      CHECK(m.eps_s < eps - slack);
    }
  }
}

TEST_CASE("per-class precision and recall on random diagonal-dominant T") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const int c = 4;
    std::vector<std::vector<double>> rows(c, std::vector<double>(c));
    for (int i = 0; i < c; ++i) {
      double off = 0.0;
      for (int j = 0; j < c; ++j) {
        if (j != i) off += (rows[i][j] = rng.uniform());
      }
      const double diag = 0.4 + 0.5 * rng.uniform();
      for (int j = 0; j < c; ++j) {
        if (j != i) rows[i][j] *= (1.0 - diag) / off;
      }
      double rest = 0.0;
      for (int j = 0; j < c; ++j) {
        if (j != i) rest += rows[i][j];
      }
      rows[i][i] = 1.0 - rest;
    }
    const auto t = TransitionMatrix::from_rows(rows);
    REQUIRE(t.diagonal_dominant());
    const auto data = noisy(c, 20000, t, 100 + trial);
    const auto result = ncv(data, oracle_factory(t), 1, 200 + trial);
    const auto m = selection_metrics(result.selected, data);
    const auto expected = lp_lr_general(t);
    for (int i = 0; i < c; ++i) {
      REQUIRE(m.lp_class[i]);
      REQUIRE(m.lr_class[i]);
      CHECK(std::abs(*m.lp_class[i] - expected.precision[i]) <= 0.02);
      CHECK(std::abs(*m.lr_class[i] - expected.recall[i]) <= 0.02);
    }
  }
}

TEST_CASE("incv with one iteration and no removal equals ncv") {
  const auto t = symmetric_matrix(5, 0.4);
  const auto data = noisy(5, 400, t, 9);
  IncvOptions options;
  options.iterations = 1;
  options.epochs = 1;
  options.remove_ratio = RemoveRatio::value(0.0);
  options.seed = 10;
  const auto a = incv(data, oracle_factory(t), options);
  const auto b = ncv(data, oracle_factory(t), 1, 10);
  CHECK(a.selected == b.selected);
  CHECK(a.candidate == b.candidate);
  CHECK(a.epsilon_hat == b.epsilon_hat);
}

TEST_CASE("incv invariants with the oracle") {
  const auto t = symmetric_matrix(10, 0.5);
  const auto data = noisy(10, 2000, t, 11);
  IncvOptions options;
  options.iterations = 4;
  options.epochs = 1;
  options.seed = 12;
  std::vector<double> lr;
  std::vector<std::size_t> selected_sizes;
  options.on_iteration = [&](const SelectionResult& partial) {
    CHECK_NOTHROW(check_partition(partial, data.ids));
    CHECK(partial.epsilon_hat >= 0.0);
    CHECK(partial.epsilon_hat <= 1.0);
    lr.push_back(selection_metrics(partial.selected, data).lr);
    selected_sizes.push_back(partial.selected.size());
  };
  const auto result = incv(data, oracle_factory(t), options);
  CHECK_FALSE(result.halted);
  REQUIRE(lr.size() == 4);
  for (std::size_t k = 1; k < lr.size(); ++k) {
    CHECK(lr[k] >= lr[k - 1]);
    CHECK(selected_sizes[k] >= selected_sizes[k - 1]);
  }
  CHECK(result.history[0].remove_ratio == 0.0);
  CHECK(result.history[1].remove_ratio ==
        doctest::Approx(result.epsilon_hat / (1.0 - result.epsilon_hat)).epsilon(1e-12));
  CHECK(result.history[0].removed_fold1 == 0);
}

TEST_CASE("large-loss removal matches a brute-force ranking") {
  // 12 samples; ids 0..5 agree, the rest disagree with assorted confidences
  auto data = make_blobs({2, 1, 6, 0.0, 1.0, 0});
  std::set<std::int64_t> agree{0, 1, 2, 3, 4, 5};
  std::map<std::int64_t, double> p{{6, 0.3}, {7, 0.05}, {8, 0.2}, {9, 0.05}, {10, 0.4}, {11, 0.01}};
  StubLog log;
  const LearnerFactory factory = [&](std::uint64_t) -> std::unique_ptr<Learner> {
    return std::make_unique<StubLearner>(2, agree, p, &log);
  };
  IncvOptions options;
  options.iterations = 1;
  options.epochs = 1;
  options.remove_ratio = RemoveRatio::value(0.5);
  options.seed = 3;
  const auto result = incv(data, factory, options);
  REQUIRE(log.predicted.size() == 2);

  std::vector<std::int64_t> expected;
  for (const auto& fold : log.predicted) {
    std::vector<std::int64_t> matched, rest;
    for (auto id : fold) (agree.count(id) ? matched : rest).push_back(id);
    std::stable_sort(rest.begin(), rest.end(), [&](auto a, auto b) {
      if (p[a] != p[b]) return p[a] < p[b];
      return a < b;
    });
    const auto n = std::min(rest.size(), static_cast<std::size_t>(0.5 * static_cast<double>(matched.size())));
    expected.insert(expected.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(expected.begin(), expected.end());
  CHECK(result.removed == expected);
  CHECK(result.selected == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5});
  for (auto id : result.removed) CHECK(agree.count(id) == 0);
  check_partition(result, data.ids);
}

TEST_CASE("incv trains on S plus one candidate half") {
  auto data = make_blobs({2, 1, 10, 0.0, 1.0, 0});
  std::set<std::int64_t> agree{0, 1, 2, 3, 4, 5, 6, 7};
  StubLog log;
  const LearnerFactory factory = [&](std::uint64_t) -> std::unique_ptr<Learner> {
    return std::make_unique<StubLearner>(2, agree, std::map<std::int64_t, double>{}, &log);
  };
  IncvOptions options;
  options.iterations = 2;
  options.epochs = 1;
  options.seed = 4;
  std::vector<SelectionResult> partials;
  options.on_iteration = [&](const SelectionResult& r) { partials.push_back(r); };
  const auto result = incv(data, factory, options);
  REQUIRE(partials.size() == 2);
  REQUIRE(log.fitted.size() == 4);
  // iteration 2, fold 1: train = S(after iteration 1) + C1, evaluate on C2
  std::vector<std::int64_t> train = log.fitted[2];
  std::vector<std::int64_t> eval = log.predicted[2];
  std::sort(train.begin(), train.end());
  std::sort(eval.begin(), eval.end());
  for (auto id : partials[0].selected) CHECK(std::binary_search(train.begin(), train.end(), id));
  for (auto id : eval) {
    CHECK_FALSE(std::binary_search(train.begin(), train.end(), id));
    CHECK(std::binary_search(partials[0].candidate.begin(), partials[0].candidate.end(), id));
  }
  CHECK(result.selected.size() >= partials[0].selected.size());
}

TEST_CASE("incv halts when candidates run out") {
  const auto t = TransitionMatrix::identity(3);
  const auto data = noisy(3, 10, t, 1);
  IncvOptions options;
  options.iterations = 3;
  options.epochs = 1;
  const auto result = incv(data, oracle_factory(t), options);
  CHECK(result.halted);
  CHECK(result.history.size() == 1);
  CHECK(result.selected == data.ids);
}

TEST_CASE("incv argument errors") {
  const auto t = symmetric_matrix(3, 0.2);
  const auto data = noisy(3, 10, t, 1);
  IncvOptions options;
  options.iterations = 0;
  CHECK_THROWS_AS(incv(data, oracle_factory(t), options), DomainError);
  options.iterations = 1;
  options.remove_ratio = RemoveRatio::value(-1.0);
  CHECK_THROWS_AS(incv(data, oracle_factory(t), options), DomainError);
}

TEST_CASE("selection_metrics") {
  // 4 clean (ids 0..3) and 4 noisy (ids 4..7)
  LabeledDataset data = make_blobs({2, 1, 4, 0.0, 1.0, 0});
  for (std::size_t r = 4; r < 8; ++r) data.observed[r] = 1 - (*data.truth)[r];
  SUBCASE("hand case") {
    const auto m = selection_metrics(std::vector<std::int64_t>{0, 1, 2, 4}, data);
    CHECK(m.lp == 0.75);
    CHECK(m.lr == 0.75);
    CHECK(m.eps_s + m.lp == 1.0);
  }
  SUBCASE("all clean samples") {
    const auto m = selection_metrics(std::vector<std::int64_t>{0, 1, 2, 3}, data);
    CHECK(m.lp == 1.0);
    CHECK(m.lr == 1.0);
  }
  SUBCASE("missing support is flagged") {
    // ids 0..3 have true class 0; ids 4..7 true class 1
    const auto m = selection_metrics(std::vector<std::int64_t>{0, 1}, data);
    REQUIRE(m.lp_class[0]);
    CHECK(*m.lp_class[0] == 1.0);
    CHECK_FALSE(m.lp_class[1]);
    CHECK_FALSE(m.lr_class[1]);
    CHECK_FALSE(m.confusion.row_supported(1));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(selection_metrics(std::vector<std::int64_t>{}, data), UndefinedMetricError);
    CHECK_THROWS_AS(selection_metrics(std::vector<std::int64_t>{99}, data), ValidationError);
    auto blind = data;
    blind.truth.reset();
    CHECK_THROWS_AS(selection_metrics(std::vector<std::int64_t>{0}, blind), ValidationError);
    auto dirty = data;
    for (std::size_t r = 0; r < 8; ++r) dirty.observed[r] = 1 - (*dirty.truth)[r];
    CHECK_THROWS_AS(selection_metrics(std::vector<std::int64_t>{0}, dirty), UndefinedMetricError);
  }
}

TEST_CASE("confusion_matrix") {
  SUBCASE("perfect predictions") {
    const std::vector<int> y{0, 1, 2, 1};
    const auto m = confusion_matrix(y, y, 3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) CHECK(m.rates(i, j) == (i == j ? 1.0 : 0.0));
    }
  }
  SUBCASE("hand case") {
    const auto m = confusion_matrix(std::vector<int>{0, 1, 1}, std::vector<int>{0, 0, 1}, 2);
    CHECK(m.rates(0, 0) == 0.5);
    CHECK(m.rates(0, 1) == 0.5);
    CHECK(m.rates(1, 0) == 0.0);
    CHECK(m.rates(1, 1) == 1.0);
    CHECK(m.support == std::vector<std::size_t>{2, 1});
  }
  SUBCASE("oracle at symmetric 0.7") {
    const auto t = symmetric_matrix(10, 0.7);
    const auto data = noisy(10, 10000, t, 21);
    const auto m = confusion_matrix(oracle_train(t, 22)->predict(data), *data.truth, 10);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 10; ++j) {
        worst = std::max(worst, std::abs(m.rates(i, j) - t(i, j)));
        sum += m.rates(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
    CHECK(worst <= 0.02);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0}, std::vector<int>{0, 1}, 2), DomainError);
  }
}

TEST_CASE("selection result json round trip") {
  const auto t = symmetric_matrix(4, 0.3);
  const auto data = noisy(4, 50, t, 31);
  IncvOptions options;
  options.iterations = 2;
  options.epochs = 1;
  options.seed = 32;
  const auto result = incv(data, oracle_factory(t), options);
  const nlohmann::json j = result;
  for (const char* key : {"selected", "candidate", "removed", "epsilon_hat", "history"}) CHECK(j.contains(key));
  const auto back = nlohmann::json::parse(j.dump()).get<SelectionResult>();
  CHECK(back.selected == result.selected);
  CHECK(back.candidate == result.candidate);
  CHECK(back.removed == result.removed);
  CHECK(back.epsilon_hat == result.epsilon_hat);
  CHECK(back.history.size() == result.history.size());
  CHECK(nlohmann::json(back) == j);
}

TEST_CASE("check_partition rejects overlaps and gaps") {
  SelectionResult r;
  r.selected = {0, 1};
  r.candidate = {2};
  r.removed = {3};
  const std::vector<std::int64_t> ids{0, 1, 2, 3};
  CHECK_NOTHROW(check_partition(r, ids));
  r.removed = {1};
  CHECK_THROWS_AS(check_partition(r, ids), ValidationError);
  r.removed = {};
  CHECK_THROWS_AS(check_partition(r, ids), ValidationError);
}
