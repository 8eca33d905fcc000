#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "labnoise/cli.hpp"
#include "labnoise/dataset.hpp"
#include "labnoise/error.hpp"
#include "labnoise/learners.hpp"
#include "labnoise/noise_model.hpp"
#include "labnoise/selection.hpp"
#include "labnoise/simulation.hpp"
#include "labnoise/theory.hpp"

namespace py = pybind11;
using namespace labnoise;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const TransitionMatrix& t) {
  Rows rows;
  for (int i = 0; i < t.classes(); ++i) rows.emplace_back(t.row(i).begin(), t.row(i).end());
  return rows;
}

Rows to_rows(const Matrix& m) {
  Rows rows;
  for (std::size_t i = 0; i < m.rows; ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  return rows;
}

LabeledDataset dataset_from(const Rows& features, const std::vector<int>& observed,
                            const std::optional<std::vector<int>>& truth, int classes) {
  LabeledDataset data;
  const std::size_t d = features.empty() ? 0 : features.front().size();
  data.features = Matrix(features.size(), d);
  for (std::size_t r = 0; r < features.size(); ++r) {
    if (features[r].size() != d) throw DomainError("feature rows differ in length");
    std::copy(features[r].begin(), features[r].end(), data.features.row(r).begin());
  }
  data.observed = observed;
  data.truth = truth;
  data.classes = classes;
  data.ids.resize(observed.size());
  for (std::size_t i = 0; i < data.ids.size(); ++i) data.ids[i] = static_cast<std::int64_t>(i);
  data.validate();
  return data;
}

py::dict selection_dict(const SelectionResult& r) {
  py::dict out;
  out["selected"] = r.selected;
  out["candidate"] = r.candidate;
  out["removed"] = r.removed;
  out["epsilon_hat"] = r.epsilon_hat;
  out["epsilon_clamped"] = r.epsilon_clamped;
  out["iterations"] = r.history.size();
  out["halted"] = r.halted;
  return out;
}

}  // namespace

PYBIND11_MODULE(labnoise, m) {
  m.doc() = "Label-noise transition models, closed-form theory and clean-sample selection";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ArithmeticError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);

  m.def("symmetric_matrix", [](int c, double eps) { return to_rows(symmetric_matrix(c, eps)); }, py::arg("classes"),
        py::arg("ratio"));
  m.def(
      "asymmetric_matrix",
      [](int c, double eps, std::optional<std::vector<int>> mapping) {
        return to_rows(asymmetric_matrix(c, eps, mapping ? *mapping : cyclic_mapping(c)));
      },
      py::arg("classes"), py::arg("ratio"), py::arg("mapping") = py::none());
  m.def("corrupt_labels",
        [](const std::vector<int>& labels, const Rows& t, std::uint64_t seed) {
          return corrupt_labels(labels, TransitionMatrix::from_rows(t), seed);
        },
        py::arg("labels"), py::arg("transition"), py::arg("seed"));

  m.def("symmetric_accuracy", &symmetric_accuracy, py::arg("ratio"), py::arg("classes"));
  m.def("asymmetric_accuracy", &asymmetric_accuracy, py::arg("ratio"));
  m.def(
      "lp_lr",
      [](const Rows& t) {
        const auto r = lp_lr_general(TransitionMatrix::from_rows(t));
        return std::make_pair(r.precision, r.recall);
      },
      py::arg("transition"));
  m.def(
      "lp_bounds",
      [](double diagonal, int c) {
        const auto b = lp_bounds(diagonal, c);
        return std::make_pair(b.lower, b.upper);
      },
      py::arg("diagonal"), py::arg("classes"));
  m.def(
      "estimate_epsilon",
      [](double accuracy, int c, const std::string& kind) {
        const auto e = parse_noise_kind(kind) == NoiseKind::asymmetric ? estimate_epsilon_asymmetric(accuracy)
                                                                       : estimate_epsilon_symmetric(accuracy, c);
        return std::make_pair(e.epsilon, e.clamped);
      },
      py::arg("accuracy"), py::arg("classes") = 10, py::arg("kind") = "symmetric");

  m.def(
      "make_blobs",
      [](int c, int d, int per_class, double separation, double spread, std::uint64_t seed) {
        const auto data = make_blobs({c, d, per_class, separation, spread, seed});
        return std::make_pair(to_rows(data.features), *data.truth);
      },
      py::arg("classes"), py::arg("dim"), py::arg("per_class"), py::arg("separation") = 5.0,
      py::arg("spread") = 1.0, py::arg("seed") = 0);

  m.def(
      "simulate",
      [](const std::string& learner, const std::string& kind, int c, double eps, long long n, std::uint64_t seed) {
        SimulationSpec spec;
        if (learner != "oracle" && learner != "knn") throw DomainError("learner must be oracle or knn");
        spec.learner = learner == "knn" ? SimulatedLearner::knn : SimulatedLearner::oracle;
        spec.kind = parse_noise_kind(kind);
        spec.classes = c;
        spec.epsilon = eps;
        spec.n = n;
        spec.seed = seed;
        const auto o = simulate(spec);
        py::dict out;
        out["acc_theory"] = o.acc_theory;
        out["acc_emp"] = o.acc_emp;
        out["lp_theory"] = o.lp_theory;
        out["lp_emp"] = o.lp_emp;
        out["lr_theory"] = o.lr_theory;
        out["lr_emp"] = o.lr_emp;
        out["max_m_dev"] = o.max_m_dev;
        out["confusion"] = to_rows(o.confusion);
        return out;
      },
      py::arg("learner") = "oracle", py::arg("kind") = "symmetric", py::arg("classes") = 10,
      py::arg("epsilon") = 0.5, py::arg("n") = 100000, py::arg("seed") = 0);

  m.def(
      "incv",
      [](const Rows& features, const std::vector<int>& observed, int classes, std::optional<std::vector<int>> truth,
         const std::string& learner, std::optional<Rows> transition, int iterations, int epochs,
         std::optional<double> remove_ratio, std::uint64_t seed) {
        const auto data = dataset_from(features, observed, truth, classes);
        LearnerFactory factory;
        if (learner == "oracle") {
          if (!transition) throw DomainError("the oracle learner needs a transition matrix");
          const auto t = TransitionMatrix::from_rows(*transition);
          factory = [t](std::uint64_t s) -> std::unique_ptr<Learner> { return oracle_train(t, s); };
        } else if (learner == "knn") {
          factory = [classes](std::uint64_t) -> std::unique_ptr<Learner> {
            return std::make_unique<KnnLearner>(classes, 1);
          };
        } else if (learner == "softmax") {
          const int d = static_cast<int>(data.dim());
          factory = [classes, d, epochs](std::uint64_t s) -> std::unique_ptr<Learner> {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.seed = s;
            return std::make_unique<SoftmaxLearner>(classes, d, cfg);
          };
        } else {
          throw DomainError("learner must be oracle, knn or softmax");
        }
        IncvOptions options;
        options.iterations = iterations;
        options.epochs = epochs;
        options.seed = seed;
        if (remove_ratio) options.remove_ratio = RemoveRatio::value(*remove_ratio);
        SelectionResult result;
        {
          py::gil_scoped_release release;
          result = incv(data, factory, options);
        }
        return selection_dict(result);
      },
      py::arg("features"), py::arg("observed"), py::arg("classes"), py::arg("truth") = py::none(),
      py::arg("learner") = "softmax", py::arg("transition") = py::none(), py::arg("iterations") = 4,
      py::arg("epochs") = 50, py::arg("remove_ratio") = py::none(), py::arg("seed") = 0);

  m.def(
      "selection_metrics",
      [](const std::vector<std::int64_t>& selected, const std::vector<int>& observed, const std::vector<int>& truth,
         int classes) {
        const auto data = dataset_from(Rows(observed.size(), std::vector<double>{0.0}), observed, truth, classes);
        const auto met = selection_metrics(selected, data);
        py::dict out;
        out["lp"] = met.lp;
        out["lr"] = met.lr;
        out["eps_s"] = met.eps_s;
        return out;
      },
      py::arg("selected"), py::arg("observed"), py::arg("truth"), py::arg("classes"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a labnoise command; returns (exit_code, stdout, stderr).");
}
