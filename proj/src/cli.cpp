#include "labnoise/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"
#include "labnoise/cotraining.hpp"
#include "labnoise/dataset.hpp"
#include "labnoise/error.hpp"
#include "labnoise/format.hpp"
#include "labnoise/learners.hpp"
#include "labnoise/noise_model.hpp"
#include "labnoise/rng.hpp"
#include "labnoise/selection.hpp"
#include "labnoise/simulation.hpp"
#include "labnoise/theory.hpp"

namespace labnoise::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- tabular output -----------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
      for (std::size_t k = 0; k < fields.size(); ++k) {
        if (k) out += ',';
        out += fields[k];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& r : rows) {
      json obj = json::object();
      for (std::size_t k = 0; k < header.size(); ++k) {
        const std::string& v = k < r.size() ? r[k] : std::string();
        try {
          obj[header[k]] = parse_double(v);
        } catch (const std::invalid_argument&) {
          obj[header[k]] = v;
        }
      }
      arr.push_back(std::move(obj));
    }
    return arr;
  }
};

std::string num(double v) { return format_double(v); }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// --- shared option state --------------------------------------------------------

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  bool strict = false;
  std::string format = "csv";
};

struct LearnerOptions {
  std::string kind = "softmax";
  int k = 1;
  int hidden = 0;  // 0: multinomial logistic regression
  int batch = 32;
  double lr = 0.1;
  std::string lr_decay;
};

struct Context {
  Globals globals;
  std::ostream& out;
  std::ostream& err;
  CLI::App* root = nullptr;
  CLI::App* command = nullptr;

  fs::path out_dir() const {
    if (globals.out.empty()) throw UsageError("--out is required for this command");
    fs::path dir(globals.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    return dir;
  }

  void write_table(const std::string& stem, const Table& table) const {
    if (globals.format == "json") {
      write_file(out_dir() / (stem + ".json"), table.to_json().dump(2) + "\n");
    } else {
      write_file(out_dir() / (stem + ".csv"), table.csv());
    }
  }
};

// Every option of the root and the active subcommand, defaults included, as
// an argument list that reproduces the run.
json resolved_config(const Context& ctx) {
  json options = json::object();
  json args = json::array();
  auto collect = [&](const CLI::App* app, bool leading) {
    if (leading) args.push_back(app->get_name());
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help" || name == "replay") continue;
      if (opt->get_type_size() == 0) {
        const bool set = opt->count() > 0;
        options[name] = set;
        if (set) args.push_back("--" + name);
        continue;
      }
      std::vector<std::string> values = opt->count() ? opt->results() : std::vector<std::string>{};
      const std::string def = opt->get_default_str();
      if (values.empty() && !def.empty() && def != "{}" && def != "[]") values.push_back(def);
      if (values.empty()) {
        options[name] = nullptr;
        continue;
      }
      options[name] = values.size() == 1 ? json(values.front()) : json(values);
      args.push_back("--" + name);
      for (const auto& v : values) args.push_back(v);
    }
  };
  collect(ctx.root, false);
  collect(ctx.command, true);
  json cfg;
  cfg["command"] = ctx.command->get_name();
  cfg["args"] = args;
  cfg["options"] = options;
  return cfg;
}

void write_config(const Context& ctx) {
  write_file(ctx.out_dir() / "config.json", resolved_config(ctx).dump(2) + "\n");
}

LearningSchedule parse_schedule(double lr, const std::string& decay) {
  LearningSchedule schedule;
  schedule.initial = lr;
  if (decay.empty()) return schedule;
  std::stringstream ss(decay);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("--lr-decay entries look like EPOCH:FACTOR");
    try {
      schedule.decay.emplace_back(static_cast<int>(parse_int(item.substr(0, colon))),
                                  parse_double(item.substr(colon + 1)));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--lr-decay: ") + e.what());
    }
  }
  return schedule;
}

void add_learner_options(CLI::App* cmd, LearnerOptions& lo) {
  cmd->add_option("--learner", lo.kind, "oracle, knn or softmax")
      ->check(CLI::IsMember({"oracle", "knn", "softmax"}));
  cmd->add_option("--k", lo.k, "neighbours for the knn learner")->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", lo.hidden, "hidden width for softmax (0: linear)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch", lo.batch, "mini-batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", lo.lr, "initial learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--lr-decay", lo.lr_decay, "EPOCH:FACTOR[,EPOCH:FACTOR...]");
}

TrainConfig train_config(const LearnerOptions& lo, int epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = std::max(epochs, 1);
  cfg.batch_size = lo.batch;
  cfg.schedule = parse_schedule(lo.lr, lo.lr_decay);
  cfg.seed = seed;
  return cfg;
}

LearnerFactory learner_factory(const LearnerOptions& lo, const LabeledDataset& data, int epochs) {
  if (lo.kind == "oracle") {
    if (!data.noise) throw UsageError("the oracle learner needs a dataset whose manifest records its noise");
    const TransitionMatrix t = transition_matrix(*data.noise, data.classes);
    return [t](std::uint64_t seed) -> std::unique_ptr<Learner> { return oracle_train(t, seed); };
  }
  if (lo.kind == "knn") {
    const int c = data.classes, k = lo.k;
    return [c, k](std::uint64_t) -> std::unique_ptr<Learner> { return std::make_unique<KnnLearner>(c, k); };
  }
  const int c = data.classes, d = static_cast<int>(data.dim());
  const std::optional<int> hidden = lo.hidden > 0 ? std::optional<int>(lo.hidden) : std::nullopt;
  const LearnerOptions copy = lo;
  return [c, d, hidden, copy, epochs](std::uint64_t seed) -> std::unique_ptr<Learner> {
    return std::make_unique<SoftmaxLearner>(c, d, train_config(copy, epochs, seed), hidden);
  };
}

// --- commands -------------------------------------------------------------------

struct BlobsArgs {
  int classes = 10;
  int dim = 10;
  int per_class = 1000;
  double separation = 5.0;
  double spread = 1.0;
  std::string test_out;
  int test_per_class = 0;  // 0: same as --per-class
};

int cmd_blobs(Context& ctx, const BlobsArgs& a) {
  BlobSpec spec{a.classes, a.dim, a.per_class, a.separation, a.spread, ctx.globals.seed};
  LabeledDataset data, test;
  try {
    data = make_blobs(spec);
    if (!a.test_out.empty()) {
      BlobSpec held_out = spec;
      held_out.per_class = a.test_per_class > 0 ? a.test_per_class : a.per_class;
      held_out.draw = 1;
      test = make_blobs(held_out);
    }
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  save_dataset(data, ctx.out_dir());
  if (!a.test_out.empty()) save_dataset(test, a.test_out);
  write_config(ctx);
  ctx.out << "samples=" << data.size() << '\n';
  if (!a.test_out.empty()) ctx.out << "test_samples=" << test.size() << '\n';
  return kExitOk;
}

struct CorruptArgs {
  std::string in;
  std::string noise = "symmetric";
  std::optional<double> ratio;
  std::vector<int> mapping;
  std::string matrix_file;
};

int cmd_corrupt(Context& ctx, const CorruptArgs& a) {
  NoiseSpec spec;
  spec.kind = parse_noise_kind(a.noise);
  spec.seed = ctx.globals.seed;
  if (spec.kind == NoiseKind::custom) {
    if (a.matrix_file.empty()) throw UsageError("custom noise needs --matrix FILE");
    spec.matrix = TransitionMatrix::from_rows(
        json::parse(read_file(a.matrix_file)).get<std::vector<std::vector<double>>>());
    spec.ratio = a.ratio.value_or(0.0);
  } else {
    if (!a.ratio) throw UsageError("--ratio is required for " + a.noise + " noise");
    spec.ratio = *a.ratio;
    if (spec.kind == NoiseKind::asymmetric) spec.mapping = a.mapping;
  }

  LabeledDataset data = load_dataset(a.in);
  if (!data.truth) throw ValidationError("input dataset has no true labels to corrupt");
  if (spec.kind == NoiseKind::asymmetric && spec.mapping.empty()) spec.mapping = cyclic_mapping(data.classes);
  TransitionMatrix t = TransitionMatrix::identity(data.classes);
  try {
    t = transition_matrix(spec, data.classes);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  data.observed = corrupt_labels(*data.truth, t, spec.seed);
  data.noise = spec;
  save_dataset(data, ctx.out_dir());
  write_config(ctx);
  ctx.out << "actual_noise_ratio=" << num(actual_noise_ratio(data.observed, *data.truth)) << '\n';
  return kExitOk;
}

struct TheoryArgs {
  std::string kind = "symmetric";
  int classes = 10;
  std::string grid = "0:1:0.05";
};

int cmd_theory(Context& ctx, const TheoryArgs& a) {
  NoiseKind kind;
  std::vector<double> grid;
  std::vector<TheoryPoint> points;
  try {
    kind = parse_noise_kind(a.kind);
    grid = parse_grid(a.grid);
    points = theory_curve(kind, a.classes, grid);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  Table table{{"kind", "c", "epsilon", "accuracy", "lp", "lr", "eps_s"}, {}};
  for (const auto& p : points) {
    table.rows.push_back({std::string(to_string(p.kind)), std::to_string(p.classes), num(p.epsilon), num(p.accuracy),
                          num(p.lp), num(p.lr), num(p.eps_s)});
  }
  if (ctx.globals.out.empty()) {
    ctx.out << (ctx.globals.format == "json" ? table.to_json().dump(2) + "\n" : table.csv());
    return kExitOk;
  }
  ctx.write_table("theory", table);
  write_config(ctx);
  return kExitOk;
}

struct SimulateArgs {
  std::string learner = "oracle";
  std::string kind = "symmetric";
  int classes = 10;
  std::string grid = "0.2,0.5,0.8";
  long long n = 100000;
  int dim = 10;
  double separation = 20.0;
  double spread = 1.0;
  int k = 1;
  double tolerance = 0.01;
  double m_tolerance = 0.05;
};

struct SimulatePoint {
  std::vector<std::string> row;
  Matrix confusion;
  bool pass = false;
};

SimulatePoint simulate_point(const SimulateArgs& a, NoiseKind kind, double eps, std::uint64_t seed) {
  SimulationSpec spec;
  spec.learner = a.learner == "oracle" ? SimulatedLearner::oracle : SimulatedLearner::knn;
  spec.kind = kind;
  spec.classes = a.classes;
  spec.epsilon = eps;
  spec.n = a.n;
  spec.dim = a.dim;
  spec.separation = a.separation;
  spec.spread = a.spread;
  spec.k = a.k;
  spec.seed = seed;
  const SimulationOutcome o = simulate(spec);

  SimulatePoint p;
  p.pass = o.max_dev() <= a.tolerance && o.max_m_dev <= a.m_tolerance;
  p.confusion = o.confusion;
  p.row = {a.learner,       a.kind,          std::to_string(a.classes), std::to_string(o.samples), num(eps),
           num(o.acc_theory), num(o.acc_emp), num(o.lp_theory),         num(o.lp_emp),             num(o.lr_theory),
           num(o.lr_emp),   num(o.max_m_dev), num(o.max_dev()),         p.pass ? "1" : "0"};
  return p;
}

unsigned thread_cap() {
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LABNOISE_THREADS")) {
    try {
      const auto v = parse_int(env);
      if (v >= 1) threads = static_cast<unsigned>(v);
    } catch (const std::invalid_argument&) {
      warn("ignoring malformed LABNOISE_THREADS");
    }
  }
  return threads;
}

int cmd_simulate(Context& ctx, const SimulateArgs& a) {
  if (a.n <= 0) throw UsageError("--n must be positive");
  if (a.n < 2LL * a.classes) throw UsageError("--n must give at least two samples per class");
  NoiseKind kind;
  std::vector<double> grid;
  try {
    kind = parse_noise_kind(a.kind);
    grid = parse_grid(a.grid);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  if (kind == NoiseKind::custom) throw UsageError("simulate supports symmetric or asymmetric noise");
  for (double eps : grid) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw UsageError("grid values must lie in [0, 1]");
  }

  std::vector<SimulatePoint> points(grid.size());
  std::vector<std::string> failures(grid.size());
  const unsigned threads = std::min<unsigned>(thread_cap(), std::max<std::size_t>(grid.size(), 1));
  auto work = [&](std::size_t first) {
    for (std::size_t g = first; g < grid.size(); g += threads) {
      try {
        points[g] = simulate_point(a, kind, grid[g], derive_seed(ctx.globals.seed, g));
      } catch (const std::exception& e) {
        failures[g] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < threads; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& th : pool) th.join();
  for (const auto& f : failures) {
    if (!f.empty()) throw std::runtime_error("simulation failed: " + f);
  }

  Table table{{"learner", "kind", "c", "n", "epsilon", "acc_theory", "acc_emp", "lp_theory", "lp_emp", "lr_theory",
               "lr_emp", "max_m_dev", "max_dev", "pass"},
              {}};
  json confusion = json::array();
  bool all_pass = true;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    table.rows.push_back(points[g].row);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < points[g].confusion.rows; ++i) {
      const auto r = points[g].confusion.row(i);
      rows.emplace_back(r.begin(), r.end());
    }
    confusion.push_back({{"epsilon", grid[g]}, {"confusion", rows}});
    all_pass = all_pass && points[g].pass;
  }
  if (ctx.globals.out.empty()) {
    ctx.out << table.csv();
  } else {
    ctx.write_table("simulate", table);
    write_file(ctx.out_dir() / "confusion.json", confusion.dump(2) + "\n");
    write_config(ctx);
  }
  ctx.out << (all_pass ? "all points within tolerance" : "some points exceed tolerance") << '\n';
  return ctx.globals.strict && !all_pass ? kExitFailure : kExitOk;
}

struct SelectArgs {
  std::string in;
  LearnerOptions learner;
  int epochs = 50;
  int iterations = 4;
  std::string remove_ratio = "auto";
  std::string estimator = "symmetric";
  std::string experiment;
};

int cmd_select(Context& ctx, const SelectArgs& a, bool iterative) {
  const LabeledDataset data = load_dataset(a.in);
  const auto factory = learner_factory(a.learner, data, a.epochs);
  IncvOptions options;
  options.iterations = iterative ? a.iterations : 1;
  options.epochs = a.epochs;
  options.seed = ctx.globals.seed;
  options.estimator = a.estimator == "asymmetric" ? EpsilonEstimator::asymmetric : EpsilonEstimator::symmetric;
  if (!iterative) {
    options.remove_ratio = RemoveRatio::value(0.0);
  } else if (a.remove_ratio != "auto") {
    try {
      options.remove_ratio = RemoveRatio::value(parse_double(a.remove_ratio));
    } catch (const std::invalid_argument&) {
      throw UsageError("--remove-ratio must be 'auto' or a number");
    }
    if (!(*options.remove_ratio.fixed >= 0.0)) throw UsageError("--remove-ratio must be >= 0");
  }

  const std::string experiment = a.experiment.empty() ? ctx.command->get_name() : a.experiment;
  Table metrics{{"experiment", "iteration", "lp", "lr", "eps_s", "selected", "candidate", "removed"}, {}};
  if (data.truth) {
    options.on_iteration = [&](const SelectionResult& r) {
      const auto m = selection_metrics(r.selected, data);
      metrics.rows.push_back({experiment, std::to_string(r.history.back().iteration), num(m.lp), num(m.lr),
                              num(m.eps_s), std::to_string(r.selected.size()), std::to_string(r.candidate.size()),
                              std::to_string(r.removed.size())});
    };
  }
  const SelectionResult result = iterative ? incv(data, factory, options)
                                           : ncv(data, factory, a.epochs, options.seed, options.estimator);
  if (!iterative && data.truth) options.on_iteration(result);

  write_file(ctx.out_dir() / "selection.json", json(result).dump(2) + "\n");
  if (data.truth) ctx.write_table("metrics", metrics);
  write_config(ctx);
  ctx.out << "selected=" << result.selected.size() << " candidate=" << result.candidate.size()
          << " removed=" << result.removed.size() << " epsilon_hat=" << num(result.epsilon_hat) << '\n';
  if (result.halted) {
    ctx.err << "warning: " << *result.halted << '\n';
    if (ctx.globals.strict) return kExitFailure;
  }
  return kExitOk;
}

struct CotrainArgs {
  std::string in;
  std::string selection;
  std::string test;
  LearnerOptions learner;
  int warmup = 40;
  int epochs = 200;
  int batch = 128;
  std::optional<double> eps_s;
  bool baseline = false;
};

int cmd_cotrain(Context& ctx, const CotrainArgs& a) {
  if (a.selection.empty() || !fs::exists(a.selection)) throw UsageError("--selection file not found: " + a.selection);
  if (a.learner.kind != "softmax") throw UsageError("co-training needs the softmax learner");
  const LabeledDataset data = load_dataset(a.in);
  const SelectionResult sel = json::parse(read_file(a.selection)).get<SelectionResult>();
  std::optional<LabeledDataset> test;
  if (!a.test.empty()) test = load_dataset(a.test);

  std::map<std::int64_t, std::size_t> row_of;
  for (std::size_t r = 0; r < data.size(); ++r) row_of.emplace(data.ids[r], r);
  auto rows_for = [&](const std::vector<std::int64_t>& ids) {
    std::vector<std::size_t> rows;
    for (auto id : ids) {
      const auto it = row_of.find(id);
      if (it == row_of.end()) throw ValidationError("selection id " + std::to_string(id) + " not in dataset");
      rows.push_back(it->second);
    }
    return rows;
  };
  const LabeledDataset selected = data.subset(rows_for(sel.selected));
  const LabeledDataset candidate = data.subset(rows_for(sel.candidate));

  CoTrainConfig cfg;
  cfg.warmup_epochs = a.warmup;
  cfg.total_epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.seed = ctx.globals.seed;
  if (a.eps_s) {
    cfg.selected_noise = *a.eps_s;
    cfg.noise_source = "given";
  } else {
    std::tie(cfg.selected_noise, cfg.noise_source) = default_selected_noise(sel.selected, data, sel.epsilon_hat);
  }
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  const int c = data.classes, d = static_cast<int>(data.dim());
  const std::optional<int> hidden = a.learner.hidden > 0 ? std::optional<int>(a.learner.hidden) : std::nullopt;
  const LearnerOptions lo = a.learner;
  const int epochs = a.epochs;
  GradientLearnerFactory factory = [=](std::uint64_t seed) -> std::unique_ptr<GradientLearner> {
    return std::make_unique<SoftmaxLearner>(c, d, train_config(lo, epochs, seed), hidden);
  };

  const auto result = cotrain(selected, candidate, cfg, factory, test ? &*test : nullptr);
  json final_json = {{"eps_s", cfg.selected_noise},
                     {"eps_s_source", cfg.noise_source},
                     {"selected", selected.size()},
                     {"candidate", candidate.size()}};
  Table final_table{{"model", "accuracy"}, {}};
  const auto& report = result.report;
  if (test) {
    final_json["acc_f1"] = report.accuracy_f1.back();
    final_json["acc_f2"] = report.accuracy_f2.back();
    final_table.rows.push_back({"cotrain_f1", num(report.accuracy_f1.back())});
    final_table.rows.push_back({"cotrain_f2", num(report.accuracy_f2.back())});
  }
  if (a.baseline && test) {
    auto naive = std::make_unique<SoftmaxLearner>(c, d, train_config(lo, epochs, ctx.globals.seed + 2), hidden);
    naive->fit(data, epochs);
    const auto predictions = naive->predict(*test);
    const double acc = accuracy(predictions, test->truth ? *test->truth : test->observed);
    final_json["acc_baseline"] = acc;
    final_table.rows.push_back({"baseline", num(acc)});
  }

  const fs::path dir = ctx.out_dir();
  if (ctx.globals.format == "json") {
    json rows = json::array();
    for (std::size_t e = 0; e < report.keep.size(); ++e) {
      rows.push_back({{"epoch", e + 1},
                      {"n_e", report.keep[e]},
                      {"acc_f1", report.accuracy_f1[e]},
                      {"acc_f2", report.accuracy_f2[e]},
                      {"c_samples_used", report.candidate_used[e]}});
    }
    write_file(dir / "cotrain.json", rows.dump(2) + "\n");
  } else {
    write_file(dir / "cotrain.csv", cotrain_report_csv(report));
  }
  ctx.write_table("final", final_table);
  write_file(dir / "final.json", final_json.dump(2) + "\n");
  write_config(ctx);
  for (const auto& r : final_table.rows) ctx.out << r[0] << '=' << r[1] << '\n';
  return kExitOk;
}

struct ReportArgs {
  std::vector<std::string> inputs;
};

int cmd_report(Context& ctx, const ReportArgs& a) {
  Table merged{{"run"}, {}};
  std::vector<std::map<std::string, std::string>> records;
  for (const auto& path : a.inputs) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
    const auto header = split_csv_line(line);
    for (const auto& h : header) {
      if (std::find(merged.header.begin(), merged.header.end(), h) == merged.header.end()) merged.header.push_back(h);
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto fields = split_csv_line(line);
      if (fields.size() != header.size()) throw SchemaError(path + ": field count differs from header", line_no);
      std::map<std::string, std::string> rec{{"run", path}};
      for (std::size_t k = 0; k < header.size(); ++k) rec[header[k]] = fields[k];
      records.push_back(std::move(rec));
    }
  }
  for (const auto& rec : records) {
    std::vector<std::string> row;
    for (const auto& h : merged.header) {
      const auto it = rec.find(h);
      row.push_back(it == rec.end() ? std::string() : it->second);
    }
    merged.rows.push_back(std::move(row));
  }
  if (ctx.globals.out.empty()) {
    ctx.out << (ctx.globals.format == "json" ? merged.to_json().dump(2) + "\n" : merged.csv());
    return kExitOk;
  }
  ctx.write_table("report", merged);
  write_config(ctx);
  return kExitOk;
}

std::vector<std::string> replay_args(const std::vector<std::string>& args) {
  for (std::size_t k = 0; k + 1 < args.size(); ++k) {
    if (args[k] == "--replay") {
      const json cfg = json::parse(read_file(args[k + 1]));
      auto replayed = cfg.at("args").get<std::vector<std::string>>();
      // a fresh --out next to --replay redirects the rerun
      for (std::size_t o = 0; o + 1 < args.size(); ++o) {
        if (args[o] != "--out") continue;
        for (std::size_t r = 0; r + 1 < replayed.size(); ++r) {
          if (replayed[r] == "--out") replayed[r + 1] = args[o + 1];
        }
      }
      return replayed;
    }
  }
  return args;
}

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
  std::vector<double> grid;
  if (text.empty()) return grid;
  const auto round12 = [](double v) { return std::round(v * 1e12) / 1e12; };
  if (text.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::size_t start = 0;
    while (true) {
      const auto colon = text.find(':', start);
      parts.push_back(parse_double(text.substr(start, colon - start)));
      if (colon == std::string_view::npos) break;
      start = colon + 1;
    }
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
      throw DomainError("grid range must be START:STOP:STEP with STEP > 0 and STOP >= START");
    }
    const auto steps = static_cast<long long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (long long s = 0; s <= steps; ++s) grid.push_back(round12(parts[0] + s * parts[2]));
    return grid;
  }
  for (const auto& item : split_csv_line(text)) grid.push_back(parse_double(item));
  return grid;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  try {
    args = replay_args(raw_args);
  } catch (const std::exception& e) {
    err << "error: cannot replay: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App app{"Label-noise theory, clean-sample selection and co-training experiments", "labnoise"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  Context ctx{Globals{}, out, err, &app, nullptr};
  auto& g = ctx.globals;
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--strict", g.strict, "turn warnings into failures");
  app.add_option("--format", g.format, "tabular output format")->check(CLI::IsMember({"csv", "json"}));
  std::string replay;
  app.add_option("--replay", replay, "rerun from a config.json written by an earlier run");

  BlobsArgs blobs;
  auto* c_blobs = app.add_subcommand("blobs", "generate a Gaussian-blob dataset");
  c_blobs->add_option("--classes", blobs.classes)->check(CLI::Range(2, 1 << 20));
  c_blobs->add_option("--dim", blobs.dim)->check(CLI::PositiveNumber);
  c_blobs->add_option("--per-class", blobs.per_class)->check(CLI::PositiveNumber);
  c_blobs->add_option("--separation", blobs.separation)->check(CLI::NonNegativeNumber);
  c_blobs->add_option("--spread", blobs.spread);
  c_blobs->add_option("--test-out", blobs.test_out, "also write a held-out sample from the same class means");
  c_blobs->add_option("--test-per-class", blobs.test_per_class, "held-out samples per class (0: --per-class)")
      ->check(CLI::NonNegativeNumber);

  CorruptArgs corrupt;
  auto* c_corrupt = app.add_subcommand("corrupt", "corrupt the true labels of a dataset");
  c_corrupt->add_option("--in", corrupt.in, "input dataset directory")->required();
  c_corrupt->add_option("--noise", corrupt.noise)->check(CLI::IsMember({"symmetric", "asymmetric", "custom"}));
  c_corrupt->add_option("--ratio", corrupt.ratio, "noise ratio");
  c_corrupt->add_option("--mapping", corrupt.mapping, "asymmetric target class per class")->delimiter(',');
  c_corrupt->add_option("--matrix", corrupt.matrix_file, "JSON rows of a custom transition matrix");

  TheoryArgs theory;
  auto* c_theory = app.add_subcommand("theory", "closed-form accuracy and LP/LR curves");
  c_theory->add_option("--kind", theory.kind);
  c_theory->add_option("--classes", theory.classes);
  c_theory->add_option("--grid", theory.grid, "START:STOP:STEP or comma list");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo check of the accuracy and LP/LR laws");
  c_sim->add_option("--learner", sim.learner)->check(CLI::IsMember({"oracle", "knn"}));
  c_sim->add_option("--kind", sim.kind);
  c_sim->add_option("--classes", sim.classes)->check(CLI::Range(2, 1 << 20));
  c_sim->add_option("--grid", sim.grid);
  c_sim->add_option("--n", sim.n, "total samples");
  c_sim->add_option("--dim", sim.dim)->check(CLI::PositiveNumber);
  c_sim->add_option("--separation", sim.separation);
  c_sim->add_option("--spread", sim.spread);
  c_sim->add_option("--k", sim.k)->check(CLI::PositiveNumber);
  c_sim->add_option("--tolerance", sim.tolerance, "max |empirical - theory| for accuracy, LP and LR");
  c_sim->add_option("--m-tolerance", sim.m_tolerance, "max |M - T| entry");

  SelectArgs ncv_args, incv_args;
  for (auto [name, args, iterative] : {std::tuple{"ncv", &ncv_args, false}, std::tuple{"incv", &incv_args, true}}) {
    auto* cmd = app.add_subcommand(name, iterative ? "iterative noisy cross-validation" : "noisy cross-validation");
    cmd->add_option("--in", args->in, "dataset directory")->required();
    add_learner_options(cmd, args->learner);
    cmd->add_option("--epochs", args->epochs, "training epochs per fold")->check(CLI::PositiveNumber);
    cmd->add_option("--estimator", args->estimator)->check(CLI::IsMember({"symmetric", "asymmetric"}));
    cmd->add_option("--experiment", args->experiment, "experiment id for the metrics table");
    if (iterative) {
      cmd->add_option("--iterations", args->iterations)->check(CLI::PositiveNumber);
      cmd->add_option("--remove-ratio", args->remove_ratio, "'auto' or a number >= 0");
    }
  }

  CotrainArgs co;
  auto* c_co = app.add_subcommand("cotrain", "co-train two learners on a selection");
  c_co->add_option("--in", co.in, "dataset directory")->required();
  c_co->add_option("--selection", co.selection, "selection.json from ncv/incv")->required();
  c_co->add_option("--test", co.test, "clean test dataset directory");
  add_learner_options(c_co, co.learner);
  c_co->add_option("--warmup", co.warmup, "epochs on the selected set only")->check(CLI::NonNegativeNumber);
  c_co->add_option("--epochs", co.epochs)->check(CLI::PositiveNumber);
  c_co->add_option("--selected-batch", co.batch, "|B_S|")->check(CLI::Range(2, 1 << 30));
  c_co->add_option("--eps-s", co.eps_s, "noise ratio of the selected set (default: measured or theory)");
  c_co->add_flag("--baseline", co.baseline, "also train one learner on the whole noisy set");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "merge run CSVs into one table");
  c_rep->add_option("--inputs", rep.inputs, "CSV files")->required()->check(CLI::ExistingFile);

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    ctx.command = app.get_subcommands().front();
    const std::string name = ctx.command->get_name();
    if (name == "blobs") return cmd_blobs(ctx, blobs);
    if (name == "corrupt") return cmd_corrupt(ctx, corrupt);
    if (name == "theory") return cmd_theory(ctx, theory);
    if (name == "simulate") return cmd_simulate(ctx, sim);
    if (name == "ncv") return cmd_select(ctx, ncv_args, false);
    if (name == "incv") return cmd_select(ctx, incv_args, true);
    if (name == "cotrain") return cmd_cotrain(ctx, co);
    if (name == "report") return cmd_report(ctx, rep);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return run(args, out, err);
}

}  // namespace labnoise::cli
