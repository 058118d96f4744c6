#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "noctl/harness.hpp"
#include "noctl/sampling.hpp"

namespace noctl {

namespace fs = std::filesystem;

namespace {

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n' << std::flush;
}

// Creates `dir` for a command's output. An existing non-empty directory is
// replaced only when forced.
void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ConfigError("out", fmt::format("{} already exists; pass --force to replace it", dir.string()));
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& file) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError(fmt::format("{}: cannot parse '{}' as a number", file.string(), s));
  }
}

std::string g17(double v) { return fmt::format("{:.17g}", v); }

NetworkSpec net_spec(const NetConfig& n, int input) {
  NetworkSpec s;
  s.kind = n.kind;
  s.input_width = input;
  s.hidden_width = n.hidden;
  s.depth = n.depth;
  s.output_width = n.output;
  return s;
}

fs::path control_file(const fs::path& out, int p) { return out / "reference" / fmt::format("p{}_control.csv", p); }
fs::path target_file(const fs::path& out, int p) { return out / "reference" / fmt::format("p{}_target.csv", p); }

void write_matrix(const Matrix& m, const fs::path& path) {
  std::ofstream out = open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << g17(m(i, j));
    out << '\n';
  }
}

CostSpec cost_for(const ExperimentConfig& config, const Reference& ref, int p) {
  if (config.problem == ProblemKind::DiffusionReaction) return make_tracking_cost(ref.target, p);
  return make_cost(config.problem, p);
}

double state_mse(const ExperimentConfig& config, const ProblemSpec& spec, const Reference& ref,
                 std::span<const double> u) {
  if (spec.is_ode()) {
    const Trajectory a = rk4_solve(spec, u, spec.I), b = rk4_solve(spec, ref.control, spec.I);
    return mse_report(a.y, b.y).mse;
  }
  const Matrix y = pde_state(spec, u, config.reference.refine);
  return mse_report(std::span<const double>(y.data(), std::size_t(y.size())),
                    std::span<const double>(ref.target.data(), std::size_t(ref.target.size())))
      .mse;
}

// Runs independent jobs, capturing the first exception of each.
template <class Fn>
std::vector<std::exception_ptr> run_pool(int n, Fn&& job) {
  std::vector<std::exception_ptr> errors(std::size_t(std::max(n, 0)));
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      job(i);
    } catch (...) {
      errors[std::size_t(i)] = std::current_exception();
    }
  }
  return errors;
}

int problem_order(const std::string& p) {
  if (p == "linear") return 0;
  if (p == "nonlinear") return 1;
  if (p == "diffusion") return 2;
  return 3;
}

int routine_order(const std::string& r) {
  if (r == "gd") return 0;
  if (r == "adam") return 1;
  if (r == "bfgs") return 2;
  return 3;
}

}  // namespace

std::vector<double> read_control(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("reference", fmt::format("{} is missing; run reference first", path.string()));
  std::string line;
  std::getline(in, line);
  if (line != "node,value") throw ArgumentError(path.string() + ": expected header node,value");
  std::vector<double> u;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 2) throw ArgumentError(path.string() + ": expected two columns");
    if (parse_double(cells[0], path) != double(u.size())) throw ArgumentError(path.string() + ": nodes out of order");
    u.push_back(parse_double(cells[1], path));
  }
  return u;
}

Matrix read_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("reference", fmt::format("{} is missing; run reference first", path.string()));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    for (const std::string& c : split(line)) r.push_back(parse_double(c, path));
    if (!rows.empty() && r.size() != rows.front().size()) throw ArgumentError(path.string() + ": ragged rows");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ArgumentError(path.string() + ": empty");
  Matrix m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  return m;
}

Reference load_reference(const ExperimentConfig& config, const fs::path& out, int p) {
  const ProblemSpec spec = config.problem_spec();
  Reference r;
  r.control = read_control(control_file(out, p));
  if (int(r.control.size()) != spec.sensors())
    throw ArgumentError(fmt::format("{}: {} nodes, problem has {}", control_file(out, p).string(), r.control.size(),
                                    spec.sensors()));
  if (!spec.is_ode()) {
    r.target = read_matrix(target_file(out, p));
    if (r.target.rows() != spec.I || r.target.cols() != spec.Ix)
      throw ArgumentError(target_file(out, p).string() + ": shape does not match the problem grid");
  }
  return r;
}

DeepOnetModel load_model(const ExperimentConfig& config, const fs::path& out) {
  fs::path path;
  if (config.checkpoint) {
    path = *config.checkpoint;
  } else {
    path = out / "train" / "model.ckpt";
    if (!fs::exists(path))
      throw ConfigError("checkpoint", fmt::format("no checkpoint given and {} is missing; run train first", path.string()));
  }
  DeepOnetModel m = load_checkpoint(path.string());
  try {
    check_model_matches(config.problem_spec(), m);
  } catch (const Error& e) {
    throw ConfigError("checkpoint", e.what());
  }
  return m;
}

DeepOnetModel cmd_train(const ExperimentConfig& config, const RunOptions& opts) {
  config.validate();
  if (!config.training) throw ConfigError("training", "the train command needs a training block");
  const TrainingBlock& t = *config.training;
  const ProblemSpec spec = config.problem_spec();
  const fs::path dir = opts.out / "train";
  prepare_dir(dir, opts.force);
  {
    std::ofstream cfg = open_out(dir / "config.json");
    cfg << dump_config(config);
  }

  const TrainingSet set =
      build_training_set(spec, default_families(config.problem), t.functions, stream_seed(config, Stream::Sampling));
  const DeepOnetModel init = make_deeponet(net_spec(t.net, spec.sensors()), net_spec(t.net, spec.query_dim()),
                                           spec.sensors(), spec.query_dim(), stream_seed(config, Stream::Init));
  TrainConfig tc = t.train;
  tc.seed = stream_seed(config, Stream::Shuffle);
  say(opts.log, fmt::format("training {} on {} functions, {} parameters, {} epochs", to_string(config.problem),
                            set.size(), init.params.count(), tc.epochs));
  const auto t0 = std::chrono::steady_clock::now();
  auto progress = [&](const EpochRow& r) {
    if (r.epoch % 10 == 0 || r.epoch + 1 == tc.epochs) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      say(opts.log, fmt::format("epoch {:5d}  loss {:.4e}  physics {:.4e}  ic {:.4e}  bc {:.4e}  lr {:.1e}  {:.0f}s",
                                r.epoch, r.loss.total, r.loss.physics, r.loss.ic, r.loss.bc, r.lr, s));
    }
  };
  TrainResult res;
  try {
    res = train(init, spec, set, tc, progress);
  } catch (const TrainingAborted& e) {
    write_history_csv(e.partial().history, (dir / "history.csv").string());
    save_checkpoint(e.partial().model, (dir / "model.ckpt").string());
    throw;
  }
  write_history_csv(res.history, (dir / "history.csv").string());
  save_checkpoint(res.model, (dir / "model.ckpt").string());
  const LossParts& l = res.history.back().loss;
  say(opts.log, fmt::format("final loss {:.6e} = physics {:.6e} + ic {:.6e} + bc {:.6e}", l.total, l.physics, l.ic,
                            l.bc));
  return res.model;
}

std::vector<Reference> cmd_reference(const ExperimentConfig& config, const RunOptions& opts) {
  config.validate();
  const ProblemSpec spec = config.problem_spec();
  const fs::path dir = opts.out / "reference";
  prepare_dir(dir, opts.force);
  const int n = int(config.costs.size());
  std::vector<Reference> refs(static_cast<std::size_t>(n));
  std::vector<std::string> summary(static_cast<std::size_t>(n));
  std::vector<std::string> failures(static_cast<std::size_t>(n));

  const auto errors = run_pool(n, [&](int i) {
    const int p = config.costs[std::size_t(i)];
    Reference& r = refs[std::size_t(i)];
    if (spec.is_ode()) {
      const DalResult d = dal_optimize(spec, make_cost(config.problem, p), config.reference.dal);
      r.control = d.control;
      std::ofstream h = open_out(dir / fmt::format("p{}_history.csv", p));
      h << "iter,J\n";
      for (std::size_t k = 0; k < d.J.size(); ++k) h << k << ',' << g17(d.J[k]) << '\n';
      summary[std::size_t(i)] = fmt::format("{},{},{},{},{}", p, d.iterations, g17(d.grad_norm),
                                            d.converged ? "yes" : "no", g17(d.J.back()));
      if (!d.converged)
        failures[std::size_t(i)] = fmt::format("cost {}: no convergence after {} iterations, gradient norm {:.3e}", p,
                                               d.iterations, d.grad_norm);
    } else {
      const double l = tracking_length_scale(p);
      const std::uint64_t seed = stream_seed(config, Stream::Tracking, std::uint64_t(p));
      TrackingTarget tt = make_tracking_target(spec, l, seed, config.reference.refine);
      r.control = std::move(tt.u);
      r.target = std::move(tt.y);
      write_matrix(r.target, target_file(opts.out, p));
      summary[std::size_t(i)] = fmt::format("{},{},{}", p, g17(l), seed);
    }
    write_control(r.control, control_file(opts.out, p).string());
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);

  std::ofstream s = open_out(dir / "summary.csv");
  s << (spec.is_ode() ? "cost,iterations,grad_norm,converged,J\n" : "cost,length_scale,seed\n");
  for (const std::string& row : summary) s << row << '\n';
  s.close();
  for (std::size_t i = 0; i < summary.size(); ++i) say(opts.log, "reference " + summary[i]);
  std::string failed;
  for (const std::string& f : failures)
    if (!f.empty()) failed += (failed.empty() ? "" : "; ") + f;
  if (!failed.empty()) throw NumericalError("reference: " + failed);
  return refs;
}

std::vector<ResultRow> cmd_solve(const ExperimentConfig& config, const RunOptions& opts) {
  config.validate();
  if (opts.routines.empty()) throw ConfigError("routine", "no routine selected");
  const ProblemSpec spec = config.problem_spec();
  const DeepOnetModel model = load_model(config, opts.out);
  std::vector<Reference> refs;
  std::vector<std::unique_ptr<ControlObjective>> objectives;
  for (int p : config.costs) {
    refs.push_back(load_reference(config, opts.out, p));
    objectives.push_back(
        std::make_unique<ControlObjective>(model, spec, cost_for(config, refs.back(), p), config.penalty));
  }
  const fs::path dir = opts.out / "solve";
  prepare_dir(dir, opts.force);

  const int nr = int(opts.routines.size());
  const int n = int(config.costs.size()) * nr;
  std::vector<ResultRow> rows(static_cast<std::size_t>(n));
  run_pool(n, [&](int job) {
    const std::size_t ci = std::size_t(job / nr);
    const Routine routine = opts.routines[std::size_t(job % nr)];
    const int p = config.costs[ci];
    const ControlObjective& obj = *objectives[ci];
    ResultRow& row = rows[std::size_t(job)];
    row.problem = to_string(config.problem);
    row.routine = to_string(routine);
    row.cost = p;
    const auto t0 = std::chrono::steady_clock::now();
    OptimizeResult res;
    bool ok = true;
    std::string why;
    try {
      res = optimize_control(obj, config.routines.for_routine(routine));
    } catch (const OptimizationAborted& e) {
      res = e.partial();
      ok = false;
      why = e.what();
    } catch (const Error& e) {
      ok = false;
      why = e.what();
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path cell = dir / fmt::format("{}_p{}", row.routine, p);
    fs::create_directories(cell);
    write_optimize_history(res.history, (cell / "history.csv").string());
    if (!res.control.empty()) write_control(res.control, (cell / "control.csv").string());
    row.status = ok ? res.stop : "failed";
    row.iterations = res.iterations;
    const double nan = std::nan("");
    row.mse = row.sd = row.J_mu = row.cost_value = row.mean_residual = nan;
    if (!res.history.empty()) {
      row.J_mu = res.history.back().parts.total;
      row.cost_value = res.history.back().parts.cost;
    }
    if (ok) {
      const MseReport m = mse_report(res.control, refs[ci].control);
      row.mse = m.mse;
      row.sd = m.sd;
      row.mean_residual = obj.mean_residual(res.control);
      if (config.state_mse) row.state_mse = state_mse(config, spec, refs[ci], res.control);
    }
    say(opts.log, fmt::format("{:<5} J{}  mse {:.4e}  sd {:.4e}  J_mu {:.6e}  {} after {} iterations  {:.1f}s{}",
                              row.routine, p, row.mse, row.sd, row.J_mu, row.status, row.iterations,
                              row.wall_seconds, ok ? (res.floored ? "  (1/y floor was active)" : "") : "  (" + why + ")"));
  });

  std::ofstream out = open_out(dir / "results.csv");
  out << "problem,routine,cost,mse,sd,iterations,J_mu,cost_value,mean_residual,status,state_mse\n";
  for (const ResultRow& r : rows)
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.problem, r.routine, r.cost, g17(r.mse), g17(r.sd),
                       r.iterations, g17(r.J_mu), g17(r.cost_value), g17(r.mean_residual), r.status,
                       r.state_mse ? g17(*r.state_mse) : "");
  return rows;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, const RunOptions& opts) {
  config.validate();
  const ProblemSpec spec = config.problem_spec();
  const DeepOnetModel model = load_model(config, opts.out);
  std::vector<Reference> refs;
  for (int p : config.costs) refs.push_back(load_reference(config, opts.out, p));
  const fs::path dir = opts.out / "sweep";
  prepare_dir(dir, opts.force);

  const int nm = int(config.sweep.mu.size()), nl = int(config.sweep.lambda.size());
  const int n = int(config.costs.size()) * nm * nl;
  RoutineConfig adam = config.routines.for_routine(Routine::ADAM);
  adam.lr = config.sweep.lr;
  adam.iterations = config.sweep.iterations;

  std::vector<SweepRow> rows(static_cast<std::size_t>(n));
  std::vector<double> sds(static_cast<std::size_t>(n), std::nan(""));
  run_pool(n, [&](int job) {
    const std::size_t ci = std::size_t(job / (nm * nl));
    const int mi = (job / nl) % nm, li = job % nl;
    SweepRow& row = rows[std::size_t(job)];
    row.cost = config.costs[ci];
    row.mu = config.sweep.mu[std::size_t(mi)];
    row.lambda = config.sweep.lambda[std::size_t(li)];
    const ControlObjective obj(model, spec, cost_for(config, refs[ci], row.cost), {row.mu, row.lambda});
    OptimizeResult res;
    bool ok = true;
    try {
      res = optimize_control(obj, adam);
    } catch (const OptimizationAborted& e) {
      res = e.partial();
      ok = false;
    } catch (const Error&) {
      ok = false;
    }
    const fs::path cell = dir / fmt::format("p{}_mu{:g}_lambda{:g}", row.cost, row.mu, row.lambda);
    fs::create_directories(cell);
    write_optimize_history(res.history, (cell / "history.csv").string());
    if (!res.control.empty()) write_control(res.control, (cell / "control.csv").string());
    row.status = ok ? res.stop : "failed";
    const double nan = std::nan("");
    row.mse = row.mean_residual = row.J_mu = row.cost_value = nan;
    if (!res.history.empty()) {
      row.J_mu = res.history.back().parts.total;
      row.cost_value = res.history.back().parts.cost;
    }
    if (ok) {
      const MseReport m = mse_report(res.control, refs[ci].control);
      row.mse = m.mse;
      sds[std::size_t(job)] = m.sd;
      row.mean_residual = obj.mean_residual(res.control);
    }
    say(opts.log, fmt::format("J{}  mu {:<5g} lambda {:<4g}  mse {:.4e}  residual {:.4e}  {}", row.cost, row.mu,
                              row.lambda, row.mse, row.mean_residual, row.status));
  });

  std::ofstream out = open_out(dir / "sweep.csv");
  out << "problem,cost,mu,lambda,mse,sd,mean_residual,J_mu,cost_value,status\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow& r = rows[i];
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", to_string(config.problem), r.cost, g17(r.mu), g17(r.lambda),
                       g17(r.mse), g17(sds[i]), g17(r.mean_residual), g17(r.J_mu), g17(r.cost_value), r.status);
  }
  return rows;
}

std::vector<ResultRow> read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = split(line);
  if (header.size() < 10 || header[0] != "problem" || header[3] != "mse")
    throw ArgumentError(path.string() + ": not a results file");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != header.size()) throw ArgumentError(path.string() + ": wrong column count");
    ResultRow r;
    r.problem = c[0];
    r.routine = c[1];
    r.cost = int(parse_double(c[2], path));
    r.mse = parse_double(c[3], path);
    r.sd = parse_double(c[4], path);
    r.iterations = int(parse_double(c[5], path));
    r.J_mu = parse_double(c[6], path);
    r.cost_value = parse_double(c[7], path);
    r.mean_residual = parse_double(c[8], path);
    r.status = c[9];
    if (c.size() > 10 && !c[10].empty()) r.state_mse = parse_double(c[10], path);
    rows.push_back(r);
  }
  return rows;
}

std::vector<ReportCell> cmd_report(const fs::path& dir, bool force, std::ostream* log) {
  if (!fs::is_directory(dir)) throw ConfigError("out", dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "results.csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("out", fmt::format("no results.csv below {}", dir.string()));

  std::map<std::tuple<int, int, int>, ReportCell> cells;
  for (const fs::path& f : files)
    for (const ResultRow& r : read_results(f)) {
      const auto key = std::make_tuple(problem_order(r.problem), r.cost, routine_order(r.routine));
      if (cells.count(key))
        throw ArgumentError(fmt::format("{}: {} {} J{} appears in more than one results file", f.string(), r.problem,
                                        r.routine, r.cost));
      cells[key] = {r.problem, r.routine, r.cost, r.mse, r.sd, false};
    }
  // Mark the smallest MSE per (problem, cost); failed runs carry NaN.
  std::map<std::pair<int, int>, ReportCell*> best;
  for (auto& [key, cell] : cells) {
    if (!std::isfinite(cell.mse)) continue;
    auto& b = best[{std::get<0>(key), std::get<1>(key)}];
    if (!b || cell.mse < b->mse) b = &cell;
  }
  for (auto& [key, b] : best) b->best = true;

  const fs::path csv = dir / "report.csv", txt = dir / "report.txt";
  if (!force && (fs::exists(csv) || fs::exists(txt)))
    throw ConfigError("out", fmt::format("{} already has a report; pass --force to replace it", dir.string()));

  std::vector<ReportCell> out;
  for (const auto& [key, cell] : cells) out.push_back(cell);
  {
    std::ofstream c = open_out(csv);
    c << "problem,routine,cost,mse,sd,best\n";
    for (const ReportCell& r : out)
      c << fmt::format("{},{},{},{},{},{}\n", r.problem, r.routine, r.cost, g17(r.mse), g17(r.sd), r.best ? 1 : 0);
  }
  std::ostringstream t;
  t << "MSE (+- SD) of the optimized control against the reference; * marks the best routine per cost.\n";
  std::string current;
  for (const std::string& problem : {std::string("linear"), std::string("nonlinear"), std::string("diffusion")}) {
    std::vector<const ReportCell*> mine;
    for (const ReportCell& r : out)
      if (r.problem == problem) mine.push_back(&r);
    if (mine.empty()) continue;
    t << '\n' << problem << '\n';
    t << fmt::format("  {:<8}", "routine");
    for (int p = 1; p <= 3; ++p) t << fmt::format("{:>28}", fmt::format("J{}", p));
    t << '\n';
    for (const std::string& routine : {std::string("gd"), std::string("adam"), std::string("bfgs")}) {
      bool any = false;
      std::string line = fmt::format("  {:<8}", routine);
      for (int p = 1; p <= 3; ++p) {
        const ReportCell* c = nullptr;
        for (const ReportCell* r : mine)
          if (r->routine == routine && r->cost == p) c = r;
        std::string s = "-";
        if (c) {
          any = true;
          s = std::isfinite(c->mse) ? fmt::format("{}{:.3e} +- {:.3e}", c->best ? "*" : "", c->mse, c->sd) : "failed";
        }
        line += fmt::format("{:>28}", s);
      }
      if (any) t << line << '\n';
    }
  }
  {
    std::ofstream o = open_out(txt);
    o << t.str();
  }
  if (log) *log << t.str();
  return out;
}

}  // namespace noctl
