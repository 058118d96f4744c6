#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "noctl/harness.hpp"
#include "noctl/sampling.hpp"

namespace noctl {

using nlohmann::json;

namespace {

// Strict object reader: every key must be consumed, errors carry the path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  void skip(const std::string& key) { seen_.insert(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key), fmt::format("wrong type ({})", j_.at(key).type_name()));
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = c.name;
  j["problem"] = to_string(c.problem);
  j["seed"] = c.seed;
  j["out"] = c.out;
  if (c.checkpoint) j["checkpoint"] = *c.checkpoint;
  if (c.training) {
    const TrainingBlock& t = *c.training;
    j["training"] = {
        {"network", {{"kind", to_string(t.net.kind)}, {"hidden", t.net.hidden}, {"depth", t.net.depth},
                     {"output", t.net.output}}},
        {"functions", t.functions},
        {"epochs", t.train.epochs},
        {"batch", t.train.batch},
        {"lr", t.train.lr},
        {"lr_step", t.train.lr_step ? json(*t.train.lr_step) : json(nullptr)},
        {"gamma", t.train.gamma},
    };
  }
  j["costs"] = c.costs;
  j["penalty"] = {{"mu", c.penalty.mu}, {"lambda", c.penalty.lambda}};
  j["routines"] = {
      {"gd_lr", c.routines.gd_lr},
      {"adam_lr", c.routines.adam_lr},
      {"iterations", c.routines.iterations},
      {"armijo",
       {{"max_trials", c.routines.armijo.max_trials},
        {"factor", c.routines.armijo.factor},
        {"c", c.routines.armijo.c}}},
      {"grad_tol", c.routines.grad_tol.value_or(0.0)},
  };
  j["reference"] = {
      {"dal", {{"step", c.reference.dal.step}, {"max_iter", c.reference.dal.max_iter}, {"tol", c.reference.dal.tol}}},
      {"refine", c.reference.refine},
  };
  j["sweep"] = {
      {"mu", c.sweep.mu}, {"lambda", c.sweep.lambda}, {"lr", c.sweep.lr}, {"iterations", c.sweep.iterations}};
  j["state_mse"] = c.state_mse;
  return j;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  int version = 0;
  if (!r.has("schema_version")) throw ConfigError("schema_version", "missing");
  r.get("schema_version", version);
  if (version != kSchemaVersion)
    throw ConfigError("schema_version", fmt::format("unsupported version {} (expected {})", version, kSchemaVersion));
  r.get("name", c.name);
  std::string problem = to_string(c.problem);
  r.get("problem", problem);
  try {
    c.problem = problem_kind_from_string(problem);
  } catch (const ArgumentError& e) {
    throw ConfigError("problem", e.what());
  }
  r.get("seed", c.seed);
  r.get("out", c.out);
  if (r.has("checkpoint")) {
    std::string path;
    r.get("checkpoint", path);
    c.checkpoint = path;
  } else {
    r.skip("checkpoint");
  }
  if (r.has("training")) {
    TrainingBlock t;
    Reader tr(r.raw("training"), "training");
    if (tr.has("network")) {
      Reader nr(tr.raw("network"), "training.network");
      std::string kind = to_string(t.net.kind);
      nr.get("kind", kind);
      try {
        t.net.kind = net_kind_from_string(kind);
      } catch (const ArgumentError& e) {
        throw ConfigError("training.network.kind", e.what());
      }
      nr.get("hidden", t.net.hidden);
      nr.get("depth", t.net.depth);
      nr.get("output", t.net.output);
      nr.finish();
    }
    tr.get("functions", t.functions);
    tr.get("epochs", t.train.epochs);
    tr.get("batch", t.train.batch);
    tr.get("lr", t.train.lr);
    if (tr.has("lr_step")) {
      int step = 0;
      tr.get("lr_step", step);
      t.train.lr_step = step;
    } else {
      tr.skip("lr_step");
    }
    tr.get("gamma", t.train.gamma);
    tr.finish();
    c.training = t;
  } else {
    r.skip("training");
  }
  r.get("costs", c.costs);
  if (r.has("penalty")) {
    Reader pr(r.raw("penalty"), "penalty");
    pr.get("mu", c.penalty.mu);
    pr.get("lambda", c.penalty.lambda);
    pr.finish();
  }
  if (r.has("routines")) {
    Reader rr(r.raw("routines"), "routines");
    rr.get("gd_lr", c.routines.gd_lr);
    rr.get("adam_lr", c.routines.adam_lr);
    rr.get("iterations", c.routines.iterations);
    if (rr.has("armijo")) {
      Reader ar(rr.raw("armijo"), "routines.armijo");
      ar.get("max_trials", c.routines.armijo.max_trials);
      ar.get("factor", c.routines.armijo.factor);
      ar.get("c", c.routines.armijo.c);
      ar.finish();
    }
    // 0 disables the early stop.
    double tol = c.routines.grad_tol.value_or(0.0);
    rr.get("grad_tol", tol);
    if (tol == 0.0)
      c.routines.grad_tol.reset();
    else
      c.routines.grad_tol = tol;
    rr.finish();
  }
  if (r.has("reference")) {
    Reader rr(r.raw("reference"), "reference");
    if (rr.has("dal")) {
      Reader dr(rr.raw("dal"), "reference.dal");
      dr.get("step", c.reference.dal.step);
      dr.get("max_iter", c.reference.dal.max_iter);
      dr.get("tol", c.reference.dal.tol);
      dr.finish();
    }
    rr.get("refine", c.reference.refine);
    rr.finish();
  }
  if (r.has("sweep")) {
    Reader sr(r.raw("sweep"), "sweep");
    sr.get("mu", c.sweep.mu);
    sr.get("lambda", c.sweep.lambda);
    sr.get("lr", c.sweep.lr);
    sr.get("iterations", c.sweep.iterations);
    sr.finish();
  }
  r.get("state_mse", c.state_mse);
  r.finish();
  return c;
}

void require_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be positive");
}

ExperimentConfig base(const std::string& name, ProblemKind kind) {
  ExperimentConfig c;
  c.name = name;
  c.problem = kind;
  c.out = "runs/" + name;
  TrainingBlock t;
  t.net.kind = kind == ProblemKind::NonlinearODE ? NetKind::ModifiedFC : NetKind::PlainFC;
  switch (kind) {
    case ProblemKind::LinearODE:
      c.penalty = {100.0, 0.2};
      c.routines.gd_lr = 0.2;
      c.routines.adam_lr = 0.01;
      c.routines.iterations = 2000;
      break;
    case ProblemKind::NonlinearODE:
      c.penalty = {20.0, 0.2};
      c.routines.gd_lr = 0.1;
      c.routines.adam_lr = 0.01;
      c.routines.iterations = 5000;
      break;
    case ProblemKind::DiffusionReaction:
      c.penalty = {20.0, 0.5};
      c.routines.gd_lr = 0.02;
      c.routines.adam_lr = 0.02;
      c.routines.iterations = 2000;
      break;
  }
  c.sweep.iterations = kind == ProblemKind::NonlinearODE ? 5000 : 2000;
  c.training = t;
  return c;
}

}  // namespace

RoutineConfig RoutineBlock::for_routine(Routine r) const {
  RoutineConfig c;
  c.routine = r;
  c.lr = r == Routine::GD ? gd_lr : adam_lr;
  c.iterations = iterations;
  c.armijo = armijo;
  c.grad_tol = grad_tol;
  return c;
}

void ExperimentConfig::validate() const {
  if (checkpoint.has_value() == training.has_value())
    throw ConfigError(checkpoint ? "checkpoint" : "training",
                      "exactly one of checkpoint and training must be given");
  if (checkpoint && checkpoint->empty()) throw ConfigError("checkpoint", "empty path");
  if (training) {
    const TrainingBlock& t = *training;
    if (t.net.hidden < 1) throw ConfigError("training.network.hidden", "must be at least 1");
    if (t.net.depth < 2) throw ConfigError("training.network.depth", "must be at least 2");
    if (t.net.output < 1) throw ConfigError("training.network.output", "must be at least 1");
    if (t.functions < 1) throw ConfigError("training.functions", "must be at least 1");
    try {
      t.train.validate(t.functions);
    } catch (const ConfigError& e) {
      throw ConfigError("training." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
  }
  if (costs.empty()) throw ConfigError("costs", "at least one cost is required");
  std::set<int> seen;
  for (int p : costs) {
    if (p < 1 || p > 3) throw ConfigError("costs", fmt::format("cost {} is not defined for {}", p, to_string(problem)));
    if (!seen.insert(p).second) throw ConfigError("costs", fmt::format("cost {} listed twice", p));
  }
  penalty.validate();
  require_positive(routines.gd_lr, "routines.gd_lr");
  require_positive(routines.adam_lr, "routines.adam_lr");
  if (routines.iterations < 0) throw ConfigError("routines.iterations", "must be non-negative");
  if (routines.armijo.max_trials < 1) throw ConfigError("routines.armijo.max_trials", "must be at least 1");
  if (!(routines.armijo.factor > 0.0 && routines.armijo.factor < 1.0))
    throw ConfigError("routines.armijo.factor", "must lie in (0, 1)");
  if (!(routines.armijo.c > 0.0 && routines.armijo.c < 1.0)) throw ConfigError("routines.armijo.c", "must lie in (0, 1)");
  if (routines.grad_tol) require_positive(*routines.grad_tol, "routines.grad_tol");
  require_positive(reference.dal.step, "reference.dal.step");
  require_positive(reference.dal.tol, "reference.dal.tol");
  if (reference.dal.max_iter < 1) throw ConfigError("reference.dal.max_iter", "must be at least 1");
  if (reference.refine < 1) throw ConfigError("reference.refine", "must be at least 1");
  if (sweep.mu.empty()) throw ConfigError("sweep.mu", "empty");
  if (sweep.lambda.empty()) throw ConfigError("sweep.lambda", "empty");
  for (double m : sweep.mu)
    if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("sweep.mu", "values must be non-negative");
  for (double l : sweep.lambda)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("sweep.lambda", "values must be non-negative");
  require_positive(sweep.lr, "sweep.lr");
  if (sweep.iterations < 0) throw ConfigError("sweep.iterations", "must be non-negative");
}

std::vector<std::string> preset_names() {
  return {"paper-linear", "paper-nonlinear", "paper-diffusion", "desk-linear", "desk-nonlinear", "desk-diffusion"};
}

ExperimentConfig preset(const std::string& name) {
  if (name == "paper-linear" || name == "paper-nonlinear" || name == "paper-diffusion") {
    const ProblemKind kind = name == "paper-linear"      ? ProblemKind::LinearODE
                             : name == "paper-nonlinear" ? ProblemKind::NonlinearODE
                                                         : ProblemKind::DiffusionReaction;
    ExperimentConfig c = base(name, kind);
    TrainingBlock& t = *c.training;
    t.net.hidden = 200;
    t.net.output = 200;
    t.net.depth = kind == ProblemKind::NonlinearODE ? 5 : 4;
    t.train.lr = 1e-4;
    if (kind == ProblemKind::LinearODE) {
      t.functions = 100000;
      t.train.epochs = 1000;
      t.train.batch = 100;
      t.train.lr_step = 200;
      t.train.gamma = 0.5;
    } else if (kind == ProblemKind::NonlinearODE) {
      t.functions = 100000;
      t.train.epochs = 1100;
      t.train.batch = 100;
    } else {
      t.functions = 10000;
      t.train.epochs = 2500;
      t.train.batch = 50;
    }
    return c;
  }
  if (name == "desk-linear") {
    ExperimentConfig c = base(name, ProblemKind::LinearODE);
    TrainingBlock& t = *c.training;
    t.functions = 2000;
    t.train.epochs = 300;
    t.train.batch = 25;
    t.train.lr = 2e-3;
    t.train.lr_step = 75;
    t.train.gamma = 0.5;
    return c;
  }
  if (name == "desk-nonlinear") {
    ExperimentConfig c = base(name, ProblemKind::NonlinearODE);
    TrainingBlock& t = *c.training;
    t.net.depth = 4;
    t.functions = 2000;
    t.train.epochs = 300;
    t.train.batch = 100;
    t.train.lr = 3e-3;
    return c;
  }
  if (name == "desk-diffusion") {
    ExperimentConfig c = base(name, ProblemKind::DiffusionReaction);
    TrainingBlock& t = *c.training;
    t.functions = 1000;
    t.train.epochs = 300;
    t.train.batch = 50;
    t.train.lr = 1e-3;
    t.train.lr_step = 100;
    t.train.gamma = 0.5;
    return c;
  }
  throw ConfigError("preset", fmt::format("unknown preset '{}'", name));
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config", "expected an object");
  if (j.contains("preset")) {
    if (!j.at("preset").is_string()) throw ConfigError("preset", "expected a string");
    json merged = to_json(preset(j.at("preset").get<std::string>()));
    json patch = j;
    patch.erase("preset");
    if (!patch.contains("schema_version")) throw ConfigError("schema_version", "missing");
    merged.merge_patch(patch);
    j = merged;
  }
  ExperimentConfig c = from_json(j);
  c.validate();
  return c;
}

std::string dump_config(const ExperimentConfig& config) {
  return to_json(config).dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path_or_preset) {
  const std::filesystem::path p(path_or_preset);
  if (std::filesystem::exists(p)) {
    std::ifstream in(p);
    if (!in) throw ConfigError("config", "cannot read " + path_or_preset);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
  }
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), path_or_preset) != names.end()) {
    ExperimentConfig c = preset(path_or_preset);
    c.validate();
    return c;
  }
  throw ConfigError("config", fmt::format("'{}' is neither a file nor a preset ({})", path_or_preset,
                                          fmt::join(names, ", ")));
}

std::uint64_t stream_seed(const ExperimentConfig& config, Stream s, std::uint64_t index) {
  return derive_seed(derive_seed(config.seed, static_cast<std::uint64_t>(s)), index);
}

}  // namespace noctl
