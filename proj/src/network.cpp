#include "noctl/network.hpp"

#include <cmath>
#include <random>

namespace noctl {

std::string to_string(NetKind kind) { return kind == NetKind::PlainFC ? "fc" : "modified-fc"; }

NetKind net_kind_from_string(const std::string& s) {
  if (s == "fc") return NetKind::PlainFC;
  if (s == "modified-fc") return NetKind::ModifiedFC;
  throw ArgumentError("unknown network kind '" + s + "' (expected fc or modified-fc)");
}

void NetworkSpec::validate() const {
  if (kind != NetKind::PlainFC && kind != NetKind::ModifiedFC) throw ArgumentError("network kind out of range");
  if (depth < 2) throw ArgumentError("network depth must be >= 2");
  if (kind == NetKind::ModifiedFC && depth < 3) throw ArgumentError("modified-fc network needs depth >= 3");
  if (input_width < 1 || hidden_width < 1 || output_width < 1) throw ArgumentError("network widths must be >= 1");
}

std::vector<TensorShape> parameter_layout(const NetworkSpec& spec, const std::string& prefix) {
  spec.validate();
  std::vector<TensorShape> out;
  auto layer = [&](const std::string& tag, int in, int width) {
    out.push_back({prefix + "W" + tag, in, width});
    out.push_back({prefix + "b" + tag, 1, width});
  };
  const int h = spec.hidden_width;
  if (spec.kind == NetKind::PlainFC) {
    const int layers = spec.depth - 1;
    for (int k = 0; k < layers; ++k) {
      const int in = k == 0 ? spec.input_width : h;
      const int width = k + 1 == layers ? spec.output_width : h;
      layer(std::to_string(k), in, width);
    }
  } else {
    layer("u", spec.input_width, h);
    layer("v", spec.input_width, h);
    layer("1", spec.input_width, h);
    for (int k = 0; k < spec.depth - 3; ++k) layer("z" + std::to_string(k + 1), h, h);
    layer("out", h, spec.output_width);
  }
  return out;
}

void ParameterStore::add(std::string name, Matrix value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

std::size_t ParameterStore::count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::vector<double> ParameterStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(count());
  for (const auto& v : values_) flat.insert(flat.end(), v.data(), v.data() + v.size());
  return flat;
}

void ParameterStore::unflatten(std::span<const double> flat) {
  if (flat.size() != count()) throw ArgumentError("unflatten: expected " + std::to_string(count()) + " values");
  std::size_t off = 0;
  for (auto& v : values_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), v.size(), v.data());
    off += static_cast<std::size_t>(v.size());
  }
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (names_ != other.names_ || values_.size() != other.values_.size()) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Matrix& a = values_[i];
    const Matrix& b = other.values_[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (!std::equal(a.data(), a.data() + a.size(), b.data())) return false;
  }
  return true;
}

ParameterStore init_params(const NetworkSpec& spec, std::uint64_t seed, const std::string& prefix) {
  std::mt19937_64 rng(seed);
  ParameterStore store;
  const auto layout = parameter_layout(spec, prefix);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const TensorShape& t = layout[i];
    Matrix m = Matrix::Zero(t.rows, t.cols);
    if (i % 2 == 0) {  // weights; odd entries are biases
      const double bound = std::sqrt(6.0 / double(t.rows + t.cols));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = dist(rng);
    }
    store.add(t.name, std::move(m));
  }
  return store;
}

void DeepOnetModel::validate() const {
  branch.validate();
  trunk.validate();
  if (sensors < 1) throw ArgumentError("sensor count must be >= 1");
  if (query_dim != 1 && query_dim != 2) throw ArgumentError("query dimension must be 1 or 2");
  if (branch.input_width != sensors) throw ArgumentError("branch input width must equal the sensor count");
  if (trunk.input_width != query_dim) throw ArgumentError("trunk input width must equal the query dimension");
  if (branch.output_width != trunk.output_width)
    throw ArgumentError("branch and trunk output widths differ");
  const std::size_t expected = branch_tensors() + trunk_tensors() + 1;
  if (params.tensors() != expected) throw ArgumentError("parameter store does not match the architecture");
}

std::size_t DeepOnetModel::branch_tensors() const { return parameter_layout(branch, "").size(); }
std::size_t DeepOnetModel::trunk_tensors() const { return parameter_layout(trunk, "").size(); }

DeepOnetModel make_deeponet(const NetworkSpec& branch, const NetworkSpec& trunk, int sensors, int query_dim,
                            std::uint64_t seed) {
  DeepOnetModel model;
  model.branch = branch;
  model.trunk = trunk;
  model.sensors = sensors;
  model.query_dim = query_dim;
  ParameterStore b = init_params(branch, seed, "branch.");
  ParameterStore t = init_params(trunk, seed ^ 0x9e3779b97f4a7c15ULL, "trunk.");
  for (std::size_t i = 0; i < b.tensors(); ++i) model.params.add(b.name(i), b.at(i));
  for (std::size_t i = 0; i < t.tensors(); ++i) model.params.add(t.name(i), t.at(i));
  model.params.add("bias", Matrix::Zero(1, 1));
  model.validate();
  return model;
}

BoundModel bind(ad::Tape& tape, const DeepOnetModel& model) {
  BoundModel b;
  const std::size_t nb = model.branch_tensors();
  const std::size_t nt = model.trunk_tensors();
  for (std::size_t i = 0; i < model.params.tensors(); ++i) {
    ad::Var v = tape.leaf(model.params.at(i));
    b.all.push_back(v);
    if (i < nb)
      b.branch.push_back(v);
    else if (i < nb + nt)
      b.trunk.push_back(v);
    else
      b.bias = v;
  }
  return b;
}

std::vector<double> flat_grad(const ad::Tape& tape, const BoundModel& bound) {
  std::vector<double> g;
  for (const auto& v : bound.all) {
    const Matrix m = tape.grad(v);
    g.insert(g.end(), m.data(), m.data() + m.size());
  }
  return g;
}

TrunkFeatures trunk_features(const DeepOnetModel& model, const BoundModel& bound, ad::Var query,
                             DerivRequest which) {
  if (query.cols() != model.query_dim) throw ArgumentError("query dimension mismatch");
  const std::span<const ad::Var> p(bound.trunk);
  return query_derivatives([&](const auto& q) { return network_forward(model.trunk, p, q); }, query, which);
}

ad::Var branch_forward(const DeepOnetModel& model, const BoundModel& bound, ad::Var sensors) {
  if (sensors.cols() != model.sensors)
    throw ArgumentError("expected " + std::to_string(model.sensors) + " sensor values, got " +
                        std::to_string(sensors.cols()));
  return network_forward(model.branch, std::span<const ad::Var>(bound.branch), sensors);
}

FieldVars combine(const DeepOnetModel&, const BoundModel& bound, ad::Var branch_out, const TrunkFeatures& trunk,
                  DerivRequest which) {
  FieldVars f;
  f.y = dot(branch_out, trunk.tau) + bound.bias;
  if (which.dt) f.y_t = dot(branch_out, trunk.tau_t);
  if (which.dx) f.y_x = dot(branch_out, trunk.tau_x);
  if (which.dxx) f.y_xx = dot(branch_out, trunk.tau_xx);
  return f;
}

FieldVars deeponet_field(const DeepOnetModel& model, const BoundModel& bound, ad::Var sensors, ad::Var query,
                         DerivRequest which) {
  const ad::Var beta = branch_forward(model, bound, sensors);
  return combine(model, bound, beta, trunk_features(model, bound, query, which), which);
}

namespace {

Matrix row(std::span<const double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

}  // namespace

double deeponet_eval(const DeepOnetModel& model, std::span<const double> sensors, std::span<const double> query) {
  if (query.size() != static_cast<std::size_t>(model.query_dim)) throw ArgumentError("query dimension mismatch");
  return deeponet_eval_batch(model, sensors, row(query))(0);
}

Vector deeponet_eval_batch(const DeepOnetModel& model, std::span<const double> sensors, const Matrix& queries) {
  ad::Tape tape;
  const BoundModel bound = bind(tape, model);
  const FieldVars f = deeponet_field(model, bound, tape.leaf(row(sensors)), tape.leaf(queries), {});
  return f.y.value().row(0).transpose();
}

std::vector<double> deeponet_input_derivs(const DeepOnetModel& model, std::span<const double> sensors,
                                          std::span<const double> query, DerivRequest which) {
  if (query.size() != static_cast<std::size_t>(model.query_dim)) throw ArgumentError("query dimension mismatch");
  ad::Tape tape;
  const BoundModel bound = bind(tape, model);
  const FieldVars f = deeponet_field(model, bound, tape.leaf(row(sensors)), tape.leaf(row(query)), which);
  std::vector<double> out;
  if (which.dt) out.push_back(f.y_t.value()(0, 0));
  if (which.dx) out.push_back(f.y_x.value()(0, 0));
  if (which.dxx) out.push_back(f.y_xx.value()(0, 0));
  return out;
}

}  // namespace noctl
