#pragma once

// DeepONet: branch network on the sensor values, trunk network on the query
// coordinates, fused by a dot product plus a scalar output bias.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noctl/autodiff/dual.hpp"
#include "noctl/autodiff/tape.hpp"
#include "noctl/errors.hpp"

namespace noctl {

enum class NetKind : std::uint32_t { PlainFC = 0, ModifiedFC = 1 };

std::string to_string(NetKind kind);
NetKind net_kind_from_string(const std::string& s);

// Depth counts neuron layers including input and output, so a depth-2
// network is a single affine map and depth D has D-2 hidden layers.
struct NetworkSpec {
  NetKind kind = NetKind::PlainFC;
  int input_width = 1;
  int hidden_width = 64;
  int depth = 3;
  int output_width = 64;

  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

struct TensorShape {
  std::string name;
  int rows = 0;
  int cols = 0;
};

// Parameter tensors in declaration order. Weights are stored (in x out) so a
// layer computes x * W + b on row-major activations.
std::vector<TensorShape> parameter_layout(const NetworkSpec& spec, const std::string& prefix);

class ParameterStore {
 public:
  void add(std::string name, Matrix value);

  std::size_t tensors() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& at(std::size_t i) const { return values_[i]; }
  Matrix& at(std::size_t i) { return values_[i]; }
  // Total number of scalars.
  std::size_t count() const;

  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  bool operator==(const ParameterStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

// Glorot-uniform weights, zero biases.
ParameterStore init_params(const NetworkSpec& spec, std::uint64_t seed, const std::string& prefix = "");

struct DeepOnetModel {
  NetworkSpec branch;
  NetworkSpec trunk;
  int sensors = 100;
  int query_dim = 1;
  // branch.*, trunk.*, then the 1x1 output bias.
  ParameterStore params;

  void validate() const;
  std::size_t branch_tensors() const;
  std::size_t trunk_tensors() const;
};

DeepOnetModel make_deeponet(const NetworkSpec& branch, const NetworkSpec& trunk, int sensors, int query_dim,
                            std::uint64_t seed);

// Per-call binding of a model's parameters to tape leaves.
struct BoundModel {
  std::vector<ad::Var> branch;
  std::vector<ad::Var> trunk;
  ad::Var bias;
  std::vector<ad::Var> all;  // declaration order
};

BoundModel bind(ad::Tape& tape, const DeepOnetModel& model);

// Flattened gradient of every bound parameter after tape.backward().
std::vector<double> flat_grad(const ad::Tape& tape, const BoundModel& bound);

namespace detail {

inline Eigen::Index x_cols(const ad::Var& x) { return x.cols(); }
template <class T>
Eigen::Index x_cols(const ad::Dual<T>& x) { return x_cols(x.v); }

template <class A>
A affine(const A& x, ad::Var w, ad::Var b) {
  return add_row(matmul(x, w), b);
}

}  // namespace detail

// Plain fully connected: tanh on hidden layers, affine output.
template <class A>
A fc_forward(const NetworkSpec& spec, std::span<const ad::Var> p, const A& x) {
  const int layers = spec.depth - 1;
  if (p.size() != static_cast<std::size_t>(2 * layers)) throw ArgumentError("fc_forward: parameter count mismatch");
  A h = x;
  for (int k = 0; k < layers; ++k) {
    h = detail::affine(h, p[2 * k], p[2 * k + 1]);
    if (k + 1 < layers) h = tanh(h);
  }
  return h;
}

// Skip-connected variant: two encoders U, V and gated hidden layers
// H <- (1 - Z) * U + Z * V with Z = tanh(H W + b).
template <class A>
A modified_fc_forward(const NetworkSpec& spec, std::span<const ad::Var> p, const A& x) {
  const int gates = spec.depth - 3;
  if (p.size() != static_cast<std::size_t>(2 * (gates + 4)))
    throw ArgumentError("modified_fc_forward: parameter count mismatch");
  const A u = tanh(detail::affine(x, p[0], p[1]));
  const A v = tanh(detail::affine(x, p[2], p[3]));
  A h = tanh(detail::affine(x, p[4], p[5]));
  for (int k = 0; k < gates; ++k) {
    const A z = tanh(detail::affine(h, p[6 + 2 * k], p[7 + 2 * k]));
    h = (1.0 - z) * u + z * v;
  }
  return detail::affine(h, p[6 + 2 * gates], p[7 + 2 * gates]);
}

template <class A>
A network_forward(const NetworkSpec& spec, std::span<const ad::Var> p, const A& x) {
  if (detail::x_cols(x) != spec.input_width) throw ArgumentError("network input width mismatch");
  return spec.kind == NetKind::PlainFC ? fc_forward(spec, p, x) : modified_fc_forward(spec, p, x);
}

// Which derivatives with respect to the query coordinates are needed.
struct DerivRequest {
  bool dt = false;
  bool dx = false;
  bool dxx = false;
};

// Trunk outputs and their query derivatives (rows = query points).
struct TrunkFeatures {
  ad::Var tau, tau_t, tau_x, tau_xx;
};

// Derivatives of a trunk-like function of the query rows. `t` is the last
// query column, `x` the first one of a 2-D query. Time derivatives use one
// dual level; second x-derivatives use nested duals.
template <class Fn>
TrunkFeatures query_derivatives(Fn&& trunk, ad::Var query, DerivRequest which) {
  using ad::Dual;
  using ad::Var;
  ad::Tape& tape = *query.tape();
  const Eigen::Index n = query.rows();
  const Eigen::Index d = query.cols();
  if ((which.dx || which.dxx) && d < 2) throw ArgumentError("x-derivative requested on a time-only trunk");
  TrunkFeatures out;
  auto direction = [&](Eigen::Index col) {
    Matrix e = Matrix::Zero(n, d);
    e.col(col).setOnes();
    return tape.leaf(std::move(e));
  };
  if (which.dt) {
    const Dual<Var> q{query, direction(d - 1)};
    const Dual<Var> r = trunk(q);
    out.tau = r.v;
    out.tau_t = r.t;
  }
  if (which.dx || which.dxx) {
    const Var ex = direction(0);
    const Var zero = tape.leaf(Matrix::Zero(n, d));
    const Dual<Dual<Var>> q{{query, ex}, {ex, zero}};
    const Dual<Dual<Var>> r = trunk(q);
    if (!which.dt) out.tau = r.v.v;
    out.tau_x = r.v.t;
    out.tau_xx = r.t.t;
  }
  if (!which.dt && !which.dx && !which.dxx) out.tau = trunk(query);
  return out;
}

TrunkFeatures trunk_features(const DeepOnetModel& model, const BoundModel& bound, ad::Var query,
                             DerivRequest which);

// Field values on a batch of controls (rows) times query points (columns).
struct FieldVars {
  ad::Var y, y_t, y_x, y_xx;
};

FieldVars combine(const DeepOnetModel& model, const BoundModel& bound, ad::Var branch_out,
                  const TrunkFeatures& trunk, DerivRequest which);

ad::Var branch_forward(const DeepOnetModel& model, const BoundModel& bound, ad::Var sensors);

FieldVars deeponet_field(const DeepOnetModel& model, const BoundModel& bound, ad::Var sensors, ad::Var query,
                         DerivRequest which);

// Single-query evaluation.
double deeponet_eval(const DeepOnetModel& model, std::span<const double> sensors, std::span<const double> query);
// One row per query point.
Vector deeponet_eval_batch(const DeepOnetModel& model, std::span<const double> sensors, const Matrix& queries);
// Requested derivatives in the order dt, dx, dxx (only those requested).
std::vector<double> deeponet_input_derivs(const DeepOnetModel& model, std::span<const double> sensors,
                                          std::span<const double> query, DerivRequest which);

void save_checkpoint(const DeepOnetModel& model, const std::string& path);
DeepOnetModel load_checkpoint(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace noctl
