#pragma once

// The three control problems:
//   linear ODE      y' = -y + u
//   nonlinear ODE   y' = 2.5 (-y + y u - u^2)
//   diffusion-reaction PDE on [0,1]^2:  y_t = D y_xx - k y^2 + u(x)
// with y(0) = 1 for the ODEs and homogeneous initial/boundary data for the PDE.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noctl/autodiff/tape.hpp"
#include "noctl/network.hpp"

namespace noctl {

enum class ProblemKind { LinearODE, NonlinearODE, DiffusionReaction };

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(const std::string& s);

struct ProblemSpec {
  ProblemKind kind = ProblemKind::LinearODE;
  double T = 1.0;
  double y0 = 1.0;
  double D = 0.01;
  double k = 0.01;
  int I = 100;   // time nodes
  int Ix = 100;  // space nodes (PDE only)

  bool is_ode() const { return kind != ProblemKind::DiffusionReaction; }
  // Control length: time grid for the ODEs, space grid for the PDE.
  int sensors() const { return is_ode() ? I : Ix; }
  int query_dim() const { return is_ode() ? 1 : 2; }
  int points() const { return is_ode() ? I : I * Ix; }
  void validate() const;
};

ProblemSpec make_problem(ProblemKind kind);

// Uniform nodes including both endpoints. PDE query rows are ordered
// q = i_t * Ix + j_x with columns [x, t].
struct Grid {
  std::vector<double> t;
  std::vector<double> x;
  double dt = 0.0;
  double dx = 0.0;

  int nt() const { return static_cast<int>(t.size()); }
  int nx() const { return static_cast<int>(x.size()); }
  Matrix queries() const;
  // Query-row indices of the t = 0, x = 0 and x = 1 edges (PDE).
  std::vector<int> edge_t0() const;
  std::vector<int> edge_x0() const;
  std::vector<int> edge_x1() const;
};

Grid make_grid(const ProblemSpec& problem, int I, std::optional<int> Ix = std::nullopt);
Grid make_grid(const ProblemSpec& problem);

// Right-hand side of the ODEs, generic in the scalar type.
template <class T>
T dynamics(ProblemKind kind, const T& y, const T& u) {
  if (kind == ProblemKind::LinearODE) return u - y;
  return 2.5 * (y * u - y - u * u);
}

double dynamics_rhs(const ProblemSpec& problem, double y, double u, double t);
double residual(const ProblemSpec& problem, double y, double y_dot, double u, double t,
                std::optional<double> y_xx = std::nullopt);

// Field values on the query grid, one entry per query row.
struct FieldSample {
  std::vector<double> y, y_t, y_xx, u;
};
double mean_residual(const ProblemSpec& problem, const FieldSample& field);

// Tape-level residual and edge losses for a batch of controls (rows of
// `controls`). `trunk` holds the problem's trunk features on make_grid.
struct PhysicsTerms {
  ad::Var y;         // batch x points
  ad::Var y_t;
  ad::Var residual;  // per-point residuals
  ad::Var physics;   // mean residual
  ad::Var ic;
  ad::Var bc;
};

DerivRequest problem_derivs(const ProblemSpec& problem);
TrunkFeatures problem_trunk(const ProblemSpec& problem, const DeepOnetModel& model, const BoundModel& bound);
// Trunk features as plain values, for callers that keep the trunk fixed.
struct TrunkValues {
  Matrix tau, tau_t, tau_xx;
};
TrunkValues trunk_values(const ProblemSpec& problem, const DeepOnetModel& model);
TrunkFeatures bind_trunk(ad::Tape& tape, const TrunkValues& values);

PhysicsTerms physics_terms(const ProblemSpec& problem, const DeepOnetModel& model, const BoundModel& bound,
                           ad::Var controls, const TrunkFeatures& trunk);

// ic + bc; for the PDE the three edge means are averaged, ic holding the
// t = 0 share and bc the two x edges.
double mean_residual(const ProblemSpec& problem, const DeepOnetModel& model, std::span<const double> control);
double ic_bc_loss(const ProblemSpec& problem, const DeepOnetModel& model, std::span<const double> control);

void check_model_matches(const ProblemSpec& problem, const DeepOnetModel& model);

}  // namespace noctl
