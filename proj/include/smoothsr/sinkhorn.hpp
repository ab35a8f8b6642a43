#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "smoothsr/tensor.hpp"

namespace smoothsr {

/// Two weighted point clouds and the entropic regularization for one solve.
struct TransportProblem {
  Eigen::MatrixXd source;          // n x d
  Eigen::MatrixXd target;          // m x d
  Eigen::VectorXd source_weights;  // n, on the simplex
  Eigen::VectorXd target_weights;  // m, on the simplex
  double epsilon = 0.05;
  std::size_t max_iters = 200;
  double tol = 1e-6;
  /// Anneal epsilon geometrically from the cost scale down to `epsilon`,
  /// warm-starting the potentials; needed for small epsilon to converge in a
  /// reasonable number of iterations.
  bool epsilon_scaling = false;

  /// Uniform weights over the given points.
  static TransportProblem uniform(Eigen::MatrixXd source, Eigen::MatrixXd target, double epsilon);
  /// Throws std::invalid_argument on a malformed problem.
  void validate() const;
};

struct TransportResult {
  double cost = 0.0;       // <plan, C>, entropy excluded
  Eigen::MatrixXd plan;
  std::size_t iterations = 0;
  bool converged = false;
  double violation = 0.0;  // L1 row-marginal error at the last iteration
  /// Row-marginal violation after each iteration at the target epsilon.
  std::vector<double> trace;
};

/// C[i][j] = |a_i - b_j|^2.
Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Log-domain Sinkhorn on potentials. Never throws on non-convergence; the
/// result carries the flag and violation. The returned plan is rounded onto
/// the transport polytope, so it is exactly feasible up to rounding error.
TransportResult sinkhorn_solve(const TransportProblem& p);

// ---------------------------------------------------------------------------
// Differentiable batched form used as a training loss.

/// [B,C,H,W] -> [B,H*W,C]: each spatial site becomes one C-dimensional point.
Tensor feature_to_cloud(const Tensor& h);
/// Inverse of feature_to_cloud.
Tensor cloud_to_feature(const Tensor& cloud, std::size_t height, std::size_t width);
/// [B,n,d] x [B,m,d] -> [B,n,m] squared Euclidean distances.
Tensor cost_matrix(const Tensor& a, const Tensor& b);

struct SinkhornOptions {
  double epsilon = 0.05;
  /// When set, the effective epsilon is `epsilon` times the median entry of
  /// the batch cost matrices (treated as a constant for differentiation).
  bool relative_epsilon = true;
  std::size_t max_iters = 200;
  double tol = 1e-6;  // 0 runs exactly max_iters iterations
};

/// Running counters over many solves.
struct SinkhornStats {
  std::size_t solves = 0;
  std::size_t nonconverged = 0;
  std::size_t iterations = 0;
  double max_violation = 0.0;

  void merge(const SinkhornStats& o);
  double nonconverged_rate() const { return solves ? double(nonconverged) / double(solves) : 0.0; }
};

/// Mean over the batch of the entropic transport cost between the uniform
/// point clouds of two feature volumes [B,C,H,W]. Differentiable by unrolling
/// the log-domain iterations on the active tape.
Tensor sinkhorn_loss(const Tensor& h_a, const Tensor& h_b, const SinkhornOptions& opts = {},
                     SinkhornStats* stats = nullptr);

}  // namespace smoothsr
