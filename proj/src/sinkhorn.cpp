#include "smoothsr/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "smoothsr/ops.hpp"

namespace smoothsr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double log_sum_exp(const double* v, std::size_t n, std::size_t stride) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i * stride]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i * stride] - m);
  return m + std::log(s);
}

// Eigen's vectorized exp clamps very negative arguments instead of
// underflowing to zero; std::exp keeps the plan exact.
MatrixXd exp_of(const MatrixXd& m) {
  return m.unaryExpr([](double x) { return std::exp(x); });
}

struct Potentials {
  VectorXd f, g;
};

// log P_ij = (f_i + g_j - C_ij)/eps + log a_i + log b_j
MatrixXd log_plan(const MatrixXd& c, const Potentials& pot, const VectorXd& loga, const VectorXd& logb,
                  double eps) {
  MatrixXd lp(c.rows(), c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      lp(i, j) = (pot.f(i) + pot.g(j) - c(i, j)) / eps + loga(i) + logb(j);
  return lp;
}

double row_violation(const MatrixXd& c, const Potentials& pot, const VectorXd& a, const VectorXd& loga,
                     const VectorXd& logb, double eps) {
  const MatrixXd p = exp_of(log_plan(c, pot, loga, logb, eps));
  return (p.rowwise().sum() - a).cwiseAbs().sum();
}

// One f-update followed by one g-update; returns the row violation after it.
double sinkhorn_sweep(const MatrixXd& c, Potentials& pot, const VectorXd& a, const VectorXd& loga,
                      const VectorXd& logb, double eps) {
  const Eigen::Index n = c.rows(), m = c.cols();
  std::vector<double> buf(static_cast<std::size_t>(std::max(n, m)));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) buf[j] = (pot.g(j) - c(i, j)) / eps + logb(j);
    pot.f(i) = -eps * log_sum_exp(buf.data(), static_cast<std::size_t>(m), 1);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) buf[i] = (pot.f(i) - c(i, j)) / eps + loga(i);
    pot.g(j) = -eps * log_sum_exp(buf.data(), static_cast<std::size_t>(n), 1);
  }
  return row_violation(c, pot, a, loga, logb, eps);
}

// Projects a nearly feasible plan onto the transport polytope: scale down
// overfull rows and columns, then add the rank-one correction.
MatrixXd round_to_polytope(MatrixXd p, const VectorXd& a, const VectorXd& b) {
  const VectorXd r = p.rowwise().sum();
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    if (r(i) > a(i)) p.row(i) *= a(i) / r(i);
  const Eigen::RowVectorXd cs = p.colwise().sum();
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    if (cs(j) > b(j)) p.col(j) *= b(j) / cs(j);
  const VectorXd er = a - p.rowwise().sum();
  const VectorXd ec = b - p.colwise().sum().transpose();
  const double mass = er.sum();
  if (mass > 0.0) p += er * ec.transpose() / mass;
  return p;
}

}  // namespace

TransportProblem TransportProblem::uniform(Eigen::MatrixXd source, Eigen::MatrixXd target, double epsilon) {
  TransportProblem p;
  const auto n = source.rows(), m = target.rows();
  p.source = std::move(source);
  p.target = std::move(target);
  p.source_weights = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  p.target_weights = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  p.epsilon = epsilon;
  return p;
}

void TransportProblem::validate() const {
  if (source.rows() == 0 || target.rows() == 0) throw std::invalid_argument("transport: empty point cloud");
  if (source.cols() != target.cols()) throw std::invalid_argument("transport: point dimensions differ");
  if (source_weights.size() != source.rows() || target_weights.size() != target.rows()) {
    throw std::invalid_argument("transport: weight count does not match point count");
  }
  for (const auto* w : {&source_weights, &target_weights}) {
    if ((w->array() < 0.0).any()) throw std::invalid_argument("transport: negative weight");
    if (std::abs(w->sum() - 1.0) > 1e-12) throw std::invalid_argument("transport: weights must sum to 1");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("transport: epsilon must be positive");
  if (max_iters == 0) throw std::invalid_argument("transport: max_iters must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("transport: tol must be positive");
}

MatrixXd cost_matrix(const MatrixXd& a, const MatrixXd& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("cost_matrix: dimension " + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.cols()));
  }
  MatrixXd c(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) c(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return c;
}

TransportResult sinkhorn_solve(const TransportProblem& p) {
  p.validate();
  const MatrixXd c = cost_matrix(p.source, p.target);
  const VectorXd& a = p.source_weights;
  const VectorXd& b = p.target_weights;
  // Zero-weight points carry log weight -inf and drop out of every sum.
  const VectorXd loga = a.array().log().matrix();
  const VectorXd logb = b.array().log().matrix();
  Potentials pot{VectorXd::Zero(c.rows()), VectorXd::Zero(c.cols())};

  TransportResult res;
  if (p.epsilon_scaling) {
    const double warm_tol = std::max(p.tol, 1e-3);
    for (double eps = std::max(c.maxCoeff(), p.epsilon); eps > p.epsilon; eps *= 0.5) {
      for (std::size_t it = 0; it < p.max_iters; ++it) {
        ++res.iterations;
        if (sinkhorn_sweep(c, pot, a, loga, logb, eps) < warm_tol) break;
      }
    }
  }
  for (std::size_t it = 0; it < p.max_iters; ++it) {
    ++res.iterations;
    res.violation = sinkhorn_sweep(c, pot, a, loga, logb, p.epsilon);
    res.trace.push_back(res.violation);
    if (res.violation < p.tol) {
      res.converged = true;
      break;
    }
  }
  const MatrixXd plan = exp_of(log_plan(c, pot, loga, logb, p.epsilon));
  res.plan = round_to_polytope(plan, a, b);
  res.cost = (res.plan.array() * c.array()).sum();
  return res;
}

// ---------------------------------------------------------------------------

Tensor feature_to_cloud(const Tensor& h) {
  if (h.rank() != 4) throw TensorError("feature_to_cloud expects [B,C,H,W], got " + shape_str(h.shape()));
  return reshape(permute(h, {0, 2, 3, 1}), {h.dim(0), h.dim(2) * h.dim(3), h.dim(1)});
}

Tensor cloud_to_feature(const Tensor& cloud, std::size_t height, std::size_t width) {
  if (cloud.rank() != 3 || cloud.dim(1) != height * width) {
    throw TensorError("cloud_to_feature: cloud " + shape_str(cloud.shape()) + " does not hold " +
                      std::to_string(height) + "x" + std::to_string(width) + " sites");
  }
  return permute(reshape(cloud, {cloud.dim(0), height, width, cloud.dim(2)}), {0, 3, 1, 2});
}

Tensor cost_matrix(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw TensorError("cost_matrix: incompatible clouds " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t bs = a.dim(0), n = a.dim(1), m = b.dim(1), d = a.dim(2);
  Tensor diff = sub(reshape(a, {bs, n, 1, d}), reshape(b, {bs, 1, m, d}));
  return sum(square(diff), {3}, false);
}

void SinkhornStats::merge(const SinkhornStats& o) {
  solves += o.solves;
  nonconverged += o.nonconverged;
  iterations += o.iterations;
  max_violation = std::max(max_violation, o.max_violation);
}

Tensor sinkhorn_loss(const Tensor& h_a, const Tensor& h_b, const SinkhornOptions& opts, SinkhornStats* stats) {
  if (h_a.shape() != h_b.shape()) {
    throw TensorError("sinkhorn_loss: feature shapes differ: " + shape_str(h_a.shape()) + " vs " +
                      shape_str(h_b.shape()));
  }
  if (!(opts.epsilon > 0.0)) throw TensorError("sinkhorn_loss: epsilon must be positive");
  const Tensor c = cost_matrix(feature_to_cloud(h_a), feature_to_cloud(h_b));
  const std::size_t bs = c.dim(0), n = c.dim(1), m = c.dim(2);

  double eps = opts.epsilon;
  if (opts.relative_epsilon) {
    std::vector<double> entries = c.to_vector();
    auto mid = entries.begin() + static_cast<std::ptrdiff_t>(entries.size() / 2);
    std::nth_element(entries.begin(), mid, entries.end());
    const double median = *mid;
    // All-identical clouds have an all-zero cost; any epsilon gives cost 0.
    eps = median > 1e-12 ? opts.epsilon * median : opts.epsilon;
  }
  const double loga = -std::log(static_cast<double>(n));
  const double logb = -std::log(static_cast<double>(m));
  const Tensor ct = permute(c, {0, 2, 1});

  Tensor f = Tensor::zeros({bs, n, 1});
  Tensor g = Tensor::zeros({bs, 1, m});
  SinkhornStats local;
  bool converged = false;
  double violation = 0.0;
  std::size_t it = 0;
  for (; it < opts.max_iters; ++it) {
    f = mul(logsumexp(add(mul(sub(g, c), 1.0 / eps), logb)), -eps);
    const Tensor ft = permute(f, {0, 2, 1});
    g = permute(mul(logsumexp(add(mul(sub(ft, ct), 1.0 / eps), loga)), -eps), {0, 2, 1});

    // Row-marginal violation on the data, worst over the batch.
    const auto cd = c.data();
    const auto fd = f.data();
    const auto gd = g.data();
    violation = 0.0;
    for (std::size_t s = 0; s < bs; ++s) {
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          row += std::exp((fd[s * n + i] + gd[s * m + j] - cd[(s * n + i) * m + j]) / eps + loga + logb);
        }
        v += std::abs(row - std::exp(loga));
      }
      violation = std::max(violation, v);
    }
    if (opts.tol > 0.0 && violation < opts.tol) {
      converged = true;
      ++it;
      break;
    }
  }
  if (opts.tol == 0.0) converged = violation < 1e-6;
  Tensor plan = exp(add(mul(sub(add(f, g), c), 1.0 / eps), loga + logb));
  Tensor per_sample = sum(mul(plan, c), {1, 2}, false);

  local.solves = bs;
  local.nonconverged = converged ? 0 : bs;
  local.iterations = it;
  local.max_violation = violation;
  if (stats) stats->merge(local);
  return mean(per_sample);
}

}  // namespace smoothsr
