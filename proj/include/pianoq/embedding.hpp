#pragma once

// Two-dimensional projections of ERB profiles: PCA on the sample covariance
// and exact (O(N^2)) t-SNE.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pianoq/error.hpp"

namespace pianoq::embedding {

enum class Method { Pca, Tsne };

struct TsneMeta {
  double perplexity = 30.0;
  int iterations = 1000;
  std::uint64_t seed = 0;
  std::vector<double> kl_history;  // KL(P || Q) after each iteration, unexaggerated P
};

struct Embedding2D {
  Eigen::MatrixX2d points;
  std::vector<std::string> labels;
  Method method = Method::Pca;
  double explained_variance[2] = {0.0, 0.0};  // PCA only: shares of total variance
  double projected_variance[2] = {0.0, 0.0};  // PCA only: variances along each component
  Eigen::MatrixX2d components;                // PCA only: loadings, one column per component
  TsneMeta tsne;                              // t-SNE only
};

namespace detail {

inline void check_finite(const Eigen::MatrixXd& x) {
  if (!x.allFinite()) throw Error(ErrorCode::DegenerateInput, "input contains non-finite values");
}

}  // namespace detail

/// Projection onto the top two eigenvectors of the sample covariance. Each
/// component's largest-magnitude loading is made positive.
inline Embedding2D pca_2d(const Eigen::MatrixXd& points, std::vector<std::string> labels = {}) {
  if (points.rows() < 3) throw Error(ErrorCode::DegenerateInput, "PCA needs at least 3 points");
  if (points.cols() < 2) throw Error(ErrorCode::DegenerateInput, "PCA needs at least 2 dimensions");
  detail::check_finite(points);

  const Eigen::RowVectorXd mean = points.colwise().mean();
  const Eigen::MatrixXd centered = points.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(points.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::Internal, "eigendecomposition failed");

  const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
  const Eigen::Index d = evals.size();
  Embedding2D out;
  out.method = Method::Pca;
  out.components.resize(points.cols(), 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index idx = 0;
    v.cwiseAbs().maxCoeff(&idx);
    if (v(idx) < 0.0) v = -v;
    out.components.col(c) = v;
  }
  out.points = centered * out.components;

  const double total = std::max(evals.sum(), 0.0);
  for (int c = 0; c < 2; ++c) {
    const double lambda = std::max(evals(d - 1 - c), 0.0);
    out.projected_variance[c] = lambda;
    out.explained_variance[c] = total > 0.0 ? lambda / total : 0.0;
  }
  out.labels = std::move(labels);
  return out;
}

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  int exaggeration_iters = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iter = 250;
  double entropy_tolerance = 1e-5;
};

namespace detail {

/// Row-conditional Gaussian affinities whose entropy matches log(perplexity).
inline Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& sq_dist, double perplexity, double tol) {
  const Eigen::Index n = sq_dist.rows();
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    double min_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) min_d = std::min(min_d, sq_dist(i, j));
    }
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        // shifting by the nearest distance leaves the normalized row unchanged
        row(j) = j == i ? 0.0 : std::exp(-beta * (sq_dist(i, j) - min_d));
        sum += row(j);
        weighted += row(j) * (sq_dist(i, j) - min_d);
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      if (std::abs(entropy - target) < tol) break;
      if (entropy > target) {
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
      } else {
        beta_hi = beta;
        beta = 0.5 * (beta + beta_lo);
      }
    }
    p.row(i) = row.transpose() / row.sum();
  }
  return p;
}

inline double kl_divergence(const Eigen::MatrixXd& p, const Eigen::MatrixXd& num, double num_sum) {
  double kl = 0.0;
  const Eigen::Index n = p.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      const double q = std::max(num(i, j) / num_sum, 1e-300);
      kl += p(i, j) * std::log(p(i, j) / q);
    }
  }
  return kl;
}

}  // namespace detail

/// Exact t-SNE with early exaggeration, momentum and per-coordinate gains.
/// Deterministic for a given seed. Perplexity is reduced to floor((N-1)/3)
/// when N < 3 * perplexity.
inline Embedding2D tsne_2d(const Eigen::MatrixXd& points, const TsneOptions& options = {},
                           std::vector<std::string> labels = {}) {
  const Eigen::Index n = points.rows();
  if (n < 4) throw Error(ErrorCode::DegenerateInput, "t-SNE needs at least 4 points");
  detail::check_finite(points);
  if (!(options.perplexity > 0.0) || options.iterations < 1) {
    throw Error(ErrorCode::InvalidArgument, "perplexity and iteration count must be positive");
  }

  double perplexity = options.perplexity;
  if (static_cast<double>(n) < 3.0 * perplexity) perplexity = std::floor(static_cast<double>(n - 1) / 3.0);

  Eigen::MatrixXd sq_dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) sq_dist(i, j) = (points.row(i) - points.row(j)).squaredNorm();
  }
  const Eigen::MatrixXd cond = detail::conditional_affinities(sq_dist, perplexity, options.entropy_tolerance);
  Eigen::MatrixXd p = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1e-4);
  Eigen::MatrixX2d y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = normal(rng);
    y(i, 1) = normal(rng);
  }
  Eigen::MatrixX2d velocity = Eigen::MatrixX2d::Zero(n, 2);
  Eigen::MatrixX2d gains = Eigen::MatrixX2d::Ones(n, 2);
  Eigen::MatrixX2d grad(n, 2);
  Eigen::MatrixXd num(n, n);

  Embedding2D out;
  out.method = Method::Tsne;
  out.tsne.perplexity = perplexity;
  out.tsne.iterations = options.iterations;
  out.tsne.seed = options.seed;
  out.tsne.kl_history.reserve(static_cast<std::size_t>(options.iterations));

  for (int iter = 0; iter < options.iterations; ++iter) {
    const double exaggeration = iter < options.exaggeration_iters ? options.exaggeration : 1.0;
    const double momentum = iter < options.momentum_switch_iter ? options.initial_momentum : options.final_momentum;

    double num_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = v;
        num(j, i) = v;
        num_sum += 2.0 * v;
      }
    }

    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double coeff = (exaggeration * p(i, j) - num(i, j) / num_sum) * num(i, j);
        grad.row(i) += 4.0 * coeff * (y.row(i) - y.row(j));
      }
    }

    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        const bool same_sign = (grad(i, d) > 0.0) == (velocity(i, d) > 0.0);
        gains(i, d) = same_sign ? gains(i, d) * 0.8 : gains(i, d) + 0.2;
        gains(i, d) = std::max(gains(i, d), 0.01);
        velocity(i, d) = momentum * velocity(i, d) - options.learning_rate * gains(i, d) * grad(i, d);
        y(i, d) += velocity(i, d);
      }
    }
    y.rowwise() -= y.colwise().mean();

    // objective at the updated positions
    double sum_after = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = v;
        num(j, i) = v;
        sum_after += 2.0 * v;
      }
    }
    out.tsne.kl_history.push_back(detail::kl_divergence(p, num, sum_after));
  }

  if (!y.allFinite()) throw Error(ErrorCode::Internal, "t-SNE diverged");
  out.points = y;
  out.labels = std::move(labels);
  return out;
}

}  // namespace pianoq::embedding
