#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "eegrel/analysis.hpp"

namespace eegrel {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;

void check_features(std::span<const double> features, std::size_t dim, const char* where) {
  if (dim == 0 || features.size() % dim != 0) {
    throw ShapeError(std::string(where) + ": feature buffer of " + std::to_string(features.size()) +
                     " values is not a whole number of " + std::to_string(dim) + "-dim rows");
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw DataError(std::string(where) + ": non-finite feature value");
  }
}

// Per-row, per-component log(w_k N(x | mu_k, var_k)); [N x K].
RowMat component_logpdf(const Gmm& gmm, const ConstMatMap& x) {
  const auto n = x.rows();
  const auto k_count = static_cast<Eigen::Index>(gmm.components());
  const auto d = static_cast<Eigen::Index>(gmm.dim);
  RowMat out(n, k_count);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    Eigen::Map<const Eigen::RowVectorXd> mu(gmm.means.data() + k * d, d);
    Eigen::Map<const Eigen::RowVectorXd> var(gmm.variances.data() + k * d, d);
    const Eigen::RowVectorXd inv = var.cwiseInverse();
    const double log_norm = -0.5 * (static_cast<double>(d) * log_2pi + var.array().log().sum());
    const double log_w = gmm.weights[k] > 0.0 ? std::log(gmm.weights[k]) : -std::numeric_limits<double>::infinity();
    out.col(k) = ((x.rowwise() - mu).array().square().rowwise() * inv.array()).rowwise().sum() * -0.5;
    out.col(k).array() += log_norm + log_w;
  }
  return out;
}

// Row-wise log-sum-exp; turns `logp` into responsibilities when asked.
Eigen::VectorXd normalize_rows(RowMat& logp, bool to_responsibilities) {
  Eigen::VectorXd lse(logp.rows());
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double m = logp.row(i).maxCoeff();
    const double s = (logp.row(i).array() - m).exp().sum();
    lse[i] = m + std::log(s);
    if (to_responsibilities) logp.row(i) = (logp.row(i).array() - lse[i]).exp();
  }
  return lse;
}

void m_step(Gmm& gmm, const ConstMatMap& x, const RowMat& resp, double floor) {
  const auto n = x.rows();
  const auto d = static_cast<Eigen::Index>(gmm.dim);
  for (Eigen::Index k = 0; k < resp.cols(); ++k) {
    const double nk = resp.col(k).sum();
    gmm.weights[k] = nk / static_cast<double>(n);
    // A starved component keeps its previous shape at weight ~0.
    if (nk < 1e-12) continue;
    Eigen::Map<Eigen::RowVectorXd> mu(gmm.means.data() + k * d, d);
    Eigen::Map<Eigen::RowVectorXd> var(gmm.variances.data() + k * d, d);
    mu = (resp.col(k).transpose() * x) / nk;
    var = (resp.col(k).transpose() * (x.rowwise() - mu).array().square().matrix()) / nk;
    var = var.cwiseMax(floor);
  }
}

}  // namespace

GmmFit gmm_fit(std::span<const double> features, std::size_t dim, const GmmConfig& config) {
  check_features(features, dim, "gmm_fit");
  const std::size_t n = features.size() / dim;
  const std::size_t k_count = config.components;
  if (k_count == 0) throw ConfigError("gmm_fit: need at least one component");
  if (n < k_count) {
    throw DataError("gmm_fit: " + std::to_string(n) + " samples cannot support " + std::to_string(k_count) +
                    " components");
  }
  const ConstMatMap x(features.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));

  // k-means++ seeding.
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> centers;
  centers.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  Eigen::VectorXd d2 = (x.rowwise() - x.row(static_cast<Eigen::Index>(centers[0]))).rowwise().squaredNorm();
  while (centers.size() < k_count) {
    const double total = d2.sum();
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= d2[static_cast<Eigen::Index>(pick)];
        if (u < 0.0) break;
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin((x.rowwise() - x.row(static_cast<Eigen::Index>(pick))).rowwise().squaredNorm());
  }

  // Hard nearest-center responsibilities feed the first M-step.
  RowMat resp = RowMat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k_count));
  {
    RowMat dist(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k_count));
    for (std::size_t k = 0; k < k_count; ++k) {
      dist.col(static_cast<Eigen::Index>(k)) =
          (x.rowwise() - x.row(static_cast<Eigen::Index>(centers[k]))).rowwise().squaredNorm();
    }
    for (Eigen::Index i = 0; i < dist.rows(); ++i) {
      Eigen::Index best = 0;
      dist.row(i).minCoeff(&best);
      resp(i, best) = 1.0;
    }
  }

  GmmFit fit;
  Gmm& gmm = fit.model;
  gmm.dim = dim;
  gmm.weights.assign(k_count, 0.0);
  gmm.means.assign(k_count * dim, 0.0);
  gmm.variances.assign(k_count * dim, 1.0);
  const Eigen::RowVectorXd global_mean = x.colwise().mean();
  const Eigen::RowVectorXd global_var =
      ((x.rowwise() - global_mean).array().square().colwise().sum() / static_cast<double>(n)).matrix().cwiseMax(
          config.variance_floor);
  for (std::size_t k = 0; k < k_count; ++k) {
    Eigen::Map<Eigen::RowVectorXd>(gmm.means.data() + k * dim, static_cast<Eigen::Index>(dim)) =
        x.row(static_cast<Eigen::Index>(centers[k]));
    Eigen::Map<Eigen::RowVectorXd>(gmm.variances.data() + k * dim, static_cast<Eigen::Index>(dim)) = global_var;
  }
  m_step(gmm, x, resp, config.variance_floor);

  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    resp = component_logpdf(gmm, x);
    const double mean_ll = normalize_rows(resp, true).mean();
    fit.trace.push_back(mean_ll);
    if (fit.trace.size() >= 2 && mean_ll - fit.trace[fit.trace.size() - 2] < config.tolerance) {
      fit.converged = true;
      break;
    }
    m_step(gmm, x, resp, config.variance_floor);
    fit.iterations = it + 1;
  }
  return fit;
}

std::vector<double> gmm_loglik(const Gmm& gmm, std::span<const double> features, std::size_t dim) {
  if (dim != gmm.dim) {
    throw ShapeError("gmm_loglik: features have dimension " + std::to_string(dim) + ", mixture has " +
                     std::to_string(gmm.dim));
  }
  check_features(features, dim, "gmm_loglik");
  const ConstMatMap x(features.data(), static_cast<Eigen::Index>(features.size() / dim),
                      static_cast<Eigen::Index>(dim));
  RowMat logp = component_logpdf(gmm, x);
  const Eigen::VectorXd lse = normalize_rows(logp, false);
  return {lse.data(), lse.data() + lse.size()};
}

std::vector<double> gmm_responsibilities(const Gmm& gmm, std::span<const double> features, std::size_t dim) {
  if (dim != gmm.dim) throw ShapeError("gmm_responsibilities: dimension mismatch");
  check_features(features, dim, "gmm_responsibilities");
  const ConstMatMap x(features.data(), static_cast<Eigen::Index>(features.size() / dim),
                      static_cast<Eigen::Index>(dim));
  RowMat resp = component_logpdf(gmm, x);
  normalize_rows(resp, true);
  return {resp.data(), resp.data() + resp.size()};
}

}  // namespace eegrel
