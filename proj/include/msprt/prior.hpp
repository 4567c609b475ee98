#pragma once

// Mixture-normal priors and the closed-form mixture likelihood ratio.
//
// With a normal approximation theta_hat ~ N(theta, Sigma) and a prior
// g = sum_i w_i N(mu_i, U_i), the mixture integral collapses to
//
//   Lambda = sum_i w_i phi(theta_hat | mu_i, Sigma + U_i) / phi(theta_hat | theta0, Sigma)
//
// Everything here works in log space; Lambda routinely spans hundreds of
// orders of magnitude over a long stream.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "msprt/errors.hpp"

namespace msprt {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Whether prior means/covariances are in the metric's natural units or in
/// Cohen's-D units (to be rescaled by a dispersion estimate at evaluation).
enum class PriorScale { natural, effect_size };

template <typename Scalar>
struct MixtureComponent {
  Scalar weight{1};
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
};

template <typename Scalar>
struct BasicMixtureNormalPrior {
  Eigen::Index dimension = 0;
  PriorScale scale = PriorScale::natural;
  std::vector<MixtureComponent<Scalar>> components;
};

using MixtureNormalPrior = BasicMixtureNormalPrior<double>;

/// Normal summary of an estimator: theta_hat ~ N(., cov), tested against theta0.
template <typename Scalar>
struct BasicGaussianSummary {
  Vector<Scalar> theta_hat;
  Matrix<Scalar> cov;
  Vector<Scalar> theta0;
};

using GaussianSummary = BasicGaussianSummary<double>;

/// Single-component prior N(mean, cov).
template <typename Scalar>
BasicMixtureNormalPrior<Scalar> normal_prior(Vector<Scalar> mean, Matrix<Scalar> cov,
                                             PriorScale scale = PriorScale::natural) {
  BasicMixtureNormalPrior<Scalar> prior;
  prior.dimension = mean.size();
  prior.scale = scale;
  prior.components.push_back({Scalar(1), std::move(mean), std::move(cov)});
  return prior;
}

namespace detail {

template <typename Derived>
std::string format_matrix(const Eigen::MatrixBase<Derived>& m) {
  std::ostringstream os;
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, ", ", "; ", "", "", "[",
                            "]");
  os << m.format(fmt);
  return os.str();
}

/// Cholesky factor of `cov`. On failure, retries once with
/// 1e-12 * trace / d added to the diagonal, then throws.
template <typename Scalar>
Eigen::LLT<Matrix<Scalar>> factorize(const Matrix<Scalar>& cov, std::string_view label) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    throw FactorizationError(std::string(label), "matrix is not square and non-empty");
  }
  if (!cov.allFinite()) {
    throw FactorizationError(std::string(label), "non-finite entries " + format_matrix(cov));
  }
  Eigen::LLT<Matrix<Scalar>> llt(cov);
  if (llt.info() == Eigen::Success) {
    return llt;
  }
  const Scalar ridge = Scalar(1e-12) * cov.trace() / static_cast<Scalar>(cov.rows());
  if (ridge > Scalar(0) && std::isfinite(ridge)) {
    Matrix<Scalar> ridged = cov;
    ridged.diagonal().array() += ridge;
    llt.compute(ridged);
    if (llt.info() == Eigen::Success) {
      return llt;
    }
  }
  throw FactorizationError(std::string(label), "not positive definite " + format_matrix(cov));
}

template <typename Scalar>
Scalar log_two_pi() {
  return std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
Scalar log_mvn_pdf_factored(const Eigen::LLT<Matrix<Scalar>>& llt, const Vector<Scalar>& diff) {
  const auto& L = llt.matrixLLT();
  const Vector<Scalar> z = llt.matrixL().solve(diff);
  Scalar log_det = 0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    log_det += std::log(L(i, i));
  }
  log_det *= Scalar(2);
  const auto d = static_cast<Scalar>(diff.size());
  return Scalar(-0.5) * (d * log_two_pi<Scalar>() + log_det + z.squaredNorm());
}

}  // namespace detail

/// log phi(x | mean, cov), through a Cholesky factorization of `cov`.
/// Throws FactorizationError (carrying `label`) when cov is not positive definite.
template <typename DerivedX, typename DerivedM, typename DerivedC>
typename DerivedX::Scalar log_mvn_pdf(const Eigen::MatrixBase<DerivedX>& x,
                                      const Eigen::MatrixBase<DerivedM>& mean,
                                      const Eigen::MatrixBase<DerivedC>& cov,
                                      std::string_view label = "covariance") {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != mean.size() || cov.rows() != x.size() || cov.cols() != x.size()) {
    throw std::invalid_argument("log_mvn_pdf: dimension mismatch");
  }
  const Matrix<Scalar> c = cov;
  const Vector<Scalar> diff = x - mean;
  return detail::log_mvn_pdf_factored<Scalar>(detail::factorize<Scalar>(c, label), diff);
}

/// Numerically stable log(sum(exp(terms))).
template <typename Scalar>
Scalar log_sum_exp(const std::vector<Scalar>& terms) {
  if (terms.empty()) {
    return -std::numeric_limits<Scalar>::infinity();
  }
  const Scalar peak = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(peak)) {
    return peak;
  }
  Scalar acc = 0;
  for (Scalar t : terms) {
    acc += std::exp(t - peak);
  }
  return peak + std::log(acc);
}

/// log Lambda for the closed-form mixture-normal ratio.
template <typename Scalar>
Scalar msprt_log_ratio(const BasicGaussianSummary<Scalar>& summary,
                       const BasicMixtureNormalPrior<Scalar>& prior) {
  const Eigen::Index d = summary.theta_hat.size();
  if (summary.theta0.size() != d || summary.cov.rows() != d || summary.cov.cols() != d) {
    throw std::invalid_argument("msprt_log_ratio: inconsistent summary dimensions");
  }
  if (prior.dimension != d) {
    throw std::invalid_argument("msprt_log_ratio: prior dimension " +
                                std::to_string(prior.dimension) + " != summary dimension " +
                                std::to_string(d));
  }

  const auto null_factor = detail::factorize<Scalar>(summary.cov, "estimate covariance");
  const Scalar log_denominator =
      detail::log_mvn_pdf_factored<Scalar>(null_factor, summary.theta_hat - summary.theta0);

  std::vector<Scalar> terms;
  terms.reserve(prior.components.size());
  for (std::size_t i = 0; i < prior.components.size(); ++i) {
    const auto& c = prior.components[i];
    const Matrix<Scalar> marginal_cov = summary.cov + c.cov;
    const auto factor = detail::factorize<Scalar>(
        marginal_cov, "estimate covariance + components[" + std::to_string(i) + "].cov");
    terms.push_back(std::log(c.weight) +
                    detail::log_mvn_pdf_factored<Scalar>(factor, summary.theta_hat - c.mean));
  }
  return log_sum_exp(terms) - log_denominator;
}

/// Rescales an effect-size prior to natural units: means by s, covariances by
/// s^2. The result is tagged natural.
template <typename Scalar>
BasicMixtureNormalPrior<Scalar> scale_prior_to_effect_size(BasicMixtureNormalPrior<Scalar> prior,
                                                           Scalar sigma_scale) {
  if (!std::isfinite(sigma_scale) || !(sigma_scale > Scalar(0))) {
    std::ostringstream os;
    os << "sigma scale must be finite and positive, got " << sigma_scale;
    throw InvalidScaleError(os.str());
  }
  for (auto& c : prior.components) {
    c.mean *= sigma_scale;
    c.cov *= sigma_scale * sigma_scale;
  }
  prior.scale = PriorScale::natural;
  return prior;
}

enum class PriorViolation {
  empty,
  bad_dimension,
  dimension_mismatch,
  non_finite,
  non_positive_weight,
  weight_sum,
  asymmetric_cov,
  not_psd,
};

struct PriorDiagnostic {
  PriorViolation violation;
  std::optional<std::size_t> component;
  std::string message;
};

/// First violated prior invariant, or nullopt when the prior is well formed.
template <typename Scalar>
std::optional<PriorDiagnostic> validate_prior(const BasicMixtureNormalPrior<Scalar>& prior) {
  auto fail = [](PriorViolation v, std::optional<std::size_t> idx, const std::string& what) {
    std::string msg = idx ? "components[" + std::to_string(*idx) + "]: " + what : what;
    return PriorDiagnostic{v, idx, std::move(msg)};
  };
  if (prior.dimension < 1) {
    return fail(PriorViolation::bad_dimension, std::nullopt, "dimension must be positive");
  }
  if (prior.components.empty()) {
    return fail(PriorViolation::empty, std::nullopt, "prior has no components");
  }
  const Eigen::Index d = prior.dimension;
  Scalar weight_sum = 0;
  for (std::size_t i = 0; i < prior.components.size(); ++i) {
    const auto& c = prior.components[i];
    if (c.mean.size() != d || c.cov.rows() != d || c.cov.cols() != d) {
      return fail(PriorViolation::dimension_mismatch, i,
                  "mean/cov shape does not match dimension " + std::to_string(d));
    }
    if (!std::isfinite(c.weight) || !c.mean.allFinite() || !c.cov.allFinite()) {
      return fail(PriorViolation::non_finite, i, "non-finite weight, mean or cov entry");
    }
    if (!(c.weight > Scalar(0))) {
      return fail(PriorViolation::non_positive_weight, i, "weight must be strictly positive");
    }
    weight_sum += c.weight;
    const Scalar asym = (c.cov - c.cov.transpose()).cwiseAbs().maxCoeff();
    if (asym > Scalar(1e-12)) {
      return fail(PriorViolation::asymmetric_cov, i, "cov is not symmetric");
    }
    const Matrix<Scalar> sym = (c.cov + c.cov.transpose()) / Scalar(2);
    const Scalar min_eig = Eigen::SelfAdjointEigenSolver<Matrix<Scalar>>(sym, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    const Scalar floor = Scalar(-1e-10) * std::abs(sym.trace());
    if (min_eig < floor) {
      std::ostringstream os;
      os << "cov is not positive semi-definite (min eigenvalue " << min_eig << ")";
      return fail(PriorViolation::not_psd, i, os.str());
    }
  }
  if (std::abs(weight_sum - Scalar(1)) > Scalar(1e-12)) {
    std::ostringstream os;
    os.precision(17);
    os << "weights sum to " << weight_sum << ", expected 1";
    return fail(PriorViolation::weight_sum, std::nullopt, os.str());
  }
  return std::nullopt;
}

}  // namespace msprt
