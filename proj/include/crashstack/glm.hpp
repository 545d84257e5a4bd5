#ifndef CRASHSTACK_GLM_HPP_
#define CRASHSTACK_GLM_HPP_

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crashstack/dataset.hpp"

namespace crashstack {

enum class Family { poisson, negative_binomial };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct GlmSpec {
  Family family = Family::poisson;
  int max_iter = 100;
  // Convergence threshold on the infinity norm of the score of the
  // per-observation mean log-likelihood.
  double tol = 1e-8;

  void validate() const;
};

// Count regression with log link. For the negative binomial family the
// NB2 form is used: Var(y) = lambda + alpha * lambda^2.
struct FittedGlm {
  Family family = Family::poisson;
  std::vector<std::string> column_names;  // covariates, intercept excluded
  Eigen::VectorXd beta;                   // intercept first
  std::optional<double> alpha;            // negative binomial only
  double loglik = 0;
  // Standard errors from the inverse observed information: beta entries,
  // then alpha when it is an interior estimate.
  Eigen::VectorXd se;
  double aic = 0;
  double bic = 0;
  int n = 0;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0;
  std::string note;

  int parameter_count() const {
    return static_cast<int>(beta.size()) + (alpha ? 1 : 0);
  }
  Eigen::VectorXd t_stats() const;
};

FittedGlm fit_poisson(const FeatureMatrix& X, const GlmSpec& spec = {});
FittedGlm fit_negbin(const FeatureMatrix& X, const GlmSpec& spec = {});
// Dispatches on spec.family.
FittedGlm fit_glm(const FeatureMatrix& X, const GlmSpec& spec);

// exp(x^T beta) per row; throws DataError on column mismatch.
Eigen::VectorXd predict_mean(const FittedGlm& model, const FeatureMatrix& X);

enum class MarginalEffect {
  average,   // beta_k * mean_i exp(x_i^T beta)
  at_means,  // beta_k * exp(mean(x)^T beta)
};

// One entry per covariate (intercept excluded).
Eigen::VectorXd marginal_effects(const FittedGlm& model, const FeatureMatrix& X,
                                 MarginalEffect kind = MarginalEffect::average);

struct InformationCriteria {
  double aic = 0;
  double bic = 0;
};

InformationCriteria information_criteria(double loglik, int k, int n);

namespace glm {

// [1 | X] design with the intercept column first.
Eigen::MatrixXd design_matrix(const FeatureMatrix& X);

double poisson_loglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& beta);
Eigen::VectorXd poisson_score(const Eigen::MatrixXd& design,
                              const Eigen::VectorXd& y,
                              const Eigen::VectorXd& beta);
Eigen::MatrixXd poisson_hessian(const Eigen::MatrixXd& design,
                                const Eigen::VectorXd& beta);

// Negative binomial functions take theta = (beta..., alpha) with alpha > 0.
double negbin_loglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& theta);
Eigen::VectorXd negbin_score(const Eigen::MatrixXd& design,
                             const Eigen::VectorXd& y,
                             const Eigen::VectorXd& theta);
Eigen::MatrixXd negbin_hessian(const Eigen::MatrixXd& design,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& theta);

}  // namespace glm
}  // namespace crashstack

#endif  // CRASHSTACK_GLM_HPP_
