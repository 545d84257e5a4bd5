#include "crashstack/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "crashstack/error.hpp"

namespace crashstack {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_inputs(const FeatureMatrix& X, const MatrixXd& design) {
  X.validate();
  if (X.n_rows() == 0) throw DataError("glm: empty feature matrix");
  if ((X.response.array() < 0).any()) {
    throw DataError("glm: response must be non-negative");
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    throw NumericalError("glm: design matrix is rank deficient (rank " +
                         std::to_string(qr.rank()) + " < " +
                         std::to_string(design.cols()) + ")");
  }
}

double inf_norm(const VectorXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

// Newton-Raphson with step halving on beta for a concave objective.
// `eval` returns the objective; `grad_hess` fills score and negative Hessian.
struct NewtonResult {
  VectorXd beta;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0;
};

template <typename Eval, typename GradHess>
NewtonResult newton_beta(VectorXd beta, double n_obs,
                                         int max_iter, double tol, Eval eval,
                                         GradHess grad_hess) {
  NewtonResult res;
  VectorXd g;
  MatrixXd info;
  double f = eval(beta);
  for (int it = 0; it < max_iter; ++it) {
    grad_hess(beta, g, info);
    res.grad_norm = inf_norm(g) / n_obs;
    res.iterations = it;
    if (res.grad_norm <= tol) {
      res.converged = true;
      break;
    }
    const VectorXd step = info.ldlt().solve(g);
    if (!step.allFinite()) break;
    double t = 1.0;
    double f_new = kNegInf;
    VectorXd cand;
    for (int h = 0; h < 60; ++h) {
      cand = beta + t * step;
      f_new = eval(cand);
      if (std::isfinite(f_new) && f_new >= f - 1e-12 * std::abs(f)) break;
      t *= 0.5;
    }
    if (!std::isfinite(f_new)) break;
    beta = cand;
    f = f_new;
  }
  if (!res.converged) {
    grad_hess(beta, g, info);
    res.grad_norm = inf_norm(g) / n_obs;
    res.converged = res.grad_norm <= tol;
  }
  res.beta = std::move(beta);
  return res;
}

VectorXd inverse_diag_sqrt(const MatrixXd& info) {
  const MatrixXd inv = info.inverse();
  return inv.diagonal().cwiseMax(0.0).cwiseSqrt();
}

void finish(FittedGlm& m, const FeatureMatrix& X) {
  m.column_names = X.column_names;
  m.n = static_cast<int>(X.n_rows());
  const auto ic = information_criteria(m.loglik, m.parameter_count(), m.n);
  m.aic = ic.aic;
  m.bic = ic.bic;
}

// Per-observation pieces of the NB2 log-likelihood in terms of eta = x^T beta.
struct NbTerms {
  double ll, d_eta, d_alpha, d2_eta, d2_eta_alpha, d2_alpha;
};

NbTerms nb_terms(double y, double eta, double alpha, bool second_order) {
  const double lambda = std::exp(eta);
  const double theta = 1.0 / alpha;
  const double al = alpha * lambda;
  const double one_al = 1.0 + al;
  NbTerms t{};
  t.ll = std::lgamma(y + theta) - std::lgamma(theta) - std::lgamma(y + 1.0) -
         theta * std::log1p(al) +
         (y > 0 ? y * (std::log(al) - std::log1p(al)) : 0.0);
  t.d_eta = (y - lambda) / one_al;
  const double dl_dtheta = boost::math::digamma(y + theta) -
                           boost::math::digamma(theta) - std::log1p(al) +
                           alpha * (lambda - y) / one_al;
  t.d_alpha = -theta * theta * dl_dtheta;
  if (second_order) {
    t.d2_eta = -lambda * (1.0 + alpha * y) / (one_al * one_al);
    t.d2_eta_alpha = -lambda * (y - lambda) / (one_al * one_al);
    const double tl = theta + lambda;
    const double d2l_dtheta2 = boost::math::trigamma(y + theta) -
                               boost::math::trigamma(theta) + 1.0 / theta -
                               2.0 / tl + (theta + y) / (tl * tl);
    t.d2_alpha = theta * theta * theta * theta * d2l_dtheta2 +
                 2.0 * theta * theta * theta * dl_dtheta;
  }
  return t;
}

}  // namespace

std::string to_string(Family f) {
  return f == Family::poisson ? "poisson" : "negbin";
}

Family family_from_string(const std::string& s) {
  if (s == "poisson") return Family::poisson;
  if (s == "negbin" || s == "negative_binomial") {
    return Family::negative_binomial;
  }
  throw ConfigError("unknown GLM family '" + s + "'");
}

void GlmSpec::validate() const {
  if (max_iter < 1) throw ConfigError("glm: max_iter must be >= 1");
  if (!(tol > 0)) throw ConfigError("glm: tol must be > 0");
}

Eigen::VectorXd FittedGlm::t_stats() const {
  VectorXd t(beta.size());
  for (Index i = 0; i < beta.size(); ++i) {
    t(i) = i < se.size() && se(i) > 0 ? beta(i) / se(i)
                                      : std::numeric_limits<double>::quiet_NaN();
  }
  return t;
}

namespace glm {

MatrixXd design_matrix(const FeatureMatrix& X) {
  MatrixXd d(X.n_rows(), X.n_cols() + 1);
  d.col(0).setOnes();
  d.rightCols(X.n_cols()) = X.x;
  return d;
}

double poisson_loglik(const MatrixXd& design, const VectorXd& y,
                      const VectorXd& beta) {
  const VectorXd eta = design * beta;
  double ll = 0;
  for (Index i = 0; i < y.size(); ++i) {
    ll += -std::exp(eta(i)) + y(i) * eta(i) - std::lgamma(y(i) + 1.0);
  }
  return ll;
}

VectorXd poisson_score(const MatrixXd& design, const VectorXd& y,
                       const VectorXd& beta) {
  const VectorXd lambda = (design * beta).array().exp();
  return design.transpose() * (y - lambda);
}

MatrixXd poisson_hessian(const MatrixXd& design, const VectorXd& beta) {
  const VectorXd lambda = (design * beta).array().exp();
  return -(design.transpose() * lambda.asDiagonal() * design);
}

double negbin_loglik(const MatrixXd& design, const VectorXd& y,
                     const VectorXd& theta) {
  const Index p = design.cols();
  const double alpha = theta(p);
  const VectorXd eta = design * theta.head(p);
  double ll = 0;
  for (Index i = 0; i < y.size(); ++i) {
    ll += nb_terms(y(i), eta(i), alpha, false).ll;
  }
  return ll;
}

VectorXd negbin_score(const MatrixXd& design, const VectorXd& y,
                      const VectorXd& theta) {
  const Index p = design.cols();
  const double alpha = theta(p);
  const VectorXd eta = design * theta.head(p);
  VectorXd d_eta(y.size());
  double d_alpha = 0;
  for (Index i = 0; i < y.size(); ++i) {
    const auto t = nb_terms(y(i), eta(i), alpha, false);
    d_eta(i) = t.d_eta;
    d_alpha += t.d_alpha;
  }
  VectorXd g(p + 1);
  g.head(p) = design.transpose() * d_eta;
  g(p) = d_alpha;
  return g;
}

MatrixXd negbin_hessian(const MatrixXd& design, const VectorXd& y,
                        const VectorXd& theta) {
  const Index p = design.cols();
  const double alpha = theta(p);
  const VectorXd eta = design * theta.head(p);
  VectorXd w(y.size()), c(y.size());
  double h_aa = 0;
  for (Index i = 0; i < y.size(); ++i) {
    const auto t = nb_terms(y(i), eta(i), alpha, true);
    w(i) = t.d2_eta;
    c(i) = t.d2_eta_alpha;
    h_aa += t.d2_alpha;
  }
  MatrixXd h(p + 1, p + 1);
  h.topLeftCorner(p, p) = design.transpose() * w.asDiagonal() * design;
  h.col(p).head(p) = design.transpose() * c;
  h.row(p).head(p) = h.col(p).head(p).transpose();
  h(p, p) = h_aa;
  return h;
}

}  // namespace glm

FittedGlm fit_poisson(const FeatureMatrix& X, const GlmSpec& spec) {
  spec.validate();
  const MatrixXd design = glm::design_matrix(X);
  check_inputs(X, design);
  const VectorXd& y = X.response;
  const double n = static_cast<double>(y.size());

  auto eval = [&](const VectorXd& b) {
    const double ll = glm::poisson_loglik(design, y, b);
    return std::isfinite(ll) ? ll : kNegInf;
  };
  auto grad_hess = [&](const VectorXd& b, VectorXd& g, MatrixXd& info) {
    g = glm::poisson_score(design, y, b);
    info = -glm::poisson_hessian(design, b);
  };
  auto res = newton_beta(VectorXd::Zero(design.cols()), n, spec.max_iter,
                         spec.tol, eval, grad_hess);

  FittedGlm m;
  m.family = Family::poisson;
  m.beta = res.beta;
  m.loglik = glm::poisson_loglik(design, y, m.beta);
  m.se = inverse_diag_sqrt(-glm::poisson_hessian(design, m.beta));
  m.converged = res.converged;
  m.iterations = res.iterations;
  m.grad_norm = res.grad_norm;
  if (!m.converged) {
    m.note = "did not converge within " + std::to_string(spec.max_iter) +
             " iterations (score norm " + std::to_string(m.grad_norm) + ")";
  }
  finish(m, X);
  return m;
}

FittedGlm fit_negbin(const FeatureMatrix& X, const GlmSpec& spec) {
  spec.validate();
  GlmSpec pois_spec = spec;
  pois_spec.family = Family::poisson;
  const FittedGlm pois = fit_poisson(X, pois_spec);

  const MatrixXd design = glm::design_matrix(X);
  const VectorXd& y = X.response;
  const double n = static_cast<double>(y.size());
  const Index p = design.cols();

  FittedGlm m;
  m.family = Family::negative_binomial;

  // Score for alpha at the alpha -> 0 limit, evaluated at the Poisson fit.
  // A non-positive value means the profile likelihood is maximized on the
  // boundary.
  const VectorXd lambda0 = predict_mean(pois, X);
  const double boundary_score =
      0.5 * ((y - lambda0).array().square() - y.array()).sum();
  auto boundary = [&](const std::string& why) {
    m.beta = pois.beta;
    m.alpha = 0.0;
    m.loglik = pois.loglik;
    m.se = pois.se;
    m.converged = pois.converged;
    m.iterations = pois.iterations;
    m.grad_norm = pois.grad_norm;
    m.note = "alpha at the 0 boundary (" + why +
             "); model is equivalent to Poisson";
    finish(m, X);
    return m;
  };
  if (boundary_score <= 0) return boundary("data are not overdispersed");

  const double ybar = y.mean();
  const double s2 = (y.array() - ybar).square().sum() / std::max(1.0, n - 1);
  double alpha = std::max(1e-4, (s2 - ybar) / (ybar * ybar));

  VectorXd beta = pois.beta;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  bool converged = false;
  int outer = 0;
  double grad_norm = 0;
  for (; outer < spec.max_iter; ++outer) {
    auto eval = [&](const VectorXd& b) {
      VectorXd th(p + 1);
      th << b, alpha;
      const double ll = glm::negbin_loglik(design, y, th);
      return std::isfinite(ll) ? ll : kNegInf;
    };
    auto grad_hess = [&](const VectorXd& b, VectorXd& g, MatrixXd& info) {
      VectorXd th(p + 1);
      th << b, alpha;
      g = glm::negbin_score(design, y, th).head(p);
      info = -glm::negbin_hessian(design, y, th).topLeftCorner(p, p);
    };
    auto inner = newton_beta(beta, n, spec.max_iter, spec.tol * 0.1, eval,
                             grad_hess);
    beta = inner.beta;

    VectorXd th(p + 1);
    th << beta, alpha;
    const VectorXd g = glm::negbin_score(design, y, th);
    grad_norm = inf_norm(g) / n;
    if (grad_norm <= spec.tol && inner.converged) {
      converged = true;
      break;
    }
    const MatrixXd h = glm::negbin_hessian(design, y, th);
    const double g_a = g(p);
    if (g_a > 0) {
      lo = alpha;
    } else {
      hi = alpha;
    }
    // Curvature of the profile log-likelihood in alpha.
    const MatrixXd h_bb = h.topLeftCorner(p, p);
    const VectorXd h_ba = h.col(p).head(p);
    const double curv = h(p, p) - h_ba.dot(h_bb.ldlt().solve(h_ba));
    double next = curv < 0 ? alpha - g_a / curv
                           : std::numeric_limits<double>::quiet_NaN();
    const bool in_bracket = std::isfinite(next) && next > lo && next < hi;
    if (!in_bracket) {
      next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * alpha;
    }
    if (next < 1e-10) return boundary("profile maximum at alpha -> 0");
    alpha = next;
  }

  VectorXd th(p + 1);
  th << beta, alpha;
  m.beta = beta;
  m.alpha = alpha;
  m.loglik = glm::negbin_loglik(design, y, th);
  m.se = inverse_diag_sqrt(-glm::negbin_hessian(design, y, th));
  m.converged = converged;
  m.iterations = outer;
  m.grad_norm = grad_norm;
  if (!converged) {
    m.note = "did not converge within " + std::to_string(spec.max_iter) +
             " outer iterations (score norm " + std::to_string(grad_norm) + ")";
  }
  finish(m, X);
  return m;
}

FittedGlm fit_glm(const FeatureMatrix& X, const GlmSpec& spec) {
  return spec.family == Family::poisson ? fit_poisson(X, spec)
                                        : fit_negbin(X, spec);
}

Eigen::VectorXd predict_mean(const FittedGlm& model, const FeatureMatrix& X) {
  require_columns(model.column_names, X.column_names);
  const VectorXd eta =
      (X.x * model.beta.tail(model.beta.size() - 1)).array() + model.beta(0);
  return eta.array().exp();
}

Eigen::VectorXd marginal_effects(const FittedGlm& model, const FeatureMatrix& X,
                                 MarginalEffect kind) {
  double scale = 0;
  if (kind == MarginalEffect::average) {
    scale = predict_mean(model, X).mean();
  } else {
    require_columns(model.column_names, X.column_names);
    const VectorXd xbar = X.x.colwise().mean();
    scale = std::exp(model.beta(0) +
                     xbar.dot(model.beta.tail(model.beta.size() - 1)));
  }
  return model.beta.tail(model.beta.size() - 1) * scale;
}

InformationCriteria information_criteria(double loglik, int k, int n) {
  return {-2.0 * loglik + 2.0 * k,
          -2.0 * loglik + k * std::log(static_cast<double>(n))};
}

}  // namespace crashstack
