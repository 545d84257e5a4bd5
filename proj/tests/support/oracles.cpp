#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <system_error>

namespace crashstack::oracle {

namespace {

double sse(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double m = 0;
  for (double a : v) m += a;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double a : v) s += (a - m) * (a - m);
  return s;
}

}  // namespace

std::optional<BruteSplit> brute_force_split(const Eigen::MatrixXd& x,
                                            const Eigen::VectorXd& y,
                                            int min_leaf) {
  const auto n = x.rows();
  std::vector<double> all(y.data(), y.data() + n);
  const double parent = sse(all);

  std::vector<BruteSplit> candidates;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::set<double> distinct;
    for (Eigen::Index i = 0; i < n; ++i) distinct.insert(x(i, c));
    std::vector<double> vals(distinct.begin(), distinct.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double thr = 0.5 * (vals[k] + vals[k + 1]);
      std::vector<double> left, right;
      for (Eigen::Index i = 0; i < n; ++i) {
        (x(i, c) <= thr ? left : right).push_back(y(i));
      }
      if (static_cast<int>(left.size()) < min_leaf ||
          static_cast<int>(right.size()) < min_leaf) {
        continue;
      }
      const double gain = parent - sse(left) - sse(right);
      if (gain > 0) candidates.push_back({static_cast<int>(c), thr, gain});
    }
  }
  if (candidates.empty()) return std::nullopt;
  double best = 0;
  for (const auto& s : candidates) best = std::max(best, s.gain);
  // Candidates are already in (column, threshold) order.
  for (const auto& s : candidates) {
    if (s.gain >= best - 1e-10 * best) return s;
  }
  return std::nullopt;
}

Eigen::VectorXd normal_equations(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd ata = a.transpose() * a;
  const Eigen::VectorXd aty = a.transpose() * y;
  return ata.ldlt().solve(aty);
}

TwoWeights nnls_grid_2(const Eigen::VectorXd& p1, const Eigen::VectorXd& p2,
                       const Eigen::VectorXd& y, double box) {
  const double m1 = p1.mean(), m2 = p2.mean(), my = y.mean();
  const Eigen::VectorXd c1 = p1.array() - m1;
  const Eigen::VectorXd c2 = p2.array() - m2;
  const Eigen::VectorXd cy = y.array() - my;
  // Objective on centered data expanded into its quadratic form.
  const double s11 = c1.dot(c1), s22 = c2.dot(c2), s12 = c1.dot(c2);
  const double s1y = c1.dot(cy), s2y = c2.dot(cy), syy = cy.dot(cy);
  auto objective = [&](double a, double b) {
    return syy - 2 * a * s1y - 2 * b * s2y + a * a * s11 + b * b * s22 +
           2 * a * b * s12;
  };

  auto search = [&](double lo1, double hi1, double lo2, double hi2, double step,
                    double& best1, double& best2) {
    double best = std::numeric_limits<double>::infinity();
    const int k1 = static_cast<int>(std::lround((hi1 - lo1) / step));
    const int k2 = static_cast<int>(std::lround((hi2 - lo2) / step));
    for (int i = 0; i <= k1; ++i) {
      const double a = lo1 + i * step;
      for (int j = 0; j <= k2; ++j) {
        const double b = lo2 + j * step;
        const double v = objective(a, b);
        if (v < best) {
          best = v;
          best1 = a;
          best2 = b;
        }
      }
    }
  };

  double a = 0, b = 0;
  search(0, box, 0, box, 0.01, a, b);
  double fa = a, fb = b;
  search(std::max(0.0, a - 0.02), a + 0.02, std::max(0.0, b - 0.02), b + 0.02,
         1e-4, fa, fb);
  return {fa, fb, my - fa * m1 - fb * m2};
}

Eigen::VectorXd finite_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                const Eigen::VectorXd& at, double rel_step) {
  Eigen::VectorXd g(at.size());
  for (Eigen::Index k = 0; k < at.size(); ++k) {
    const double h = rel_step * std::max(1.0, std::abs(at(k)));
    auto shifted = [&](double by) {
      Eigen::VectorXd v = at;
      v(k) += by;
      return f(v);
    };
    g(k) = (-shifted(2 * h) + 8 * shifted(h) - 8 * shifted(-h) + shifted(-2 * h)) / (12 * h);
  }
  return g;
}

double route(const RegressionTree& tree, const Eigen::MatrixXd& x, Eigen::Index i) {
  int k = 0;
  while (!tree.nodes[k].is_leaf) {
    const auto& n = tree.nodes[k];
    k = x(i, n.split_col) <= n.threshold ? n.left : n.right;
  }
  return tree.nodes[k].prediction;
}

OobOracle oob_reaggregate(const RandomForest& forest, const FeatureMatrix& X) {
  const auto n = X.n_rows();
  OobOracle o;
  o.predictions = Eigen::VectorXd::Zero(n);
  o.counts.assign(n, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0;
    int c = 0;
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      if (forest.inbag[t][i] != 0) continue;
      s += route(forest.trees[t], X.x, i);
      ++c;
    }
    o.counts[i] = c;
    if (c > 0) o.predictions(i) = s / c;
  }
  double ss = 0, ysum = 0;
  int m = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (o.counts[i] == 0) continue;
    const double e = X.response(i) - o.predictions(i);
    ss += e * e;
    ysum += X.response(i);
    ++m;
  }
  o.mse = ss / m;
  const double mean = ysum / m;
  double var = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (o.counts[i] > 0) var += (X.response(i) - mean) * (X.response(i) - mean);
  }
  var /= m;
  o.r2 = 1.0 - o.mse / var;
  return o;
}

FeatureMatrix random_matrix(int rows, int cols, std::uint64_t seed, bool ties) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 4);
  FeatureMatrix m;
  m.x.resize(rows, cols);
  m.response.resize(rows);
  for (int c = 0; c < cols; ++c) m.column_names.push_back("c" + std::to_string(c));
  for (int i = 0; i < rows; ++i) {
    for (int c = 0; c < cols; ++c) {
      m.x(i, c) = ties ? static_cast<double>(small(gen)) : unif(gen);
    }
    m.response(i) = 10 * unif(gen);
    m.row_ids.push_back("r" + std::to_string(i));
  }
  return m;
}

FeatureMatrix smooth_regression(int rows, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.5);
  FeatureMatrix m;
  m.column_names = {"a", "b", "c", "d"};
  m.x.resize(rows, 4);
  m.response.resize(rows);
  for (int i = 0; i < rows; ++i) {
    for (int c = 0; c < 4; ++c) m.x(i, c) = unif(gen);
    m.response(i) = 5 + 4 * m.x(i, 0) + 2 * (m.x(i, 1) > 0.5) +
                    m.x(i, 2) * m.x(i, 0) + noise(gen);
    m.row_ids.push_back("r" + std::to_string(i));
  }
  return m;
}

TempDir::TempDir() {
  std::string templ =
      (std::filesystem::temp_directory_path() / "crashstack-test-XXXXXX").string();
  if (!mkdtemp(templ.data())) std::abort();
  path_ = templ;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace crashstack::oracle
