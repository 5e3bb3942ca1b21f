/*
 * Copyright 2026 The crowdvis Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <sstream>

#include "crowdvis/error.hpp"
#include "crowdvis/models.hpp"

namespace crowdvis::models {
namespace {

void require_complete(const MatrixXd& X, const VectorXd& y, const char* who) {
  if (X.rows() != y.size()) throw InvalidArgument(std::string(who) + ": X and y disagree on row count");
  if (X.rows() < 1) throw InvalidArgument(std::string(who) + ": no rows");
  if (X.hasNaN() || y.hasNaN()) throw InvalidArgument(std::string(who) + ": input contains missing values; impute first");
}

}  // namespace

Standardization standardize_fit(const MatrixXd& X, const std::vector<std::string>& names) {
  if (static_cast<std::size_t>(X.cols()) != names.size()) throw InvalidArgument("standardize_fit: name count mismatch");
  Standardization s;
  s.input_columns = names;
  std::vector<double> means, sds;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double sum = 0;
    int n = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (!std::isnan(X(i, j))) {
        sum += X(i, j);
        ++n;
      }
    const double mean = n > 0 ? sum / n : 0.0;
    double ss = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (!std::isnan(X(i, j))) ss += (X(i, j) - mean) * (X(i, j) - mean);
    const double sd = n > 0 ? std::sqrt(ss / n) : 0.0;
    if (n < 2 || !(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      s.dropped.push_back(names[static_cast<std::size_t>(j)]);
      continue;
    }
    s.kept.push_back(static_cast<std::size_t>(j));
    means.push_back(mean);
    sds.push_back(sd);
  }
  s.mean = Eigen::Map<VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
  s.sd = Eigen::Map<VectorXd>(sds.data(), static_cast<Eigen::Index>(sds.size()));
  return s;
}

MatrixXd standardize_apply(const Standardization& s, const MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != s.input_columns.size()) {
    throw InvalidArgument("standardize_apply: expected " + std::to_string(s.input_columns.size()) + " columns");
  }
  MatrixXd out(X.rows(), static_cast<Eigen::Index>(s.kept.size()));
  for (std::size_t k = 0; k < s.kept.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    out.col(kk) = (X.col(static_cast<Eigen::Index>(s.kept[k])).array() - s.mean(kk)) / s.sd(kk);
  }
  return out;
}

VectorXd LinearModel::predict(const MatrixXd& X) const {
  if (X.cols() != beta.size()) throw InvalidArgument("linear model expects " + std::to_string(beta.size()) + " columns");
  return (X * beta).array() + intercept;
}

LinearModel fit_ridge(const MatrixXd& X, const VectorXd& y, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("ridge lambda must be finite and >= 0");
  require_complete(X, y, "fit_ridge");
  const VectorXd xbar = X.colwise().mean();
  const double ybar = y.mean();
  const MatrixXd Xc = X.rowwise() - xbar.transpose();
  const VectorXd yc = y.array() - ybar;

  LinearModel m;
  m.kind = LinearKind::ridge;
  m.lambda = lambda;
  if (X.cols() == 0) {
    m.beta = VectorXd(0);
    m.intercept = ybar;
    return m;
  }
  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Xc);
    if (qr.rank() < X.cols()) {
      throw NumericalError("ridge with lambda = 0 is singular (design rank " + std::to_string(qr.rank()) + " < " +
                           std::to_string(X.cols()) + "); use lambda > 0");
    }
  }
  MatrixXd A = Xc.transpose() * Xc;
  A.diagonal().array() += lambda;
  const Eigen::LLT<MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw NumericalError("ridge normal equations are not positive definite; use lambda > 0");
  m.beta = llt.solve(Xc.transpose() * yc);
  if (!m.beta.allFinite()) throw NumericalError("ridge produced non-finite coefficients");
  m.intercept = ybar - xbar.dot(m.beta);
  return m;
}

double lasso_lambda_max(const MatrixXd& X, const VectorXd& y) {
  require_complete(X, y, "lasso_lambda_max");
  const MatrixXd Xc = X.rowwise() - X.colwise().mean();
  const VectorXd yc = y.array() - y.mean();
  if (X.cols() == 0) return 0.0;
  return (Xc.transpose() * yc).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

LinearModel fit_lasso(const MatrixXd& X, const VectorXd& y, double lambda, const LassoOptions& opt) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lasso lambda must be finite and >= 0");
  require_complete(X, y, "fit_lasso");
  const auto n = static_cast<double>(X.rows());
  const VectorXd xbar = X.colwise().mean();
  const double ybar = y.mean();
  const MatrixXd Xc = X.rowwise() - xbar.transpose();
  const Eigen::Index p = X.cols();
  const VectorXd col_sq = Xc.colwise().squaredNorm().transpose() / n;

  VectorXd beta = VectorXd::Zero(p);
  VectorXd r = y.array() - ybar;
  double max_change = 0.0;
  int sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_sq(j) <= 0.0) continue;
      const double z = Xc.col(j).dot(r) / n + col_sq(j) * beta(j);
      const double shrunk = z > lambda ? z - lambda : z < -lambda ? z + lambda : 0.0;
      const double next = shrunk / col_sq(j);
      const double delta = next - beta(j);
      if (delta != 0.0) {
        r -= delta * Xc.col(j);
        beta(j) = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < opt.tolerance) break;
  }
  if (max_change >= opt.tolerance) {
    std::ostringstream msg;
    msg << "lasso did not converge after " << opt.max_sweeps << " sweeps (lambda " << lambda << ", last max change "
        << max_change << ")";
    throw NumericalError(msg.str());
  }
  LinearModel m;
  m.kind = LinearKind::lasso;
  m.lambda = lambda;
  m.beta = beta;
  m.intercept = ybar - xbar.dot(beta);
  return m;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0) || !(hi >= lo) || count < 1) throw InvalidArgument("log grid needs 0 < lo <= hi and count >= 1");
  std::vector<double> g(static_cast<std::size_t>(count));
  if (count == 1) {
    g[0] = hi;
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

}  // namespace crowdvis::models
