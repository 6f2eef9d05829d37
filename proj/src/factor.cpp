#include "gscvol/factor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gscvol/dataio.hpp"
#include "gscvol/error.hpp"

namespace gscvol::factor {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Covariates after two-way demeaning, with zero-variation columns removed.
struct Design {
  std::vector<MatrixXd> x;   // kept, demeaned
  std::vector<int> kept;     // indices into the original covariate list
  std::vector<bool> dropped;
  MatrixXd gram;             // p1 x p1 of trace inner products
  Eigen::LDLT<MatrixXd> solver;
};

double frob_dot(const MatrixXd& a, const MatrixXd& b) { return (a.array() * b.array()).sum(); }

Design build_design(const PanelBlock& block) {
  Design design;
  const int p = block.n_covariates();
  design.dropped.assign(p, false);
  const Eigen::Index nt = block.y.size();
  for (int k = 0; k < p; ++k) {
    const auto& xk = block.x[k];
    if (xk.rows() != block.y.rows() || xk.cols() != block.y.cols())
      throw DataError("covariate matrix shape does not match outcome");
    MatrixXd dm = twoway_demean(xk);
    const double scale = std::max(1.0, xk.cwiseAbs().maxCoeff());
    if (dm.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
      design.dropped[k] = true;
      continue;
    }
    design.x.push_back(std::move(dm));
    design.kept.push_back(k);
  }
  const int p1 = static_cast<int>(design.x.size());
  if (p1 == 0) return design;

  MatrixXd z(nt, p1);
  for (int k = 0; k < p1; ++k) z.col(k) = Eigen::Map<const VectorXd>(design.x[k].data(), nt);
  auto name = [&](int k) {
    const int idx = design.kept[k];
    return idx < static_cast<int>(block.covariate_names.size()) ? block.covariate_names[idx]
                                                                : "x" + std::to_string(idx);
  };
  Eigen::ColPivHouseholderQR<MatrixXd> qr(z);
  qr.setThreshold(1e-10);
  if (qr.rank() < p1) {
    // name the first column that adds nothing to the span of the earlier ones
    for (int k = 1; k < p1; ++k) {
      Eigen::ColPivHouseholderQR<MatrixXd> prefix(z.leftCols(k + 1));
      prefix.setThreshold(1e-10);
      if (prefix.rank() <= k) {
        std::string earlier;
        for (int j = 0; j < k; ++j) earlier += (j ? ", " : "") + name(j);
        throw DataError("rank-deficient covariates after two-way demeaning: '" + name(k) +
                        "' is collinear with {" + earlier + "}");
      }
    }
    throw DataError("rank-deficient covariates after two-way demeaning");
  }
  design.gram = z.transpose() * z;
  design.solver.compute(design.gram);
  return design;
}

VectorXd solve_beta(const Design& design, const MatrixXd& target) {
  const int p1 = static_cast<int>(design.x.size());
  VectorXd rhs(p1);
  for (int k = 0; k < p1; ++k) rhs(k) = frob_dot(design.x[k], target);
  return design.solver.solve(rhs);
}

MatrixXd apply_beta(const Design& design, const VectorXd& beta) {
  MatrixXd out = MatrixXd::Zero(design.x.empty() ? 0 : design.x[0].rows(),
                                design.x.empty() ? 0 : design.x[0].cols());
  for (std::size_t k = 0; k < design.x.size(); ++k) out += beta(k) * design.x[k];
  return out;
}

void finish_model(FactorModel& model, const PanelBlock& block, const Design& design,
                  const VectorXd& beta_kept) {
  const int n = block.n_units();
  const int t = block.n_periods();
  const int p = block.n_covariates();
  const int p1 = static_cast<int>(design.kept.size());
  model.beta = VectorXd::Zero(p);
  for (int k = 0; k < p1; ++k) model.beta(design.kept[k]) = beta_kept(k);
  model.dropped_covariates = design.dropped;

  MatrixXd xb = MatrixXd::Zero(n, t);
  for (int k = 0; k < p; ++k) xb += model.beta(k) * block.x[k];
  const MatrixXd net = block.y - xb;
  const double grand = net.mean();
  model.alpha = net.rowwise().mean();
  model.xi = net.colwise().mean().transpose().array() - grand;

  const double rss = model.residuals.squaredNorm();
  const double r = model.r;
  const double nt = static_cast<double>(n) * t;
  const double dof = nt - r * (n + t) + r * r - p1;
  model.sigma2 = dof > 0 ? rss / dof : std::numeric_limits<double>::quiet_NaN();
  model.ic = std::log(model.sigma2) + (r * (n + t) - r * r + p1) * std::log(nt) / nt;
}

void check_block(const PanelBlock& block) {
  if (block.n_units() < 1 || block.n_periods() < 1) throw DataError("empty estimation panel");
  if (!block.y.allFinite()) throw DataError("non-finite outcome in estimation panel");
  for (const auto& xk : block.x)
    if (!xk.allFinite()) throw DataError("non-finite covariate in estimation panel");
}

}  // namespace

Eigen::MatrixXd FactorModel::fitted(const PanelBlock& block) const {
  MatrixXd out = alpha.replicate(1, block.n_periods());
  out.rowwise() += xi.transpose();
  for (int k = 0; k < block.n_covariates(); ++k) out += beta(k) * block.x[k];
  if (r > 0) out += loadings * factors.transpose();
  return out;
}

PanelBlock control_block(const PanelData& panel) {
  PanelBlock block;
  block.y = panel.y.topRows(panel.n_control);
  for (const auto& xk : panel.x) block.x.push_back(xk.topRows(panel.n_control));
  block.covariate_names = panel.covariate_names;
  return block;
}

Eigen::MatrixXd twoway_demean(const Eigen::MatrixXd& m) {
  const VectorXd row_mean = m.rowwise().mean();
  const Eigen::RowVectorXd col_mean = m.colwise().mean();
  MatrixXd out = m;
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += m.mean();
  return out;
}

int max_feasible_factors(int n_units, int n_periods) {
  return std::min(n_units, n_periods) - 1;
}

LeadingFactors leading_factors(const Eigen::MatrixXd& e, int r) {
  const Eigen::Index n = e.rows();
  const Eigen::Index t = e.cols();
  LeadingFactors out;
  if (r <= 0) {
    out.factors.resize(t, 0);
    out.loadings.resize(n, 0);
    return out;
  }
  const double sqrt_t = std::sqrt(static_cast<double>(t));
  if (t < n) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(e.transpose() * e);
    out.factors.resize(t, r);
    out.singular_values.resize(r);
    for (int k = 0; k < r; ++k) {
      out.factors.col(k) = eig.eigenvectors().col(t - 1 - k) * sqrt_t;
      out.singular_values(k) = std::sqrt(std::max(0.0, eig.eigenvalues()(t - 1 - k)));
    }
  } else {
    Eigen::JacobiSVD<MatrixXd> svd(e, Eigen::ComputeThinV);
    out.factors = svd.matrixV().leftCols(r) * sqrt_t;
    out.singular_values = svd.singularValues().head(r);
  }
  for (int k = 0; k < r; ++k) {
    Eigen::Index idx = 0;
    out.factors.col(k).cwiseAbs().maxCoeff(&idx);
    if (out.factors(idx, k) < 0) out.factors.col(k) *= -1.0;
  }
  out.loadings = e * out.factors / static_cast<double>(t);
  return out;
}

Eigen::MatrixXd project_loadings(const Eigen::MatrixXd& design, const Eigen::MatrixXd& targets) {
  if (design.rows() != targets.rows())
    throw DataError("design and targets have different numbers of periods");
  if (design.cols() == 0) return MatrixXd(0, targets.cols());
  if (design.rows() < design.cols())
    throw SingularityError("fewer pre-treatment periods than loading parameters");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols())
    throw SingularityError("singular factor cross-product in loading projection");
  return qr.solve(targets);
}

double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() == 0 || b.cols() == 0) return 0.0;
  Eigen::HouseholderQR<MatrixXd> qa(a), qb(b);
  const MatrixXd ua = qa.householderQ() * MatrixXd::Identity(a.rows(), a.cols());
  const MatrixXd ub = qb.householderQ() * MatrixXd::Identity(b.rows(), b.cols());
  const MatrixXd rest = ub - ua * (ua.transpose() * ub);
  Eigen::JacobiSVD<MatrixXd> svd(rest);
  const double s = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  return std::asin(std::min(1.0, s));
}

FactorModel fit_twoway(const PanelBlock& block) {
  check_block(block);
  const Design design = build_design(block);
  const MatrixXd ydm = twoway_demean(block.y);
  VectorXd beta = design.x.empty() ? VectorXd() : solve_beta(design, ydm);
  FactorModel model;
  model.r = 0;
  model.factors.resize(block.n_periods(), 0);
  model.loadings.resize(block.n_units(), 0);
  model.residuals = design.x.empty() ? ydm : MatrixXd(ydm - apply_beta(design, beta));
  model.objective_trace.push_back(model.residuals.squaredNorm());
  finish_model(model, block, design, beta);
  return model;
}

FactorModel fit_ife(const PanelBlock& block, int r, const IfeOptions& options) {
  if (r < 0) throw ConfigError("factor count must be non-negative");
  if (r > max_feasible_factors(block.n_units(), block.n_periods()))
    throw ConfigError("factor count r=" + std::to_string(r) + " exceeds min(N, T) - 1 = " +
                      std::to_string(max_feasible_factors(block.n_units(), block.n_periods())));
  if (r == 0) return fit_twoway(block);
  check_block(block);

  const Design design = build_design(block);
  const MatrixXd ydm = twoway_demean(block.y);
  const int t = block.n_periods();
  FactorModel model;
  model.r = r;

  if (design.x.empty()) {
    auto lf = leading_factors(ydm, r);
    model.factors = std::move(lf.factors);
    model.loadings = std::move(lf.loadings);
    model.residuals = ydm - model.loadings * model.factors.transpose();
    model.objective_trace.push_back(model.residuals.squaredNorm());
    model.iterations = 1;
    finish_model(model, block, design, VectorXd());
    return model;
  }

  VectorXd beta = solve_beta(design, ydm);
  MatrixXd e = ydm - apply_beta(design, beta);
  MatrixXd f, lambda;
  if (options.initial_factors) {
    f = *options.initial_factors;
    if (f.rows() != t || f.cols() != r)
      throw ConfigError("initial factors must be T x r");
    lambda = project_loadings(f, e.transpose()).transpose();
  } else {
    auto lf = leading_factors(e, r);
    f = std::move(lf.factors);
    lambda = std::move(lf.loadings);
  }

  bool converged = false;
  int iter = 0;
  double beta_change = 0.0, angle = 0.0;
  while (iter < options.max_iter) {
    ++iter;
    const VectorXd beta_old = beta;
    const MatrixXd f_old = f;
    beta = solve_beta(design, ydm - lambda * f.transpose());
    e = ydm - apply_beta(design, beta);
    auto lf = leading_factors(e, r);
    f = std::move(lf.factors);
    lambda = std::move(lf.loadings);
    model.objective_trace.push_back((e - lambda * f.transpose()).squaredNorm());
    beta_change = (beta - beta_old).norm() / std::max(1.0, beta_old.norm());
    angle = max_principal_angle(f_old, f);
    if (beta_change < options.tol && angle < options.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "interactive fixed effects did not converge in " << options.max_iter
        << " iterations (last relative beta change " << beta_change << ", factor angle " << angle
        << ", objective " << model.objective_trace.back() << ")";
    throw ConvergenceError(msg.str());
  }
  model.iterations = iter;
  model.factors = std::move(f);
  model.loadings = std::move(lambda);
  model.residuals = e - model.loadings * model.factors.transpose();
  finish_model(model, block, design, beta);
  return model;
}

void select_factor_count(CvTable& table, double min_improvement) {
  if (table.rows.empty()) throw DataError("cross-validation: no feasible factor count in range");
  // A larger r must beat the lowest MSPE seen so far by the relative margin.
  std::size_t best = 0;
  double lowest = table.rows[0].mspe;
  for (std::size_t k = 1; k < table.rows.size(); ++k) {
    if (lowest - table.rows[k].mspe > min_improvement * lowest) best = k;
    lowest = std::min(lowest, table.rows[k].mspe);
  }
  table.selected_r = table.rows[best].r;
  table.tie_broken = false;
  for (std::size_t k = 0; k < table.rows.size(); ++k)
    if (k != best && table.rows[k].mspe <= table.rows[best].mspe) table.tie_broken = true;
  if (table.tie_broken)
    table.notices.push_back("r = " + std::to_string(table.selected_r) +
                            " kept: no other factor count improves the MSPE by the required margin");
}

CvTable cross_validate(const PanelData& panel, CvRange range, const IfeOptions& options) {
  if (panel.n_treated() == 0) throw DataError("cross-validation needs at least one treated unit");
  if (range.min < 0 || range.max < range.min) throw ConfigError("invalid factor range");
  const PanelBlock block = control_block(panel);
  const int n = block.n_units();
  const int t = block.n_periods();
  int min_pre = t;
  for (int i = panel.n_control; i < panel.n_units(); ++i) min_pre = std::min(min_pre, panel.t0[i]);

  CvTable table;
  std::vector<double> rss;
  for (int r = range.min; r <= range.max; ++r) {
    if (r > max_feasible_factors(n, t)) {
      table.notices.push_back("r=" + std::to_string(r) + " skipped: exceeds min(N_ctrl, T) - 1");
      continue;
    }
    if (min_pre < r + 2) {
      table.notices.push_back("r=" + std::to_string(r) +
                              " skipped: shortest pre-treatment period has " +
                              std::to_string(min_pre) + " periods, needs " + std::to_string(r + 2));
      continue;
    }
    FactorModel model;
    try {
      model = fit_ife(block, r, options);
    } catch (const ConvergenceError& err) {
      table.notices.push_back("r=" + std::to_string(r) + " skipped: " + err.what());
      continue;
    }
    double sse = 0.0;
    long count = 0;
    bool ok = true;
    for (int i = panel.n_control; i < panel.n_units() && ok; ++i) {
      const int pre = panel.t0[i];
      VectorXd resid = panel.y.row(i).head(pre).transpose() - model.xi.head(pre);
      for (int k = 0; k < panel.n_covariates(); ++k)
        resid -= model.beta(k) * panel.x[k].row(i).head(pre).transpose();
      MatrixXd design(pre, r + 1);
      design.leftCols(r) = model.factors.topRows(pre);
      design.col(r).setOnes();
      Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
      qr.setThreshold(1e-10);
      if (qr.rank() < r + 1) {
        ok = false;
        break;
      }
      const VectorXd coef = qr.solve(resid);
      const VectorXd fit_err = resid - design * coef;
      const MatrixXd gram_inv = (design.transpose() * design).inverse();
      for (int s = 0; s < pre; ++s) {
        const double lev = design.row(s) * gram_inv * design.row(s).transpose();
        if (1.0 - lev < 1e-12) {
          ok = false;
          break;
        }
        const double loo = fit_err(s) / (1.0 - lev);
        sse += loo * loo;
        ++count;
      }
    }
    if (!ok || count == 0) {
      table.notices.push_back("r=" + std::to_string(r) +
                              " skipped: pre-treatment factor design is singular");
      continue;
    }
    CvRow row;
    row.r = r;
    row.sigma2 = model.sigma2;
    row.ic = model.ic;
    row.mspe = sse / static_cast<double>(count);
    table.rows.push_back(row);
    rss.push_back(model.residuals.squaredNorm());
  }
  if (table.rows.empty()) throw DataError("cross-validation: no feasible factor count in range");

  const double nt = static_cast<double>(n) * t;
  const double v_max = rss.back() / nt;
  const double penalty = (n + t) / nt * std::log(nt / (n + t));
  for (std::size_t k = 0; k < table.rows.size(); ++k)
    table.rows[k].pc = rss[k] / nt + table.rows[k].r * v_max * penalty;

  select_factor_count(table, range.min_improvement);
  return table;
}

}  // namespace gscvol::factor
