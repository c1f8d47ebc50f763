#pragma once

#include <Eigen/Dense>
#include <vector>

#include "countmix/process.hpp"

namespace countmix {

/// Closed-form AR(1) working-correlation algebra for one cluster size.
/// r_inv is the symmetric tridiagonal inverse of R(alpha)[k,j] = alpha^|k-j|,
/// r_inv_deriv its elementwise derivative in alpha.
struct Ar1Workspace {
    int n = 0;
    double alpha = 0.0;
    Eigen::MatrixXd r_inv;
    Eigen::MatrixXd r_inv_deriv;

    Ar1Workspace() = default;
    Ar1Workspace(double alpha, int n);
};

Eigen::MatrixXd ar1_inverse(double alpha, int n);
Eigen::MatrixXd ar1_inverse_deriv(double alpha, int n);

/// Stacked estimating function for one subject: p regression components,
/// one autocorrelation component and one scale component (length p+2).
Eigen::VectorXd score_u(const SubjectRecord& subject, const ClassParams& params);
Eigen::VectorXd score_u(const SubjectRecord& subject, const ClassParams& params,
                        const Ar1Workspace& ws);

struct EeOptions {
    double tol = 1e-8;        // on max |weighted EE| / sum(weights)
    int max_cycles = 50;
    double alpha_cap = 0.999;
    double alpha_margin = 1e-6;
    double gamma_floor = 1e-6;
    double degenerate_frac = 1e-6;  // weight mass below this * m freezes the class
};

struct EeResult {
    ClassParams params;
    double residual_norm = 0.0;  // max abs weighted-EE component / sum(weights)
    int cycles = 0;
    bool converged = false;
    bool alpha_bracket_failed = false;
    /// The autocorrelation equation has no root in the admissible interval
    /// and alpha sits on the boundary the equation points past; the residual
    /// then scores the alpha component by its inward violation only.
    bool alpha_pinned_low = false;
    bool alpha_pinned_high = false;
    bool frozen = false;  // degenerate weight mass; params returned at entry
};

/// Block-coordinate solver for one class's weighted estimating equation:
/// damped Newton on the regression block, bracketed root find for alpha,
/// closed-form scale update; cycles until the full weighted EE is small.
EeResult solve_weighted_ee(const PanelData& data, const std::vector<double>& weights,
                           const ClassParams& init, const EeOptions& opts = {});

struct PoissonFit {
    Eigen::VectorXd beta;
    double deviance = 0.0;
    int iters = 0;
    bool converged = false;
};

/// Weighted Poisson regression with log link via IRLS over the given
/// subject subset (all subjects when empty). Weights are per subject.
PoissonFit poisson_irls(const PanelData& data, const std::vector<int>& subset = {},
                        const std::vector<double>& weights = {});

/// Convergence scoring of one autocorrelation component under the boundary
/// rules used by solve_weighted_ee.
double masked_alpha_component(double g_component, bool pinned_low, bool pinned_high);

/// -2 x Poisson log-likelihood of one subject's counts at the given
/// coefficients (including the log(y!) terms).
double poisson_deviance(const SubjectRecord& subject, const Eigen::VectorXd& beta);

}  // namespace countmix
