#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "countmix/rng.hpp"

namespace countmix {

/// One latent class's parameter block: regression coefficients on the
/// log-link scale, autocorrelation alpha in [0,1) and overdispersion
/// offset gamma > 0 (scale parameter phi = 1 + gamma).
struct ClassParams {
    Eigen::VectorXd beta;
    double alpha = 0.0;
    double gamma = 0.5;

    double phi() const { return 1.0 + gamma; }
    void validate(int p) const;  // throws std::invalid_argument
};

/// Longitudinal record for one subject. Rows are ordered by observation
/// rank (1..n consecutive); serial dependence runs over that order, while
/// `time` is kept only for covariate construction and reporting.
struct SubjectRecord {
    std::string id;
    std::vector<double> time;  // strictly increasing
    std::vector<int> y;        // nonnegative counts
    Eigen::MatrixXd x;         // n x p covariate rows
    double weight = 1.0;       // positive sampling weight

    int n() const { return static_cast<int>(y.size()); }
    void validate(int p) const;
};

struct PanelData {
    std::vector<SubjectRecord> subjects;
    int p = 0;

    int num_subjects() const { return static_cast<int>(subjects.size()); }
    int total_obs() const;
    double total_weight(bool use_weights) const;
    void validate() const;
};

/// Within-class mean curve mu_j = exp(x_j' beta).
using TrajectoryCurve = Eigen::VectorXd;
TrajectoryCurve mean_curve(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta);

struct ConstraintReport {
    bool ok = true;
    double alpha_max = 1.0;     // sup of admissible alpha for these curves
    int subject_index = -1;     // binding subject/pair on failure
    int pair_index = -1;
    double ratio = 1.0;         // binding mean ratio
    std::string detail;
};

double nb_logpmf(int k, double mu, double gamma);
/// NB pmf parameterized by its gamma-mixture shape r (mean r*gamma); the
/// transition convolution needs this form directly.
double nb_logpmf_shape(int k, double shape, double gamma);
double betabin_logpmf(int k, int n, double a, double b);

/// Smallest K such that the NB(mu, gamma) upper tail beyond K is < tail_mass.
int nb_support_bound(double mu, double gamma, double tail_mass = 1e-12);

/// One-step transition log-pmf of the count AR(1) process: convolution of
/// the beta-binomial thinning of y_prev with an independent NB innovation.
/// The thinning fraction lambda = alpha * sqrt(mu_curr/mu_prev) keeps the
/// NB marginals and the alpha^lag correlation exact for non-constant means;
/// it reduces to alpha when the mean curve is flat.
double transition_logpmf(int y_curr, int y_prev, double mu_curr, double mu_prev,
                         const ClassParams& params);

struct CondMoments {
    double mean = 0.0;
    double var = 0.0;
};
CondMoments conditional_moments(int y_prev, double mu_curr, double mu_prev,
                                const ClassParams& params);

/// Joint log-likelihood of one subject's path under a single class:
/// NB log-pmf of the first observation plus transition terms over
/// consecutive ranks.
double subject_loglik(const SubjectRecord& subject, const ClassParams& params);

SubjectRecord simulate_subject(const Eigen::MatrixXd& x, const std::vector<double>& times,
                               const ClassParams& params, Rng& rng);

/// Evaluates alpha^2 < min(mu_prev/mu_curr, mu_curr/mu_prev) over all
/// consecutive rank pairs of all subjects; reports the binding pair.
ConstraintReport check_constraints(const ClassParams& params, const PanelData& data);

/// Largest admissible alpha for the given coefficients over the panel's
/// consecutive-pair mean ratios.
double alpha_upper_bound(const Eigen::VectorXd& beta, const PanelData& data);

}  // namespace countmix
