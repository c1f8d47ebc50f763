#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "countmix/estimating.hpp"
#include "countmix/process.hpp"

namespace countmix {

struct MixtureModel {
    std::vector<ClassParams> classes;
    Eigen::VectorXd pi;

    int num_classes() const { return static_cast<int>(classes.size()); }
    int p() const { return classes.empty() ? 0 : static_cast<int>(classes[0].beta.size()); }
    void validate() const;
};

/// m x C row-stochastic matrix of class-membership probabilities.
using PosteriorMatrix = Eigen::MatrixXd;

/// m x C matrix of per-subject within-class log-likelihoods.
Eigen::MatrixXd class_logliks(const MixtureModel& model, const PanelData& data);

PosteriorMatrix posterior_weights(const MixtureModel& model, const PanelData& data);
PosteriorMatrix posteriors_from_logliks(const Eigen::MatrixXd& logp, const Eigen::VectorXd& pi);

double mixture_loglik(const MixtureModel& model, const PanelData& data, bool use_weights = false);

/// -2 * weighted mixture log-likelihood + d * log(sum of weights),
/// d = (p+3)C - 1 free parameters.
double weighted_bic(const MixtureModel& model, const PanelData& data, bool use_weights = false);

/// Weighted sum of the per-subject stacked estimating functions
/// [vec(W_ic U_i(theta_c)), W_i1 - pi_1, ..., W_i,C-1 - pi_{C-1}].
Eigen::VectorXd stacked_g(const MixtureModel& model, const PanelData& data,
                          bool use_weights = false);

struct EmOptions {
    double tol = 1e-6;    // on max |G| / sum(weights)
    int max_iter = 500;
    int restarts = 20;
    std::uint64_t seed = 1;
    bool use_weights = false;
    bool compute_se = true;
    EeOptions inner;
    double pi_floor = 1e-8;
    int pi_floor_patience = 10;  // iterations at the floor before flagging collapse
    /// When set, the first restart runs from this model instead of the
    /// random initialization.
    std::optional<MixtureModel> start;
};

struct RestartInfo {
    std::uint64_t seed = 0;
    double loglik = 0.0;
    double criterion = 0.0;
    int iters = 0;
    bool converged = false;
    bool init_failed = false;
};

struct FitReport {
    MixtureModel model;
    Eigen::VectorXd se;          // empty when not computed
    Eigen::MatrixXd covariance;  // (p+3)C-1 square, class blocks then free proportions
    bool cov_pseudo_inverse = false;
    double loglik = 0.0;
    double bic = 0.0;
    double criterion = 0.0;
    int iters = 0;
    bool converged = false;
    std::vector<double> trace;  // per-iteration max|G|/sum(weights)
    std::vector<RestartInfo> restarts;
    std::vector<int> collapsed;       // classes pinned at the pi floor
    std::vector<int> alpha_boundary;  // classes whose alpha ended on a boundary
    double tol = 0.0;
};

/// Deviance-clustered initialization: per-subject Poisson fits as cluster
/// centers, hard assignment by deviance, per-cluster refits, then one
/// unweighted estimating-equation solve per cluster.
MixtureModel initialize(const PanelData& data, int C, Rng& rng);

/// Quasi-EM driver: posterior E-step, proportion update, per-class weighted
/// estimating-equation M-step, repeated to the stacked-G criterion; best of
/// `restarts` independent initializations by weighted log-likelihood.
FitReport em_fit(const PanelData& data, int C, const EmOptions& opts = {});

struct SandwichResult {
    Eigen::MatrixXd cov;
    Eigen::VectorXd se;
    bool used_pseudo_inverse = false;
};

/// Empirical sandwich covariance of the stacked-G root: numerical Jacobian
/// bread, outer-product meat.
SandwichResult sandwich_covariance(const MixtureModel& model, const PanelData& data,
                                   bool use_weights = false);

std::vector<Eigen::VectorXd> curves_on_design(const MixtureModel& model,
                                              const Eigen::MatrixXd& design);

struct AlignResult {
    MixtureModel model;
    std::vector<int> permutation;  // new class c comes from old class permutation[c]
};

/// Exhaustive label permutation minimizing the summed squared distance
/// between reference and fitted mean curves on a common design.
AlignResult align_labels(const MixtureModel& model, const Eigen::MatrixXd& design,
                         const std::vector<Eigen::VectorXd>& reference_curves);

/// Aligns a fit report in place: permutes classes, standard errors and the
/// covariance (the dropped-proportion block is remapped linearly).
std::vector<int> apply_alignment(FitReport& report, const Eigen::MatrixXd& design,
                                 const std::vector<Eigen::VectorXd>& reference_curves);

/// Free-parameter vector in report order: per-class (beta, alpha, gamma),
/// then pi_1..pi_{C-1}.
Eigen::VectorXd flatten_parameters(const MixtureModel& model);
std::vector<std::string> parameter_names(int p, int C);

}  // namespace countmix
