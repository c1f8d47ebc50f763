#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "countmix/discrimination.hpp"
#include "countmix/em.hpp"
#include "countmix/process.hpp"

namespace countmix {

/// Four-class count AR(1) benchmark scenario: linear log-mean trajectories
/// on an equally spaced grid, shared autocorrelation and scale knobs.
struct InarScenario {
    std::string id;  // "I" or "II"
    double alpha = 0.1;
    double phi = 1.25;
    Eigen::Matrix<double, 4, 2> betas;  // rows: classes; cols: intercept, slope
    Eigen::Vector4d pi;
    std::vector<double> times;
};

InarScenario inar_scenario(const std::string& id, double alpha, double phi);
MixtureModel scenario_model(const InarScenario& sc);
Eigen::MatrixXd scenario_design(const InarScenario& sc);

/// INAR mixture truth over a shared design.
class InarTruth final : public GenerativeModel {
  public:
    InarTruth(MixtureModel model, Eigen::MatrixXd design, std::vector<double> times);
    explicit InarTruth(const InarScenario& sc);

    int num_classes() const override { return model_.num_classes(); }
    Eigen::VectorXd class_proportions() const override { return model_.pi; }
    std::pair<PanelData, std::vector<int>> simulate_panel(int m, std::uint64_t seed) const override;
    PosteriorMatrix oracle_posteriors(const PanelData& data) const override;
    std::vector<Eigen::VectorXd> mean_curves() const override;
    Eigen::MatrixXd fit_design() const override { return design_; }
    const MixtureModel& model() const { return model_; }

  private:
    MixtureModel model_;
    Eigen::MatrixXd design_;
    std::vector<double> times_;
};

struct PnClass {
    double beta0 = 0.0;
    double beta1 = 0.0;
    double sigma0_sq = 0.0;  // random-intercept variance component
    double sigma1_sq = 0.0;  // random-slope variance
    double pi = 0.0;
};

/// Poisson log-normal mixture setting: subject-level random intercept and
/// slope. The intercept variance is inflated and the intercept/slope
/// covariance set so the total log-scale variance sigma0^2 + sigma1^2 *
/// (t - effect_span/2)^2 is smallest mid-panel; effect_span is the panel
/// range t_T - t_1 in coded time.
struct PnScenario {
    int setting = 1;
    double effect_span = 1.0;
    std::vector<double> times;
    std::array<PnClass, 4> classes;

    Eigen::Matrix2d random_effect_cov(int c) const;
    /// Log of the marginal mean at time t (quadratic in t).
    double log_mean(int c, double t) const;
};

PnScenario pn_scenario(int setting);

/// Draws one subject: jointly normal (intercept, slope) effects, then
/// Poisson counts. Covariate rows are the quadratic fitting basis (1, t, t^2).
SubjectRecord simulate_pn_subject(const PnScenario& sc, int cls, Rng& rng);

/// Bayes posteriors under the Poisson-Normal law; class marginals computed
/// by tensor Gauss-Hermite quadrature after whitening the random-effect
/// covariance. A node-doubling self check guards the node count.
PosteriorMatrix pn_oracle_posteriors(const PnScenario& sc, const PanelData& data,
                                     int nodes = 20, bool self_check = true);

/// Marginal log-likelihood of one subject under one class (quadrature).
double pn_class_loglik(const PnScenario& sc, int cls, const SubjectRecord& subject, int nodes);

class PnTruth final : public GenerativeModel {
  public:
    explicit PnTruth(const PnScenario& sc, int nodes = 20, bool self_check = true);

    int num_classes() const override { return 4; }
    Eigen::VectorXd class_proportions() const override;
    std::pair<PanelData, std::vector<int>> simulate_panel(int m, std::uint64_t seed) const override;
    PosteriorMatrix oracle_posteriors(const PanelData& data) const override;
    std::vector<Eigen::VectorXd> mean_curves() const override;
    Eigen::MatrixXd fit_design() const override;
    const PnScenario& scenario() const { return sc_; }

  private:
    PnScenario sc_;
    int nodes_;
    bool self_check_;
};

/// Gauss-Hermite nodes/weights for weight function exp(-x^2).
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

struct ParamSummary {
    std::string name;
    double truth = 0.0;
    double mean_est = 0.0;
    double bias = 0.0;     // |mean estimate - truth|
    double emp_sd = 0.0;
    double mean_se = 0.0;
    double median_se = 0.0;
    double coverage = 0.0;  // 95% Wald interval hit rate
};

struct StudyReport {
    std::vector<ParamSummary> params;
    DiscriminationResult eed_apc;
    DiscriminationResult eed_pdi;
    int reps_done = 0;
    int reps_failed = 0;
    double runtime_sec = 0.0;
    std::uint64_t seed = 0;
};

struct BiasStudyOptions {
    int m = 2000;
    int reps = 50;
    std::uint64_t seed = 1;
    EmOptions fit;
    bool compute_eed = true;
};

/// Replicated simulate/fit/align study producing per-parameter bias, spread,
/// standard-error calibration and interval coverage, plus the realized
/// discrimination of the fitted posteriors.
StudyReport run_bias_coverage_study(const InarTruth& truth, const BiasStudyOptions& opts);

struct DiagnosticOptions {
    int reps = 1000;
    std::uint64_t seed = 1;
    int max_lag = 3;
};

struct DiagnosticCurves {
    Eigen::MatrixXd autocorr;   // C x max_lag, averaged over assignments
    Eigen::MatrixXd overdisp;   // C x n_max, weighted variance/mean per rank
    Eigen::MatrixXi reps_used;  // C x 1: replicates where the class was populated
};

/// Random-assignment model diagnostics: per replicate, assign each subject
/// to a class from its posterior row, then average weighted within-class
/// lag correlations and per-rank overdispersion across replicates.
DiagnosticCurves random_assignment_diagnostic(const MixtureModel& model, const PanelData& data,
                                              const DiagnosticOptions& opts = {});

}  // namespace countmix
