#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "countmix/em.hpp"
#include "countmix/process.hpp"

namespace countmix {

/// True labels (1..C) paired with any row-stochastic prediction matrix.
struct LabeledPredictions {
    std::vector<int> z;
    PosteriorMatrix a;
};

struct DiscriminationResult {
    std::string index_name;
    double value = 0.0;
    double mc_stderr = std::numeric_limits<double>::quiet_NaN();
    int reps_used = 0;
    int reps_failed = 0;
};

enum class Index { apc, pdi };
const char* index_name(Index ix);
Index parse_index(const std::string& name);

/// Two-class concordance with half credit for ties; labels must take the
/// values 1 and 2 and p1 holds the predicted probability of class 1.
double c_statistic(const std::vector<int>& z, const std::vector<double>& p1);

/// Average of all pairwise c-statistics. Each class pair is scored on the
/// subjects of the two classes only, once ranking by the raw column-k
/// probabilities and once by column j, and the two directions averaged.
double apc(const std::vector<int>& z, const PosteriorMatrix& posterior);

/// Polytomous discrimination index with exact 1/t tie credit, evaluated by
/// the per-class product-of-counts decomposition.
double pdi(const std::vector<int>& z, const PosteriorMatrix& posterior);

double apc(const LabeledPredictions& lp);
double pdi(const LabeledPredictions& lp);
double evaluate_index(Index ix, const std::vector<int>& z, const PosteriorMatrix& posterior);

/// A fully specified truth: can simulate labeled panels (carrying the
/// covariates the fitting step should use) and score any panel with the
/// oracle posterior under its own law.
class GenerativeModel {
  public:
    virtual ~GenerativeModel() = default;
    virtual int num_classes() const = 0;
    virtual Eigen::VectorXd class_proportions() const = 0;
    virtual std::pair<PanelData, std::vector<int>> simulate_panel(int m, std::uint64_t seed) const = 0;
    virtual PosteriorMatrix oracle_posteriors(const PanelData& data) const = 0;
    /// True mean curves on the common time grid, for label alignment.
    virtual std::vector<Eigen::VectorXd> mean_curves() const = 0;
    /// The common fitting design matrix matching mean_curves().
    virtual Eigen::MatrixXd fit_design() const = 0;
};

struct CsiOptions {
    int m_mc = 10000;
    int reps = 20;
    std::uint64_t seed = 1;
};

/// Oracle class-separation index: expected discrimination of the true-model
/// posteriors, approximated by large simulated panels.
DiscriminationResult csi_estimate(const GenerativeModel& truth, Index ix,
                                  const CsiOptions& opts = {});

/// Any pipeline mapping a simulated panel to a posterior matrix whose
/// columns are aligned with the truth's class labels.
using Procedure =
    std::function<PosteriorMatrix(const PanelData& data, const GenerativeModel& truth,
                                  std::uint64_t rep_seed)>;

struct EedOptions {
    int m = 2000;
    int reps = 25;
    std::uint64_t seed = 1;
};

/// Expected empirical discrimination of a procedure at sample size m.
DiscriminationResult eed_estimate(const GenerativeModel& truth, const Procedure& procedure,
                                  Index ix, const EedOptions& opts = {});

/// The oracle itself as a procedure (so EED(oracle) can be compared to CSI).
Procedure oracle_procedure();

/// Full model-fitting procedure: em_fit on the panel, labels aligned to the
/// truth's mean curves, posteriors from the aligned model.
Procedure em_fit_procedure(int C, const EmOptions& opts);

}  // namespace countmix
