#include "countmix/process.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace countmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require(bool cond, const char* msg) {
    if (!cond) throw std::domain_error(msg);
}

}  // namespace

void ClassParams::validate(int p) const {
    if (beta.size() != p) throw std::invalid_argument("ClassParams: beta length does not match design");
    if (!beta.allFinite()) throw std::invalid_argument("ClassParams: beta not finite");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("ClassParams: alpha outside [0,1)");
    if (!(gamma > 0.0)) throw std::invalid_argument("ClassParams: gamma must be > 0");
}

void SubjectRecord::validate(int p) const {
    const int ni = n();
    if (ni < 1) throw std::invalid_argument("subject '" + id + "': no observations");
    if (static_cast<int>(time.size()) != ni || x.rows() != ni)
        throw std::invalid_argument("subject '" + id + "': ragged record");
    if (x.cols() != p) throw std::invalid_argument("subject '" + id + "': covariate dimension mismatch");
    if (!(weight > 0.0)) throw std::invalid_argument("subject '" + id + "': nonpositive weight");
    for (int j = 0; j < ni; ++j) {
        if (y[j] < 0) throw std::invalid_argument("subject '" + id + "': negative count");
        if (j > 0 && !(time[j] > time[j - 1]))
            throw std::invalid_argument("subject '" + id + "': time codes not strictly increasing");
    }
}

int PanelData::total_obs() const {
    int t = 0;
    for (const auto& s : subjects) t += s.n();
    return t;
}

double PanelData::total_weight(bool use_weights) const {
    if (!use_weights) return static_cast<double>(subjects.size());
    double t = 0.0;
    for (const auto& s : subjects) t += s.weight;
    return t;
}

void PanelData::validate() const {
    if (subjects.empty()) throw std::invalid_argument("panel: no subjects");
    for (const auto& s : subjects) s.validate(p);
}

TrajectoryCurve mean_curve(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
    return (x * beta).array().exp();
}

double nb_logpmf_shape(int k, double shape, double gamma) {
    require(gamma > 0.0, "nb_logpmf: gamma must be > 0");
    if (k < 0) return kNegInf;
    if (shape <= 0.0) return k == 0 ? 0.0 : kNegInf;  // degenerate innovation
    const double log1pg = std::log1p(gamma);
    return std::lgamma(k + shape) - std::lgamma(shape) - std::lgamma(k + 1.0)
           - shape * log1pg + k * (std::log(gamma) - log1pg);
}

double nb_logpmf(int k, double mu, double gamma) {
    require(mu > 0.0, "nb_logpmf: mu must be > 0");
    require(gamma > 0.0, "nb_logpmf: gamma must be > 0");
    return nb_logpmf_shape(k, mu / gamma, gamma);
}

double betabin_logpmf(int k, int n, double a, double b) {
    if (n < 0 || k < 0 || k > n) throw std::domain_error("betabin_logpmf: k outside [0,n]");
    require(a >= 0.0 && b > 0.0, "betabin_logpmf: invalid shape parameters");
    if (a == 0.0) return k == 0 ? 0.0 : kNegInf;  // Beta(0,b) limit: all mass at 0
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)
           + std::lgamma(k + a) + std::lgamma(n - k + b) - std::lgamma(n + a + b)
           + std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
}

int nb_support_bound(double mu, double gamma, double tail_mass) {
    require(mu > 0.0 && gamma > 0.0, "nb_support_bound: invalid parameters");
    double cum = 0.0;
    const int hard_cap = 100000;
    for (int k = 0; k < hard_cap; ++k) {
        cum += std::exp(nb_logpmf(k, mu, gamma));
        if (1.0 - cum < tail_mass) return k;
    }
    return hard_cap;
}

double transition_logpmf(int y_curr, int y_prev, double mu_curr, double mu_prev,
                         const ClassParams& params) {
    require(mu_curr > 0.0 && mu_prev > 0.0, "transition_logpmf: means must be > 0");
    require(y_curr >= 0 && y_prev >= 0, "transition_logpmf: negative count");
    const double gamma = params.gamma;
    const double alpha = params.alpha;
    require(gamma > 0.0, "transition_logpmf: gamma must be > 0");
    if (alpha == 0.0) return nb_logpmf(y_curr, mu_curr, gamma);

    const double lambda = alpha * std::sqrt(mu_curr / mu_prev);
    const double innov_mean = mu_curr - lambda * mu_prev;
    if (!(lambda < 1.0) || !(innov_mean > 0.0))
        throw std::domain_error("transition_logpmf: alpha violates the mean-ratio constraint");

    const double a = lambda * mu_prev / gamma;          // thinning beta-binomial shapes
    const double b = (1.0 - lambda) * mu_prev / gamma;
    const double r = innov_mean / gamma;                // innovation NB shape
    const double log1pg = std::log1p(gamma);
    const double log_pk = std::log(gamma) - log1pg;

    // constants of the two component log-pmfs
    const double bb_const = std::lgamma(y_prev + 1.0) - std::lgamma(y_prev + a + b)
                            + std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    const double nb_const = -std::lgamma(r) - r * log1pg;

    const int kmax = std::min(y_curr, y_prev);
    double mx = kNegInf, acc = 0.0;
    for (int k = 0; k <= kmax; ++k) {
        const int yi = y_curr - k;  // innovation count
        const double t = bb_const - std::lgamma(k + 1.0) - std::lgamma(y_prev - k + 1.0)
                         + std::lgamma(k + a) + std::lgamma(y_prev - k + b)
                         + nb_const + std::lgamma(yi + r) - std::lgamma(yi + 1.0) + yi * log_pk;
        if (t <= mx) {
            acc += std::exp(t - mx);
        } else {
            acc = acc * std::exp(mx - t) + 1.0;
            mx = t;
        }
    }
    return mx + std::log(acc);
}

CondMoments conditional_moments(int y_prev, double mu_curr, double mu_prev,
                                const ClassParams& params) {
    require(mu_curr > 0.0 && mu_prev > 0.0, "conditional_moments: means must be > 0");
    require(y_prev >= 0, "conditional_moments: negative count");
    const double gamma = params.gamma;
    const double lambda = params.alpha * std::sqrt(mu_curr / mu_prev);
    const double innov_mean = mu_curr - lambda * mu_prev;
    if (params.alpha > 0.0 && (!(lambda < 1.0) || !(innov_mean > 0.0)))
        throw std::domain_error("conditional_moments: alpha violates the mean-ratio constraint");
    CondMoments m;
    m.mean = innov_mean + lambda * y_prev;
    const double eta_prev = mu_prev / gamma;
    m.var = innov_mean * (1.0 + gamma)
            + y_prev * lambda * (1.0 - lambda) * (eta_prev + y_prev) / (1.0 + eta_prev);
    return m;
}

double subject_loglik(const SubjectRecord& subject, const ClassParams& params) {
    const Eigen::VectorXd mu = mean_curve(subject.x, params.beta);
    double ll = nb_logpmf(subject.y[0], mu[0], params.gamma);
    for (int j = 1; j < subject.n(); ++j)
        ll += transition_logpmf(subject.y[j], subject.y[j - 1], mu[j], mu[j - 1], params);
    return ll;
}

SubjectRecord simulate_subject(const Eigen::MatrixXd& x, const std::vector<double>& times,
                               const ClassParams& params, Rng& rng) {
    const int n = static_cast<int>(times.size());
    if (n < 1 || x.rows() != n) throw std::invalid_argument("simulate_subject: bad design");
    const Eigen::VectorXd mu = mean_curve(x, params.beta);

    SubjectRecord s;
    s.time = times;
    s.x = x;
    s.y.resize(n);
    s.y[0] = draw_nb(rng, mu[0], params.gamma);
    for (int j = 1; j < n; ++j) {
        const double lambda = params.alpha * std::sqrt(mu[j] / mu[j - 1]);
        const double innov_mean = mu[j] - lambda * mu[j - 1];
        if (!(lambda < 1.0) || (params.alpha > 0.0 && !(innov_mean > 0.0)))
            throw std::domain_error("simulate_subject: alpha violates the mean-ratio constraint");
        int h = 0;
        if (s.y[j - 1] > 0 && lambda > 0.0) {
            const double q = draw_beta(rng, lambda * mu[j - 1] / params.gamma,
                                       (1.0 - lambda) * mu[j - 1] / params.gamma);
            h = draw_binomial(rng, s.y[j - 1], q);
        }
        const int innov = draw_nb(rng, innov_mean, params.gamma);
        s.y[j] = h + innov;
    }
    return s;
}

ConstraintReport check_constraints(const ClassParams& params, const PanelData& data) {
    ConstraintReport rep;
    double worst_log_ratio = 0.0;  // max |log(mu_j / mu_{j-1})|
    for (int i = 0; i < data.num_subjects(); ++i) {
        const auto& s = data.subjects[i];
        const Eigen::VectorXd eta = s.x * params.beta;
        for (int j = 1; j < s.n(); ++j) {
            const double d = std::abs(eta[j] - eta[j - 1]);
            if (d > worst_log_ratio) {
                worst_log_ratio = d;
                rep.subject_index = i;
                rep.pair_index = j;
                rep.ratio = std::exp(-d);  // min(mu ratio, inverse ratio)
            }
        }
    }
    rep.alpha_max = std::exp(-0.5 * worst_log_ratio);
    rep.ok = params.alpha * params.alpha < rep.ratio;
    if (!rep.ok) {
        std::ostringstream os;
        os << "alpha^2 = " << params.alpha * params.alpha << " >= mean-ratio bound " << rep.ratio
           << " at subject " << (rep.subject_index >= 0 ? data.subjects[rep.subject_index].id : "?")
           << ", rank pair (" << rep.pair_index << "," << rep.pair_index + 1 << ")";
        rep.detail = os.str();
    }
    return rep;
}

double alpha_upper_bound(const Eigen::VectorXd& beta, const PanelData& data) {
    double worst = 0.0;
    for (const auto& s : data.subjects) {
        const Eigen::VectorXd eta = s.x * beta;
        for (int j = 1; j < s.n(); ++j)
            worst = std::max(worst, std::abs(eta[j] - eta[j - 1]));
    }
    return std::exp(-0.5 * worst);
}

}  // namespace countmix
