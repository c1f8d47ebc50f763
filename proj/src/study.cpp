#include "countmix/study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace countmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> grid_times(int n, double denom) {
    std::vector<double> t(n);
    for (int j = 0; j < n; ++j) t[j] = (j + 1) / denom;
    return t;
}

Eigen::MatrixXd linear_design(const std::vector<double>& times) {
    Eigen::MatrixXd x(times.size(), 2);
    for (size_t j = 0; j < times.size(); ++j) {
        x(j, 0) = 1.0;
        x(j, 1) = times[j];
    }
    return x;
}

Eigen::MatrixXd quadratic_design(const std::vector<double>& times) {
    Eigen::MatrixXd x(times.size(), 3);
    for (size_t j = 0; j < times.size(); ++j) {
        x(j, 0) = 1.0;
        x(j, 1) = times[j];
        x(j, 2) = times[j] * times[j];
    }
    return x;
}

std::vector<int> draw_labels(const Eigen::VectorXd& pi, int m, Rng& rng) {
    std::vector<int> z(m);
    for (int i = 0; i < m; ++i) {
        const double u = draw_uniform(rng);
        double cum = 0.0;
        int cls = pi.size() - 1;
        for (int c = 0; c < pi.size(); ++c) {
            cum += pi[c];
            if (u < cum) {
                cls = c;
                break;
            }
        }
        z[i] = cls + 1;
    }
    return z;
}

}  // namespace

InarScenario inar_scenario(const std::string& id, double alpha, double phi) {
    InarScenario sc;
    sc.id = id;
    sc.alpha = alpha;
    sc.phi = phi;
    sc.pi << 0.50, 0.25, 0.15, 0.10;
    if (id == "I") {
        sc.betas << -0.4, -0.1,
                     1.5, -0.7,
                     0.0, 0.65,
                     1.4, 0.0;
        sc.times = grid_times(8, 4.0);
    } else if (id == "II") {
        sc.betas << -0.4, -0.1,
                     1.4, -1.0,
                     0.0, 0.9,
                     1.2, 0.0;
        sc.times = grid_times(5, 4.0);
    } else {
        throw std::invalid_argument("inar_scenario: id must be I or II");
    }
    return sc;
}

MixtureModel scenario_model(const InarScenario& sc) {
    if (!(sc.phi > 1.0)) throw std::invalid_argument("scenario_model: phi must exceed 1");
    MixtureModel model;
    model.pi = sc.pi;
    for (int c = 0; c < 4; ++c) {
        ClassParams cl;
        cl.beta = sc.betas.row(c).transpose();
        cl.alpha = sc.alpha;
        cl.gamma = sc.phi - 1.0;
        model.classes.push_back(cl);
    }
    model.validate();
    return model;
}

Eigen::MatrixXd scenario_design(const InarScenario& sc) { return linear_design(sc.times); }

InarTruth::InarTruth(MixtureModel model, Eigen::MatrixXd design, std::vector<double> times)
    : model_(std::move(model)), design_(std::move(design)), times_(std::move(times)) {
    model_.validate();
    if (design_.rows() != static_cast<Eigen::Index>(times_.size()))
        throw std::invalid_argument("InarTruth: design/time mismatch");
}

InarTruth::InarTruth(const InarScenario& sc)
    : InarTruth(scenario_model(sc), scenario_design(sc), sc.times) {}

std::pair<PanelData, std::vector<int>> InarTruth::simulate_panel(int m, std::uint64_t seed) const {
    PanelData panel;
    panel.p = static_cast<int>(design_.cols());
    Rng rng(seed);
    const std::vector<int> z = draw_labels(model_.pi, m, rng);
    panel.subjects.reserve(m);
    for (int i = 0; i < m; ++i) {
        SubjectRecord s = simulate_subject(design_, times_, model_.classes[z[i] - 1], rng);
        s.id = "s" + std::to_string(i + 1);
        panel.subjects.push_back(std::move(s));
    }
    return {std::move(panel), z};
}

PosteriorMatrix InarTruth::oracle_posteriors(const PanelData& data) const {
    return posterior_weights(model_, data);
}

std::vector<Eigen::VectorXd> InarTruth::mean_curves() const {
    return curves_on_design(model_, design_);
}

Eigen::Matrix2d PnScenario::random_effect_cov(int c) const {
    const auto& cl = classes[c];
    const double span = effect_span;
    Eigen::Matrix2d v;
    v(0, 0) = cl.sigma0_sq + span * span * cl.sigma1_sq / 4.0;
    v(1, 1) = cl.sigma1_sq;
    v(0, 1) = v(1, 0) = -span * cl.sigma1_sq / 2.0;
    return v;
}

double PnScenario::log_mean(int c, double t) const {
    const auto& cl = classes[c];
    const double span = effect_span;
    return cl.beta0 + cl.sigma0_sq / 2.0 + span * span * cl.sigma1_sq / 8.0
           + (cl.beta1 - span * cl.sigma1_sq / 2.0) * t + cl.sigma1_sq / 2.0 * t * t;
}

PnScenario pn_scenario(int setting) {
    PnScenario sc;
    sc.setting = setting;
    // effect_span below is the coded-time range t_T - t_1 of each grid
    switch (setting) {
        case 1:
            sc.times = grid_times(8, 9.0);
            sc.effect_span = 7.0 / 9.0;
            sc.classes = {{{-0.90, -0.35, 0.30, 0.125, 0.50},
                           {1.55, -2.10, 0.08, 0.05, 0.25},
                           {-0.40, 1.90, 0.10, 0.06, 0.15},
                           {1.40, -0.05, 0.06, 0.04, 0.10}}};
            break;
        case 2:
            sc.times = grid_times(5, 6.0);
            sc.effect_span = 4.0 / 6.0;
            sc.classes = {{{-0.90, -0.35, 0.40, 0.20, 0.50},
                           {1.55, -2.10, 0.15, 0.075, 0.25},
                           {-0.65, 2.00, 0.20, 0.075, 0.15},
                           {1.25, -0.05, 0.10, 0.04, 0.10}}};
            break;
        case 3:
            sc.times = grid_times(5, 6.0);
            sc.effect_span = 4.0 / 6.0;
            sc.classes = {{{-0.90, -0.35, 0.85, 0.50, 0.50},
                           {1.55, -2.10, 0.35, 0.25, 0.25},
                           {-0.65, 2.00, 0.60, 0.25, 0.15},
                           {1.25, -0.05, 0.35, 0.30, 0.10}}};
            break;
        case 4:
            sc.times = grid_times(5, 6.0);
            sc.effect_span = 4.0 / 6.0;
            sc.classes = {{{-0.90, -0.35, 1.50, 0.70, 0.50},
                           {1.30, -2.10, 1.00, 0.50, 0.25},
                           {-0.70, 1.75, 1.25, 0.55, 0.15},
                           {1.00, -0.05, 1.00, 0.45, 0.10}}};
            break;
        default:
            throw std::invalid_argument("pn_scenario: setting must be 1..4");
    }
    return sc;
}

SubjectRecord simulate_pn_subject(const PnScenario& sc, int cls, Rng& rng) {
    const Eigen::Matrix2d cov = sc.random_effect_cov(cls);
    const Eigen::LLT<Eigen::Matrix2d> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("simulate_pn_subject: covariance not positive definite");
    const Eigen::Matrix2d l = llt.matrixL();
    Eigen::Vector2d g;
    g << draw_normal(rng), draw_normal(rng);
    const Eigen::Vector2d a = l * g;

    SubjectRecord s;
    s.time = sc.times;
    s.x = quadratic_design(sc.times);
    s.y.resize(sc.times.size());
    const auto& cl = sc.classes[cls];
    for (size_t j = 0; j < sc.times.size(); ++j) {
        const double eta = cl.beta0 + cl.beta1 * sc.times[j] + a[0] + a[1] * sc.times[j];
        s.y[j] = draw_poisson(rng, std::exp(eta));
    }
    return s;
}

void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
    // Golub-Welsch on the Hermite Jacobi matrix (weight exp(-x^2))
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double b = std::sqrt(k / 2.0);
        j(k - 1, k) = b;
        j(k, k - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    nodes = es.eigenvalues();
    weights.resize(n);
    const double mu0 = std::sqrt(M_PI);  // integral of exp(-x^2)
    for (int k = 0; k < n; ++k) {
        const double v0 = es.eigenvectors()(0, k);
        weights[k] = mu0 * v0 * v0;
    }
}

namespace {

/// Mode and curvature of the integrand log Pois(y | eta(a)) + log N(a; 0, cov)
/// in the two random effects; the log-density is strictly concave so plain
/// Newton converges in a handful of steps.
struct IntegrandMode {
    Eigen::Vector2d mode;
    Eigen::Matrix2d hessian;  // negated: -d2 g / da2, positive definite
};

IntegrandMode find_mode(const PnClass& cl, const Eigen::Matrix2d& cov_inv,
                        const SubjectRecord& s) {
    Eigen::Vector2d a = Eigen::Vector2d::Zero();
    IntegrandMode out;
    for (int it = 0; it < 60; ++it) {
        Eigen::Vector2d grad = -cov_inv * a;
        Eigen::Matrix2d neg_hess = cov_inv;
        for (int j = 0; j < s.n(); ++j) {
            const double t = s.time[j];
            const double mu = std::exp(std::min(cl.beta0 + cl.beta1 * t + a[0] + a[1] * t, 300.0));
            const double r = s.y[j] - mu;
            grad[0] += r;
            grad[1] += r * t;
            neg_hess(0, 0) += mu;
            neg_hess(0, 1) += mu * t;
            neg_hess(1, 0) += mu * t;
            neg_hess(1, 1) += mu * t * t;
        }
        const Eigen::Vector2d step = neg_hess.ldlt().solve(grad);
        a += step;
        out.hessian = neg_hess;
        if (step.cwiseAbs().maxCoeff() < 1e-11) break;
    }
    out.mode = a;
    return out;
}

}  // namespace

double pn_class_loglik(const PnScenario& sc, int cls, const SubjectRecord& subject, int nodes) {
    const auto& cl = sc.classes[cls];
    const Eigen::Matrix2d cov = sc.random_effect_cov(cls);
    const Eigen::LLT<Eigen::Matrix2d> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("pn_class_loglik: covariance not positive definite");
    const Eigen::Matrix2d cov_inv = llt.solve(Eigen::Matrix2d::Identity());
    const double logdet_cov =
        2.0 * std::log(llt.matrixL()(0, 0)) + 2.0 * std::log(llt.matrixL()(1, 1));

    double lg = 0.0;
    for (int j = 0; j < subject.n(); ++j) lg += std::lgamma(subject.y[j] + 1.0);
    auto g = [&](const Eigen::Vector2d& a) {
        double acc = -0.5 * a.dot(cov_inv * a);
        for (int j = 0; j < subject.n(); ++j) {
            const double eta = cl.beta0 + cl.beta1 * subject.time[j] + a[0] + a[1] * subject.time[j];
            acc += subject.y[j] * eta - std::exp(std::min(eta, 300.0));
        }
        return acc;
    };

    // quadrature grid centered at the integrand mode and scaled by its
    // curvature, so dominated class/subject pairs stay accurate
    const IntegrandMode im = find_mode(cl, cov_inv, subject);
    const Eigen::LLT<Eigen::Matrix2d> hllt(im.hessian.inverse());
    const Eigen::Matrix2d l = hllt.matrixL();
    const double logdet_l = std::log(l(0, 0)) + std::log(l(1, 1));

    thread_local std::map<int, std::pair<Eigen::VectorXd, Eigen::VectorXd>> gh_cache;
    auto it = gh_cache.find(nodes);
    if (it == gh_cache.end()) {
        Eigen::VectorXd x, w;
        gauss_hermite(nodes, x, w);
        it = gh_cache.emplace(nodes, std::make_pair(x, w)).first;
    }
    const Eigen::VectorXd& gh_x = it->second.first;
    const Eigen::VectorXd& gh_w = it->second.second;
    const double sqrt2 = std::sqrt(2.0);
    double mx = -kInf, acc = 0.0;
    for (int i = 0; i < nodes; ++i) {
        for (int k = 0; k < nodes; ++k) {
            const Eigen::Vector2d z(gh_x[i], gh_x[k]);
            const Eigen::Vector2d a = im.mode + sqrt2 * (l * z);
            const double t = std::log(gh_w[i]) + std::log(gh_w[k]) + z.squaredNorm() + g(a);
            if (t <= mx) {
                acc += std::exp(t - mx);
            } else {
                acc = acc * std::exp(mx - t) + 1.0;
                mx = t;
            }
        }
    }
    const double log_integral = std::log(2.0) + logdet_l + mx + std::log(acc);
    return log_integral - std::log(2.0 * M_PI) - 0.5 * logdet_cov - lg;
}

PosteriorMatrix pn_oracle_posteriors(const PnScenario& sc, const PanelData& data, int nodes,
                                     bool self_check) {
    const int m = data.num_subjects();
    const int C = 4;
    Eigen::MatrixXd logp(m, C);
    for (int i = 0; i < m; ++i) {
        for (int c = 0; c < C; ++c) logp(i, c) = pn_class_loglik(sc, c, data.subjects[i], nodes);
    }

    if (self_check) {
        const int check_n = std::min(m, 20);
        for (int i = 0; i < check_n; ++i) {
            for (int c = 0; c < C; ++c) {
                const double dbl = pn_class_loglik(sc, c, data.subjects[i], 2 * nodes);
                if (std::abs(dbl - logp(i, c)) > 1e-5)
                    throw std::runtime_error(
                        "pn_oracle_posteriors: node-doubling check failed (subject " +
                        data.subjects[i].id + ", class " + std::to_string(c + 1) + ", delta " +
                        std::to_string(std::abs(dbl - logp(i, c))) + ")");
            }
        }
    }

    Eigen::VectorXd pi(C);
    for (int c = 0; c < C; ++c) pi[c] = sc.classes[c].pi;
    return posteriors_from_logliks(logp, pi);
}

PnTruth::PnTruth(const PnScenario& sc, int nodes, bool self_check)
    : sc_(sc), nodes_(nodes), self_check_(self_check) {}

Eigen::VectorXd PnTruth::class_proportions() const {
    Eigen::VectorXd pi(4);
    for (int c = 0; c < 4; ++c) pi[c] = sc_.classes[c].pi;
    return pi;
}

std::pair<PanelData, std::vector<int>> PnTruth::simulate_panel(int m, std::uint64_t seed) const {
    PanelData panel;
    panel.p = 3;
    Rng rng(seed);
    const std::vector<int> z = draw_labels(class_proportions(), m, rng);
    panel.subjects.reserve(m);
    for (int i = 0; i < m; ++i) {
        SubjectRecord s = simulate_pn_subject(sc_, z[i] - 1, rng);
        s.id = "s" + std::to_string(i + 1);
        panel.subjects.push_back(std::move(s));
    }
    return {std::move(panel), z};
}

PosteriorMatrix PnTruth::oracle_posteriors(const PanelData& data) const {
    return pn_oracle_posteriors(sc_, data, nodes_, self_check_);
}

std::vector<Eigen::VectorXd> PnTruth::mean_curves() const {
    std::vector<Eigen::VectorXd> curves;
    for (int c = 0; c < 4; ++c) {
        Eigen::VectorXd mu(sc_.times.size());
        for (size_t j = 0; j < sc_.times.size(); ++j)
            mu[j] = std::exp(sc_.log_mean(c, sc_.times[j]));
        curves.push_back(mu);
    }
    return curves;
}

Eigen::MatrixXd PnTruth::fit_design() const { return quadratic_design(sc_.times); }

StudyReport run_bias_coverage_study(const InarTruth& truth, const BiasStudyOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    const MixtureModel& tm = truth.model();
    const int C = tm.num_classes();
    const int p = tm.p();
    const int d = (p + 2) * C + C - 1;
    const Eigen::VectorXd true_params = flatten_parameters(tm);
    const std::vector<Eigen::VectorXd> refs = truth.mean_curves();

    StudyReport rep;
    rep.seed = opts.seed;
    std::vector<Eigen::VectorXd> ests, ses;
    std::vector<double> apc_vals, pdi_vals;

    for (int r = 0; r < opts.reps; ++r) {
        const std::uint64_t rep_seed = derive_seed(opts.seed, r);
        const auto [panel, labels] = truth.simulate_panel(opts.m, rep_seed);
        try {
            EmOptions fit_opts = opts.fit;
            fit_opts.seed = derive_seed(rep_seed, 1);
            fit_opts.compute_se = true;
            FitReport fit = em_fit(panel, C, fit_opts);
            if (!fit.converged) {
                ++rep.reps_failed;
                continue;
            }
            apply_alignment(fit, truth.fit_design(), refs);
            ests.push_back(flatten_parameters(fit.model));
            ses.push_back(fit.se);
            if (opts.compute_eed) {
                const PosteriorMatrix post = posterior_weights(fit.model, panel);
                apc_vals.push_back(apc(labels, post));
                pdi_vals.push_back(pdi(labels, post));
            }
        } catch (const std::exception&) {
            ++rep.reps_failed;
        }
    }
    rep.reps_done = static_cast<int>(ests.size());
    if (ests.empty()) throw std::runtime_error("run_bias_coverage_study: all replicates failed");

    const std::vector<std::string> names = parameter_names(p, C);
    for (int k = 0; k < d; ++k) {
        ParamSummary ps;
        ps.name = names[k];
        ps.truth = true_params[k];
        double mean = 0.0;
        for (const auto& e : ests) mean += e[k];
        mean /= ests.size();
        ps.mean_est = mean;
        ps.bias = std::abs(mean - true_params[k]);
        double ss = 0.0;
        for (const auto& e : ests) ss += (e[k] - mean) * (e[k] - mean);
        ps.emp_sd = ests.size() > 1 ? std::sqrt(ss / (ests.size() - 1.0)) : 0.0;
        std::vector<double> se_k;
        double hits = 0.0, se_sum = 0.0;
        for (size_t r = 0; r < ests.size(); ++r) {
            const double se = ses[r][k];
            se_k.push_back(se);
            se_sum += se;
            if (std::abs(ests[r][k] - true_params[k]) <= 1.959963984540054 * se) hits += 1.0;
        }
        ps.mean_se = se_sum / ests.size();
        std::sort(se_k.begin(), se_k.end());
        ps.median_se = se_k[se_k.size() / 2];
        ps.coverage = hits / ests.size();
        rep.params.push_back(ps);
    }

    auto summarize_vals = [](const char* name, const std::vector<double>& vals) {
        DiscriminationResult dr;
        dr.index_name = name;
        dr.reps_used = static_cast<int>(vals.size());
        if (vals.empty()) return dr;
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= vals.size();
        dr.value = mean;
        if (vals.size() > 1) {
            double ss = 0.0;
            for (double v : vals) ss += (v - mean) * (v - mean);
            dr.mc_stderr = std::sqrt(ss / (vals.size() - 1.0) / vals.size());
        }
        return dr;
    };
    rep.eed_apc = summarize_vals("eed_apc", apc_vals);
    rep.eed_pdi = summarize_vals("eed_pdi", pdi_vals);
    rep.runtime_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

DiagnosticCurves random_assignment_diagnostic(const MixtureModel& model, const PanelData& data,
                                              const DiagnosticOptions& opts) {
    model.validate();
    data.validate();
    const int m = data.num_subjects();
    const int C = model.num_classes();
    int n_max = 0;
    for (const auto& s : data.subjects) n_max = std::max(n_max, s.n());
    const int max_lag = std::min(opts.max_lag, n_max - 1);
    if (max_lag < 1) throw std::invalid_argument("random_assignment_diagnostic: need >= 2 ranks");

    const PosteriorMatrix w = posterior_weights(model, data);
    Rng rng(opts.seed);

    DiagnosticCurves out;
    out.autocorr = Eigen::MatrixXd::Zero(C, max_lag);
    out.overdisp = Eigen::MatrixXd::Zero(C, n_max);
    out.reps_used = Eigen::MatrixXi::Zero(C, 1);
    Eigen::MatrixXd ac_count = Eigen::MatrixXd::Zero(C, max_lag);
    Eigen::MatrixXd od_count = Eigen::MatrixXd::Zero(C, n_max);

    std::vector<int> assign(m);
    for (int r = 0; r < opts.reps; ++r) {
        for (int i = 0; i < m; ++i) {
            const double u = draw_uniform(rng);
            double cum = 0.0;
            int cls = C - 1;
            for (int c = 0; c < C; ++c) {
                cum += w(i, c);
                if (u < cum) {
                    cls = c;
                    break;
                }
            }
            assign[i] = cls;
        }
        for (int c = 0; c < C; ++c) {
            bool populated = false;
            // lagged pairs pooled across start ranks
            for (int lag = 1; lag <= max_lag; ++lag) {
                double sw = 0, su = 0, sv = 0, suu = 0, svv = 0, suv = 0;
                for (int i = 0; i < m; ++i) {
                    if (assign[i] != c) continue;
                    populated = true;
                    const auto& s = data.subjects[i];
                    for (int j = 0; j + lag < s.n(); ++j) {
                        const double u1 = s.y[j], u2 = s.y[j + lag];
                        sw += s.weight;
                        su += s.weight * u1;
                        sv += s.weight * u2;
                        suu += s.weight * u1 * u1;
                        svv += s.weight * u2 * u2;
                        suv += s.weight * u1 * u2;
                    }
                }
                if (sw > 0) {
                    const double vu = suu - su * su / sw;
                    const double vv = svv - sv * sv / sw;
                    const double cuv = suv - su * sv / sw;
                    if (vu > 0 && vv > 0) {
                        out.autocorr(c, lag - 1) += cuv / std::sqrt(vu * vv);
                        ac_count(c, lag - 1) += 1.0;
                    }
                }
            }
            // per-rank overdispersion: unbiased weighted variance over mean
            for (int j = 0; j < n_max; ++j) {
                double sw = 0, sw2 = 0, sy = 0, syy = 0;
                for (int i = 0; i < m; ++i) {
                    if (assign[i] != c) continue;
                    const auto& s = data.subjects[i];
                    if (j >= s.n()) continue;
                    sw += s.weight;
                    sw2 += s.weight * s.weight;
                    sy += s.weight * s.y[j];
                    syy += s.weight * s.y[j] * s.y[j];
                }
                const double denom = sw - sw2 / (sw > 0 ? sw : 1.0);
                if (sw > 0 && denom > 0 && sy > 0) {
                    const double mean = sy / sw;
                    const double var = (syy - sw * mean * mean) / denom;
                    out.overdisp(c, j) += var / mean;
                    od_count(c, j) += 1.0;
                }
            }
            if (populated) out.reps_used(c, 0) += 1;
        }
    }
    for (int c = 0; c < C; ++c) {
        for (int l = 0; l < max_lag; ++l)
            out.autocorr(c, l) = ac_count(c, l) > 0 ? out.autocorr(c, l) / ac_count(c, l)
                                                    : std::numeric_limits<double>::quiet_NaN();
        for (int j = 0; j < n_max; ++j)
            out.overdisp(c, j) = od_count(c, j) > 0 ? out.overdisp(c, j) / od_count(c, j)
                                                    : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

}  // namespace countmix
