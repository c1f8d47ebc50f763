#include "countmix/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace countmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> subject_weights(const PanelData& data, bool use_weights) {
    std::vector<double> v(data.subjects.size(), 1.0);
    if (use_weights)
        for (size_t i = 0; i < v.size(); ++i) v[i] = data.subjects[i].weight;
    return v;
}

double row_logsumexp(const Eigen::VectorXd& x) {
    const double mx = x.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((x.array() - mx).exp().sum());
}

class ClassAr1Cache {
  public:
    explicit ClassAr1Cache(const MixtureModel& model) {
        for (const auto& cl : model.classes) alphas_.push_back(cl.alpha);
        maps_.resize(model.num_classes());
    }
    const Ar1Workspace& get(int c, int n) {
        auto& m = maps_[c];
        auto it = m.find(n);
        if (it == m.end()) it = m.emplace(n, Ar1Workspace(alphas_[c], n)).first;
        return it->second;
    }

  private:
    std::vector<double> alphas_;
    std::vector<std::map<int, Ar1Workspace>> maps_;
};

}  // namespace

void MixtureModel::validate() const {
    if (classes.empty()) throw std::invalid_argument("MixtureModel: no classes");
    if (pi.size() != num_classes()) throw std::invalid_argument("MixtureModel: pi length mismatch");
    const int pp = p();
    double s = 0.0;
    for (int c = 0; c < num_classes(); ++c) {
        classes[c].validate(pp);
        if (!(pi[c] > 0.0)) throw std::invalid_argument("MixtureModel: nonpositive mixture proportion");
        s += pi[c];
    }
    if (std::abs(s - 1.0) > 1e-8) throw std::invalid_argument("MixtureModel: proportions do not sum to 1");
}

namespace {

/// Memoized per-class log-likelihood over a shared design: one lazily filled
/// table per consecutive rank pair, indexed by the count pair.
class SharedDesignLoglik {
  public:
    SharedDesignLoglik(const ClassParams& params, const Eigen::MatrixXd& x, int y_max)
        : params_(params),
          mu_(mean_curve(x, params.beta)),
          n_(static_cast<int>(x.rows())),
          cap_(y_max + 1),
          first_(cap_, kUnset),
          table_(static_cast<size_t>(std::max(0, n_ - 1)) * cap_ * cap_, kUnset) {}

    double loglik(const SubjectRecord& s) {
        double ll = first(s.y[0]);
        for (int j = 1; j < n_; ++j) ll += transition(j, s.y[j - 1], s.y[j]);
        return ll;
    }

  private:
    static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

    double first(int y) {
        double& slot = first_[y];
        if (std::isnan(slot)) slot = nb_logpmf(y, mu_[0], params_.gamma);
        return slot;
    }
    double transition(int j, int y_prev, int y_curr) {
        double& slot = table_[(static_cast<size_t>(j - 1) * cap_ + y_prev) * cap_ + y_curr];
        if (std::isnan(slot))
            slot = transition_logpmf(y_curr, y_prev, mu_[j], mu_[j - 1], params_);
        return slot;
    }

    ClassParams params_;
    Eigen::VectorXd mu_;
    int n_;
    int cap_;
    std::vector<double> first_;
    std::vector<double> table_;
};

bool design_is_shared(const PanelData& data) {
    const auto& x0 = data.subjects.front().x;
    for (const auto& s : data.subjects) {
        if (s.x.rows() != x0.rows()) return false;
        if (&s.x != &x0 && s.x != x0) return false;
    }
    return true;
}

}  // namespace

Eigen::MatrixXd class_logliks(const MixtureModel& model, const PanelData& data) {
    const int m = data.num_subjects();
    const int C = model.num_classes();
    Eigen::MatrixXd logp(m, C);
    if (m > 50 && design_is_shared(data)) {
        int y_max = 0;
        for (const auto& s : data.subjects)
            for (const int y : s.y) y_max = std::max(y_max, y);
        for (int c = 0; c < C; ++c) {
            SharedDesignLoglik cached(model.classes[c], data.subjects.front().x, y_max);
            for (int i = 0; i < m; ++i) logp(i, c) = cached.loglik(data.subjects[i]);
        }
        return logp;
    }
    for (int i = 0; i < m; ++i)
        for (int c = 0; c < C; ++c)
            logp(i, c) = subject_loglik(data.subjects[i], model.classes[c]);
    return logp;
}

PosteriorMatrix posteriors_from_logliks(const Eigen::MatrixXd& logp, const Eigen::VectorXd& pi) {
    const int m = static_cast<int>(logp.rows());
    const int C = static_cast<int>(logp.cols());
    PosteriorMatrix w(m, C);
    const Eigen::VectorXd logpi = pi.array().log();
    for (int i = 0; i < m; ++i) {
        Eigen::VectorXd row = logp.row(i).transpose() + logpi;
        const double lse = row_logsumexp(row);
        for (int c = 0; c < C; ++c) w(i, c) = std::exp(row[c] - lse);
    }
    return w;
}

PosteriorMatrix posterior_weights(const MixtureModel& model, const PanelData& data) {
    model.validate();
    return posteriors_from_logliks(class_logliks(model, data), model.pi);
}

double mixture_loglik(const MixtureModel& model, const PanelData& data, bool use_weights) {
    const Eigen::MatrixXd logp = class_logliks(model, data);
    const Eigen::VectorXd logpi = model.pi.array().log();
    double ll = 0.0;
    for (int i = 0; i < data.num_subjects(); ++i) {
        const double v = use_weights ? data.subjects[i].weight : 1.0;
        ll += v * row_logsumexp(logp.row(i).transpose() + logpi);
    }
    return ll;
}

double weighted_bic(const MixtureModel& model, const PanelData& data, bool use_weights) {
    const int d = (data.p + 3) * model.num_classes() - 1;
    return -2.0 * mixture_loglik(model, data, use_weights)
           + d * std::log(data.total_weight(use_weights));
}

namespace {

/// G accumulated from precomputed per-subject logliks; U evaluated at the
/// model's parameters.
Eigen::VectorXd stacked_g_impl(const MixtureModel& model, const PanelData& data,
                               const Eigen::MatrixXd& logp, const std::vector<double>& v) {
    const int m = data.num_subjects();
    const int C = model.num_classes();
    const int p = data.p;
    const int d = (p + 2) * C + C - 1;
    const PosteriorMatrix w = posteriors_from_logliks(logp, model.pi);
    ClassAr1Cache cache(model);

    Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < m; ++i) {
        const auto& s = data.subjects[i];
        for (int c = 0; c < C; ++c) {
            g.segment(c * (p + 2), p + 2).noalias() +=
                v[i] * w(i, c) * score_u(s, model.classes[c], cache.get(c, s.n()));
        }
        for (int c = 0; c + 1 < C; ++c) g[(p + 2) * C + c] += v[i] * (w(i, c) - model.pi[c]);
    }
    return g;
}

}  // namespace

Eigen::VectorXd stacked_g(const MixtureModel& model, const PanelData& data, bool use_weights) {
    model.validate();
    return stacked_g_impl(model, data, class_logliks(model, data),
                          subject_weights(data, use_weights));
}

MixtureModel initialize(const PanelData& data, int C, Rng& rng) {
    const int m = data.num_subjects();
    const int p = data.p;
    if (C < 1) throw std::invalid_argument("initialize: C must be >= 1");

    // subjects eligible as cluster centers: enough observations for a
    // full-rank per-subject fit
    std::vector<int> eligible;
    for (int i = 0; i < m; ++i) {
        const auto& s = data.subjects[i];
        if (s.n() < p) continue;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(s.x);
        if (qr.rank() == p) eligible.push_back(i);
    }
    if (static_cast<int>(eligible.size()) < C)
        throw std::invalid_argument("initialize: fewer than C subjects can anchor a cluster");

    auto pearson_gamma = [&](const std::vector<int>& members, const Eigen::VectorXd& beta) {
        double q = 0.0, nn = 0.0;
        for (int i : members) {
            const auto& s = data.subjects[i];
            const Eigen::VectorXd mu = mean_curve(s.x, beta);
            for (int j = 0; j < s.n(); ++j)
                q += (s.y[j] - mu[j]) * (s.y[j] - mu[j]) / mu[j];
            nn += s.n();
        }
        return std::max(q / nn - 1.0, 1e-3);
    };

    const int max_attempts = 50;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        // step 1: centers from per-subject Poisson fits
        std::vector<int> centers;
        {
            std::vector<int> pool = eligible;
            for (int c = 0; c < C; ++c) {
                std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
                const size_t k = pick(rng);
                centers.push_back(pool[k]);
                pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
            }
        }
        std::vector<Eigen::VectorXd> betas(C);
        bool center_ok = true;
        for (int c = 0; c < C; ++c) {
            try {
                betas[c] = poisson_irls(data, {centers[c]}).beta;
            } catch (const std::exception&) {
                center_ok = false;
                break;
            }
        }
        if (!center_ok) continue;

        // steps 2-4: deviance assignment and per-cluster refits, three rounds
        std::vector<std::vector<int>> clusters;
        bool rounds_ok = true;
        for (int round = 0; round < 3 && rounds_ok; ++round) {
            clusters.assign(C, {});
            for (int i = 0; i < m; ++i) {
                int best = 0;
                double best_dev = kInf;
                for (int c = 0; c < C; ++c) {
                    const double dev = poisson_deviance(data.subjects[i], betas[c]);
                    if (dev < best_dev) {
                        best_dev = dev;
                        best = c;
                    }
                }
                clusters[best].push_back(i);
            }
            for (int c = 0; c < C; ++c) {
                if (clusters[c].empty()) {
                    rounds_ok = false;
                    break;
                }
                try {
                    betas[c] = poisson_irls(data, clusters[c]).beta;
                } catch (const std::exception&) {
                    rounds_ok = false;
                    break;
                }
            }
        }
        if (!rounds_ok) continue;

        // step 5: proportions from hard shares; per-cluster EE solve
        MixtureModel model;
        model.pi.resize(C);
        bool solved = true;
        for (int c = 0; c < C; ++c) {
            model.pi[c] = static_cast<double>(clusters[c].size()) / m;
            ClassParams init;
            init.beta = betas[c];
            init.alpha = 0.0;
            init.gamma = pearson_gamma(clusters[c], betas[c]);
            std::vector<double> w(m, 0.0);
            for (int i : clusters[c]) w[i] = 1.0;
            try {
                const EeResult res = solve_weighted_ee(data, w, init);
                model.classes.push_back(res.params);
            } catch (const std::exception&) {
                solved = false;
                break;
            }
        }
        if (!solved) continue;
        model.validate();
        return model;
    }
    throw std::runtime_error("initialize: could not build a valid starting model");
}

namespace {

struct EmRun {
    MixtureModel model;
    std::vector<double> trace;
    int iters = 0;
    bool converged = false;
    double criterion = kInf;
    double loglik = -kInf;
    std::vector<int> collapsed;
    std::vector<char> pinned_low, pinned_high;
};

EmRun run_em(const PanelData& data, const MixtureModel& start, const EmOptions& opts) {
    const int m = data.num_subjects();
    const int C = start.num_classes();
    const std::vector<double> v = subject_weights(data, opts.use_weights);
    const double sv = std::accumulate(v.begin(), v.end(), 0.0);

    EmRun run;
    run.model = start;
    run.pinned_low.assign(C, 0);
    run.pinned_high.assign(C, 0);
    std::vector<int> floor_streak(C, 0);

    Eigen::MatrixXd logp = class_logliks(run.model, data);
    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        const PosteriorMatrix w = posteriors_from_logliks(logp, run.model.pi);

        // proportion update on the weighted posterior averages, floored to
        // keep the E-step finite
        Eigen::VectorXd pi_new = Eigen::VectorXd::Zero(C);
        for (int i = 0; i < m; ++i) pi_new += v[i] * w.row(i).transpose();
        pi_new /= sv;
        for (int c = 0; c < C; ++c) {
            if (pi_new[c] < opts.pi_floor) {
                pi_new[c] = opts.pi_floor;
                ++floor_streak[c];
                if (floor_streak[c] == opts.pi_floor_patience &&
                    std::find(run.collapsed.begin(), run.collapsed.end(), c) ==
                        run.collapsed.end())
                    run.collapsed.push_back(c);
            } else {
                floor_streak[c] = 0;
            }
        }
        pi_new /= pi_new.sum();

        // M-step: one weighted EE solve per class
        for (int c = 0; c < C; ++c) {
            std::vector<double> wc(m);
            for (int i = 0; i < m; ++i) wc[i] = v[i] * w(i, c);
            const EeResult res = solve_weighted_ee(data, wc, run.model.classes[c], opts.inner);
            if (!res.frozen) run.model.classes[c] = res.params;
            run.pinned_low[c] = res.alpha_pinned_low;
            run.pinned_high[c] = res.alpha_pinned_high;
        }
        run.model.pi = pi_new;

        logp = class_logliks(run.model, data);
        const Eigen::VectorXd g = stacked_g_impl(run.model, data, logp, v);
        Eigen::VectorXd scored = g.cwiseAbs();
        const int p = data.p;
        for (int c = 0; c < C; ++c)
            scored[c * (p + 2) + p] =
                masked_alpha_component(g[c * (p + 2) + p], run.pinned_low[c], run.pinned_high[c]);
        run.criterion = scored.maxCoeff() / sv;
        run.trace.push_back(run.criterion);
        run.iters = iter;
        if (run.criterion <= opts.tol) {
            run.converged = true;
            break;
        }
    }

    const Eigen::VectorXd logpi = run.model.pi.array().log();
    run.loglik = 0.0;
    for (int i = 0; i < m; ++i)
        run.loglik += v[i] * row_logsumexp(logp.row(i).transpose() + logpi);
    return run;
}

}  // namespace

FitReport em_fit(const PanelData& data, int C, const EmOptions& opts) {
    data.validate();
    if (C < 1) throw std::invalid_argument("em_fit: C must be >= 1");
    if (opts.restarts < 1) throw std::invalid_argument("em_fit: need at least one restart");

    FitReport report;
    report.tol = opts.tol;
    bool have_best = false;
    EmRun best;

    for (int r = 0; r < opts.restarts; ++r) {
        RestartInfo info;
        info.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(r));
        Rng rng(info.seed);
        try {
            if (opts.start) opts.start->validate();
            const MixtureModel start =
                (r == 0 && opts.start) ? *opts.start : initialize(data, C, rng);
            const EmRun run = run_em(data, start, opts);
            info.loglik = run.loglik;
            info.criterion = run.criterion;
            info.iters = run.iters;
            info.converged = run.converged;
            if (!have_best || run.loglik > best.loglik) {
                best = run;
                have_best = true;
            }
        } catch (const std::exception&) {
            info.init_failed = true;
        }
        report.restarts.push_back(info);
    }
    if (!have_best) throw std::runtime_error("em_fit: every restart failed to produce a fit");

    report.model = best.model;
    report.trace = best.trace;
    report.iters = best.iters;
    report.criterion = best.criterion;
    report.converged = best.converged;
    report.collapsed = best.collapsed;
    for (int c = 0; c < C; ++c)
        if (best.pinned_low[c] || best.pinned_high[c]) report.alpha_boundary.push_back(c);
    report.loglik = best.loglik;
    report.bic = weighted_bic(best.model, data, opts.use_weights);
    if (opts.compute_se) {
        const SandwichResult sw = sandwich_covariance(best.model, data, opts.use_weights);
        report.covariance = sw.cov;
        report.se = sw.se;
        report.cov_pseudo_inverse = sw.used_pseudo_inverse;
    }
    return report;
}

namespace {

/// Per-subject ingredients for G, cached so a single-parameter perturbation
/// only re-evaluates the touched class.
struct SubjectEval {
    Eigen::VectorXd logp;           // C
    std::vector<Eigen::VectorXd> u; // C blocks of length p+2
};

Eigen::VectorXd assemble_g(const SubjectEval& ev, const Eigen::VectorXd& pi, int p, int C) {
    Eigen::VectorXd row = ev.logp + pi.array().log().matrix();
    const double lse = row_logsumexp(row);
    Eigen::VectorXd g((p + 2) * C + C - 1);
    for (int c = 0; c < C; ++c) {
        const double w = std::exp(row[c] - lse);
        g.segment(c * (p + 2), p + 2) = w * ev.u[c];
        if (c + 1 < C) g[(p + 2) * C + c] = w - pi[c];
    }
    return g;
}

}  // namespace

SandwichResult sandwich_covariance(const MixtureModel& model, const PanelData& data,
                                   bool use_weights) {
    model.validate();
    const int m = data.num_subjects();
    const int C = model.num_classes();
    const int p = data.p;
    const int d = (p + 2) * C + C - 1;
    const std::vector<double> v = subject_weights(data, use_weights);

    // admissible alpha range per class for boundary-aware differencing
    std::vector<double> alpha_hi(C);
    for (int c = 0; c < C; ++c)
        alpha_hi[c] = std::min(alpha_upper_bound(model.classes[c].beta, data) - 1e-9, 0.999);

    struct Step {
        double h = 0.0;
        bool central = true;
        bool forward = true;  // used when one-sided
    };
    auto theta_step = [&](int c, int k) {
        Step st;
        const auto& cl = model.classes[c];
        if (k < p) {
            st.h = 1e-5 * std::max(std::abs(cl.beta[k]), 1.0);
        } else if (k == p) {
            st.h = 1e-5 * std::max(cl.alpha, 1.0);
            if (cl.alpha - st.h < 0.0) {
                st.central = false;
                st.forward = true;
            } else if (cl.alpha + st.h > alpha_hi[c]) {
                st.central = false;
                st.forward = false;
            }
        } else {
            st.h = 1e-5 * std::max(cl.gamma, 1.0);
            if (cl.gamma - st.h <= 0.0) {
                st.central = false;
                st.forward = true;
            }
        }
        return st;
    };
    auto perturb_class = [&](int c, int k, double delta) {
        ClassParams cl = model.classes[c];
        if (k < p)
            cl.beta[k] += delta;
        else if (k == p)
            cl.alpha += delta;
        else
            cl.gamma += delta;
        return cl;
    };

    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(d, d);
    ClassAr1Cache cache(model);

    for (int i = 0; i < m; ++i) {
        const auto& s = data.subjects[i];
        SubjectEval base;
        base.logp.resize(C);
        base.u.resize(C);
        for (int c = 0; c < C; ++c) {
            base.logp[c] = subject_loglik(s, model.classes[c]);
            base.u[c] = score_u(s, model.classes[c], cache.get(c, s.n()));
        }
        const Eigen::VectorXd g0 = assemble_g(base, model.pi, p, C);
        meat.noalias() += (v[i] * v[i]) * g0 * g0.transpose();

        // theta-block columns
        for (int c = 0; c < C; ++c) {
            for (int k = 0; k < p + 2; ++k) {
                const Step st = theta_step(c, k);
                auto eval_at = [&](double delta) {
                    SubjectEval ev = base;
                    const ClassParams cl = perturb_class(c, k, delta);
                    ev.logp[c] = subject_loglik(s, cl);
                    ev.u[c] = score_u(s, cl);
                    return assemble_g(ev, model.pi, p, C);
                };
                Eigen::VectorXd col;
                if (st.central)
                    col = (eval_at(st.h) - eval_at(-st.h)) / (2.0 * st.h);
                else if (st.forward)
                    col = (eval_at(st.h) - g0) / st.h;
                else
                    col = (g0 - eval_at(-st.h)) / st.h;
                bread.col(c * (p + 2) + k) += v[i] * col;
            }
        }
        // free-proportion columns (the last proportion absorbs the shift)
        for (int c = 0; c + 1 < C; ++c) {
            const double h = std::min({1e-5, model.pi[c] / 2.0, model.pi[C - 1] / 2.0});
            auto eval_pi = [&](double delta) {
                Eigen::VectorXd pi = model.pi;
                pi[c] += delta;
                pi[C - 1] -= delta;
                return assemble_g(base, pi, p, C);
            };
            bread.col((p + 2) * C + c) += v[i] * (eval_pi(h) - eval_pi(-h)) / (2.0 * h);
        }
    }

    SandwichResult out;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(bread);
    Eigen::MatrixXd bread_inv;
    if (lu.isInvertible()) {
        bread_inv = lu.inverse();
    } else {
        out.used_pseudo_inverse = true;
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(bread);
        bread_inv = cod.pseudoInverse();
    }
    out.cov = bread_inv * meat * bread_inv.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose());  // symmetrize
    out.se = out.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

std::vector<Eigen::VectorXd> curves_on_design(const MixtureModel& model,
                                              const Eigen::MatrixXd& design) {
    std::vector<Eigen::VectorXd> curves;
    curves.reserve(model.num_classes());
    for (const auto& cl : model.classes) curves.push_back(mean_curve(design, cl.beta));
    return curves;
}

AlignResult align_labels(const MixtureModel& model, const Eigen::MatrixXd& design,
                         const std::vector<Eigen::VectorXd>& reference_curves) {
    const int C = model.num_classes();
    if (static_cast<int>(reference_curves.size()) != C)
        throw std::invalid_argument("align_labels: reference size mismatch");
    if (C > 8) throw std::invalid_argument("align_labels: exhaustive search capped at 8 classes");

    const std::vector<Eigen::VectorXd> fitted = curves_on_design(model, design);
    std::vector<int> perm(C), best_perm(C);
    std::iota(perm.begin(), perm.end(), 0);
    best_perm = perm;
    double best_cost = kInf;
    do {
        double cost = 0.0;
        for (int c = 0; c < C; ++c) cost += (reference_curves[c] - fitted[perm[c]]).squaredNorm();
        if (cost < best_cost) {
            best_cost = cost;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    AlignResult out;
    out.permutation = best_perm;
    out.model.pi.resize(C);
    for (int c = 0; c < C; ++c) {
        out.model.classes.push_back(model.classes[best_perm[c]]);
        out.model.pi[c] = model.pi[best_perm[c]];
    }
    return out;
}

std::vector<int> apply_alignment(FitReport& report, const Eigen::MatrixXd& design,
                                 const std::vector<Eigen::VectorXd>& reference_curves) {
    const int C = report.model.num_classes();
    const int p = report.model.p();
    const int d = (p + 2) * C + C - 1;
    AlignResult aligned = align_labels(report.model, design, reference_curves);
    const std::vector<int>& perm = aligned.permutation;
    report.model = aligned.model;

    for (auto& c : report.collapsed) {
        for (int nc = 0; nc < C; ++nc)
            if (perm[nc] == c) {
                c = nc;
                break;
            }
    }

    if (report.covariance.size() > 0) {
        // linear map from old free parameters to permuted ones
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(d, d);
        for (int c = 0; c < C; ++c)
            for (int k = 0; k < p + 2; ++k) t(c * (p + 2) + k, perm[c] * (p + 2) + k) = 1.0;
        for (int c = 0; c + 1 < C; ++c) {
            const int src = perm[c];
            if (src < C - 1) {
                t((p + 2) * C + c, (p + 2) * C + src) = 1.0;
            } else {
                for (int j = 0; j + 1 < C; ++j) t((p + 2) * C + c, (p + 2) * C + j) = -1.0;
            }
        }
        report.covariance = t * report.covariance * t.transpose();
        report.se = report.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    }
    return perm;
}

Eigen::VectorXd flatten_parameters(const MixtureModel& model) {
    const int C = model.num_classes();
    const int p = model.p();
    Eigen::VectorXd out((p + 2) * C + C - 1);
    for (int c = 0; c < C; ++c) {
        out.segment(c * (p + 2), p) = model.classes[c].beta;
        out[c * (p + 2) + p] = model.classes[c].alpha;
        out[c * (p + 2) + p + 1] = model.classes[c].gamma;
    }
    for (int c = 0; c + 1 < C; ++c) out[(p + 2) * C + c] = model.pi[c];
    return out;
}

std::vector<std::string> parameter_names(int p, int C) {
    std::vector<std::string> names;
    for (int c = 1; c <= C; ++c) {
        for (int k = 1; k <= p; ++k)
            names.push_back("class" + std::to_string(c) + ".beta" + std::to_string(k));
        names.push_back("class" + std::to_string(c) + ".alpha");
        names.push_back("class" + std::to_string(c) + ".gamma");
    }
    for (int c = 1; c < C; ++c) names.push_back("pi" + std::to_string(c));
    return names;
}

}  // namespace countmix
