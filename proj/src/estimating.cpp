#include "countmix/estimating.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace countmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Residuals {
    Eigen::VectorXd mu;
    Eigen::VectorXd e;  // (y - mu) / sqrt(mu)
};

Residuals standardized_residuals(const SubjectRecord& s, const Eigen::VectorXd& beta) {
    Residuals r;
    r.mu = mean_curve(s.x, beta);
    r.e.resize(s.n());
    for (int j = 0; j < s.n(); ++j)
        r.e[j] = (s.y[j] - r.mu[j]) / std::sqrt(r.mu[j]);
    return r;
}

/// Workspace cache per cluster size for a fixed alpha.
class Ar1Cache {
  public:
    explicit Ar1Cache(double alpha) : alpha_(alpha) {}
    const Ar1Workspace& get(int n) {
        auto it = ws_.find(n);
        if (it == ws_.end()) it = ws_.emplace(n, Ar1Workspace(alpha_, n)).first;
        return it->second;
    }

  private:
    double alpha_;
    std::map<int, Ar1Workspace> ws_;
};

}  // namespace

Eigen::MatrixXd ar1_inverse(double alpha, int n) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::domain_error("ar1_inverse: alpha outside [0,1)");
    if (n < 1) throw std::invalid_argument("ar1_inverse: n must be >= 1");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    if (n == 1) {
        m(0, 0) = 1.0;
        return m;
    }
    const double d = 1.0 / (1.0 - alpha * alpha);
    for (int i = 0; i < n; ++i)
        m(i, i) = (i == 0 || i == n - 1) ? d : (1.0 + alpha * alpha) * d;
    for (int i = 0; i + 1 < n; ++i) {
        m(i, i + 1) = -alpha * d;
        m(i + 1, i) = -alpha * d;
    }
    return m;
}

Eigen::MatrixXd ar1_inverse_deriv(double alpha, int n) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::domain_error("ar1_inverse_deriv: alpha outside [0,1)");
    if (n < 1) throw std::invalid_argument("ar1_inverse_deriv: n must be >= 1");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    if (n == 1) return m;
    const double s = 1.0 - alpha * alpha;
    const double d2 = 1.0 / (s * s);
    for (int i = 0; i < n; ++i)
        m(i, i) = (i == 0 || i == n - 1) ? 2.0 * alpha * d2 : 4.0 * alpha * d2;
    for (int i = 0; i + 1 < n; ++i) {
        m(i, i + 1) = -(1.0 + alpha * alpha) * d2;
        m(i + 1, i) = -(1.0 + alpha * alpha) * d2;
    }
    return m;
}

Ar1Workspace::Ar1Workspace(double alpha_in, int n_in)
    : n(n_in), alpha(alpha_in), r_inv(ar1_inverse(alpha_in, n_in)),
      r_inv_deriv(ar1_inverse_deriv(alpha_in, n_in)) {}

Eigen::VectorXd score_u(const SubjectRecord& subject, const ClassParams& params,
                        const Ar1Workspace& ws) {
    const int n = subject.n();
    const int p = static_cast<int>(params.beta.size());
    if (ws.n != n) throw std::invalid_argument("score_u: workspace size mismatch");
    const double phi = params.phi();
    const double alpha = params.alpha;

    const Residuals r = standardized_residuals(subject, params.beta);
    const Eigen::VectorXd rinv_e = ws.r_inv * r.e;

    Eigen::VectorXd u(p + 2);
    u.head(p) = subject.x.transpose() * (r.mu.array().sqrt() * rinv_e.array()).matrix() / phi;
    const double quad_d = r.e.dot(ws.r_inv_deriv * r.e);
    u[p] = (2.0 * phi * alpha * (n - 1) / (1.0 - alpha * alpha) - quad_d) / phi;
    u[p + 1] = (r.e.dot(rinv_e) / phi - n) / phi;
    return u;
}

Eigen::VectorXd score_u(const SubjectRecord& subject, const ClassParams& params) {
    return score_u(subject, params, Ar1Workspace(params.alpha, subject.n()));
}

double poisson_deviance(const SubjectRecord& subject, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = subject.x * beta;
    double d = 0.0;
    for (int j = 0; j < subject.n(); ++j)
        d += 2.0 * (std::exp(eta[j]) - subject.y[j] * eta[j] + std::lgamma(subject.y[j] + 1.0));
    return d;
}

PoissonFit poisson_irls(const PanelData& data, const std::vector<int>& subset,
                        const std::vector<double>& weights) {
    std::vector<int> idx = subset;
    if (idx.empty()) {
        idx.resize(data.subjects.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    }
    const int p = data.p;

    auto subj_weight = [&](int pos) { return weights.empty() ? 1.0 : weights[idx[pos]]; };

    // start from log of the pooled mean on the intercept
    double ybar = 0.0, wn = 0.0;
    for (size_t k = 0; k < idx.size(); ++k) {
        const auto& s = data.subjects[idx[k]];
        const double w = subj_weight(static_cast<int>(k));
        for (int j = 0; j < s.n(); ++j) ybar += w * s.y[j];
        wn += w * s.n();
    }
    if (!(wn > 0.0)) throw std::invalid_argument("poisson_irls: zero total weight");
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    beta[0] = std::log(std::max(ybar / wn, 1e-8));

    auto total_deviance = [&](const Eigen::VectorXd& b) {
        double d = 0.0;
        for (size_t k = 0; k < idx.size(); ++k)
            d += subj_weight(static_cast<int>(k)) * poisson_deviance(data.subjects[idx[k]], b);
        return d;
    };

    PoissonFit fit;
    double dev = total_deviance(beta);
    const int max_iter = 100;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
        for (size_t k = 0; k < idx.size(); ++k) {
            const auto& s = data.subjects[idx[k]];
            const double w = subj_weight(static_cast<int>(k));
            const Eigen::VectorXd eta = (s.x * beta).array().min(30.0).max(-30.0);
            for (int j = 0; j < s.n(); ++j) {
                const double mu = std::exp(eta[j]);
                const Eigen::VectorXd xr = s.x.row(j).transpose();
                g.noalias() += w * (s.y[j] - mu) * xr;
                h.noalias() += w * mu * xr * xr.transpose();
            }
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h);
        if (qr.rank() < p) throw std::runtime_error("poisson_irls: design is rank deficient");
        const Eigen::VectorXd delta = qr.solve(g);

        double step = 1.0;
        Eigen::VectorXd cand;
        double cand_dev = kInf;
        for (int half = 0; half < 40; ++half) {
            cand = beta + step * delta;
            cand_dev = total_deviance(cand);
            if (cand_dev <= dev + 1e-12) break;
            step *= 0.5;
        }
        const double drop = dev - cand_dev;
        beta = cand;
        dev = cand_dev;
        fit.iters = it + 1;
        if (std::abs(drop) < 1e-10 * (std::abs(dev) + 1.0) && g.cwiseAbs().maxCoeff() / wn < 1e-8) {
            fit.converged = true;
            break;
        }
        if (std::abs(drop) < 1e-12) {
            fit.converged = g.cwiseAbs().maxCoeff() / wn < 1e-6;
            break;
        }
    }
    fit.beta = beta;
    fit.deviance = dev;
    return fit;
}

namespace {

struct WeightedEe {
    Eigen::VectorXd stacked;  // p+2 components, weighted sum
    double total_weight = 0.0;
};

WeightedEe weighted_ee(const PanelData& data, const std::vector<double>& w,
                       const ClassParams& params) {
    Ar1Cache cache(params.alpha);
    WeightedEe out;
    out.stacked = Eigen::VectorXd::Zero(data.p + 2);
    for (int i = 0; i < data.num_subjects(); ++i) {
        if (w[i] == 0.0) continue;
        out.stacked.noalias() += w[i] * score_u(data.subjects[i], params, cache.get(data.subjects[i].n()));
        out.total_weight += w[i];
    }
    return out;
}

/// Weighted residual summaries at fixed coefficients: the autocorrelation
/// and scale blocks reduce to closed forms in these, so each alpha
/// evaluation is O(1).
struct ResidualSummary {
    double pairs = 0.0;   // sum w (n_i - 1)
    double obs = 0.0;     // sum w n_i
    double ends = 0.0;    // sum w (e_1^2 + e_n^2), clusters with n >= 2
    double mid = 0.0;     // sum w sum_{1<j<n} e_j^2
    double cross = 0.0;   // sum w sum e_j e_{j+1}
    double single = 0.0;  // sum w e^2 over n = 1 clusters

    double u_alpha(double alpha, double phi) const {
        const double s = 1.0 - alpha * alpha;
        const double quad = (2.0 * alpha * (ends + 2.0 * mid) - 2.0 * (1.0 + alpha * alpha) * cross)
                            / (s * s);
        return 2.0 * alpha * pairs / s - quad / phi;
    }
    double quad_form(double alpha) const {
        const double s = 1.0 - alpha * alpha;
        return single + (ends + (1.0 + alpha * alpha) * mid - 2.0 * alpha * cross) / s;
    }
};

ResidualSummary residual_summary(const PanelData& data, const std::vector<double>& w,
                                 const Eigen::VectorXd& beta) {
    ResidualSummary out;
    for (int i = 0; i < data.num_subjects(); ++i) {
        if (w[i] == 0.0) continue;
        const auto& s = data.subjects[i];
        const Residuals r = standardized_residuals(s, beta);
        const int n = s.n();
        out.obs += w[i] * n;
        if (n == 1) {
            out.single += w[i] * r.e[0] * r.e[0];
            continue;
        }
        out.pairs += w[i] * (n - 1);
        out.ends += w[i] * (r.e[0] * r.e[0] + r.e[n - 1] * r.e[n - 1]);
        for (int j = 1; j + 1 < n; ++j) out.mid += w[i] * r.e[j] * r.e[j];
        for (int j = 0; j + 1 < n; ++j) out.cross += w[i] * r.e[j] * r.e[j + 1];
    }
    return out;
}

}  // namespace

EeResult solve_weighted_ee(const PanelData& data, const std::vector<double>& weights,
                           const ClassParams& init, const EeOptions& opts) {
    const int m = data.num_subjects();
    if (static_cast<int>(weights.size()) != m)
        throw std::invalid_argument("solve_weighted_ee: weight length mismatch");
    const int p = data.p;
    init.validate(p);

    EeResult res;
    res.params = init;

    double tw = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("solve_weighted_ee: negative weight");
        tw += w;
    }
    if (tw < opts.degenerate_frac * m) {
        res.frozen = true;
        res.residual_norm = kInf;
        return res;
    }

    ClassParams cur = init;
    for (int cycle = 0; cycle <= opts.max_cycles; ++cycle) {
        const WeightedEe ee = weighted_ee(data, weights, cur);
        // boundary-pinned alpha scores only its inward violation: at the
        // lower (upper) end the equation may legitimately point outward
        Eigen::VectorXd scored = ee.stacked.cwiseAbs();
        if (res.alpha_pinned_low) scored[p] = std::max(0.0, ee.stacked[p]);
        if (res.alpha_pinned_high) scored[p] = std::max(0.0, -ee.stacked[p]);
        res.residual_norm = scored.maxCoeff() / tw;
        res.cycles = cycle;
        if (res.residual_norm <= opts.tol) {
            res.converged = true;
            res.params = cur;
            return res;
        }
        if (cycle == opts.max_cycles) break;

        // beta step: damped Newton with the Fisher-type slope
        {
            Ar1Cache cache(cur.alpha);
            Eigen::VectorXd u1 = ee.stacked.head(p);
            double u1_norm = u1.cwiseAbs().maxCoeff();
            for (int it = 0; it < 25 && u1_norm / tw > opts.tol; ++it) {
                Eigen::MatrixXd slope = Eigen::MatrixXd::Zero(p, p);
                for (int i = 0; i < m; ++i) {
                    if (weights[i] == 0.0) continue;
                    const auto& s = data.subjects[i];
                    const Eigen::VectorXd mu = mean_curve(s.x, cur.beta);
                    const Eigen::MatrixXd xs =
                        mu.array().sqrt().matrix().asDiagonal() * s.x;  // A^{1/2} X
                    slope.noalias() += weights[i] * xs.transpose() * cache.get(s.n()).r_inv * xs;
                }
                slope /= cur.phi();
                const Eigen::VectorXd delta = slope.ldlt().solve(u1);
                double step = 1.0;
                for (int half = 0; half < 30; ++half) {
                    ClassParams cand = cur;
                    cand.beta = cur.beta + step * delta;
                    Eigen::VectorXd u1_cand = Eigen::VectorXd::Zero(p);
                    for (int i = 0; i < m; ++i) {
                        if (weights[i] == 0.0) continue;
                        const auto& s = data.subjects[i];
                        u1_cand.noalias() +=
                            weights[i] *
                            score_u(s, cand, cache.get(s.n())).head(p);
                    }
                    if (u1_cand.cwiseAbs().maxCoeff() < u1_norm || step < 1e-6) {
                        cur = cand;
                        u1 = u1_cand;
                        u1_norm = u1.cwiseAbs().maxCoeff();
                        break;
                    }
                    step *= 0.5;
                }
            }
        }

        // alpha step: sign-bracket scan then bisection on the weighted alpha
        // block; every evaluation is O(1) in the residual summaries
        const ResidualSummary rs = residual_summary(data, weights, cur.beta);
        res.alpha_pinned_low = res.alpha_pinned_high = false;
        res.alpha_bracket_failed = false;
        {
            const double hi = std::max(
                0.0, std::min(alpha_upper_bound(cur.beta, data), opts.alpha_cap) - opts.alpha_margin);
            auto h = [&](double a) { return rs.u_alpha(a, cur.phi()); };
            if (hi <= 0.0 || rs.pairs == 0.0) {
                cur.alpha = 0.0;
            } else {
                const int grid = 32;
                double prev_a = 0.0, prev_h = h(0.0);
                const double h0 = prev_h;
                bool bracketed = false;
                double hk = prev_h;
                for (int k = 1; k <= grid; ++k) {
                    const double a = hi * k / grid;
                    hk = h(a);
                    if ((prev_h <= 0.0 && hk >= 0.0) || (prev_h >= 0.0 && hk <= 0.0)) {
                        double lo_a = prev_a, hi_a = a, lo_h = prev_h;
                        for (int b = 0; b < 60; ++b) {
                            const double mid = 0.5 * (lo_a + hi_a);
                            const double hm = h(mid);
                            if ((lo_h <= 0.0 && hm <= 0.0) || (lo_h >= 0.0 && hm >= 0.0)) {
                                lo_a = mid;
                                lo_h = hm;
                            } else {
                                hi_a = mid;
                            }
                        }
                        cur.alpha = 0.5 * (lo_a + hi_a);
                        bracketed = true;
                        break;
                    }
                    prev_a = a;
                    prev_h = hk;
                }
                if (!bracketed) {
                    res.alpha_bracket_failed = true;
                    // no root in range: take the endpoint with the smaller
                    // violation and record which boundary holds the estimate
                    if (std::abs(h0) <= std::abs(hk)) {
                        cur.alpha = 0.0;
                        res.alpha_pinned_low = h0 < 0.0;
                        res.alpha_pinned_high = false;
                    } else {
                        cur.alpha = hi;
                        res.alpha_pinned_high = hk > 0.0;
                        res.alpha_pinned_low = false;
                    }
                }
            }
        }

        // phi step: closed form from the scale block quadratic form
        {
            const double phi = rs.quad_form(cur.alpha) / rs.obs;
            cur.gamma = std::max(phi - 1.0, opts.gamma_floor);
        }
    }
    res.params = cur;
    return res;
}

double masked_alpha_component(double g_component, bool pinned_low, bool pinned_high) {
    if (pinned_low) return std::max(0.0, g_component);
    if (pinned_high) return std::max(0.0, -g_component);
    return std::abs(g_component);
}

}  // namespace countmix
