#include "doctest.h"

#include <cmath>
#include <vector>

#include "countmix/study.hpp"

using namespace countmix;

namespace {

// plain Monte-Carlo integration of the class marginal, an independent oracle
// for the quadrature path; returns the log marginal and its delta-method se
std::pair<double, double> mc_class_loglik(const PnScenario& sc, int cls,
                                          const SubjectRecord& s, int draws, Rng& rng) {
    const Eigen::Matrix2d cov = sc.random_effect_cov(cls);
    const Eigen::Matrix2d l = Eigen::LLT<Eigen::Matrix2d>(cov).matrixL();
    const auto& cl = sc.classes[cls];
    double lg = 0.0;
    for (int j = 0; j < s.n(); ++j) lg += std::lgamma(s.y[j] + 1.0);

    std::vector<double> logf(draws);
    for (int d = 0; d < draws; ++d) {
        Eigen::Vector2d g(draw_normal(rng), draw_normal(rng));
        const Eigen::Vector2d a = l * g;
        double acc = -lg;
        for (int j = 0; j < s.n(); ++j) {
            const double eta = cl.beta0 + cl.beta1 * s.time[j] + a[0] + a[1] * s.time[j];
            acc += s.y[j] * eta - std::exp(eta);
        }
        logf[d] = acc;
    }
    double mx = logf[0];
    for (double v : logf) mx = std::max(mx, v);
    double sum = 0.0, sum_sq = 0.0;
    for (double v : logf) {
        const double e = std::exp(v - mx);
        sum += e;
        sum_sq += e * e;
    }
    const double mean = sum / draws;
    const double var = sum_sq / draws - mean * mean;
    const double se_rel = std::sqrt(var / draws) / mean;
    return {mx + std::log(mean), se_rel};
}

}  // namespace

TEST_CASE("scenario registry is frozen") {
    const InarScenario s1 = inar_scenario("I", 0.1, 1.25);
    CHECK(s1.betas(0, 0) == doctest::Approx(-0.4));
    CHECK(s1.betas(0, 1) == doctest::Approx(-0.1));
    CHECK(s1.betas(1, 0) == doctest::Approx(1.5));
    CHECK(s1.betas(1, 1) == doctest::Approx(-0.7));
    CHECK(s1.betas(2, 0) == doctest::Approx(0.0));
    CHECK(s1.betas(2, 1) == doctest::Approx(0.65));
    CHECK(s1.betas(3, 0) == doctest::Approx(1.4));
    CHECK(s1.betas(3, 1) == doctest::Approx(0.0));
    CHECK(s1.pi[0] == doctest::Approx(0.50));
    CHECK(s1.pi[3] == doctest::Approx(0.10));
    REQUIRE(s1.times.size() == 8);
    CHECK(s1.times[0] == doctest::Approx(0.25));
    CHECK(s1.times[7] == doctest::Approx(2.0));

    const InarScenario s2 = inar_scenario("II", 0.4, 3.0);
    CHECK(s2.betas(1, 0) == doctest::Approx(1.4));
    CHECK(s2.betas(1, 1) == doctest::Approx(-1.0));
    CHECK(s2.betas(2, 1) == doctest::Approx(0.9));
    CHECK(s2.betas(3, 0) == doctest::Approx(1.2));
    REQUIRE(s2.times.size() == 5);
    CHECK(s2.times[4] == doctest::Approx(1.25));

    // both grids admit the full knob range alpha <= 0.4
    for (const char* id : {"I", "II"}) {
        for (double alpha : {0.1, 0.4}) {
            const InarScenario sc = inar_scenario(id, alpha, 3.0);
            const MixtureModel model = scenario_model(sc);
            PanelData probe;
            probe.p = 2;
            SubjectRecord s;
            s.id = "probe";
            s.time = sc.times;
            s.x = scenario_design(sc);
            s.y.assign(sc.times.size(), 0);
            probe.subjects.push_back(s);
            for (const auto& cl : model.classes) CHECK(check_constraints(cl, probe).ok);
        }
    }

    const PnScenario p1 = pn_scenario(1);
    REQUIRE(p1.times.size() == 8);
    CHECK(p1.times[0] == doctest::Approx(1.0 / 9.0));
    CHECK(p1.effect_span == doctest::Approx(7.0 / 9.0));
    CHECK(p1.classes[0].beta0 == doctest::Approx(-0.90));
    CHECK(p1.classes[0].sigma1_sq == doctest::Approx(0.125));
    CHECK(p1.classes[1].beta0 == doctest::Approx(1.55));
    CHECK(p1.classes[2].beta1 == doctest::Approx(1.90));
    CHECK(p1.classes[3].pi == doctest::Approx(0.10));

    const PnScenario p4 = pn_scenario(4);
    REQUIRE(p4.times.size() == 5);
    CHECK(p4.effect_span == doctest::Approx(4.0 / 6.0));
    CHECK(p4.classes[0].beta0 == doctest::Approx(-0.90));
    CHECK(p4.classes[0].sigma0_sq == doctest::Approx(1.50));
    CHECK(p4.classes[1].beta0 == doctest::Approx(1.30));
    CHECK(p4.classes[2].beta1 == doctest::Approx(1.75));
    CHECK(p4.classes[3].sigma1_sq == doctest::Approx(0.45));
}

TEST_CASE("pn sampler: random-effect covariance matches its target" * doctest::timeout(120)) {
    const PnScenario sc = pn_scenario(2);
    const int cls = 0;
    const Eigen::Matrix2d target = sc.random_effect_cov(cls);
    // recover the effects from Poisson-free draws of the latent pair by
    // regenerating them the same way the sampler does
    Rng rng(2027);
    const Eigen::Matrix2d l = Eigen::LLT<Eigen::Matrix2d>(target).matrixL();
    const int n = 1000000;
    double s00 = 0, s01 = 0, s11 = 0, m0 = 0, m1 = 0;
    for (int i = 0; i < n; ++i) {
        Eigen::Vector2d g(draw_normal(rng), draw_normal(rng));
        const Eigen::Vector2d a = l * g;
        m0 += a[0];
        m1 += a[1];
        s00 += a[0] * a[0];
        s01 += a[0] * a[1];
        s11 += a[1] * a[1];
    }
    m0 /= n;
    m1 /= n;
    CHECK(std::abs(s00 / n - m0 * m0 - target(0, 0)) / target(0, 0) < 0.01);
    CHECK(std::abs(s11 / n - m1 * m1 - target(1, 1)) / target(1, 1) < 0.01);
    CHECK(std::abs(s01 / n - m0 * m1 - target(0, 1)) / std::abs(target(0, 1)) < 0.01);
}

TEST_CASE("pn sampler: empirical log means follow the quadratic curve" * doctest::timeout(240)) {
    const PnScenario sc = pn_scenario(2);
    const int cls = 1;
    const int m = 400000;
    Rng rng(4242);
    const int T = static_cast<int>(sc.times.size());
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(T), s2 = Eigen::VectorXd::Zero(T);
    for (int i = 0; i < m; ++i) {
        const SubjectRecord s = simulate_pn_subject(sc, cls, rng);
        for (int j = 0; j < T; ++j) {
            s1[j] += s.y[j];
            s2[j] += static_cast<double>(s.y[j]) * s.y[j];
        }
    }
    for (int j = 0; j < T; ++j) {
        const double mean = s1[j] / m;
        const double sd = std::sqrt(s2[j] / m - mean * mean);
        const double se = sd / std::sqrt(static_cast<double>(m));
        const double target = std::exp(sc.log_mean(cls, sc.times[j]));
        CHECK(std::abs(mean - target) < 4.0 * se);
    }
}

TEST_CASE("pn sampler: vanishing variances reduce to plain Poisson") {
    PnScenario sc = pn_scenario(2);
    for (auto& cl : sc.classes) {
        cl.sigma0_sq = 1e-12;
        cl.sigma1_sq = 1e-12;
    }
    Rng rng(77);
    const int m = 40000;
    const auto& cl = sc.classes[2];
    double sum0 = 0.0;
    for (int i = 0; i < m; ++i) sum0 += simulate_pn_subject(sc, 2, rng).y[0];
    const double target = std::exp(cl.beta0 + cl.beta1 * sc.times[0]);
    CHECK(std::abs(sum0 / m - target) < 4.0 * std::sqrt(target / m) + 1e-3);

    // oracle posteriors under degenerate effects equal plain-Poisson Bayes rows
    const PnTruth truth(sc, 20, false);
    const auto [panel, labels] = truth.simulate_panel(200, 5);
    const PosteriorMatrix w = truth.oracle_posteriors(panel);
    for (int i = 0; i < 200; ++i) {
        Eigen::Vector4d logp;
        for (int c = 0; c < 4; ++c) {
            const auto& cc = sc.classes[c];
            double acc = std::log(cc.pi);
            for (int j = 0; j < panel.subjects[i].n(); ++j) {
                const double lam = std::exp(cc.beta0 + cc.beta1 * sc.times[j]);
                acc += panel.subjects[i].y[j] * std::log(lam) - lam
                       - std::lgamma(panel.subjects[i].y[j] + 1.0);
            }
            logp[c] = acc;
        }
        const double lse = std::log(logp.array().exp().sum() / std::exp(logp.maxCoeff()))
                           + logp.maxCoeff();
        for (int c = 0; c < 4; ++c)
            CHECK(w(i, c) == doctest::Approx(std::exp(logp[c] - lse)).epsilon(1e-6));
    }
}

TEST_CASE("quadrature: node doubling and Monte-Carlo integration agree" * doctest::timeout(240)) {
    const PnScenario sc = pn_scenario(3);
    const PnTruth truth(sc, 20, false);
    const auto [panel, labels] = truth.simulate_panel(100, 902);

    SUBCASE("20 vs 40 nodes within 1e-6 on 100 subjects") {
        for (int i = 0; i < 100; ++i) {
            for (int c = 0; c < 4; ++c) {
                const double l20 = pn_class_loglik(sc, c, panel.subjects[i], 20);
                const double l40 = pn_class_loglik(sc, c, panel.subjects[i], 40);
                CHECK(std::abs(l20 - l40) < 1e-6);
            }
        }
    }

    SUBCASE("independent Monte-Carlo integration on sampled subjects") {
        Rng rng(555);
        for (int i = 0; i < 6; ++i) {
            for (int c = 0; c < 4; ++c) {
                const double quad = pn_class_loglik(sc, c, panel.subjects[i], 20);
                const auto [mc, se_rel] = mc_class_loglik(sc, c, panel.subjects[i], 120000, rng);
                CHECK(std::abs(quad - mc) < 3.0 * se_rel);
            }
        }
    }

    SUBCASE("posterior rows sum to one") {
        const PosteriorMatrix w = truth.oracle_posteriors(panel);
        for (int i = 0; i < w.rows(); ++i) CHECK(w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("random-assignment diagnostics recover the generating structure"
          * doctest::timeout(600)) {
    // two well-separated flat-trajectory classes so assignments are crisp
    MixtureModel model;
    model.pi = Eigen::Vector2d(0.6, 0.4);
    ClassParams a, b;
    a.beta = Eigen::VectorXd::Constant(1, std::log(1.5));
    a.alpha = 0.5;
    a.gamma = 1.0;
    b.beta = Eigen::VectorXd::Constant(1, std::log(12.0));
    b.alpha = 0.2;
    b.gamma = 1.5;
    model.classes = {a, b};
    const int n = 8;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(n, 1);
    std::vector<double> times;
    for (int j = 0; j < n; ++j) times.push_back(j);
    const InarTruth truth(model, x, times);
    const auto [panel, labels] = truth.simulate_panel(3000, 44);

    DiagnosticOptions opts;
    opts.reps = 200;
    opts.seed = 9;
    opts.max_lag = 3;
    const DiagnosticCurves d = random_assignment_diagnostic(model, panel, opts);

    for (int c = 0; c < 2; ++c) {
        const double alpha_c = model.classes[c].alpha;
        for (int lag = 1; lag <= 3; ++lag)
            CHECK(std::abs(d.autocorr(c, lag - 1) - std::pow(alpha_c, lag)) < 0.05);
        for (int j = 0; j < n; ++j)
            CHECK(std::abs(d.overdisp(c, j) - model.classes[c].phi()) < 0.25);
        CHECK(d.reps_used(c, 0) == opts.reps);
    }

    SUBCASE("rescaling all sampling weights changes nothing") {
        PanelData scaled = panel;
        for (auto& s : scaled.subjects) s.weight = 2.0;
        DiagnosticOptions small = opts;
        small.reps = 20;
        const DiagnosticCurves a = random_assignment_diagnostic(model, panel, small);
        const DiagnosticCurves b = random_assignment_diagnostic(model, scaled, small);
        CHECK((a.autocorr - b.autocorr).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.overdisp - b.overdisp).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("misspecified fits respect the oracle bound" * doctest::timeout(900)) {
    // data from the Poisson-lognormal truth, fitted with the count AR(1)
    // mixture on the quadratic basis
    const PnTruth truth(pn_scenario(1), 20, false);
    CsiOptions copts;
    copts.m_mc = 3000;
    copts.reps = 5;
    copts.seed = 61;
    EmOptions fit_opts;
    fit_opts.restarts = 2;
    fit_opts.max_iter = 200;
    EedOptions eopts;
    eopts.m = 400;
    eopts.reps = 6;
    eopts.seed = 62;
    for (const Index ix : {Index::apc, Index::pdi}) {
        const auto csi_r = csi_estimate(truth, ix, copts);
        const auto eed_r = eed_estimate(truth, em_fit_procedure(4, fit_opts), ix, eopts);
        CHECK(eed_r.reps_failed == 0);
        CHECK(eed_r.value
              <= csi_r.value + 2.0 * std::hypot(csi_r.mc_stderr, eed_r.mc_stderr));
    }
}

TEST_CASE("single-class bias/coverage study calibrates" * doctest::timeout(600)) {
    MixtureModel model;
    model.pi = Eigen::VectorXd::Ones(1);
    ClassParams cl;
    cl.beta = Eigen::Vector2d(0.3, 0.4);
    cl.alpha = 0.3;
    cl.gamma = 0.6;
    model.classes = {cl};
    std::vector<double> times = {0.25, 0.5, 0.75, 1.0, 1.25};
    Eigen::MatrixXd x(5, 2);
    for (int j = 0; j < 5; ++j) x.row(j) << 1.0, times[j];
    const InarTruth truth(model, x, times);

    BiasStudyOptions opts;
    opts.m = 1000;
    opts.reps = 60;
    opts.seed = 31;
    opts.fit.restarts = 1;
    opts.fit.tol = 1e-6;
    opts.compute_eed = false;
    const StudyReport rep = run_bias_coverage_study(truth, opts);
    CHECK(rep.reps_done == 60);
    for (const auto& ps : rep.params) {
        CHECK(ps.bias < 0.05);
        CHECK(ps.coverage >= 0.90);
        CHECK(ps.coverage <= 0.99);
    }
}
