#include "doctest.h"

#include <cmath>
#include <vector>

#include "countmix/discrimination.hpp"
#include "countmix/study.hpp"

using namespace countmix;

namespace {

// enumeration oracle for the pairwise concordance: direct double loop over
// the two classes' subjects, scored on the first class's column
double cstat_enum(const std::vector<int>& z, const Eigen::MatrixXd& post, int k, int j) {
    double score = 0.0, pairs = 0.0;
    for (size_t a = 0; a < z.size(); ++a) {
        if (z[a] - 1 != k) continue;
        for (size_t b = 0; b < z.size(); ++b) {
            if (z[b] - 1 != j) continue;
            pairs += 1.0;
            if (post(a, k) > post(b, k))
                score += 1.0;
            else if (post(a, k) == post(b, k))
                score += 0.5;
        }
    }
    return score / pairs;
}

double apc_enum(const std::vector<int>& z, const Eigen::MatrixXd& post) {
    const int C = static_cast<int>(post.cols());
    double total = 0.0;
    int n = 0;
    for (int k = 0; k < C; ++k)
        for (int j = 0; j < C; ++j)
            if (j != k) {
                total += cstat_enum(z, post, k, j);
                ++n;
            }
    return total / n;
}

// enumeration oracle for the polytomous index: every C-tuple, 1/t tie credit
double pdi_enum(const std::vector<int>& z, const Eigen::MatrixXd& post) {
    const int C = static_cast<int>(post.cols());
    std::vector<std::vector<int>> groups(C);
    for (size_t i = 0; i < z.size(); ++i) groups[z[i] - 1].push_back(static_cast<int>(i));

    std::vector<int> tuple(C, 0);
    double total = 0.0;
    double tuples = 1.0;
    for (int c = 0; c < C; ++c) tuples *= groups[c].size();
    std::vector<int> idx(C, 0);
    for (double t = 0; t < tuples; ++t) {
        for (int c = 0; c < C; ++c) tuple[c] = groups[c][idx[c]];
        for (int c = 0; c < C; ++c) {
            const double own = post(tuple[c], c);
            bool beaten = false;
            int tied = 1;
            for (int j = 0; j < C; ++j) {
                if (j == c) continue;
                const double other = post(tuple[j], c);
                if (other > own) beaten = true;
                if (other == own) ++tied;
            }
            if (!beaten) total += tied == 1 ? 1.0 : 1.0 / tied;
        }
        for (int c = C - 1; c >= 0; --c) {
            if (++idx[c] < static_cast<int>(groups[c].size())) break;
            idx[c] = 0;
        }
    }
    return total / (C * tuples);
}

}  // namespace

TEST_CASE("c statistic: separation, ties, and the three-subject example") {
    CHECK(c_statistic({1, 1, 2, 2}, {0.9, 0.8, 0.2, 0.1}) == doctest::Approx(1.0));
    CHECK(c_statistic({1, 2, 1, 2}, {0.5, 0.5, 0.5, 0.5}) == doctest::Approx(0.5));
    CHECK(c_statistic({1, 1, 2}, {0.9, 0.6, 0.7}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(c_statistic({1, 1}, {0.2, 0.3}), std::domain_error);
}

TEST_CASE("apc: two-class reduction, perfection, enumeration oracle") {
    SUBCASE("C = 2 equals the c statistic") {
        Rng rng(3);
        std::vector<int> z;
        Eigen::MatrixXd p(10, 2);
        std::vector<double> p1;
        for (int i = 0; i < 10; ++i) {
            z.push_back(i % 2 + 1);
            const double v = draw_uniform(rng);
            p(i, 0) = v;
            p(i, 1) = 1.0 - v;
            p1.push_back(v);
        }
        CHECK(apc(z, p) == doctest::Approx(c_statistic(z, p1)).epsilon(1e-13));
    }

    SUBCASE("perfect posterior scores one") {
        std::vector<int> z = {1, 2, 3, 1, 2, 3};
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(6, 3);
        for (int i = 0; i < 6; ++i) p(i, z[i] - 1) = 1.0;
        CHECK(apc(z, p) == doctest::Approx(1.0));
        CHECK(pdi(z, p) == doctest::Approx(1.0));
    }

    SUBCASE("hand-built six-subject set matches enumeration") {
        std::vector<int> z = {1, 1, 2, 2, 3, 3};
        Eigen::MatrixXd p(6, 3);
        p << 0.6, 0.3, 0.1,
             0.3, 0.4, 0.3,
             0.2, 0.5, 0.3,
             0.3, 0.3, 0.4,
             0.1, 0.3, 0.6,
             0.3, 0.4, 0.3;
        CHECK(apc(z, p) == doctest::Approx(apc_enum(z, p)).epsilon(1e-13));
        CHECK(pdi(z, p) == doctest::Approx(pdi_enum(z, p)).epsilon(1e-13));
    }

    SUBCASE("a missing class is an error") {
        std::vector<int> z = {1, 1, 3, 3};
        Eigen::MatrixXd p = Eigen::MatrixXd::Constant(4, 3, 1.0 / 3.0);
        CHECK_THROWS_AS(apc(z, p), std::domain_error);
        CHECK_THROWS_AS(pdi(z, p), std::domain_error);
    }
}

TEST_CASE("pdi: tie floor at 1/C and the two-per-class example") {
    SUBCASE("identical rows give exactly 1/C") {
        for (int C : {2, 3, 4}) {
            std::vector<int> z;
            for (int c = 1; c <= C; ++c) {
                z.push_back(c);
                z.push_back(c);
            }
            Eigen::MatrixXd p = Eigen::MatrixXd::Constant(2 * C, C, 1.0 / C);
            CHECK(pdi(z, p) == doctest::Approx(1.0 / C).epsilon(1e-13));
            CHECK(apc(z, p) == doctest::Approx(0.5).epsilon(1e-13));
        }
    }

    SUBCASE("two subjects per class with ties matches enumeration") {
        std::vector<int> z = {1, 1, 2, 2, 3, 3};
        Eigen::MatrixXd p(6, 3);
        p << 0.5, 0.25, 0.25,
             0.25, 0.5, 0.25,
             0.25, 0.5, 0.25,
             0.5, 0.25, 0.25,
             0.25, 0.25, 0.5,
             1.0 / 3, 1.0 / 3, 1.0 / 3;
        CHECK(pdi(z, p) == doctest::Approx(pdi_enum(z, p)).epsilon(1e-13));
    }
}

TEST_CASE("property: optimized indices equal enumeration on every small instance") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int C = 2 + static_cast<int>(3 * draw_uniform(rng));
        std::vector<int> z;
        for (int c = 1; c <= C; ++c) {
            const int nc = 1 + static_cast<int>(4 * draw_uniform(rng));
            for (int i = 0; i < nc; ++i) z.push_back(c);
        }
        // coarse probability grid to force common ties
        Eigen::MatrixXd p(z.size(), C);
        for (int i = 0; i < p.rows(); ++i) {
            double row_sum = 0.0;
            for (int c = 0; c < C; ++c) {
                p(i, c) = (1 + static_cast<int>(4 * draw_uniform(rng))) / 4.0;
                row_sum += p(i, c);
            }
            p.row(i) /= row_sum;
        }
        CHECK(apc(z, p) == doctest::Approx(apc_enum(z, p)).epsilon(1e-12));
        CHECK(pdi(z, p) == doctest::Approx(pdi_enum(z, p)).epsilon(1e-12));
    }
}

TEST_CASE("indices are rank-based: monotone transforms change nothing") {
    Rng rng(88);
    for (int trial = 0; trial < 20; ++trial) {
        const int C = 3;
        std::vector<int> z;
        for (int c = 1; c <= C; ++c)
            for (int i = 0; i < 5; ++i) z.push_back(c);
        Eigen::MatrixXd p(z.size(), C);
        for (int i = 0; i < p.rows(); ++i) {
            double row = 0.0;
            for (int c = 0; c < C; ++c) {
                p(i, c) = 0.05 + draw_uniform(rng);
                row += p(i, c);
            }
            p.row(i) /= row;
        }
        const Eigen::MatrixXd cubed = p.array().cube();  // strictly increasing on (0,1)
        CHECK(apc(z, cubed) == doctest::Approx(apc(z, p)).epsilon(1e-13));
        CHECK(pdi(z, cubed) == doctest::Approx(pdi(z, p)).epsilon(1e-13));
        CHECK(apc(z, p) >= 0.0);
        CHECK(apc(z, p) <= 1.0);
        CHECK(pdi(z, p) >= 0.0);
        CHECK(pdi(z, p) <= 1.0);
    }
}

TEST_CASE("oracle discrimination is stable in the sample size") {
    const InarScenario sc = inar_scenario("II", 0.4, 1.5);
    const InarTruth truth(sc);
    EedOptions small, large;
    small.m = 500;
    small.reps = 8;
    small.seed = 41;
    large.m = 1500;
    large.reps = 8;
    large.seed = 42;
    const auto lo = eed_estimate(truth, oracle_procedure(), Index::apc, small);
    const auto hi = eed_estimate(truth, oracle_procedure(), Index::apc, large);
    CHECK(std::abs(lo.value - hi.value) < 3.5 * std::hypot(lo.mc_stderr, hi.mc_stderr));
}

TEST_CASE("csi: degenerate separation reaches one; seeded determinism") {
    MixtureModel model;
    model.pi = Eigen::Vector2d(0.5, 0.5);
    ClassParams lo, hi;
    lo.beta = Eigen::VectorXd::Constant(1, -5.0);
    lo.alpha = 0.0;
    lo.gamma = 0.05;
    hi.beta = Eigen::VectorXd::Constant(1, 5.0);
    hi.alpha = 0.0;
    hi.gamma = 0.05;
    model.classes = {lo, hi};
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
    const InarTruth truth(model, x, {0.0, 1.0, 2.0});

    CsiOptions opts;
    opts.m_mc = 400;
    opts.reps = 4;
    opts.seed = 12;
    const DiscriminationResult apc_r = csi_estimate(truth, Index::apc, opts);
    const DiscriminationResult pdi_r = csi_estimate(truth, Index::pdi, opts);
    CHECK(apc_r.value > 0.999);
    CHECK(pdi_r.value > 0.999);

    const DiscriminationResult again = csi_estimate(truth, Index::apc, opts);
    CHECK(again.value == apc_r.value);
    CHECK(again.mc_stderr == apc_r.mc_stderr);
}

TEST_CASE("eed: oracle matches csi, uniform rows hit the tie floor") {
    const InarScenario sc = inar_scenario("II", 0.1, 1.25);
    const InarTruth truth(sc);

    SUBCASE("oracle procedure reproduces the csi at matched sizes") {
        CsiOptions copts;
        copts.m_mc = 1500;
        copts.reps = 8;
        copts.seed = 31;
        EedOptions eopts;
        eopts.m = 1500;
        eopts.reps = 8;
        eopts.seed = 77;
        for (Index ix : {Index::apc, Index::pdi}) {
            const auto c = csi_estimate(truth, ix, copts);
            const auto e = eed_estimate(truth, oracle_procedure(), ix, eopts);
            const double joint_se = std::hypot(c.mc_stderr, e.mc_stderr);
            CHECK(std::abs(c.value - e.value) < 3.5 * joint_se);
        }
    }

    SUBCASE("uniform predictions give exactly 0.5 and 1/C") {
        const Procedure uniform = [](const PanelData& data, const GenerativeModel& t,
                                     std::uint64_t) {
            return Eigen::MatrixXd::Constant(data.num_subjects(), t.num_classes(),
                                             1.0 / t.num_classes());
        };
        EedOptions eopts;
        eopts.m = 300;
        eopts.reps = 3;
        eopts.seed = 5;
        const auto a = eed_estimate(truth, uniform, Index::apc, eopts);
        const auto p = eed_estimate(truth, uniform, Index::pdi, eopts);
        CHECK(a.value == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(a.mc_stderr == doctest::Approx(0.0));
        CHECK(p.value == doctest::Approx(0.25).epsilon(1e-14));
    }
}
