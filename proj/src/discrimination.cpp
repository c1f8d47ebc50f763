#include "countmix/discrimination.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace countmix {

namespace {

int count_classes(const std::vector<int>& z) {
    int c = 0;
    for (int zi : z) {
        if (zi < 1) throw std::invalid_argument("labels must be 1-based class indices");
        c = std::max(c, zi);
    }
    return c;
}

/// concordance of sorted score vectors: pairs (a in pos, b in neg) scored
/// 1{a > b} + 0.5 * 1{a == b}, averaged
double sorted_concordance(std::vector<double>& pos, std::vector<double>& neg) {
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    const size_t np = pos.size(), nn = neg.size();
    double score = 0.0;
    size_t below = 0, tied_end = 0;
    for (const double a : pos) {
        while (below < nn && neg[below] < a) ++below;
        if (tied_end < below) tied_end = below;
        while (tied_end < nn && neg[tied_end] == a) ++tied_end;
        score += static_cast<double>(below) + 0.5 * static_cast<double>(tied_end - below);
    }
    return score / (static_cast<double>(np) * static_cast<double>(nn));
}

}  // namespace

const char* index_name(Index ix) { return ix == Index::apc ? "apc" : "pdi"; }

Index parse_index(const std::string& name) {
    if (name == "apc") return Index::apc;
    if (name == "pdi") return Index::pdi;
    throw std::invalid_argument("unknown index '" + name + "' (expected apc or pdi)");
}

double c_statistic(const std::vector<int>& z, const std::vector<double>& p1) {
    if (z.size() != p1.size()) throw std::invalid_argument("c_statistic: length mismatch");
    std::vector<double> pos, neg;
    for (size_t i = 0; i < z.size(); ++i) {
        if (z[i] == 1)
            pos.push_back(p1[i]);
        else if (z[i] == 2)
            neg.push_back(p1[i]);
        else
            throw std::invalid_argument("c_statistic: labels must be 1 or 2");
    }
    if (pos.empty() || neg.empty())
        throw std::domain_error("c_statistic: both classes must be present");
    return sorted_concordance(pos, neg);
}

double apc(const std::vector<int>& z, const PosteriorMatrix& posterior) {
    const int C = static_cast<int>(posterior.cols());
    if (static_cast<int>(z.size()) != posterior.rows())
        throw std::invalid_argument("apc: label/posterior size mismatch");
    if (count_classes(z) > C) throw std::invalid_argument("apc: label exceeds class count");
    std::vector<int> nc(C, 0);
    for (int zi : z) ++nc[zi - 1];
    for (int c = 0; c < C; ++c)
        if (nc[c] == 0) throw std::domain_error("apc: class " + std::to_string(c + 1) + " absent");

    // each unordered pair contributes the symmetrized statistic: class-k vs
    // class-j subjects ranked by the raw column-k probabilities, averaged
    // with the roles (and ranking column) swapped
    double total = 0.0;
    int pairs = 0;
    for (int k = 0; k < C; ++k) {
        for (int j = 0; j < C; ++j) {
            if (j == k) continue;
            std::vector<double> pk, pj;  // class-k column scores for both groups
            for (size_t i = 0; i < z.size(); ++i) {
                if (z[i] - 1 == k) pk.push_back(posterior(static_cast<int>(i), k));
                if (z[i] - 1 == j) pj.push_back(posterior(static_cast<int>(i), k));
            }
            total += sorted_concordance(pk, pj);
            ++pairs;
        }
    }
    return total / pairs;
}

double pdi(const std::vector<int>& z, const PosteriorMatrix& posterior) {
    const int C = static_cast<int>(posterior.cols());
    const int m = static_cast<int>(posterior.rows());
    if (static_cast<int>(z.size()) != m)
        throw std::invalid_argument("pdi: label/posterior size mismatch");
    if (count_classes(z) > C) throw std::invalid_argument("pdi: label exceeds class count");

    // per class j, its members' column-c scores sorted (indexed [c][j])
    std::vector<std::vector<std::vector<double>>> scores(C,
        std::vector<std::vector<double>>(C));
    std::vector<double> nc(C, 0.0);
    for (int i = 0; i < m; ++i) {
        const int j = z[i] - 1;
        nc[j] += 1.0;
        for (int c = 0; c < C; ++c) scores[c][j].push_back(posterior(i, c));
    }
    for (int c = 0; c < C; ++c) {
        if (nc[c] == 0.0) throw std::domain_error("pdi: class " + std::to_string(c + 1) + " absent");
        for (int j = 0; j < C; ++j) std::sort(scores[c][j].begin(), scores[c][j].end());
    }

    double total = 0.0;
    std::vector<double> below(C), tied(C);
    std::vector<int> others;
    for (int c = 0; c < C; ++c) {
        others.clear();
        for (int j = 0; j < C; ++j)
            if (j != c) others.push_back(j);
        double class_sum = 0.0;
        for (const double s : scores[c][c]) {
            for (const int j : others) {
                const auto& col = scores[c][j];
                const auto lo = std::lower_bound(col.begin(), col.end(), s);
                const auto hi = std::upper_bound(col.begin(), col.end(), s);
                below[j] = static_cast<double>(lo - col.begin()) / nc[j];
                tied[j] = static_cast<double>(hi - lo) / nc[j];
            }
            // sum over subsets S of tied classes: prod(tied in S) * prod(below
            // outside S) / (1 + |S|); exact 1/t tie credit
            const int nOther = static_cast<int>(others.size());
            double contrib = 0.0;
            for (int mask = 0; mask < (1 << nOther); ++mask) {
                double prod = 1.0;
                int ties_chosen = 0;
                for (int b = 0; b < nOther; ++b) {
                    const int j = others[b];
                    if (mask & (1 << b)) {
                        prod *= tied[j];
                        ++ties_chosen;
                    } else {
                        prod *= below[j];
                    }
                }
                contrib += prod / (1.0 + ties_chosen);
            }
            class_sum += contrib;
        }
        total += class_sum / nc[c];
    }
    return total / C;
}

double apc(const LabeledPredictions& lp) { return apc(lp.z, lp.a); }
double pdi(const LabeledPredictions& lp) { return pdi(lp.z, lp.a); }

double evaluate_index(Index ix, const std::vector<int>& z, const PosteriorMatrix& posterior) {
    return ix == Index::apc ? apc(z, posterior) : pdi(z, posterior);
}

namespace {

DiscriminationResult summarize(const char* name, const std::vector<double>& vals, int failed) {
    DiscriminationResult out;
    out.index_name = name;
    out.reps_used = static_cast<int>(vals.size());
    out.reps_failed = failed;
    if (vals.empty()) throw std::runtime_error("no successful replicates");
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= vals.size();
    out.value = mean;
    if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        out.mc_stderr = std::sqrt(ss / (vals.size() - 1.0) / vals.size());
    }
    return out;
}

}  // namespace

DiscriminationResult csi_estimate(const GenerativeModel& truth, Index ix, const CsiOptions& opts) {
    std::vector<double> vals;
    for (int r = 0; r < opts.reps; ++r) {
        const auto [panel, labels] = truth.simulate_panel(opts.m_mc, derive_seed(opts.seed, r));
        vals.push_back(evaluate_index(ix, labels, truth.oracle_posteriors(panel)));
    }
    auto out = summarize(index_name(ix), vals, 0);
    out.index_name = std::string("csi_") + index_name(ix);
    return out;
}

DiscriminationResult eed_estimate(const GenerativeModel& truth, const Procedure& procedure,
                                  Index ix, const EedOptions& opts) {
    std::vector<double> vals;
    int failed = 0;
    for (int r = 0; r < opts.reps; ++r) {
        const std::uint64_t rep_seed = derive_seed(opts.seed, r);
        const auto [panel, labels] = truth.simulate_panel(opts.m, rep_seed);
        try {
            const PosteriorMatrix a = procedure(panel, truth, derive_seed(rep_seed, 1));
            vals.push_back(evaluate_index(ix, labels, a));
        } catch (const std::exception&) {
            ++failed;
        }
    }
    auto out = summarize(index_name(ix), vals, failed);
    out.index_name = std::string("eed_") + index_name(ix);
    return out;
}

Procedure oracle_procedure() {
    return [](const PanelData& data, const GenerativeModel& truth, std::uint64_t) {
        return truth.oracle_posteriors(data);
    };
}

Procedure em_fit_procedure(int C, const EmOptions& opts) {
    return [C, opts](const PanelData& data, const GenerativeModel& truth,
                     std::uint64_t rep_seed) {
        EmOptions local = opts;
        local.seed = rep_seed;
        local.compute_se = false;
        FitReport report = em_fit(data, C, local);
        const AlignResult aligned =
            align_labels(report.model, truth.fit_design(), truth.mean_curves());
        return posterior_weights(aligned.model, data);
    };
}

}  // namespace countmix
