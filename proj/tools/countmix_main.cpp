#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "countmix/discrimination.hpp"
#include "countmix/em.hpp"
#include "countmix/io.hpp"
#include "countmix/study.hpp"

using namespace countmix;
using nlohmann::json;

namespace {

// exit codes: 0 ok, 2 usage, 3 constraint violation, 4 non-convergence,
// 5 data/model mismatch
constexpr int kExitUsage = 2;
constexpr int kExitConstraint = 3;
constexpr int kExitNoConvergence = 4;
constexpr int kExitMismatch = 5;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConstraintError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string sidecar_path(const std::string& out, const std::string& suffix) {
    std::filesystem::path p(out);
    std::filesystem::path base = p;
    if (p.extension() == ".csv") base = p.parent_path() / p.stem();
    return base.string() + suffix;
}

struct Truth {
    MixtureModel model;
    std::vector<double> times;
    Eigen::MatrixXd design;
    std::string basis;
};

Truth truth_from_document(const ModelDocument& doc) {
    if (!doc.design)
        throw MismatchError("model document lacks a design block; cannot simulate from it");
    Truth t;
    t.model = doc.model;
    t.times = doc.design->times;
    t.basis = doc.design->basis;
    t.design = design_from_basis(t.times, t.basis);
    if (t.design.cols() != t.model.p())
        throw MismatchError("design basis dimension disagrees with the model's p");
    return t;
}

void enforce_constraints(const MixtureModel& model, const Eigen::MatrixXd& design,
                         const std::vector<double>& times) {
    PanelData probe;
    probe.p = static_cast<int>(design.cols());
    SubjectRecord s;
    s.id = "design";
    s.time = times;
    s.x = design;
    s.y.assign(times.size(), 0);
    probe.subjects.push_back(s);
    for (int c = 0; c < model.num_classes(); ++c) {
        const ConstraintReport rep = check_constraints(model.classes[c], probe);
        if (!rep.ok)
            throw ConstraintError("class " + std::to_string(c + 1) + ": " + rep.detail);
    }
}

std::vector<Index> parse_indices(const std::string& spec) {
    std::vector<Index> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_index(item));
    if (out.empty()) throw UsageError("no discrimination index given");
    return out;
}

int cmd_simulate(const std::string& scenario_id, const std::string& model_path,
                 std::optional<double> alpha, std::optional<double> phi, int subjects,
                 std::uint64_t seed, const std::string& out) {
    if (scenario_id.empty() == model_path.empty())
        throw UsageError("give exactly one of --scenario and --model");

    Truth truth;
    if (!scenario_id.empty()) {
        const InarScenario sc =
            inar_scenario(scenario_id, alpha.value_or(0.1), phi.value_or(1.25));
        truth.model = scenario_model(sc);
        truth.times = sc.times;
        truth.design = scenario_design(sc);
        truth.basis = "intercept_time";
    } else {
        truth = truth_from_document(load_model(model_path));
        for (auto& cl : truth.model.classes) {
            if (alpha) cl.alpha = *alpha;
            if (phi) {
                if (!(*phi > 1.0)) throw UsageError("--phi must exceed 1");
                cl.gamma = *phi - 1.0;
            }
        }
        truth.model.validate();
    }
    enforce_constraints(truth.model, truth.design, truth.times);

    const InarTruth gen(truth.model, truth.design, truth.times);
    const auto [panel, labels] = gen.simulate_panel(subjects, seed);
    save_panel_csv(panel, out, false);

    ModelDocument sidecar;
    sidecar.model = truth.model;
    ModelDocument::Design ds;
    ds.times = truth.times;
    ds.basis = truth.basis;
    sidecar.design = ds;
    ModelDocument::Provenance pv;
    pv.seed = seed;
    pv.restarts = 0;
    pv.data_fingerprint = file_fingerprint(out);
    sidecar.provenance = pv;
    save_model(sidecar, sidecar_path(out, ".truth.json"));

    std::vector<std::string> ids;
    for (const auto& s : panel.subjects) ids.push_back(s.id);
    save_labels_csv(ids, labels, sidecar_path(out, ".labels.csv"));

    std::printf("wrote %d subjects (%d rows) to %s\n", panel.num_subjects(), panel.total_obs(),
                out.c_str());
    return 0;
}

int cmd_fit(const std::string& data_path, int classes, int restarts, double tol,
            std::uint64_t seed, int max_iter, const std::string& weights_col,
            const std::string& out) {
    const std::optional<std::string> wc =
        weights_col.empty() ? std::nullopt : std::optional<std::string>(weights_col);
    const PanelData panel = load_panel_csv(data_path, wc);

    EmOptions opts;
    opts.tol = tol;
    opts.restarts = restarts;
    opts.seed = seed;
    opts.max_iter = max_iter;
    opts.use_weights = wc.has_value();
    const FitReport report = em_fit(panel, classes, opts);

    ModelDocument doc = document_from_report(report);
    ModelDocument::Provenance pv;
    pv.seed = seed;
    pv.restarts = restarts;
    pv.data_fingerprint = file_fingerprint(data_path);
    doc.provenance = pv;
    save_model(doc, out);

    std::printf("loglik %s  weighted_bic %s  converged %s  iters %d\n",
                fmt6(report.loglik).c_str(), fmt6(report.bic).c_str(),
                report.converged ? "yes" : "no", report.iters);
    return report.converged ? 0 : kExitNoConvergence;
}

int cmd_discriminate(const std::string& model_path, const std::string& data_path,
                     const std::string& labels_path, const std::string& index_spec,
                     const std::string& truth_path, const std::string& out) {
    const ModelDocument doc = load_model(model_path);
    const PanelData panel = load_panel_csv(data_path);
    if (doc.model.p() != panel.p)
        throw MismatchError("model has p=" + std::to_string(doc.model.p()) + " but data has p=" +
                            std::to_string(panel.p));
    const std::vector<int> labels = load_labels_csv(labels_path, panel);
    const std::vector<Index> indices = parse_indices(index_spec);

    MixtureModel model = doc.model;
    if (!truth_path.empty()) {
        const ModelDocument truth_doc = load_model(truth_path);
        if (truth_doc.model.p() != panel.p)
            throw MismatchError("truth model covariate dimension disagrees with the data");
        if (truth_doc.model.num_classes() != model.num_classes())
            throw MismatchError("truth model class count disagrees with the fitted model");
        const Eigen::MatrixXd design = panel.subjects.front().x;
        model = align_labels(model, design, curves_on_design(truth_doc.model, design)).model;
    }

    const PosteriorMatrix post = posterior_weights(model, panel);
    std::ostringstream csv;
    csv << "index,value\n";
    for (const Index ix : indices) {
        double value = 0.0;
        try {
            value = evaluate_index(ix, labels, post);
        } catch (const std::domain_error& e) {
            throw MismatchError(e.what());
        }
        std::printf("%-4s %s\n", index_name(ix), fmt6(value).c_str());
        csv << index_name(ix) << ',' << fmt6(value) << "\n";
    }
    if (!out.empty()) {
        std::ofstream f(out);
        f << csv.str();
    }
    return 0;
}

int cmd_diagnose(const std::string& model_path, const std::string& data_path, int replicates,
                 std::uint64_t seed, int max_lag, const std::string& out) {
    const ModelDocument doc = load_model(model_path);
    const PanelData panel = load_panel_csv(data_path);
    if (doc.model.p() != panel.p)
        throw MismatchError("model covariate dimension disagrees with the data");

    DiagnosticOptions opts;
    opts.reps = replicates;
    opts.seed = seed;
    opts.max_lag = max_lag;
    const DiagnosticCurves d = random_assignment_diagnostic(doc.model, panel, opts);

    std::ostringstream csv;
    csv << "kind,class,index,value\n";
    for (int c = 0; c < d.autocorr.rows(); ++c)
        for (int l = 0; l < d.autocorr.cols(); ++l)
            csv << "autocorr," << c + 1 << ',' << l + 1 << ',' << fmt6(d.autocorr(c, l)) << "\n";
    for (int c = 0; c < d.overdisp.rows(); ++c)
        for (int j = 0; j < d.overdisp.cols(); ++j)
            csv << "overdispersion," << c + 1 << ',' << j + 1 << ',' << fmt6(d.overdisp(c, j))
                << "\n";
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write '" + out + "'");
    f << csv.str();
    std::printf("wrote diagnostics for %d classes to %s\n",
                static_cast<int>(d.autocorr.rows()), out.c_str());
    return 0;
}

json result_to_json(const DiscriminationResult& r) {
    json j;
    j["index"] = r.index_name;
    j["value"] = r.value;
    if (std::isfinite(r.mc_stderr))
        j["mc_se"] = r.mc_stderr;
    j["reps_used"] = r.reps_used;
    j["reps_failed"] = r.reps_failed;
    return j;
}

int cmd_study(const std::string& config_path, const std::string& out_dir) {
    std::ifstream cfg_in(config_path);
    if (!cfg_in) throw std::runtime_error("cannot open '" + config_path + "'");
    json cfg = json::parse(cfg_in);
    std::filesystem::create_directories(out_dir);

    const std::uint64_t seed = cfg.value("seed", 1ULL);
    const std::vector<std::string> tasks = cfg.value("tasks", std::vector<std::string>{"csi"});
    std::vector<Index> indices;
    for (const std::string& s : cfg.value("indices", std::vector<std::string>{"apc", "pdi"}))
        indices.push_back(parse_index(s));
    auto has_task = [&](const char* t) {
        return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
    };

    std::ostringstream summary;
    summary << "cell,task,index,m,value,mc_se,reps\n";
    int failed_cells = 0;
    const auto& cells = cfg.at("cells");
    for (size_t ci = 0; ci < cells.size(); ++ci) {
        const json& cell = cells[ci];
        const std::string name = cell.value("name", "cell" + std::to_string(ci + 1));
        const std::uint64_t cell_seed = derive_seed(seed, ci);
        json report;
        report["name"] = name;
        try {
            std::unique_ptr<GenerativeModel> truth;
            int fit_classes = cell.value("classes", 4);
            if (cell.at("family") == "inar") {
                const InarScenario sc = inar_scenario(cell.at("scenario").get<std::string>(),
                                                      cell.value("alpha", 0.1),
                                                      cell.value("phi", 1.25));
                truth = std::make_unique<InarTruth>(sc);
                report["scenario"] = sc.id;
                report["alpha"] = sc.alpha;
                report["phi"] = sc.phi;
            } else if (cell.at("family") == "pn") {
                truth = std::make_unique<PnTruth>(pn_scenario(cell.at("setting").get<int>()));
                report["setting"] = cell.at("setting").get<int>();
            } else {
                throw UsageError("cell family must be inar or pn");
            }

            if (has_task("csi")) {
                CsiOptions copts;
                copts.m_mc = cfg.value("csi", json::object()).value("m_mc", 10000);
                copts.reps = cfg.value("csi", json::object()).value("reps", 20);
                copts.seed = derive_seed(cell_seed, 1);
                for (const Index ix : indices) {
                    const DiscriminationResult r = csi_estimate(*truth, ix, copts);
                    report["csi"][index_name(ix)] = result_to_json(r);
                    summary << name << ",csi," << index_name(ix) << ",," << fmt6(r.value) << ','
                            << (r.reps_used > 1 ? fmt6(r.mc_stderr) : "") << ',' << r.reps_used
                            << "\n";
                }
            }
            if (has_task("eed")) {
                const json eed_cfg = cfg.value("eed", json::object());
                EmOptions fit_opts;
                fit_opts.restarts = eed_cfg.value("restarts", 3);
                fit_opts.max_iter = eed_cfg.value("max_iter", 300);
                const Procedure proc = em_fit_procedure(fit_classes, fit_opts);
                for (const int m : eed_cfg.value("m", std::vector<int>{2000})) {
                    EedOptions eopts;
                    eopts.m = m;
                    eopts.reps = eed_cfg.value("reps", 25);
                    eopts.seed = derive_seed(cell_seed, 1000 + m);
                    for (const Index ix : indices) {
                        const DiscriminationResult r = eed_estimate(*truth, proc, ix, eopts);
                        report["eed"]["m" + std::to_string(m)][index_name(ix)] = result_to_json(r);
                        summary << name << ",eed," << index_name(ix) << ',' << m << ','
                                << fmt6(r.value) << ','
                                << (r.reps_used > 1 ? fmt6(r.mc_stderr) : "") << ',' << r.reps_used
                                << "\n";
                    }
                }
            }
            if (has_task("bias_coverage")) {
                const auto* inar = dynamic_cast<const InarTruth*>(truth.get());
                if (!inar) {
                    report["bias_coverage"] = "skipped: only defined for inar cells";
                } else {
                    const json bc = cfg.value("bias_coverage", json::object());
                    BiasStudyOptions bopts;
                    bopts.m = bc.value("m", 2000);
                    bopts.reps = bc.value("reps", 50);
                    bopts.seed = derive_seed(cell_seed, 2);
                    bopts.fit.restarts = bc.value("restarts", 3);
                    bopts.fit.max_iter = bc.value("max_iter", 300);
                    const StudyReport sr = run_bias_coverage_study(*inar, bopts);
                    json params = json::array();
                    for (const auto& ps : sr.params) {
                        json p;
                        p["name"] = ps.name;
                        p["truth"] = ps.truth;
                        p["bias"] = ps.bias;
                        p["emp_sd"] = ps.emp_sd;
                        p["mean_se"] = ps.mean_se;
                        p["coverage"] = ps.coverage;
                        params.push_back(p);
                        summary << name << ",bias," << ps.name << ',' << bopts.m << ','
                                << fmt6(ps.bias) << ",," << sr.reps_done << "\n";
                        summary << name << ",coverage," << ps.name << ',' << bopts.m << ','
                                << fmt6(ps.coverage) << ",," << sr.reps_done << "\n";
                    }
                    report["bias_coverage"]["params"] = params;
                    report["bias_coverage"]["reps_done"] = sr.reps_done;
                    report["bias_coverage"]["reps_failed"] = sr.reps_failed;
                    report["bias_coverage"]["eed_apc"] = result_to_json(sr.eed_apc);
                    report["bias_coverage"]["eed_pdi"] = result_to_json(sr.eed_pdi);
                }
            }
            if (has_task("diagnostics")) {
                const json dc = cfg.value("diagnostics", json::object());
                const int m = dc.value("m", 2000);
                const auto [panel, labels] = truth->simulate_panel(m, derive_seed(cell_seed, 3));
                EmOptions fit_opts;
                fit_opts.restarts = dc.value("restarts", 3);
                fit_opts.max_iter = dc.value("max_iter", 300);
                fit_opts.seed = derive_seed(cell_seed, 4);
                fit_opts.compute_se = false;
                const FitReport fit = em_fit(panel, fit_classes, fit_opts);
                DiagnosticOptions dopts;
                dopts.reps = dc.value("replicates", 1000);
                dopts.seed = derive_seed(cell_seed, 5);
                dopts.max_lag = dc.value("max_lag", 3);
                const DiagnosticCurves d = random_assignment_diagnostic(fit.model, panel, dopts);
                for (int c = 0; c < d.autocorr.rows(); ++c) {
                    for (int l = 0; l < d.autocorr.cols(); ++l) {
                        report["diagnostics"]["autocorr"]["class" + std::to_string(c + 1)]
                              ["lag" + std::to_string(l + 1)] = d.autocorr(c, l);
                        summary << name << ",diag_autocorr,class" << c + 1 << "_lag" << l + 1
                                << ',' << m << ',' << fmt6(d.autocorr(c, l)) << ",,"
                                << dopts.reps << "\n";
                    }
                    for (int j = 0; j < d.overdisp.cols(); ++j)
                        report["diagnostics"]["overdispersion"]["class" + std::to_string(c + 1)]
                              ["rank" + std::to_string(j + 1)] = d.overdisp(c, j);
                }
            }
        } catch (const std::exception& e) {
            report["error"] = e.what();
            ++failed_cells;
        }
        std::ofstream cell_out(out_dir + "/" + name + ".json");
        cell_out << report.dump(2) << "\n";
    }
    std::ofstream sum_out(out_dir + "/summary.csv");
    sum_out << summary.str();
    std::printf("study complete: %zu cells, %d failed; summary at %s/summary.csv\n", cells.size(),
                failed_cells, out_dir.c_str());
    return failed_cells == static_cast<int>(cells.size()) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-class AR(1) count models: simulate, fit, evaluate"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "draw a labeled panel from a truth model");
    std::string sim_scenario, sim_model, sim_out;
    std::optional<double> sim_alpha, sim_phi;
    int sim_subjects = 200;
    std::uint64_t sim_seed = 1;
    sim->add_option("--scenario", sim_scenario, "benchmark scenario id (I or II)");
    sim->add_option("--model", sim_model, "model document with a design block");
    sim->add_option("--alpha", sim_alpha, "autocorrelation knob");
    sim->add_option("--phi", sim_phi, "scale knob (> 1)");
    sim->add_option("--subjects", sim_subjects, "number of subjects")->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "rng seed");
    sim->add_option("--out", sim_out, "output panel csv")->required();

    // fit
    auto* fit = app.add_subcommand("fit", "fit the latent-class model to a panel");
    std::string fit_data, fit_weights, fit_out;
    int fit_classes = 4, fit_restarts = 20, fit_max_iter = 500;
    double fit_tol = 1e-6;
    std::uint64_t fit_seed = 1;
    fit->add_option("--data", fit_data, "panel csv")->required();
    fit->add_option("--classes", fit_classes, "number of latent classes")
        ->check(CLI::PositiveNumber);
    fit->add_option("--restarts", fit_restarts, "independent initializations")
        ->check(CLI::PositiveNumber);
    fit->add_option("--tol", fit_tol, "convergence tolerance on max|G|/sum(w)");
    fit->add_option("--max-iter", fit_max_iter, "iteration cap");
    fit->add_option("--seed", fit_seed, "rng seed");
    fit->add_option("--weights-col", fit_weights, "sampling-weight column name");
    fit->add_option("--out", fit_out, "output model document")->required();

    // discriminate
    auto* dis = app.add_subcommand("discriminate", "score posteriors against true labels");
    std::string dis_model, dis_data, dis_labels, dis_truth, dis_out;
    std::string dis_index = "apc,pdi";
    dis->add_option("--model", dis_model, "model document")->required();
    dis->add_option("--data", dis_data, "panel csv")->required();
    dis->add_option("--labels", dis_labels, "true labels csv")->required();
    dis->add_option("--index", dis_index, "comma-separated: apc,pdi");
    dis->add_option("--truth", dis_truth, "truth document for label alignment");
    dis->add_option("--out", dis_out, "optional csv output");

    // study
    auto* study = app.add_subcommand("study", "run a simulation study from a json config");
    std::string study_config, study_out;
    study->add_option("--config", study_config, "study config json")->required();
    study->add_option("--out", study_out, "output directory")->required();

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "random-assignment model diagnostics");
    std::string diag_model, diag_data, diag_out;
    int diag_reps = 1000, diag_max_lag = 3;
    std::uint64_t diag_seed = 1;
    diag->add_option("--model", diag_model, "model document")->required();
    diag->add_option("--data", diag_data, "panel csv")->required();
    diag->add_option("--replicates", diag_reps, "random assignments")->check(CLI::PositiveNumber);
    diag->add_option("--seed", diag_seed, "rng seed");
    diag->add_option("--max-lag", diag_max_lag, "largest autocorrelation lag");
    diag->add_option("--out", diag_out, "output csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (sim->parsed())
            return cmd_simulate(sim_scenario, sim_model, sim_alpha, sim_phi, sim_subjects,
                                sim_seed, sim_out);
        if (fit->parsed())
            return cmd_fit(fit_data, fit_classes, fit_restarts, fit_tol, fit_seed, fit_max_iter,
                           fit_weights, fit_out);
        if (dis->parsed())
            return cmd_discriminate(dis_model, dis_data, dis_labels, dis_index, dis_truth,
                                    dis_out);
        if (study->parsed()) return cmd_study(study_config, study_out);
        if (diag->parsed())
            return cmd_diagnose(diag_model, diag_data, diag_reps, diag_seed, diag_max_lag,
                                diag_out);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const ConstraintError& e) {
        std::fprintf(stderr, "constraint violation: %s\n", e.what());
        return kExitConstraint;
    } catch (const MismatchError& e) {
        std::fprintf(stderr, "data/model mismatch: %s\n", e.what());
        return kExitMismatch;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitMismatch;
    }
    return 0;
}
