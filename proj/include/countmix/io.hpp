#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "countmix/em.hpp"
#include "countmix/process.hpp"

namespace countmix {

/// Persisted model: parameters plus fit metadata. Serialization is canonical
/// (sorted keys, shortest-round-trip numbers) so serialize -> parse ->
/// serialize is byte-identical.
struct ModelDocument {
    int schema_version = 1;
    MixtureModel model;
    std::map<std::string, double> se;  // keyed by parameter name; empty when unknown

    std::optional<double> loglik;
    std::optional<double> weighted_bic;

    struct Convergence {
        double tol = 0.0;
        int iters = 0;
        double criterion = 0.0;
        bool converged = false;
    };
    std::optional<Convergence> convergence;

    struct Provenance {
        std::uint64_t seed = 0;
        int restarts = 0;
        std::string data_fingerprint;
    };
    std::optional<Provenance> provenance;

    /// Common design used for simulation sidecars, so a document alone can
    /// re-simulate or provide alignment curves.
    struct Design {
        std::vector<double> times;
        std::string basis;  // "intercept_time" or "intercept_time_timesq"
    };
    std::optional<Design> design;
};

std::string model_to_json(const ModelDocument& doc);
ModelDocument model_from_json(const std::string& text);
void save_model(const ModelDocument& doc, const std::string& path);
ModelDocument load_model(const std::string& path);

ModelDocument document_from_report(const FitReport& report);

Eigen::MatrixXd design_from_basis(const std::vector<double>& times, const std::string& basis);

/// Long-format panel CSV: header columns subject_id, time, y, optional
/// weight, then x1..xp. Parse errors carry the offending line number.
void save_panel_csv(const PanelData& data, const std::string& path, bool write_weight);
PanelData load_panel_csv(const std::string& path,
                         const std::optional<std::string>& weight_column = std::nullopt);

void save_labels_csv(const std::vector<std::string>& subject_ids, const std::vector<int>& labels,
                     const std::string& path);
/// Returns labels matched to the panel's subject order.
std::vector<int> load_labels_csv(const std::string& path, const PanelData& data);

/// FNV-1a hash of a file's bytes, as fixed-width hex.
std::string file_fingerprint(const std::string& path);

/// Fixed 6-significant-digit formatting used by all tabular output.
std::string fmt6(double v);

}  // namespace countmix
