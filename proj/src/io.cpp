#include "countmix/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace countmix {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

[[noreturn]] void csv_error(const std::string& path, int line, const std::string& msg) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string file_fingerprint(const std::string& path) {
    const std::string bytes = read_file(path);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

std::string model_to_json(const ModelDocument& doc) {
    json j;
    j["schema_version"] = doc.schema_version;
    j["C"] = doc.model.num_classes();
    j["p"] = doc.model.p();
    json classes = json::array();
    for (const auto& cl : doc.model.classes) {
        json jc;
        jc["beta"] = std::vector<double>(cl.beta.data(), cl.beta.data() + cl.beta.size());
        jc["alpha"] = cl.alpha;
        jc["gamma"] = cl.gamma;
        classes.push_back(jc);
    }
    j["classes"] = classes;
    j["pi"] = std::vector<double>(doc.model.pi.data(), doc.model.pi.data() + doc.model.pi.size());
    if (!doc.se.empty()) j["se"] = doc.se;
    if (doc.loglik) j["loglik"] = *doc.loglik;
    if (doc.weighted_bic) j["weighted_bic"] = *doc.weighted_bic;
    if (doc.convergence) {
        j["convergence"] = {{"tol", doc.convergence->tol},
                            {"iters", doc.convergence->iters},
                            {"criterion", doc.convergence->criterion},
                            {"converged", doc.convergence->converged}};
    }
    if (doc.provenance) {
        j["provenance"] = {{"seed", doc.provenance->seed},
                           {"restarts", doc.provenance->restarts},
                           {"data_fingerprint", doc.provenance->data_fingerprint}};
    }
    if (doc.design) {
        j["design"] = {{"times", doc.design->times}, {"basis", doc.design->basis}};
    }
    return j.dump(2) + "\n";
}

ModelDocument model_from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelDocument doc;
    doc.schema_version = j.at("schema_version").get<int>();
    const int C = j.at("C").get<int>();
    const int p = j.at("p").get<int>();
    for (const auto& jc : j.at("classes")) {
        ClassParams cl;
        const auto beta = jc.at("beta").get<std::vector<double>>();
        cl.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), beta.size());
        cl.alpha = jc.at("alpha").get<double>();
        cl.gamma = jc.at("gamma").get<double>();
        doc.model.classes.push_back(cl);
    }
    const auto pi = j.at("pi").get<std::vector<double>>();
    doc.model.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), pi.size());
    if (doc.model.num_classes() != C || doc.model.p() != p)
        throw std::runtime_error("model document: C/p fields disagree with the class blocks");
    doc.model.validate();
    if (j.contains("se")) doc.se = j.at("se").get<std::map<std::string, double>>();
    if (j.contains("loglik")) doc.loglik = j.at("loglik").get<double>();
    if (j.contains("weighted_bic")) doc.weighted_bic = j.at("weighted_bic").get<double>();
    if (j.contains("convergence")) {
        ModelDocument::Convergence cv;
        const auto& jc = j.at("convergence");
        cv.tol = jc.at("tol").get<double>();
        cv.iters = jc.at("iters").get<int>();
        cv.criterion = jc.at("criterion").get<double>();
        cv.converged = jc.at("converged").get<bool>();
        doc.convergence = cv;
    }
    if (j.contains("provenance")) {
        ModelDocument::Provenance pv;
        const auto& jp = j.at("provenance");
        pv.seed = jp.at("seed").get<std::uint64_t>();
        pv.restarts = jp.at("restarts").get<int>();
        pv.data_fingerprint = jp.at("data_fingerprint").get<std::string>();
        doc.provenance = pv;
    }
    if (j.contains("design")) {
        ModelDocument::Design ds;
        ds.times = j.at("design").at("times").get<std::vector<double>>();
        ds.basis = j.at("design").at("basis").get<std::string>();
        doc.design = ds;
    }
    return doc;
}

void save_model(const ModelDocument& doc, const std::string& path) {
    write_file(path, model_to_json(doc));
}

ModelDocument load_model(const std::string& path) {
    try {
        return model_from_json(read_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error("model document '" + path + "': " + e.what());
    }
}

ModelDocument document_from_report(const FitReport& report) {
    ModelDocument doc;
    doc.model = report.model;
    doc.loglik = report.loglik;
    doc.weighted_bic = report.bic;
    ModelDocument::Convergence cv;
    cv.tol = report.tol;
    cv.iters = report.iters;
    cv.criterion = report.criterion;
    cv.converged = report.converged;
    doc.convergence = cv;
    if (report.se.size() > 0) {
        const auto names = parameter_names(report.model.p(), report.model.num_classes());
        for (size_t k = 0; k < names.size(); ++k) doc.se[names[k]] = report.se[k];
    }
    return doc;
}

Eigen::MatrixXd design_from_basis(const std::vector<double>& times, const std::string& basis) {
    const int n = static_cast<int>(times.size());
    if (basis == "intercept_time") {
        Eigen::MatrixXd x(n, 2);
        for (int j = 0; j < n; ++j) x.row(j) << 1.0, times[j];
        return x;
    }
    if (basis == "intercept_time_timesq") {
        Eigen::MatrixXd x(n, 3);
        for (int j = 0; j < n; ++j) x.row(j) << 1.0, times[j], times[j] * times[j];
        return x;
    }
    throw std::runtime_error("unknown design basis '" + basis + "'");
}

void save_panel_csv(const PanelData& data, const std::string& path, bool write_weight) {
    std::ostringstream out;
    out << "subject_id,time,y";
    if (write_weight) out << ",weight";
    for (int k = 1; k <= data.p; ++k) out << ",x" << k;
    out << "\n";
    for (const auto& s : data.subjects) {
        for (int j = 0; j < s.n(); ++j) {
            out << s.id << ',' << fmt6(s.time[j]) << ',' << s.y[j];
            if (write_weight) out << ',' << fmt6(s.weight);
            for (int k = 0; k < data.p; ++k) out << ',' << fmt6(s.x(j, k));
            out << "\n";
        }
    }
    write_file(path, out.str());
}

PanelData load_panel_csv(const std::string& path, const std::optional<std::string>& weight_column) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) csv_error(path, 1, "empty file");
    const std::vector<std::string> header = split_csv_line(line);

    int col_id = -1, col_time = -1, col_y = -1, col_w = -1;
    std::vector<int> col_x;
    for (size_t k = 0; k < header.size(); ++k) {
        const std::string& name = header[k];
        if (name == "subject_id") col_id = static_cast<int>(k);
        else if (name == "time") col_time = static_cast<int>(k);
        else if (name == "y") col_y = static_cast<int>(k);
        else if (name == "weight") col_w = static_cast<int>(k);
        else if (name.size() > 1 && name[0] == 'x') col_x.push_back(static_cast<int>(k));
    }
    if (col_id < 0 || col_time < 0 || col_y < 0)
        csv_error(path, 1, "header must contain subject_id, time and y");
    for (size_t k = 0; k < col_x.size(); ++k)
        if (header[col_x[k]] != "x" + std::to_string(k + 1))
            csv_error(path, 1, "covariate columns must be named x1..xp in order");
    if (weight_column) {
        if (*weight_column != "weight")
            csv_error(path, 1, "weights column must be named 'weight'");
        if (col_w < 0) csv_error(path, 1, "weights requested but no 'weight' column present");
    }
    const int p = static_cast<int>(col_x.size());
    if (p == 0) csv_error(path, 1, "no covariate columns x1..xp found");

    PanelData panel;
    panel.p = p;
    SubjectRecord cur;
    std::vector<Eigen::VectorXd> rows;
    auto flush = [&]() {
        if (cur.id.empty()) return;
        cur.x.resize(rows.size(), p);
        for (size_t r = 0; r < rows.size(); ++r) cur.x.row(r) = rows[r].transpose();
        panel.subjects.push_back(cur);
        cur = SubjectRecord{};
        rows.clear();
    };

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size()) csv_error(path, line_no, "wrong number of fields");
        try {
            const std::string id = f[col_id];
            if (id != cur.id) {
                for (const auto& s : panel.subjects)
                    if (s.id == id)
                        csv_error(path, line_no, "subject '" + id + "' rows are not contiguous");
                flush();
                cur.id = id;
                if (col_w >= 0) cur.weight = std::stod(f[col_w]);
            } else if (col_w >= 0 && std::stod(f[col_w]) != cur.weight) {
                csv_error(path, line_no, "subject weight changes within subject");
            }
            const double t = std::stod(f[col_time]);
            if (!cur.time.empty() && !(t > cur.time.back()))
                csv_error(path, line_no, "time not strictly increasing within subject");
            const double yraw = std::stod(f[col_y]);
            const int y = static_cast<int>(yraw);
            if (yraw != y || y < 0) csv_error(path, line_no, "y must be a nonnegative integer");
            cur.time.push_back(t);
            cur.y.push_back(y);
            Eigen::VectorXd xr(p);
            for (int k = 0; k < p; ++k) xr[k] = std::stod(f[col_x[k]]);
            rows.push_back(xr);
        } catch (const std::invalid_argument&) {
            csv_error(path, line_no, "malformed numeric field");
        }
    }
    flush();
    if (!weight_column) {
        for (auto& s : panel.subjects) s.weight = 1.0;
    }
    panel.validate();
    return panel;
}

void save_labels_csv(const std::vector<std::string>& subject_ids, const std::vector<int>& labels,
                     const std::string& path) {
    if (subject_ids.size() != labels.size())
        throw std::invalid_argument("save_labels_csv: size mismatch");
    std::ostringstream out;
    out << "subject_id,class\n";
    for (size_t i = 0; i < labels.size(); ++i) out << subject_ids[i] << ',' << labels[i] << "\n";
    write_file(path, out.str());
}

std::vector<int> load_labels_csv(const std::string& path, const PanelData& data) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) csv_error(path, 1, "empty file");
    const auto header = split_csv_line(line);
    if (header.size() != 2 || header[0] != "subject_id" || header[1] != "class")
        csv_error(path, 1, "labels header must be subject_id,class");
    std::map<std::string, int> by_id;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() != 2) csv_error(path, line_no, "wrong number of fields");
        try {
            by_id[f[0]] = std::stoi(f[1]);
        } catch (const std::invalid_argument&) {
            csv_error(path, line_no, "malformed class label");
        }
    }
    std::vector<int> out;
    out.reserve(data.subjects.size());
    for (const auto& s : data.subjects) {
        const auto it = by_id.find(s.id);
        if (it == by_id.end())
            throw std::runtime_error(path + ": no label for subject '" + s.id + "'");
        out.push_back(it->second);
    }
    return out;
}

}  // namespace countmix
