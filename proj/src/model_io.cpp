#include "fable/model_io.hpp"

#include "fable/error.hpp"

#include <json.hpp>

#include <fstream>
#include <limits>

namespace fable {

namespace {

using nlohmann::json;

json matrix_to_json(const MatrixXd& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

MatrixXd matrix_from_json(const json& j) {
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const json& data = j.at("data");
    if (static_cast<Index>(data.size()) != rows)
        throw Error(ErrorCode::ShapeError, "matrix row count does not match its header");
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const json& row = data[static_cast<std::size_t>(i)];
        if (static_cast<Index>(row.size()) != cols)
            throw Error(ErrorCode::ShapeError, "matrix row " + std::to_string(i) + " is ragged");
        for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

json vector_to_json(const VectorXd& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

VectorXd vector_from_json(const json& j) {
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
}

}  // namespace

void write_model(std::ostream& out, const FableModel& model) {
    json doc;
    doc["format"] = kModelFormatTag;
    doc["n"] = model.n;
    doc["p"] = model.p;
    doc["k"] = model.k;
    doc["tau_sq"] = model.tau_sq;
    doc["gamma0"] = model.gamma0;
    doc["delta0_sq"] = model.delta0_sq;
    doc["gamma_n"] = model.gamma_n;
    doc["rho"] = model.rho;
    doc["rho_strategy"] = std::string(to_string(model.rho_strategy));
    doc["S0"] = model.S0;
    if (model.rank) {
        json jic = json::array();
        for (const auto& [k, value] : model.rank->jic_values) jic.push_back(json::array({k, value}));
        doc["rank"] = {{"k_hat", model.rank->k_hat}, {"K0", model.rank->K0}, {"S0", model.rank->S0},
                       {"jic", std::move(jic)}};
    }
    doc["mu"] = matrix_to_json(model.mu);
    doc["delta_sq"] = vector_to_json(model.delta_sq);
    doc["V_sq"] = vector_to_json(model.V_sq);
    doc["L_sq"] = vector_to_json(model.L_sq);
    doc["U"] = matrix_to_json(model.U);
    doc["spectrum_head"] = vector_to_json(model.spectrum_head);
    out << doc.dump() << '\n';
}

FableModel read_model(std::istream& in) {
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("model artifact is not valid JSON: ") + e.what());
    }
    if (!doc.contains("format") || doc["format"] != kModelFormatTag)
        throw Error(ErrorCode::MagicMismatch, std::string("expected format tag ") + kModelFormatTag);
    try {
        FableModel m;
        m.n = doc.at("n").get<Index>();
        m.p = doc.at("p").get<Index>();
        m.k = doc.at("k").get<int>();
        m.tau_sq = doc.at("tau_sq").get<double>();
        m.gamma0 = doc.at("gamma0").get<double>();
        m.delta0_sq = doc.at("delta0_sq").get<double>();
        m.gamma_n = doc.at("gamma_n").get<double>();
        m.rho = doc.at("rho").get<double>();
        m.rho_strategy = parse_rho_strategy(doc.at("rho_strategy").get<std::string>());
        m.S0 = doc.at("S0").get<double>();
        if (doc.contains("rank")) {
            const json& r = doc["rank"];
            RankSelection rank;
            rank.k_hat = r.at("k_hat").get<int>();
            rank.K0 = r.at("K0").get<int>();
            rank.S0 = r.at("S0").get<double>();
            for (const json& pair : r.at("jic")) {
                // -inf JIC values are stored as null
                const double value = pair[1].is_null() ? -std::numeric_limits<double>::infinity()
                                                       : pair[1].get<double>();
                rank.jic_values.emplace_back(pair[0].get<int>(), value);
            }
            m.rank = std::move(rank);
        }
        m.mu = matrix_from_json(doc.at("mu"));
        m.delta_sq = vector_from_json(doc.at("delta_sq"));
        m.V_sq = vector_from_json(doc.at("V_sq"));
        m.L_sq = vector_from_json(doc.at("L_sq"));
        m.U = matrix_from_json(doc.at("U"));
        m.spectrum_head = vector_from_json(doc.at("spectrum_head"));
        if (m.mu.rows() != m.p || m.mu.cols() != m.k || m.delta_sq.size() != m.p ||
            m.V_sq.size() != m.p || m.L_sq.size() != m.p)
            throw Error(ErrorCode::ShapeError, "model fields disagree with the declared (p, k)");
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed model artifact: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const FableModel& model) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    write_model(out, model);
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

FableModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open model file " + path.string());
    return read_model(in);
}

}  // namespace fable
