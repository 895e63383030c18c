#pragma once

// JSON ingestion and serialization of workload specs.
//
// { "k": int,
//   "classes": [ { "need": int, "prob": number,
//                  "duration": { "type": "exp", "rate": number }
//                            | { "type": "phase", "init": [number], "subgen": [[number]] } } ] }
//
// Exit rates are never read from the file; they follow from the sub-generator.

#include <cstddef>
#include <fstream>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include <json.hpp>

#include "marcq/errors.hpp"
#include "marcq/workload.hpp"

namespace marcq {

namespace detail {

template <typename T>
T json_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw ParseError(where + ": missing field \"" + key + "\"");
    }
    const auto& v = obj.at(key);
    if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) {
            throw ParseError(where + ": field \"" + key + "\" must be an integer");
        }
    } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) {
            throw ParseError(where + ": field \"" + key + "\" must be a number");
        }
    }
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": field \"" + key + "\": " + e.what());
    }
}

inline PhaseType parse_duration(const nlohmann::json& d, const std::string& where) {
    const auto type = json_field<std::string>(d, "type", where);
    if (type == "exp") {
        return PhaseType::exponential(json_field<double>(d, "rate", where));
    }
    if (type != "phase") {
        throw ParseError(where + ": unknown duration type \"" + type + "\"");
    }
    const auto init = json_field<std::vector<double>>(d, "init", where);
    const auto rows = json_field<std::vector<std::vector<double>>>(d, "subgen", where);
    Eigen::VectorXd v(static_cast<Eigen::Index>(init.size()));
    for (std::size_t i = 0; i < init.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = init[i];
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) {
            throw ValidationError(where + ": subgen must be square");
        }
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return PhaseType(std::move(v), std::move(m));
}

} // namespace detail

inline WorkloadSpec spec_from_json(const nlohmann::json& doc) {
    const int k = detail::json_field<int>(doc, "k", "workload");
    if (!doc.contains("classes") || !doc.at("classes").is_array()) {
        throw ParseError("workload: \"classes\" must be an array");
    }
    std::vector<JobClass> classes;
    std::size_t i = 0;
    for (const auto& c : doc.at("classes")) {
        const std::string where = "classes[" + std::to_string(i++) + "]";
        const int need = detail::json_field<int>(c, "need", where);
        const double prob = detail::json_field<double>(c, "prob", where);
        if (!c.contains("duration")) {
            throw ParseError(where + ": missing field \"duration\"");
        }
        classes.emplace_back(need, prob, detail::parse_duration(c.at("duration"), where + ".duration"));
    }
    return WorkloadSpec(k, std::move(classes));
}

inline WorkloadSpec parse_spec(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("workload: malformed JSON: ") + e.what());
    }
    return spec_from_json(doc);
}

inline WorkloadSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("workload: cannot open " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str());
}

inline nlohmann::json to_json(const PhaseType& d) {
    if (d.phases() == 1) {
        return {{"type", "exp"}, {"rate", d.leave_rate(0)}};
    }
    std::vector<double> init(d.phases());
    std::vector<std::vector<double>> subgen(d.phases(), std::vector<double>(d.phases()));
    for (std::size_t i = 0; i < d.phases(); ++i) {
        init[i] = d.init(i);
        for (std::size_t j = 0; j < d.phases(); ++j) {
            subgen[i][j] = d.rate(i, j);
        }
    }
    return {{"type", "phase"}, {"init", init}, {"subgen", subgen}};
}

inline nlohmann::json to_json(const WorkloadSpec& spec) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : spec.classes()) {
        classes.push_back({{"need", c.need()}, {"prob", c.prob()}, {"duration", to_json(c.duration())}});
    }
    return {{"k", spec.k()}, {"classes", classes}};
}

} // namespace marcq
