#pragma once

// JSON front-end for conductivity and diffeomorphism specs.

#include "illusion/conductivity.hpp"
#include "illusion/diffeo.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace illusion {

using json = nlohmann::json;

namespace detail {

template <class T>
T require(const json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key)) throw InvalidArgument(context + ": missing \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument(context + ": \"" + key + "\" has the wrong type");
    }
}

template <class T>
T optional_value(const json& j, const char* key, T fallback, const std::string& context) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return require<T>(j, key, context);
}

inline Mat2 matrix_from_json(const json& j, const std::string& context) {
    std::vector<std::vector<double>> rows;
    try {
        rows = j.get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
        throw InvalidArgument(context + ": expected a 2x2 array");
    }
    if (rows.size() != 2 || rows[0].size() != 2 || rows[1].size() != 2) throw InvalidArgument(context + ": expected a 2x2 array");
    Mat2 m;
    m << rows[0][0], rows[0][1], rows[1][0], rows[1][1];
    return m;
}

} // namespace detail

/// {"kind": "iso_const", "value": a} | {"kind": "aniso_const", "m": [[..],[..]]}
/// | {"kind": "rotated_diag", "values": [l1, l2], "angle": t} | {"kind": "radial_poly", "coeffs": [...]}
/// | {"kind": "aniso_radial", "m": [[..],[..]], "coeffs": [...]}
inline MatrixFunction matrix_function_from_json(const json& j) {
    const std::string ctx = "matrix function";
    const auto kind = detail::require<std::string>(j, "kind", ctx);
    if (kind == "iso_const") return iso_const(detail::require<double>(j, "value", kind));
    if (kind == "aniso_const") return aniso_const(detail::matrix_from_json(j.at("m"), kind));
    if (kind == "rotated_diag") {
        const auto values = detail::require<std::vector<double>>(j, "values", kind);
        if (values.size() != 2) throw InvalidArgument("rotated_diag: \"values\" needs two entries");
        return rotated_diag(values[0], values[1], detail::optional_value<double>(j, "angle", 0.0, kind));
    }
    if (kind == "radial_poly") return radial_poly(detail::require<std::vector<double>>(j, "coeffs", kind));
    if (kind == "aniso_radial") {
        if (!j.contains("m")) throw InvalidArgument("aniso_radial: missing \"m\"");
        return aniso_radial(detail::matrix_from_json(j.at("m"), kind), detail::require<std::vector<double>>(j, "coeffs", kind));
    }
    throw InvalidArgument("unknown matrix kind \"" + kind + "\"");
}

/// {"case": 1..6, "background": m, "inclusion": m, "r_D": r}; cases 3 and 6 take "field".
inline TensorField conductivity_from_json(const json& j) {
    const int case_id = detail::require<int>(j, "case", "conductivity");
    CaseParams p;
    if (j.contains("background")) p.background = matrix_function_from_json(j.at("background"));
    if (j.contains("inclusion")) p.inclusion = matrix_function_from_json(j.at("inclusion"));
    if (j.contains("field")) {
        if (p.inclusion) throw InvalidArgument("conductivity: give either \"field\" or \"inclusion\"");
        p.inclusion = matrix_function_from_json(j.at("field"));
    }
    if (j.contains("r_D")) p.inclusion_radius = detail::require<double>(j, "r_D", "conductivity");
    return make_case(case_id, p);
}

/// {"kind": "cloak", "eps", "r_D", "R"} | {"kind": "interior", "c", "r_D", "R"} | {"kind": "identity", "R"}
inline RadialDiffeo diffeo_from_json(const json& j, double default_outer_radius = 2.0) {
    const auto kind = detail::require<std::string>(j, "kind", "diffeo");
    const double R = detail::optional_value<double>(j, "R", default_outer_radius, "diffeo");
    if (kind == "identity") return make_identity_diffeo(R);
    if (kind == "cloak")
        return make_cloak_map(detail::require<double>(j, "eps", "cloak"), detail::optional_value<double>(j, "r_D", 1.0, "cloak"), R);
    if (kind == "interior")
        return make_interior_diffeo(detail::require<double>(j, "c", "interior"),
                                    detail::optional_value<double>(j, "r_D", 1.0, "interior"), R);
    throw InvalidArgument("unknown diffeo kind \"" + kind + "\"");
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("config not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidArgument("config " + path + " is not valid JSON: " + e.what());
    }
}

} // namespace illusion
