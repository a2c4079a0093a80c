#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tsagent/error.hpp"

namespace tsagent {

/// Insertion-ordered JSON; emitted objects keep their declared field order.
using Json = nlohmann::ordered_json;

/// Compact dump with keys sorted recursively; whitespace and key order insensitive.
inline std::string canonical_dump(const Json& j) {
    return nlohmann::json::parse(j.dump()).dump();
}

inline Json parse_json(std::string_view text, ErrorCode code = ErrorCode::Parse) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        fail(code, std::string("invalid JSON: ") + e.what());
    }
}

inline std::vector<Json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path);
    std::vector<Json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::exception& e) {
            fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        fail(ErrorCode::Parse, path + ": " + e.what());
    }
}

/// Shortest round-trip decimal text; "nan" for missing values.
inline std::string format_number(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline std::string join_numbers(const std::vector<double>& xs, std::string_view sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += sep;
        out += format_number(xs[i]);
    }
    return out;
}

/// Reads an array of numbers where null stands for a missing value.
inline std::vector<double> numbers_from_json(const Json& arr, const std::string& field) {
    require(arr.is_array(), ErrorCode::Schema, field + " must be an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (v.is_null()) {
            out.push_back(std::nan(""));
        } else {
            require(v.is_number(), ErrorCode::Schema, field + " must hold numbers");
            out.push_back(v.get<double>());
        }
    }
    return out;
}

inline Json numbers_to_json(const std::vector<double>& xs) {
    Json arr = Json::array();
    for (double x : xs) {
        if (std::isfinite(x))
            arr.push_back(x);
        else
            arr.push_back(nullptr);
    }
    return arr;
}

}  // namespace tsagent
