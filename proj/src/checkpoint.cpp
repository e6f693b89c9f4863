// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/checkpoint.hpp"

#include <cmath>
#include <string>

#include "remix/errors.hpp"

namespace remix {

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* name) {
    if (!j.is_object() || !j.contains(name)) {
        throw FormatError(std::string("checkpoint: missing field '") + name + "'");
    }
    return j.at(name);
}

std::size_t count_field(const nlohmann::json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_number_unsigned()) {
        throw FormatError(std::string("checkpoint: field '") + name + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::string string_field(const nlohmann::json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_string()) {
        throw FormatError(std::string("checkpoint: field '") + name + "' must be a string");
    }
    return v.get<std::string>();
}

}  // namespace

nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const std::size_t rows = count_field(j, "rows");
    const std::size_t cols = count_field(j, "cols");
    const auto& data = field(j, "data");
    if (!data.is_array() || data.size() != rows * cols) {
        throw FormatError("checkpoint: matrix data length does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
    std::vector<double> values;
    values.reserve(data.size());
    for (const auto& v : data) {
        if (!v.is_number()) {
            throw FormatError("checkpoint: matrix entries must be numbers");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            throw FormatError("checkpoint: non-finite matrix entry");
        }
        values.push_back(d);
    }
    return Matrix(rows, cols, std::move(values));
}

nlohmann::json layer_to_json(const MixtureLayer& layer) {
    nlohmann::json a = nlohmann::json::array();
    nlohmann::json b = nlohmann::json::array();
    for (const auto& p : layer.loras) {
        a.push_back(matrix_to_json(p.a));
        b.push_back(matrix_to_json(p.b));
    }
    return {{"w", matrix_to_json(layer.w)},
            {"lora_a", std::move(a)},
            {"lora_b", std::move(b)},
            {"router_p", matrix_to_json(layer.router)},
            {"mode", std::string(to_string(layer.mode))},
            {"omega_scheme", std::string(to_string(layer.omega_scheme))},
            {"k", layer.k},
            {"rank", layer.rank()},
            {"omega_alpha", layer.omega_alpha}};
}

MixtureLayer layer_from_json(const nlohmann::json& j) {
    MixtureLayer layer;
    try {
        layer.w = matrix_from_json(field(j, "w"));
        layer.router = matrix_from_json(field(j, "router_p"));
        const auto& a = field(j, "lora_a");
        const auto& b = field(j, "lora_b");
        if (!a.is_array() || !b.is_array() || a.size() != b.size()) {
            throw FormatError("checkpoint: lora_a and lora_b must be arrays of equal length");
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            layer.loras.push_back({matrix_from_json(a[i]), matrix_from_json(b[i])});
        }
        layer.mode = parse_layer_mode(string_field(j, "mode"));
        layer.omega_scheme = parse_omega_scheme(string_field(j, "omega_scheme"));
        layer.k = count_field(j, "k");
        const auto& alpha = field(j, "omega_alpha");
        if (!alpha.is_number() || !(alpha.get<double>() > 0.0)) {
            throw FormatError("checkpoint: omega_alpha must be a positive number");
        }
        layer.omega_alpha = alpha.get<double>();
        const std::size_t rank = count_field(j, "rank");
        layer.validate();
        if (rank != layer.rank()) {
            throw FormatError("checkpoint: declared rank " + std::to_string(rank) + " disagrees with adapter shapes");
        }
    } catch (const ShapeError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return layer;
}

}  // namespace remix
