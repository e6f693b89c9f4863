// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON serialization of mixture layers. A layer document has the fields
//   w, lora_a (array, one matrix per adapter), lora_b (same), router_p,
//   mode ("remix" | "dense-baseline"), omega_scheme ("lora" | "rslora"),
//   k, rank, omega_alpha
// and each matrix is {"rows": R, "cols": C, "data": [row-major doubles]}.
// Doubles are written in shortest round-trip form, so a save/load cycle is exact.

#pragma once

#include <json.hpp>

#include "remix/mixture_layer.hpp"

namespace remix {

nlohmann::json matrix_to_json(const Matrix& m);
/// Throws FormatError on missing fields, wrong sizes, or non-finite entries.
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json layer_to_json(const MixtureLayer& layer);
/// Throws FormatError on malformed documents and on shape inconsistencies.
MixtureLayer layer_from_json(const nlohmann::json& j);

}  // namespace remix
