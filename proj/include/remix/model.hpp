// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Feedforward stack of mixture layers with tanh between layers, no activation
// after the last, and a trainable linear head. Loss is (1 / 2O) |y - t|^2.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "remix/mixture_layer.hpp"
#include "remix/rng.hpp"
#include "remix/routing.hpp"
#include "remix/task.hpp"

namespace remix {

enum class TrainMode { remix, dense_baseline, single_lora };

std::string_view to_string(TrainMode mode);
/// Accepts "remix", "dense-baseline", "single-lora".
TrainMode parse_train_mode(std::string_view s);

struct Model {
    std::vector<MixtureLayer> layers;
    Matrix head;
    TrainMode mode = TrainMode::remix;

    std::size_t depth() const { return layers.size(); }
    std::size_t dim_in() const { return layers.front().dim_in(); }
    std::size_t dim_out() const { return head.rows(); }
    void validate() const;
};

struct ModelInit {
    TrainMode mode = TrainMode::remix;
    std::size_t n = 8;
    std::size_t k = 2;
    std::size_t rank = 4;
    OmegaScheme omega_scheme = OmegaScheme::rslora;
    double omega_alpha = 2.0;
    double router_sigma = 0.0;
};

/// Frozen weights and head start from the task's shared network. single-lora
/// builds n = k = 1 remix layers, so it consumes the same draws as an n = 1 dense model.
Model make_model(const TaskTruth& truth, const ModelInit& init, RngStream& rng);

struct ModelTrace {
    /// inputs[l] is the input of layer l.
    std::vector<Vector> inputs;
    std::vector<LayerCache> caches;
    /// Output of the last mixture layer, fed to the head.
    Vector hidden;
    Vector output;
};

/// Remix and single-lora models use selection.per_layer[l] at layer l; dense models ignore it.
ModelTrace forward_model(const Model& model, std::span<const double> x, const Selection& selection);

/// Samples k adapters per layer without replacement from route(P, x^(l)) and
/// records grad_P log Q for each layer in score_grads.
ModelTrace forward_sampled(const Model& model, std::span<const double> x, std::size_t k, RngStream& rng,
                           Selection& selection, std::vector<Matrix>& score_grads);

/// Deterministic inference path: top_k per layer for remix, full mixture for dense.
ModelTrace forward_inference(const Model& model, std::span<const double> x, std::size_t k, Selection& selection);

/// The selection every single-lora forward uses: {0} at each layer.
Selection single_lora_selection(std::size_t layers);

double output_loss(std::span<const double> output, std::span<const double> target);

struct ModelGrads {
    std::vector<LayerGrads> layers;
    Matrix head;
};

/// Backpropagates output_loss through the head and the layer stack.
ModelGrads backward_model(const Model& model, const ModelTrace& trace, std::span<const double> target);

/// Loss of one example under a fixed selection. Throws ShapeError if the
/// selection does not have one entry per layer.
double sft_loss(const Model& model, const Example& example, const Selection& selection);

/// {"mode", "activation": "tanh", "head", "layers": [layer documents]}.
nlohmann::json model_to_json(const Model& model);
/// Throws FormatError on malformed documents or dimension chains that do not line up.
Model model_from_json(const nlohmann::json& j);

}  // namespace remix
