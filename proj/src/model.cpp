// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/model.hpp"

#include <cmath>
#include <string>

#include "remix/checkpoint.hpp"
#include "remix/errors.hpp"

namespace remix {

namespace {

void apply_tanh(Vector& v) {
    for (double& e : v) {
        e = std::tanh(e);
    }
}

template <typename Choose>
ModelTrace run_forward(const Model& model, std::span<const double> x, Choose&& choose) {
    ModelTrace trace;
    const std::size_t depth = model.depth();
    trace.inputs.reserve(depth);
    trace.caches.reserve(depth);
    Vector h(x.begin(), x.end());
    for (std::size_t l = 0; l < depth; ++l) {
        const MixtureLayer& layer = model.layers[l];
        ForwardResult r = model.mode == TrainMode::dense_baseline ? forward_dense(layer, h)
                                                                  : forward_remix(layer, h, choose(l, h));
        trace.inputs.push_back(std::move(h));
        trace.caches.push_back(std::move(r.cache));
        h = std::move(r.y);
        if (l + 1 < depth) {
            apply_tanh(h);
        }
    }
    trace.output = matvec(model.head, h);
    trace.hidden = std::move(h);
    return trace;
}

}  // namespace

std::string_view to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::remix:
            return "remix";
        case TrainMode::dense_baseline:
            return "dense-baseline";
        case TrainMode::single_lora:
            return "single-lora";
    }
    return "remix";
}

TrainMode parse_train_mode(std::string_view s) {
    if (s == "remix") {
        return TrainMode::remix;
    }
    if (s == "dense-baseline") {
        return TrainMode::dense_baseline;
    }
    if (s == "single-lora") {
        return TrainMode::single_lora;
    }
    throw DomainError("unknown mode '" + std::string(s) + "' (expected remix, dense-baseline or single-lora)");
}

void Model::validate() const {
    if (layers.empty()) {
        throw ShapeError("model: no layers");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].validate();
        if (l > 0 && layers[l].dim_in() != layers[l - 1].dim_out()) {
            throw ShapeError("model: layer " + std::to_string(l) + " input does not match previous output");
        }
        const LayerMode expected = mode == TrainMode::dense_baseline ? LayerMode::dense_baseline : LayerMode::remix;
        if (layers[l].mode != expected) {
            throw DomainError("model: layer " + std::to_string(l) + " mode disagrees with model mode");
        }
        if (mode == TrainMode::single_lora && layers[l].n() != 1) {
            throw DomainError("model: single-lora layers must hold exactly one adapter");
        }
    }
    if (head.cols() != layers.back().dim_out()) {
        throw ShapeError("model: head does not match last layer output");
    }
}

Model make_model(const TaskTruth& truth, const ModelInit& init, RngStream& rng) {
    Model model;
    model.mode = init.mode;
    LayerInit li;
    li.n = init.n;
    li.k = init.k;
    li.rank = init.rank;
    li.omega_scheme = init.omega_scheme;
    li.omega_alpha = init.omega_alpha;
    li.router_sigma = init.router_sigma;
    li.mode = init.mode == TrainMode::dense_baseline ? LayerMode::dense_baseline : LayerMode::remix;
    if (init.mode == TrainMode::single_lora) {
        li.n = 1;
        li.k = 1;
    }
    for (const Matrix& w : truth.base_weights) {
        model.layers.push_back(make_mixture_layer(w, li, rng));
    }
    model.head = truth.head;
    model.validate();
    return model;
}

Selection single_lora_selection(std::size_t layers) {
    return Selection{std::vector<IndexList>(layers, IndexList{0})};
}

ModelTrace forward_model(const Model& model, std::span<const double> x, const Selection& selection) {
    if (model.mode != TrainMode::dense_baseline && selection.per_layer.size() != model.depth()) {
        throw ShapeError("selection has " + std::to_string(selection.per_layer.size()) + " layers, model has " +
                         std::to_string(model.depth()));
    }
    return run_forward(model, x, [&](std::size_t l, const Vector&) -> const IndexList& {
        return selection.per_layer[l];
    });
}

ModelTrace forward_sampled(const Model& model, std::span<const double> x, std::size_t k, RngStream& rng,
                           Selection& selection, std::vector<Matrix>& score_grads) {
    selection.per_layer.assign(model.depth(), IndexList{});
    score_grads.clear();
    return run_forward(model, x, [&](std::size_t l, const Vector& h) -> const IndexList& {
        const RoutingDistribution q = route(model.layers[l].router, h);
        selection.per_layer[l] = sample_without_replacement(q, k, rng);
        score_grads.push_back(selection_score_grad(q, h, selection.per_layer[l]));
        return selection.per_layer[l];
    });
}

ModelTrace forward_inference(const Model& model, std::span<const double> x, std::size_t k, Selection& selection) {
    selection.per_layer.assign(model.depth(), IndexList{});
    if (model.mode == TrainMode::single_lora) {
        selection = single_lora_selection(model.depth());
        return forward_model(model, x, selection);
    }
    return run_forward(model, x, [&](std::size_t l, const Vector& h) -> const IndexList& {
        selection.per_layer[l] = top_k(route(model.layers[l].router, h), k);
        return selection.per_layer[l];
    });
}

double output_loss(std::span<const double> output, std::span<const double> target) {
    if (output.size() != target.size()) {
        throw ShapeError("loss: output and target dimensions differ");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
        const double d = output[i] - target[i];
        s += d * d;
    }
    return s / (2.0 * static_cast<double>(output.size()));
}

ModelGrads backward_model(const Model& model, const ModelTrace& trace, std::span<const double> target) {
    if (target.size() != trace.output.size()) {
        throw ShapeError("backward: target dimension differs from output");
    }
    const double inv_o = 1.0 / static_cast<double>(target.size());
    Vector dy(target.size());
    for (std::size_t i = 0; i < dy.size(); ++i) {
        dy[i] = (trace.output[i] - target[i]) * inv_o;
    }
    ModelGrads grads;
    grads.head = outer(dy, trace.hidden);
    Vector g = matvec_transposed(model.head, dy);
    grads.layers.resize(model.depth());
    for (std::size_t l = model.depth(); l-- > 0;) {
        if (l + 1 < model.depth()) {
            // The next layer's input is tanh of this layer's output.
            const Vector& a = trace.inputs[l + 1];
            for (std::size_t d = 0; d < g.size(); ++d) {
                g[d] *= 1.0 - a[d] * a[d];
            }
        }
        const MixtureLayer& layer = model.layers[l];
        grads.layers[l] = model.mode == TrainMode::dense_baseline ? backward_dense(layer, trace.caches[l], g)
                                                                  : backward_lora(layer, trace.caches[l], g);
        g = grads.layers[l].x;
    }
    return grads;
}

double sft_loss(const Model& model, const Example& example, const Selection& selection) {
    if (selection.per_layer.size() != model.depth()) {
        throw ShapeError("sft_loss: selection layer count does not match model depth");
    }
    return output_loss(forward_model(model, example.x, selection).output, example.y);
}

nlohmann::json model_to_json(const Model& model) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : model.layers) {
        layers.push_back(layer_to_json(l));
    }
    return {{"mode", std::string(to_string(model.mode))},
            {"activation", "tanh"},
            {"head", matrix_to_json(model.head)},
            {"layers", std::move(layers)}};
}

Model model_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw FormatError("checkpoint: document is not an object");
    }
    for (const char* key : {"mode", "activation", "head", "layers"}) {
        if (!j.contains(key)) {
            throw FormatError(std::string("checkpoint: missing field '") + key + "'");
        }
    }
    if (j.at("activation") != "tanh") {
        throw FormatError("checkpoint: unsupported activation");
    }
    if (!j.at("mode").is_string() || !j.at("layers").is_array()) {
        throw FormatError("checkpoint: 'mode' must be a string and 'layers' an array");
    }
    Model model;
    try {
        model.mode = parse_train_mode(j.at("mode").get<std::string>());
        model.head = matrix_from_json(j.at("head"));
        for (const auto& l : j.at("layers")) {
            model.layers.push_back(layer_from_json(l));
        }
        model.validate();
    } catch (const ShapeError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return model;
}

}  // namespace remix
