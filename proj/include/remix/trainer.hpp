// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Plain-SGD finetuning for the three model modes. Routing is per example.
// Randomness per step comes from RngStream(seed, "batch", step) and
// RngStream(seed, "rollout", step); examples and rollouts are reduced in a
// fixed order, so a run is a pure function of (config, task).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "remix/errors.hpp"
#include "remix/model.hpp"
#include "remix/task.hpp"

namespace remix {

/// Loss became non-finite during training.
class DivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

struct TrainConfig {
    TrainMode mode = TrainMode::remix;
    std::size_t layers = 2;
    std::size_t n = 8;
    std::size_t k = 2;
    std::size_t rank = 4;
    OmegaScheme omega_scheme = OmegaScheme::rslora;
    double omega_alpha = 2.0;
    /// M, rollouts per example (remix only).
    std::size_t rollouts = 4;
    double learning_rate = 4.0;
    /// Negative means "same as learning_rate".
    double router_learning_rate = 20.0;
    /// Router init std-dev; <= 0 selects sqrt(2 / D).
    double router_sigma = 1.0;
    std::size_t steps = 2000;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    /// Zeroes wallclock_ms so metric streams are byte-comparable.
    bool bit_exact = false;
    bool train_adapters = true;
    bool train_head = true;

    double effective_router_lr() const { return router_learning_rate < 0.0 ? learning_rate : router_learning_rate; }
    /// Throws DomainError: remix needs M >= 2 and 1 <= k <= n; all sizes >= 1.
    void validate() const;
};

struct MetricsRow {
    std::size_t step = 0;
    std::string split = "train";
    double loss = 0.0;
    double ess_min = 0.0;
    double ess_mean = 0.0;
    double router_grad_norm = 0.0;
    double lora_grad_norm = 0.0;
    double wallclock_ms = 0.0;
    /// Batch-mean ESS of the routing weights at each layer.
    std::vector<double> ess_layer;

    /// min over layers of ess_layer.
    double worst_layer_ess() const;
};

using Batch = std::span<const Example* const>;

MetricsRow train_step_remix(Model& model, Batch batch, const TrainConfig& cfg, RngStream& rng);
/// Fully differentiable step; also used for single-lora models.
MetricsRow train_step_dense(Model& model, Batch batch, const TrainConfig& cfg);

/// Subset (ascending indices) -> number of examples that activated it.
using SelectionHistogram = std::map<IndexList, std::size_t>;

struct EvalResult {
    double loss = 0.0;
    std::size_t k = 0;
    std::size_t examples = 0;
    /// One histogram per layer; empty for dense models.
    std::vector<SelectionHistogram> histograms;
};

/// Mean loss under deterministic inference. k_override replaces k for top-k
/// selection only; omega keeps its trained value.
EvalResult evaluate(const Model& model, std::span<const Example> examples, std::size_t k,
                    std::optional<std::size_t> k_override = std::nullopt);

Model init_model(const TrainConfig& cfg, const Task& task);

struct TrainResult {
    Model model;
    std::vector<MetricsRow> rows;
    EvalResult eval;
};

using RowCallback = std::function<void(const MetricsRow&)>;

/// Runs cfg.steps steps (rows numbered 0 .. steps-1, each logged from the
/// forward pass of its own update), then evaluates on task.eval. Throws
/// DivergenceError on a non-finite loss after reporting every finite row.
TrainResult train(const TrainConfig& cfg, const Task& task, const RowCallback& on_row = {});

/// Continues training an existing model; rows are numbered from first_step.
std::vector<MetricsRow> train_model(Model& model, const TrainConfig& cfg, std::span<const Example> data,
                                    std::size_t first_step, const RowCallback& on_row = {});

std::string metrics_csv_header(std::size_t layers);
/// Shortest round-trip decimal for every value, so equal rows print identically.
std::string metrics_csv_line(const MetricsRow& row);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace remix
