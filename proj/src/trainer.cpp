// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>

#include "remix/rloo.hpp"

namespace remix {

namespace {

struct StepAccumulator {
    std::vector<LayerGrads> layers;
    Matrix head;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::vector<double> ess_sum;
    std::size_t ess_count = 0;
    double ess_min = std::numeric_limits<double>::infinity();

    explicit StepAccumulator(const Model& model)
        : head(model.head.rows(), model.head.cols()), ess_sum(model.depth(), 0.0) {
        for (const auto& l : model.layers) {
            layers.push_back(zero_grads(l));
        }
    }

    void add(const ModelGrads& g, double scale) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            accumulate(layers[l], scale, g.layers[l]);
        }
        add_scaled(head, scale, g.head);
    }

    void observe(const ModelTrace& trace, double loss) {
        loss_sum += loss;
        ++loss_count;
        for (std::size_t l = 0; l < trace.caches.size(); ++l) {
            const double e = ess(trace.caches[l].pi);
            ess_sum[l] += e;
            ess_min = std::min(ess_min, e);
        }
        ++ess_count;
    }
};

void check_batch(const Model& model, Batch batch) {
    if (batch.empty()) {
        throw DomainError("training step: empty batch");
    }
    for (const Example* e : batch) {
        if (e->x.size() != model.dim_in() || e->y.size() != model.dim_out()) {
            throw ShapeError("training step: example dimensions do not match the model");
        }
    }
}

/// Applies one SGD update and fills the metric fields derived from the accumulator.
MetricsRow finish_step(Model& model, const StepAccumulator& acc, const TrainConfig& cfg) {
    MetricsRow row;
    row.loss = acc.loss_sum / static_cast<double>(acc.loss_count);
    row.ess_min = acc.ess_min;
    double ess_total = 0.0;
    for (double s : acc.ess_sum) {
        row.ess_layer.push_back(s / static_cast<double>(acc.ess_count));
        ess_total += s;
    }
    row.ess_mean = ess_total / static_cast<double>(acc.ess_count * acc.ess_sum.size());

    double router_sq = 0.0;
    double lora_sq = 0.0;
    for (const auto& g : acc.layers) {
        const double r = frobenius_norm(g.router);
        router_sq += r * r;
        for (std::size_t i = 0; i < g.a.size(); ++i) {
            const double a = frobenius_norm(g.a[i]);
            const double b = frobenius_norm(g.b[i]);
            lora_sq += a * a + b * b;
        }
    }
    row.router_grad_norm = std::sqrt(router_sq);
    row.lora_grad_norm = std::sqrt(lora_sq);

    if (!std::isfinite(row.loss)) {
        return row;
    }
    const double lr = cfg.learning_rate;
    const double router_lr = cfg.effective_router_lr();
    for (std::size_t l = 0; l < model.depth(); ++l) {
        MixtureLayer& layer = model.layers[l];
        if (router_lr != 0.0) {
            add_scaled(layer.router, -router_lr, acc.layers[l].router);
        }
        if (cfg.train_adapters && lr != 0.0) {
            for (std::size_t i = 0; i < layer.n(); ++i) {
                add_scaled(layer.loras[i].a, -lr, acc.layers[l].a[i]);
                add_scaled(layer.loras[i].b, -lr, acc.layers[l].b[i]);
            }
        }
    }
    if (cfg.train_head && lr != 0.0) {
        add_scaled(model.head, -lr, acc.head);
    }
    return row;
}

}  // namespace

void TrainConfig::validate() const {
    if (layers < 1 || n < 1 || rank < 1 || steps < 1 || batch_size < 1) {
        throw DomainError("train config: layers, n, rank, steps and batch_size must be at least 1");
    }
    if (mode != TrainMode::single_lora && (k < 1 || k > n)) {
        throw DomainError("train config: k must satisfy 1 <= k <= n");
    }
    if (mode == TrainMode::remix && rollouts < 2) {
        throw DomainError("train config: rollouts must be at least 2 in remix mode");
    }
    if (!std::isfinite(learning_rate) || learning_rate < 0.0 || !std::isfinite(router_learning_rate)) {
        throw DomainError("train config: learning_rate must be finite and non-negative");
    }
    if (!(omega_alpha > 0.0) || !std::isfinite(router_sigma)) {
        throw DomainError("train config: omega_alpha must be positive and router_sigma finite");
    }
}

double MetricsRow::worst_layer_ess() const {
    return ess_layer.empty() ? 0.0 : *std::min_element(ess_layer.begin(), ess_layer.end());
}

MetricsRow train_step_remix(Model& model, Batch batch, const TrainConfig& cfg, RngStream& rng) {
    if (model.mode != TrainMode::remix) {
        throw DomainError("train_step_remix: model is not in remix mode");
    }
    if (cfg.rollouts < 2) {
        throw DomainError("train_step_remix: rollouts must be at least 2");
    }
    check_batch(model, batch);
    StepAccumulator acc(model);
    const double lora_scale = 1.0 / static_cast<double>(batch.size() * cfg.rollouts);
    const double router_scale = 1.0 / static_cast<double>(batch.size());
    for (const Example* e : batch) {
        RolloutSet set;
        set.rollouts.reserve(cfg.rollouts);
        for (std::size_t m = 0; m < cfg.rollouts; ++m) {
            Rollout r;
            const ModelTrace trace = forward_sampled(model, e->x, cfg.k, rng, r.selection, r.score_grads);
            r.loss = output_loss(trace.output, e->y);
            acc.observe(trace, r.loss);
            acc.add(backward_model(model, trace, e->y), lora_scale);
            set.rollouts.push_back(std::move(r));
        }
        const auto router = rloo_router_grad(set);
        for (std::size_t l = 0; l < model.depth(); ++l) {
            add_scaled(acc.layers[l].router, router_scale, router[l]);
        }
    }
    return finish_step(model, acc, cfg);
}

MetricsRow train_step_dense(Model& model, Batch batch, const TrainConfig& cfg) {
    if (model.mode == TrainMode::remix) {
        throw DomainError("train_step_dense: model is in remix mode");
    }
    check_batch(model, batch);
    StepAccumulator acc(model);
    const Selection single = single_lora_selection(model.depth());
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const Example* e : batch) {
        const ModelTrace trace = forward_model(model, e->x, single);
        const double loss = output_loss(trace.output, e->y);
        acc.observe(trace, loss);
        acc.add(backward_model(model, trace, e->y), scale);
    }
    return finish_step(model, acc, cfg);
}

EvalResult evaluate(const Model& model, std::span<const Example> examples, std::size_t k,
                    std::optional<std::size_t> k_override) {
    EvalResult out;
    out.k = k_override.value_or(k);
    out.examples = examples.size();
    if (model.mode != TrainMode::dense_baseline) {
        out.histograms.resize(model.depth());
    }
    if (examples.empty()) {
        return out;
    }
    double sum = 0.0;
    Selection sel;
    for (const Example& e : examples) {
        const ModelTrace trace = forward_inference(model, e.x, out.k, sel);
        sum += output_loss(trace.output, e.y);
        for (std::size_t l = 0; l < out.histograms.size(); ++l) {
            IndexList subset = sel.per_layer[l];
            std::sort(subset.begin(), subset.end());
            ++out.histograms[l][subset];
        }
    }
    out.loss = sum / static_cast<double>(examples.size());
    return out;
}

Model init_model(const TrainConfig& cfg, const Task& task) {
    cfg.validate();
    if (task.truth.base_weights.size() != cfg.layers) {
        throw DomainError("train: task was generated for a different number of layers");
    }
    ModelInit init;
    init.mode = cfg.mode;
    init.n = cfg.n;
    init.k = cfg.k;
    init.rank = cfg.rank;
    init.omega_scheme = cfg.omega_scheme;
    init.omega_alpha = cfg.omega_alpha;
    init.router_sigma = cfg.router_sigma;
    RngStream rng(cfg.seed, "model-init", 0);
    return make_model(task.truth, init, rng);
}

std::vector<MetricsRow> train_model(Model& model, const TrainConfig& cfg, std::span<const Example> data,
                                    std::size_t first_step, const RowCallback& on_row) {
    cfg.validate();
    if (data.empty()) {
        throw DomainError("train: empty training set");
    }
    std::vector<MetricsRow> rows;
    rows.reserve(cfg.steps);
    std::vector<const Example*> batch(cfg.batch_size);
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        const std::size_t step = first_step + s;
        const auto start = std::chrono::steady_clock::now();
        RngStream batch_rng(cfg.seed, "batch", step);
        for (auto& e : batch) {
            e = &data[batch_rng.below(data.size())];
        }
        MetricsRow row;
        try {
            if (model.mode == TrainMode::remix) {
                RngStream rollout_rng(cfg.seed, "rollout", step);
                row = train_step_remix(model, batch, cfg, rollout_rng);
            } else {
                row = train_step_dense(model, batch, cfg);
            }
        } catch (const DegenerateResidualError& e) {
            throw DivergenceError("training diverged: router collapsed at step " + std::to_string(step) + " (" +
                                  e.what() + ")");
        }
        row.step = step;
        if (!std::isfinite(row.loss)) {
            throw DivergenceError("training diverged: non-finite loss at step " + std::to_string(step));
        }
        if (!cfg.bit_exact) {
            row.wallclock_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
        if (on_row) {
            on_row(row);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

TrainResult train(const TrainConfig& cfg, const Task& task, const RowCallback& on_row) {
    TrainResult result{init_model(cfg, task), {}, {}};
    result.rows = train_model(result.model, cfg, task.train, 0, on_row);
    result.eval = evaluate(result.model, task.eval, cfg.k);
    return result;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string metrics_csv_header(std::size_t layers) {
    std::string h = "step,split,loss,ess_min,ess_mean,router_grad_norm,lora_grad_norm,wallclock_ms";
    for (std::size_t l = 0; l < layers; ++l) {
        h += ",ess_layer_" + std::to_string(l);
    }
    return h;
}

std::string metrics_csv_line(const MetricsRow& row) {
    std::string s = std::to_string(row.step) + "," + row.split;
    for (double v : {row.loss, row.ess_min, row.ess_mean, row.router_grad_norm, row.lora_grad_norm, row.wallclock_ms}) {
        s += "," + format_double(v);
    }
    for (double v : row.ess_layer) {
        s += "," + format_double(v);
    }
    return s;
}

}  // namespace remix
