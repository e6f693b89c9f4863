// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/mixture_layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "remix/errors.hpp"

namespace remix {

namespace {

thread_local std::size_t g_low_rank_products = 0;

void require_distinct(std::size_t n, std::span<const std::size_t> active) {
    std::vector<bool> seen(n, false);
    for (std::size_t i : active) {
        if (i >= n) {
            throw DomainError("forward_remix: adapter index " + std::to_string(i) + " out of range");
        }
        if (seen[i]) {
            throw DomainError("forward_remix: duplicate adapter index " + std::to_string(i));
        }
        seen[i] = true;
    }
}

/// Positions of active sorted by adapter index.
std::vector<std::size_t> ascending_positions(std::span<const std::size_t> active) {
    std::vector<std::size_t> pos(active.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    std::sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return active[a] < active[b]; });
    return pos;
}

}  // namespace

std::string_view to_string(LayerMode mode) {
    return mode == LayerMode::remix ? "remix" : "dense-baseline";
}

std::string_view to_string(OmegaScheme scheme) {
    return scheme == OmegaScheme::lora ? "lora" : "rslora";
}

LayerMode parse_layer_mode(std::string_view s) {
    if (s == "remix") {
        return LayerMode::remix;
    }
    if (s == "dense-baseline") {
        return LayerMode::dense_baseline;
    }
    throw DomainError("unknown layer mode '" + std::string(s) + "'");
}

OmegaScheme parse_omega_scheme(std::string_view s) {
    if (s == "lora") {
        return OmegaScheme::lora;
    }
    if (s == "rslora") {
        return OmegaScheme::rslora;
    }
    throw DomainError("unknown omega scheme '" + std::string(s) + "'");
}

double omega(OmegaScheme scheme, std::size_t k, std::size_t rank, double alpha) {
    if (k < 1 || rank < 1) {
        throw DomainError("omega: k and rank must be at least 1");
    }
    const double kr = static_cast<double>(k) * static_cast<double>(rank);
    return scheme == OmegaScheme::lora ? alpha / kr : alpha / std::sqrt(kr);
}

void MixtureLayer::validate() const {
    if (loras.empty()) {
        throw DomainError("MixtureLayer: at least one adapter required");
    }
    if (k < 1 || k > loras.size()) {
        throw DomainError("MixtureLayer: need 1 <= k <= n");
    }
    if (w.rows() == 0 || w.cols() == 0) {
        throw ShapeError("MixtureLayer: empty frozen weight");
    }
    if (router.rows() != loras.size() || router.cols() != w.cols()) {
        throw ShapeError("MixtureLayer: router must be n x D_in");
    }
    const std::size_t r = rank();
    if (r < 1 || r > std::min(w.rows(), w.cols())) {
        throw DomainError("MixtureLayer: rank must lie in [1, min(D_in, D_out)]");
    }
    for (const auto& p : loras) {
        if (p.a.rows() != r || p.a.cols() != w.cols() || p.b.rows() != w.rows() || p.b.cols() != r) {
            throw ShapeError("MixtureLayer: adapter shapes disagree with rank " + std::to_string(r));
        }
    }
}

MixtureLayer make_mixture_layer(Matrix frozen_w, const LayerInit& init, RngStream& rng) {
    MixtureLayer layer;
    const std::size_t d_in = frozen_w.cols();
    const std::size_t d_out = frozen_w.rows();
    layer.w = std::move(frozen_w);
    layer.mode = init.mode;
    layer.omega_scheme = init.omega_scheme;
    layer.omega_alpha = init.omega_alpha;
    layer.k = init.k;
    const double sigma = init.router_sigma > 0.0 ? init.router_sigma : std::sqrt(2.0 / static_cast<double>(d_in));
    layer.router = gaussian_matrix(rng, init.n, d_in, sigma);
    const double a_sigma = 1.0 / std::sqrt(static_cast<double>(d_in));
    layer.loras.reserve(init.n);
    for (std::size_t i = 0; i < init.n; ++i) {
        LoRAPair pair{gaussian_matrix(rng, init.rank, d_in, a_sigma), Matrix(d_out, init.rank)};
        layer.loras.push_back(std::move(pair));
    }
    layer.validate();
    return layer;
}

ForwardResult forward_remix(const MixtureLayer& layer, std::span<const double> x,
                            std::span<const std::size_t> active) {
    require_distinct(layer.n(), active);
    ForwardResult out;
    out.y = matvec(layer.w, x);
    const double weight = layer.omega();
    LayerCache& cache = out.cache;
    cache.mode = LayerMode::remix;
    cache.x.assign(x.begin(), x.end());
    cache.active.assign(active.begin(), active.end());
    cache.pi.assign(layer.n(), 0.0);
    cache.ax.resize(active.size());
    // Accumulate in ascending adapter order so y depends on the set, not the draw order.
    for (std::size_t j : ascending_positions(active)) {
        const std::size_t i = active[j];
        Vector ax = matvec(layer.loras[i].a, x);
        const Vector bax = matvec(layer.loras[i].b, ax);
        ++g_low_rank_products;
        for (std::size_t d = 0; d < out.y.size(); ++d) {
            out.y[d] += weight * bax[d];
        }
        cache.pi[i] = weight;
        cache.ax[j] = std::move(ax);
    }
    return out;
}

ForwardResult forward_dense(const MixtureLayer& layer, std::span<const double> x) {
    ForwardResult out;
    out.y = matvec(layer.w, x);
    LayerCache& cache = out.cache;
    cache.mode = LayerMode::dense_baseline;
    cache.x.assign(x.begin(), x.end());
    cache.pi = route(layer.router, x).probs;
    const std::size_t n = layer.n();
    cache.active.resize(n);
    cache.ax.reserve(n);
    cache.bax.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        cache.active[i] = i;
        Vector ax = matvec(layer.loras[i].a, x);
        Vector bax = matvec(layer.loras[i].b, ax);
        ++g_low_rank_products;
        for (std::size_t d = 0; d < out.y.size(); ++d) {
            out.y[d] += cache.pi[i] * bax[d];
        }
        cache.ax.push_back(std::move(ax));
        cache.bax.push_back(std::move(bax));
    }
    return out;
}

LayerGrads zero_grads(const MixtureLayer& layer) {
    LayerGrads g;
    g.a.reserve(layer.n());
    g.b.reserve(layer.n());
    for (const auto& p : layer.loras) {
        g.a.emplace_back(p.a.rows(), p.a.cols());
        g.b.emplace_back(p.b.rows(), p.b.cols());
    }
    g.router = Matrix(layer.router.rows(), layer.router.cols());
    g.x.assign(layer.dim_in(), 0.0);
    return g;
}

LayerGrads backward_lora(const MixtureLayer& layer, const LayerCache& cache, std::span<const double> g) {
    if (cache.mode != LayerMode::remix) {
        throw DomainError("backward_lora: cache was not produced by forward_remix");
    }
    if (g.size() != layer.dim_out()) {
        throw ShapeError("backward_lora: upstream gradient has wrong dimension");
    }
    LayerGrads grads = zero_grads(layer);
    grads.x = matvec_transposed(layer.w, g);
    const double weight = layer.omega();
    for (std::size_t j : ascending_positions(cache.active)) {
        const std::size_t i = cache.active[j];
        const Vector btg = matvec_transposed(layer.loras[i].b, g);
        add_outer(grads.b[i], weight, g, cache.ax[j]);
        add_outer(grads.a[i], weight, btg, cache.x);
        const Vector atbtg = matvec_transposed(layer.loras[i].a, btg);
        for (std::size_t d = 0; d < grads.x.size(); ++d) {
            grads.x[d] += weight * atbtg[d];
        }
    }
    return grads;
}

LayerGrads backward_dense(const MixtureLayer& layer, const LayerCache& cache, std::span<const double> g) {
    if (cache.mode != LayerMode::dense_baseline) {
        throw DomainError("backward_dense: cache was not produced by forward_dense");
    }
    if (g.size() != layer.dim_out()) {
        throw ShapeError("backward_dense: upstream gradient has wrong dimension");
    }
    const std::size_t n = layer.n();
    LayerGrads grads = zero_grads(layer);
    grads.x = matvec_transposed(layer.w, g);

    // dL/dpi_i = g . (B_i A_i x); through softmax: dL/dxi_a = pi_a (dL/dpi_a - sum_b pi_b dL/dpi_b).
    Vector dpi(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dpi[i] = dot(g, cache.bax[i]);
        mean += cache.pi[i] * dpi[i];
    }
    Vector dxi(n);
    for (std::size_t i = 0; i < n; ++i) {
        dxi[i] = cache.pi[i] * (dpi[i] - mean);
    }
    add_outer(grads.router, 1.0, dxi, cache.x);
    const Vector ptdxi = matvec_transposed(layer.router, dxi);

    for (std::size_t i = 0; i < n; ++i) {
        const double weight = cache.pi[i];
        const Vector btg = matvec_transposed(layer.loras[i].b, g);
        add_outer(grads.b[i], weight, g, cache.ax[i]);
        add_outer(grads.a[i], weight, btg, cache.x);
        const Vector atbtg = matvec_transposed(layer.loras[i].a, btg);
        for (std::size_t d = 0; d < grads.x.size(); ++d) {
            grads.x[d] += weight * atbtg[d];
        }
    }
    for (std::size_t d = 0; d < grads.x.size(); ++d) {
        grads.x[d] += ptdxi[d];
    }
    return grads;
}

void accumulate(LayerGrads& dst, double scale, const LayerGrads& src) {
    for (std::size_t i = 0; i < dst.a.size(); ++i) {
        add_scaled(dst.a[i], scale, src.a[i]);
        add_scaled(dst.b[i], scale, src.b[i]);
    }
    add_scaled(dst.router, scale, src.router);
}

std::size_t low_rank_product_count() {
    return g_low_rank_products;
}

void reset_low_rank_product_count() {
    g_low_rank_products = 0;
}

}  // namespace remix
