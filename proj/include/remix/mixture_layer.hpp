// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mixture-of-LoRAs layer. In remix mode k activated adapters share one
// constant routing weight omega and the router only decides which adapters
// run; in dense-baseline mode every adapter runs, weighted by softmax(P x).

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "remix/numerics.hpp"
#include "remix/routing.hpp"
#include "remix/rng.hpp"

namespace remix {

enum class LayerMode { remix, dense_baseline };
enum class OmegaScheme { lora, rslora };

std::string_view to_string(LayerMode mode);
std::string_view to_string(OmegaScheme scheme);
LayerMode parse_layer_mode(std::string_view s);
OmegaScheme parse_omega_scheme(std::string_view s);

/// Constant routing weight: alpha / (k r) for lora, alpha / sqrt(k r) for rslora.
/// alpha defaults to 2.
double omega(OmegaScheme scheme, std::size_t k, std::size_t rank, double alpha = 2.0);

/// Low-rank update B A with A: r x D_in and B: D_out x r.
struct LoRAPair {
    Matrix a;
    Matrix b;

    std::size_t rank() const { return a.rows(); }
};

struct MixtureLayer {
    Matrix w;  // frozen
    std::vector<LoRAPair> loras;
    Matrix router;  // n x D_in
    LayerMode mode = LayerMode::remix;
    OmegaScheme omega_scheme = OmegaScheme::rslora;
    std::size_t k = 1;
    double omega_alpha = 2.0;

    std::size_t n() const { return loras.size(); }
    std::size_t rank() const { return loras.empty() ? 0 : loras.front().rank(); }
    std::size_t dim_in() const { return w.cols(); }
    std::size_t dim_out() const { return w.rows(); }
    double omega() const { return remix::omega(omega_scheme, k, rank(), omega_alpha); }

    /// Throws ShapeError/DomainError if shapes, k, or ranks are inconsistent.
    void validate() const;
};

struct LayerInit {
    std::size_t n = 8;
    std::size_t k = 2;
    std::size_t rank = 4;
    LayerMode mode = LayerMode::remix;
    OmegaScheme omega_scheme = OmegaScheme::rslora;
    double omega_alpha = 2.0;
    /// Router init std-dev; <= 0 selects sqrt(2 / D_in).
    double router_sigma = 0.0;
};

/// A ~ N(0, 1/D_in), B = 0, P ~ N(0, sigma^2). Draw order: router, then each A in turn.
MixtureLayer make_mixture_layer(Matrix frozen_w, const LayerInit& init, RngStream& rng);

struct LayerCache {
    LayerMode mode = LayerMode::remix;
    Vector x;
    /// remix: the activated adapters in draw order; dense: 0..n-1.
    IndexList active;
    /// A_i x for each entry of active.
    std::vector<Vector> ax;
    /// B_i A_i x for each entry of active (dense mode only).
    std::vector<Vector> bax;
    /// Routing weights over all n adapters.
    Vector pi;
};

struct ForwardResult {
    Vector y;
    LayerCache cache;
};

/// y = W x + omega * sum_j B_{i_j} A_{i_j} x over the activated adapters.
/// Throws DomainError on duplicate or out-of-range indices.
ForwardResult forward_remix(const MixtureLayer& layer, std::span<const double> x, std::span<const std::size_t> active);

/// pi = softmax(P x); y = W x + sum_i pi_i B_i A_i x over all n adapters.
ForwardResult forward_dense(const MixtureLayer& layer, std::span<const double> x);

/// Parameter and input gradients of one layer. Adapters that did not run get
/// exactly-zero matrices; router is zero for remix caches.
struct LayerGrads {
    std::vector<Matrix> a;
    std::vector<Matrix> b;
    Matrix router;
    Vector x;
};

/// Allocates zero gradients shaped like the layer's trainable parameters.
LayerGrads zero_grads(const MixtureLayer& layer);

LayerGrads backward_lora(const MixtureLayer& layer, const LayerCache& cache, std::span<const double> g);
LayerGrads backward_dense(const MixtureLayer& layer, const LayerCache& cache, std::span<const double> g);

/// dst += scale * src, adapter by adapter; the input gradient is left untouched.
void accumulate(LayerGrads& dst, double scale, const LayerGrads& src);

/// Count of B (A x) products executed by forward passes in this thread.
std::size_t low_rank_product_count();
void reset_low_rank_product_count();

}  // namespace remix
