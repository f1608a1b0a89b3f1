// Copyright 2026 The ksdn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "ksdn/nn/layers.hpp"
#include "ksdn/nn/model.hpp"

#include <string>
#include <vector>

namespace ksdn::nn {

template <typename Scalar>
struct SepRecord {
    std::string prefix;
    Index kernel = 3;
    Index stride = 1;
    bool activated = true;
    Tensor<Scalar> in;
    Tensor<Scalar> mid;
    Tensor<Scalar> out;
};

template <typename Scalar>
struct DenseRecord {
    std::string prefix;
    Index kernel = 3;
    bool activated = true;
    Tensor<Scalar> in;
    Tensor<Scalar> out;
};

/// Activations retained by forward_cached() for backward().
template <typename Scalar>
struct ForwardCache {
    Tensor<Scalar> input;
    DenseRecord<Scalar> stem;
    std::array<std::vector<SepRecord<Scalar>>, 4> encoder;
    std::array<Tensor<Scalar>, 5> encoder_inputs;  // [4] is the bottleneck
    std::array<DenseRecord<Scalar>, 4> upsample;   // deconv input kept in `in`
    std::array<SepRecord<Scalar>, 4> skip;
    std::array<std::vector<SepRecord<Scalar>>, 4> decoder;
    DenseRecord<Scalar> head;
    bool valid = false;
};

namespace detail {

template <typename Scalar>
SepRecord<Scalar> run_sep(const Model<Scalar>& m, const std::string& prefix, const Tensor<Scalar>& in,
                          Index kernel, Index stride, bool activated) {
    SepRecord<Scalar> r{prefix, kernel, stride, activated, in, {}, {}};
    r.mid = depthwise_conv2d<Scalar>(in, m.param(prefix + ".dw").as_matrix(), kernel, stride);
    r.out = conv2d<Scalar>(r.mid, m.param(prefix + ".pw").as_matrix(), m.param(prefix + ".b").as_vector(),
                           1, 1, 0);
    if (activated) r.out = relu(std::move(r.out));
    return r;
}

// Row-major flattening matches the parameter layout.
template <typename Scalar, typename Derived>
void add_grad(Gradients<Scalar>& grads, const Model<Scalar>& m, const std::string& name,
              const Eigen::MatrixBase<Derived>& g) {
    const Matrix<Scalar> flat = g;
    grads[m.index_of(name)] += Eigen::Map<const ArrayX<Scalar>>(flat.data(), flat.size());
}

// Returns the gradient w.r.t. the record's input.
template <typename Scalar>
Tensor<Scalar> back_sep(const Model<Scalar>& m, const SepRecord<Scalar>& r, Tensor<Scalar> g,
                        Gradients<Scalar>& grads) {
    if (r.activated) g = relu_backward(r.out, std::move(g));
    const auto pw = conv2d_backward<Scalar>(r.mid, m.param(r.prefix + ".pw").as_matrix(), 1, 1, 0, g);
    add_grad(grads, m, r.prefix + ".pw", pw.dw);
    add_grad(grads, m, r.prefix + ".b", pw.db);
    const auto dw = depthwise_conv2d_backward<Scalar>(r.in, m.param(r.prefix + ".dw").as_matrix(), r.kernel,
                                                      r.stride, r.kernel / 2, pw.dx);
    add_grad(grads, m, r.prefix + ".dw", dw.dw);
    return dw.dx;
}

template <typename Scalar>
void accumulate(Tensor<Scalar>& into, const Tensor<Scalar>& g) {
    if (into.empty()) {
        into = g;
    } else {
        into.flat() += g.flat();
    }
}

}  // namespace detail

inline std::string encoder_prefix(int stage, int conv) {
    return "enc" + std::to_string(stage) + ".conv" + std::to_string(conv);
}
inline std::string decoder_prefix(int stage, int conv) {
    return "dec" + std::to_string(stage) + ".conv" + std::to_string(conv);
}

/// Forward pass retaining every activation needed by backward().
/// Input is N x 4 x h x w with h, w divisible by 16.
template <typename Scalar>
Tensor<Scalar> forward_cached(const Model<Scalar>& m, const Tensor<Scalar>& x, ForwardCache<Scalar>& cache) {
    const ModelConfig& cfg = m.config();
    if (x.c() != cfg.input_channels) {
        throw ShapeError("forward: expected " + std::to_string(cfg.input_channels) + " input channels, got " +
                         x.shape_string());
    }
    if (x.h() % 16 != 0 || x.w() % 16 != 0) {
        throw ShapeError("forward: spatial dims must be divisible by 16, got " + x.shape_string());
    }
    cache = ForwardCache<Scalar>{};
    cache.input = x;

    cache.stem = {"stem", cfg.dense_kernel, true, x, {}};
    cache.stem.out = relu(conv2d<Scalar>(x, m.param("stem.w").as_matrix(), m.param("stem.b").as_vector(),
                                         cfg.dense_kernel));
    cache.encoder_inputs[0] = cache.stem.out;

    for (int s = 1; s <= 4; ++s) {
        Tensor<Scalar> t = cache.encoder_inputs[static_cast<std::size_t>(s - 1)];
        for (int j = 0; j < cfg.convs_per_encoder_stage; ++j) {
            const Index stride = j == cfg.convs_per_encoder_stage - 1 ? 2 : 1;
            auto rec = detail::run_sep(m, encoder_prefix(s, j), t, cfg.encoder_kernel, stride, true);
            t = rec.out;
            cache.encoder[static_cast<std::size_t>(s - 1)].push_back(std::move(rec));
        }
        cache.encoder_inputs[static_cast<std::size_t>(s)] = t;
    }

    Tensor<Scalar> d = cache.encoder_inputs[4];
    for (int s = 4; s >= 1; --s) {
        const auto si = static_cast<std::size_t>(s - 1);
        const std::string up = "dec" + std::to_string(s) + ".up";
        cache.upsample[si] = {up, 2, false, d, {}};
        Tensor<Scalar> sum =
            deconv2x2<Scalar>(d, m.param(up + ".w").as_matrix(), m.param(up + ".b").as_vector());
        cache.skip[si] = detail::run_sep(m, "skip" + std::to_string(s), cache.encoder_inputs[si],
                                         cfg.decoder_kernel, 1, false);
        sum.flat() += cache.skip[si].out.flat();
        d = std::move(sum);
        for (int j = 0; j < cfg.convs_per_decoder_stage; ++j) {
            auto rec = detail::run_sep(m, decoder_prefix(s, j), d, cfg.decoder_kernel, 1, true);
            d = rec.out;
            cache.decoder[si].push_back(std::move(rec));
        }
    }

    cache.head = {"out", cfg.dense_kernel, false, d, {}};
    Tensor<Scalar> y =
        conv2d<Scalar>(d, m.param("out.w").as_matrix(), m.param("out.b").as_vector(), cfg.dense_kernel);
    cache.head.out = y;
    y.flat() += x.flat();
    cache.valid = true;
    return y;
}

template <typename Scalar>
Tensor<Scalar> forward(const Model<Scalar>& m, const Tensor<Scalar>& x) {
    ForwardCache<Scalar> cache;
    return forward_cached(m, x, cache);
}

template <typename Scalar>
struct BackwardResult {
    Gradients<Scalar> grads;
    Tensor<Scalar> input_grad;
};

/// Reverse-mode gradients of every parameter (and of the input) given dL/dy.
template <typename Scalar>
BackwardResult<Scalar> backward(const Model<Scalar>& m, const ForwardCache<Scalar>& cache,
                                const Tensor<Scalar>& upstream) {
    if (!cache.valid) throw ValidationError("backward: forward activations were not retained");
    if (!upstream.same_shape(cache.input)) throw ShapeError("backward: upstream gradient shape mismatch");
    const ModelConfig& cfg = m.config();
    BackwardResult<Scalar> res{zero_gradients(m), upstream};  // residual path

    const auto head = conv2d_backward<Scalar>(cache.head.in, m.param("out.w").as_matrix(), cfg.dense_kernel,
                                              1, cfg.dense_kernel / 2, upstream);
    detail::add_grad(res.grads, m, "out.w", head.dw);
    detail::add_grad(res.grads, m, "out.b", head.db);
    Tensor<Scalar> g = head.dx;

    std::array<Tensor<Scalar>, 5> enc_grads;
    for (int s = 1; s <= 4; ++s) {
        const auto si = static_cast<std::size_t>(s - 1);
        const auto& recs = cache.decoder[si];
        for (auto it = recs.rbegin(); it != recs.rend(); ++it) g = detail::back_sep(m, *it, std::move(g), res.grads);
        // g is now dL/d(upsample + skip).
        detail::accumulate(enc_grads[si], detail::back_sep(m, cache.skip[si], g, res.grads));
        const std::string up = cache.upsample[si].prefix;
        const auto dec = deconv2x2_backward<Scalar>(cache.upsample[si].in, m.param(up + ".w").as_matrix(), g);
        detail::add_grad(res.grads, m, up + ".w", dec.dw);
        detail::add_grad(res.grads, m, up + ".b", dec.db);
        g = dec.dx;
    }

    for (int s = 4; s >= 1; --s) {
        const auto si = static_cast<std::size_t>(s - 1);
        const auto& recs = cache.encoder[si];
        for (auto it = recs.rbegin(); it != recs.rend(); ++it) g = detail::back_sep(m, *it, std::move(g), res.grads);
        g.flat() += enc_grads[si].flat();
    }

    g = relu_backward(cache.stem.out, std::move(g));
    const auto stem = conv2d_backward<Scalar>(cache.input, m.param("stem.w").as_matrix(), cfg.dense_kernel, 1,
                                              cfg.dense_kernel / 2, g);
    detail::add_grad(res.grads, m, "stem.w", stem.dw);
    detail::add_grad(res.grads, m, "stem.b", stem.db);
    res.input_grad.flat() += stem.dx.flat();
    return res;
}

}  // namespace ksdn::nn
