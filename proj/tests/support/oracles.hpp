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

// Brute-force references for the nn layers and random test inputs.

#include "ksdn/nn/layers.hpp"
#include "ksdn/rng.hpp"

#include <limits>

namespace ksdn::testing {

using nn::Matrix;
using nn::Vector;

template <typename S>
Tensor<S> random_tensor(Index n, Index c, Index h, Index w, Stream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<S> t(n, c, h, w);
    for (Index i = 0; i < t.size(); ++i) t.flat()[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

template <typename S>
Matrix<S> random_matrix(Index r, Index c, Stream& rng) {
    Matrix<S> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.uniform(-1.0, 1.0));
    return m;
}

// Six nested loops, zero padding.
inline Tensor<double> conv_oracle(const Tensor<double>& x, const Matrix<double>& w, const Vector<double>& b, Index k,
                                  Index stride, Index pad) {
    const Index cout = w.rows();
    const Index ho = (x.h() + 2 * pad - k) / stride + 1;
    const Index wo = (x.w() + 2 * pad - k) / stride + 1;
    Tensor<double> y(x.n(), cout, ho, wo);
    for (Index n = 0; n < x.n(); ++n)
        for (Index o = 0; o < cout; ++o)
            for (Index oy = 0; oy < ho; ++oy)
                for (Index ox = 0; ox < wo; ++ox) {
                    double acc = b[o];
                    for (Index i = 0; i < x.c(); ++i)
                        for (Index ky = 0; ky < k; ++ky)
                            for (Index kx = 0; kx < k; ++kx) {
                                const Index iy = oy * stride + ky - pad;
                                const Index ix = ox * stride + kx - pad;
                                if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
                                acc += w(o, (i * k + ky) * k + kx) * x(n, i, iy, ix);
                            }
                    y(n, o, oy, ox) = acc;
                }
    return y;
}

inline Tensor<double> deconv_oracle(const Tensor<double>& x, const Matrix<double>& w, const Vector<double>& b) {
    const Index cout = w.cols() / 4;
    Tensor<double> y(x.n(), cout, 2 * x.h(), 2 * x.w());
    for (Index n = 0; n < x.n(); ++n)
        for (Index o = 0; o < cout; ++o)
            for (Index oy = 0; oy < y.h(); ++oy)
                for (Index ox = 0; ox < y.w(); ++ox) {
                    double acc = b[o];
                    for (Index i = 0; i < x.c(); ++i) {
                        acc += w(i, (o * 2 + oy % 2) * 2 + ox % 2) * x(n, i, oy / 2, ox / 2);
                    }
                    y(n, o, oy, ox) = acc;
                }
    return y;
}

/// Max abs difference relative to max(1, |b|max); infinite on a shape mismatch.
inline double max_rel_err(const Tensor<double>& a, const Tensor<double>& b) {
    if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
    const double scale = std::max(1.0, b.flat().abs().maxCoeff());
    return (a.flat() - b.flat()).abs().maxCoeff() / scale;
}

// Depthwise loops then pointwise loops, zero padding.
inline Tensor<double> separable_oracle(const Tensor<double>& x, const Matrix<double>& dw, const Matrix<double>& pw,
                                       const Vector<double>& b, Index k, Index stride) {
    const Index pad = k / 2;
    const Index ho = (x.h() + 2 * pad - k) / stride + 1;
    const Index wo = (x.w() + 2 * pad - k) / stride + 1;
    Tensor<double> mid(x.n(), x.c(), ho, wo);
    for (Index n = 0; n < x.n(); ++n)
        for (Index i = 0; i < x.c(); ++i)
            for (Index oy = 0; oy < ho; ++oy)
                for (Index ox = 0; ox < wo; ++ox) {
                    double acc = 0.0;
                    for (Index ky = 0; ky < k; ++ky)
                        for (Index kx = 0; kx < k; ++kx) {
                            const Index iy = oy * stride + ky - pad;
                            const Index ix = ox * stride + kx - pad;
                            if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
                            acc += dw(i, ky * k + kx) * x(n, i, iy, ix);
                        }
                    mid(n, i, oy, ox) = acc;
                }
    Tensor<double> y(x.n(), pw.rows(), ho, wo);
    for (Index n = 0; n < x.n(); ++n)
        for (Index o = 0; o < pw.rows(); ++o)
            for (Index oy = 0; oy < ho; ++oy)
                for (Index ox = 0; ox < wo; ++ox) {
                    double acc = b[o];
                    for (Index i = 0; i < x.c(); ++i) acc += pw(o, i) * mid(n, i, oy, ox);
                    y(n, o, oy, ox) = acc;
                }
    return y;
}

}  // namespace ksdn::testing
