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

#include "ksdn/errors.hpp"
#include "ksdn/tensor.hpp"

#include <Eigen/Core>

#include <string>

namespace ksdn::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixCRef = Eigen::Ref<const Matrix<Scalar>>;
template <typename Scalar>
using VectorCRef = Eigen::Ref<const Vector<Scalar>>;

/// Spatial output size of a strided convolution.
inline Index conv_out_size(Index in, Index kernel, Index stride, Index pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> im2col(const Tensor<Scalar>& x, Index n, Index k, Index stride, Index pad, Index ho,
                      Index wo) {
    const Index cin = x.c();
    Matrix<Scalar> cols = Matrix<Scalar>::Zero(cin * k * k, ho * wo);
    for (Index ci = 0; ci < cin; ++ci) {
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
                const Index row = (ci * k + ky) * k + kx;
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= x.h()) continue;
                    for (Index ox = 0; ox < wo; ++ox) {
                        const Index ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= x.w()) continue;
                        cols(row, oy * wo + ox) = x(n, ci, iy, ix);
                    }
                }
            }
        }
    }
    return cols;
}

template <typename Scalar>
void col2im_add(const Matrix<Scalar>& cols, Tensor<Scalar>& dx, Index n, Index k, Index stride,
                Index pad, Index ho, Index wo) {
    for (Index ci = 0; ci < dx.c(); ++ci) {
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
                const Index row = (ci * k + ky) * k + kx;
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= dx.h()) continue;
                    for (Index ox = 0; ox < wo; ++ox) {
                        const Index ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= dx.w()) continue;
                        dx(n, ci, iy, ix) += cols(row, oy * wo + ox);
                    }
                }
            }
        }
    }
}

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace detail

/// Dense cross-correlation. `weights` is cout x (cin*k*k), the row-major
/// flattening of a (cout, cin, k, k) kernel.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, MatrixCRef<Scalar> weights, VectorCRef<Scalar> bias,
                      Index kernel, Index stride = 1, Index pad = -1) {
    if (pad < 0) pad = kernel / 2;
    detail::require(weights.cols() == x.c() * kernel * kernel,
                    "conv2d: weight columns do not match cin*k*k for input " + x.shape_string());
    detail::require(bias.size() == weights.rows(), "conv2d: bias size does not match cout");
    const Index ho = conv_out_size(x.h(), kernel, stride, pad);
    const Index wo = conv_out_size(x.w(), kernel, stride, pad);
    detail::require(ho >= 1 && wo >= 1, "conv2d: kernel larger than padded input");
    Tensor<Scalar> y(x.n(), weights.rows(), ho, wo);
    for (Index n = 0; n < x.n(); ++n) {
        if (kernel == 1 && stride == 1 && pad == 0) {
            y.matrix(n).noalias() = weights * x.matrix(n);
        } else {
            y.matrix(n).noalias() = weights * detail::im2col(x, n, kernel, stride, pad, ho, wo);
        }
        y.matrix(n).colwise() += bias;
    }
    return y;
}

template <typename Scalar>
struct ConvGrads {
    Tensor<Scalar> dx;
    Matrix<Scalar> dw;
    Vector<Scalar> db;
};

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, MatrixCRef<Scalar> weights, Index kernel,
                                  Index stride, Index pad, const Tensor<Scalar>& dy) {
    if (pad < 0) pad = kernel / 2;
    const Index ho = dy.h();
    const Index wo = dy.w();
    ConvGrads<Scalar> g{Tensor<Scalar>::zeros_like(x), Matrix<Scalar>::Zero(weights.rows(), weights.cols()),
                        Vector<Scalar>::Zero(weights.rows())};
    for (Index n = 0; n < x.n(); ++n) {
        const auto dyn = dy.matrix(n);
        g.db += dyn.rowwise().sum();
        if (kernel == 1 && stride == 1 && pad == 0) {
            g.dw.noalias() += dyn * x.matrix(n).transpose();
            g.dx.matrix(n).noalias() = weights.transpose() * dyn;
        } else {
            const Matrix<Scalar> cols = detail::im2col(x, n, kernel, stride, pad, ho, wo);
            g.dw.noalias() += dyn * cols.transpose();
            const Matrix<Scalar> dcols = weights.transpose() * dyn;
            detail::col2im_add(dcols, g.dx, n, kernel, stride, pad, ho, wo);
        }
    }
    return g;
}

/// Per-channel k x k filtering; `weights` is c x (k*k).
template <typename Scalar>
Tensor<Scalar> depthwise_conv2d(const Tensor<Scalar>& x, MatrixCRef<Scalar> weights, Index kernel,
                                Index stride = 1, Index pad = -1) {
    if (pad < 0) pad = kernel / 2;
    detail::require(weights.rows() == x.c() && weights.cols() == kernel * kernel,
                    "depthwise_conv2d: weights must be c x k*k for input " + x.shape_string());
    const Index ho = conv_out_size(x.h(), kernel, stride, pad);
    const Index wo = conv_out_size(x.w(), kernel, stride, pad);
    Tensor<Scalar> y(x.n(), x.c(), ho, wo);
    for (Index n = 0; n < x.n(); ++n) {
        for (Index c = 0; c < x.c(); ++c) {
            for (Index oy = 0; oy < ho; ++oy) {
                for (Index ox = 0; ox < wo; ++ox) {
                    Scalar acc = 0;
                    for (Index ky = 0; ky < kernel; ++ky) {
                        const Index iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= x.h()) continue;
                        for (Index kx = 0; kx < kernel; ++kx) {
                            const Index ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= x.w()) continue;
                            acc += weights(c, ky * kernel + kx) * x(n, c, iy, ix);
                        }
                    }
                    y(n, c, oy, ox) = acc;
                }
            }
        }
    }
    return y;
}

template <typename Scalar>
struct DepthwiseGrads {
    Tensor<Scalar> dx;
    Matrix<Scalar> dw;
};

template <typename Scalar>
DepthwiseGrads<Scalar> depthwise_conv2d_backward(const Tensor<Scalar>& x, MatrixCRef<Scalar> weights,
                                                 Index kernel, Index stride, Index pad,
                                                 const Tensor<Scalar>& dy) {
    if (pad < 0) pad = kernel / 2;
    DepthwiseGrads<Scalar> g{Tensor<Scalar>::zeros_like(x),
                             Matrix<Scalar>::Zero(weights.rows(), weights.cols())};
    for (Index n = 0; n < x.n(); ++n) {
        for (Index c = 0; c < x.c(); ++c) {
            for (Index oy = 0; oy < dy.h(); ++oy) {
                for (Index ox = 0; ox < dy.w(); ++ox) {
                    const Scalar d = dy(n, c, oy, ox);
                    for (Index ky = 0; ky < kernel; ++ky) {
                        const Index iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= x.h()) continue;
                        for (Index kx = 0; kx < kernel; ++kx) {
                            const Index ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= x.w()) continue;
                            g.dw(c, ky * kernel + kx) += d * x(n, c, iy, ix);
                            g.dx(n, c, iy, ix) += d * weights(c, ky * kernel + kx);
                        }
                    }
                }
            }
        }
    }
    return g;
}

/// Depthwise k x k (strided) followed by a biased 1x1 pointwise mix.
template <typename Scalar>
Tensor<Scalar> separable_conv2d(const Tensor<Scalar>& x, MatrixCRef<Scalar> depthwise,
                                MatrixCRef<Scalar> pointwise, VectorCRef<Scalar> bias, Index kernel,
                                Index stride = 1) {
    detail::require(pointwise.cols() == x.c(), "separable_conv2d: pointwise cin mismatch");
    return conv2d<Scalar>(depthwise_conv2d<Scalar>(x, depthwise, kernel, stride), pointwise, bias, 1,
                          1, 0);
}

/// 2x2 transposed convolution with stride 2. `weights` is cin x (cout*4), the
/// row-major flattening of a (cin, cout, 2, 2) kernel.
template <typename Scalar>
Tensor<Scalar> deconv2x2(const Tensor<Scalar>& x, MatrixCRef<Scalar> weights, VectorCRef<Scalar> bias) {
    detail::require(weights.rows() == x.c() && weights.cols() % 4 == 0,
                    "deconv2x2: weights must be cin x cout*4 for input " + x.shape_string());
    const Index cout = weights.cols() / 4;
    detail::require(bias.size() == cout, "deconv2x2: bias size does not match cout");
    Tensor<Scalar> y(x.n(), cout, x.h() * 2, x.w() * 2);
    for (Index n = 0; n < x.n(); ++n) {
        const Matrix<Scalar> cols = weights.transpose() * x.matrix(n);  // (cout*4) x (h*w)
        for (Index co = 0; co < cout; ++co) {
            for (Index a = 0; a < 2; ++a) {
                for (Index b = 0; b < 2; ++b) {
                    const Index row = (co * 2 + a) * 2 + b;
                    for (Index iy = 0; iy < x.h(); ++iy) {
                        for (Index ix = 0; ix < x.w(); ++ix) {
                            y(n, co, 2 * iy + a, 2 * ix + b) = cols(row, iy * x.w() + ix) + bias[co];
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename Scalar>
ConvGrads<Scalar> deconv2x2_backward(const Tensor<Scalar>& x, MatrixCRef<Scalar> weights,
                                     const Tensor<Scalar>& dy) {
    const Index cout = weights.cols() / 4;
    ConvGrads<Scalar> g{Tensor<Scalar>::zeros_like(x), Matrix<Scalar>::Zero(weights.rows(), weights.cols()),
                        Vector<Scalar>::Zero(cout)};
    for (Index n = 0; n < x.n(); ++n) {
        Matrix<Scalar> dcols(cout * 4, x.h() * x.w());
        for (Index co = 0; co < cout; ++co) {
            g.db[co] += dy.plane(n, co).sum();
            for (Index a = 0; a < 2; ++a) {
                for (Index b = 0; b < 2; ++b) {
                    const Index row = (co * 2 + a) * 2 + b;
                    for (Index iy = 0; iy < x.h(); ++iy) {
                        for (Index ix = 0; ix < x.w(); ++ix) {
                            dcols(row, iy * x.w() + ix) = dy(n, co, 2 * iy + a, 2 * ix + b);
                        }
                    }
                }
            }
        }
        g.dx.matrix(n).noalias() = weights * dcols;
        g.dw.noalias() += x.matrix(n) * dcols.transpose();
    }
    return g;
}

template <typename Scalar>
Tensor<Scalar> relu(Tensor<Scalar> x) {
    x.flat() = x.flat().max(Scalar(0));
    return x;
}

/// Gradient through a rectifier given its output.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& out, Tensor<Scalar> dy) {
    dy.flat() = (out.flat() > Scalar(0)).select(dy.flat(), Scalar(0));
    return dy;
}

}  // namespace ksdn::nn
