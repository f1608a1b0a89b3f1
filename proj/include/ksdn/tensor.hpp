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
#include "ksdn/plane.hpp"

#include <array>
#include <string>

namespace ksdn {

/// Dense NCHW activation tensor over contiguous row-major storage.
///
/// Channel planes are exposed as `Eigen::Map`s so per-plane arithmetic stays
/// in Eigen expressions; `flat()` gives the whole buffer as one column array.
template <typename Scalar>
class Tensor {
public:
    using PlaneMap = Eigen::Map<Plane<Scalar>>;
    using ConstPlaneMap = Eigen::Map<const Plane<Scalar>>;
    using FlatMap = Eigen::Map<ArrayX<Scalar>>;
    using ConstFlatMap = Eigen::Map<const ArrayX<Scalar>>;

    Tensor() = default;
    Tensor(Index n, Index c, Index h, Index w) : dims_{n, c, h, w} {
        if (n < 1 || c < 1 || h < 1 || w < 1) {
            throw ShapeError("Tensor dims must all be >= 1, got " + shape_string());
        }
        data_ = ArrayX<Scalar>::Zero(n * c * h * w);
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.n(), t.c(), t.h(), t.w()); }

    Index n() const { return dims_[0]; }
    Index c() const { return dims_[1]; }
    Index h() const { return dims_[2]; }
    Index w() const { return dims_[3]; }
    const std::array<Index, 4>& dims() const { return dims_; }
    Index size() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    Scalar& operator()(Index n, Index c, Index y, Index x) {
        return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }
    Scalar operator()(Index n, Index c, Index y, Index x) const {
        return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }

    PlaneMap plane(Index n, Index c) {
        return PlaneMap(data_.data() + (n * dims_[1] + c) * dims_[2] * dims_[3], dims_[2], dims_[3]);
    }
    ConstPlaneMap plane(Index n, Index c) const {
        return ConstPlaneMap(data_.data() + (n * dims_[1] + c) * dims_[2] * dims_[3], dims_[2],
                             dims_[3]);
    }

    /// Channels x (H*W) matrix view of one batch item.
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> matrix(
        Index n) {
        return {data_.data() + n * dims_[1] * dims_[2] * dims_[3], dims_[1], dims_[2] * dims_[3]};
    }
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    matrix(Index n) const {
        return {data_.data() + n * dims_[1] * dims_[2] * dims_[3], dims_[1], dims_[2] * dims_[3]};
    }

    ArrayX<Scalar>& flat() { return data_; }
    const ArrayX<Scalar>& flat() const { return data_; }
    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(n(), c(), h(), w());
        out.flat() = data_.template cast<Other>();
        return out;
    }

    std::string shape_string() const {
        return "(" + std::to_string(dims_[0]) + "," + std::to_string(dims_[1]) + "," +
               std::to_string(dims_[2]) + "," + std::to_string(dims_[3]) + ")";
    }

private:
    std::array<Index, 4> dims_{0, 0, 0, 0};
    ArrayX<Scalar> data_;
};

/// Half-resolution 4-channel R, Gr, Gb, B tensor (batch 1); the network I/O unit.
using PackedTensor = Tensor<float>;

}  // namespace ksdn
