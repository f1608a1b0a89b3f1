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
#include "ksdn/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cmath>
#include <cstdint>

namespace ksdn {

// Everything in this header works on black-level-subtracted, white-level
// normalized luminance, so (k, sigma2) do not depend on the sensor bit depth.

/// Poisson-Gaussian parameters for one ISO: x ~ k * Poisson(x* / k) + N(0, sigma2).
struct NoiseParams {
    double k = 1.0;
    double sigma2 = 0.0;

    /// Throws ValidationError unless k > 0, sigma2 >= 0 and both are finite.
    static NoiseParams make(double k, double sigma2);
    void validate() const;

    /// sigma2 / k^2, the constant term of the k-Sigma transform.
    double offset() const { return sigma2 / (k * k); }

    friend bool operator==(const NoiseParams&, const NoiseParams&) = default;
};

struct IsoRange {
    double lo = 100.0;
    double hi = 6400.0;

    bool contains(double iso) const { return iso >= lo && iso <= hi; }
    friend bool operator==(const IsoRange&, const IsoRange&) = default;
};

/// Noise parameters as functions of analog gain g = iso / iso_divisor:
///   k(g) = alpha * g + k_intercept
///   sigma2(g) = sigma_d2 * g^2 + sigma_r2
struct IsoCurves {
    double alpha = 0.0;
    double k_intercept = 0.0;
    double sigma_d2 = 0.0;
    double sigma_r2 = 0.0;
    double iso_divisor = 100.0;
    IsoRange valid_iso{};

    static IsoCurves make(double alpha, double k_intercept, double sigma_d2, double sigma_r2,
                          double iso_divisor = 100.0, IsoRange valid = {});
    void validate() const;

    double gain_of(double iso) const { return iso / iso_divisor; }

    friend bool operator==(const IsoCurves&, const IsoCurves&) = default;
};

/// Smartphone-class curves used by the simulators, the CLI defaults and the
/// desk-scale experiments.
inline IsoCurves reference_curves() { return IsoCurves::make(2e-4, 2e-5, 2e-7, 4e-6); }

/// Evaluates the ISO curves. Throws RangeError outside `valid_iso` unless `force`.
NoiseParams params_at_iso(const IsoCurves& curves, double iso, bool force = false);

/// f(x) = x / k + sigma2 / k^2, evaluated in double and cast back to the input scalar.
template <typename Derived>
auto ksigma_forward(const Eigen::ArrayBase<Derived>& x, const NoiseParams& p) {
    using Scalar = typename Derived::Scalar;
    return (x.derived().template cast<double>() / p.k + p.offset()).template cast<Scalar>();
}

/// f^-1(y) = k * (y - sigma2 / k^2).
template <typename Derived>
auto ksigma_inverse(const Eigen::ArrayBase<Derived>& y, const NoiseParams& p) {
    using Scalar = typename Derived::Scalar;
    return (p.k * (y.derived().template cast<double>() - p.offset())).template cast<Scalar>();
}

inline double ksigma_forward(double x, const NoiseParams& p) { return x / p.k + p.offset(); }
inline double ksigma_inverse(double y, const NoiseParams& p) { return p.k * (y - p.offset()); }

/// Draws from Poisson(lambda): exact CDF inversion for lambda <= 10, Hormann's
/// PTRS transformed rejection above. Throws DomainError for negative or
/// non-finite lambda.
std::uint64_t poisson_draw(double lambda, Stream& rng);

/// Identifies the substream family used by sample_noisy. Element i of the
/// input (row-major flat index) draws from Stream(seed, patch_id, i).
struct NoiseKey {
    std::uint64_t seed = 0;
    std::uint32_t patch_id = 0;
};

/// Samples x = k * Poisson(x* / k) + N(0, sigma2) independently per element.
/// Outputs are not clipped; negative results are legitimate read noise.
template <typename Derived>
typename Derived::PlainObject sample_noisy(const Eigen::DenseBase<Derived>& clean,
                                           const NoiseParams& p, NoiseKey key) {
    p.validate();
    using Scalar = typename Derived::Scalar;
    typename Derived::PlainObject out(clean.rows(), clean.cols());
    const double sigma = std::sqrt(p.sigma2);
    const Index cols = clean.cols();
    for (Index r = 0; r < clean.rows(); ++r) {
        for (Index c = 0; c < cols; ++c) {
            const double x = static_cast<double>(clean.derived().coeff(r, c));
            if (!(x >= 0.0) || !std::isfinite(x)) {
                throw DomainError("sample_noisy: clean values must be finite and >= 0");
            }
            Stream rng(key.seed, key.patch_id, static_cast<std::uint64_t>(r * cols + c));
            double v = p.k * static_cast<double>(poisson_draw(x / p.k, rng));
            if (sigma > 0.0) v += sigma * rng.normal();
            out(r, c) = static_cast<Scalar>(v);
        }
    }
    return out;
}

void to_json(nlohmann::json& j, const NoiseParams& p);
void from_json(const nlohmann::json& j, NoiseParams& p);
void to_json(nlohmann::json& j, const IsoCurves& c);
void from_json(const nlohmann::json& j, IsoCurves& c);

IsoCurves load_curves(const std::string& path);
void save_curves(const IsoCurves& curves, const std::string& path);

}  // namespace ksdn
