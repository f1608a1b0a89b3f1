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

#include "ksdn/noise_model.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <fstream>
#include <limits>
#include <string>

namespace ksdn {

namespace {

bool finite_all(std::initializer_list<double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// log(Gamma(x)) by the Stirling series, shifted up to x >= 7 where the series
// is accurate. Reentrant, unlike lgamma(), which may touch signgam.
double log_gamma(double x) {
    static constexpr std::array<double, 10> kCoeff = {
        8.333333333333333e-02,  -2.777777777777778e-03, 7.936507936507937e-04,
        -5.952380952380952e-04, 8.417508417508418e-04,  -1.917526917526918e-03,
        6.410256410256410e-03,  -2.955065359477124e-02, 1.796443723688307e-01,
        -1.39243221690590e+00};
    if (x == 1.0 || x == 2.0) return 0.0;
    double x0 = x;
    int shift = 0;
    if (x <= 7.0) {
        shift = static_cast<int>(7.0 - x);
        x0 = x + shift;
    }
    const double x2 = 1.0 / (x0 * x0);
    double series = kCoeff[9];
    for (int i = 8; i >= 0; --i) series = series * x2 + kCoeff[static_cast<std::size_t>(i)];
    double gl = series / x0 + 0.5 * std::log(2.0 * std::numbers::pi) + (x0 - 0.5) * std::log(x0) - x0;
    for (int i = 0; i < shift; ++i) {
        x0 -= 1.0;
        gl -= std::log(x0);
    }
    return gl;
}

std::uint64_t poisson_inversion(double lambda, Stream& rng) {
    const double u = rng.uniform();
    double p = std::exp(-lambda);
    double cdf = p;
    std::uint64_t k = 0;
    // The tail beyond lambda + 200 has probability far below 2^-53 for lambda <= 10;
    // the cap only guards against the cdf saturating just below u.
    while (u > cdf && k < 256) {
        ++k;
        p *= lambda / static_cast<double>(k);
        cdf += p;
    }
    return k;
}

std::uint64_t poisson_ptrs(double lambda, Stream& rng) {
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = rng.uniform() - 0.5;
        const double v = rng.uniform();
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -lambda + k * loglam - log_gamma(k + 1.0)) {
            return static_cast<std::uint64_t>(k);
        }
    }
}

}  // namespace

NoiseParams NoiseParams::make(double k, double sigma2) {
    NoiseParams p{k, sigma2};
    p.validate();
    return p;
}

void NoiseParams::validate() const {
    if (!finite_all({k, sigma2}) || !(k > 0.0) || !(sigma2 >= 0.0)) {
        throw ValidationError("NoiseParams require finite k > 0 and sigma2 >= 0 (k=" +
                              std::to_string(k) + ", sigma2=" + std::to_string(sigma2) + ")");
    }
}

IsoCurves IsoCurves::make(double alpha, double k_intercept, double sigma_d2, double sigma_r2,
                          double iso_divisor, IsoRange valid) {
    IsoCurves c{alpha, k_intercept, sigma_d2, sigma_r2, iso_divisor, valid};
    c.validate();
    return c;
}

void IsoCurves::validate() const {
    if (!finite_all({alpha, k_intercept, sigma_d2, sigma_r2, iso_divisor, valid_iso.lo,
                     valid_iso.hi})) {
        throw ValidationError("IsoCurves: all coefficients must be finite");
    }
    if (!(alpha > 0.0)) throw ValidationError("IsoCurves: alpha must be > 0");
    if (sigma_d2 < 0.0 || sigma_r2 < 0.0) {
        throw ValidationError("IsoCurves: sigma_d2 and sigma_r2 must be >= 0");
    }
    if (!(iso_divisor > 0.0)) throw ValidationError("IsoCurves: iso_divisor must be > 0");
    if (!(valid_iso.lo > 0.0) || valid_iso.hi < valid_iso.lo) {
        throw ValidationError("IsoCurves: valid_iso must be a positive, ordered interval");
    }
}

NoiseParams params_at_iso(const IsoCurves& curves, double iso, bool force) {
    curves.validate();
    if (!(iso > 0.0) || !std::isfinite(iso)) {
        throw RangeError("params_at_iso: ISO must be positive and finite");
    }
    if (!force && !curves.valid_iso.contains(iso)) {
        throw RangeError("ISO " + std::to_string(iso) + " outside calibrated range [" +
                         std::to_string(curves.valid_iso.lo) + ", " +
                         std::to_string(curves.valid_iso.hi) + "]");
    }
    const double g = curves.gain_of(iso);
    return NoiseParams::make(curves.alpha * g + curves.k_intercept,
                             curves.sigma_d2 * g * g + curves.sigma_r2);
}

std::uint64_t poisson_draw(double lambda, Stream& rng) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw DomainError("poisson_draw: lambda must be finite and >= 0");
    }
    if (lambda == 0.0) return 0;
    return lambda <= 10.0 ? poisson_inversion(lambda, rng) : poisson_ptrs(lambda, rng);
}

void to_json(nlohmann::json& j, const NoiseParams& p) {
    j = nlohmann::json{{"k", p.k}, {"sigma2", p.sigma2}};
}

void from_json(const nlohmann::json& j, NoiseParams& p) {
    p = NoiseParams::make(j.at("k").get<double>(), j.at("sigma2").get<double>());
}

void to_json(nlohmann::json& j, const IsoCurves& c) {
    j = nlohmann::json{{"alpha", c.alpha},
                       {"k_intercept", c.k_intercept},
                       {"sigma_d2", c.sigma_d2},
                       {"sigma_r2", c.sigma_r2},
                       {"iso_divisor", c.iso_divisor},
                       {"valid_iso", {c.valid_iso.lo, c.valid_iso.hi}}};
}

void from_json(const nlohmann::json& j, IsoCurves& c) {
    IsoRange range{};
    if (j.contains("valid_iso")) {
        const auto& v = j.at("valid_iso");
        if (!v.is_array() || v.size() != 2) {
            throw FormatError("IsoCurves JSON: valid_iso must be [lo, hi]");
        }
        range = {v[0].get<double>(), v[1].get<double>()};
    }
    c = IsoCurves::make(j.at("alpha").get<double>(), j.value("k_intercept", 0.0),
                        j.at("sigma_d2").get<double>(), j.at("sigma_r2").get<double>(),
                        j.value("iso_divisor", 100.0), range);
}

IsoCurves load_curves(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open curves file: " + path);
    nlohmann::json j;
    try {
        in >> j;
        // A full calibration report nests the curves.
        if (j.contains("curves")) return j.at("curves").get<IsoCurves>();
        return j.get<IsoCurves>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed curves JSON in " + path + ": " + e.what());
    }
}

void save_curves(const IsoCurves& curves, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write curves file: " + path);
    out << nlohmann::json(curves).dump(2) << '\n';
}

}  // namespace ksdn
