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

#include "ksdn/calibration.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

namespace ksdn {

void BurstStack::validate() const {
    if (frames.size() < 2) {
        throw ShapeError("burst stack needs at least 2 frames, got " + std::to_string(frames.size()));
    }
    for (const auto& f : frames) {
        if (f.rows() != frames.front().rows() || f.cols() != frames.front().cols()) {
            throw ShapeError("burst stack frames have different shapes");
        }
    }
}

BurstStack load_burst_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw CalibrationDataError("burst directory not found: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.size() < 2) {
        throw CalibrationDataError("burst directory " + dir + " holds " +
                                   std::to_string(files.size()) + " frame(s); need at least 2");
    }
    BurstStack stack;
    for (const auto& f : files) {
        RawImage raw = load_raw(f);
        if (stack.frames.empty()) {
            stack.meta = raw.meta;
            stack.iso = raw.meta.iso;
        } else if (raw.meta.iso != stack.iso || raw.meta.bayer_pattern != stack.meta.bayer_pattern) {
            throw CalibrationDataError("burst directory " + dir + " mixes ISO or Bayer pattern (" + f +
                                       ")");
        }
        stack.frames.push_back(normalize(raw));
    }
    try {
        stack.validate();
    } catch (const ShapeError& e) {
        throw CalibrationDataError("burst directory " + dir + ": " + e.what());
    }
    return stack;
}

PlaneD pixel_mean(const BurstStack& stack) {
    stack.validate();
    PlaneD sum = PlaneD::Zero(stack.frames.front().rows(), stack.frames.front().cols());
    for (const auto& f : stack.frames) sum += f.cast<double>();
    return sum / static_cast<double>(stack.frames.size());
}

std::vector<MeanVariancePoint> bracket_variance(const BurstStack& stack, const PlaneD& mean_image,
                                                const BracketOptions& opts) {
    stack.validate();
    const auto& first = stack.frames.front();
    if (mean_image.rows() != first.rows() || mean_image.cols() != first.cols()) {
        throw ShapeError("bracket_variance: mean image does not match the stack");
    }
    if (!(opts.bin_width > 0.0)) throw ValidationError("bracket_variance: bin_width must be > 0");

    PlaneD sq = PlaneD::Zero(first.rows(), first.cols());
    for (const auto& f : stack.frames) sq += (f.cast<double>() - mean_image).square();
    const PlaneD var = sq / static_cast<double>(stack.frames.size() - 1);

    struct Acc {
        double level_sum = 0.0;
        double var_sum = 0.0;
        std::size_t count = 0;
    };
    std::map<long long, Acc> bins;
    for (Index i = 0; i < mean_image.size(); ++i) {
        const double m = mean_image.data()[i];
        if (!std::isfinite(m)) continue;
        auto& acc = bins[static_cast<long long>(std::floor(m / opts.bin_width))];
        acc.level_sum += m;
        acc.var_sum += var.data()[i];
        ++acc.count;
    }

    std::vector<MeanVariancePoint> points;
    for (const auto& [bin, acc] : bins) {
        if (acc.count < opts.min_count) continue;
        const double level = acc.level_sum / static_cast<double>(acc.count);
        if (level < opts.dark_guard || level > opts.saturation_guard) continue;
        points.push_back({level, acc.var_sum / static_cast<double>(acc.count), acc.count});
    }
    if (points.empty()) {
        throw CalibrationDataError(
            "bracket_variance: no luminance bin has enough unsaturated pixels; check exposure");
    }
    return points;
}

namespace {

struct LinearFit {
    Eigen::Vector2d coef;  // slope-like term, intercept
    double r2 = 0.0;
    Eigen::VectorXd residuals;
};

// Weighted least squares y ~ coef0 * x + coef1.
LinearFit weighted_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    Eigen::MatrixXd a(x.size(), 2);
    a.col(0) = x;
    a.col(1).setOnes();
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::MatrixXd aw = sw.asDiagonal() * a;
    const Eigen::VectorXd yw = sw.cwiseProduct(y);
    LinearFit fit;
    fit.coef = aw.colPivHouseholderQr().solve(yw);
    fit.residuals = y - a * fit.coef;
    const double wsum = w.sum();
    const double ybar = w.dot(y) / wsum;
    const double ss_res = w.dot(fit.residuals.cwiseAbs2());
    const double ss_tot = w.dot((y.array() - ybar).matrix().cwiseAbs2());
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

double plain_r2(const Eigen::VectorXd& y, const Eigen::VectorXd& fitted) {
    const double ybar = y.mean();
    const double ss_res = (y - fitted).squaredNorm();
    const double ss_tot = (y.array() - ybar).matrix().squaredNorm();
    return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

}  // namespace

NoiseFit fit_noise_params(const std::vector<MeanVariancePoint>& points) {
    if (points.size() < 3) {
        throw CalibrationDataError("fit_noise_params: need at least 3 mean-variance points, got " +
                                   std::to_string(points.size()));
    }
    const auto [lo, hi] = std::minmax_element(
        points.begin(), points.end(),
        [](const MeanVariancePoint& a, const MeanVariancePoint& b) { return a.level < b.level; });
    if (!(lo->level > 0.0) || hi->level / lo->level < 4.0) {
        throw CalibrationDataError(
            "fit_noise_params: levels must span a ratio of at least 4x (got [" +
            std::to_string(lo->level) + ", " + std::to_string(hi->level) + "])");
    }

    const auto n = static_cast<Index>(points.size());
    Eigen::VectorXd x(n), y(n), w(n);
    for (Index i = 0; i < n; ++i) {
        const auto& p = points[static_cast<std::size_t>(i)];
        x[i] = p.level;
        y[i] = p.variance;
        w[i] = static_cast<double>(p.count);
    }
    const LinearFit line = weighted_line(x, y, w);

    NoiseFit out;
    if (!(line.coef[0] > 0.0)) {
        throw CalibrationDataError("fit_noise_params: fitted slope k is not positive");
    }
    double sigma2 = line.coef[1];
    if (sigma2 < 0.0) {
        sigma2 = 0.0;
        out.report.sigma2_clamped = true;
    }
    out.params = NoiseParams::make(line.coef[0], sigma2);
    out.report.r2 = line.r2;
    out.report.n_points = points.size();
    out.report.residuals.assign(line.residuals.data(), line.residuals.data() + n);
    return out;
}

IsoCurveFit fit_iso_curves(const std::vector<GainSample>& samples, double iso_divisor,
                           IsoRange valid) {
    std::set<double> gains;
    for (const auto& s : samples) gains.insert(s.gain);
    if (gains.size() < 3) {
        throw CalibrationDataError("fit_iso_curves: need at least 3 distinct gains, got " +
                                   std::to_string(gains.size()));
    }
    const auto n = static_cast<Index>(samples.size());
    Eigen::VectorXd g(n), k(n), s2(n);
    for (Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        g[i] = s.gain;
        k[i] = s.params.k;
        s2[i] = s.params.sigma2;
    }
    // Samples span orders of magnitude across gains, so both fits weight by
    // 1 / y^2 (relative residuals); otherwise the high-gain points swamp the
    // intercepts.
    const auto rel_weights = [](const Eigen::VectorXd& y) {
        return y.unaryExpr([](double v) { return v > 0.0 ? 1.0 / (v * v) : 1.0; }).eval();
    };
    const LinearFit kfit = weighted_line(g, k, rel_weights(k));
    const Eigen::VectorXd g2 = g.cwiseAbs2();
    const LinearFit sfit = weighted_line(g2, s2, rel_weights(s2));

    IsoCurveFit out;
    if (!(kfit.coef[0] > 0.0)) throw CalibrationDataError("fit_iso_curves: fitted alpha is not positive");
    double sigma_d2 = sfit.coef[0];
    double sigma_r2 = sfit.coef[1];
    if (sigma_d2 < 0.0) { sigma_d2 = 0.0; out.clamped = true; }
    if (sigma_r2 < 0.0) { sigma_r2 = 0.0; out.clamped = true; }
    out.curves = IsoCurves::make(kfit.coef[0], kfit.coef[1], sigma_d2, sigma_r2, iso_divisor, valid);
    out.r2_k = plain_r2(k, (g * kfit.coef[0]).array() + kfit.coef[1]);
    out.r2_sigma2 = plain_r2(s2, (g2 * sigma_d2).array() + sigma_r2);
    return out;
}

IsoCalibration calibrate_burst(const BurstStack& stack, double iso_divisor,
                               const BracketOptions& opts) {
    IsoCalibration cal;
    cal.iso = stack.iso;
    cal.gain = stack.iso / iso_divisor;
    const PlaneD mean = pixel_mean(stack);
    cal.points = bracket_variance(stack, mean, opts);
    cal.fit = fit_noise_params(cal.points);
    return cal;
}

nlohmann::json to_json(const CalibrationReport& report) {
    nlohmann::json per_iso = nlohmann::json::array();
    for (const auto& c : report.per_iso) {
        per_iso.push_back({{"iso", c.iso},
                           {"gain", c.gain},
                           {"k", c.fit.params.k},
                           {"sigma2", c.fit.params.sigma2},
                           {"r2", c.fit.report.r2},
                           {"n_points", c.fit.report.n_points},
                           {"sigma2_clamped", c.fit.report.sigma2_clamped}});
    }
    nlohmann::json j{{"per_iso", per_iso}};
    if (report.curves) {
        nlohmann::json curves = report.curves->curves;
        curves["r2_k"] = report.curves->r2_k;
        curves["r2_sigma2"] = report.curves->r2_sigma2;
        j["curves"] = curves;
    }
    return j;
}

std::string points_csv(const CalibrationReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "iso,level,variance,count\n";
    for (const auto& c : report.per_iso) {
        for (const auto& p : c.points) {
            os << c.iso << ',' << p.level << ',' << p.variance << ',' << p.count << '\n';
        }
    }
    return os.str();
}

std::vector<double> chart_levels(std::size_t n, double lo, double hi) {
    std::vector<double> levels(n);
    for (std::size_t i = 0; i < n; ++i) {
        levels[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return levels;
}

PlaneD grayscale_chart(const std::vector<double>& levels, Index patch_side) {
    if (levels.empty() || patch_side <= 0 || patch_side % 2 != 0) {
        throw ValidationError("grayscale_chart: need levels and an even patch side");
    }
    const auto n = static_cast<Index>(levels.size());
    const auto grid_cols = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(n))));
    const Index grid_rows = (n + grid_cols - 1) / grid_cols;
    PlaneD chart = PlaneD::Zero(grid_rows * patch_side, grid_cols * patch_side);
    for (Index i = 0; i < n; ++i) {
        chart.block((i / grid_cols) * patch_side, (i % grid_cols) * patch_side, patch_side, patch_side)
            .setConstant(levels[static_cast<std::size_t>(i)]);
    }
    return chart;
}

BurstStack simulate_burst(const PlaneD& clean, const NoiseParams& params, std::size_t frames,
                          std::uint64_t seed, double iso) {
    BurstStack stack;
    stack.iso = iso;
    stack.meta.iso = iso;
    stack.frames.reserve(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        stack.frames.push_back(
            sample_noisy(clean, params, NoiseKey{seed, static_cast<std::uint32_t>(f)}).cast<float>());
    }
    return stack;
}

}  // namespace ksdn
