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

#include "ksdn/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace ksdn {

namespace {

Eigen::VectorXd gaussian_kernel(int size, double sigma) {
    Eigen::VectorXd k(size);
    const double center = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - center;
        k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    }
    return k / k.sum();
}

// Separable 'valid' filtering: output is (rows - n + 1) x (cols - n + 1).
PlaneD filter_valid(const PlaneD& in, const Eigen::VectorXd& k) {
    const Index n = k.size();
    const Index out_cols = in.cols() - n + 1;
    const Index out_rows = in.rows() - n + 1;
    PlaneD tmp = PlaneD::Zero(in.rows(), out_cols);
    for (Index i = 0; i < n; ++i) tmp += k[i] * in.middleCols(i, out_cols);
    PlaneD out = PlaneD::Zero(out_rows, out_cols);
    for (Index i = 0; i < n; ++i) out += k[i] * tmp.middleRows(i, out_rows);
    return out;
}

nlohmann::json psnr_json(const Psnr& p) {
    if (p.is_identical()) return "inf";
    return p.db;
}

}  // namespace

Psnr psnr(const Image8& a, const Image8& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("psnr: shape mismatch");
    const auto n = static_cast<Index>(a.rgb.size());
    const Eigen::Map<const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>> ma(a.rgb.data(), n);
    const Eigen::Map<const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>> mb(b.rgb.data(), n);
    return psnr(ma, mb, 255.0);
}

double ssim(const PlaneD& a, const PlaneD& b, double peak, const SsimOptions& opts) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("ssim: shape mismatch");
    if (a.rows() < opts.window || a.cols() < opts.window) {
        throw ShapeError("ssim: image " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " is smaller than the " + std::to_string(opts.window) + "-pixel window");
    }
    const Eigen::VectorXd k = gaussian_kernel(opts.window, opts.sigma);
    const double c1 = (opts.k1 * peak) * (opts.k1 * peak);
    const double c2 = (opts.k2 * peak) * (opts.k2 * peak);

    const PlaneD mu_a = filter_valid(a, k);
    const PlaneD mu_b = filter_valid(b, k);
    const PlaneD var_a = filter_valid(a * a, k) - mu_a * mu_a;
    const PlaneD var_b = filter_valid(b * b, k) - mu_b * mu_b;
    const PlaneD cov = filter_valid(a * b, k) - mu_a * mu_b;

    const PlaneD num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
    const PlaneD den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
    return (num / den).mean();
}

PlaneD luma601(const Image8& img) {
    PlaneD y(img.rows, img.cols);
    for (Index r = 0; r < img.rows; ++r) {
        for (Index c = 0; c < img.cols; ++c) {
            y(r, c) = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
        }
    }
    return y;
}

double ssim(const Image8& a, const Image8& b, const SsimOptions& opts) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("ssim: shape mismatch");
    return ssim(luma601(a), luma601(b), 255.0, opts);
}

Image8 crop(const Image8& img, const Rect& r) {
    if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 || r.x + r.w > img.cols || r.y + r.h > img.rows) {
        throw RangeError("ROI [" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                         std::to_string(r.w) + "," + std::to_string(r.h) + "] is outside the " +
                         std::to_string(img.cols) + "x" + std::to_string(img.rows) + " image");
    }
    Image8 out;
    out.rows = r.h;
    out.cols = r.w;
    out.rgb.reserve(static_cast<std::size_t>(r.w * r.h * 3));
    for (Index y = r.y; y < r.y + r.h; ++y) {
        const auto* row = img.rgb.data() + static_cast<std::size_t>((y * img.cols + r.x) * 3);
        out.rgb.insert(out.rgb.end(), row, row + r.w * 3);
    }
    return out;
}

EvalReport evaluate_rendered(const Image8& result, const Image8& reference, const std::vector<Rect>& rois) {
    if (result.rows != reference.rows || result.cols != reference.cols) {
        throw ShapeError("evaluate: result and reference differ in shape");
    }
    std::vector<Rect> rects = rois;
    if (rects.empty()) rects.push_back({0, 0, result.cols, result.rows});

    EvalReport report;
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    for (const Rect& rect : rects) {
        const Image8 a = crop(result, rect);
        const Image8 b = crop(reference, rect);
        RoiScore score{rect, psnr(a, b), ssim(a, b)};
        psnr_sum += score.psnr.db;
        ssim_sum += score.ssim;
        report.rois.push_back(score);
    }
    const auto n = static_cast<double>(report.rois.size());
    report.mean_psnr = {psnr_sum / n};
    report.mean_ssim = ssim_sum / n;
    return report;
}

EvalReport evaluate(const RawImage& result, const RawImage& reference, const CaptureMeta& meta,
                    const std::vector<Rect>& rois, const RenderOptions& opts) {
    if (result.rows() != reference.rows() || result.cols() != reference.cols()) {
        throw ShapeError("evaluate: result and reference raws differ in shape");
    }
    RawImage a = result;
    RawImage b = reference;
    a.meta = meta;
    b.meta = meta;
    return evaluate_rendered(render_srgb(a, opts), render_srgb(b, opts), rois);
}

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json rois = nlohmann::json::array();
    for (const auto& r : report.rois) {
        rois.push_back({{"rect", {r.rect.x, r.rect.y, r.rect.w, r.rect.h}},
                        {"psnr", psnr_json(r.psnr)},
                        {"ssim", r.ssim}});
    }
    return {{"rois", rois}, {"mean_psnr", psnr_json(report.mean_psnr)}, {"mean_ssim", report.mean_ssim}};
}

}  // namespace ksdn
