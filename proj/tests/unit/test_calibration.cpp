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

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <random>

using namespace ksdn;
namespace fs = std::filesystem;

namespace {

BurstStack constant_stack(std::vector<float> values, Index rows = 8, Index cols = 8) {
    BurstStack s;
    for (float v : values) s.frames.push_back(PlaneF::Constant(rows, cols, v));
    return s;
}

BurstStack chart_burst(const NoiseParams& p, std::size_t frames, std::uint64_t seed, Index patch = 64) {
    const PlaneD chart = grayscale_chart(chart_levels(16, 0.05, 0.85), patch);
    return simulate_burst(chart, p, frames, seed, 100.0);
}

std::vector<MeanVariancePoint> line_points(double k, double s2) {
    std::vector<MeanVariancePoint> pts;
    for (int i = 0; i < 8; ++i) {
        const double level = 0.05 + 0.1 * i;
        pts.push_back({level, k * level + s2, static_cast<std::size_t>(300 + 50 * i)});
    }
    return pts;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_frame(const fs::path& path, float level, double iso) {
    CaptureMeta meta;
    meta.iso = iso;
    save_raw(RawImage{denormalize(PlaneF::Constant(4, 4, level), meta), meta}, path.string());
}

}  // namespace

TEST_CASE("pixel_mean") {
    const auto same = constant_stack(std::vector<float>(64, 0.37f));
    CHECK((pixel_mean(same) == same.frames[0].cast<double>()).all());

    const auto alt = constant_stack({0.2f, 0.4f, 0.2f, 0.4f});
    CHECK((pixel_mean(alt) - 0.3).abs().maxCoeff() < 1e-7);

    const auto p = NoiseParams::make(0.01, 1e-4);
    const auto burst = simulate_burst(PlaneD::Constant(64, 64, 0.5), p, 64, 3, 100.0);
    const PlaneD m = pixel_mean(burst);
    const double tol = 4.0 * std::sqrt((p.k * 0.5 + p.sigma2) / 64.0);
    const auto inside = ((m - 0.5).abs() <= tol).count();
    CHECK(static_cast<double>(inside) >= 0.999 * static_cast<double>(m.size()));

    BurstStack ragged = constant_stack({0.1f, 0.2f});
    ragged.frames[1] = PlaneF::Constant(8, 6, 0.2f);
    CHECK_THROWS_AS(pixel_mean(ragged), ShapeError);
    CHECK_THROWS_AS(pixel_mean(constant_stack({0.1f})), ShapeError);
}

TEST_CASE("bracket_variance") {
    SUBCASE("uniform stack gives one bin") {
        BurstStack s;
        for (int f = 0; f < 4; ++f) s.frames.push_back(PlaneF::Constant(20, 20, 0.5f));
        const auto pts = bracket_variance(s, pixel_mean(s));
        REQUIRE(pts.size() == 1);
        CHECK(pts[0].count == 400);
        CHECK(pts[0].variance == 0.0);
        CHECK(pts[0].level == doctest::Approx(0.5));
    }
    SUBCASE("chart bins follow k * level + sigma2") {
        const auto p = NoiseParams::make(0.02, 5e-5);
        const auto burst = chart_burst(p, 64, 17);
        const auto pts = bracket_variance(burst, pixel_mean(burst));
        CHECK(pts.size() >= 16);
        for (const auto& pt : pts) {
            CAPTURE(pt.level);
            CHECK(pt.count >= 200);
            CHECK(pt.variance == doctest::Approx(p.k * pt.level + p.sigma2).epsilon(0.05));
        }
    }
    SUBCASE("saturated and dark pixels are dropped") {
        BurstStack s;
        for (int f = 0; f < 4; ++f) {
            PlaneF frame(20, 40);
            frame.leftCols(20).setConstant(1.0f);
            frame.rightCols(20).setConstant(f % 2 ? 0.3f : 0.32f);
            s.frames.push_back(frame);
        }
        const auto pts = bracket_variance(s, pixel_mean(s));
        REQUIRE(pts.size() == 1);
        CHECK(pts[0].level == doctest::Approx(0.31));
        const auto dark = constant_stack({0.001f, 0.002f}, 20, 20);
        CHECK_THROWS_AS(bracket_variance(dark, pixel_mean(dark)), CalibrationDataError);
    }
    SUBCASE("sparse bins are dropped and nothing left is an error") {
        const auto s = constant_stack({0.5f, 0.5f}, 10, 10);
        CHECK_THROWS_AS(bracket_variance(s, pixel_mean(s)), CalibrationDataError);
        BracketOptions o;
        o.min_count = 100;
        CHECK(bracket_variance(s, pixel_mean(s), o).size() == 1);
        o.bin_width = 0.0;
        CHECK_THROWS_AS(bracket_variance(s, pixel_mean(s), o), ValidationError);
        CHECK_THROWS_AS(bracket_variance(s, PlaneD::Zero(3, 3), {}), ShapeError);
    }
}

TEST_CASE("fit_noise_params") {
    const auto exact = fit_noise_params(line_points(0.03, 0.002));
    CHECK(exact.params.k == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(exact.params.sigma2 == doctest::Approx(0.002).epsilon(1e-10));
    CHECK(exact.report.r2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(exact.report.n_points == 8);
    CHECK(!exact.report.sigma2_clamped);

    const auto p = NoiseParams::make(0.02, 5e-5);
    const auto burst = chart_burst(p, 64, 99);
    const auto fit = fit_noise_params(bracket_variance(burst, pixel_mean(burst)));
    CHECK(fit.params.k == doctest::Approx(0.02).epsilon(0.03));
    CHECK(fit.params.sigma2 == doctest::Approx(5e-5).epsilon(0.15));

    auto two = line_points(0.03, 0.002);
    two.resize(2);
    CHECK_THROWS_AS(fit_noise_params(two), CalibrationDataError);
    std::vector<MeanVariancePoint> narrow{{0.2, 0.01, 300}, {0.3, 0.012, 300}, {0.4, 0.014, 300}};
    CHECK_THROWS_AS(fit_noise_params(narrow), CalibrationDataError);

    auto clamp = line_points(0.03, 0.0);
    for (auto& pt : clamp) pt.variance -= 0.001;
    const auto clamped = fit_noise_params(clamp);
    CHECK(clamped.report.sigma2_clamped);
    CHECK(clamped.params.sigma2 == 0.0);
}

TEST_CASE("fit_noise_params ignores point order and treats weight as multiplicity") {
    auto pts = line_points(0.02, 1e-4);
    Stream rng(4, 0, 0, StreamPurpose::test);
    for (auto& pt : pts) pt.variance *= 1.0 + 0.05 * rng.uniform(-1.0, 1.0);
    const auto base = fit_noise_params(pts);

    auto shuffled = pts;
    std::mt19937 gen(7);
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const auto s = fit_noise_params(shuffled);
    CHECK(s.params.k == doctest::Approx(base.params.k).epsilon(1e-12));
    CHECK(s.params.sigma2 == doctest::Approx(base.params.sigma2).epsilon(1e-9));

    auto split = pts;
    split[2].count *= 2;
    auto dup = pts;
    dup.push_back(dup[2]);
    const auto a = fit_noise_params(split);
    const auto b = fit_noise_params(dup);
    CHECK(a.params.k == doctest::Approx(b.params.k).epsilon(1e-12));
    CHECK(a.params.sigma2 == doctest::Approx(b.params.sigma2).epsilon(1e-9));
}

TEST_CASE("fit_iso_curves") {
    const std::vector<double> gains{1, 2, 4, 8, 16, 32, 64};
    std::vector<GainSample> samples;
    for (double g : gains) samples.push_back({g, NoiseParams::make(0.01 * g, 1e-6 * g * g + 1e-6)});
    const auto exact = fit_iso_curves(samples);
    CHECK(exact.curves.alpha == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(std::abs(exact.curves.k_intercept) < 1e-8);
    CHECK(exact.curves.sigma_d2 == doctest::Approx(1e-6).epsilon(1e-6));
    CHECK(exact.curves.sigma_r2 == doctest::Approx(1e-6).epsilon(1e-6));
    CHECK(exact.r2_k == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(exact.r2_sigma2 == doctest::Approx(1.0).epsilon(1e-12));

    Stream rng(12, 0, 0, StreamPurpose::test);
    for (int trial = 0; trial < 20; ++trial) {
        auto noisy = samples;
        for (auto& s : noisy) {
            s.params.k *= 1.0 + 0.01 * rng.uniform(-1.0, 1.0);
            s.params.sigma2 *= 1.0 + 0.01 * rng.uniform(-1.0, 1.0);
        }
        const auto fit = fit_iso_curves(noisy);
        CHECK(fit.curves.alpha == doctest::Approx(0.01).epsilon(0.03));
        CHECK(fit.curves.sigma_d2 == doctest::Approx(1e-6).epsilon(0.03));
        CHECK(fit.curves.sigma_r2 == doctest::Approx(1e-6).epsilon(0.03));
    }

    std::vector<GainSample> one(3, {4.0, NoiseParams::make(0.04, 1e-5)});
    CHECK_THROWS_AS(fit_iso_curves(one), CalibrationDataError);
    one.resize(2);
    one[1].gain = 8.0;
    CHECK_THROWS_AS(fit_iso_curves(one), CalibrationDataError);
}

TEST_CASE("simulated bursts calibrate end to end") {
    const IsoCurves truth = reference_curves();
    std::vector<GainSample> samples;
    CalibrationReport report;
    for (double iso : {100.0, 800.0, 6400.0}) {
        CAPTURE(iso);
        const auto p = params_at_iso(truth, iso);
        const PlaneD chart = grayscale_chart(chart_levels(16, 0.05, 0.85), 48);
        const auto cal = calibrate_burst(simulate_burst(chart, p, 64, static_cast<std::uint64_t>(iso), iso));
        CHECK(cal.gain == doctest::Approx(iso / 100.0));
        CHECK(cal.fit.params.k == doctest::Approx(p.k).epsilon(0.05));
        CHECK(cal.fit.params.sigma2 == doctest::Approx(p.sigma2).epsilon(0.15));
        samples.push_back({cal.gain, cal.fit.params});
        report.per_iso.push_back(cal);
    }
    report.curves = fit_iso_curves(samples);
    CHECK(report.curves->r2_k >= 0.99);
    CHECK(report.curves->r2_sigma2 >= 0.99);

    const auto j = to_json(report);
    REQUIRE(j.at("per_iso").size() == 3);
    for (const char* key : {"iso", "gain", "k", "sigma2", "r2", "n_points"}) CHECK(j["per_iso"][0].contains(key));
    CHECK(j.at("curves").at("alpha").get<double>() == doctest::Approx(report.curves->curves.alpha));
    const auto csv = points_csv(report);
    CHECK(csv.rfind("iso,level,variance,count\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') ==
          1 + static_cast<long>(report.per_iso[0].points.size() + report.per_iso[1].points.size() +
                                report.per_iso[2].points.size()));
}

TEST_CASE("load_burst_dir") {
    TempDir dir("ksdn_burst_test");
    CHECK_THROWS_AS(load_burst_dir((dir.path / "missing").string()), CalibrationDataError);
    CHECK_THROWS_AS(load_burst_dir(dir.path.string()), CalibrationDataError);
    write_frame(dir.path / "a.pgm", 0.25f, 800.0);
    CHECK_THROWS_AS(load_burst_dir(dir.path.string()), CalibrationDataError);
    write_frame(dir.path / "b.pgm", 0.5f, 800.0);
    const auto stack = load_burst_dir(dir.path.string());
    CHECK(stack.frames.size() == 2);
    CHECK(stack.iso == 800.0);
    CHECK(stack.frames[0](0, 0) == doctest::Approx(0.25f).epsilon(1e-4));
    write_frame(dir.path / "c.pgm", 0.5f, 1600.0);
    CHECK_THROWS_AS(load_burst_dir(dir.path.string()), CalibrationDataError);
}

TEST_CASE("chart helpers") {
    const auto levels = chart_levels(16, 0.05, 0.85);
    CHECK(levels.front() == 0.05);
    CHECK(levels.back() == doctest::Approx(0.85));
    const PlaneD chart = grayscale_chart(levels, 10);
    CHECK(chart.rows() == 40);
    CHECK(chart.cols() == 40);
    CHECK(chart(0, 0) == 0.05);
    CHECK(chart(39, 39) == doctest::Approx(0.85));
    CHECK_THROWS_AS(grayscale_chart(levels, 3), ValidationError);
    CHECK_THROWS_AS(grayscale_chart({}, 4), ValidationError);
}
