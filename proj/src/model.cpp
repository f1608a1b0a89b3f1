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

#include "ksdn/nn/model.hpp"
#include "ksdn/nn/weights_io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ksdn::nn {

void ModelConfig::validate() const {
    if (input_channels != 4) {
        throw ValidationError("input_channels must be 4 (packed RGGB), got " + std::to_string(input_channels));
    }
    for (std::size_t i = 0; i < stage_widths.size(); ++i) {
        if (stage_widths[i] < 1) {
            throw ValidationError("stage_widths[" + std::to_string(i) + "] must be >= 1, got " +
                                  std::to_string(stage_widths[i]));
        }
    }
    if (convs_per_encoder_stage < 1 || convs_per_decoder_stage < 0) {
        throw ValidationError("need >= 1 conv per encoder stage and >= 0 per decoder stage");
    }
    for (int k : {encoder_kernel, decoder_kernel, dense_kernel}) {
        if (k < 1 || k % 2 == 0) throw ValidationError("kernel sizes must be odd and positive");
    }
    if (activation != "relu") throw ValidationError("unsupported activation '" + activation + "'");
}

ModelConfig tiny_config(std::array<int, 5> widths) {
    ModelConfig c;
    c.stage_widths = widths;
    return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"input_channels", c.input_channels},
         {"stage_widths", c.stage_widths},
         {"convs_per_encoder_stage", c.convs_per_encoder_stage},
         {"convs_per_decoder_stage", c.convs_per_decoder_stage},
         {"encoder_kernel", c.encoder_kernel},
         {"decoder_kernel", c.decoder_kernel},
         {"dense_kernel", c.dense_kernel},
         {"activation", c.activation}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.input_channels = j.value("input_channels", d.input_channels);
    c.stage_widths = j.value("stage_widths", d.stage_widths);
    c.convs_per_encoder_stage = j.value("convs_per_encoder_stage", d.convs_per_encoder_stage);
    c.convs_per_decoder_stage = j.value("convs_per_decoder_stage", d.convs_per_decoder_stage);
    c.encoder_kernel = j.value("encoder_kernel", d.encoder_kernel);
    c.decoder_kernel = j.value("decoder_kernel", d.decoder_kernel);
    c.dense_kernel = j.value("dense_kernel", d.dense_kernel);
    c.activation = j.value("activation", d.activation);
    c.validate();
}

namespace {

void add_sep(std::vector<ParamSpec>& out, const std::string& prefix, Index cin, Index cout, Index k) {
    out.push_back({prefix + ".dw", {cin, 1, k, k}, k * k});
    out.push_back({prefix + ".pw", {cout, cin, 1, 1}, cin});
    out.push_back({prefix + ".b", {cout}, cin});
}

}  // namespace

std::vector<ParamSpec> param_specs(const ModelConfig& config) {
    config.validate();
    const auto& c = config.stage_widths;
    const Index kd = config.dense_kernel;
    std::vector<ParamSpec> out;
    out.push_back({"stem.w", {c[0], config.input_channels, kd, kd}, config.input_channels * kd * kd});
    out.push_back({"stem.b", {c[0]}, config.input_channels * kd * kd});
    for (int s = 1; s <= 4; ++s) {
        Index cin = c[s - 1];
        for (int j = 0; j < config.convs_per_encoder_stage; ++j) {
            add_sep(out, "enc" + std::to_string(s) + ".conv" + std::to_string(j), cin, c[s], config.encoder_kernel);
            cin = c[s];
        }
    }
    for (int s = 4; s >= 1; --s) {
        const std::string ss = std::to_string(s);
        out.push_back({"dec" + ss + ".up.w", {c[s], c[s - 1], 2, 2}, c[s]});
        out.push_back({"dec" + ss + ".up.b", {c[s - 1]}, c[s]});
        add_sep(out, "skip" + ss, c[s - 1], c[s - 1], config.decoder_kernel);
        for (int j = 0; j < config.convs_per_decoder_stage; ++j) {
            add_sep(out, "dec" + ss + ".conv" + std::to_string(j), c[s - 1], c[s - 1], config.decoder_kernel);
        }
    }
    out.push_back({"out.w", {config.input_channels, c[0], kd, kd}, c[0] * kd * kd});
    out.push_back({"out.b", {config.input_channels}, c[0] * kd * kd});
    return out;
}

double count_macs(const ModelConfig& config, double megapixels) {
    config.validate();
    const auto& c = config.stage_widths;
    const double packed = 0.25e6 * megapixels;
    auto sep = [](double cin, double cout, double k, double pos) { return (cin * k * k + cin * cout) * pos; };

    double macs = dense_conv_macs(config.input_channels, c[0], config.dense_kernel, packed);
    double pos = packed;
    for (int s = 1; s <= 4; ++s) {
        double cin = c[s - 1];
        for (int j = 0; j < config.convs_per_encoder_stage; ++j) {
            const double out_pos = j == config.convs_per_encoder_stage - 1 ? pos / 4.0 : pos;
            macs += sep(cin, c[s], config.encoder_kernel, out_pos);
            cin = c[s];
        }
        pos /= 4.0;
    }
    for (int s = 4; s >= 1; --s) {
        pos *= 4.0;
        const double w = c[s - 1];
        macs += static_cast<double>(c[s]) * w * pos;  // deconv: one input tap per output
        macs += sep(w, w, config.decoder_kernel, pos) * (1 + config.convs_per_decoder_stage);
    }
    macs += dense_conv_macs(c[0], config.input_channels, config.dense_kernel, packed);
    return macs;
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xffu));
    out.push_back(static_cast<char>(v >> 8));
}

class Reader {
public:
    Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    bool done() const { return pos_ == bytes_.size(); }

    const char* take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(origin_ + ": truncated while reading " + what + " at byte " + std::to_string(pos_));
        }
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::uint32_t u32(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
        return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
               static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
    }
    std::uint16_t u16(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(2, what));
        return static_cast<std::uint16_t>(p[0] | p[1] << 8);
    }
    std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(*take(1, what)); }

private:
    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

std::string shape_str(const std::vector<Index>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

}  // namespace

std::string encode_weight_file(const WeightFile& file) {
    std::string out = "KSDN";
    put_u32(out, kWeightFormatVersion);
    const std::string cfg = nlohmann::json(file.config).dump();
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out += cfg;
    for (const auto& a : file.arrays) {
        if (a.name.size() > 0xffff) throw ValidationError("layer name too long: " + a.name.substr(0, 32));
        if (a.shape.size() > 0xff) throw ValidationError("layer '" + a.name + "' has too many dims");
        Index n = 1;
        for (Index d : a.shape) n *= d;
        if (n != a.data.size()) {
            throw ValidationError("layer '" + a.name + "' shape " + shape_str(a.shape) + " does not match " +
                                  std::to_string(a.data.size()) + " values");
        }
        put_u16(out, static_cast<std::uint16_t>(a.name.size()));
        out += a.name;
        out.push_back(static_cast<char>(a.shape.size()));
        for (Index d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (Index i = 0; i < a.data.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(a.data[i]));
    }
    return out;
}

WeightFile decode_weight_file(const std::string& bytes, const std::string& origin) {
    Reader r(bytes, origin);
    if (std::string(r.take(4, "magic"), 4) != "KSDN") throw FormatError(origin + ": bad magic, not a KSDN file");
    const std::uint32_t version = r.u32("version");
    if (version != kWeightFormatVersion) {
        throw FormatError(origin + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t cfg_len = r.u32("config length");
    const std::string cfg(r.take(cfg_len, "config"), cfg_len);

    WeightFile file;
    try {
        file.config = nlohmann::json::parse(cfg).get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(origin + ": malformed config block: " + e.what());
    }
    while (!r.done()) {
        NamedArray a;
        const std::uint16_t name_len = r.u16("layer name length");
        a.name.assign(r.take(name_len, "layer name"), name_len);
        const std::uint8_t ndim = r.u8("layer ndim");
        Index n = 1;
        for (int i = 0; i < ndim; ++i) {
            a.shape.push_back(static_cast<Index>(r.u32("layer dims")));
            n *= a.shape.back();
        }
        a.data.resize(n);
        for (Index i = 0; i < n; ++i) a.data[i] = std::bit_cast<float>(r.u32("layer data"));
        file.arrays.push_back(std::move(a));
    }
    return file;
}

void write_weight_file(const std::filesystem::path& path, const WeightFile& file) {
    const std::string bytes = encode_weight_file(file);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

WeightFile read_weight_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_weight_file(bytes, path.string());
}

void save_weights(const Model<float>& model, const std::filesystem::path& path) {
    WeightFile file{model.config(), {}};
    for (const auto& p : model.params()) file.arrays.push_back({p.name, p.shape, p.value});
    write_weight_file(path, file);
}

Model<float> model_from_arrays(const ModelConfig& config, const std::vector<NamedArray>& arrays) {
    Model<float> model(config);
    std::vector<bool> seen(model.params().size(), false);
    for (const auto& a : arrays) {
        if (!model.has(a.name)) throw ValidationError("layer '" + a.name + "' is not part of the configured model");
        const std::size_t i = model.index_of(a.name);
        auto& p = model.params()[i];
        if (a.shape != p.shape) {
            throw ValidationError("layer '" + a.name + "' has shape " + shape_str(a.shape) + ", config expects " +
                                  shape_str(p.shape));
        }
        if (seen[i]) throw ValidationError("layer '" + a.name + "' appears twice");
        p.value = a.data;
        seen[i] = true;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) throw ValidationError("layer '" + model.params()[i].name + "' is missing");
    }
    return model;
}

Model<float> load_weights(const std::filesystem::path& path) {
    const WeightFile file = read_weight_file(path);
    return model_from_arrays(file.config, file.arrays);
}

}  // namespace ksdn::nn
