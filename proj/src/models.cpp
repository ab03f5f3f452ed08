#include "csnet/models.hpp"

#include <algorithm>
#include <cctype>

#include "csnet/kernels.hpp"

namespace csnet {

namespace {

constexpr std::size_t kKernel = 4;
constexpr std::size_t kStride = 2;
constexpr std::size_t kPad = 1;

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

std::string to_string(Task task) {
    switch (task) {
        case Task::TRAJECTORY: return "trajectory";
        case Task::JOINTS: return "joints";
        case Task::VIDEO: return "video";
    }
    return "?";
}

std::string to_string(DecoderKind kind) {
    switch (kind) {
        case DecoderKind::FC: return "fc";
        case DecoderKind::CONV_INDEXED: return "conv_indexed";
        case DecoderKind::FLOW: return "flow";
    }
    return "?";
}

Task parse_task(const std::string& text) {
    const auto t = lower(text);
    if (t == "trajectory") return Task::TRAJECTORY;
    if (t == "joints") return Task::JOINTS;
    if (t == "video") return Task::VIDEO;
    throw UsageError("unknown task '" + text + "'");
}

DecoderKind parse_decoder(const std::string& text) {
    const auto t = lower(text);
    if (t == "fc") return DecoderKind::FC;
    if (t == "conv_indexed" || t == "conv-indexed") return DecoderKind::CONV_INDEXED;
    if (t == "flow") return DecoderKind::FLOW;
    throw UsageError("unknown decoder '" + text + "'");
}

Shape ModelConfig::output_shape() const {
    switch (task) {
        case Task::TRAJECTORY: return {horizon, 2};
        case Task::JOINTS: return {joints, horizon, 2};
        case Task::VIDEO: return {frame_channels, frame_h, frame_w};
    }
    return {};
}

void ModelConfig::validate() const {
    const bool ok = (task == Task::VIDEO) == (decoder == DecoderKind::FLOW) &&
                    (decoder != DecoderKind::CONV_INDEXED || task == Task::JOINTS);
    if (!ok) throw UsageError("decoder " + to_string(decoder) + " is not valid for task " + to_string(task));
    if (history_frames == 0 || frame_channels == 0 || latent_dim == 0 || horizon == 0 || joints == 0)
        throw UsageError("model: zero-sized dimension in config");
    if (task == Task::TRAJECTORY && joints != 1) throw UsageError("model: trajectory task has one object");
    if (encoder_channels.size() < 2 || encoder_channels.size() > 4)
        throw UsageError("model: encoder needs 2 to 4 stages");
    const std::size_t f = std::size_t{1} << encoder_channels.size();
    if (frame_h % f != 0 || frame_w % f != 0)
        throw UsageError("model: frame size must be divisible by " + std::to_string(f));
}

// ---------------------------------------------------------------------------

Encoder Encoder::create(std::size_t in_channels, const std::vector<std::size_t>& channels,
                        std::size_t h, std::size_t w, std::size_t feature_dim, Rng& rng) {
    Encoder e;
    std::size_t c = in_channels;
    for (std::size_t out : channels) {
        e.stages.push_back(Conv2d::create(c, out, kKernel, kStride, kPad, rng));
        c = out;
        h /= 2;
        w /= 2;
    }
    e.project = Linear::create(c * h * w, feature_dim, rng);
    return e;
}

EncoderOutput Encoder::operator()(const Tensor& x) const {
    EncoderOutput out;
    Tensor h = x;
    for (const auto& stage : stages) {
        h = relu(stage(h));
        out.skips.push_back(h);
    }
    out.features = relu(project(flatten(h)));
    return out;
}

void Encoder::collect(const std::string& prefix, ParamList& out) const {
    for (std::size_t i = 0; i < stages.size(); ++i) stages[i].collect(prefix + ".conv" + std::to_string(i), out);
    project.collect(prefix + ".project", out);
}

Tensor FCDecoder::operator()(const Tensor& z, const Tensor& features) const {
    Tensor h = concat({z, features});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i](h);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

void FCDecoder::collect(const std::string& prefix, ParamList& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".fc" + std::to_string(i), out);
}

void ConvIndexedDecoder::collect(const std::string& prefix, ParamList& out) const {
    for (std::size_t i = 0; i < ups.size(); ++i) ups[i].collect(prefix + ".up" + std::to_string(i), out);
    for (std::size_t j = 0; j < heads.size(); ++j) heads[j].collect(prefix + ".joint" + std::to_string(j), out);
}

void FlowDecoder::collect(const std::string& prefix, ParamList& out) const {
    for (std::size_t i = 0; i < ups.size(); ++i) ups[i].collect(prefix + ".up" + std::to_string(i), out);
}

void RecognitionNet::collect(const std::string& prefix, ParamList& out) const {
    if (frame_encoder) frame_encoder->collect(prefix + ".yenc", out);
    if (vector_encoder) vector_encoder->collect(prefix + ".yproj", out);
    head.collect(prefix + ".head", out);
}

// ---------------------------------------------------------------------------

Tensor gather_at(const Tensor& feature_map, std::span<const PixelCoord> coords) {
    if (feature_map.rank() != 3) throw ShapeError("gather_at: expected [c x H x W] map");
    if (coords.empty()) throw UsageError("gather_at: no coordinates");
    const std::size_t c = feature_map.dim(0), h = feature_map.dim(1), w = feature_map.dim(2);
    std::vector<std::size_t> cells;
    cells.reserve(coords.size());
    for (const auto& p : coords) {
        if (p.row >= h || p.col >= w)
            throw InputError("gather_at: coordinate (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                             ") outside " + std::to_string(h) + "x" + std::to_string(w) + " map");
        cells.push_back(p.row * w + p.col);
    }
    const std::size_t hw = h * w;
    const auto v = feature_map.data();
    std::vector<double> out(coords.size() * c);
    for (std::size_t j = 0; j < cells.size(); ++j)
        for (std::size_t ch = 0; ch < c; ++ch) out[j * c + ch] = v[ch * hw + cells[j]];
    return make_result({coords.size(), c}, std::move(out), {feature_map}, [cells, c, hw](detail::Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t j = 0; j < cells.size(); ++j)
            for (std::size_t ch = 0; ch < c; ++ch) g[ch * hw + cells[j]] += self.grad[j * c + ch];
    });
}

Tensor bilinear_warp(const Tensor& frame, const Tensor& flow) {
    if (frame.rank() != 3 || flow.rank() != 3 || flow.dim(0) != 2 || flow.dim(1) != frame.dim(1) ||
        flow.dim(2) != frame.dim(2))
        throw ShapeError("bilinear_warp: frame " + to_string(frame.shape()) + " vs flow " + to_string(flow.shape()));
    const std::size_t c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
    std::vector<double> out(frame.size());
    kernels::warp_forward(c, h, w, frame.data(), flow.data(), out);
    return make_result(frame.shape(), std::move(out), {frame, flow}, [c, h, w](detail::Node& self) {
        auto& nf = *self.parents[0];
        auto& nflow = *self.parents[1];
        std::span<double> dframe, dflow;
        if (nf.requires_grad) dframe = nf.ensure_grad();
        if (nflow.requires_grad) dflow = nflow.ensure_grad();
        kernels::warp_backward(c, h, w, nf.value, nflow.value, self.grad, dframe, dflow);
    });
}

PixelCoord scale_coord(PixelCoord c, std::size_t frame_h, std::size_t frame_w, std::size_t map_h,
                       std::size_t map_w) {
    return {static_cast<std::uint32_t>(static_cast<std::size_t>(c.row) * map_h / frame_h),
            static_cast<std::uint32_t>(static_cast<std::size_t>(c.col) * map_w / frame_w)};
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed, streams::kInit);
    const auto& ch = config_.encoder_channels;
    const std::size_t stages = ch.size();
    const std::size_t d = config_.latent_dim;
    encoder_ = Encoder::create(config_.in_channels(), ch, config_.frame_h, config_.frame_w,
                               config_.feature_dim, rng);
    prior_head_ = GaussianHead::create(config_.feature_dim, d, rng);

    const std::size_t out_len = numel(config_.output_shape());
    switch (config_.decoder) {
        case DecoderKind::FC: {
            FCDecoder dec;
            const std::size_t hid = config_.hidden;
            dec.layers.push_back(Linear::create(d + config_.feature_dim, hid, rng));
            dec.layers.push_back(Linear::create(hid, hid, rng));
            dec.layers.push_back(Linear::create(hid, hid, rng));
            dec.layers.push_back(Linear::create(hid, out_len, rng));
            fc_ = std::move(dec);
            break;
        }
        case DecoderKind::CONV_INDEXED: {
            // Up to half resolution: top map (+z) -> ... -> head_channels.
            ConvIndexedDecoder dec;
            std::size_t in = ch[stages - 1] + d;
            for (std::size_t i = 0; i + 1 < stages; ++i) {
                const bool last = i + 2 == stages;
                const std::size_t out = last ? config_.head_channels : ch[stages - 2 - i];
                dec.ups.push_back(ConvTranspose2d::create(in, out, kKernel, kStride, kPad, rng));
                in = out + (last ? 0 : ch[stages - 2 - i]);
            }
            for (std::size_t j = 0; j < config_.joints; ++j)
                dec.heads.push_back(Linear::create(config_.head_channels, 2 * config_.horizon, rng));
            conv_indexed_ = std::move(dec);
            break;
        }
        case DecoderKind::FLOW: {
            FlowDecoder dec;
            std::size_t in = ch[stages - 1] + d;
            for (std::size_t i = 0; i < stages; ++i) {
                const bool last = i + 1 == stages;
                const std::size_t out = last ? 2 : ch[stages - 2 - i];
                dec.ups.push_back(ConvTranspose2d::create(in, out, kKernel, kStride, kPad, rng));
                if (!last) in = out + ch[stages - 2 - i];
            }
            flow_ = std::move(dec);
            break;
        }
    }

    if (config_.task == Task::VIDEO)
        recognition_.frame_encoder = Encoder::create(config_.frame_channels, ch, config_.frame_h,
                                                     config_.frame_w, config_.y_feature_dim, rng);
    else
        recognition_.vector_encoder = Linear::create(out_len, config_.y_feature_dim, rng);
    recognition_.head = GaussianHead::create(config_.feature_dim + config_.y_feature_dim, d, rng);
}

EncoderOutput Model::encode(const Tensor& x) const {
    const Shape expected{config_.in_channels(), config_.frame_h, config_.frame_w};
    if (x.shape() != expected)
        throw ShapeError("encode: expected glimpse stack " + to_string(expected) + ", got " + to_string(x.shape()));
    auto out = encoder_(x);
    if (!config_.uses_skips()) out.skips.erase(out.skips.begin(), out.skips.end() - 1);
    return out;
}

GaussianParams Model::prior(const EncoderOutput& enc) const { return gaussian_head(enc.features, prior_head_); }

GaussianParams Model::recognition_forward(const EncoderOutput& enc, const Tensor& y) const {
    if (y.shape() != config_.output_shape())
        throw ShapeError("recognition: target " + to_string(y.shape()) + " vs " + to_string(config_.output_shape()));
    Tensor yfeat = recognition_.frame_encoder ? (*recognition_.frame_encoder)(y).features
                                              : relu((*recognition_.vector_encoder)(flatten(y)));
    return gaussian_head(concat({enc.features, yfeat}), recognition_.head);
}

Tensor Model::decode_trajectories(const Tensor& z, const EncoderOutput& enc,
                                  std::span<const PixelCoord> coords) const {
    if (z.shape() != Shape{config_.latent_dim}) throw ShapeError("decode: latent shape " + to_string(z.shape()));
    const Shape out_shape = config_.output_shape();
    if (fc_) return reshape((*fc_)(z, enc.features), out_shape);
    if (!conv_indexed_) throw UsageError("decode_trajectories: model has a flow decoder");
    if (coords.size() != config_.joints)
        throw UsageError("decode_trajectories: conv-indexed decoding needs " + std::to_string(config_.joints) +
                         " joint coordinates, got " + std::to_string(coords.size()));
    const auto& skips = enc.skips;
    const std::size_t stages = skips.size();
    const Tensor& top = skips.back();
    Tensor h = concat({top, replicate_spatial(z, top.dim(1), top.dim(2))});
    for (std::size_t i = 0; i < conv_indexed_->ups.size(); ++i) {
        h = relu(conv_indexed_->ups[i](h));
        if (i + 1 < conv_indexed_->ups.size()) h = concat({h, skips[stages - 2 - i]});
    }
    std::vector<PixelCoord> cells;
    cells.reserve(coords.size());
    for (const auto& c : coords) {
        if (c.row >= config_.frame_h || c.col >= config_.frame_w)
            throw InputError("decode_trajectories: joint coordinate outside frame");
        cells.push_back(scale_coord(c, config_.frame_h, config_.frame_w, h.dim(1), h.dim(2)));
    }
    const Tensor rows = gather_at(h, cells);
    const std::size_t c = rows.dim(1);
    std::vector<Tensor> per_joint;
    per_joint.reserve(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j)
        per_joint.push_back(conv_indexed_->heads[j](reshape(slice(rows, j, j + 1), {c})));
    return reshape(concat(per_joint), out_shape);
}

FramePrediction Model::predict_frame(const Tensor& x, const EncoderOutput& enc, const Tensor& z) const {
    if (!flow_) throw UsageError("predict_frame: model has no flow decoder");
    if (z.shape() != Shape{config_.latent_dim}) throw ShapeError("predict_frame: latent shape " + to_string(z.shape()));
    const auto& skips = enc.skips;
    const std::size_t stages = skips.size();
    const Tensor& top = skips.back();
    Tensor h = concat({top, replicate_spatial(z, top.dim(1), top.dim(2))});
    for (std::size_t i = 0; i < flow_->ups.size(); ++i) {
        h = flow_->ups[i](h);
        if (i + 1 < flow_->ups.size()) h = concat({relu(h), skips[stages - 2 - i]});
    }
    const std::size_t c = config_.frame_channels;
    const Tensor last = slice(x, (config_.history_frames - 1) * c, config_.history_frames * c);
    return {h, bilinear_warp(last, h)};
}

Tensor Model::predict(const Tensor& x, const EncoderOutput& enc, const Tensor& z,
                      std::span<const PixelCoord> coords) const {
    if (flow_) return predict_frame(x, enc, z).frame;
    return decode_trajectories(z, enc, coords);
}

ParamList Model::parameters() const {
    ParamList out;
    encoder_.collect("encoder", out);
    prior_head_.collect("prior", out);
    if (fc_) fc_->collect("decoder", out);
    if (conv_indexed_) conv_indexed_->collect("decoder", out);
    if (flow_) flow_->collect("decoder", out);
    recognition_.collect("recognition", out);
    return out;
}

}  // namespace csnet
