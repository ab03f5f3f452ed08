#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csnet/nn.hpp"
#include "csnet/tensor.hpp"

namespace csnet {

enum class Task : std::uint8_t { TRAJECTORY = 0, JOINTS = 1, VIDEO = 2 };
enum class DecoderKind : std::uint8_t { FC = 0, CONV_INDEXED = 1, FLOW = 2 };

std::string to_string(Task task);
std::string to_string(DecoderKind kind);
Task parse_task(const std::string& text);
DecoderKind parse_decoder(const std::string& text);

// Pixel coordinate (row, col).
struct PixelCoord {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    bool operator==(const PixelCoord&) const = default;
};

struct ModelConfig {
    Task task = Task::TRAJECTORY;
    DecoderKind decoder = DecoderKind::FC;
    std::size_t history_frames = 1;  // Nf
    std::size_t frame_channels = 1;  // C
    std::size_t frame_h = 32;
    std::size_t frame_w = 32;
    std::size_t joints = 1;          // J; 1 for object trajectories
    std::size_t horizon = 20;        // h
    std::size_t latent_dim = 4;      // d
    std::size_t feature_dim = 32;
    std::size_t hidden = 64;
    std::size_t y_feature_dim = 16;
    std::size_t head_channels = 16;  // conv-indexed feature map depth
    std::vector<std::size_t> encoder_channels{8, 16, 16};
    // false: decode from z = mu only (regression baseline)
    bool stochastic = true;

    std::size_t in_channels() const { return history_frames * frame_channels; }
    bool uses_skips() const { return task != Task::TRAJECTORY; }
    // Shape of the target y for this task.
    Shape output_shape() const;
    void validate() const;
};

struct EncoderOutput {
    Tensor features;            // [feature_dim]
    std::vector<Tensor> skips;  // per-stage maps, finest first; last is the top map
};

struct Encoder {
    std::vector<Conv2d> stages;
    Linear project;

    // Each stage is a 4x4 stride-2 conv, halving the spatial extent.
    static Encoder create(std::size_t in_channels, const std::vector<std::size_t>& channels,
                          std::size_t h, std::size_t w, std::size_t feature_dim, Rng& rng);
    EncoderOutput operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct FCDecoder {
    std::vector<Linear> layers;  // four stages, relu between

    Tensor operator()(const Tensor& z, const Tensor& features) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct ConvIndexedDecoder {
    std::vector<ConvTranspose2d> ups;
    std::vector<Linear> heads;  // one per joint: [2h x head_channels]

    void collect(const std::string& prefix, ParamList& out) const;
};

struct FlowDecoder {
    std::vector<ConvTranspose2d> ups;  // last stage emits 2 flow channels

    void collect(const std::string& prefix, ParamList& out) const;
};

struct RecognitionNet {
    std::optional<Encoder> frame_encoder;  // video targets
    std::optional<Linear> vector_encoder;  // trajectory targets
    GaussianHead head;

    void collect(const std::string& prefix, ParamList& out) const;
};

struct FramePrediction {
    Tensor flow;   // [2 x H x W]
    Tensor frame;  // [C x H x W]
};

// Row j is F[:, r_j, c_j]. Coordinates are in feature-map cells.
Tensor gather_at(const Tensor& feature_map, std::span<const PixelCoord> coords);

// output(p) = bilinear sample of frame at p + flow(p), with source positions
// clamped to the image. flow channel 0 is the row offset, 1 the column offset.
Tensor bilinear_warp(const Tensor& frame, const Tensor& flow);

// Frame pixel -> feature-map cell: floor(coord * feature_extent / frame_extent).
PixelCoord scale_coord(PixelCoord c, std::size_t frame_h, std::size_t frame_w, std::size_t map_h,
                       std::size_t map_w);

class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }

    EncoderOutput encode(const Tensor& x) const;
    GaussianParams prior(const EncoderOutput& enc) const;
    // Q(z | x, y)
    GaussianParams recognition_forward(const EncoderOutput& enc, const Tensor& y) const;

    // Trajectory tasks: [h x 2] for a single object, [J x h x 2] for joints.
    Tensor decode_trajectories(const Tensor& z, const EncoderOutput& enc,
                               std::span<const PixelCoord> coords = {}) const;
    FramePrediction predict_frame(const Tensor& x, const EncoderOutput& enc, const Tensor& z) const;

    // Task-shaped prediction for latent z.
    Tensor predict(const Tensor& x, const EncoderOutput& enc, const Tensor& z,
                   std::span<const PixelCoord> coords = {}) const;

    // Deterministic name order; names are stable across runs.
    ParamList parameters() const;

private:
    ModelConfig config_;
    Encoder encoder_;
    GaussianHead prior_head_;
    std::optional<FCDecoder> fc_;
    std::optional<ConvIndexedDecoder> conv_indexed_;
    std::optional<FlowDecoder> flow_;
    RecognitionNet recognition_;
};

}  // namespace csnet
