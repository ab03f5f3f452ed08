#pragma once

// Tiny model configurations for gradient checks (d = 2, 8x8 frames).

#include <vector>

#include "csnet/models.hpp"
#include "csnet/rng.hpp"
#include "csnet/synthdata.hpp"
#include "csnet/train.hpp"
#include "gradcheck.hpp"

namespace csnet::testing {

inline ModelConfig tiny_config(DecoderKind kind) {
    ModelConfig c;
    c.decoder = kind;
    c.task = kind == DecoderKind::FLOW ? Task::VIDEO : (kind == DecoderKind::CONV_INDEXED ? Task::JOINTS : Task::TRAJECTORY);
    c.history_frames = 2;
    c.frame_h = 8;
    c.frame_w = 8;
    c.joints = c.task == Task::JOINTS ? 2 : 1;
    c.horizon = 3;
    c.latent_dim = 2;
    c.feature_dim = 5;
    c.hidden = 6;
    c.y_feature_dim = 3;
    c.head_channels = 3;
    c.encoder_channels = {2, 3};
    return c;
}

// Random glimpse and target; video targets stay in [0, 1] like real frames.
inline Sample tiny_sample(const ModelConfig& c, Rng& rng) {
    Sample s;
    s.x = random_tensor({c.in_channels(), c.frame_h, c.frame_w}, rng, 0.0, 1.0, false);
    s.y = random_tensor(c.output_shape(), rng, c.task == Task::VIDEO ? 0.0 : -1.0, 1.0, false);
    if (c.task == Task::TRAJECTORY) s.coords = {{4, 4}};
    if (c.task == Task::JOINTS)
        for (std::size_t j = 0; j < c.joints; ++j)
            s.coords.push_back({static_cast<std::uint32_t>(rng.below(c.frame_h)),
                                static_cast<std::uint32_t>(rng.below(c.frame_w))});
    return s;
}

inline std::vector<Tensor> param_tensors(const Model& m) {
    std::vector<Tensor> out;
    for (const auto& p : m.parameters()) out.push_back(p.tensor);
    return out;
}

// Zero-initialised biases put some outputs exactly on a kink (relu at 0,
// bilinear warp at integer source positions), where central differences
// average two one-sided slopes. Nudging every parameter moves the check
// to a generic point.
inline void jitter_parameters(const Model& m, std::uint64_t seed, double scale = 0.05) {
    Rng rng(seed, 91);
    for (auto p : m.parameters())
        for (auto& v : p.tensor.mutable_data()) v += rng.uniform(-scale, scale);
}

// Relative gradient error of one scheme's loss over every model parameter.
inline double model_gradcheck(DecoderKind kind, Scheme scheme, std::uint64_t seed) {
    const ModelConfig c = tiny_config(kind);
    Model model(c, seed);
    jitter_parameters(model, seed);
    Rng data_rng(seed, 77);
    const Sample s = tiny_sample(c, data_rng);
    LossConfig lc = LossConfig::defaults(scheme);
    if (scheme == Scheme::MCML || scheme == Scheme::KBEST) lc.K = 3;
    auto fn = [&] {
        Rng noise(seed, streams::kTrainNoise);
        return example_loss(model, s, lc, noise).loss;
    };
    return gradcheck(fn, param_tensors(model), 1e-5, 1e-8);
}

}  // namespace csnet::testing
