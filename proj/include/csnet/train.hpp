#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "csnet/losses.hpp"
#include "csnet/models.hpp"
#include "csnet/synthdata.hpp"

namespace csnet {

// Adam with bias correction; one moment pair per parameter tensor.
class Adam {
public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    Adam(ParamList params, Options options);
    // Applies one update from the accumulated gradients, then clears them.
    void step();
    std::size_t steps() const { return t_; }

private:
    ParamList params_;
    Options options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

struct TrainConfig {
    std::optional<Task> task;  // checked against the dataset when set
    Scheme scheme = Scheme::KBEST;
    std::size_t K = 15;
    double nu = 0.5;
    double kl_weight = 1.0;
    std::size_t latent_dim = 4;
    double learning_rate = 1e-3;
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::string dataset_path;
    std::optional<std::size_t> history_frames;  // Nf; checked against the dataset when set
    std::optional<DecoderKind> decoder;         // default: FC, or FLOW for video
    std::string checkpoint_path;
    std::string log_path;
    // Architecture widths.
    std::size_t feature_dim = 32;
    std::size_t hidden = 64;
    // Per-epoch monitoring on the test split; eval_every = 0 disables it.
    std::size_t eval_every = 10;
    std::size_t eval_examples = 64;
    std::size_t eval_draws = 8;

    void validate() const;
    LossConfig loss() const;
    // Model hyperparameters implied by this config and a dataset.
    ModelConfig model_config(const DatasetSpec& spec) const;
    // Flat "key = value" lines; '#' starts a comment.
    std::string to_text() const;
};

TrainConfig parse_train_config(std::istream& in, const std::string& what = "config");
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double recon = 0.0;  // VA: reconstruction term; otherwise equal to train_loss
    double kl = 0.0;     // VA only
    double top1 = std::numeric_limits<double>::quiet_NaN();
    double top4 = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = 0.0;
};

// Raised when a loss turns NaN or infinite.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    Model model;
    std::vector<EpochRecord> log;
};

// Per-example loss pieces for one training step.
struct StepLoss {
    Tensor loss;
    double recon = 0.0;
    double kl = 0.0;
};

// Builds the graph for one example. `rng` supplies the latent noise.
StepLoss example_loss(const Model& model, const Sample& sample, const LossConfig& loss, Rng& rng);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training on the train split (even indices). Single-threaded
// over batches; shuffling and noise come from seeded substreams.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const EpochCallback& on_epoch = {});

void write_log_header(const TrainConfig& config, std::ostream& out);
void write_log_line(const EpochRecord& record, std::ostream& out);

// Reads the dataset, trains, writes checkpoint and log named in the config.
TrainResult run_training(const TrainConfig& config, std::ostream* progress = nullptr);

}  // namespace csnet
