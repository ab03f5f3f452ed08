#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "csnet/models.hpp"
#include "csnet/synthdata.hpp"

namespace csnet {

// One decoded outcome and the latent draw that produced it.
struct ForecastSample {
    Tensor prediction;
    LatentSample latent;
};

// Which density ranks the draws. Within one example both give the same
// order, since every draw shares the same sigma.
enum class Confidence { PriorDensity, EpsilonDensity };

struct PredictionSet {
    std::vector<ForecastSample> samples;
    std::vector<std::size_t> ordering;  // most confident first; ties by draw index

    static PredictionSet ordered(std::vector<ForecastSample> samples,
                                 Confidence by = Confidence::PriorDensity);
};

double velocity_l2(const Tensor& pred, const Tensor& y);
double frame_l2(const Tensor& pred, const Tensor& y);
double task_error(Task task, const Tensor& pred, const Tensor& y);

// Lowest error among the k most confident samples.
double topk_error(const PredictionSet& set, const Tensor& y, std::size_t k, Task task);
// Same, from per-sample errors already listed in confidence order.
double topk_error(std::span<const double> errors_by_confidence, std::size_t k);

struct EvalOptions {
    std::size_t n_draw = 32;
    std::size_t k_max = 15;
    std::uint64_t seed = 0;
    Split split = Split::Test;
    Confidence order_by = Confidence::PriorDensity;
    // Adds a z = mu draw after the random ones.
    bool inject_mean = false;
    // Decode every draw at z = mu, as if sigma were zero.
    bool zero_sigma = false;
    // Evaluate at most this many examples of the split (0 = all).
    std::size_t max_examples = 0;
};

struct EvalReport {
    std::size_t k_max = 0;
    std::size_t n_examples = 0;
    std::vector<double> mean_error;    // index k-1
    std::vector<double> stderr_error;  // index k-1
    std::map<std::uint32_t, std::vector<double>> per_mode_mean;
    std::map<std::uint32_t, std::size_t> per_mode_count;
    std::vector<std::vector<double>> per_example;  // top-k curve per example
    // Position of the injected z = mu draw in each example's ordering.
    std::vector<std::size_t> injected_rank;

    double topk(std::size_t k) const { return mean_error.at(k - 1); }
};

// Draws n_draw prior samples per example (stream keyed by seed and example
// index), decodes them, ranks by confidence and records top-k curves.
EvalReport evaluate(const Model& model, const Dataset& dataset, const EvalOptions& options);

// All draws for one example, ranked.
PredictionSet predict_samples(const Model& model, const Sample& sample, std::size_t n_draw,
                              std::uint64_t seed, std::uint64_t example_index,
                              const EvalOptions& options = {});

void write_report_csv(const EvalReport& report, std::ostream& out);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace csnet
