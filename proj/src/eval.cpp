#include "csnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>

#include "csnet/kernels.hpp"
#include "csnet/rng.hpp"

namespace csnet {

PredictionSet PredictionSet::ordered(std::vector<ForecastSample> samples, Confidence by) {
    PredictionSet set;
    set.samples = std::move(samples);
    set.ordering.resize(set.samples.size());
    std::iota(set.ordering.begin(), set.ordering.end(), std::size_t{0});
    auto density = [&](std::size_t i) {
        const auto& l = set.samples[i].latent;
        return by == Confidence::PriorDensity ? l.prior_log_density : l.epsilon_log_density;
    };
    std::stable_sort(set.ordering.begin(), set.ordering.end(),
                     [&](std::size_t a, std::size_t b) { return density(a) > density(b); });
    return set;
}

double velocity_l2(const Tensor& pred, const Tensor& y) {
    if (pred.shape() != y.shape() || y.rank() < 2 || y.shape().back() != 2)
        throw ShapeError("velocity_l2: expected matching [... x h x 2] shapes, got " + to_string(pred.shape()) +
                         " and " + to_string(y.shape()));
    const auto p = pred.data();
    const auto t = y.data();
    const std::size_t steps = y.size() / 2;
    double s = 0.0;
    for (std::size_t i = 0; i < steps; ++i) s += std::hypot(p[2 * i] - t[2 * i], p[2 * i + 1] - t[2 * i + 1]);
    return s / static_cast<double>(steps);
}

double frame_l2(const Tensor& pred, const Tensor& y) {
    if (pred.shape() != y.shape())
        throw ShapeError("frame_l2: " + to_string(pred.shape()) + " vs " + to_string(y.shape()));
    const auto p = pred.data();
    const auto t = y.data();
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
    return s / static_cast<double>(p.size());
}

double task_error(Task task, const Tensor& pred, const Tensor& y) {
    return task == Task::VIDEO ? frame_l2(pred, y) : velocity_l2(pred, y);
}

double topk_error(std::span<const double> errors_by_confidence, std::size_t k) {
    if (k < 1 || k > errors_by_confidence.size())
        throw UsageError("topk_error: k = " + std::to_string(k) + " outside [1, " +
                         std::to_string(errors_by_confidence.size()) + "]");
    return *std::min_element(errors_by_confidence.begin(), errors_by_confidence.begin() + static_cast<long>(k));
}

double topk_error(const PredictionSet& set, const Tensor& y, std::size_t k, Task task) {
    if (k < 1 || k > set.ordering.size())
        throw UsageError("topk_error: k = " + std::to_string(k) + " outside [1, " +
                         std::to_string(set.ordering.size()) + "]");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) best = std::min(best, task_error(task, set.samples[set.ordering[i]].prediction, y));
    return best;
}

PredictionSet predict_samples(const Model& model, const Sample& sample, std::size_t n_draw,
                              std::uint64_t seed, std::uint64_t example_index, const EvalOptions& options) {
    NoGradGuard no_grad;
    const auto enc = model.encode(sample.x);
    const auto prior = model.prior(enc);
    const std::size_t d = model.config().latent_dim;
    const bool at_mean = options.zero_sigma || !model.config().stochastic;
    Rng rng(seed, streams::kEval, example_index);
    std::vector<ForecastSample> out;
    out.reserve(n_draw + (options.inject_mean ? 1 : 0));
    auto decode = [&](std::vector<double> eps) {
        ForecastSample fs;
        fs.latent = csnet::sample(prior, Tensor({d}, std::move(eps)));
        fs.prediction = model.predict(sample.x, enc, fs.latent.z, sample.coords);
        out.push_back(std::move(fs));
    };
    for (std::size_t i = 0; i < n_draw; ++i) {
        auto eps = rng.normal_vector(d);
        if (at_mean) std::fill(eps.begin(), eps.end(), 0.0);
        decode(std::move(eps));
    }
    if (options.inject_mean) decode(std::vector<double>(d, 0.0));
    return PredictionSet::ordered(std::move(out), options.order_by);
}

EvalReport evaluate(const Model& model, const Dataset& dataset, const EvalOptions& options) {
    if (options.k_max < 1) throw UsageError("evaluate: k_max must be at least 1");
    if (options.n_draw < options.k_max)
        throw UsageError("evaluate: n_draw (" + std::to_string(options.n_draw) + ") must be >= k_max (" +
                         std::to_string(options.k_max) + ")");
    const auto& mc = model.config();
    if (dataset.spec.task != mc.task || dataset.spec.x_shape() != Shape{mc.in_channels(), mc.frame_h, mc.frame_w} ||
        dataset.spec.y_shape() != mc.output_shape())
        throw UsageError("evaluate: dataset (" + to_string(dataset.spec.task) + ", x " +
                         to_string(dataset.spec.x_shape()) + ", y " + to_string(dataset.spec.y_shape()) +
                         ") is incompatible with the model (" + to_string(mc.task) + ", y " +
                         to_string(mc.output_shape()) + ")");

    auto idx = split_indices(dataset.samples.size(), options.split);
    if (options.max_examples > 0 && idx.size() > options.max_examples) idx.resize(options.max_examples);
    const std::size_t n = idx.size();
    const std::size_t K = options.k_max;
    std::vector<std::vector<double>> curves(n);
    std::vector<std::size_t> injected(n, 0);
    std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
    for (long li = 0; li < static_cast<long>(n); ++li) {
        const std::size_t i = static_cast<std::size_t>(li);
        try {
            const auto& s = dataset.samples[idx[i]];
            const auto set = predict_samples(model, s, options.n_draw, options.seed, idx[i], options);
            std::vector<double> errs;
            errs.reserve(set.ordering.size());
            for (std::size_t j : set.ordering) errs.push_back(task_error(mc.task, set.samples[j].prediction, s.y));
            std::vector<double> curve(K);
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                best = std::min(best, errs[k]);
                curve[k] = best;
            }
            curves[i] = std::move(curve);
            if (options.inject_mean)
                injected[i] = static_cast<std::size_t>(
                    std::find(set.ordering.begin(), set.ordering.end(), options.n_draw) - set.ordering.begin());
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    EvalReport r;
    r.k_max = K;
    r.n_examples = n;
    r.mean_error.assign(K, 0.0);
    r.stderr_error.assign(K, 0.0);
    // Fixed reduction order: example index ascending.
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t mode = dataset.samples[idx[i]].mode_id;
        auto& pm = r.per_mode_mean[mode];
        pm.resize(K, 0.0);
        r.per_mode_count[mode] += 1;
        for (std::size_t k = 0; k < K; ++k) {
            r.mean_error[k] += curves[i][k];
            pm[k] += curves[i][k];
        }
    }
    if (n > 0) {
        for (std::size_t k = 0; k < K; ++k) {
            r.mean_error[k] /= static_cast<double>(n);
            if (n > 1) {
                double ss = 0.0;
                for (std::size_t i = 0; i < n; ++i) ss += (curves[i][k] - r.mean_error[k]) * (curves[i][k] - r.mean_error[k]);
                r.stderr_error[k] = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
            }
        }
        for (auto& [mode, pm] : r.per_mode_mean)
            for (auto& v : pm) v /= static_cast<double>(r.per_mode_count[mode]);
    }
    r.per_example = std::move(curves);
    if (options.inject_mean) r.injected_rank = std::move(injected);
    return r;
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
    out << "k,mean_error,stderr,n\n";
    char buf[128];
    for (std::size_t k = 1; k <= report.k_max; ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu\n", k, report.mean_error[k - 1],
                      report.stderr_error[k - 1], report.n_examples);
        out << buf;
    }
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    write_report_csv(report, out);
}

}  // namespace csnet
