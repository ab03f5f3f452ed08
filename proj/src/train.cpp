#include "csnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "csnet/checkpoint.hpp"
#include "csnet/eval.hpp"
#include "csnet/rng.hpp"

namespace csnet {

Adam::Adam(ParamList params, Options options) : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.size(), 0.0);
        v_.emplace_back(p.tensor.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].tensor;
        if (!p.has_grad()) continue;
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            w[j] -= options_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.epsilon);
        }
        p.zero_grad();
    }
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
    loss().validate();
    if (latent_dim == 0) throw UsageError("config: latent_dim must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw UsageError("config: learning_rate must be positive");
    if (epochs == 0) throw UsageError("config: epochs must be at least 1");
    if (batch_size == 0) throw UsageError("config: batch_size must be at least 1");
    if (dataset_path.empty()) throw UsageError("config: dataset_path is required");
    if (feature_dim == 0 || hidden == 0) throw UsageError("config: feature_dim and hidden must be positive");
    if (history_frames && *history_frames == 0) throw UsageError("config: Nf must be at least 1");
    if (task && decoder) {
        if ((*decoder == DecoderKind::FLOW) != (*task == Task::VIDEO) ||
            (*decoder == DecoderKind::CONV_INDEXED && *task != Task::JOINTS))
            throw UsageError("config: decoder " + to_string(*decoder) + " is not valid for task " +
                             to_string(*task));
    }
}

LossConfig TrainConfig::loss() const {
    LossConfig l;
    l.scheme = scheme;
    l.K = K;
    l.nu = nu;
    l.kl_weight = kl_weight;
    return l;
}

ModelConfig TrainConfig::model_config(const DatasetSpec& spec) const {
    if (task && *task != spec.task)
        throw UsageError("config task " + to_string(*task) + " does not match dataset task " + to_string(spec.task));
    if (history_frames && *history_frames != spec.history_frames)
        throw UsageError("config Nf = " + std::to_string(*history_frames) + " does not match dataset Nf = " +
                         std::to_string(spec.history_frames));
    ModelConfig c;
    c.task = spec.task;
    c.decoder = decoder.value_or(spec.task == Task::VIDEO ? DecoderKind::FLOW : DecoderKind::FC);
    c.history_frames = spec.history_frames;
    c.frame_channels = 1;
    c.frame_h = spec.frame_h;
    c.frame_w = spec.frame_w;
    c.joints = spec.task == Task::JOINTS ? spec.joints : 1;
    c.horizon = spec.horizon;
    c.latent_dim = latent_dim;
    c.feature_dim = feature_dim;
    c.hidden = hidden;
    c.stochastic = scheme != Scheme::REGRESSION;
    c.validate();
    return c;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

TrainConfig parse_train_config(std::istream& in, const std::string& what) {
    TrainConfig c;
    bool k_set = false;
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = what + ":" + std::to_string(lineno);
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) throw UsageError(where + ": expected 'key = value'");
        if (seen.count(key)) throw UsageError(where + ": duplicate key '" + key + "'");
        seen[key] = lineno;

        auto as_size = [&]() -> std::size_t {
            std::size_t pos = 0;
            unsigned long long v = 0;
            try {
                if (value.front() == '-') throw std::invalid_argument("negative");
                v = std::stoull(value, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != value.size()) throw UsageError(where + ": '" + key + "' needs a non-negative integer, got '" + value + "'");
            return static_cast<std::size_t>(v);
        };
        auto as_double = [&]() -> double {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(value, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != value.size() || !std::isfinite(v))
                throw UsageError(where + ": '" + key + "' needs a number, got '" + value + "'");
            return v;
        };
        try {
            if (key == "task") c.task = parse_task(value);
            else if (key == "scheme" || key == "loss") c.scheme = parse_scheme(value);
            else if (key == "K") { c.K = as_size(); k_set = true; }
            else if (key == "nu") c.nu = as_double();
            else if (key == "kl_weight") c.kl_weight = as_double();
            else if (key == "latent_dim" || key == "d") c.latent_dim = as_size();
            else if (key == "learning_rate" || key == "lr") c.learning_rate = as_double();
            else if (key == "epochs") c.epochs = as_size();
            else if (key == "batch_size") c.batch_size = as_size();
            else if (key == "seed") c.seed = as_size();
            else if (key == "dataset_path" || key == "dataset") c.dataset_path = value;
            else if (key == "Nf" || key == "history_frames") c.history_frames = as_size();
            else if (key == "decoder") c.decoder = parse_decoder(value);
            else if (key == "checkpoint_path" || key == "checkpoint") c.checkpoint_path = value;
            else if (key == "log_path" || key == "log") c.log_path = value;
            else if (key == "feature_dim") c.feature_dim = as_size();
            else if (key == "hidden") c.hidden = as_size();
            else if (key == "eval_every") c.eval_every = as_size();
            else if (key == "eval_examples") c.eval_examples = as_size();
            else if (key == "eval_draws") c.eval_draws = as_size();
            else throw UsageError(where + ": unknown key '" + key + "'");
        } catch (const UsageError& e) {
            const std::string msg = e.what();
            if (msg.rfind(what, 0) == 0) throw;
            throw UsageError(where + ": " + msg);
        }
    }
    if (!k_set) c.K = LossConfig::defaults(c.scheme).K;
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path.string());
    return parse_train_config(in, path.string());
}

std::string TrainConfig::to_text() const {
    std::ostringstream o;
    if (task) o << "task = " << to_string(*task) << "\n";
    o << "scheme = " << to_string(scheme) << "\n";
    o << "K = " << K << "\n";
    o << "nu = " << fmt_double(nu) << "\n";
    o << "kl_weight = " << fmt_double(kl_weight) << "\n";
    o << "latent_dim = " << latent_dim << "\n";
    o << "learning_rate = " << fmt_double(learning_rate) << "\n";
    o << "epochs = " << epochs << "\n";
    o << "batch_size = " << batch_size << "\n";
    o << "seed = " << seed << "\n";
    o << "dataset_path = " << dataset_path << "\n";
    if (history_frames) o << "Nf = " << *history_frames << "\n";
    if (decoder) o << "decoder = " << to_string(*decoder) << "\n";
    if (!checkpoint_path.empty()) o << "checkpoint_path = " << checkpoint_path << "\n";
    if (!log_path.empty()) o << "log_path = " << log_path << "\n";
    o << "feature_dim = " << feature_dim << "\n";
    o << "hidden = " << hidden << "\n";
    o << "eval_every = " << eval_every << "\n";
    o << "eval_examples = " << eval_examples << "\n";
    o << "eval_draws = " << eval_draws << "\n";
    return o.str();
}

// ---------------------------------------------------------------- training

StepLoss example_loss(const Model& model, const Sample& s, const LossConfig& loss, Rng& rng) {
    const std::size_t d = model.config().latent_dim;
    const auto enc = model.encode(s.x);
    const auto prior = model.prior(enc);
    StepLoss out;
    switch (loss.scheme) {
        case Scheme::MCML:
        case Scheme::KBEST: {
            std::vector<Tensor> preds;
            preds.reserve(loss.K);
            for (std::size_t j = 0; j < loss.K; ++j) {
                const auto z = sample(prior, Tensor({d}, rng.normal_vector(d)));
                preds.push_back(model.predict(s.x, enc, z.z, s.coords));
            }
            out.loss = loss.scheme == Scheme::MCML ? mcml_loss(preds, s.y, loss.nu) : kbest_loss(preds, s.y);
            out.recon = out.loss.item();
            break;
        }
        case Scheme::VA: {
            const auto q = model.recognition_forward(enc, s.y);
            const auto z = sample(q, Tensor({d}, rng.normal_vector(d)));
            const Tensor pred = model.predict(s.x, enc, z.z, s.coords);
            out.loss = va_loss(pred, s.y, q, prior, loss.nu, loss.kl_weight);
            NoGradGuard ng;
            out.kl = kl_diag(q, prior).item();
            out.recon = regression_loss(pred, s.y).item() / (2.0 * loss.nu);
            break;
        }
        case Scheme::REGRESSION: {
            const auto z = sample(prior, Tensor::zeros({d}));
            out.loss = regression_loss(model.predict(s.x, enc, z.z, s.coords), s.y);
            out.recon = out.loss.item();
            break;
        }
    }
    return out;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const EpochCallback& on_epoch) {
    config.validate();
    const ModelConfig mc = config.model_config(dataset.spec);
    const LossConfig lc = config.loss();
    TrainResult result{Model(mc, config.seed), {}};
    Model& model = result.model;
    Adam opt(model.parameters(), Adam::Options{config.learning_rate});

    std::vector<std::size_t> order = split_indices(dataset.samples.size(), Split::Train);
    if (order.empty()) throw UsageError("train: dataset has no training examples");
    const std::size_t n = order.size();
    const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffler(config.seed, streams::kShuffle, epoch);
        shuffler.shuffle(order);
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * config.batch_size;
            const std::size_t hi = std::min(n, lo + config.batch_size);
            const double inv = 1.0 / static_cast<double>(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                const std::size_t idx = order[i];
                // One noise stream per (epoch, example) so runs are reproducible.
                Rng noise(config.seed, streams::kTrainNoise, (epoch - 1) * dataset.samples.size() + idx);
                StepLoss sl = example_loss(model, dataset.samples[idx], lc, noise);
                const double v = sl.loss.item();
                if (!std::isfinite(v))
                    throw TrainingError("non-finite loss " + fmt_double(v) + " at epoch " + std::to_string(epoch) +
                                        ", batch " + std::to_string(b + 1) + " (example " + std::to_string(idx) +
                                        ")");
                backward(scale(sl.loss, inv));
                rec.train_loss += v;
                rec.recon += sl.recon;
                rec.kl += sl.kl;
            }
            opt.step();
        }
        rec.train_loss /= static_cast<double>(n);
        rec.recon /= static_cast<double>(n);
        rec.kl /= static_cast<double>(n);

        if (config.eval_every > 0 && (epoch % config.eval_every == 0 || epoch == config.epochs) &&
            dataset.samples.size() > 1) {
            EvalOptions eo;
            eo.n_draw = std::max<std::size_t>(config.eval_draws, 1);
            eo.k_max = std::min<std::size_t>(4, eo.n_draw);
            eo.seed = config.seed;
            eo.max_examples = config.eval_examples;
            const auto report = evaluate(model, dataset, eo);
            rec.top1 = report.topk(1);
            if (eo.k_max >= 4) rec.top4 = report.topk(4);
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

void write_log_header(const TrainConfig& config, std::ostream& out) {
    std::istringstream echo(config.to_text());
    for (std::string line; std::getline(echo, line);) out << "# " << line << "\n";
    out << "epoch,train_loss,recon,kl,top1,top4,wall_ms\n";
}

void write_log_line(const EpochRecord& r, std::ostream& out) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.epoch, r.train_loss, r.recon, r.kl,
                  r.top1, r.top4, r.wall_ms);
    out << buf;
    out.flush();
}

TrainResult run_training(const TrainConfig& config, std::ostream* progress) {
    config.validate();
    const Dataset ds = read_dataset(std::filesystem::path(config.dataset_path));
    std::ofstream log;
    if (!config.log_path.empty()) {
        log.open(config.log_path, std::ios::trunc);
        if (!log) throw UsageError("cannot open log " + config.log_path + " for writing");
        write_log_header(config, log);
    }
    auto result = train(config, ds, [&](const EpochRecord& r) {
        if (log.is_open()) write_log_line(r, log);
        if (progress && (std::isfinite(r.top1) || r.epoch == 1)) {
            char buf[192];
            std::snprintf(buf, sizeof buf, "epoch %zu  loss %.6g  top1 %.4g  top4 %.4g  (%.0f ms)\n", r.epoch,
                          r.train_loss, r.top1, r.top4, r.wall_ms);
            *progress << buf << std::flush;
        }
    });
    if (!config.checkpoint_path.empty()) save_checkpoint(result.model, config.checkpoint_path);
    return result;
}

}  // namespace csnet
