// csnet: dataset generation, training, evaluation and reporting.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "csnet/checkpoint.hpp"
#include "csnet/eval.hpp"
#include "csnet/report.hpp"
#include "csnet/synthdata.hpp"
#include "csnet/train.hpp"

namespace {

using namespace csnet;

int cmd_gen(const DatasetSpec& spec, const std::string& out) {
    spec.validate();
    const Dataset ds = generate(spec);
    write_dataset(ds, std::filesystem::path(out));
    std::printf("wrote %s: task=%s n=%u M=%u Nf=%u h=%u frame=%ux%u seed=%llu\n", out.c_str(),
                to_string(spec.task).c_str(), spec.n_samples, spec.modes, spec.history_frames, spec.horizon,
                spec.frame_h, spec.frame_w, static_cast<unsigned long long>(spec.seed));
    return 0;
}

int cmd_train(const std::string& config_path, bool quiet) {
    const TrainConfig config = load_train_config(config_path);
    const auto result = run_training(config, quiet ? nullptr : &std::cout);
    const auto& last = result.log.back();
    std::printf("trained %s for %zu epochs: final loss %.6g", to_string(config.scheme).c_str(), result.log.size(),
                last.train_loss);
    if (!config.checkpoint_path.empty()) std::printf(", checkpoint %s", config.checkpoint_path.c_str());
    std::printf("\n");
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const EvalOptions& options,
             const std::string& out) {
    if (options.k_max > options.n_draw)
        throw UsageError("--k-max (" + std::to_string(options.k_max) + ") exceeds --n-draw (" +
                         std::to_string(options.n_draw) + ")");
    const Model model = load_checkpoint(checkpoint);
    const Dataset ds = read_dataset(std::filesystem::path(dataset));
    const EvalReport report = evaluate(model, ds, options);
    if (!out.empty()) write_report_csv(report, std::filesystem::path(out));
    std::printf("n=%zu top-1 %.6g", report.n_examples, report.topk(1));
    if (report.k_max >= 4) std::printf("  top-4 %.6g", report.topk(4));
    if (report.k_max != 1 && report.k_max != 4) std::printf("  top-%zu %.6g", report.k_max, report.topk(report.k_max));
    std::printf("\n");
    for (const auto& [mode, curve] : report.per_mode_mean) {
        std::printf("  mode %u (n=%zu): top-1 %.6g", mode, report.per_mode_count.at(mode), curve.front());
        if (curve.size() >= 4) std::printf("  top-4 %.6g", curve[3]);
        std::printf("\n");
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& svg, const std::string& md) {
    std::vector<TopkCurve> curves;
    for (const auto& p : inputs) curves.push_back(read_topk_csv(p));
    const std::string svg_text = render_svg(curves);
    const std::string table = markdown_table(curves);
    std::ofstream(svg, std::ios::trunc) << svg_text;
    if (!md.empty()) std::ofstream(md, std::ios::trunc) << table;
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional stochastic networks for multimodal forecasting"};
    app.require_subcommand(1);
    // "--h" is the horizon flag of gen, so help is long-form only.
    app.set_help_flag("--help", "print this help message and exit");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic CSND dataset");
    std::string task_name = "trajectory";
    DatasetSpec spec;
    std::uint32_t frame = 0;
    std::string gen_out;
    gen->add_option("--task", task_name, "trajectory | joints | video")->capture_default_str();
    gen->add_option("--modes", spec.modes, "number of future modes M")->capture_default_str();
    gen->add_option("--n", spec.n_samples, "number of samples")->required();
    gen->add_option("--nf", spec.history_frames, "history frames Nf")->capture_default_str();
    gen->add_option("--h", spec.horizon, "forecast horizon h")->capture_default_str();
    gen->add_option("--joints", spec.joints, "joints J (joints task)")->capture_default_str();
    gen->add_option("--size", frame, "square frame size (overrides --height/--width)");
    gen->add_option("--height", spec.frame_h, "frame height")->capture_default_str();
    gen->add_option("--width", spec.frame_w, "frame width")->capture_default_str();
    gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "output .csnd path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model from a key = value config file");
    std::string config_path;
    bool quiet = false;
    tr->add_option("--config", config_path, "config file")->required();
    tr->add_flag("--quiet", quiet, "no per-epoch progress");

    // eval
    auto* ev = app.add_subcommand("eval", "top-k evaluation of a checkpoint on a dataset");
    std::string ckpt, data, eval_out, split_name = "test";
    EvalOptions eo;
    ev->add_option("--checkpoint", ckpt, "CSNC checkpoint")->required();
    ev->add_option("--dataset", data, "CSND dataset")->required();
    ev->add_option("--k-max", eo.k_max, "largest k")->capture_default_str();
    ev->add_option("--n-draw", eo.n_draw, "latent draws per example")->capture_default_str();
    ev->add_option("--seed", eo.seed, "evaluation seed")->capture_default_str();
    ev->add_option("--split", split_name, "all | train | test")->capture_default_str();
    ev->add_option("--max-examples", eo.max_examples, "cap on evaluated examples (0 = all)");
    ev->add_option("--out", eval_out, "top-k CSV path");

    // report
    auto* rp = app.add_subcommand("report", "plot top-k CSVs and tabulate them");
    std::vector<std::string> inputs;
    std::string svg_out = "report.svg", md_out;
    rp->add_option("inputs", inputs, "top-k CSV files")->required();
    rp->add_option("--svg", svg_out, "SVG output path")->capture_default_str();
    rp->add_option("--md", md_out, "markdown table output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "csnet: usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            spec.task = parse_task(task_name);
            if (frame) spec.frame_h = spec.frame_w = frame;
            return cmd_gen(spec, gen_out);
        }
        if (tr->parsed()) return cmd_train(config_path, quiet);
        if (ev->parsed()) {
            eo.split = parse_split(split_name);
            return cmd_eval(ckpt, data, eo, eval_out);
        }
        if (rp->parsed()) return cmd_report(inputs, svg_out, md_out);
    } catch (const UsageError& e) {
        std::cerr << "csnet: usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "csnet: error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
