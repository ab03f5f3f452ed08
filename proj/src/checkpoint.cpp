#include "csnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "binio.hpp"

namespace csnet {

namespace {

std::vector<double> scalar_values(double v) { return {v}; }

void put_config(std::vector<CheckpointRecord>& out, const std::string& key, double v) {
    out.push_back({"config." + key, {1}, scalar_values(v)});
}

}  // namespace

void write_records(std::ostream& out, const std::vector<CheckpointRecord>& records) {
    out.write(kCheckpointMagic, 4);
    binio::put<std::uint32_t>(out, kCheckpointVersion);
    for (const auto& r : records) {
        if (numel(r.shape) != r.values.size()) throw ShapeError("checkpoint: record " + r.name + " size mismatch");
        binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
        for (auto e : r.shape) binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
        binio::put_f64s(out, r.values);
    }
}

std::vector<CheckpointRecord> read_records(std::istream& in, const std::string& what) {
    binio::Reader rd(in, what);
    char magic[4];
    for (auto& c : magic) c = rd.get<char>();
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) rd.fail("bad magic (not a CSNC checkpoint)");
    const auto version = rd.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        rd.fail("unsupported checkpoint version " + std::to_string(version));
    std::vector<CheckpointRecord> records;
    while (!rd.at_end()) {
        CheckpointRecord r;
        const auto name_len = rd.get<std::uint32_t>();
        if (name_len == 0 || name_len > 4096) rd.fail("implausible record name length");
        r.name = rd.get_string(name_len);
        const auto rank = rd.get<std::uint32_t>();
        if (rank == 0 || rank > 8) rd.fail("implausible rank for record " + r.name);
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto e = rd.get<std::uint32_t>();
            if (e == 0) rd.fail("zero extent in record " + r.name);
            r.shape.push_back(e);
        }
        const std::size_t n = numel(r.shape);
        if (n > (std::size_t{1} << 28)) rd.fail("record " + r.name + " too large");
        r.values.resize(n);
        rd.get_f64s(r.values);
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<CheckpointRecord> model_records(const Model& model) {
    const auto& c = model.config();
    std::vector<CheckpointRecord> out;
    put_config(out, "task", static_cast<double>(c.task));
    put_config(out, "decoder", static_cast<double>(c.decoder));
    put_config(out, "history_frames", static_cast<double>(c.history_frames));
    put_config(out, "frame_channels", static_cast<double>(c.frame_channels));
    put_config(out, "frame_h", static_cast<double>(c.frame_h));
    put_config(out, "frame_w", static_cast<double>(c.frame_w));
    put_config(out, "joints", static_cast<double>(c.joints));
    put_config(out, "horizon", static_cast<double>(c.horizon));
    put_config(out, "latent_dim", static_cast<double>(c.latent_dim));
    put_config(out, "feature_dim", static_cast<double>(c.feature_dim));
    put_config(out, "hidden", static_cast<double>(c.hidden));
    put_config(out, "y_feature_dim", static_cast<double>(c.y_feature_dim));
    put_config(out, "head_channels", static_cast<double>(c.head_channels));
    put_config(out, "stochastic", c.stochastic ? 1.0 : 0.0);
    std::vector<double> ch(c.encoder_channels.begin(), c.encoder_channels.end());
    out.push_back({"config.encoder_channels", {ch.size()}, ch});
    for (const auto& p : model.parameters())
        out.push_back({p.name, p.tensor.shape(), std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
    return out;
}

Model model_from_records(const std::vector<CheckpointRecord>& records) {
    std::map<std::string, const CheckpointRecord*> by_name;
    for (const auto& r : records) by_name[r.name] = &r;
    auto cfg = [&](const std::string& key) -> std::size_t {
        auto it = by_name.find("config." + key);
        if (it == by_name.end() || it->second->values.size() != 1)
            throw FormatError("checkpoint: missing config record " + key);
        const double v = it->second->values[0];
        if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
            throw FormatError("checkpoint: bad config value for " + key);
        return static_cast<std::size_t>(v);
    };
    ModelConfig c;
    const auto task = cfg("task");
    const auto decoder = cfg("decoder");
    if (task > 2 || decoder > 2) throw FormatError("checkpoint: unknown task or decoder code");
    c.task = static_cast<Task>(task);
    c.decoder = static_cast<DecoderKind>(decoder);
    c.history_frames = cfg("history_frames");
    c.frame_channels = cfg("frame_channels");
    c.frame_h = cfg("frame_h");
    c.frame_w = cfg("frame_w");
    c.joints = cfg("joints");
    c.horizon = cfg("horizon");
    c.latent_dim = cfg("latent_dim");
    c.feature_dim = cfg("feature_dim");
    c.hidden = cfg("hidden");
    c.y_feature_dim = cfg("y_feature_dim");
    c.head_channels = cfg("head_channels");
    c.stochastic = cfg("stochastic") != 0;
    auto ch = by_name.find("config.encoder_channels");
    if (ch == by_name.end()) throw FormatError("checkpoint: missing config record encoder_channels");
    c.encoder_channels.assign(ch->second->values.begin(), ch->second->values.end());

    Model model(c, 0);
    for (auto& p : model.parameters()) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw FormatError("checkpoint: missing parameter " + p.name);
        if (it->second->shape != p.tensor.shape())
            throw FormatError("checkpoint: parameter " + p.name + " has shape " + to_string(it->second->shape) +
                              ", model expects " + to_string(p.tensor.shape()));
        auto dst = p.tensor.mutable_data();
        std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
    }
    return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    write_records(out, model_records(model));
    if (!out) throw FormatError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    return model_from_records(read_records(in, path.string()));
}

}  // namespace csnet
