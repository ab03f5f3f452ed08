#include "csnet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>

#include "binio.hpp"
#include "csnet/kernels.hpp"
#include "csnet/rng.hpp"

namespace csnet {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'N', 'D'};
constexpr std::uint32_t kVersion = 1;

class Canvas {
public:
    Canvas(std::size_t h, std::size_t w) : h_(h), w_(w), px_(h * w, 0.0) {}

    void set(long r, long c, double v) {
        if (r < 0 || c < 0 || r >= static_cast<long>(h_) || c >= static_cast<long>(w_)) return;
        px_[static_cast<std::size_t>(r) * w_ + static_cast<std::size_t>(c)] = v;
    }
    void fill_rect(long r0, long c0, long rows, long cols, double v) {
        for (long r = r0; r < r0 + rows; ++r)
            for (long c = c0; c < c0 + cols; ++c) set(r, c, v);
    }
    void line(long r0, long c0, long r1, long c1, double v) {
        const long n = std::max(std::abs(r1 - r0), std::abs(c1 - c0));
        for (long i = 0; i <= n; ++i) {
            const double t = n == 0 ? 0.0 : static_cast<double>(i) / static_cast<double>(n);
            set(std::lround(static_cast<double>(r0) + t * static_cast<double>(r1 - r0)),
                std::lround(static_cast<double>(c0) + t * static_cast<double>(c1 - c0)), v);
        }
    }
    const std::vector<double>& pixels() const { return px_; }

private:
    std::size_t h_, w_;
    std::vector<double> px_;
};

Tensor stack_frames(const std::vector<Canvas>& frames, std::size_t h, std::size_t w) {
    std::vector<double> data;
    data.reserve(frames.size() * h * w);
    for (const auto& f : frames) data.insert(data.end(), f.pixels().begin(), f.pixels().end());
    return Tensor({frames.size(), h, w}, std::move(data));
}

template <typename Fn>
Dataset generate_parallel(const DatasetSpec& spec, Fn&& make) {
    Dataset ds;
    ds.spec = spec;
    ds.samples.resize(spec.n_samples);
    const long n = static_cast<long>(spec.n_samples);
    std::vector<std::exception_ptr> errors(spec.n_samples);
#pragma omp parallel for schedule(static) num_threads(kernels::thread_count())
    for (long i = 0; i < n; ++i) {
        try {
            Rng rng(spec.seed, streams::kData, static_cast<std::uint64_t>(i));
            ds.samples[static_cast<std::size_t>(i)] = make(rng);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return ds;
}

// Canonical stick-figure joints (row, col) on a 32-pixel frame, centred.
constexpr int kJointLayout[8][2] = {{-6, 0}, {-1, -5}, {-1, 5}, {3, 0}, {8, -3}, {8, 3}, {-4, 0}, {0, 0}};
constexpr std::uint32_t kMaxJoints = 8;
constexpr std::size_t kRootJoint = 3;

}  // namespace

std::uint32_t DatasetSpec::coord_count() const {
    switch (task) {
        case Task::TRAJECTORY: return 1;
        case Task::JOINTS: return joints;
        case Task::VIDEO: return 0;
    }
    return 0;
}

Shape DatasetSpec::x_shape() const { return {history_frames, frame_h, frame_w}; }

Shape DatasetSpec::y_shape() const {
    switch (task) {
        case Task::TRAJECTORY: return {horizon, 2};
        case Task::JOINTS: return {joints, horizon, 2};
        case Task::VIDEO: return {1, frame_h, frame_w};
    }
    return {};
}

void DatasetSpec::validate() const {
    auto bad = [](const std::string& m) { throw UsageError("invalid dataset spec: " + m); };
    if (modes < 1) bad("modes must be at least 1");
    if (history_frames < 1) bad("history frames must be at least 1");
    if (horizon < 1) bad("horizon must be at least 1");
    if (frame_h < 8 || frame_w < 8) bad("frames must be at least 8x8");
    switch (task) {
        case Task::TRAJECTORY: {
            if (modes > synth::kMaxTrajectoryModes) bad("at most 8 compass directions");
            const std::uint32_t reach = (history_frames - 1) * synth::kApproachStep + 2;
            if (2 * reach >= std::min(frame_h, frame_w)) bad("history too long for frame size");
            break;
        }
        case Task::JOINTS:
            if (joints < 2 || joints > kMaxJoints) bad("joints must be in [2, 8]");
            if (modes > 2 * (joints - 1)) bad("at most 2*(J-1) joint modes");
            if (std::min(frame_h, frame_w) < 16) bad("joint frames must be at least 16x16");
            if (history_frames > std::min(frame_h, frame_w) / 8) bad("history too long for frame size");
            break;
        case Task::VIDEO:
            if (modes > synth::kMaxVideoModes) bad("at most 8 displacement directions");
            // square side + room for Nf + 1 unit steps on both sides
            if (std::min(frame_h, frame_w) < std::max<std::uint32_t>(2, std::min(frame_h, frame_w) / 8) +
                                                  2 * history_frames + 2)
                bad("history too long for frame size");
            break;
    }
}

std::pair<double, double> intersection_velocity(std::uint32_t mode) {
    const auto s = synth::kCompass[mode % 8];
    const double norm = std::hypot(static_cast<double>(s.dx), static_cast<double>(s.dy));
    return {s.dx / norm, s.dy / norm};
}

std::pair<int, int> square_displacement(std::uint32_t mode) {
    const auto s = synth::kCompass[mode % 8];
    return {s.dy, s.dx};
}

Dataset gen_intersection(const DatasetSpec& spec) {
    if (spec.task != Task::TRAJECTORY) throw UsageError("gen_intersection: task must be trajectory");
    spec.validate();
    const long h = spec.frame_h, w = spec.frame_w;
    const long cy = h / 2, cx = w / 2;
    return generate_parallel(spec, [&](Rng& rng) {
        Sample s;
        s.mode_id = static_cast<std::uint32_t>(rng.below(spec.modes));
        const auto step = synth::kCompass[s.mode_id];
        const long nf = spec.history_frames;
        std::vector<Canvas> frames;
        for (long i = 0; i < nf; ++i) {
            Canvas f(spec.frame_h, spec.frame_w);
            f.fill_rect(cy - 1, 0, 2, w, synth::kBackground);
            f.fill_rect(0, cx - 1, h, 2, synth::kBackground);
            // Approach along the exit direction; the trail covers the path so far.
            const long back = (nf - 1 - i) * synth::kApproachStep;
            const long oy = cy - back * step.dy, ox = cx - back * step.dx;
            const long trail = i * synth::kApproachStep;
            for (long k = 1; k <= trail; ++k) f.set(oy - k * step.dy, ox - k * step.dx, synth::kStreak);
            f.fill_rect(oy - 1, ox - 1, 3, 3, 1.0);
            frames.push_back(std::move(f));
        }
        s.x = stack_frames(frames, spec.frame_h, spec.frame_w);
        const auto [vx, vy] = intersection_velocity(s.mode_id);
        std::vector<double> y(spec.horizon * 2);
        for (std::size_t t = 0; t < spec.horizon; ++t) {
            y[2 * t] = vx;
            y[2 * t + 1] = vy;
        }
        s.y = Tensor({spec.horizon, 2}, std::move(y));
        s.coords = {PixelCoord{static_cast<std::uint32_t>(cy), static_cast<std::uint32_t>(cx)}};
        return s;
    });
}

Dataset gen_branching_joints(const DatasetSpec& spec) {
    if (spec.task != Task::JOINTS) throw UsageError("gen_branching_joints: task must be joints");
    spec.validate();
    const long h = spec.frame_h, w = spec.frame_w;
    const double unit = static_cast<double>(std::min(h, w)) / 32.0;
    const std::uint32_t movers = spec.joints - 1;
    return generate_parallel(spec, [&](Rng& rng) {
        Sample s;
        s.mode_id = static_cast<std::uint32_t>(rng.below(spec.modes));
        const long jy = static_cast<long>(rng.below(2 * synth::kJointJitter + 1)) - synth::kJointJitter;
        const long jx = static_cast<long>(rng.below(2 * synth::kJointJitter + 1)) - synth::kJointJitter;
        // Mode m moves joint 1 + m % (J-1): up for the first J-1 modes, down after.
        const std::size_t mover = 1 + s.mode_id % movers;
        const long dir = s.mode_id < movers ? -1 : 1;
        const double speed = synth::kJointSpeed * (1.0 + synth::kJointSpeedJitter * static_cast<double>(jx));

        std::vector<std::pair<long, long>> base(spec.joints);
        for (std::size_t j = 0; j < spec.joints; ++j)
            base[j] = {h / 2 + jy + std::lround(kJointLayout[j][0] * unit),
                       w / 2 + jx + std::lround(kJointLayout[j][1] * unit)};
        const long nf = spec.history_frames;
        std::vector<Canvas> frames;
        std::vector<std::pair<long, long>> pos = base;
        for (long i = 0; i < nf; ++i) {
            // The moving joint starts its motion one pixel per frame in the history.
            pos = base;
            pos[mover].first += dir * i;
            Canvas f(spec.frame_h, spec.frame_w);
            const std::size_t root = std::min<std::size_t>(kRootJoint, spec.joints - 1);
            for (std::size_t j = 0; j < spec.joints; ++j)
                if (j != root) f.line(pos[j].first, pos[j].second, pos[root].first, pos[root].second, 0.4);
            for (const auto& p : pos) f.set(p.first, p.second, 1.0);
            frames.push_back(std::move(f));
        }
        for (const auto& p : pos)
            if (p.first < 0 || p.second < 0 || p.first >= h || p.second >= w)
                throw UsageError("gen_branching_joints: joint left the frame");
        s.x = stack_frames(frames, spec.frame_h, spec.frame_w);
        std::vector<double> y(spec.joints * spec.horizon * 2, 0.0);
        for (std::size_t t = 0; t < spec.horizon; ++t) y[(mover * spec.horizon + t) * 2 + 1] = dir * speed;
        s.y = Tensor({spec.joints, spec.horizon, 2}, std::move(y));
        for (const auto& p : pos)
            s.coords.push_back({static_cast<std::uint32_t>(p.first), static_cast<std::uint32_t>(p.second)});
        return s;
    });
}

Dataset gen_moving_square(const DatasetSpec& spec) {
    if (spec.task != Task::VIDEO) throw UsageError("gen_moving_square: task must be video");
    spec.validate();
    const long h = spec.frame_h, w = spec.frame_w;
    const long side = std::max<long>(2, std::min(h, w) / 8);
    const long nf = spec.history_frames;
    // Room for nf history steps plus the predicted one on either side.
    const long margin = nf + 1;
    return generate_parallel(spec, [&](Rng& rng) {
        Sample s;
        s.mode_id = static_cast<std::uint32_t>(rng.below(spec.modes));
        const auto [dr, dc] = square_displacement(s.mode_id);
        const long r = margin + static_cast<long>(rng.below(static_cast<std::uint64_t>(h - side - 2 * margin + 1)));
        const long c = margin + static_cast<long>(rng.below(static_cast<std::uint64_t>(w - side - 2 * margin + 1)));
        std::vector<Canvas> frames;
        for (long i = 0; i < nf; ++i) {
            const long back = nf - 1 - i;
            Canvas f(spec.frame_h, spec.frame_w);
            f.fill_rect(r - back * dr, c - back * dc, side, side, 1.0);
            frames.push_back(std::move(f));
        }
        s.x = stack_frames(frames, spec.frame_h, spec.frame_w);
        Canvas next(spec.frame_h, spec.frame_w);
        next.fill_rect(r + dr, c + dc, side, side, 1.0);
        s.y = stack_frames({next}, spec.frame_h, spec.frame_w);
        return s;
    });
}

Dataset generate(const DatasetSpec& spec) {
    switch (spec.task) {
        case Task::TRAJECTORY: return gen_intersection(spec);
        case Task::JOINTS: return gen_branching_joints(spec);
        case Task::VIDEO: return gen_moving_square(spec);
    }
    throw UsageError("generate: unknown task");
}

// ---------------------------------------------------------------------------

void write_dataset(const Dataset& ds, std::ostream& out) {
    const auto& sp = ds.spec;
    if (ds.samples.size() != sp.n_samples) throw UsageError("write_dataset: sample count disagrees with spec");
    out.write(kMagic, 4);
    binio::put<std::uint32_t>(out, kVersion);
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(sp.task));
    binio::put<std::uint32_t>(out, sp.n_samples);
    binio::put<std::uint32_t>(out, sp.history_frames);
    binio::put<std::uint32_t>(out, sp.horizon);
    binio::put<std::uint32_t>(out, sp.modes);
    binio::put<std::uint32_t>(out, sp.coord_count());
    binio::put<std::uint32_t>(out, sp.frame_h);
    binio::put<std::uint32_t>(out, sp.frame_w);
    binio::put<std::uint64_t>(out, sp.seed);
    const std::uint32_t J = sp.coord_count();
    const Shape xs = sp.x_shape(), ys = sp.y_shape();
    for (const auto& s : ds.samples) {
        if (s.x.shape() != xs || s.y.shape() != ys) throw ShapeError("write_dataset: sample shape disagrees with spec");
        binio::put<std::uint32_t>(out, s.mode_id);
        for (std::uint32_t j = 0; j < J; ++j) {
            const PixelCoord p = j < s.coords.size() ? s.coords[j] : PixelCoord{};
            binio::put<std::uint32_t>(out, p.row);
            binio::put<std::uint32_t>(out, p.col);
        }
        binio::put_f64s(out, s.x.data());
        binio::put_f64s(out, s.y.data());
    }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    write_dataset(ds, out);
    if (!out) throw FormatError("write failed for " + path.string());
}

Dataset read_dataset(std::istream& in, const std::string& what) {
    binio::Reader rd(in, what);
    char magic[4];
    for (auto& c : magic) c = rd.get<char>();
    if (std::memcmp(magic, kMagic, 4) != 0) rd.fail("bad magic (not a CSND dataset)");
    const auto version = rd.get<std::uint32_t>();
    if (version != kVersion) rd.fail("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    auto& sp = ds.spec;
    const auto task = rd.get<std::uint8_t>();
    if (task > 2) rd.fail("unknown task code " + std::to_string(task));
    sp.task = static_cast<Task>(task);
    sp.n_samples = rd.get<std::uint32_t>();
    sp.history_frames = rd.get<std::uint32_t>();
    sp.horizon = rd.get<std::uint32_t>();
    sp.modes = rd.get<std::uint32_t>();
    const auto J = rd.get<std::uint32_t>();
    sp.frame_h = rd.get<std::uint32_t>();
    sp.frame_w = rd.get<std::uint32_t>();
    sp.seed = rd.get<std::uint64_t>();
    if (sp.task == Task::JOINTS) sp.joints = J;
    if (J != sp.coord_count()) rd.fail("joint count " + std::to_string(J) + " inconsistent with task");
    try {
        sp.validate();
    } catch (const UsageError& e) {
        rd.fail(e.what());
    }
    const Shape xs = sp.x_shape(), ys = sp.y_shape();
    const std::size_t per_sample = 4 + 8 * J + 8 * (numel(xs) + numel(ys));
    if (per_sample * sp.n_samples > (std::size_t{1} << 36)) rd.fail("implausible sample count");
    ds.samples.reserve(sp.n_samples);
    for (std::uint32_t i = 0; i < sp.n_samples; ++i) {
        Sample s;
        s.mode_id = rd.get<std::uint32_t>();
        if (s.mode_id >= sp.modes) rd.fail("sample " + std::to_string(i) + " has out-of-range mode");
        for (std::uint32_t j = 0; j < J; ++j) {
            PixelCoord p;
            p.row = rd.get<std::uint32_t>();
            p.col = rd.get<std::uint32_t>();
            s.coords.push_back(p);
        }
        std::vector<double> x(numel(xs)), y(numel(ys));
        rd.get_f64s(x);
        rd.get_f64s(y);
        s.x = Tensor(xs, std::move(x));
        s.y = Tensor(ys, std::move(y));
        ds.samples.push_back(std::move(s));
    }
    if (!rd.at_end()) rd.fail("trailing bytes after last sample");
    return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open dataset " + path.string());
    return read_dataset(in, path.string());
}

Split parse_split(const std::string& text) {
    if (text == "all") return Split::All;
    if (text == "train") return Split::Train;
    if (text == "test") return Split::Test;
    throw UsageError("unknown split '" + text + "' (expected all, train or test)");
}

std::vector<std::size_t> split_indices(std::size_t n, Split split) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (split == Split::Train && i % 2 != 0) continue;
        if (split == Split::Test && i % 2 == 0) continue;
        idx.push_back(i);
    }
    return idx;
}

}  // namespace csnet
