#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "csnet/kernels.hpp"
#include "csnet/models.hpp"
#include "csnet/synthdata.hpp"

using namespace csnet;

namespace {

DatasetSpec spec_for(Task task, std::uint32_t n, std::uint32_t modes, std::uint32_t nf = 1) {
    DatasetSpec s;
    s.task = task;
    s.n_samples = n;
    s.modes = modes;
    s.history_frames = nf;
    s.horizon = task == Task::JOINTS ? 15 : 20;
    s.seed = 7;
    return s;
}

std::string bytes(const Dataset& ds) {
    std::ostringstream out(std::ios::binary);
    write_dataset(ds, out);
    return out.str();
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(DatasetSpec, Validation) {
    auto s = spec_for(Task::TRAJECTORY, 10, 0);
    EXPECT_THROW(s.validate(), UsageError);
    s = spec_for(Task::TRAJECTORY, 10, 9);
    EXPECT_THROW(s.validate(), UsageError);
    s = spec_for(Task::JOINTS, 10, 2);
    s.joints = 1;
    EXPECT_THROW(s.validate(), UsageError);
    s = spec_for(Task::VIDEO, 10, 2, 20);
    EXPECT_THROW(s.validate(), UsageError);
    EXPECT_NO_THROW(spec_for(Task::VIDEO, 10, 4, 2).validate());
}

TEST(Generators, Determinism) {
    for (auto task : {Task::TRAJECTORY, Task::JOINTS, Task::VIDEO}) {
        const auto spec = spec_for(task, 40, 2, 2);
        EXPECT_EQ(bytes(generate(spec)), bytes(generate(spec)));
        auto other = spec;
        other.seed = 8;
        EXPECT_NE(bytes(generate(spec)), bytes(generate(other)));
    }
}

TEST(Generators, IndependentOfThreadCount) {
    const int saved = kernels::thread_count();
    const auto spec = spec_for(Task::VIDEO, 64, 4, 2);
    kernels::set_thread_count(1);
    const auto a = bytes(generate(spec));
    kernels::set_thread_count(4);
    const auto b = bytes(generate(spec));
    kernels::set_thread_count(saved);
    EXPECT_EQ(a, b);
}

TEST(Intersection, SingleModeIsDeterministic) {
    const auto ds = generate(spec_for(Task::TRAJECTORY, 20, 1));
    for (const auto& s : ds.samples) {
        EXPECT_EQ(values(s.y), values(ds.samples[0].y));
        EXPECT_EQ(values(s.x), values(ds.samples[0].x));
    }
}

TEST(Intersection, TwoModesLeftRightBinomial) {
    const auto ds = generate(spec_for(Task::TRAJECTORY, 2000, 2));
    std::map<std::uint32_t, int> counts;
    for (const auto& s : ds.samples) {
        ++counts[s.mode_id];
        const double vx = s.mode_id == 0 ? 1.0 : -1.0;
        for (std::size_t t = 0; t < 20; ++t) {
            EXPECT_EQ(s.y[2 * t], vx);
            EXPECT_EQ(s.y[2 * t + 1], 0.0);
        }
        // With one frame the glimpse carries no direction cue.
        EXPECT_EQ(values(s.x), values(ds.samples[0].x));
    }
    const double sd = std::sqrt(2000 * 0.25);
    EXPECT_LE(std::abs(counts[0] - 1000), 3 * sd);
}

TEST(Intersection, ModeFrequenciesWithinFourSigma) {
    for (std::uint32_t M : {3u, 4u, 8u}) {
        const auto ds = generate(spec_for(Task::TRAJECTORY, 4000, M));
        std::map<std::uint32_t, int> counts;
        for (const auto& s : ds.samples) ++counts[s.mode_id];
        const double p = 1.0 / M, mean = 4000 * p, sd = std::sqrt(4000 * p * (1 - p));
        for (std::uint32_t m = 0; m < M; ++m) EXPECT_LE(std::abs(counts[m] - mean), 4 * sd) << "M=" << M << " m=" << m;
    }
}

TEST(Intersection, VelocityTelescopes) {
    const auto ds = generate(spec_for(Task::TRAJECTORY, 10, 8));
    for (const auto& s : ds.samples) {
        double sx = 0, sy = 0;
        for (std::size_t t = 0; t < 20; ++t) {
            sx += s.y[2 * t];
            sy += s.y[2 * t + 1];
        }
        const auto [vx, vy] = intersection_velocity(s.mode_id);
        EXPECT_NEAR(sx, 20 * vx, 1e-12);
        EXPECT_NEAR(sy, 20 * vy, 1e-12);
        EXPECT_NEAR(std::hypot(vx, vy), 1.0, 1e-15);
    }
}

TEST(Intersection, HistoryRevealsDirection) {
    // With Nf > 1 glimpses of different modes differ; same mode, same glimpse.
    const auto ds = generate(spec_for(Task::TRAJECTORY, 60, 2, 4));
    std::map<std::uint32_t, std::vector<double>> glimpse;
    for (const auto& s : ds.samples) {
        auto [it, fresh] = glimpse.emplace(s.mode_id, values(s.x));
        if (!fresh) EXPECT_EQ(it->second, values(s.x));
    }
    ASSERT_EQ(glimpse.size(), 2u);
    EXPECT_NE(glimpse[0], glimpse[1]);
}

TEST(Joints, CoordsInBoundsAndStaticRowsZero) {
    auto spec = spec_for(Task::JOINTS, 200, 6, 2);
    const auto ds = generate(spec);
    for (const auto& s : ds.samples) {
        ASSERT_EQ(s.coords.size(), spec.joints);
        for (const auto& c : s.coords) {
            EXPECT_LT(c.row, spec.frame_h);
            EXPECT_LT(c.col, spec.frame_w);
        }
        int moving = 0;
        for (std::size_t j = 0; j < spec.joints; ++j) {
            double norm = 0;
            for (std::size_t t = 0; t < spec.horizon * 2; ++t) norm += std::abs(s.y[j * spec.horizon * 2 + t]);
            moving += norm > 0;
        }
        EXPECT_EQ(moving, 1);
    }
}

TEST(Joints, ModesWellSeparated) {
    const auto spec = spec_for(Task::JOINTS, 600, 2);
    const auto ds = generate(spec);
    const std::size_t n = ds.samples[0].y.size();
    std::map<std::uint32_t, std::vector<double>> mean;
    std::map<std::uint32_t, int> count;
    for (const auto& s : ds.samples) {
        auto& m = mean[s.mode_id];
        m.resize(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) m[i] += s.y[i];
        ++count[s.mode_id];
    }
    for (auto& [k, m] : mean)
        for (auto& v : m) v /= count[k];
    // Intra-mode noise: RMS distance of samples to their mode mean.
    double ss = 0;
    for (const auto& s : ds.samples)
        for (std::size_t i = 0; i < n; ++i) ss += std::pow(s.y[i] - mean[s.mode_id][i], 2);
    const double sigma = std::sqrt(ss / ds.samples.size());
    double sep = 0;
    for (std::size_t i = 0; i < n; ++i) sep += std::pow(mean[0][i] - mean[1][i], 2);
    EXPECT_GE(std::sqrt(sep), 5 * sigma);
}

TEST(MovingSquare, WarpOracleAndRange) {
    const auto ds = generate(spec_for(Task::VIDEO, 50, 8, 2));
    for (const auto& s : ds.samples) {
        for (double v : s.x.data()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
        const auto [dr, dc] = square_displacement(s.mode_id);
        // Backward warp: next(p) = last(p - d).
        std::vector<double> flow(2 * 32 * 32);
        std::fill(flow.begin(), flow.begin() + 1024, -dr);
        std::fill(flow.begin() + 1024, flow.end(), -dc);
        const Tensor last = slice(s.x, 1, 2);
        const Tensor warped = bilinear_warp(last, Tensor({2, 32, 32}, flow));
        EXPECT_EQ(values(warped), values(s.y));
    }
}

TEST(MovingSquare, TwoFramesDetermineDirection) {
    const auto ds = generate(spec_for(Task::VIDEO, 40, 1, 2));
    for (const auto& s : ds.samples) {
        // Same displacement between history frames as into the future.
        const Tensor f0 = slice(s.x, 0, 1), f1 = slice(s.x, 1, 2);
        std::vector<double> flow(2 * 32 * 32);
        std::fill(flow.begin(), flow.begin() + 1024, 0.0);
        std::fill(flow.begin() + 1024, flow.end(), -1.0);  // mode 0 moves one column right
        EXPECT_EQ(values(bilinear_warp(f0, Tensor({2, 32, 32}, flow))), values(f1));
    }
}

TEST(DatasetIo, RoundTripEveryGenerator) {
    for (auto task : {Task::TRAJECTORY, Task::JOINTS, Task::VIDEO}) {
        const auto ds = generate(spec_for(task, 12, 2, 2));
        const std::string b = bytes(ds);
        std::istringstream in(b, std::ios::binary);
        const Dataset back = read_dataset(in);
        EXPECT_EQ(back.spec, ds.spec);
        ASSERT_EQ(back.samples.size(), ds.samples.size());
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            EXPECT_EQ(values(back.samples[i].x), values(ds.samples[i].x));
            EXPECT_EQ(values(back.samples[i].y), values(ds.samples[i].y));
            EXPECT_EQ(back.samples[i].mode_id, ds.samples[i].mode_id);
            EXPECT_EQ(back.samples[i].coords, ds.samples[i].coords);
        }
        EXPECT_EQ(bytes(back), b);
    }
}

TEST(DatasetIo, EmptyDatasetRoundTrips) {
    const auto ds = generate(spec_for(Task::TRAJECTORY, 0, 2));
    EXPECT_TRUE(ds.samples.empty());
    std::istringstream in(bytes(ds), std::ios::binary);
    const auto back = read_dataset(in);
    EXPECT_EQ(back.spec, ds.spec);
    EXPECT_TRUE(back.samples.empty());
}

TEST(DatasetIo, HeaderLayout) {
    const std::string b = bytes(generate(spec_for(Task::VIDEO, 3, 2)));
    EXPECT_EQ(b.substr(0, 4), "CSND");
    EXPECT_EQ(static_cast<unsigned char>(b[4]), 1u);  // version, little-endian
    EXPECT_EQ(static_cast<unsigned char>(b[8]), 2u);  // task code
    EXPECT_EQ(b.size(), 4u + 4 + 1 + 4 * 7 + 8 + 3 * (4 + 8 * 2 * 1024));
}

TEST(DatasetIo, CorruptionIsAFormatError) {
    std::string b = bytes(generate(spec_for(Task::TRAJECTORY, 4, 2)));
    std::string bad = b;
    bad[0] = 'X';
    std::istringstream in1(bad, std::ios::binary);
    EXPECT_THROW(read_dataset(in1), FormatError);
    bad = b;
    bad[4] = 9;
    std::istringstream in2(bad, std::ios::binary);
    EXPECT_THROW(read_dataset(in2), FormatError);
    std::istringstream in3(b.substr(0, b.size() - 5), std::ios::binary);
    EXPECT_THROW(read_dataset(in3), FormatError);
    std::istringstream in4(b + "x", std::ios::binary);
    EXPECT_THROW(read_dataset(in4), FormatError);
    std::istringstream in5(std::string(), std::ios::binary);
    EXPECT_THROW(read_dataset(in5), FormatError);
    EXPECT_THROW(read_dataset(std::filesystem::path("/nonexistent/x.csnd")), FormatError);
}

TEST(Split, ParityAndDisjoint) {
    const auto tr = split_indices(7, Split::Train), te = split_indices(7, Split::Test);
    EXPECT_EQ(tr, (std::vector<std::size_t>{0, 2, 4, 6}));
    EXPECT_EQ(te, (std::vector<std::size_t>{1, 3, 5}));
    EXPECT_EQ(split_indices(3, Split::All).size(), 3u);
    EXPECT_EQ(parse_split("test"), Split::Test);
    EXPECT_THROW(parse_split("validation"), UsageError);
}
