#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "csnet/models.hpp"
#include "csnet/tensor.hpp"

namespace csnet {

struct DatasetSpec {
    Task task = Task::TRAJECTORY;
    std::uint32_t n_samples = 0;
    std::uint32_t modes = 2;           // M
    std::uint32_t history_frames = 1;  // Nf
    std::uint32_t horizon = 20;        // h; ignored for video
    std::uint32_t joints = 4;          // J; joints task only
    std::uint32_t frame_h = 32;
    std::uint32_t frame_w = 32;
    std::uint64_t seed = 0;

    // Number of coordinate pairs stored per sample.
    std::uint32_t coord_count() const;
    Shape x_shape() const;
    Shape y_shape() const;
    void validate() const;
    bool operator==(const DatasetSpec&) const = default;
};

struct Sample {
    Tensor x;                  // [Nf*C x H x W] glimpse stack, oldest frame first
    Tensor y;                  // [h x 2], [J x h x 2] or [C x H x W]
    std::uint32_t mode_id = 0; // generator metadata; never a model input
    std::vector<PixelCoord> coords;
};

struct Dataset {
    DatasetSpec spec;
    std::vector<Sample> samples;
};

// Generator constants shared with tests.
namespace synth {
inline constexpr double kBackground = 0.2;  // crossroad intensity
inline constexpr double kStreak = 0.5;      // motion trail intensity
inline constexpr std::uint32_t kApproachStep = 2;
inline constexpr double kJointSpeed = 1.0;
inline constexpr double kJointSpeedJitter = 0.05;  // per pixel of figure offset
inline constexpr int kJointJitter = 2;
inline constexpr std::uint32_t kMaxTrajectoryModes = 8;
inline constexpr std::uint32_t kMaxVideoModes = 8;

// (dx, dy) compass steps in image axes (x right, y down), in mode order.
struct Step {
    int dx;
    int dy;
};
inline constexpr Step kCompass[8] = {{1, 0}, {-1, 0}, {0, -1}, {0, 1}, {1, -1}, {-1, 1}, {-1, -1}, {1, 1}};
}  // namespace synth

// Intersection world: an object at a crossroad leaves along one of M compass
// directions at unit speed. With Nf > 1 the history shows its approach, so
// the exit direction becomes observable.
Dataset gen_intersection(const DatasetSpec& spec);
// J-joint stick figure; mode m moves one joint, y holds per-joint velocities.
Dataset gen_branching_joints(const DatasetSpec& spec);
// Bright square on a dark background translating one pixel per step along
// one of M directions; y is the next frame.
Dataset gen_moving_square(const DatasetSpec& spec);
// Dispatches on spec.task.
Dataset generate(const DatasetSpec& spec);

// Intersection velocity for mode m (unit length).
std::pair<double, double> intersection_velocity(std::uint32_t mode);
// Square displacement (drow, dcol) for mode m.
std::pair<int, int> square_displacement(std::uint32_t mode);

void write_dataset(const Dataset& ds, std::ostream& out);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(std::istream& in, const std::string& what = "dataset");
Dataset read_dataset(const std::filesystem::path& path);

enum class Split { All, Train, Test };
Split parse_split(const std::string& text);
// Train takes even indices, test odd ones.
std::vector<std::size_t> split_indices(std::size_t n, Split split);

}  // namespace csnet
