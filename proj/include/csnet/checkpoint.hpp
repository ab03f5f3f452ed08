#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "csnet/models.hpp"

namespace csnet {

// "CSNC" container: magic, u32 version, then records until end of file.
// Each record is u32 name length, name bytes, u32 rank, u32 extents, and the
// little-endian f64 payload. Model hyperparameters travel as "config.*"
// records so a checkpoint is self-describing.
inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'N', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<double> values;
    bool operator==(const CheckpointRecord&) const = default;
};

void write_records(std::ostream& out, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_records(std::istream& in, const std::string& what = "checkpoint");

std::vector<CheckpointRecord> model_records(const Model& model);
Model model_from_records(const std::vector<CheckpointRecord>& records);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace csnet
