#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "falsecl/encoder.hpp"
#include "falsecl/eval.hpp"
#include "falsecl/trainer.hpp"

namespace falsecl {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string train_config_digest;

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  EncoderParams params;
  CheckpointMeta meta;
};

// Layout: "FALSECK1", uint32 LE header length, JSON header
// {format_version, layer_dims, seed, train_config_digest}, then float64 LE
// payload: every weight matrix row-major in layer order, then every bias.
std::string encode_checkpoint(const EncoderParams& params, const CheckpointMeta& meta);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const EncoderParams& params, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// One JSON object per line, keys sorted, floats with 17 significant digits.
std::string format_jsonl(const std::vector<nlohmann::json>& records);
void write_metrics(const std::vector<nlohmann::json>& records, const std::filesystem::path& path,
                   bool append = false);

nlohmann::json to_json(const EpochMetrics& m, bool include_wall_time);
nlohmann::json to_json(const SweepRow& row);
nlohmann::json to_json(const AlphaAggregate& agg);
nlohmann::json to_json(const TrainConfig& cfg);

/// FNV-1a 64 over the canonical config JSON, as 16 hex digits.
std::string config_digest(const TrainConfig& cfg);

}  // namespace falsecl
