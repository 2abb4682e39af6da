#include "falsecl/persist.hpp"

#include <cmath>
#include <cstdio>

#include "binary_io.hpp"

namespace falsecl {

namespace {

constexpr std::string_view kCheckpointMagic = "FALSECK1";
constexpr std::uint32_t kMaxHeaderBytes = 1U << 20;

void render(const nlohmann::json& v, std::string& out) {
  switch (v.type()) {
    case nlohmann::json::value_t::number_float: {
      const double d = v.get<double>();
      if (!std::isfinite(d)) {
        out += "null";
        break;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", d);
      out += buf;
      // keep integral doubles typed as floats when parsed back
      if (std::string_view(buf).find_first_of(".e") == std::string_view::npos) out += ".0";
      break;
    }
    case nlohmann::json::value_t::object: {
      // nlohmann objects are std::map-backed, so iteration is key-sorted.
      out.push_back('{');
      bool first = true;
      for (const auto& [key, value] : v.items()) {
        if (!first) out.push_back(',');
        first = false;
        out += nlohmann::json(key).dump();
        out.push_back(':');
        render(value, out);
      }
      out.push_back('}');
      break;
    }
    case nlohmann::json::value_t::array: {
      out.push_back('[');
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out.push_back(',');
        render(v[i], out);
      }
      out.push_back(']');
      break;
    }
    default:
      out += v.dump();
  }
}

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string encode_checkpoint(const EncoderParams& params, const CheckpointMeta& meta) {
  params.validate();
  const nlohmann::json header = {{"format_version", kCheckpointVersion},
                                 {"layer_dims", params.layer_dims},
                                 {"seed", meta.seed},
                                 {"train_config_digest", meta.train_config_digest}};
  const std::string header_text = header.dump();
  std::string out;
  out.append(kCheckpointMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out.append(header_text);
  for (double v : flatten(params)) detail::put_f64(out, v);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < kCheckpointMagic.size() || in.take(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("bad checkpoint magic");
  }
  const std::uint32_t header_len = in.u32();
  if (header_len > kMaxHeaderBytes || header_len > in.remaining()) {
    throw FormatError("checkpoint header length out of range");
  }
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(in.take(header_len));
    if (header.at("format_version").get<int>() != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version");
    }
    ck.params.layer_dims = header.at("layer_dims").get<std::vector<int>>();
    ck.meta.seed = header.at("seed").get<std::uint64_t>();
    ck.meta.train_config_digest = header.at("train_config_digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto& dims = ck.params.layer_dims;
  if (dims.size() < 2) throw FormatError("checkpoint has no layers");
  for (int d : dims) {
    if (d < 1) throw FormatError("checkpoint has a non-positive layer dim");
  }
  std::size_t expected = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    expected += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  }
  if (in.remaining() != expected * 8) {
    throw FormatError("checkpoint payload length mismatch: expected " + std::to_string(expected * 8) +
                      " bytes, found " + std::to_string(in.remaining()));
  }
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    ck.params.weights.push_back(Matrix::Zero(dims[l], dims[l + 1]));
    ck.params.biases.push_back(Vector::Zero(dims[l + 1]));
  }
  std::vector<double> values(expected);
  for (double& v : values) v = in.f64();
  unflatten(ck.params, values);
  return ck;
}

void save_checkpoint(const EncoderParams& params, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  detail::write_file(path.string(), encode_checkpoint(params, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path.string()));
}

std::string format_jsonl(const std::vector<nlohmann::json>& records) {
  std::string out;
  for (const auto& r : records) {
    render(r, out);
    out.push_back('\n');
  }
  return out;
}

void write_metrics(const std::vector<nlohmann::json>& records, const std::filesystem::path& path,
                   bool append) {
  const std::string text = format_jsonl(records);
  std::FILE* f = std::fopen(path.string().c_str(), append ? "ab" : "wb");
  if (f == nullptr) throw IoError("cannot open metrics file: " + path.string());
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  if (std::fclose(f) != 0 || !ok) throw IoError("write failed: " + path.string());
}

nlohmann::json to_json(const EpochMetrics& m, bool include_wall_time) {
  nlohmann::json j = {{"epoch", m.epoch},
                      {"mean_loss", m.mean_loss},
                      {"mean_flagged_per_anchor", m.mean_flagged_per_anchor},
                      {"mean_positive_similarity", m.mean_positive_similarity}};
  if (include_wall_time) j["wall_seconds"] = m.wall_seconds;
  return j;
}

nlohmann::json to_json(const SweepRow& row) {
  return {{"alpha", row.alpha},
          {"seed", row.seed},
          {"probe_accuracy", row.probe_accuracy},
          {"detection_precision", optional_number(row.detection_precision)},
          {"detection_base_rate", row.detection_base_rate},
          {"n_flagged", row.n_flagged},
          {"n_f", row.n_f},
          {"n_h", row.n_h},
          {"final_loss", row.final_loss},
          {"final_positive_similarity", row.final_positive_similarity}};
}

nlohmann::json to_json(const AlphaAggregate& agg) {
  return {{"alpha", agg.alpha},
          {"runs", agg.runs},
          {"probe_mean", agg.probe_mean},
          {"probe_std", agg.probe_std},
          {"precision_runs", agg.precision_runs},
          {"precision_mean", agg.precision_mean},
          {"precision_std", agg.precision_std},
          {"base_rate_mean", agg.base_rate_mean}};
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json augment = {{"noise_sigma", cfg.augment.noise_sigma},
                            {"scale_min", cfg.augment.scale_min},
                            {"scale_max", cfg.augment.scale_max},
                            {"mask_prob", cfg.augment.mask_prob},
                            {"flip_prob", cfg.augment.flip_prob},
                            {"crop_fraction", cfg.augment.crop_fraction},
                            {"channel_jitter_sigma", cfg.augment.channel_jitter_sigma}};
  if (cfg.augment.raster) {
    augment["raster"] = {{"h", cfg.augment.raster->h},
                         {"w", cfg.augment.raster->w},
                         {"channels", cfg.augment.raster->channels}};
  }
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"momentum", cfg.momentum},
          {"loss",
           {{"alpha", cfg.loss.alpha},
            {"tau", cfg.loss.tau},
            {"threshold", cfg.loss.threshold},
            {"k_max", cfg.loss.k_max}}},
          {"encoder_dims", cfg.encoder_dims},
          {"augment", augment},
          {"seed", cfg.seed},
          {"warmup_epochs", cfg.warmup_epochs},
          {"fnsd_enabled", cfg.fnsd_enabled}};
}

std::string config_digest(const TrainConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : format_jsonl({to_json(cfg)})) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace falsecl
