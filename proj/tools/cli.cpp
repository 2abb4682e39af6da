#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "falsecl/data.hpp"
#include "falsecl/eval.hpp"
#include "falsecl/persist.hpp"
#include "falsecl/trainer.hpp"
#include "../src/binary_io.hpp"

namespace falsecl::cli {

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("FALSE_SEED"); env != nullptr && *env != '\0') {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw BadConfig(std::string("FALSE_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

// Unsectioned keys in a config file belong to whichever subcommand was invoked.
class SubcommandConfig : public CLI::ConfigINI {
 public:
  explicit SubcommandConfig(const CLI::App& app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> items = CLI::ConfigINI::from_config(input);
    const auto active = app_.get_subcommands();
    if (active.empty()) return items;
    for (auto& item : items) {
      if (item.parents.empty()) item.parents.push_back(active.front()->get_name());
    }
    return items;
  }

 private:
  const CLI::App& app_;
};

// Flags shared by pretrain, probe and sweep.
struct TrainFlags {
  int epochs = 30;
  int batch = 64;
  double lr = 0.5;
  double momentum = 0.9;
  double alpha = 1.0;
  double threshold = 0.9;
  double tau = 1.0;
  std::size_t kmax = 1;
  std::vector<int> hidden{64};
  int d_out = 16;
  int warmup = 0;
  bool no_fnsd = false;
  AugmentConfig augment = AugmentConfig::toy_defaults();
  // Raster-only knobs; unset means the raster defaults for raster data.
  std::optional<double> flip;
  std::optional<double> crop;
  std::optional<double> jitter;
};

void add_augment_flags(CLI::App* sub, TrainFlags& f) {
  AugmentConfig& a = f.augment;
  sub->add_option("--aug-noise", a.noise_sigma, "Additive Gaussian noise stddev")->capture_default_str();
  sub->add_option("--aug-scale-min", a.scale_min, "Lower multiplicative scale")->capture_default_str();
  sub->add_option("--aug-scale-max", a.scale_max, "Upper multiplicative scale")->capture_default_str();
  sub->add_option("--aug-mask", a.mask_prob, "Per-feature dropout probability")->capture_default_str();
  sub->add_option("--aug-flip", f.flip, "Raster horizontal flip probability [0.5]");
  sub->add_option("--aug-crop", f.crop, "Raster crop fraction [0.75]");
  sub->add_option("--aug-jitter", f.jitter, "Raster channel jitter stddev [0.1]");
}

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--epochs", f.epochs, "Pretraining epochs")->capture_default_str();
  sub->add_option("--batch", f.batch, "Source samples per batch")->capture_default_str();
  sub->add_option("--lr", f.lr, "SGD learning rate")->capture_default_str();
  sub->add_option("--momentum", f.momentum, "SGD momentum")->capture_default_str();
  sub->add_option("--threshold", f.threshold, "Benchmark threshold T on positive cosine")
      ->capture_default_str();
  sub->add_option("--tau", f.tau, "Temperature")->capture_default_str();
  sub->add_option("--kmax", f.kmax, "Possible false negatives per benchmark anchor")
      ->capture_default_str();
  sub->add_option("--hidden", f.hidden, "Hidden layer widths (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--embed-dim", f.d_out, "Embedding width")->capture_default_str();
  sub->add_option("--warmup", f.warmup, "Epochs of plain InfoNCE before detection starts")
      ->capture_default_str();
  sub->add_flag("--no-fnsd", f.no_fnsd, "Disable false negative detection entirely");
  add_augment_flags(sub, f);
}

TrainConfig make_train_config(const TrainFlags& f, const LabeledDataset& ds, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch;
  cfg.lr = f.lr;
  cfg.momentum = f.momentum;
  cfg.loss.alpha = f.alpha;
  cfg.loss.threshold = f.threshold;
  cfg.loss.tau = f.tau;
  cfg.loss.k_max = f.kmax;
  cfg.encoder_dims = {static_cast<int>(ds.dim())};
  cfg.encoder_dims.insert(cfg.encoder_dims.end(), f.hidden.begin(), f.hidden.end());
  cfg.encoder_dims.push_back(f.d_out);
  cfg.warmup_epochs = f.warmup;
  cfg.fnsd_enabled = !f.no_fnsd;
  cfg.augment = f.augment;
  if (const auto shape = ds.raster()) {
    const AugmentConfig raster_defaults = AugmentConfig::toy_defaults(shape);
    cfg.augment.raster = shape;
    cfg.augment.flip_prob = f.flip.value_or(raster_defaults.flip_prob);
    cfg.augment.crop_fraction = f.crop.value_or(raster_defaults.crop_fraction);
    cfg.augment.channel_jitter_sigma = f.jitter.value_or(raster_defaults.channel_jitter_sigma);
  }
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void write_manifest(const std::string& path, const std::string& command, nlohmann::json config,
                    nlohmann::json artifacts) {
  const nlohmann::json manifest = {{"tool", "falsecl"},
                                   {"version", kToolVersion},
                                   {"command", command},
                                   {"config", std::move(config)},
                                   {"artifacts", std::move(artifacts)}};
  detail::write_file(path, format_jsonl({manifest}));
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string describe(const FnsDetectionReport& r) {
  const auto p = r.precision();
  return "flagged=" + std::to_string(r.n_flagged) + " n_f=" + std::to_string(r.n_f) +
         " n_h=" + std::to_string(r.n_h) + " precision=" + (p ? fmt_double(*p) : "n/a") +
         " base_rate=" + fmt_double(r.base_rate());
}

// ---

struct GenDataFlags {
  std::string mode = "vector";
  int classes = 8;
  int per_class = 64;
  int dim = 32;
  int height = 8;
  int width = 8;
  int channels = 1;
  double class_sep = 5.0;
  double intra_sigma = 1.0;
  double noise_sigma = 0.5;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_gen_data(const GenDataFlags& f, std::ostream& out) {
  const std::uint64_t seed = f.seed.value_or(default_seed());
  LabeledDataset ds;
  if (f.mode == "vector") {
    ds = generate_cluster_dataset({f.per_class, f.classes, f.dim, f.class_sep, f.intra_sigma}, seed);
  } else {
    ds = generate_raster_dataset(
        {f.per_class, f.classes, RasterShape{f.height, f.width, f.channels}, f.noise_sigma}, seed);
  }
  save_dataset(ds, f.out);
  out << "wrote " << ds.size() << " samples (mode=" << f.mode << ", d_in=" << ds.dim()
      << ", classes=" << ds.classes << ", seed=" << seed << ") to " << f.out << "\n";
  return kExitOk;
}

struct PretrainFlags {
  TrainFlags train;
  std::string data;
  std::string out;
  std::string metrics;
  std::string manifest;
  std::optional<std::uint64_t> seed;
  bool wall_time = false;
};

int cmd_pretrain(PretrainFlags f, std::ostream& out) {
  const LabeledDataset ds = load_dataset(f.data);
  const TrainConfig cfg = make_train_config(f.train, ds, f.seed.value_or(default_seed()));
  if (f.metrics.empty()) f.metrics = f.out + ".metrics.jsonl";
  if (f.manifest.empty()) f.manifest = f.out + ".manifest.json";

  const bool baseline = cfg.loss.alpha == 0.0 || !cfg.fnsd_enabled;
  nlohmann::json config = to_json(cfg);
  config["data"] = f.data;
  config["loss_variant"] = baseline ? "infonce_baseline" : "fncc";
  config["record_wall_time"] = f.wall_time;
  write_manifest(f.manifest, "pretrain", config,
                 {{"checkpoint", f.out}, {"metrics", f.metrics}, {"manifest", f.manifest}});

  const PretrainResult result = pretrain(cfg, ds);
  save_checkpoint(result.params, {cfg.seed, config_digest(cfg)}, f.out);
  std::vector<nlohmann::json> records;
  for (const auto& m : result.metrics) records.push_back(to_json(m, f.wall_time));
  write_metrics(records, f.metrics);

  out << "pretrained " << cfg.epochs << " epochs (" << config["loss_variant"].get<std::string>()
      << ", alpha=" << cfg.loss.alpha << ", T=" << cfg.loss.threshold << ")";
  if (!result.metrics.empty()) {
    out << ", final loss " << fmt_double(result.metrics.back().mean_loss) << ", positive sim "
        << fmt_double(result.metrics.back().mean_positive_similarity);
  }
  out << "\ncheckpoint: " << f.out << "\n";
  return kExitOk;
}

struct ProbeFlags {
  TrainFlags train;
  std::string checkpoint;
  std::string data;
  int k = 5;
  std::size_t batches = 24;
  std::optional<std::uint64_t> seed;
};

int cmd_probe(const ProbeFlags& f, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  const LabeledDataset ds = load_dataset(f.data);
  if (ck.params.d_in() != ds.dim()) {
    throw ShapeMismatch("dataset dimension " + std::to_string(ds.dim()) +
                        " does not match checkpoint input " + std::to_string(ck.params.d_in()));
  }
  TrainConfig cfg = make_train_config(f.train, ds, f.seed.value_or(default_seed()));
  cfg.encoder_dims = ck.params.layer_dims;
  const double acc = probe_accuracy(ck.params, ds, f.k, cfg.seed);
  const FnsDetectionReport det = evaluate_detection(ck.params, ds, cfg, f.batches, cfg.seed);
  out << "knn accuracy (k=" << f.k << "): " << fmt_double(acc) << "\n";
  out << "fns detection over " << f.batches << " batches (T=" << cfg.loss.threshold
      << ", kmax=" << cfg.loss.k_max << "): " << describe(det) << "\n";
  return kExitOk;
}

struct SweepFlags {
  TrainFlags train;
  std::string data;
  std::string out;
  std::string summary;
  std::string manifest;
  std::vector<double> alphas{0.0, 0.3, 0.5, 0.7, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::optional<std::uint64_t> probe_seed;
  int probe_scale = 4;
  SweepOptions opts;
};

int cmd_sweep(SweepFlags f, std::ostream& out) {
  if (f.alphas.empty()) throw BadConfig("--alphas must list at least one value");
  if (f.seeds.empty()) throw BadConfig("--seeds must list at least one value");
  const LabeledDataset ds = load_dataset(f.data);
  const TrainConfig cfg = make_train_config(f.train, ds, f.seeds.front());
  const std::uint64_t probe_seed = f.probe_seed.value_or(splitmix64(ds.sample_seed + 1));
  const LabeledDataset probe_ds = regenerate_held_out(ds, probe_seed, f.probe_scale);
  if (f.summary.empty()) f.summary = f.out + ".summary.txt";
  if (f.manifest.empty()) f.manifest = f.out + ".manifest.json";

  nlohmann::json config = to_json(cfg);
  config.erase("seed");
  config["data"] = f.data;
  config["alphas"] = f.alphas;
  config["seeds"] = f.seeds;
  config["probe_sample_seed"] = probe_seed;
  config["probe_scale"] = f.probe_scale;
  config["knn_k"] = f.opts.knn_k;
  config["detection_batches"] = f.opts.detection_batches;
  // --jobs is deliberately absent: output must not depend on it.
  write_manifest(f.manifest, "sweep", config,
                 {{"rows", f.out}, {"summary", f.summary}, {"manifest", f.manifest}});

  const SweepReport report = sweep_alpha(cfg, f.alphas, f.seeds, ds, probe_ds, f.opts);
  std::vector<nlohmann::json> rows;
  for (const auto& r : report.rows) rows.push_back(to_json(r));
  write_metrics(rows, f.out);
  const std::string summary = format_sweep_summary(report);
  detail::write_file(f.summary, summary);
  out << summary;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"False-negative-aware contrastive pretraining toolkit", "falsecl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  app.fallthrough();
  app.set_config("--config", "", "Key-value config file; flags given on the command line win");
  app.config_formatter(std::make_shared<SubcommandConfig>(app));

  GenDataFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a labeled synthetic dataset");
  gen_cmd->add_option("--mode", gen.mode, "vector | raster")
      ->check(CLI::IsMember({"vector", "raster"}))
      ->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes)->capture_default_str();
  gen_cmd->add_option("--per-class", gen.per_class)->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim, "Feature width (vector mode)")->capture_default_str();
  gen_cmd->add_option("--height", gen.height, "Raster height")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "Raster width")->capture_default_str();
  gen_cmd->add_option("--channels", gen.channels, "Raster channels")->capture_default_str();
  gen_cmd->add_option("--class-sep", gen.class_sep)->capture_default_str();
  gen_cmd->add_option("--intra-sigma", gen.intra_sigma)->capture_default_str();
  gen_cmd->add_option("--noise-sigma", gen.noise_sigma, "Raster pixel noise")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Defaults to $FALSE_SEED, else 0");
  gen_cmd->add_option("--out", gen.out)->required();

  PretrainFlags pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Self-supervised pretraining");
  add_train_flags(pre_cmd, pre.train);
  pre_cmd->add_option("--alpha", pre.train.alpha, "Confidence weight in [0, 1]")->capture_default_str();
  pre_cmd->add_option("--data", pre.data)->required();
  pre_cmd->add_option("--out", pre.out, "Checkpoint path")->required();
  pre_cmd->add_option("--metrics", pre.metrics, "Default: <out>.metrics.jsonl");
  pre_cmd->add_option("--manifest", pre.manifest, "Default: <out>.manifest.json");
  pre_cmd->add_option("--seed", pre.seed, "Defaults to $FALSE_SEED, else 0");
  pre_cmd->add_flag("--record-wall-time", pre.wall_time,
                    "Include per-epoch wall time in metrics (makes output non-reproducible)");

  ProbeFlags probe;
  auto* probe_cmd = app.add_subcommand("probe", "Frozen-encoder kNN probe and detection report");
  add_train_flags(probe_cmd, probe.train);
  probe_cmd->add_option("--checkpoint", probe.checkpoint)->required();
  probe_cmd->add_option("--data", probe.data)->required();
  probe_cmd->add_option("--k", probe.k)->capture_default_str();
  probe_cmd->add_option("--batches", probe.batches, "Detection batches")->capture_default_str();
  probe_cmd->add_option("--seed", probe.seed, "Defaults to $FALSE_SEED, else 0");

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Confidence-weight sweep over alphas x seeds");
  add_train_flags(sweep_cmd, sweep.train);
  sweep_cmd->add_option("--data", sweep.data)->required();
  sweep_cmd->add_option("--out", sweep.out, "Row JSONL path")->required();
  sweep_cmd->add_option("--summary", sweep.summary, "Default: <out>.summary.txt");
  sweep_cmd->add_option("--manifest", sweep.manifest, "Default: <out>.manifest.json");
  const CLI::Validator non_empty(
      [](std::string& v) { return v.empty() ? std::string("empty list entry") : std::string(); }, "");
  sweep_cmd->add_option("--alphas", sweep.alphas)->delimiter(',')->check(non_empty)->capture_default_str();
  sweep_cmd->add_option("--seeds", sweep.seeds)->delimiter(',')->check(non_empty)->capture_default_str();
  sweep_cmd->add_option("--probe-seed", sweep.probe_seed, "Sample seed of the held-out probe set");
  sweep_cmd->add_option("--probe-scale", sweep.probe_scale,
                        "Held-out probe set size as a multiple of the dataset")
      ->capture_default_str();
  sweep_cmd->add_option("--k", sweep.opts.knn_k)->capture_default_str();
  sweep_cmd->add_option("--detection-batches", sweep.opts.detection_batches)->capture_default_str();
  sweep_cmd->add_option("--jobs", sweep.opts.jobs, "Parallel sweep cells")->capture_default_str();

  std::vector<std::string> argv_rest(args.rbegin(), args.rend() - 1);
  try {
    app.parse(argv_rest);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*pre_cmd) return cmd_pretrain(pre, out);
    if (*probe_cmd) return cmd_probe(probe, out);
    if (*sweep_cmd) return cmd_sweep(sweep, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace falsecl::cli
