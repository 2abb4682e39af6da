#include "falsecl/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace falsecl {

namespace {

constexpr std::uint64_t kCenterStream = 0x63656e7465727300ULL;
constexpr std::uint64_t kSampleStream = 0x73616d706c657300ULL;
constexpr std::uint64_t kTextureStream = 0x7465787475726500ULL;

constexpr std::string_view kDatasetMagic = "FALSE-DS v1";

double normal(Rng& rng, double sigma) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return sigma * dist(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  return uniform(rng, 0.0, 1.0) < p;
}

int uniform_int(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(rng);
}

void check_counts(int n_per_class, int classes) {
  if (n_per_class < 1) throw BadConfig("n_per_class must be >= 1");
  if (classes < 2) throw BadConfig("classes must be >= 2");
}

std::vector<std::int32_t> class_major_labels(int n_per_class, int classes) {
  std::vector<std::int32_t> labels;
  labels.reserve(static_cast<std::size_t>(n_per_class) * classes);
  for (int c = 0; c < classes; ++c) {
    labels.insert(labels.end(), static_cast<std::size_t>(n_per_class), c);
  }
  return labels;
}

// Raster helpers work on HWC-flattened rows.
Eigen::Index pixel_index(const RasterShape& s, int y, int x, int ch) {
  return (static_cast<Eigen::Index>(y) * s.w + x) * s.channels + ch;
}

void crop_and_resize(Eigen::Ref<Vector> v, const RasterShape& s, double fraction, Rng& rng) {
  const int ch_h = std::max(1, static_cast<int>(std::lround(s.h * fraction)));
  const int ch_w = std::max(1, static_cast<int>(std::lround(s.w * fraction)));
  const int y0 = uniform_int(rng, 0, s.h - ch_h);
  const int x0 = uniform_int(rng, 0, s.w - ch_w);
  const Vector src = v;
  for (int y = 0; y < s.h; ++y) {
    const int sy = y0 + (y * ch_h) / s.h;
    for (int x = 0; x < s.w; ++x) {
      const int sx = x0 + (x * ch_w) / s.w;
      for (int c = 0; c < s.channels; ++c) {
        v(pixel_index(s, y, x, c)) = src(pixel_index(s, sy, sx, c));
      }
    }
  }
}

void flip_horizontal(Eigen::Ref<Vector> v, const RasterShape& s) {
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w / 2; ++x) {
      for (int c = 0; c < s.channels; ++c) {
        std::swap(v(pixel_index(s, y, x, c)), v(pixel_index(s, y, s.w - 1 - x, c)));
      }
    }
  }
}

Vector augment_one(const Eigen::Ref<const Vector>& src, const AugmentConfig& cfg, Rng& rng) {
  Vector v = src;
  if (cfg.raster) {
    const RasterShape& s = *cfg.raster;
    if (cfg.crop_fraction < 1.0) crop_and_resize(v, s, cfg.crop_fraction, rng);
    if (bernoulli(rng, cfg.flip_prob)) flip_horizontal(v, s);
    if (cfg.channel_jitter_sigma > 0.0) {
      for (int c = 0; c < s.channels; ++c) {
        const double shift = normal(rng, cfg.channel_jitter_sigma);
        for (int p = 0; p < s.h * s.w; ++p) v(static_cast<Eigen::Index>(p) * s.channels + c) += shift;
      }
    }
  }
  if (cfg.scale_min != 1.0 || cfg.scale_max != 1.0) {
    v *= cfg.scale_min == cfg.scale_max ? cfg.scale_min : uniform(rng, cfg.scale_min, cfg.scale_max);
  }
  if (cfg.noise_sigma > 0.0) {
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += normal(rng, cfg.noise_sigma);
  }
  if (cfg.mask_prob > 0.0) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (bernoulli(rng, cfg.mask_prob)) v(k) = 0.0;
    }
  }
  return v;
}

nlohmann::json origin_to_json(const std::variant<ClusterSpec, RasterSpec>& origin) {
  if (const auto* c = std::get_if<ClusterSpec>(&origin)) {
    return {{"n_per_class", c->n_per_class}, {"classes", c->classes},   {"d_in", c->d_in},
            {"class_sep", c->class_sep},     {"intra_sigma", c->intra_sigma}};
  }
  const auto& r = std::get<RasterSpec>(origin);
  return {{"n_per_class", r.n_per_class}, {"classes", r.classes},   {"h", r.shape.h},
          {"w", r.shape.w},               {"channels", r.shape.channels},
          {"noise_sigma", r.noise_sigma}};
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::optional<RasterShape> LabeledDataset::raster() const {
  if (const auto* r = std::get_if<RasterSpec>(&origin)) return r->shape;
  return std::nullopt;
}

LabeledDataset generate_cluster_dataset(const ClusterSpec& spec, std::uint64_t seed,
                                        std::optional<std::uint64_t> sample_seed) {
  check_counts(spec.n_per_class, spec.classes);
  if (spec.d_in < 2) throw BadConfig("d_in must be >= 2");
  if (!(spec.class_sep > 0.0)) throw BadConfig("class_sep must be > 0");
  if (!(spec.intra_sigma >= 0.0)) throw BadConfig("intra_sigma must be >= 0");

  Rng center_rng(splitmix64(seed ^ kCenterStream));
  Matrix centers(spec.classes, spec.d_in);
  for (int c = 0; c < spec.classes; ++c) {
    Vector g(spec.d_in);
    double norm = 0.0;
    while (!(norm > 1e-12)) {
      for (int k = 0; k < spec.d_in; ++k) g(k) = normal(center_rng, 1.0);
      norm = g.norm();
    }
    centers.row(c) = (spec.class_sep / norm) * g.transpose();
  }

  LabeledDataset ds;
  ds.mode = DataMode::kVector;
  ds.classes = spec.classes;
  ds.seed = seed;
  ds.sample_seed = sample_seed.value_or(seed);
  ds.origin = spec;
  ds.labels = class_major_labels(spec.n_per_class, spec.classes);
  ds.samples.resize(static_cast<Eigen::Index>(ds.labels.size()), spec.d_in);

  Rng sample_rng(splitmix64(ds.sample_seed ^ kSampleStream));
  for (Eigen::Index i = 0; i < ds.samples.rows(); ++i) {
    const int c = ds.labels[static_cast<std::size_t>(i)];
    for (int k = 0; k < spec.d_in; ++k) {
      ds.samples(i, k) = centers(c, k) + normal(sample_rng, spec.intra_sigma);
    }
  }
  return ds;
}

LabeledDataset generate_raster_dataset(const RasterSpec& spec, std::uint64_t texture_seed,
                                       std::optional<std::uint64_t> sample_seed) {
  check_counts(spec.n_per_class, spec.classes);
  const RasterShape& s = spec.shape;
  if (s.h < 4 || s.w < 4) throw BadConfig("raster h and w must be >= 4");
  if (s.channels < 1) throw BadConfig("raster channels must be >= 1");
  if (!(spec.noise_sigma >= 0.0)) throw BadConfig("noise_sigma must be >= 0");

  // Each class gets a distinct spatial frequency pair while they last, and
  // its own phase per channel.
  Rng tex_rng(splitmix64(texture_seed ^ kTextureStream));
  std::vector<std::pair<int, int>> freqs;
  for (int fy = 0; fy <= 3; ++fy) {
    for (int fx = 0; fx <= 3; ++fx) {
      if (fx != 0 || fy != 0) freqs.emplace_back(fx, fy);
    }
  }
  std::shuffle(freqs.begin(), freqs.end(), tex_rng);
  Matrix phases(spec.classes, s.channels);
  for (int c = 0; c < spec.classes; ++c) {
    for (int ch = 0; ch < s.channels; ++ch) phases(c, ch) = uniform(tex_rng, 0.0, 2.0 * std::numbers::pi);
  }

  const Eigen::Index d = s.flat_size();
  Matrix templates(spec.classes, d);
  for (int c = 0; c < spec.classes; ++c) {
    const auto [fx, fy] = freqs[static_cast<std::size_t>(c) % freqs.size()];
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const double arg = 2.0 * std::numbers::pi *
                           (static_cast<double>(fx) * x / s.w + static_cast<double>(fy) * y / s.h);
        for (int ch = 0; ch < s.channels; ++ch) {
          templates(c, pixel_index(s, y, x, ch)) = std::sin(arg + phases(c, ch));
        }
      }
    }
  }

  LabeledDataset ds;
  ds.mode = DataMode::kRaster;
  ds.classes = spec.classes;
  ds.seed = texture_seed;
  ds.sample_seed = sample_seed.value_or(texture_seed);
  ds.origin = spec;
  ds.labels = class_major_labels(spec.n_per_class, spec.classes);
  ds.samples.resize(static_cast<Eigen::Index>(ds.labels.size()), d);

  Rng sample_rng(splitmix64(ds.sample_seed ^ kSampleStream));
  for (Eigen::Index i = 0; i < ds.samples.rows(); ++i) {
    const int c = ds.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < d; ++k) {
      ds.samples(i, k) = templates(c, k) + normal(sample_rng, spec.noise_sigma);
    }
  }
  return ds;
}

LabeledDataset regenerate_held_out(const LabeledDataset& ds, std::uint64_t sample_seed,
                                   int size_multiplier) {
  if (size_multiplier < 1) throw BadConfig("size_multiplier must be >= 1");
  if (auto c = std::get_if<ClusterSpec>(&ds.origin)) {
    ClusterSpec spec = *c;
    spec.n_per_class *= size_multiplier;
    return generate_cluster_dataset(spec, ds.seed, sample_seed);
  }
  RasterSpec spec = std::get<RasterSpec>(ds.origin);
  spec.n_per_class *= size_multiplier;
  return generate_raster_dataset(spec, ds.seed, sample_seed);
}

void AugmentConfig::validate() const {
  if (!(noise_sigma >= 0.0)) throw BadConfig("noise_sigma must be >= 0");
  if (!(mask_prob >= 0.0 && mask_prob < 1.0)) throw BadConfig("mask_prob must be in [0, 1)");
  if (!(scale_min > 0.0 && scale_max >= scale_min && std::isfinite(scale_max))) {
    throw BadConfig("scale range must satisfy 0 < min <= max < inf");
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw BadConfig("flip_prob must be in [0, 1]");
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) {
    throw BadConfig("crop_fraction must be in (0, 1]");
  }
  if (!(channel_jitter_sigma >= 0.0)) throw BadConfig("channel_jitter_sigma must be >= 0");
}

AugmentConfig AugmentConfig::toy_defaults(std::optional<RasterShape> raster) {
  AugmentConfig cfg;
  cfg.noise_sigma = 0.3;
  cfg.scale_min = 0.8;
  cfg.scale_max = 1.2;
  cfg.mask_prob = 0.05;
  if (raster) {
    cfg.flip_prob = 0.5;
    cfg.crop_fraction = 0.75;
    cfg.channel_jitter_sigma = 0.1;
    cfg.raster = raster;
  }
  return cfg;
}

std::vector<std::size_t> interleaved_positive_map(std::size_t n_sources) {
  std::vector<std::size_t> positive_of(2 * n_sources);
  for (std::size_t v = 0; v < positive_of.size(); ++v) positive_of[v] = v ^ 1U;
  return positive_of;
}

ViewBatch augment_two_views(const Matrix& batch_samples, const AugmentConfig& cfg, Rng& rng) {
  if (batch_samples.rows() == 0) throw BadConfig("augment_two_views: empty batch");
  cfg.validate();
  if (cfg.raster && cfg.raster->flat_size() != batch_samples.cols()) {
    throw ShapeMismatch("augment_two_views: raster shape does not match sample width");
  }
  const auto n = static_cast<std::size_t>(batch_samples.rows());
  ViewBatch vb;
  vb.views.resize(static_cast<Eigen::Index>(2 * n), batch_samples.cols());
  vb.source_of.resize(2 * n);
  vb.positive_of = interleaved_positive_map(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vector src = batch_samples.row(static_cast<Eigen::Index>(k)).transpose();
    for (std::size_t view = 0; view < 2; ++view) {
      const std::size_t idx = 2 * k + view;
      vb.views.row(static_cast<Eigen::Index>(idx)) = augment_one(src, cfg, rng).transpose();
      vb.source_of[idx] = k;
    }
  }
  return vb;
}

std::vector<std::vector<std::size_t>> make_epoch_batches(std::size_t n_samples,
                                                         std::size_t batch_size, Rng& rng) {
  if (batch_size < 2) throw BadConfig("batch_size must be >= 2");
  std::vector<std::size_t> order(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n_samples; start += batch_size) {
    const std::size_t end = std::min(n_samples, start + batch_size);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  nlohmann::json header = {
      {"mode", ds.mode == DataMode::kVector ? "vector" : "raster"},
      {"n", ds.size()},
      {"d_in", ds.dim()},
      {"classes", ds.classes},
      {"seed", ds.seed},
      {"sample_seed", ds.sample_seed},
      {"generator", origin_to_json(ds.origin)},
  };
  std::string out;
  out.append(kDatasetMagic);
  out.push_back('\n');
  out.append(header.dump());
  out.push_back('\n');
  for (Eigen::Index i = 0; i < ds.samples.rows(); ++i) {
    for (Eigen::Index k = 0; k < ds.samples.cols(); ++k) detail::put_f64(out, ds.samples(i, k));
  }
  for (std::int32_t label : ds.labels) detail::put_i32(out, label);
  detail::write_file(path.string(), out);
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path.string());
  detail::ByteReader in(bytes);
  if (in.take_line() != kDatasetMagic) throw FormatError("not a FALSE-DS v1 file: " + path.string());

  LabeledDataset ds;
  std::int64_t n = 0;
  std::int64_t d = 0;
  try {
    const auto header = nlohmann::json::parse(in.take_line());
    const std::string mode = header.at("mode").get<std::string>();
    n = header.at("n").get<std::int64_t>();
    d = header.at("d_in").get<std::int64_t>();
    ds.classes = header.at("classes").get<int>();
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.sample_seed = header.value("sample_seed", ds.seed);
    const auto& gen = header.at("generator");
    if (mode == "vector") {
      ds.mode = DataMode::kVector;
      ds.origin = ClusterSpec{gen.at("n_per_class").get<int>(), gen.at("classes").get<int>(),
                              gen.at("d_in").get<int>(), gen.at("class_sep").get<double>(),
                              gen.at("intra_sigma").get<double>()};
    } else if (mode == "raster") {
      ds.mode = DataMode::kRaster;
      ds.origin = RasterSpec{gen.at("n_per_class").get<int>(), gen.at("classes").get<int>(),
                             RasterShape{gen.at("h").get<int>(), gen.at("w").get<int>(),
                                         gen.at("channels").get<int>()},
                             gen.at("noise_sigma").get<double>()};
    } else {
      throw FormatError("unknown dataset mode: " + mode);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset header: ") + e.what());
  }
  if (n < 0 || d < 0) throw FormatError("negative dataset dimensions");
  const auto expected = static_cast<std::size_t>(n) * static_cast<std::size_t>(d) * 8 +
                        static_cast<std::size_t>(n) * 4;
  if (in.remaining() != expected) {
    throw FormatError("dataset payload length mismatch: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(in.remaining()));
  }
  ds.samples.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) ds.samples(i, k) = in.f64();
  }
  ds.labels.resize(static_cast<std::size_t>(n));
  for (auto& label : ds.labels) label = in.i32();
  return ds;
}

}  // namespace falsecl
