#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "falsecl/data.hpp"
#include "falsecl/numerics.hpp"
#include "oracles.hpp"

using namespace falsecl;

TEST_CASE("cluster dataset generation") {
  SUBCASE("zero intra sigma collapses each class") {
    const auto ds = generate_cluster_dataset({5, 3, 4, 2.0, 0.0}, 1);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      const auto c = ds.labels[static_cast<std::size_t>(i)];
      CHECK(ds.samples.row(i) == ds.samples.row(c * 5));
    }
  }
  SUBCASE("seeded determinism") {
    const auto a = generate_cluster_dataset({}, 42);
    const auto b = generate_cluster_dataset({}, 42);
    CHECK(a.samples == b.samples);
    CHECK(a.labels == b.labels);
    CHECK(a.samples != generate_cluster_dataset({}, 43).samples);
  }
  SUBCASE("every class populated") {
    const auto ds = generate_cluster_dataset({3, 4, 2, 1.0, 1.0}, 9);
    CHECK(std::set<int>(ds.labels.begin(), ds.labels.end()).size() == 4);
    CHECK(ds.size() == 12);
  }
  SUBCASE("held-out draw keeps class structure") {
    const auto a = generate_cluster_dataset({20, 3, 6, 5.0, 0.0}, 3);
    const auto b = regenerate_held_out(a, 99);
    CHECK(a.samples == b.samples);  // zero noise: same centers
    const auto c = generate_cluster_dataset({20, 3, 6, 5.0, 1.0}, 3);
    CHECK(c.samples != regenerate_held_out(c, 99).samples);
  }
  SUBCASE("bad configs") {
    CHECK_THROWS_AS(generate_cluster_dataset({0, 3, 4, 1.0, 1.0}, 1), BadConfig);
    CHECK_THROWS_AS(generate_cluster_dataset({4, 1, 4, 1.0, 1.0}, 1), BadConfig);
    CHECK_THROWS_AS(generate_cluster_dataset({4, 3, 1, 1.0, 1.0}, 1), BadConfig);
    CHECK_THROWS_AS(generate_cluster_dataset({4, 3, 4, 0.0, 1.0}, 1), BadConfig);
    CHECK_THROWS_AS(generate_cluster_dataset({4, 3, 4, 1.0, -1.0}, 1), BadConfig);
  }
}

TEST_CASE("default toy dataset is separable under an exhaustive kNN oracle") {
  const auto ds = generate_cluster_dataset({64, 8, 32, 5.0, 1.0}, 0);
  const double acc = oracle::loo_knn_accuracy(ds.samples, ds.labels, 5);
  MESSAGE("raw-feature 5-NN accuracy: " << acc);
  CHECK(acc >= 0.9);
}

TEST_CASE("raster dataset generation") {
  SUBCASE("noise off makes same-class samples identical") {
    const auto ds = generate_raster_dataset({4, 3, {6, 5, 1}, 0.0}, 5);
    CHECK(ds.dim() == 30);
    CHECK(ds.samples.row(0) == ds.samples.row(3));
    CHECK(ds.samples.row(0) != ds.samples.row(4));
  }
  SUBCASE("determinism") {
    CHECK(generate_raster_dataset({}, 8).samples == generate_raster_dataset({}, 8).samples);
  }
  SUBCASE("raw pixels carry class signal") {
    const auto ds = generate_raster_dataset({}, 8);
    const double acc = oracle::loo_knn_accuracy(ds.samples, ds.labels, 5);
    MESSAGE("raster raw-pixel 5-NN accuracy: " << acc);
    CHECK(acc > 1.0 / ds.classes);
  }
  SUBCASE("bad configs") {
    CHECK_THROWS_AS(generate_raster_dataset({4, 3, {3, 8, 1}, 0.1}, 1), BadConfig);
    CHECK_THROWS_AS(generate_raster_dataset({4, 3, {8, 8, 0}, 0.1}, 1), BadConfig);
  }
}

TEST_CASE("augment_two_views") {
  Matrix src(3, 4);
  src << 1, 2, 3, 4, -1, 0, 2, 5, 0.5, 0.5, 0.5, 0.5;
  Rng rng(1);

  SUBCASE("identity config copies sources") {
    const ViewBatch vb = augment_two_views(src, AugmentConfig{}, rng);
    REQUIRE(vb.n_views() == 6);
    for (std::size_t v = 0; v < 6; ++v) {
      CHECK(vb.views.row(static_cast<Eigen::Index>(v)) == src.row(static_cast<Eigen::Index>(v / 2)));
    }
    CHECK(vb.positive_of == std::vector<std::size_t>{1, 0, 3, 2, 5, 4});
    // normalized views of one source have cosine 1
    const Matrix z = numerics::l2_normalize_rows(vb.views);
    CHECK(z.row(0).dot(z.row(1)) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("seeded noise is reproducible") {
    AugmentConfig cfg;
    cfg.noise_sigma = 0.1;
    Rng r1(5), r2(5);
    const ViewBatch a = augment_two_views(src, cfg, r1);
    const ViewBatch b = augment_two_views(src, cfg, r2);
    CHECK(a.views == b.views);
    CHECK(a.views.row(0) != a.views.row(1));
  }
  SUBCASE("pairing invariants under toy defaults") {
    const auto ds = generate_raster_dataset({3, 2, {6, 6, 2}, 0.2}, 4);
    const ViewBatch vb = augment_two_views(ds.samples, AugmentConfig::toy_defaults(ds.raster()), rng);
    for (std::size_t i = 0; i < vb.n_views(); ++i) {
      CHECK(vb.positive_of[vb.positive_of[i]] == i);
      CHECK(vb.positive_of[i] != i);
      CHECK(vb.source_of[vb.positive_of[i]] == vb.source_of[i]);
    }
  }
  SUBCASE("config validation") {
    AugmentConfig bad;
    bad.mask_prob = 1.0;
    CHECK_THROWS_AS(augment_two_views(src, bad, rng), BadConfig);
    bad = AugmentConfig{};
    bad.crop_fraction = 0.0;
    CHECK_THROWS_AS(augment_two_views(src, bad, rng), BadConfig);
    CHECK_THROWS_AS(augment_two_views(Matrix(0, 4), AugmentConfig{}, rng), BadConfig);
  }
}

TEST_CASE("raster flip is exact at probability one") {
  const auto ds = generate_raster_dataset({1, 2, {4, 4, 1}, 0.0}, 2);
  AugmentConfig cfg;
  cfg.flip_prob = 1.0;
  cfg.raster = ds.raster();
  Rng rng(0);
  const ViewBatch vb = augment_two_views(ds.samples.topRows(1), cfg, rng);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(vb.views(0, y * 4 + x) == ds.samples(0, y * 4 + 3 - x));
}

TEST_CASE("make_epoch_batches") {
  Rng rng(3);
  auto b = make_epoch_batches(10, 5, rng);
  REQUIRE(b.size() == 2);
  std::set<std::size_t> all;
  for (const auto& batch : b) all.insert(batch.begin(), batch.end());
  CHECK(all.size() == 10);

  b = make_epoch_batches(11, 5, rng);
  CHECK(b.size() == 2);
  CHECK(b[0].size() == 5);
  CHECK(b[1].size() == 5);

  b = make_epoch_batches(13, 5, rng);
  CHECK(b.size() == 3);  // a trailing batch of 3 is kept

  Rng r1(9), r2(9);
  CHECK(make_epoch_batches(50, 8, r1) == make_epoch_batches(50, 8, r2));
  CHECK_THROWS_AS(make_epoch_batches(10, 1, rng), BadConfig);
}

TEST_CASE("dataset file round trip is bit-exact") {
  const auto dir = std::filesystem::temp_directory_path() / "falsecl_test_data";
  std::filesystem::create_directories(dir);
  for (const auto& ds : {generate_cluster_dataset({7, 3, 5, 2.5, 0.7}, 17),
                         generate_raster_dataset({3, 4, {5, 4, 3}, 0.3}, 18, 4)}) {
    const auto path = dir / "ds.bin";
    save_dataset(ds, path);
    const auto back = load_dataset(path);
    CHECK(back.samples == ds.samples);
    CHECK(back.labels == ds.labels);
    CHECK(back.mode == ds.mode);
    CHECK(back.seed == ds.seed);
    CHECK(back.sample_seed == ds.sample_seed);
    CHECK(back.origin == ds.origin);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    CHECK(bytes.rfind("FALSE-DS v1\n", 0) == 0);
    std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(load_dataset(dir / "short.bin"), FormatError);
  }
  CHECK_THROWS_AS(load_dataset(dir / "missing.bin"), IoError);
}
