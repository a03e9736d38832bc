#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "atdt/common/error.hpp"
#include "atdt/scenegen/dataset.hpp"
#include "atdt/scenegen/image_io.hpp"
#include "atdt/scenegen/scenegen.hpp"
#include "testutil.hpp"

using namespace atdt;
using namespace atdt::scenegen;

TEST_CASE("generate_scene: identical seeds give identical scenes") {
  GrammarConfig grammar;
  const SceneSpec a = generate_scene(42, grammar);
  const SceneSpec b = generate_scene(42, grammar);
  REQUIRE(a.primitives.size() == b.primitives.size());
  for (size_t i = 0; i < a.primitives.size(); ++i) {
    CHECK(a.primitives[i].kind == b.primitives[i].kind);
    CHECK(a.primitives[i].x == b.primitives[i].x);
    CHECK(a.primitives[i].z == b.primitives[i].z);
    CHECK(a.primitives[i].albedo == b.primitives[i].albedo);
  }
  CHECK(a.camera.height == b.camera.height);
}

TEST_CASE("generate_scene: empty grammar leaves only ground and sky") {
  GrammarConfig grammar;
  grammar.buildings = {0, 0};
  grammar.vehicles = {0, 0};
  grammar.poles = {0, 0};
  grammar.signs = {0, 0};
  const SceneSpec s = generate_scene(7, grammar);
  REQUIRE(s.primitives.size() == 2);
  CHECK(s.primitives[0].kind == PrimitiveKind::kGround);
  CHECK(s.primitives[1].kind == PrimitiveKind::kSky);
}

TEST_CASE("generate_scene: counts within ranges and anchors inside the frustum") {
  GrammarConfig grammar;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const SceneSpec s = generate_scene(seed, grammar);
    int counts[kNumClasses] = {};
    for (const auto& p : s.primitives) ++counts[static_cast<int>(p.kind)];
    CHECK(counts[0] == 1);
    CHECK(counts[1] == 1);
    CHECK(counts[2] >= grammar.buildings.lo);
    CHECK(counts[2] <= grammar.buildings.hi);
    CHECK(counts[4] >= grammar.poles.lo);
    CHECK(counts[4] <= grammar.poles.hi);
    for (size_t i = 2; i < s.primitives.size(); ++i) {
      const auto& p = s.primitives[i];
      CHECK(std::abs(p.x) <= 0.42 * p.z + 1e-12);  // lateral anchor visible
      CHECK(p.z >= kDepthMin);
      CHECK(p.z <= kDepthMax);
    }
  }
}

TEST_CASE("generate_scene: degenerate count range is a config error") {
  GrammarConfig grammar;
  grammar.poles = {3, 1};
  CHECK_THROWS_AS(generate_scene(1, grammar), ConfigError);
}

TEST_CASE("class census over 1000 seeds: every class in >=5% of scenes, >=1% of pixels") {
  GrammarConfig grammar;
  const DomainStyle style = DomainStyle::default_a();
  int scenes_with[kNumClasses] = {};
  int64_t pixels[kNumClasses] = {};
  int64_t total_pixels = 0;
  const int kScenes = 1000;
  for (uint64_t seed = 0; seed < kScenes; ++seed) {
    const SceneSpec spec = generate_scene(seed, grammar);
    const Sample s = render(spec, style, 64, 64);
    bool seen[kNumClasses] = {};
    for (double v : s.labels.data()) {
      const int c = static_cast<int>(v);
      seen[c] = true;
      ++pixels[c];
      ++total_pixels;
    }
    for (int c = 0; c < kNumClasses; ++c) scenes_with[c] += seen[c];
  }
  for (int c = 0; c < kNumClasses; ++c) {
    CAPTURE(class_name(c));
    CHECK(scenes_with[c] >= kScenes / 20);  // 5% of scenes
    CHECK(static_cast<double>(pixels[c]) / static_cast<double>(total_pixels) >= 0.01);
  }
}

TEST_CASE("render: occlusion picks the nearer primitive") {
  SceneSpec scene;
  scene.seed = 1;
  scene.camera = {1.5, 64.0, 32.0, 32.0};
  Primitive ground{PrimitiveKind::kGround};
  ground.albedo = {0.3, 0.3, 0.3};
  Primitive sky{PrimitiveKind::kSky};
  sky.albedo = {0.6, 0.7, 0.9};
  Primitive building{PrimitiveKind::kBuilding, 0.0, 5.0, 20.0, 5.0, 10.0, {0.5, 0.5, 0.5}};
  Primitive vehicle{PrimitiveKind::kVehicle, 0.0, 1.0, 8.0, 2.4, 2.0, {0.7, 0.1, 0.1}};
  scene.primitives = {ground, sky, building, vehicle};
  const Sample s = render(scene, DomainStyle::default_a(), 64, 64);

  // The vehicle projects inside the building's footprint; overlapped pixels
  // must be labeled vehicle at the vehicle's depth.
  bool found_overlap = false;
  for (int v = 0; v < 64; ++v) {
    for (int u = 0; u < 64; ++u) {
      const double dx = (u + 0.5 - 32.0) / 64.0, dy = (32.0 - (v + 0.5)) / 64.0;
      const double xb = dx * 20.0, yb = 1.5 + dy * 20.0;
      const double xv = dx * 8.0, yv = 1.5 + dy * 8.0;
      const bool in_building = std::abs(xb - 0.0) <= 2.5 && std::abs(yb - 5.0) <= 5.0;
      const bool in_vehicle = std::abs(xv - 0.0) <= 1.2 && std::abs(yv - 1.0) <= 1.0;
      const int64_t px = static_cast<int64_t>(v) * 64 + u;
      if (in_building && in_vehicle) {
        found_overlap = true;
        CHECK(s.labels.data()[px] == static_cast<double>(PrimitiveKind::kVehicle));
        CHECK(s.depth.data()[px] == 8.0);
      }
    }
  }
  CHECK(found_overlap);
}

TEST_CASE("render: style changes the image but never depth or labels") {
  GrammarConfig grammar;
  const SceneSpec scene = generate_scene(99, grammar);
  const Sample a = render(scene, DomainStyle::default_a(), 64, 64);
  const Sample b = render(scene, DomainStyle::default_b(), 64, 64);
  CHECK(a.depth.data() == b.depth.data());
  CHECK(a.labels.data() == b.labels.data());
  CHECK(a.image.data() != b.image.data());
  for (double v : a.image.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("render: pinhole projection sizes a known primitive correctly") {
  SceneSpec scene;
  scene.seed = 5;
  scene.camera = {1.5, 64.0, 32.0, 32.0};
  Primitive ground{PrimitiveKind::kGround};
  Primitive sky{PrimitiveKind::kSky};
  Primitive building{PrimitiveKind::kBuilding, 0.0, 5.0, 20.0, 5.0, 10.0, {0.5, 0.5, 0.5}};
  scene.primitives = {ground, sky, building};
  const Sample s = render(scene, DomainStyle::default_a(), 64, 64);

  // Expected on-screen width: focal * size / depth = 64 * 5 / 20 = 16 px.
  int min_u = 64, max_u = -1;
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 64; ++u)
      if (s.labels.data()[static_cast<int64_t>(v) * 64 + u] ==
          static_cast<double>(PrimitiveKind::kBuilding)) {
        min_u = std::min(min_u, u);
        max_u = std::max(max_u, u);
      }
  const int width_px = max_u - min_u + 1;
  CHECK(width_px >= 15);
  CHECK(width_px <= 17);
}

TEST_CASE("make_proxy_depth: structured noise and hole accounting") {
  GrammarConfig grammar;
  const SceneSpec scene = generate_scene(123, grammar);
  const Sample s = render(scene, DomainStyle::default_a(), 64, 64);

  SUBCASE("sigma=0, holes=0 is the identity") {
    const Sample p = make_proxy_depth(s, 0.0, 0.0, 7);
    CHECK(p.depth.data() == s.depth.data());
    for (double v : p.valid_mask.data()) CHECK(v == 1.0);
  }

  SUBCASE("hole_fraction=0.2 masks 20% +- 2%") {
    const Sample p = make_proxy_depth(s, 0.0, 0.2, 7);
    double sum = 0.0;
    for (double v : p.valid_mask.data()) sum += v;
    CHECK(sum / p.valid_mask.numel() == doctest::Approx(0.8).epsilon(0.025));
  }

  SUBCASE("sigma=0.05 lands near the half-normal expectation of Abs Rel") {
    // E|N(1,s)-1| = s*sqrt(2/pi) ~ 0.0399; averaged over many samples.
    double abs_rel_sum = 0.0;
    int64_t n = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
      const SceneSpec sp = generate_scene(seed + 500, grammar);
      const Sample clean = render(sp, DomainStyle::default_a(), 64, 64);
      const Sample noisy = make_proxy_depth(clean, 0.05, 0.0, seed);
      for (int64_t i = 0; i < clean.depth.numel(); ++i) {
        abs_rel_sum +=
            std::abs(noisy.depth.data()[i] - clean.depth.data()[i]) / clean.depth.data()[i];
        ++n;
      }
    }
    CHECK(abs_rel_sum / n == doctest::Approx(0.05 * std::sqrt(2.0 / M_PI)).epsilon(0.12));
  }

  SUBCASE("labels and image are untouched") {
    const Sample p = make_proxy_depth(s, 0.1, 0.3, 9);
    CHECK(p.labels.data() == s.labels.data());
    CHECK(p.image.data() == s.image.data());
  }
}

TEST_CASE("build_dataset: counts, determinism, split/domain disjointness") {
  DatasetConfig cfg;
  cfg.n_train = 12;
  cfg.n_val = 5;
  cfg.n_test = 4;
  const PairedDatasets d1 = build_dataset(cfg, 77);
  const PairedDatasets d2 = build_dataset(cfg, 77);
  CHECK(d1.a.train.size() == 12);
  CHECK(d1.a.val.size() == 5);
  CHECK(d1.b.test.size() == 4);
  CHECK(d1.a.train[3].image.data() == d2.a.train[3].image.data());
  CHECK(d1.b.val[1].depth.data() == d2.b.val[1].depth.data());

  std::set<uint64_t> seeds_a, seeds_b;
  for (const auto& s : d1.a.train) seeds_a.insert(s.scene_seed);
  for (const auto& s : d1.a.val) seeds_a.insert(s.scene_seed);
  for (const auto& s : d1.a.test) seeds_a.insert(s.scene_seed);
  for (const auto& s : d1.b.train) seeds_b.insert(s.scene_seed);
  for (const auto& s : d1.b.val) seeds_b.insert(s.scene_seed);
  for (const auto& s : d1.b.test) seeds_b.insert(s.scene_seed);
  CHECK(seeds_a.size() == 21);  // splits disjoint within the domain
  for (uint64_t s : seeds_b) CHECK_FALSE(seeds_a.count(s));

  DatasetConfig paired = cfg;
  paired.paired = true;
  const PairedDatasets dp = build_dataset(paired, 77);
  CHECK(dp.a.train[0].scene_seed == dp.b.train[0].scene_seed);
  CHECK(dp.a.train[0].depth.data() == dp.b.train[0].depth.data());
}

TEST_CASE("image io: round-trips and 16-bit depth scaling") {
  testutil::TempDir tmp("imgio");
  GrammarConfig grammar;
  const Sample s = render(generate_scene(11, grammar), DomainStyle::default_a(), 32, 32);

  const std::string ppm = (tmp.path() / "img.ppm").string();
  write_ppm(ppm, s.image);
  const Tensor img = read_ppm(ppm);
  REQUIRE(img.shape() == s.image.shape());
  for (size_t i = 0; i < img.data().size(); ++i)
    CHECK(std::abs(img.data()[i] - s.image.data()[i]) <= 0.5 / 255.0 + 1e-12);

  const std::string pgm = (tmp.path() / "depth.pgm").string();
  write_depth_pgm16(pgm, s.depth);
  const Tensor depth = read_depth_pgm16(pgm);
  for (size_t i = 0; i < depth.data().size(); ++i)
    CHECK(std::abs(depth.data()[i] - s.depth.data()[i]) <= 0.5 / 655.35 + 1e-12);

  // Big-endian 16-bit payload, spot-checked against the header bytes.
  std::ifstream is(pgm, std::ios::binary);
  std::string header;
  std::getline(is, header);
  CHECK(header == "P5");
}

TEST_CASE("dataset on disk: layout and byte determinism") {
  testutil::TempDir tmp("dataset");
  DatasetConfig cfg;
  cfg.n_train = 3;
  cfg.n_val = 2;
  cfg.n_test = 1;
  const auto data = build_dataset(cfg, 5);
  write_dataset(data, cfg, 5, tmp.str() + "/d1");
  write_dataset(data, cfg, 5, tmp.str() + "/d2");

  namespace fs = std::filesystem;
  CHECK(fs::exists(tmp.path() / "d1/manifest.json"));
  CHECK(fs::exists(tmp.path() / "d1/A/train/00000_image.ppm"));
  CHECK(fs::exists(tmp.path() / "d1/B/test/00000_depth.pgm"));
  int train_images = 0;
  for (const auto& e : fs::directory_iterator(tmp.path() / "d1/A/train"))
    train_images += e.path().string().find("_image.ppm") != std::string::npos;
  CHECK(train_images == 3);

  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(tmp.path() / "d1/A/train/00001_image.ppm") ==
        slurp(tmp.path() / "d2/A/train/00001_image.ppm"));
  CHECK(slurp(tmp.path() / "d1/manifest.json") == slurp(tmp.path() / "d2/manifest.json"));
}
