#include "atdt/scenegen/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "atdt/common/error.hpp"
#include "atdt/common/rng.hpp"
#include "atdt/scenegen/image_io.hpp"

namespace atdt::scenegen {
namespace fs = std::filesystem;

void DatasetConfig::validate() const {
  if (n_train < 0 || n_val < 0 || n_test < 0) throw ConfigError("dataset: negative split size");
  if (height < 32 || height > 128 || width < 32 || width > 128)
    throw ConfigError("dataset: resolution must be in [32,128]");
  if (!(proxy.noise_sigma >= 0.0)) throw ConfigError("dataset: proxy noise_sigma must be >= 0");
  if (!(proxy.hole_fraction >= 0.0 && proxy.hole_fraction < 0.5))
    throw ConfigError("dataset: proxy hole_fraction must be in [0, 0.5)");
  grammar.validate();
}

namespace {

std::vector<Sample> make_split(const DatasetConfig& cfg, const DomainStyle& style,
                               uint64_t master, const std::string& tag, int count) {
  std::vector<Sample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const uint64_t scene_seed = derive_seed(master, tag, static_cast<uint64_t>(i));
    const SceneSpec scene = generate_scene(scene_seed, cfg.grammar);
    out.push_back(render(scene, style, cfg.height, cfg.width));
  }
  return out;
}

}  // namespace

PairedDatasets build_dataset(const DatasetConfig& config, uint64_t seed) {
  config.validate();
  PairedDatasets d;
  const std::string a_prefix = "scene.A.";
  // Paired mode reuses A's seed streams for B so the scenes match exactly.
  const std::string b_prefix = config.paired ? "scene.A." : "scene.B.";
  d.a.train = make_split(config, config.style_a, seed, a_prefix + "train", config.n_train);
  d.a.val = make_split(config, config.style_a, seed, a_prefix + "val", config.n_val);
  d.a.test = make_split(config, config.style_a, seed, a_prefix + "test", config.n_test);
  d.b.train = make_split(config, config.style_b, seed, b_prefix + "train", config.n_train);
  d.b.val = make_split(config, config.style_b, seed, b_prefix + "val", config.n_val);
  d.b.test = make_split(config, config.style_b, seed, b_prefix + "test", config.n_test);
  return d;
}

namespace {

nlohmann::ordered_json style_json(const DomainStyle& s) {
  nlohmann::ordered_json j;
  j["domain"] = domain_name(s.domain);
  nlohmann::ordered_json shifts;
  for (int c = 0; c < kNumClasses; ++c) shifts[class_name(c)] = s.palette_shift[c];
  j["palette_shift"] = shifts;
  j["texture_amplitude"] = s.texture_amplitude;
  j["tint"] = s.tint;
  j["noise_sigma"] = s.noise_sigma;
  return j;
}

void write_split(const std::vector<Sample>& samples, const fs::path& dir,
                 nlohmann::ordered_json& seeds) {
  fs::create_directories(dir);
  seeds = nlohmann::ordered_json::array();
  char name[32];
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    std::snprintf(name, sizeof(name), "%05zu", i);
    write_ppm((dir / (std::string(name) + "_image.ppm")).string(), s.image);
    write_depth_pgm16((dir / (std::string(name) + "_depth.pgm")).string(), s.depth);
    write_pgm8((dir / (std::string(name) + "_labels.pgm")).string(), s.labels);
    write_pgm8((dir / (std::string(name) + "_mask.pgm")).string(), s.valid_mask, 255.0);
    seeds.push_back(s.scene_seed);
  }
}

}  // namespace

void write_dataset(const PairedDatasets& data, const DatasetConfig& config, uint64_t seed,
                   const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir + ": " + ec.message());

  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  manifest["resolution"] = {config.height, config.width};
  manifest["paired"] = config.paired;
  manifest["counts"] = {{"train", config.n_train}, {"val", config.n_val}, {"test", config.n_test}};
  manifest["styles"] = {{"A", style_json(config.style_a)}, {"B", style_json(config.style_b)}};

  const struct {
    const char* domain;
    const SplitSet* set;
  } domains[] = {{"A", &data.a}, {"B", &data.b}};
  for (const auto& [domain, set] : domains) {
    nlohmann::ordered_json seeds;
    write_split(set->train, root / domain / "train", seeds);
    manifest["scene_seeds"][domain]["train"] = seeds;
    write_split(set->val, root / domain / "val", seeds);
    manifest["scene_seeds"][domain]["val"] = seeds;
    write_split(set->test, root / domain / "test", seeds);
    manifest["scene_seeds"][domain]["test"] = seeds;
  }

  std::ofstream os(root / "manifest.json");
  if (!os) throw IoError("cannot write dataset manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

}  // namespace atdt::scenegen
