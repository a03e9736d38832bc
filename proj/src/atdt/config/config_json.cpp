#include "atdt/config/config_json.hpp"

#include <fstream>

#include "atdt/common/error.hpp"
#include "atdt/common/rng.hpp"

namespace atdt::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Rejects unknown keys so config typos fail loudly.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }
  ~StrictObject() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  void finish() {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

scenegen::CountRange range_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2)
    throw ConfigError(where + ": expected [lo, hi]");
  return {j[0].get<int>(), j[1].get<int>()};
}

void zpair_from(const json& j, const std::string& where, double& lo, double& hi) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected [lo, hi]");
  lo = j[0].get<double>();
  hi = j[1].get<double>();
}

scenegen::GrammarConfig grammar_from_json(const json& j, const std::string& where) {
  scenegen::GrammarConfig g;
  StrictObject o(j, where);
  if (o.has("buildings")) g.buildings = range_from(o.at("buildings"), where + ".buildings");
  if (o.has("vehicles")) g.vehicles = range_from(o.at("vehicles"), where + ".vehicles");
  if (o.has("poles")) g.poles = range_from(o.at("poles"), where + ".poles");
  if (o.has("signs")) g.signs = range_from(o.at("signs"), where + ".signs");
  if (o.has("building_z")) zpair_from(o.at("building_z"), where, g.building_z_lo, g.building_z_hi);
  if (o.has("vehicle_z")) zpair_from(o.at("vehicle_z"), where, g.vehicle_z_lo, g.vehicle_z_hi);
  if (o.has("pole_z")) zpair_from(o.at("pole_z"), where, g.pole_z_lo, g.pole_z_hi);
  if (o.has("sign_z")) zpair_from(o.at("sign_z"), where, g.sign_z_lo, g.sign_z_hi);
  o.finish();
  return g;
}

ordered_json grammar_to_json(const scenegen::GrammarConfig& g) {
  ordered_json j;
  j["buildings"] = {g.buildings.lo, g.buildings.hi};
  j["vehicles"] = {g.vehicles.lo, g.vehicles.hi};
  j["poles"] = {g.poles.lo, g.poles.hi};
  j["signs"] = {g.signs.lo, g.signs.hi};
  j["building_z"] = {g.building_z_lo, g.building_z_hi};
  j["vehicle_z"] = {g.vehicle_z_lo, g.vehicle_z_hi};
  j["pole_z"] = {g.pole_z_lo, g.pole_z_hi};
  j["sign_z"] = {g.sign_z_lo, g.sign_z_hi};
  return j;
}

std::array<double, 3> rgb_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [r, g, b]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

scenegen::DomainStyle style_from_json(const json& j, const std::string& where,
                                      const scenegen::DomainStyle& defaults) {
  scenegen::DomainStyle s = defaults;
  StrictObject o(j, where);
  if (o.has("palette_shift")) {
    StrictObject shifts(o.at("palette_shift"), where + ".palette_shift");
    for (int c = 0; c < scenegen::kNumClasses; ++c) {
      const std::string key = scenegen::class_name(c);
      if (shifts.has(key))
        s.palette_shift[c] = rgb_from(shifts.at(key), where + ".palette_shift." + key);
    }
    shifts.finish();
  }
  o.get("texture_amplitude", s.texture_amplitude);
  if (o.has("tint")) s.tint = rgb_from(o.at("tint"), where + ".tint");
  o.get("noise_sigma", s.noise_sigma);
  o.finish();
  return s;
}

ordered_json style_to_json(const scenegen::DomainStyle& s) {
  ordered_json j;
  ordered_json shifts;
  for (int c = 0; c < scenegen::kNumClasses; ++c)
    shifts[scenegen::class_name(c)] = s.palette_shift[c];
  j["palette_shift"] = shifts;
  j["texture_amplitude"] = s.texture_amplitude;
  j["tint"] = s.tint;
  j["noise_sigma"] = s.noise_sigma;
  return j;
}

scenegen::DatasetConfig dataset_from_json(const json& j) {
  scenegen::DatasetConfig d;
  StrictObject o(j, "dataset");
  o.get("n_train", d.n_train);
  o.get("n_val", d.n_val);
  o.get("n_test", d.n_test);
  o.get("height", d.height);
  o.get("width", d.width);
  o.get("paired", d.paired);
  if (o.has("grammar")) d.grammar = grammar_from_json(o.at("grammar"), "dataset.grammar");
  if (o.has("style_a")) d.style_a = style_from_json(o.at("style_a"), "dataset.style_a", d.style_a);
  if (o.has("style_b")) d.style_b = style_from_json(o.at("style_b"), "dataset.style_b", d.style_b);
  if (o.has("proxy")) {
    StrictObject p(o.at("proxy"), "dataset.proxy");
    p.get("noise_sigma", d.proxy.noise_sigma);
    p.get("hole_fraction", d.proxy.hole_fraction);
    p.finish();
  }
  o.finish();
  d.style_a.domain = scenegen::Domain::kA;
  d.style_b.domain = scenegen::Domain::kB;
  return d;
}

ordered_json dataset_to_json(const scenegen::DatasetConfig& d) {
  ordered_json j;
  j["n_train"] = d.n_train;
  j["n_val"] = d.n_val;
  j["n_test"] = d.n_test;
  j["height"] = d.height;
  j["width"] = d.width;
  j["paired"] = d.paired;
  j["grammar"] = grammar_to_json(d.grammar);
  j["style_a"] = style_to_json(d.style_a);
  j["style_b"] = style_to_json(d.style_b);
  j["proxy"] = {{"noise_sigma", d.proxy.noise_sigma}, {"hole_fraction", d.proxy.hole_fraction}};
  return j;
}

training::TrainConfig train_from_json(const json& j, const std::string& where,
                                      const training::TrainConfig& defaults) {
  training::TrainConfig t = defaults;
  StrictObject o(j, where);
  o.get("steps", t.steps);
  o.get("batch_size", t.batch_size);
  o.get("lr", t.lr);
  o.get("eval_every", t.eval_every);
  o.finish();
  return t;
}

ordered_json train_to_json(const training::TrainConfig& t) {
  ordered_json j;
  j["steps"] = t.steps;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.lr;
  j["eval_every"] = t.eval_every;
  return j;
}

}  // namespace

pipeline::ExperimentPlan plan_from_json(const json& j) {
  pipeline::ExperimentPlan p;
  p.train_g.steps = 1000;  // default G budget differs from the task networks
  StrictObject root(j, "config");
  root.get("name", p.name);
  root.get("master_seed", p.master_seed);
  if (root.has("dataset")) p.dataset = dataset_from_json(root.at("dataset"));
  if (root.has("plan")) {
    StrictObject o(root.at("plan"), "plan");
    if (o.has("direction")) p.direction = pipeline::direction_from_name(o.at("direction").get<std::string>());
    o.get("split_level", p.split_level);
    o.get("shared_encoder", p.shared_encoder);
    o.get("use_batchnorm", p.use_batchnorm);
    o.get("proxy_labels_on_b", p.proxy_labels_on_b);
    o.get("jobs", p.jobs);
    if (o.has("methods")) {
      p.methods.clear();
      for (const auto& m : o.at("methods")) {
        std::string name = m.get<std::string>();
        for (char& c : name)
          if (c == '-') c = '_';
        p.methods.insert(name);
      }
    }
    if (o.has("seeds")) {
      const json& s = o.at("seeds");
      p.seeds.clear();
      if (s.is_number_unsigned() || s.is_number_integer()) {
        const int n = s.get<int>();
        if (n < 1) throw ConfigError("plan.seeds: seed count must be >= 1");
        for (int i = 0; i < n; ++i)
          p.seeds.push_back(derive_seed(p.master_seed, "run.seed", static_cast<uint64_t>(i)));
      } else if (s.is_array()) {
        for (const auto& v : s) p.seeds.push_back(v.get<uint64_t>());
      } else {
        throw ConfigError("plan.seeds: expected a count or an array of seeds");
      }
    }
    if (o.has("train_n1")) p.train_n1 = train_from_json(o.at("train_n1"), "plan.train_n1", p.train_n1);
    if (o.has("train_n2")) p.train_n2 = train_from_json(o.at("train_n2"), "plan.train_n2", p.train_n2);
    if (o.has("train_g")) p.train_g = train_from_json(o.at("train_g"), "plan.train_g", p.train_g);
    o.finish();
  }
  root.finish();
  if (p.seeds.empty())
    for (int i = 0; i < 5; ++i)
      p.seeds.push_back(derive_seed(p.master_seed, "run.seed", static_cast<uint64_t>(i)));
  p.validate();
  return p;
}

ordered_json plan_to_json(const pipeline::ExperimentPlan& p) {
  ordered_json j;
  j["name"] = p.name;
  j["master_seed"] = p.master_seed;
  j["dataset"] = dataset_to_json(p.dataset);
  ordered_json plan;
  plan["direction"] = pipeline::direction_name(p.direction);
  plan["split_level"] = p.split_level;
  plan["shared_encoder"] = p.shared_encoder;
  plan["use_batchnorm"] = p.use_batchnorm;
  plan["proxy_labels_on_b"] = p.proxy_labels_on_b;
  plan["jobs"] = p.jobs;
  plan["methods"] = p.methods;
  plan["seeds"] = p.seeds;
  plan["train_n1"] = train_to_json(p.train_n1);
  plan["train_n2"] = train_to_json(p.train_n2);
  plan["train_g"] = train_to_json(p.train_g);
  j["plan"] = plan;
  return j;
}

pipeline::ExperimentPlan load_plan_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (j.is_object() && j.contains("config")) {
    // Run manifest: the resolved config is nested; the pinned seed wins.
    json cfg = j.at("config");
    if (j.contains("seed")) {
      cfg["plan"]["seeds"] = json::array({j.at("seed").get<uint64_t>()});
    }
    return plan_from_json(cfg);
  }
  return plan_from_json(j);
}

}  // namespace atdt::config
