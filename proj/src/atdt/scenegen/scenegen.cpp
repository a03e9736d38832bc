#include "atdt/scenegen/scenegen.hpp"

#include <algorithm>
#include <cmath>

#include "atdt/common/error.hpp"
#include "atdt/common/rng.hpp"

namespace atdt::scenegen {
namespace {

constexpr double kRefRes = 64.0;

// Domain-neutral class albedos; instances jitter around these.
constexpr std::array<std::array<double, 3>, kNumClasses> kBaseAlbedo = {{
    {0.32, 0.34, 0.30},  // ground
    {0.62, 0.76, 0.92},  // sky
    {0.56, 0.50, 0.45},  // building
    {0.66, 0.16, 0.14},  // vehicle
    {0.44, 0.45, 0.48},  // pole
    {0.85, 0.74, 0.16},  // sign
}};

void check_range(const CountRange& r, const char* what) {
  if (r.lo < 0 || r.hi < r.lo)
    throw ConfigError(std::string("grammar: empty or negative count range for ") + what + " [" +
                      std::to_string(r.lo) + "," + std::to_string(r.hi) + "]");
}

void check_z(double lo, double hi, const char* what) {
  if (!(lo >= kDepthMin && hi <= kDepthMax && lo <= hi))
    throw ConfigError(std::string("grammar: bad depth bounds for ") + what);
}

std::array<double, 3> jittered_albedo(PrimitiveKind kind, Rng& rng, double amount) {
  std::array<double, 3> a = kBaseAlbedo[static_cast<int>(kind)];
  for (double& c : a) c = std::clamp(c + rng.uniform(-amount, amount), 0.0, 1.0);
  return a;
}

// Gaussian from two coordinate hashes (Box-Muller); order-independent.
double hash_gaussian(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  const double u1 = hash01(a, b, c, d);
  const double u2 = hash01(a ^ 0x5851f42dull, b, c, d);
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * M_PI * u2);
}

}  // namespace

const char* class_name(int id) {
  static const char* names[kNumClasses] = {"ground", "sky", "building", "vehicle", "pole", "sign"};
  return (id >= 0 && id < kNumClasses) ? names[id] : "?";
}

void GrammarConfig::validate() const {
  check_range(buildings, "buildings");
  check_range(vehicles, "vehicles");
  check_range(poles, "poles");
  check_range(signs, "signs");
  check_z(building_z_lo, building_z_hi, "buildings");
  check_z(vehicle_z_lo, vehicle_z_hi, "vehicles");
  check_z(pole_z_lo, pole_z_hi, "poles");
  check_z(sign_z_lo, sign_z_hi, "signs");
}

DomainStyle DomainStyle::default_a() {
  DomainStyle s;
  s.domain = Domain::kA;
  s.texture_amplitude = 0.02;
  s.noise_sigma = 0.005;
  return s;
}

DomainStyle DomainStyle::default_b() {
  DomainStyle s;
  s.domain = Domain::kB;
  // Dusk-like shift: different class palette, warm dim tint, stronger
  // texture and sensor noise. Geometry statistics are shared with A.
  s.palette_shift[0] = {0.10, 0.05, 0.00};    // ground -> brownish
  s.palette_shift[1] = {-0.25, -0.22, -0.10};  // sky -> darker
  s.palette_shift[2] = {-0.14, -0.10, -0.02};  // building
  s.palette_shift[3] = {-0.40, 0.22, 0.28};    // vehicle -> teal
  s.palette_shift[4] = {0.12, 0.10, 0.06};     // pole
  s.palette_shift[5] = {-0.30, -0.05, 0.45};   // sign -> blue
  s.texture_amplitude = 0.06;
  s.tint = {0.90, 0.82, 0.74};
  s.noise_sigma = 0.02;
  return s;
}

SceneSpec generate_scene(uint64_t seed, const GrammarConfig& grammar) {
  grammar.validate();
  SceneSpec scene;
  scene.seed = seed;
  Rng rng(derive_seed(seed, "scene"));

  scene.camera.height = rng.uniform(1.2, 1.8);
  scene.camera.focal_px = rng.uniform(58.0, 70.0);
  scene.camera.cx_px = kRefRes / 2.0 + rng.uniform(-1.5, 1.5);
  scene.camera.cy_px = kRefRes / 2.0 + rng.uniform(-1.5, 1.5);

  Primitive ground;
  ground.kind = PrimitiveKind::kGround;
  ground.albedo = jittered_albedo(PrimitiveKind::kGround, rng, 0.05);
  scene.primitives.push_back(ground);

  Primitive sky;
  sky.kind = PrimitiveKind::kSky;
  sky.albedo = jittered_albedo(PrimitiveKind::kSky, rng, 0.05);
  scene.primitives.push_back(sky);

  // Lateral bound keeps every primitive's anchor inside the frustum for the
  // narrowest camera in the grammar (focal 70px at 64 -> tan half-fov 0.457).
  auto lateral = [&rng](double z) { return rng.uniform(-0.42, 0.42) * z; };

  auto add = [&](PrimitiveKind kind, double z_lo, double z_hi, double w_lo, double w_hi,
                 double h_lo, double h_hi, double y_base) {
    Primitive p;
    p.kind = kind;
    p.z = rng.uniform(z_lo, z_hi);
    p.width = rng.uniform(w_lo, w_hi);
    p.height = rng.uniform(h_lo, h_hi);
    p.x = lateral(p.z);
    p.y = y_base < 0.0 ? rng.uniform(2.0, 2.8) + p.height / 2.0  // floating (signs)
                       : y_base + p.height / 2.0;                // grounded
    p.albedo = jittered_albedo(kind, rng, 0.08);
    scene.primitives.push_back(p);
  };

  const int nb = static_cast<int>(rng.uniform_int(grammar.buildings.lo, grammar.buildings.hi));
  const int nv = static_cast<int>(rng.uniform_int(grammar.vehicles.lo, grammar.vehicles.hi));
  const int np = static_cast<int>(rng.uniform_int(grammar.poles.lo, grammar.poles.hi));
  const int ns = static_cast<int>(rng.uniform_int(grammar.signs.lo, grammar.signs.hi));

  for (int i = 0; i < nb; ++i)
    add(PrimitiveKind::kBuilding, grammar.building_z_lo, grammar.building_z_hi, 3.0, 8.0, 4.0, 15.0, 0.0);
  for (int i = 0; i < nv; ++i)
    add(PrimitiveKind::kVehicle, grammar.vehicle_z_lo, grammar.vehicle_z_hi, 1.6, 2.6, 1.2, 1.8, 0.0);
  for (int i = 0; i < np; ++i)
    add(PrimitiveKind::kPole, grammar.pole_z_lo, grammar.pole_z_hi, 0.15, 0.30, 3.0, 6.0, 0.0);
  for (int i = 0; i < ns; ++i)
    add(PrimitiveKind::kSign, grammar.sign_z_lo, grammar.sign_z_hi, 0.5, 0.9, 0.5, 0.9, -1.0);

  return scene;
}

Sample render(const SceneSpec& scene, const DomainStyle& style, int height, int width) {
  if (height < 32 || height > 128 || width < 32 || width > 128)
    throw ConfigError("render: resolution must be in [32,128]");

  const double f = scene.camera.focal_px * width / kRefRes;
  const double cx = scene.camera.cx_px * width / kRefRes;
  const double cy = scene.camera.cy_px * height / kRefRes;
  const double hcam = scene.camera.height;

  std::vector<double> image(static_cast<size_t>(3) * height * width);
  std::vector<double> depth(static_cast<size_t>(height) * width);
  std::vector<double> labels(static_cast<size_t>(height) * width);

  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const double dx = (u + 0.5 - cx) / f;
      const double dy = (cy - (v + 0.5)) / f;

      double best_z = kDepthMax;
      const Primitive* best = &scene.primitives[1];  // sky
      // Ground plane, culled at the far plane.
      if (dy < 0.0) {
        const double zg = std::max(hcam / -dy, kDepthMin);
        if (zg < best_z) {
          best_z = zg;
          best = &scene.primitives[0];
        }
      }
      for (size_t pi = 2; pi < scene.primitives.size(); ++pi) {
        const Primitive& p = scene.primitives[pi];
        if (p.z >= best_z) continue;
        const double xw = dx * p.z;
        const double yw = hcam + dy * p.z;
        const double rx = (xw - p.x) / (p.width / 2.0);
        const double ry = (yw - p.y) / (p.height / 2.0);
        bool hit;
        if (p.kind == PrimitiveKind::kSign) {
          hit = std::abs(rx) + std::abs(ry) <= 1.0;  // diamond silhouette
        } else {
          hit = std::abs(rx) <= 1.0 && std::abs(ry) <= 1.0;
        }
        if (hit) {
          best_z = p.z;
          best = &p;
        }
      }

      const int cls = static_cast<int>(best->kind);
      const int64_t px = static_cast<int64_t>(v) * width + u;
      depth[px] = best_z;
      labels[px] = cls;

      std::array<double, 3> albedo = best->albedo;
      if (best->kind == PrimitiveKind::kVehicle) {
        // Window band across the upper body.
        const double yw = hcam + dy * best->z;
        const double frac = (yw - (best->y - best->height / 2.0)) / best->height;
        if (frac > 0.55 && frac < 0.9)
          for (double& c0 : albedo) c0 *= 0.45;
      }
      for (int c0 = 0; c0 < 3; ++c0)
        albedo[c0] = std::clamp(albedo[c0] + style.palette_shift[cls][c0], 0.0, 1.0);

      double shade;
      if (best->kind == PrimitiveKind::kSky) {
        shade = 1.0 - 0.15 * (v + 0.5) / height;
      } else {
        shade = 1.0 - 0.45 * best_z / kDepthMax;
      }
      const double tex =
          style.texture_amplitude *
          (hash01(scene.seed, 0x7e87a51bull + cls, static_cast<uint64_t>(u >> 2), static_cast<uint64_t>(v >> 2)) -
           0.5);
      for (int c0 = 0; c0 < 3; ++c0) {
        const double noise =
            style.noise_sigma == 0.0
                ? 0.0
                : style.noise_sigma * hash_gaussian(scene.seed, 0x11edc4f3ull + c0,
                                                    static_cast<uint64_t>(u), static_cast<uint64_t>(v));
        const double val = albedo[c0] * shade * style.tint[c0] + tex + noise;
        image[static_cast<size_t>(c0) * height * width + px] = std::clamp(val, 0.0, 1.0);
      }
    }
  }

  Sample s;
  s.image = Tensor::from_vector({3, height, width}, std::move(image));
  s.depth = Tensor::from_vector({1, height, width}, std::move(depth));
  s.labels = Tensor::from_vector({1, height, width}, std::move(labels));
  s.valid_mask = Tensor::full({1, height, width}, 1.0);
  s.domain = style.domain;
  s.scene_seed = scene.seed;
  return s;
}

Sample make_proxy_depth(const Sample& sample, double noise_sigma, double hole_fraction,
                        uint64_t seed) {
  if (!(hole_fraction >= 0.0 && hole_fraction < 0.5))
    throw ConfigError("make_proxy_depth: hole_fraction must be in [0, 0.5)");
  const int height = sample.depth.shape()[1];
  const int width = sample.depth.shape()[2];

  Sample out;
  out.image = sample.image;
  out.labels = sample.labels;
  out.domain = sample.domain;
  out.scene_seed = sample.scene_seed;

  // Multiplicative noise + disparity quantization (1/8-step, disp = 640/z).
  // noise_sigma == 0 switches the noise model off entirely: the depth map is
  // returned bit-identical.
  constexpr double kDispScale = 640.0;
  std::vector<double> depth = sample.depth.data();
  if (noise_sigma > 0.0) {
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        double z = depth[static_cast<size_t>(v) * width + u];
        z *= 1.0 + noise_sigma * hash_gaussian(seed, 0x9d2c5680ull, static_cast<uint64_t>(u),
                                               static_cast<uint64_t>(v));
        z = std::clamp(z, kDepthMin, kDepthMax);
        const double disp = std::round(kDispScale / z * 8.0) / 8.0;
        z = std::clamp(kDispScale / disp, kDepthMin, kDepthMax);
        depth[static_cast<size_t>(v) * width + u] = z;
      }
    }
  }
  out.depth = Tensor::from_vector({1, height, width}, std::move(depth));

  // Clustered holes: random discs, trimmed in scan order to land exactly on
  // the requested count.
  std::vector<double> mask = sample.valid_mask.data();
  const int64_t target = std::llround(hole_fraction * height * width);
  int64_t holes = 0;
  for (auto m : mask)
    if (m == 0.0) ++holes;
  Rng rng(derive_seed(seed, "proxy.holes"));
  while (holes < target) {
    const int cu = static_cast<int>(rng.uniform_int(0, width - 1));
    const int cv = static_cast<int>(rng.uniform_int(0, height - 1));
    const int r = static_cast<int>(rng.uniform_int(2, 5));
    for (int v = std::max(0, cv - r); v <= std::min(height - 1, cv + r) && holes < target; ++v) {
      for (int u = std::max(0, cu - r); u <= std::min(width - 1, cu + r) && holes < target; ++u) {
        if ((v - cv) * (v - cv) + (u - cu) * (u - cu) > r * r) continue;
        double& m = mask[static_cast<size_t>(v) * width + u];
        if (m != 0.0) {
          m = 0.0;
          ++holes;
        }
      }
    }
  }
  out.valid_mask = Tensor::from_vector({1, height, width}, std::move(mask));
  return out;
}

}  // namespace atdt::scenegen
