#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "atdt/tensor/tensor.hpp"

namespace atdt::scenegen {

enum class PrimitiveKind : int { kGround = 0, kSky = 1, kBuilding = 2, kVehicle = 3, kPole = 4, kSign = 5 };
constexpr int kNumClasses = 6;

constexpr double kDepthMin = 1.0;
constexpr double kDepthMax = 100.0;

const char* class_name(int id);

enum class Domain { kA, kB };
inline const char* domain_name(Domain d) { return d == Domain::kA ? "A" : "B"; }

// Upright billboard at constant camera depth. position = (x_center, y_center, z),
// size = (width, height) in world units; y is height above the ground plane.
// GROUND and SKY entries carry albedo only; their geometry fields are unused.
struct Primitive {
  PrimitiveKind kind;
  double x = 0.0, y = 0.0, z = 0.0;
  double width = 0.0, height = 0.0;
  std::array<double, 3> albedo{0, 0, 0};
};

// Pinhole camera on the +Z axis at `height` above the ground plane.
// focal_px and the principal point are expressed at a 64x64 reference
// resolution and scaled linearly when rendering other sizes.
struct Camera {
  double height = 1.5;
  double focal_px = 64.0;
  double cx_px = 32.0;
  double cy_px = 32.0;
};

struct SceneSpec {
  uint64_t seed = 0;
  Camera camera;
  std::vector<Primitive> primitives;  // always starts with GROUND, SKY
};

struct CountRange {
  int lo = 0, hi = 0;
};

// Primitive-count ranges and placement bounds for the procedural grammar.
struct GrammarConfig {
  CountRange buildings{1, 4};
  CountRange vehicles{1, 3};
  CountRange poles{1, 3};
  CountRange signs{1, 2};
  double building_z_lo = 8.0, building_z_hi = 60.0;
  double vehicle_z_lo = 4.0, vehicle_z_hi = 30.0;
  double pole_z_lo = 4.0, pole_z_hi = 40.0;
  double sign_z_lo = 4.0, sign_z_hi = 30.0;

  void validate() const;  // throws ConfigError
};

// Appearance-only domain parameters: never touch geometry, depth or labels.
struct DomainStyle {
  Domain domain = Domain::kA;
  std::array<std::array<double, 3>, kNumClasses> palette_shift{};  // per-class RGB offset
  double texture_amplitude = 0.0;
  std::array<double, 3> tint{1.0, 1.0, 1.0};
  double noise_sigma = 0.0;

  static DomainStyle default_a();
  static DomainStyle default_b();
};

// One rendered scene. image [3,H,W] in [0,1]; depth [1,H,W] world units with
// SKY pinned at kDepthMax; labels [1,H,W] class ids; valid_mask [1,H,W] in {0,1}.
struct Sample {
  Tensor image;
  Tensor depth;
  Tensor labels;
  Tensor valid_mask;
  Domain domain = Domain::kA;
  uint64_t scene_seed = 0;
};

// Deterministic in `seed`; primitive counts within the configured ranges and
// every primitive at least partly inside the default view frustum.
SceneSpec generate_scene(uint64_t seed, const GrammarConfig& grammar);

// Occlusion-correct z-buffer rasterization plus photometric styling.
Sample render(const SceneSpec& scene, const DomainStyle& style, int height, int width);

// Emulates confidence-filtered stereo depth: per-pixel multiplicative
// N(1, sigma^2) noise, disparity-step quantization, and clustered invalid
// blobs covering exactly round(hole_fraction*H*W) pixels. Image and labels
// are returned untouched.
Sample make_proxy_depth(const Sample& sample, double noise_sigma, double hole_fraction,
                        uint64_t seed);

}  // namespace atdt::scenegen
