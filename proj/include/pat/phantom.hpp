#pragma once

#include <cstdint>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {

struct SpherePhantomSpec {
  std::vector<int64_t> extents;
  int64_t count_min = 25;
  int64_t count_max = 50;
  double radius_min = 5.0;
  double radius_max = 10.0;
  double magnitude_min = 1.0;
  double magnitude_max = 5.0;
  int64_t smoothing_width = 5;
};

struct VesselPhantomSpec {
  std::vector<int64_t> extents;
  int64_t branches_min = 2;
  int64_t branches_max = 3;
  double radius_min = 1.0;
  double radius_max = 1.8;
  int64_t steps_min = 18;
  int64_t steps_max = 40;
  double curl = 0.3;  // stddev of the per-step direction jitter
  double magnitude_min = 1.0;
  double magnitude_max = 5.0;
  int64_t smoothing_width = 3;
};

void validate_sphere_spec(const SpherePhantomSpec& spec);
void validate_vessel_spec(const VesselPhantomSpec& spec);

struct SphereDraw {
  std::vector<double> center;
  double radius = 0.0;
  double magnitude = 0.0;
};

// The raw random draws behind gen_spheres, exposed so range properties are
// testable without reverse-engineering the rasterization.
std::vector<SphereDraw> draw_spheres(const SpherePhantomSpec& spec, uint64_t seed);

// Rasterizes filled discs (2D) or spheres (3D), overlapping regions keeping
// the elementwise max, then box-smooths and normalizes so the maximum is
// exactly 1. All-zero results pass through unnormalized.
Tensor gen_spheres(const SpherePhantomSpec& spec, uint64_t seed);

// Branching random-walk tubes with per-branch radius and magnitude, smoothed
// and normalized like gen_spheres.
Tensor gen_vessels(const VesselPhantomSpec& spec, uint64_t seed);

// Rotates about the volume center (one angle in 2D, one per axis in 3D, in
// radians) with linear interpolation, reading zeros outside the volume, then
// crops at a seeded random valid offset. Multiples of 90 degrees are snapped
// so they need no interpolation.
Tensor augment_rotate_crop(const Tensor& volume, const std::vector<double>& angles,
                           const std::vector<int64_t>& crop_extents, uint64_t seed);

}  // namespace pat
