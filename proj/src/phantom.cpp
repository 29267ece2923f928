#include "pat/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "pat/errors.hpp"
#include "pat/rng.hpp"

namespace pat {

namespace {

void check_extents(const std::vector<int64_t>& extents, const char* who) {
  if (extents.size() < 2 || extents.size() > 3)
    throw ConfigError(std::string(who) + ": extents must be 2D or 3D");
  for (int64_t e : extents)
    if (e < 4) throw ConfigError(std::string(who) + ": each extent must be at least 4");
}

// Stamps value over all cells within radius of center, keeping the max.
void stamp_ball(Tensor& img, const std::vector<double>& center, double radius, double value) {
  const auto& ext = img.shape();
  size_t nd = ext.size();
  std::vector<int64_t> lo(nd), hi(nd);
  for (size_t d = 0; d < nd; ++d) {
    lo[d] = std::max<int64_t>(0, static_cast<int64_t>(std::floor(center[d] - radius)));
    hi[d] = std::min<int64_t>(ext[d] - 1, static_cast<int64_t>(std::ceil(center[d] + radius)));
    if (lo[d] > hi[d]) return;
  }
  double r2 = radius * radius;
  if (nd == 2) {
    for (int64_t i = lo[0]; i <= hi[0]; ++i) {
      double dx = static_cast<double>(i) - center[0];
      for (int64_t j = lo[1]; j <= hi[1]; ++j) {
        double dy = static_cast<double>(j) - center[1];
        if (dx * dx + dy * dy <= r2) {
          double& cell = img[i * ext[1] + j];
          cell = std::max(cell, value);
        }
      }
    }
  } else {
    for (int64_t i = lo[0]; i <= hi[0]; ++i) {
      double dx = static_cast<double>(i) - center[0];
      for (int64_t j = lo[1]; j <= hi[1]; ++j) {
        double dy = static_cast<double>(j) - center[1];
        for (int64_t k = lo[2]; k <= hi[2]; ++k) {
          double dz = static_cast<double>(k) - center[2];
          if (dx * dx + dy * dy + dz * dz <= r2) {
            double& cell = img[(i * ext[1] + j) * ext[2] + k];
            cell = std::max(cell, value);
          }
        }
      }
    }
  }
}

Tensor smooth_and_normalize(Tensor img, int64_t smoothing_width) {
  if (smoothing_width > 1) img = box_filter(img, smoothing_width);
  double peak = img.max_value();
  if (peak > 0.0)
    for (int64_t i = 0; i < img.numel(); ++i) img[i] /= peak;
  return img;
}

}  // namespace

void validate_sphere_spec(const SpherePhantomSpec& spec) {
  check_extents(spec.extents, "SpherePhantomSpec");
  if (spec.count_min < 0 || spec.count_max < spec.count_min)
    throw ConfigError("SpherePhantomSpec: count range is empty");
  if (!(spec.radius_min > 0.0) || spec.radius_max < spec.radius_min)
    throw ConfigError("SpherePhantomSpec: radius range is empty or non-positive");
  int64_t min_extent = *std::min_element(spec.extents.begin(), spec.extents.end());
  if (spec.radius_max > static_cast<double>(min_extent) / 2.0)
    throw ConfigError("SpherePhantomSpec: max radius exceeds half the smallest extent");
  if (!(spec.magnitude_min > 0.0) || spec.magnitude_max < spec.magnitude_min)
    throw ConfigError("SpherePhantomSpec: magnitude range is empty or non-positive");
  if (spec.smoothing_width < 1 || spec.smoothing_width % 2 == 0)
    throw ConfigError("SpherePhantomSpec: smoothing width must be odd and positive");
}

void validate_vessel_spec(const VesselPhantomSpec& spec) {
  check_extents(spec.extents, "VesselPhantomSpec");
  if (spec.branches_min < 0 || spec.branches_max < spec.branches_min)
    throw ConfigError("VesselPhantomSpec: branch count range is empty");
  if (!(spec.radius_min >= 1.0) || spec.radius_max < spec.radius_min)
    throw ConfigError("VesselPhantomSpec: tube radius must be >= 1 cell");
  if (spec.steps_min < 1 || spec.steps_max < spec.steps_min)
    throw ConfigError("VesselPhantomSpec: step range is empty");
  if (!(spec.curl >= 0.0)) throw ConfigError("VesselPhantomSpec: curl must be >= 0");
  if (!(spec.magnitude_min > 0.0) || spec.magnitude_max < spec.magnitude_min)
    throw ConfigError("VesselPhantomSpec: magnitude range is empty or non-positive");
  if (spec.smoothing_width < 1 || spec.smoothing_width % 2 == 0)
    throw ConfigError("VesselPhantomSpec: smoothing width must be odd and positive");
}

std::vector<SphereDraw> draw_spheres(const SpherePhantomSpec& spec, uint64_t seed) {
  validate_sphere_spec(spec);
  Rng rng(seed, 0, "spheres");
  int64_t count = rng.uniform_int(spec.count_min, spec.count_max);
  std::vector<SphereDraw> draws;
  draws.reserve(static_cast<size_t>(count));
  for (int64_t s = 0; s < count; ++s) {
    SphereDraw d;
    d.center.resize(spec.extents.size());
    for (size_t a = 0; a < spec.extents.size(); ++a)
      d.center[a] = rng.uniform(0.0, static_cast<double>(spec.extents[a] - 1));
    d.radius = rng.uniform(spec.radius_min, spec.radius_max);
    d.magnitude = rng.uniform(spec.magnitude_min, spec.magnitude_max);
    draws.push_back(std::move(d));
  }
  return draws;
}

Tensor gen_spheres(const SpherePhantomSpec& spec, uint64_t seed) {
  std::vector<SphereDraw> draws = draw_spheres(spec, seed);
  Tensor img = Tensor::zeros(spec.extents);
  for (const auto& d : draws) stamp_ball(img, d.center, d.radius, d.magnitude);
  return smooth_and_normalize(std::move(img), spec.smoothing_width);
}

Tensor gen_vessels(const VesselPhantomSpec& spec, uint64_t seed) {
  validate_vessel_spec(spec);
  Rng rng(seed, 0, "vessels");
  size_t nd = spec.extents.size();
  Tensor img = Tensor::zeros(spec.extents);

  int64_t branches = rng.uniform_int(spec.branches_min, spec.branches_max);
  std::vector<std::vector<double>> visited;  // path points, branch seeds

  auto random_unit = [&]() {
    std::vector<double> dir(nd);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (size_t a = 0; a < nd; ++a) {
        dir[a] = rng.normal();
        norm += dir[a] * dir[a];
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (size_t a = 0; a < nd; ++a) dir[a] /= norm;
    return dir;
  };

  for (int64_t b = 0; b < branches; ++b) {
    std::vector<double> pos(nd);
    if (visited.empty()) {
      // Keep roots away from the walls so branches have room to grow.
      for (size_t a = 0; a < nd; ++a) {
        double margin = static_cast<double>(spec.extents[a] - 1) * 0.2;
        pos[a] = rng.uniform(margin, static_cast<double>(spec.extents[a] - 1) - margin);
      }
    } else {
      pos = visited[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(visited.size()) - 1))];
    }
    std::vector<double> dir = random_unit();
    double radius = rng.uniform(spec.radius_min, spec.radius_max);
    double magnitude = rng.uniform(spec.magnitude_min, spec.magnitude_max);
    int64_t steps = rng.uniform_int(spec.steps_min, spec.steps_max);

    for (int64_t s = 0; s < steps; ++s) {
      stamp_ball(img, pos, radius, magnitude);
      visited.push_back(pos);
      bool inside = true;
      for (size_t a = 0; a < nd; ++a) {
        pos[a] += dir[a];
        if (pos[a] < 0.0 || pos[a] > static_cast<double>(spec.extents[a] - 1)) inside = false;
      }
      if (!inside) break;
      if (spec.curl > 0.0) {
        double norm = 0.0;
        for (size_t a = 0; a < nd; ++a) {
          dir[a] += spec.curl * rng.normal();
          norm += dir[a] * dir[a];
        }
        if (norm < 1e-12) {
          dir = random_unit();
        } else {
          norm = std::sqrt(norm);
          for (size_t a = 0; a < nd; ++a) dir[a] /= norm;
        }
      }
    }
  }
  return smooth_and_normalize(std::move(img), spec.smoothing_width);
}

Tensor augment_rotate_crop(const Tensor& volume, const std::vector<double>& angles,
                           const std::vector<int64_t>& crop_extents, uint64_t seed) {
  size_t nd = static_cast<size_t>(volume.ndim());
  if (nd < 2 || nd > 3) throw DimensionError("augment_rotate_crop: volume must be 2D or 3D");
  size_t expected_angles = (nd == 2) ? 1 : 3;
  if (angles.size() != expected_angles)
    throw ConfigError("augment_rotate_crop: expected " + std::to_string(expected_angles) +
                      " rotation angle(s)");
  if (crop_extents.size() != nd)
    throw DimensionError("augment_rotate_crop: crop rank does not match the volume");
  for (size_t d = 0; d < nd; ++d) {
    if (crop_extents[d] < 1 || crop_extents[d] > volume.extent(static_cast<int64_t>(d)))
      throw DimensionError("augment_rotate_crop: crop larger than volume");
  }

  // Exact values at multiples of 90 degrees so those rotations reduce to
  // index permutations.
  auto snapped = [](double x) {
    if (std::abs(x) < 1e-12) return 0.0;
    if (std::abs(x - 1.0) < 1e-12) return 1.0;
    if (std::abs(x + 1.0) < 1e-12) return -1.0;
    return x;
  };

  // Row-major rotation matrix, product of one rotation per axis.
  std::vector<double> rot(nd * nd, 0.0);
  for (size_t d = 0; d < nd; ++d) rot[d * nd + d] = 1.0;
  auto apply_plane_rotation = [&](size_t a, size_t b, double angle) {
    double c = snapped(std::cos(angle));
    double s = snapped(std::sin(angle));
    for (size_t col = 0; col < nd; ++col) {
      double ra = rot[a * nd + col];
      double rb = rot[b * nd + col];
      rot[a * nd + col] = c * ra - s * rb;
      rot[b * nd + col] = s * ra + c * rb;
    }
  };
  if (nd == 2) {
    apply_plane_rotation(0, 1, angles[0]);
  } else {
    apply_plane_rotation(1, 2, angles[0]);  // about axis 0
    apply_plane_rotation(2, 0, angles[1]);  // about axis 1
    apply_plane_rotation(0, 1, angles[2]);  // about axis 2
  }

  const auto& ext = volume.shape();
  std::vector<double> center(nd);
  for (size_t d = 0; d < nd; ++d) center[d] = static_cast<double>(ext[d] - 1) / 2.0;

  Tensor rotated = Tensor::zeros(ext);
  std::vector<int64_t> idx(nd, 0);
  std::vector<double> src(nd), rel(nd);
  std::vector<int64_t> base(nd);
  std::vector<double> frac(nd);
  for (int64_t flat = 0; flat < rotated.numel(); ++flat) {
    for (size_t d = 0; d < nd; ++d) rel[d] = static_cast<double>(idx[d]) - center[d];
    // Inverse map: the rotation matrix is orthogonal, so its transpose pulls
    // destination coordinates back to the source.
    for (size_t d = 0; d < nd; ++d) {
      double acc = center[d];
      for (size_t e = 0; e < nd; ++e) acc += rot[e * nd + d] * rel[e];
      src[d] = acc;
    }
    bool reachable = true;
    for (size_t d = 0; d < nd; ++d) {
      double f = std::floor(src[d]);
      base[d] = static_cast<int64_t>(f);
      frac[d] = src[d] - f;
      if (base[d] < -1 || base[d] > ext[d] - 1) reachable = false;
    }
    if (reachable) {
      double value = 0.0;
      for (size_t corner = 0; corner < (size_t{1} << nd); ++corner) {
        double w = 1.0;
        bool in_range = true;
        int64_t off = 0;
        for (size_t d = 0; d < nd; ++d) {
          bool high = (corner >> d) & 1u;
          w *= high ? frac[d] : 1.0 - frac[d];
          int64_t coordinate = base[d] + (high ? 1 : 0);
          if (coordinate < 0 || coordinate >= ext[d]) in_range = false;
          off = off * ext[d] + (in_range ? coordinate : 0);
        }
        if (w == 0.0) continue;
        if (in_range) value += w * volume[off];
      }
      rotated[flat] = value;
    }
    for (int64_t d = static_cast<int64_t>(nd) - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < ext[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }

  Rng rng(seed, 0, "augment/offset");
  std::vector<int64_t> offset(nd);
  for (size_t d = 0; d < nd; ++d) offset[d] = rng.uniform_int(0, ext[d] - crop_extents[d]);

  Tensor out = Tensor::zeros(crop_extents);
  std::vector<int64_t> oidx(nd, 0);
  for (int64_t flat = 0; flat < out.numel(); ++flat) {
    int64_t src_flat = 0;
    for (size_t d = 0; d < nd; ++d) src_flat = src_flat * ext[d] + (oidx[d] + offset[d]);
    out[flat] = rotated[src_flat];
    for (int64_t d = static_cast<int64_t>(nd) - 1; d >= 0; --d) {
      if (++oidx[static_cast<size_t>(d)] < crop_extents[static_cast<size_t>(d)]) break;
      oidx[static_cast<size_t>(d)] = 0;
    }
  }
  return out;
}

}  // namespace pat
