#include "pat/acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pat/errors.hpp"
#include "pat/io.hpp"
#include "pat/rng.hpp"

namespace pat {

namespace {

std::vector<int64_t> row_major_strides(const std::vector<int64_t>& shape) {
  std::vector<int64_t> s(shape.size(), 1);
  for (int64_t d = static_cast<int64_t>(shape.size()) - 2; d >= 0; --d)
    s[static_cast<size_t>(d)] = s[static_cast<size_t>(d + 1)] * shape[static_cast<size_t>(d + 1)];
  return s;
}

int64_t numel_of(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

// Calls fn(face_base, cell_base) once per row, a row being the span of the
// last axis with all other coordinates fixed. Face and cell tensors share
// coordinates on every axis they both cover.
template <typename Fn>
void for_each_row(const std::vector<int64_t>& face_shape,
                  const std::vector<int64_t>& face_strides,
                  const std::vector<int64_t>& cell_strides, Fn&& fn) {
  int64_t nd = static_cast<int64_t>(face_shape.size());
  if (nd == 1) {
    fn(int64_t{0}, int64_t{0});
    return;
  }
  std::vector<int64_t> idx(static_cast<size_t>(nd - 1), 0);
  for (;;) {
    int64_t fb = 0, cb = 0;
    for (int64_t a = 0; a < nd - 1; ++a) {
      fb += idx[static_cast<size_t>(a)] * face_strides[static_cast<size_t>(a)];
      cb += idx[static_cast<size_t>(a)] * cell_strides[static_cast<size_t>(a)];
    }
    fn(fb, cb);
    int64_t a = nd - 2;
    for (;;) {
      if (++idx[static_cast<size_t>(a)] < face_shape[static_cast<size_t>(a)]) break;
      idx[static_cast<size_t>(a)] = 0;
      if (a == 0) return;
      --a;
    }
  }
}

}  // namespace

Medium make_medium(const std::vector<int64_t>& extents, double dx, MediumParams background,
                   const Tensor* inclusion_mask, MediumParams inclusion, int64_t sponge_width,
                   double sponge_strength) {
  if (extents.empty() || extents.size() > 3)
    throw DimensionError("make_medium: extents must have 1 to 3 dims");
  for (int64_t e : extents)
    if (e < 2) throw DimensionError("make_medium: each extent must be at least 2");
  if (!(dx > 0.0)) throw ConfigError("make_medium: dx must be positive");
  if (!(background.sound_speed > 0.0) || !(background.density > 0.0))
    throw ConfigError("make_medium: background sound speed and density must be positive");

  Medium m;
  m.extents = extents;
  m.dx = dx;
  m.sound_speed = Tensor::full(extents, background.sound_speed);
  m.density = Tensor::full(extents, background.density);

  if (inclusion_mask != nullptr) {
    if (inclusion_mask->shape() != extents)
      throw DimensionError("make_medium: mask shape does not match extents");
    if (!(inclusion.sound_speed > 0.0) || !(inclusion.density > 0.0))
      throw ConfigError("make_medium: inclusion sound speed and density must be positive");
    for (int64_t i = 0; i < inclusion_mask->numel(); ++i) {
      if ((*inclusion_mask)[i] > 0.25) {
        m.sound_speed[i] = inclusion.sound_speed;
        m.density[i] = inclusion.density;
      }
    }
  }

  int64_t min_extent = *std::min_element(extents.begin(), extents.end());
  if (sponge_width < 0 || 2 * sponge_width >= min_extent)
    throw ConfigError("make_medium: sponge_width must be >= 0 and below half the smallest extent");
  m.sponge_width = sponge_width;
  m.sponge_strength = (sponge_strength < 0.0) ? 2.0 * m.max_speed() / dx : sponge_strength;
  return m;
}

double cfl_dt(const Medium& medium, double safety) {
  if (!(safety > 0.0) || safety > 1.0)
    throw ConfigError("cfl_dt: safety must be in (0, 1]");
  double d = static_cast<double>(medium.ndim());
  return safety * medium.dx / (medium.max_speed() * std::sqrt(d));
}

std::string sensor_geometry_name(SensorGeometry geometry) {
  switch (geometry) {
    case SensorGeometry::Arc: return "arc";
    case SensorGeometry::Circle: return "circle";
    case SensorGeometry::Cylinder: return "cylinder";
  }
  throw ConfigError("sensor_geometry_name: unknown geometry");
}

SensorGeometry parse_sensor_geometry(const std::string& name) {
  if (name == "arc") return SensorGeometry::Arc;
  if (name == "circle") return SensorGeometry::Circle;
  if (name == "cylinder") return SensorGeometry::Cylinder;
  throw ConfigError("parse_sensor_geometry: unknown geometry '" + name + "'");
}

std::vector<int64_t> SensorArray::flat_indices() const {
  std::vector<int64_t> strides = row_major_strides(extents);
  std::vector<int64_t> flat;
  flat.reserve(positions.size());
  for (const auto& pos : positions) {
    int64_t f = 0;
    for (size_t d = 0; d < pos.size(); ++d) f += pos[d] * strides[d];
    flat.push_back(f);
  }
  return flat;
}

SensorArray make_sensor_array(const std::vector<int64_t>& extents, SensorGeometry geometry,
                              int64_t n_angles, int64_t n_z, double radius_cells,
                              std::vector<double> center) {
  bool is_3d = geometry == SensorGeometry::Cylinder;
  if (extents.size() != (is_3d ? 3u : 2u))
    throw DimensionError("make_sensor_array: geometry needs a " +
                         std::string(is_3d ? "3" : "2") + "D grid");
  if (n_angles < 1) throw ConfigError("make_sensor_array: n_angles must be >= 1");
  if (is_3d && n_z < 1) throw ConfigError("make_sensor_array: n_z must be >= 1");
  if (!(radius_cells > 0.0)) throw ConfigError("make_sensor_array: radius must be positive");

  if (center.empty())
    center = {static_cast<double>(extents[0] - 1) / 2.0,
              static_cast<double>(extents[1] - 1) / 2.0};
  if (center.size() != 2)
    throw ConfigError("make_sensor_array: center must give the two arc-plane coordinates");

  SensorArray arr;
  arr.geometry = geometry;
  arr.n_angles = n_angles;
  arr.n_z = is_3d ? n_z : 1;
  arr.radius_cells = radius_cells;
  arr.center = center;
  arr.extents = extents;

  const double pi = 3.14159265358979323846;
  std::vector<std::pair<int64_t, int64_t>> ring;
  for (int64_t j = 0; j < n_angles; ++j) {
    double theta;
    if (geometry == SensorGeometry::Circle)
      theta = 2.0 * pi * static_cast<double>(j) / static_cast<double>(n_angles);
    else
      theta = (n_angles == 1) ? 0.0
                              : pi * static_cast<double>(j) / static_cast<double>(n_angles - 1);
    int64_t ix = std::llround(center[0] + radius_cells * std::cos(theta));
    int64_t iy = std::llround(center[1] + radius_cells * std::sin(theta));
    if (ix < 0 || ix >= extents[0] || iy < 0 || iy >= extents[1])
      throw ConfigError("make_sensor_array: radius " + std::to_string(radius_cells) +
                        " places a sensor outside the grid");
    ring.emplace_back(ix, iy);
  }

  std::vector<int64_t> zs;
  if (is_3d) {
    int64_t ez = extents[2];
    if (arr.n_z == 1) {
      zs.push_back(std::llround(static_cast<double>(ez - 1) / 2.0));
    } else {
      for (int64_t k = 0; k < arr.n_z; ++k)
        zs.push_back(std::llround(static_cast<double>(k) * static_cast<double>(ez - 1) /
                                  static_cast<double>(arr.n_z - 1)));
    }
  }

  std::set<std::vector<int64_t>> seen;
  for (const auto& [ix, iy] : ring) {
    if (is_3d) {
      for (int64_t z : zs) {
        std::vector<int64_t> pos = {ix, iy, z};
        if (!seen.insert(pos).second)
          throw ConfigError("make_sensor_array: sensors collide after grid snapping");
        arr.positions.push_back(std::move(pos));
      }
    } else {
      std::vector<int64_t> pos = {ix, iy};
      if (!seen.insert(pos).second)
        throw ConfigError("make_sensor_array: sensors collide after grid snapping");
      arr.positions.push_back(std::move(pos));
    }
  }
  return arr;
}

WaveSim::WaveSim(const Medium& medium, double dt)
    : extents_(medium.extents),
      ndim_(medium.ndim()),
      dx_(medium.dx),
      dt_(dt),
      p_(Tensor::zeros(medium.extents)) {
  if (!(dt > 0.0)) throw ConfigError("WaveSim: dt must be positive");
  double admissible = medium.dx / (medium.max_speed() * std::sqrt(static_cast<double>(ndim_)));
  if (dt > admissible * (1.0 + 1e-12))
    throw ConfigError("WaveSim: dt " + std::to_string(dt) +
                      " violates the CFL bound; admissible dt is " + std::to_string(admissible));

  int64_t n = p_.numel();
  cp_.resize(static_cast<size_t>(n));
  inv_pc_.resize(static_cast<size_t>(n));
  damp_p_.resize(static_cast<size_t>(n));
  div_.resize(static_cast<size_t>(n));

  std::vector<int64_t> cell_strides = row_major_strides(extents_);
  int64_t w = medium.sponge_width;

  // sigma at grid coordinate x (cell units, possibly half-integral on faces):
  // quadratic ramp from 0 at the sponge's inner edge to sponge_strength at the wall.
  auto sigma_at = [&](const std::vector<double>& coord) {
    if (w <= 0) return 0.0;
    double s = 0.0;
    for (int64_t d = 0; d < ndim_; ++d) {
      double dist = std::min(coord[static_cast<size_t>(d)],
                             static_cast<double>(extents_[static_cast<size_t>(d)] - 1) -
                                 coord[static_cast<size_t>(d)]);
      double depth = (static_cast<double>(w) - dist) / static_cast<double>(w);
      s = std::max(s, std::clamp(depth, 0.0, 1.0));
    }
    return medium.sponge_strength * s * s;
  };

  std::vector<double> coord(static_cast<size_t>(ndim_), 0.0);
  std::vector<int64_t> idx(static_cast<size_t>(ndim_), 0);
  for (int64_t i = 0; i < n; ++i) {
    double c = medium.sound_speed[i];
    double rho = medium.density[i];
    if (!(c > 0.0) || !(rho > 0.0))
      throw ConfigError("WaveSim: sound speed and density must be positive everywhere");
    cp_[static_cast<size_t>(i)] = dt * rho * c * c / dx_;
    inv_pc_[static_cast<size_t>(i)] = 1.0 / (2.0 * rho * c * c);
    for (int64_t d = 0; d < ndim_; ++d) coord[static_cast<size_t>(d)] = static_cast<double>(idx[static_cast<size_t>(d)]);
    damp_p_[static_cast<size_t>(i)] = std::exp(-sigma_at(coord) * dt);
    for (int64_t d = ndim_ - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < extents_[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }

  faces_.resize(static_cast<size_t>(ndim_));
  for (int64_t d = 0; d < ndim_; ++d) {
    FaceField& f = faces_[static_cast<size_t>(d)];
    f.shape = extents_;
    f.shape[static_cast<size_t>(d)] -= 1;
    int64_t fn = numel_of(f.shape);
    f.v.assign(static_cast<size_t>(fn), 0.0);
    f.cv.resize(static_cast<size_t>(fn));
    f.rho_face.resize(static_cast<size_t>(fn));
    f.damp.resize(static_cast<size_t>(fn));

    std::vector<int64_t> fidx(static_cast<size_t>(ndim_), 0);
    for (int64_t k = 0; k < fn; ++k) {
      int64_t cell = 0;
      for (int64_t a = 0; a < ndim_; ++a) cell += fidx[static_cast<size_t>(a)] * cell_strides[static_cast<size_t>(a)];
      double rho_face = 0.5 * (medium.density[cell] +
                               medium.density[cell + cell_strides[static_cast<size_t>(d)]]);
      f.rho_face[static_cast<size_t>(k)] = rho_face;
      f.cv[static_cast<size_t>(k)] = dt / (rho_face * dx_);
      for (int64_t a = 0; a < ndim_; ++a)
        coord[static_cast<size_t>(a)] =
            static_cast<double>(fidx[static_cast<size_t>(a)]) + (a == d ? 0.5 : 0.0);
      f.damp[static_cast<size_t>(k)] = std::exp(-sigma_at(coord) * dt);
      for (int64_t a = ndim_ - 1; a >= 0; --a) {
        if (++fidx[static_cast<size_t>(a)] < f.shape[static_cast<size_t>(a)]) break;
        fidx[static_cast<size_t>(a)] = 0;
      }
    }
  }
}

void WaveSim::reset(const Tensor& p0) {
  if (p0.shape() != extents_)
    throw DimensionError("WaveSim: initial pressure shape " + shape_string(p0.shape()) +
                         " does not match the medium grid");
  if (!p0.all_finite()) throw ConfigError("WaveSim: initial pressure has non-finite values");
  p_ = p0;
  p_.set_precision(Precision::Double);
  for (auto& f : faces_) std::fill(f.v.begin(), f.v.end(), 0.0);
  pending_half_start_ = true;
}

void WaveSim::reset_zero() {
  p_.fill(0.0);
  for (auto& f : faces_) std::fill(f.v.begin(), f.v.end(), 0.0);
  pending_half_start_ = true;
}

void WaveSim::update_velocity(double scale) {
  std::vector<int64_t> cell_strides = row_major_strides(extents_);
  for (int64_t d = 0; d < ndim_; ++d) {
    FaceField& f = faces_[static_cast<size_t>(d)];
    std::vector<int64_t> face_strides = row_major_strides(f.shape);
    int64_t row = f.shape.back();
    const double* p = p_.data();
    double* v = f.v.data();
    const double* cv = f.cv.data();
    const double* damp = f.damp.data();
    if (d == ndim_ - 1) {
      for_each_row(f.shape, face_strides, cell_strides, [&](int64_t fb, int64_t cb) {
        for (int64_t j = 0; j < row; ++j) {
          int64_t k = fb + j;
          v[k] = damp[k] * (v[k] - scale * cv[k] * (p[cb + j + 1] - p[cb + j]));
        }
      });
    } else {
      int64_t off = cell_strides[static_cast<size_t>(d)];
      for_each_row(f.shape, face_strides, cell_strides, [&](int64_t fb, int64_t cb) {
        for (int64_t j = 0; j < row; ++j) {
          int64_t k = fb + j;
          v[k] = damp[k] * (v[k] - scale * cv[k] * (p[cb + j + off] - p[cb + j]));
        }
      });
    }
  }
}

void WaveSim::update_pressure() {
  std::fill(div_.begin(), div_.end(), 0.0);
  std::vector<int64_t> cell_strides = row_major_strides(extents_);
  for (int64_t d = 0; d < ndim_; ++d) {
    FaceField& f = faces_[static_cast<size_t>(d)];
    std::vector<int64_t> face_strides = row_major_strides(f.shape);
    int64_t row = f.shape.back();
    const double* v = f.v.data();
    double* div = div_.data();
    if (d == ndim_ - 1) {
      for_each_row(f.shape, face_strides, cell_strides, [&](int64_t fb, int64_t cb) {
        for (int64_t j = 0; j < row; ++j) {
          double val = v[fb + j];
          div[cb + j] += val;
          div[cb + j + 1] -= val;
        }
      });
    } else {
      int64_t off = cell_strides[static_cast<size_t>(d)];
      for_each_row(f.shape, face_strides, cell_strides, [&](int64_t fb, int64_t cb) {
        for (int64_t j = 0; j < row; ++j) {
          double val = v[fb + j];
          div[cb + j] += val;
          div[cb + j + off] -= val;
        }
      });
    }
  }
  double* p = p_.data();
  int64_t n = p_.numel();
  for (int64_t i = 0; i < n; ++i) {
    size_t k = static_cast<size_t>(i);
    p[i] = damp_p_[k] * (p[i] - cp_[k] * div_[k]);
  }
}

void WaveSim::step() {
  update_velocity(pending_half_start_ ? 0.5 : 1.0);
  pending_half_start_ = false;
  update_pressure();
}

void WaveSim::set_pressure_at(const std::vector<int64_t>& flat, const double* values) {
  double* p = p_.data();
  int64_t n = p_.numel();
  for (size_t s = 0; s < flat.size(); ++s) {
    if (flat[s] < 0 || flat[s] >= n)
      throw DimensionError("WaveSim: sensor index outside the grid");
    p[flat[s]] = values[s];
  }
}

double WaveSim::energy() const {
  double cell_volume = std::pow(dx_, static_cast<double>(ndim_));
  const double* p = p_.data();
  int64_t n = p_.numel();
  double e = 0.0;
  for (int64_t i = 0; i < n; ++i) e += p[i] * p[i] * inv_pc_[static_cast<size_t>(i)];

  // Velocity term pairs the stored half-step values with the ones a further
  // velocity update would produce.
  std::vector<int64_t> cell_strides = row_major_strides(extents_);
  for (int64_t d = 0; d < ndim_; ++d) {
    const FaceField& f = faces_[static_cast<size_t>(d)];
    std::vector<int64_t> face_strides = row_major_strides(f.shape);
    int64_t row = f.shape.back();
    int64_t off = (d == ndim_ - 1) ? 1 : cell_strides[static_cast<size_t>(d)];
    const double* v = f.v.data();
    double acc = 0.0;
    for_each_row(f.shape, face_strides, cell_strides, [&](int64_t fb, int64_t cb) {
      for (int64_t j = 0; j < row; ++j) {
        int64_t k = fb + j;
        size_t ks = static_cast<size_t>(k);
        double v_next = f.damp[ks] * (v[k] - f.cv[ks] * (p[cb + j + off] - p[cb + j]));
        acc += f.rho_face[ks] * v[k] * v_next;
      }
    });
    e += 0.5 * acc;
  }
  return e * cell_volume;
}

int64_t default_num_steps(const Medium& medium, double dt) {
  double diag = 0.0;
  for (int64_t e : medium.extents) {
    double span = static_cast<double>(e - 1) * medium.dx;
    diag += span * span;
  }
  diag = std::sqrt(diag);
  return static_cast<int64_t>(std::ceil(1.2 * diag / (medium.min_speed() * dt)));
}

SensorData simulate_forward(const Tensor& p0, const Medium& medium, const SensorArray& sensors,
                            int64_t num_steps, double dt) {
  if (p0.shape() != medium.extents)
    throw DimensionError("simulate_forward: p0 shape " + shape_string(p0.shape()) +
                         " does not match the medium grid");
  if (sensors.extents != medium.extents)
    throw DimensionError("simulate_forward: sensor array was built for a different grid");
  if (sensors.num_sensors() == 0) throw ConfigError("simulate_forward: no sensors");
  if (dt <= 0.0) dt = cfl_dt(medium, 0.3);
  if (num_steps <= 0) num_steps = default_num_steps(medium, dt);

  WaveSim sim(medium, dt);
  sim.reset(p0);

  std::vector<int64_t> flat = sensors.flat_indices();
  int64_t ns = sensors.num_sensors();
  int64_t nt = num_steps + 1;
  Tensor series = Tensor::zeros({ns, nt});

  const double* p = sim.pressure().data();
  for (int64_t s = 0; s < ns; ++s) series[s * nt] = p[flat[static_cast<size_t>(s)]];
  for (int64_t k = 1; k < nt; ++k) {
    sim.step();
    for (int64_t s = 0; s < ns; ++s) series[s * nt + k] = p[flat[static_cast<size_t>(s)]];
  }

  SensorData data;
  data.series = std::move(series);
  data.dt = dt;
  data.dx = medium.dx;
  data.sensors = sensors;
  return data;
}

SensorData add_noise_psnr(const SensorData& data, double psnr_db, uint64_t seed) {
  if (!std::isfinite(psnr_db)) throw ConfigError("add_noise_psnr: psnr_db must be finite");
  double peak = data.series.max_abs();
  if (peak == 0.0) throw ConfigError("add_noise_psnr: all-zero data has no defined peak");
  double sigma = peak * std::pow(10.0, -psnr_db / 20.0);

  SensorData out = data;
  out.seed = seed;
  Rng rng(seed, 0, "noise");
  for (int64_t i = 0; i < out.series.numel(); ++i) out.series[i] += sigma * rng.normal();
  return out;
}

Tensor time_reversal(const SensorData& data, const Medium& assumed_medium,
                     const SensorArray& sensors) {
  if (sensors.num_sensors() != data.num_sensors())
    throw DimensionError("time_reversal: sensor count " + std::to_string(sensors.num_sensors()) +
                         " does not match the recorded series " +
                         std::to_string(data.num_sensors()));
  if (sensors.extents != assumed_medium.extents)
    throw DimensionError("time_reversal: sensor array was built for a different grid");
  if (!data.series.all_finite()) throw ConfigError("time_reversal: non-finite sensor data");

  WaveSim sim(assumed_medium, data.dt);
  sim.reset_zero();

  std::vector<int64_t> flat = sensors.flat_indices();
  int64_t ns = data.num_sensors();
  int64_t nt = data.num_timesteps();
  std::vector<double> column(static_cast<size_t>(ns));

  auto load_column = [&](int64_t k) {
    for (int64_t s = 0; s < ns; ++s) column[static_cast<size_t>(s)] = data.series[s * nt + k];
  };

  load_column(nt - 1);
  sim.set_pressure_at(flat, column.data());
  for (int64_t k = nt - 2; k >= 0; --k) {
    sim.step();
    load_column(k);
    sim.set_pressure_at(flat, column.data());
  }
  return sim.pressure();
}

void save_sensor_data(const SensorData& data, const std::string& path) {
  save_tensor(data.series, path);
  nlohmann::json j;
  j["dt"] = data.dt;
  j["dx"] = data.dx;
  j["geometry"] = sensor_geometry_name(data.sensors.geometry);
  j["n_angles"] = data.sensors.n_angles;
  j["n_z"] = data.sensors.n_z;
  j["radius"] = data.sensors.radius_cells;
  j["center"] = data.sensors.center;
  j["extents"] = data.sensors.extents;
  j["seed"] = data.seed;
  std::ofstream out(path + ".json");
  if (!out) throw IoError("save_sensor_data: cannot open " + path + ".json");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("save_sensor_data: write failed for " + path + ".json");
}

SensorData load_sensor_data(const std::string& path) {
  SensorData data;
  data.series = load_tensor(path);
  if (data.series.ndim() != 2)
    throw IoError("load_sensor_data: expected a (sensors, timesteps) tensor in " + path);

  std::ifstream in(path + ".json");
  if (!in) throw IoError("load_sensor_data: cannot open " + path + ".json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_sensor_data: bad sidecar JSON: " + std::string(e.what()));
  }
  try {
    data.dt = j.at("dt").get<double>();
    data.dx = j.at("dx").get<double>();
    data.seed = j.at("seed").get<uint64_t>();
    data.sensors = make_sensor_array(j.at("extents").get<std::vector<int64_t>>(),
                                     parse_sensor_geometry(j.at("geometry").get<std::string>()),
                                     j.at("n_angles").get<int64_t>(), j.at("n_z").get<int64_t>(),
                                     j.at("radius").get<double>(),
                                     j.at("center").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_sensor_data: bad sidecar JSON: " + std::string(e.what()));
  }
  if (data.sensors.num_sensors() != data.num_sensors())
    throw IoError("load_sensor_data: sidecar sensor count does not match the tensor");
  return data;
}

}  // namespace pat
