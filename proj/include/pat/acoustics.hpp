#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {

struct MediumParams {
  double sound_speed = 1480.0;  // m/s
  double density = 1000.0;      // kg/m^3
};

struct Medium {
  std::vector<int64_t> extents;
  double dx = 1e-4;     // meters
  Tensor sound_speed;   // m/s over the grid
  Tensor density;       // kg/m^3 over the grid
  int64_t sponge_width = 8;       // cells
  double sponge_strength = 0.0;   // 1/s at the outermost cell

  int64_t ndim() const { return static_cast<int64_t>(extents.size()); }
  double max_speed() const { return sound_speed.max_value(); }
  double min_speed() const { return sound_speed.min_value(); }
};

// Piecewise-constant medium: background everywhere, inclusion values where the
// mask exceeds 0.25 (phantoms are smoothed, so a hard cut is needed).
// sponge_strength < 0 selects the default 2 * max(c) / dx.
Medium make_medium(const std::vector<int64_t>& extents, double dx,
                   MediumParams background, const Tensor* inclusion_mask = nullptr,
                   MediumParams inclusion = {1570.0, 1060.0}, int64_t sponge_width = 8,
                   double sponge_strength = -1.0);

// Largest stable time step scaled by safety: safety * dx / (max(c) * sqrt(d)).
double cfl_dt(const Medium& medium, double safety);

enum class SensorGeometry { Arc, Circle, Cylinder };

std::string sensor_geometry_name(SensorGeometry geometry);
SensorGeometry parse_sensor_geometry(const std::string& name);

struct SensorArray {
  SensorGeometry geometry = SensorGeometry::Arc;
  int64_t n_angles = 0;
  int64_t n_z = 1;
  double radius_cells = 0.0;
  std::vector<double> center;          // grid coordinates, cell units
  std::vector<int64_t> extents;        // grid the positions were snapped to
  std::vector<std::vector<int64_t>> positions;  // angle-major, then z

  int64_t num_sensors() const { return static_cast<int64_t>(positions.size()); }
  std::vector<int64_t> flat_indices() const;
};

// Arc: half circle, theta_j = pi*j/(n_angles-1), endpoints inclusive.
// Circle: full circle, theta_j = 2*pi*j/n_angles.
// Cylinder: the arc extruded to n_z equally spaced z planes (last axis).
// Positions snap to the nearest grid node; duplicates or out-of-grid
// positions are configuration errors. Empty center means the grid center.
SensorArray make_sensor_array(const std::vector<int64_t>& extents, SensorGeometry geometry,
                              int64_t n_angles, int64_t n_z, double radius_cells,
                              std::vector<double> center = {});

struct SensorData {
  Tensor series;  // (num_sensors, num_timesteps)
  double dt = 0.0;
  double dx = 0.0;
  SensorArray sensors;
  uint64_t seed = 0;  // noise seed, 0 when noise-free

  int64_t num_sensors() const { return series.extent(0); }
  int64_t num_timesteps() const { return series.extent(1); }
};

// Explicit first-order velocity-pressure leapfrog on a staggered grid with an
// exponential sponge layer. Pressure lives at cell centers, each velocity
// component at the faces of its axis. Domain walls are rigid (v = 0); the
// sponge absorbs outgoing waves before they reach the walls.
class WaveSim {
 public:
  WaveSim(const Medium& medium, double dt);

  // Sets p = p0 and v = 0; the next step applies a half-length velocity
  // update so the start models zero initial particle velocity.
  void reset(const Tensor& p0);
  void reset_zero();
  void step();

  const Tensor& pressure() const { return p_; }
  void set_pressure_at(const std::vector<int64_t>& flat, const double* values);

  // Discrete acoustic energy sum(p^2/(2 rho c^2)) + sum(rho_face * v- * v+)/2,
  // times dx^d, with v+ the velocity a further step would produce. The product
  // form is conserved exactly by the interior update.
  double energy() const;

  double dt() const { return dt_; }

 private:
  void update_velocity(double scale);
  void update_pressure();

  std::vector<int64_t> extents_;
  int64_t ndim_ = 0;
  double dx_ = 0.0;
  double dt_ = 0.0;
  bool pending_half_start_ = false;

  Tensor p_;
  std::vector<double> cp_;       // dt * rho * c^2 / dx per cell
  std::vector<double> inv_pc_;   // 1 / (2 rho c^2) per cell
  std::vector<double> damp_p_;   // exp(-sigma dt) per cell
  std::vector<double> div_;      // scratch divergence accumulator

  struct FaceField {
    std::vector<int64_t> shape;
    std::vector<double> v;
    std::vector<double> cv;        // dt / (rho_face * dx) per face
    std::vector<double> rho_face;  // averaged density per face
    std::vector<double> damp;      // exp(-sigma dt) per face
  };
  std::vector<FaceField> faces_;
};

// ceil(1.2 * domain diagonal / (min(c) * dt)): long enough for a wavefront
// from any cell to cross the whole domain.
int64_t default_num_steps(const Medium& medium, double dt);

// Runs the wave model from p0 with zero initial velocity and records the
// pressure at every sensor node at t = 0 and after each of num_steps steps.
// num_steps <= 0 selects default_num_steps; dt <= 0 selects cfl_dt(medium, 0.3).
SensorData simulate_forward(const Tensor& p0, const Medium& medium,
                            const SensorArray& sensors, int64_t num_steps = 0,
                            double dt = 0.0);

// Adds zero-mean Gaussian noise with sigma = max|series| * 10^(-psnr_db/20).
SensorData add_noise_psnr(const SensorData& data, double psnr_db, uint64_t seed);

// Re-runs the wave model from zero fields, enforcing the recorded pressures at
// the sensor nodes in reverse chronological order as Dirichlet values, and
// returns the final pressure field. Negative values are preserved.
Tensor time_reversal(const SensorData& data, const Medium& assumed_medium,
                     const SensorArray& sensors);

// Tensor file at path plus a JSON sidecar at path + ".json" describing the
// sensor geometry and timing; load rebuilds the array from the sidecar.
void save_sensor_data(const SensorData& data, const std::string& path);
SensorData load_sensor_data(const std::string& path);

}  // namespace pat
