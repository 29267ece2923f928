#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pat/acoustics.hpp"
#include "pat/autodiff.hpp"
#include "pat/network.hpp"
#include "pat/phantom.hpp"
#include "pat/tensor.hpp"

namespace pat {

struct TrainingConfig {
  double learning_rate = 1e-4;
  int64_t batch_size = 2;
  int64_t epochs = 100;
  uint64_t seed = 1;              // master seed for the whole experiment
  int64_t checkpoint_interval = 0;  // extra checkpoints every n epochs, 0 = final only
  int64_t eval_interval = 20;       // held-out MS-SSIM snapshots every n epochs, 0 = off
  int64_t eval_subset = 8;          // held-out samples per snapshot
};

struct SimulationConfig {
  double dx = 1e-4;        // meters
  double cfl_safety = 0.3;
  int64_t num_steps = 0;   // 0 = long enough to cross the domain
};

struct SensorConfig {
  SensorGeometry geometry = SensorGeometry::Arc;
  double radius_cells = 23.5;
  int64_t n_z = 1;
  std::vector<int64_t> sparsity_levels = {8, 16, 32};
};

struct MediumConfig {
  MediumParams background{1480.0, 1000.0};
  MediumParams inclusion{1570.0, 1060.0};
  MediumParams assumed_background{1480.0, 1000.0};  // reconstruction-side medium
  int64_t sponge_width = 8;
  double sponge_strength = -1.0;  // negative = automatic
};

struct ExperimentConfig {
  std::string phantom_kind = "spheres";  // spheres | vessels
  SpherePhantomSpec spheres;
  VesselPhantomSpec vessels;
  MediumConfig medium;
  SensorConfig sensors;
  double noise_psnr_db = 25.0;
  SimulationConfig simulation;
  NetworkConfig network;
  TrainingConfig training;
  int64_t train_size = 200;
  int64_t test_size = 100;
  std::string output_dir = "runs/study";

  const std::vector<int64_t>& extents() const;
};

void validate_experiment_config(const ExperimentConfig& cfg);

// 2D 64x64 sparse-view study that finishes on a plain CPU.
ExperimentConfig default_desk_config();

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

struct DatasetSample {
  int64_t id = 0;
  uint64_t seed = 0;
  Tensor input;   // time-reversal reconstruction from noisy sparse data
  Tensor target;  // ground-truth phantom
};

struct Dataset {
  std::vector<int64_t> extents;
  int64_t n_angles = 0;
  std::vector<DatasetSample> samples;
};

// Ground-truth phantom for one global sample index (train indices first,
// then test), seeded from the master seed.
Tensor phantom_for_sample(const ExperimentConfig& cfg, int64_t global_index);

// Builds dir/train and dir/test: per sample, phantom -> forward simulation in
// the true heterogeneous medium -> noise -> time reversal in the assumed
// homogeneous medium, stored as (input, target) tensor pairs plus a manifest.
// Rebuilds are skipped when an existing manifest carries the same digest.
void build_dataset(const ExperimentConfig& cfg, int64_t n_angles, const std::string& dir);

Dataset load_dataset_split(const std::string& dir, const std::string& split);

struct EvalSnapshot {
  int64_t epoch = 0;
  double mean_msssim = 0.0;
};

struct TrainingHistory {
  std::vector<double> epoch_loss;     // mean training MSE per epoch
  std::vector<double> epoch_seconds;  // wall clock per epoch
  std::vector<EvalSnapshot> evals;
};

struct Checkpoint {
  NetworkConfig network;
  ParamMap params;
  AdamState adam;
  int64_t epoch = 0;
};

// Directory with a JSON manifest plus one tensor file per parameter and,
// when present, per optimizer moment.
void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

// Adam on MSE with seeded shuffling; writes out_dir/checkpoint and
// out_dir/history.json. held_out may be null (disables snapshots).
TrainingHistory train_network(const ExperimentConfig& cfg, const NetworkConfig& net_cfg,
                              const Dataset& train, const Dataset* held_out, uint64_t init_seed,
                              const std::string& out_dir);

// Forward passes through the checkpointed network; negatives clamped to 0.
std::vector<Tensor> run_inference(const Checkpoint& ckpt, const std::vector<Tensor>& inputs);

struct ScoreRow {
  int64_t sample_id = 0;
  std::string method;
  double msssim = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
};

// Scores a reconstruction against its ground truth: images are clamped to
// [0, inf) first, metrics use unit dynamic range.
ScoreRow score_reconstruction(int64_t sample_id, const std::string& method,
                              const Tensor& reconstruction, const Tensor& truth);

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::string& path);
std::vector<ScoreRow> read_scores_csv(const std::string& path);

struct StudyLevelReport {
  int64_t n_angles = 0;
  double tr_mean = 0.0, tr_std = 0.0;
  double fd_mean = 0.0, fd_std = 0.0;
  double dd_mean = 0.0, dd_std = 0.0;
  double diff_mean = 0.0, diff_std = 0.0;  // per-sample DD minus FD
  double wilcoxon_p = 1.0;
  int64_t n_test = 0;
};

struct StudyReport {
  std::vector<StudyLevelReport> levels;
};

// Per sparsity level: builds the dataset, trains both network variants under
// identical budgets, scores time reversal and both networks on the test set,
// and runs a paired test on the per-sample MS-SSIM differences. Writes
// per-level scores.csv files and a study-level summary.csv.
StudyReport run_study(const ExperimentConfig& cfg);

std::string format_study_table(const StudyReport& report);
void write_study_summary_csv(const StudyReport& report, const std::string& path);

// 16-bit PGM export; mode "slice" takes the middle slice along axis for 3D
// input, mode "mip" the maximum intensity projection.
void export_image(const Tensor& image, const std::string& path, const std::string& mode,
                  int64_t axis = 0);

}  // namespace pat
