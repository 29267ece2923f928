// Acceptance gate for the workbench. Each criterion is a standalone check
// with its tolerances pinned in code; the binary runs the one named on the
// command line and prints a single [PASS]/[FAIL] line with the wall time.
// Exit code 0 on pass, 1 on fail, 2 on usage errors.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pat/acoustics.hpp"
#include "pat/autodiff.hpp"
#include "pat/conv.hpp"
#include "pat/errors.hpp"
#include "pat/metrics.hpp"
#include "pat/network.hpp"
#include "pat/phantom.hpp"
#include "pat/pipeline.hpp"
#include "pat/rng.hpp"
#include "pat/stats.hpp"
#include "pat/tensor.hpp"

#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace pat;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return std::string(buf);
}

bool bits_equal(double x, double y) {
  uint64_t a = 0, b = 0;
  std::memcpy(&a, &x, sizeof(a));
  std::memcpy(&b, &y, sizeof(b));
  return a == b;
}

bool tensors_bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (!bits_equal(a[i], b[i])) return false;
  return true;
}

bool param_maps_bit_equal(const ParamMap& a, const ParamMap& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || !tensors_bit_equal(t, it->second)) return false;
  }
  return true;
}

Tensor smooth_image(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed, 0, "acceptance/image");
  Tensor t({h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(0.0, 1.0);
  return box_filter(box_filter(t, 5), 3);
}

fs::path scratch_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / "patbench_acceptance" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Criterion 1: conv_nd against a direct nested-summation oracle over 200
// randomized cases covering 1D/2D/3D, dilation 1..3, stride 1..2, both
// paddings. Every combination is forced at least once; tolerance 1e-12.
std::string run_conv_oracle() {
  Rng rng(2026, 0, "acceptance/conv");
  double worst = 0.0;
  int cases = 200;
  for (int i = 0; i < cases; ++i) {
    int64_t nd, rate, stride;
    if (i < 18) {  // grid over (dims, rate, stride) so coverage is certain
      nd = i / 6 + 1;
      rate = (i / 2) % 3 + 1;
      stride = i % 2 + 1;
    } else {
      nd = rng.uniform_int(1, 3);
      rate = rng.uniform_int(1, 3);
      stride = rng.uniform_int(1, 2);
    }
    ConvSpec spec;
    spec.padding = rng.uniform_int(0, 1) == 0 ? Padding::Valid : Padding::SameZero;
    spec.stride = {stride};
    spec.dilation_rate = {rate};
    spec.in_channels = rng.uniform_int(1, 3);
    spec.out_channels = rng.uniform_int(1, 3);
    spec.bias = rng.uniform_int(0, 1) == 1;

    int64_t lo = nd == 1 ? 8 : (nd == 2 ? 6 : 4);
    int64_t hi = nd == 1 ? 40 : (nd == 2 ? 16 : 9);
    std::vector<int64_t> spatial(static_cast<size_t>(nd));
    spec.kernel_shape.resize(static_cast<size_t>(nd));
    for (int64_t d = 0; d < nd; ++d) {
      spatial[static_cast<size_t>(d)] = rng.uniform_int(lo, hi);
      int64_t k = rng.uniform_int(1, 3);
      if (spec.padding == Padding::Valid) {
        int64_t k_fit = (spatial[static_cast<size_t>(d)] - 1) / rate + 1;
        k = std::min(k, k_fit);
      }
      spec.kernel_shape[static_cast<size_t>(d)] = k;
    }

    int64_t batch = rng.uniform_int(1, 2);
    std::vector<int64_t> in_shape = {batch, spec.in_channels};
    in_shape.insert(in_shape.end(), spatial.begin(), spatial.end());
    std::vector<int64_t> w_shape = {spec.out_channels, spec.in_channels};
    w_shape.insert(w_shape.end(), spec.kernel_shape.begin(), spec.kernel_shape.end());

    Tensor input = oracles::random_tensor(in_shape, rng);
    Tensor weights = oracles::random_tensor(w_shape, rng);
    Tensor bias = oracles::random_tensor({spec.out_channels}, rng);
    const Tensor* bias_ptr = spec.bias ? &bias : nullptr;

    Tensor got = conv_nd(input, weights, bias_ptr, spec);
    Tensor ref = oracles::direct_conv(input, weights, bias_ptr, spec);
    require(got.same_shape(ref), fmt("case %d: output shape mismatch", i));
    double diff = oracles::max_abs_diff(got, ref);
    worst = std::max(worst, diff);
    require(diff <= 1e-12, fmt("case %d: |conv - oracle| = %.3e exceeds 1e-12", i, diff));
  }
  return fmt("%d randomized cases, worst |conv - oracle| = %.2e (tol 1e-12)", cases, worst);
}

// Central-difference check helper: He init, biases pushed off zero so relu
// kinks sit away from the finite-difference probes.
double checked_graph(OpGraph& graph, const Tensor& input, uint64_t seed) {
  init_params(graph, seed);
  for (auto& [name, t] : graph.params()) {
    if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0)
      for (int64_t i = 0; i < t.numel(); ++i) t[i] += 0.05;
  }
  return grad_check(graph, input, 1e-5);
}

ConvSpec make_spec(std::vector<int64_t> kernel, int64_t cin, int64_t cout, Padding pad,
                   int64_t stride, int64_t rate, bool bias) {
  ConvSpec s;
  s.kernel_shape = std::move(kernel);
  s.stride = {stride};
  s.dilation_rate = {rate};
  s.padding = pad;
  s.in_channels = cin;
  s.out_channels = cout;
  s.bias = bias;
  return s;
}

// Criterion 2: reverse-mode gradients against central differences (eps 1e-5)
// for every differentiable operation and for the full small dd_unet
// (16x16, f1=8, k1=2, 2 levels, dilation 2). Max relative error < 1e-4.
std::string run_grad_fidelity() {
  Rng rng(11, 0, "acceptance/grad");
  double worst = 0.0;
  auto track = [&](const char* label, double err) {
    worst = std::max(worst, err);
    require(err < 1e-4, fmt("%s: grad error %.3e exceeds 1e-4", label, err));
  };

  {  // dilated same-pad conv + relu + 1x1 head
    OpGraph g;
    int n = g.add_input(2, 2);
    n = g.add_conv(n, make_spec({3, 3}, 2, 3, Padding::SameZero, 1, 2, true), "c1");
    n = g.add_relu(n);
    n = g.add_conv(n, make_spec({1, 1}, 3, 1, Padding::Valid, 1, 1, true), "head");
    g.set_output(n);
    track("dilated conv", checked_graph(g, oracles::random_tensor({1, 2, 9, 9}, rng), 3));
  }
  {  // strided valid conv
    OpGraph g;
    int n = g.add_input(1, 2);
    n = g.add_conv(n, make_spec({2, 2}, 1, 3, Padding::Valid, 2, 1, true), "down");
    n = g.add_relu(n);
    n = g.add_conv(n, make_spec({1, 1}, 3, 1, Padding::Valid, 1, 1, true), "head");
    g.set_output(n);
    track("strided conv", checked_graph(g, oracles::random_tensor({1, 1, 8, 8}, rng), 4));
  }
  {  // transposed conv upsampling
    OpGraph g;
    int n = g.add_input(3, 2);
    n = g.add_transposed_conv(n, make_spec({2, 2}, 3, 2, Padding::Valid, 2, 1, true), "up");
    n = g.add_relu(n);
    n = g.add_conv(n, make_spec({1, 1}, 2, 1, Padding::Valid, 1, 1, true), "head");
    g.set_output(n);
    track("transposed conv", checked_graph(g, oracles::random_tensor({1, 3, 4, 4}, rng), 5));
  }
  {  // concat of a conv branch and a pool + upsample branch
    OpGraph g;
    int in = g.add_input(2, 2);
    int a = g.add_conv(in, make_spec({3, 3}, 2, 2, Padding::SameZero, 1, 1, true), "a");
    int p = g.add_max_pool(in, {2, 2});
    int b = g.add_transposed_conv(p, make_spec({2, 2}, 2, 2, Padding::Valid, 2, 1, true), "b");
    int cat = g.add_concat({a, b});
    int out = g.add_conv(cat, make_spec({1, 1}, 4, 1, Padding::Valid, 1, 1, true), "head");
    g.set_output(out);
    track("concat + max_pool", checked_graph(g, oracles::random_tensor({1, 2, 8, 8}, rng), 6));
  }
  {  // 3D conv
    OpGraph g;
    int n = g.add_input(1, 3);
    n = g.add_conv(n, make_spec({3, 3, 3}, 1, 2, Padding::SameZero, 1, 1, true), "c1");
    n = g.add_relu(n);
    n = g.add_conv(n, make_spec({1, 1, 1}, 2, 1, Padding::Valid, 1, 1, true), "head");
    g.set_output(n);
    track("3d conv", checked_graph(g, oracles::random_tensor({1, 1, 5, 5, 5}, rng), 7));
  }
  {  // 1D dilated conv
    OpGraph g;
    int n = g.add_input(2, 1);
    n = g.add_conv(n, make_spec({5}, 2, 2, Padding::SameZero, 1, 3, true), "c1");
    n = g.add_relu(n);
    n = g.add_conv(n, make_spec({1}, 2, 1, Padding::Valid, 1, 1, true), "head");
    g.set_output(n);
    track("1d conv", checked_graph(g, oracles::random_tensor({1, 2, 17}, rng), 8));
  }
  {  // full dd_unet at desk scale
    NetworkConfig nc;
    nc.variant = "dd_unet";
    nc.spatial_dims = 2;
    nc.f1 = 8;
    nc.k1 = 2;
    nc.levels = 2;
    nc.dilation_rate = 2;
    OpGraph g = build_network(nc);
    track("dd_unet 16x16", checked_graph(g, oracles::random_tensor({1, 1, 16, 16}, rng), 9));
  }
  return fmt("7 graphs checked, worst relative gradient error = %.2e (tol 1e-4)", worst);
}

// Criterion 3: the map from initial pressure to recorded sensor traces is
// linear; 100 random superposition trials, relative error < 1e-8.
std::string run_forward_linearity() {
  std::vector<int64_t> extents = {24, 24};
  Medium medium = make_medium(extents, 1e-4, {1500.0, 1000.0}, nullptr, {1570.0, 1060.0}, 4);
  SensorArray sensors = make_sensor_array(extents, SensorGeometry::Circle, 8, 1, 9.0);
  Rng rng(17, 0, "acceptance/linearity");
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = oracles::random_tensor(extents, rng);
    Tensor y = oracles::random_tensor(extents, rng);
    double alpha = rng.uniform(-2.0, 2.0);
    double beta = rng.uniform(-2.0, 2.0);
    Tensor combo(extents);
    for (int64_t i = 0; i < combo.numel(); ++i) combo[i] = alpha * x[i] + beta * y[i];

    SensorData sx = simulate_forward(x, medium, sensors, 40);
    SensorData sy = simulate_forward(y, medium, sensors, 40);
    SensorData sc = simulate_forward(combo, medium, sensors, 40);

    double diff = 0.0, scale = 0.0;
    for (int64_t i = 0; i < sc.series.numel(); ++i) {
      double lin = alpha * sx.series[i] + beta * sy.series[i];
      diff = std::max(diff, std::abs(sc.series[i] - lin));
      scale = std::max(scale, std::abs(lin));
    }
    double rel = diff / std::max(scale, 1e-300);
    worst = std::max(worst, rel);
    require(rel < 1e-8, fmt("trial %d: relative error %.3e exceeds 1e-8", trial, rel));
  }
  return fmt("100 superposition trials, worst relative error = %.2e (tol 1e-8)", worst);
}

// Criterion 4: 1D pulse arrival time at a probe 200 cells away within +-2
// steps of distance/(c*dt), and interior energy drift under 1% before the
// wavefront touches a wall.
std::string run_wave_1d() {
  std::vector<int64_t> extents = {400};
  Medium medium = make_medium(extents, 1e-4, {1500.0, 1000.0}, nullptr, {1570.0, 1060.0}, 0, 0.0);
  double dt = cfl_dt(medium, 0.9);

  Tensor p0(extents);
  double sigma = 4.0;
  for (int64_t i = 0; i < 400; ++i) {
    double d = static_cast<double>(i) - 100.0;
    p0[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }

  SensorArray probe;
  probe.geometry = SensorGeometry::Arc;
  probe.n_angles = 1;
  probe.radius_cells = 0.0;
  probe.extents = extents;
  probe.positions = {{300}};

  SensorData data = simulate_forward(p0, medium, probe, 280, dt);
  int64_t best = 0;
  for (int64_t t = 1; t < data.num_timesteps(); ++t)
    if (data.series[t] > data.series[best]) best = t;
  double expected = 200.0 * medium.dx / (1500.0 * dt);
  double arrival_err = std::abs(static_cast<double>(best) - expected);
  require(arrival_err <= 2.0,
          fmt("arrival at step %lld, expected %.1f (tol +-2 steps)",
              static_cast<long long>(best), expected));

  WaveSim sim(medium, dt);
  sim.reset(p0);
  double e0 = sim.energy();
  for (int i = 0; i < 85; ++i) sim.step();  // wavefront still ~15 cells from the wall
  double drift = std::abs(sim.energy() - e0) / e0;
  require(drift < 0.01, fmt("energy drift %.3e exceeds 1%%", drift));

  return fmt("arrival %lld vs %.1f steps (tol 2), peak %.4f, energy drift %.1e (tol 1e-2)",
             static_cast<long long>(best), expected, data.series[best], drift);
}

// Criterion 5: full-view time reversal on a 64x64 homogeneous medium with 128
// circular sensors recovers a noise-free three-disc phantom to MS-SSIM >= 0.85.
std::string run_time_reversal_fullview() {
  std::vector<int64_t> extents = {64, 64};
  Tensor phantom(extents);
  const double cx[3] = {20.0, 40.0, 30.0};
  const double cy[3] = {22.0, 24.0, 44.0};
  const double rad[3] = {6.0, 4.0, 3.0};
  const double amp[3] = {1.0, 0.8, 0.6};
  for (int64_t i = 0; i < 64; ++i)
    for (int64_t j = 0; j < 64; ++j) {
      double v = 0.0;
      for (int d = 0; d < 3; ++d) {
        double dx = static_cast<double>(i) - cx[d], dy = static_cast<double>(j) - cy[d];
        if (dx * dx + dy * dy <= rad[d] * rad[d]) v = std::max(v, amp[d]);
      }
      phantom.at(i, j) = v;
    }
  phantom = box_filter(phantom, 3);
  double peak = phantom.max_value();
  for (int64_t i = 0; i < phantom.numel(); ++i) phantom[i] /= peak;

  Medium medium = make_medium(extents, 1e-4, {1500.0, 1000.0});
  SensorArray sensors = make_sensor_array(extents, SensorGeometry::Circle, 128, 1, 23.5);
  SensorData data = simulate_forward(phantom, medium, sensors);
  Tensor rec = time_reversal(data, medium, sensors);

  ScoreRow row = score_reconstruction(0, "tr", rec, phantom);
  require(row.msssim >= 0.85, fmt("MS-SSIM %.4f below 0.85", row.msssim));
  return fmt("128 sensors, full view: MS-SSIM = %.4f (threshold 0.85)", row.msssim);
}

// Criterion 6: the sparse-view study itself. Both trained networks must beat
// the time-reversal baseline by >= 0.2 mean MS-SSIM at every sparsity level,
// and the dense-dilated variant must beat the plain dense variant (positive
// mean difference, paired Wilcoxon p < 0.05) at no fewer than 2 of 3 levels.
std::string run_study_criterion() {
  ExperimentConfig cfg = default_desk_config();
  validate_experiment_config(cfg);
  StudyReport report = run_study(cfg);
  std::fputs(format_study_table(report).c_str(), stdout);
  std::fflush(stdout);

  require(report.levels.size() == 3, "expected 3 sparsity levels");
  int dd_wins = 0;
  for (const StudyLevelReport& lv : report.levels) {
    double dd_gain = lv.dd_mean - lv.tr_mean;
    double fd_gain = lv.fd_mean - lv.tr_mean;
    require(dd_gain >= 0.2, fmt("%lld angles: dd gain %.3f below 0.2",
                                static_cast<long long>(lv.n_angles), dd_gain));
    require(fd_gain >= 0.2, fmt("%lld angles: fd gain %.3f below 0.2",
                                static_cast<long long>(lv.n_angles), fd_gain));
    if (lv.diff_mean > 0.0 && lv.wilcoxon_p < 0.05) ++dd_wins;
  }
  require(dd_wins >= 2, fmt("dd beats fd (p < 0.05) at only %d of 3 levels", dd_wins));
  return fmt("gains >= 0.2 at all levels; dd > fd with p < 0.05 at %d of 3 levels", dd_wins);
}

// Criterion 7: MS-SSIM identity within 1e-9, exact symmetry, per-trial
// monotone decrease under growing noise (50 trials), and single-scale
// agreement with the per-window loop oracle within 1e-10.
std::string run_msssim_properties() {
  for (int t = 0; t < 50; ++t) {
    Tensor a = smooth_image(64, 64, 100 + static_cast<uint64_t>(t));
    double self = ms_ssim(a, a);
    require(std::abs(self - 1.0) <= 1e-9, fmt("identity off by %.3e", std::abs(self - 1.0)));
    Tensor b = smooth_image(64, 64, 900 + static_cast<uint64_t>(t));
    require(bits_equal(ms_ssim(a, b), ms_ssim(b, a)), "symmetry not exact");
  }

  const double sigmas[4] = {0.02, 0.05, 0.1, 0.2};
  for (int t = 0; t < 50; ++t) {
    Tensor base = smooth_image(64, 64, 3000 + static_cast<uint64_t>(t));
    Rng noise(4000 + static_cast<uint64_t>(t), 0, "acceptance/noise");
    Tensor unit(std::vector<int64_t>{64, 64});
    for (int64_t i = 0; i < unit.numel(); ++i) unit[i] = noise.normal();
    double prev = 2.0;
    for (double s : sigmas) {
      Tensor noisy = base;
      for (int64_t i = 0; i < noisy.numel(); ++i) noisy[i] += s * unit[i];
      double score = ms_ssim(base, noisy);
      require(score < prev, fmt("trial %d: score not decreasing at sigma %.2f", t, s));
      prev = score;
    }
  }

  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    Tensor a = smooth_image(32, 32, 7000 + static_cast<uint64_t>(t));
    Tensor b = smooth_image(32, 32, 8000 + static_cast<uint64_t>(t));
    double direct = oracles::direct_ssim_2d(a, b, 11, 1.5, 0.01, 0.03, 1.0);
    double diff = std::abs(ssim(a, b) - direct);
    worst = std::max(worst, diff);
    require(diff < 1e-10, fmt("oracle gap %.3e exceeds 1e-10", diff));
  }
  return fmt("identity/symmetry/monotonicity over 50 trials; oracle gap %.2e (tol 1e-10)", worst);
}

// Criterion 8: the noise injector hits its PSNR target; empirical PSNR over
// 20000 samples within +-0.5 dB of 25 dB.
std::string run_noise_calibration() {
  SensorData clean;
  clean.series = Tensor({10, 2000});
  Rng rng(5, 0, "acceptance/noisecal");
  for (int64_t i = 0; i < clean.series.numel(); ++i) clean.series[i] = rng.uniform(-1.0, 1.0);
  clean.dt = 1e-8;
  clean.dx = 1e-4;

  SensorData noisy = add_noise_psnr(clean, 25.0, 123);
  double peak = clean.series.max_abs();
  double mse = 0.0;
  for (int64_t i = 0; i < clean.series.numel(); ++i) {
    double d = noisy.series[i] - clean.series[i];
    mse += d * d;
  }
  mse /= static_cast<double>(clean.series.numel());
  double empirical = 10.0 * std::log10(peak * peak / mse);
  require(std::abs(empirical - 25.0) <= 0.5,
          fmt("empirical PSNR %.3f dB outside 25 +- 0.5 dB", empirical));
  return fmt("empirical PSNR %.3f dB over %lld samples (target 25 +- 0.5 dB)", empirical,
             static_cast<long long>(clean.series.numel()));
}

// Criterion 9: bit-identical phantoms, dataset tensors, initial parameters,
// and 5-step training loss trajectories for a repeated (config, seed) run on
// a single thread.
std::string run_determinism() {
#ifdef _OPENMP
  omp_set_num_threads(1);
#endif
  SpherePhantomSpec sp;
  sp.extents = {32, 32};
  sp.count_min = 3;
  sp.count_max = 6;
  sp.radius_min = 2.0;
  sp.radius_max = 5.0;
  sp.smoothing_width = 3;
  require(tensors_bit_equal(gen_spheres(sp, 42), gen_spheres(sp, 42)),
          "sphere phantom not bit-identical");
  VesselPhantomSpec vp;
  vp.extents = {64, 64};
  require(tensors_bit_equal(gen_vessels(vp, 43), gen_vessels(vp, 43)),
          "vessel phantom not bit-identical");

  ExperimentConfig cfg = default_desk_config();
  cfg.spheres.extents = {32, 32};
  cfg.spheres.count_min = 2;
  cfg.spheres.count_max = 4;
  cfg.spheres.radius_min = 2.0;
  cfg.spheres.radius_max = 5.0;
  cfg.sensors.radius_cells = 12.0;
  cfg.train_size = 2;
  cfg.test_size = 1;
  cfg.training.seed = 9;
  cfg.training.epochs = 5;
  cfg.training.batch_size = 2;  // 2 samples per batch: one step per epoch
  cfg.training.learning_rate = 1e-3;
  cfg.training.eval_interval = 0;
  cfg.network.f1 = 8;
  cfg.network.k1 = 2;
  cfg.network.levels = 2;
  validate_experiment_config(cfg);

  fs::path dir_a = scratch_dir("det_a");
  fs::path dir_b = scratch_dir("det_b");
  build_dataset(cfg, 8, dir_a.string());
  build_dataset(cfg, 8, dir_b.string());
  for (const char* split : {"train", "test"}) {
    Dataset da = load_dataset_split(dir_a.string(), split);
    Dataset db = load_dataset_split(dir_b.string(), split);
    require(da.samples.size() == db.samples.size(), "split sizes differ");
    for (size_t i = 0; i < da.samples.size(); ++i) {
      require(tensors_bit_equal(da.samples[i].input, db.samples[i].input),
              fmt("%s input %zu not bit-identical", split, i));
      require(tensors_bit_equal(da.samples[i].target, db.samples[i].target),
              fmt("%s target %zu not bit-identical", split, i));
    }
  }

  OpGraph g1 = build_network(cfg.network);
  OpGraph g2 = build_network(cfg.network);
  init_params(g1, 5);
  init_params(g2, 5);
  require(param_maps_bit_equal(g1.params(), g2.params()),
          "initial parameters not bit-identical");

  Dataset train = load_dataset_split(dir_a.string(), "train");
  fs::path out_a = scratch_dir("det_train_a");
  fs::path out_b = scratch_dir("det_train_b");
  TrainingHistory ha = train_network(cfg, cfg.network, train, nullptr, 5, out_a.string());
  TrainingHistory hb = train_network(cfg, cfg.network, train, nullptr, 5, out_b.string());
  require(ha.epoch_loss.size() == 5 && hb.epoch_loss.size() == 5, "expected 5 epochs");
  for (size_t e = 0; e < 5; ++e)
    require(bits_equal(ha.epoch_loss[e], hb.epoch_loss[e]),
            fmt("epoch %zu loss differs between runs", e));
  Checkpoint ca = load_checkpoint((out_a / "checkpoint").string());
  Checkpoint cb = load_checkpoint((out_b / "checkpoint").string());
  require(param_maps_bit_equal(ca.params, cb.params), "trained parameters differ");

  return "phantoms, dataset, initialization, and 5-step loss trajectory bit-identical";
}

// Criterion 10: 3D smoke run at 32^3: phantom, forward simulation through a
// cylindrical array, noise, time reversal, untrained 3D dd_unet forward pass;
// shapes checked end to end.
std::string run_smoke_3d() {
  std::vector<int64_t> extents = {32, 32, 32};
  SpherePhantomSpec sp;
  sp.extents = extents;
  sp.count_min = 3;
  sp.count_max = 5;
  sp.radius_min = 2.0;
  sp.radius_max = 4.0;
  sp.smoothing_width = 3;
  Tensor phantom = gen_spheres(sp, 2026);
  require(phantom.shape() == extents, "phantom shape wrong");
  require(phantom.max_value() == 1.0, "phantom not normalized");

  Medium medium =
      make_medium(extents, 1e-4, {1480.0, 1000.0}, &phantom, {1570.0, 1060.0}, 4);
  SensorArray sensors = make_sensor_array(extents, SensorGeometry::Cylinder, 16, 4, 12.0);
  require(sensors.num_sensors() == 64, "expected 16 x 4 sensors");

  SensorData data = simulate_forward(phantom, medium, sensors);
  require(data.series.extent(0) == 64, "sensor series rows wrong");
  require(data.series.all_finite(), "sensor series not finite");
  SensorData noisy = add_noise_psnr(data, 25.0, 7);

  Medium assumed = make_medium(extents, 1e-4, {1480.0, 1000.0}, nullptr, {1570.0, 1060.0}, 4);
  Tensor rec = time_reversal(noisy, assumed, sensors);
  require(rec.shape() == extents, "reconstruction shape wrong");
  require(rec.all_finite(), "reconstruction not finite");

  NetworkConfig nc;
  nc.variant = "dd_unet";
  nc.spatial_dims = 3;
  nc.f1 = 8;
  nc.k1 = 2;
  nc.levels = 2;
  nc.dilation_rate = 2;
  OpGraph g = build_network(nc);
  init_params(g, 1);
  Tensor input({1, 1, 32, 32, 32});
  for (int64_t i = 0; i < rec.numel(); ++i) input[i] = rec[i];
  Tensor out = g.forward(input);
  std::vector<int64_t> want = {1, 1, 32, 32, 32};
  require(out.shape() == want, "network output shape wrong");
  require(out.all_finite(), "network output not finite");

  return fmt("forward %lld steps, reconstruction and dd_unet output at 32^3 all finite",
             static_cast<long long>(data.num_timesteps() - 1));
}

struct Criterion {
  const char* name;
  std::string (*fn)();
  double budget_seconds;  // 0 = no budget enforced here
};

const Criterion kCriteria[] = {
    {"conv_oracle", run_conv_oracle, 60.0},
    {"grad_fidelity", run_grad_fidelity, 120.0},
    {"forward_linearity", run_forward_linearity, 120.0},
    {"wave_1d", run_wave_1d, 60.0},
    {"time_reversal_fullview", run_time_reversal_fullview, 120.0},
    {"study", run_study_criterion, 0.0},
    {"msssim_properties", run_msssim_properties, 60.0},
    {"noise_calibration", run_noise_calibration, 10.0},
    {"determinism", run_determinism, 0.0},
    {"smoke_3d", run_smoke_3d, 600.0},
};

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <criterion>\ncriteria:\n");
    for (const Criterion& c : kCriteria) std::fprintf(stderr, "  %s\n", c.name);
    return 2;
  }
  const Criterion* chosen = nullptr;
  for (const Criterion& c : kCriteria)
    if (std::string(argv[1]) == c.name) chosen = &c;
  if (chosen == nullptr) {
    std::fprintf(stderr, "unknown criterion '%s'\n", argv[1]);
    return 2;
  }

  auto start = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  try {
    detail = chosen->fn();
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (ok && chosen->budget_seconds > 0.0 && seconds > chosen->budget_seconds) {
    ok = false;
    detail = fmt("passed checks but exceeded the %.0f s budget", chosen->budget_seconds);
  }
  std::printf("[%s] %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", chosen->name, detail.c_str(),
              seconds);
  return ok ? 0 : 1;
}
