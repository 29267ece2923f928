#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pat/errors.hpp"
#include "pat/io.hpp"
#include "pat/metrics.hpp"
#include "pat/parallel.hpp"
#include "pat/pipeline.hpp"
#include "pat/rng.hpp"

namespace fs = std::filesystem;
using namespace pat;

namespace {

struct GlobalOpts {
  std::string config_path;
  int64_t seed = -1;  // negative = keep the config's seed
  std::string out = "runs/cli";
  int threads = 0;
  bool deterministic = false;
};

ExperimentConfig resolve_config(const GlobalOpts& g) {
  ExperimentConfig cfg =
      g.config_path.empty() ? default_desk_config() : load_experiment_config(g.config_path);
  if (g.seed >= 0) cfg.training.seed = static_cast<uint64_t>(g.seed);
  validate_experiment_config(cfg);
  return cfg;
}

void apply_threads(const GlobalOpts& g) {
  if (g.deterministic)
    set_num_threads(1);
  else if (g.threads > 0)
    set_num_threads(g.threads);
}

fs::path ensure_out_dir(const GlobalOpts& g) {
  fs::path dir(g.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

std::string indexed(const char* stem, int64_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, static_cast<int>(i), ext);
  return buf;
}

Medium assumed_medium_for(const ExperimentConfig& cfg, const std::vector<int64_t>& extents,
                          double dx) {
  return make_medium(extents, dx, cfg.medium.assumed_background, nullptr, cfg.medium.inclusion,
                     cfg.medium.sponge_width, cfg.medium.sponge_strength);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photoacoustic tomography workbench: simulate, reconstruct, train, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "Experiment configuration JSON");
  app.add_option("--seed", g.seed, "Override the configuration's master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker thread count");
  app.add_flag("--deterministic", g.deterministic, "Force single-threaded numerics");

  int64_t sample_index = 0;
  int64_t n_angles = 0;
  int64_t axis = 0;
  std::string in_path;
  std::string dataset_dir;
  std::string checkpoint_dir;
  std::string variant;
  std::vector<std::string> input_files;
  std::vector<std::string> named_checkpoints;

  CLI::App* c_phantom = app.add_subcommand("phantom-gen", "Generate a ground-truth phantom");
  c_phantom->add_option("--index", sample_index, "Sample index within the seeded stream");

  CLI::App* c_sim = app.add_subcommand("simulate", "Phantom, forward simulation, noisy sensor data");
  c_sim->add_option("--index", sample_index, "Sample index within the seeded stream");
  c_sim->add_option("--angles", n_angles, "Sensor angle count (default: first sparsity level)");

  CLI::App* c_tr = app.add_subcommand("reconstruct-tr", "Time-reversal reconstruction");
  c_tr->add_option("--in", in_path, "Sensor data file (.patn with JSON sidecar)")->required();

  CLI::App* c_build = app.add_subcommand("build-dataset", "Build train/test pairs per sparsity level");

  CLI::App* c_train = app.add_subcommand("train", "Train a network on a built dataset");
  c_train->add_option("--dataset", dataset_dir, "Dataset directory (holds train/ and test/)")
      ->required();
  c_train->add_option("--variant", variant, "dd_unet or fd_unet (default: config)");

  CLI::App* c_infer = app.add_subcommand("infer", "Run a checkpoint over stored images");
  c_infer->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory")->required();
  c_infer->add_option("--input", input_files, "Input .patn images")->required();

  CLI::App* c_eval = app.add_subcommand("evaluate", "Score reconstructions against ground truth");
  c_eval->add_option("--dataset", dataset_dir, "Dataset directory (holds train/ and test/)")
      ->required();
  c_eval->add_option("--checkpoint", named_checkpoints,
                     "name=dir checkpoint to score alongside time reversal");

  CLI::App* c_study = app.add_subcommand("study", "Full sparsity study: datasets, training, report");

  CLI::App* c_mip = app.add_subcommand("export-mip", "Export a maximum intensity projection PGM");
  c_mip->add_option("--in", in_path, "Volume .patn file")->required();
  c_mip->add_option("--axis", axis, "Projection axis");

  CLI11_PARSE(app, argc, argv);

  try {
    apply_threads(g);

    if (*c_phantom) {
      ExperimentConfig cfg = resolve_config(g);
      fs::path dir = ensure_out_dir(g);
      Tensor phantom = phantom_for_sample(cfg, sample_index);
      save_tensor(phantom, dir / indexed("phantom", sample_index, "patn"));
      export_image(phantom, (dir / indexed("phantom", sample_index, "pgm")).string(),
                   phantom.ndim() == 3 ? "mip" : "slice", 0);
      std::cout << "wrote " << (dir / indexed("phantom", sample_index, "patn")).string() << "\n";
    } else if (*c_sim) {
      ExperimentConfig cfg = resolve_config(g);
      fs::path dir = ensure_out_dir(g);
      if (n_angles <= 0) n_angles = cfg.sensors.sparsity_levels.front();
      Tensor phantom = phantom_for_sample(cfg, sample_index);
      SensorArray sensors = make_sensor_array(cfg.extents(), cfg.sensors.geometry, n_angles,
                                              cfg.sensors.n_z, cfg.sensors.radius_cells);
      Medium medium = make_medium(cfg.extents(), cfg.simulation.dx, cfg.medium.background,
                                  &phantom, cfg.medium.inclusion, cfg.medium.sponge_width,
                                  cfg.medium.sponge_strength);
      SensorData data = simulate_forward(phantom, medium, sensors, cfg.simulation.num_steps,
                                         cfl_dt(medium, cfg.simulation.cfl_safety));
      if (cfg.noise_psnr_db > 0.0 && data.series.max_abs() > 0.0) {
        uint64_t noise_seed =
            Rng(cfg.training.seed, static_cast<uint64_t>(sample_index), "dataset/noise")
                .next_u64();
        data = add_noise_psnr(data, cfg.noise_psnr_db, noise_seed);
      }
      save_tensor(phantom, dir / indexed("phantom", sample_index, "patn"));
      save_sensor_data(data, (dir / indexed("sensors", sample_index, "patn")).string());
      std::cout << "wrote " << (dir / indexed("sensors", sample_index, "patn")).string() << " ("
                << data.num_sensors() << " sensors x " << data.num_timesteps() << " steps)\n";
    } else if (*c_tr) {
      ExperimentConfig cfg = resolve_config(g);
      fs::path dir = ensure_out_dir(g);
      SensorData data = load_sensor_data(in_path);
      Medium assumed = assumed_medium_for(cfg, data.sensors.extents, data.dx);
      Tensor recon = time_reversal(data, assumed, data.sensors);
      save_tensor(recon, dir / "recon.patn");
      export_image(recon, (dir / "recon.pgm").string(), recon.ndim() == 3 ? "mip" : "slice", 0);
      std::cout << "wrote " << (dir / "recon.patn").string() << "\n";
    } else if (*c_build) {
      ExperimentConfig cfg = resolve_config(g);
      std::string root = g.out == "runs/cli" ? cfg.output_dir : g.out;
      for (int64_t level : cfg.sensors.sparsity_levels) {
        char name[32];
        std::snprintf(name, sizeof(name), "level_%03d", static_cast<int>(level));
        build_dataset(cfg, level, (fs::path(root) / name).string());
        std::cout << "built " << (fs::path(root) / name).string() << "\n";
      }
    } else if (*c_train) {
      ExperimentConfig cfg = resolve_config(g);
      fs::path dir = ensure_out_dir(g);
      NetworkConfig net = cfg.network;
      if (!variant.empty()) net.variant = variant;
      validate_network_config(net);
      Dataset train = load_dataset_split(dataset_dir, "train");
      Dataset test = load_dataset_split(dataset_dir, "test");
      uint64_t init_seed = Rng(cfg.training.seed, 0, "init/" + net.variant).next_u64();
      TrainingHistory history = train_network(cfg, net, train, &test, init_seed, dir.string());
      if (!history.epoch_loss.empty())
        std::cout << "final epoch loss " << history.epoch_loss.back() << "\n";
      std::cout << "wrote " << (dir / "checkpoint").string() << "\n";
    } else if (*c_infer) {
      fs::path dir = ensure_out_dir(g);
      Checkpoint ckpt = load_checkpoint(checkpoint_dir);
      std::vector<Tensor> inputs;
      for (const std::string& f : input_files) inputs.push_back(load_tensor(f));
      std::vector<Tensor> outputs = run_inference(ckpt, inputs);
      for (size_t i = 0; i < outputs.size(); ++i) {
        save_tensor(outputs[i], dir / indexed("recon", static_cast<int64_t>(i), "patn"));
        export_image(outputs[i], (dir / indexed("recon", static_cast<int64_t>(i), "pgm")).string(),
                     outputs[i].ndim() == 3 ? "mip" : "slice", 0);
      }
      std::cout << "wrote " << outputs.size() << " reconstruction(s) to " << dir.string() << "\n";
    } else if (*c_eval) {
      fs::path dir = ensure_out_dir(g);
      Dataset test = load_dataset_split(dataset_dir, "test");
      std::vector<ScoreRow> rows;
      for (const auto& s : test.samples)
        rows.push_back(score_reconstruction(s.id, "time_reversal", s.input, s.target));
      for (const std::string& named : named_checkpoints) {
        size_t eq = named.find('=');
        if (eq == std::string::npos)
          throw ConfigError("evaluate: --checkpoint expects name=dir, got '" + named + "'");
        std::string name = named.substr(0, eq);
        Checkpoint ckpt = load_checkpoint(named.substr(eq + 1));
        std::vector<Tensor> inputs;
        for (const auto& s : test.samples) inputs.push_back(s.input);
        std::vector<Tensor> outputs = run_inference(ckpt, inputs);
        for (size_t i = 0; i < outputs.size(); ++i)
          rows.push_back(
              score_reconstruction(test.samples[i].id, name, outputs[i], test.samples[i].target));
      }
      write_scores_csv(rows, (dir / "scores.csv").string());
      std::cout << "wrote " << (dir / "scores.csv").string() << "\n";
    } else if (*c_study) {
      ExperimentConfig cfg = resolve_config(g);
      if (g.out != "runs/cli") cfg.output_dir = g.out;
      StudyReport report = run_study(cfg);
      std::cout << format_study_table(report);
      std::cout << "summary: " << (fs::path(cfg.output_dir) / "summary.csv").string() << "\n";
    } else if (*c_mip) {
      fs::path dir = ensure_out_dir(g);
      Tensor volume = load_tensor(in_path);
      export_image(volume, (dir / "mip.pgm").string(), "mip", axis);
      std::cout << "wrote " << (dir / "mip.pgm").string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
