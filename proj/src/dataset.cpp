#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "pat/errors.hpp"
#include "pat/io.hpp"
#include "pat/parallel.hpp"
#include "pat/pipeline.hpp"
#include "pat/rng.hpp"

namespace pat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sample_file(const char* stem, int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.patn", stem, static_cast<int>(id));
  return buf;
}

// Digest over everything that shapes the stored pairs, so rebuilt datasets
// can be reused when nothing relevant changed.
std::string dataset_digest(const ExperimentConfig& cfg, int64_t n_angles) {
  json j;
  j["kind"] = cfg.phantom_kind;
  if (cfg.phantom_kind == "spheres") {
    const auto& s = cfg.spheres;
    j["spec"] = {s.count_min,     s.count_max,     s.radius_min,    s.radius_max,
                 s.magnitude_min, s.magnitude_max, s.smoothing_width};
    j["extents"] = s.extents;
  } else {
    const auto& v = cfg.vessels;
    j["spec"] = {static_cast<double>(v.branches_min), static_cast<double>(v.branches_max),
                 v.radius_min,    v.radius_max,    static_cast<double>(v.steps_min),
                 static_cast<double>(v.steps_max), v.curl,          v.magnitude_min,
                 v.magnitude_max, static_cast<double>(v.smoothing_width)};
    j["extents"] = v.extents;
  }
  j["medium"] = {cfg.medium.background.sound_speed,  cfg.medium.background.density,
                 cfg.medium.inclusion.sound_speed,   cfg.medium.inclusion.density,
                 cfg.medium.assumed_background.sound_speed,
                 cfg.medium.assumed_background.density,
                 static_cast<double>(cfg.medium.sponge_width), cfg.medium.sponge_strength};
  j["sensors"] = {sensor_geometry_name(cfg.sensors.geometry),
                  std::to_string(cfg.sensors.radius_cells), std::to_string(cfg.sensors.n_z)};
  j["n_angles"] = n_angles;
  j["noise_psnr_db"] = cfg.noise_psnr_db;
  j["simulation"] = {cfg.simulation.dx, cfg.simulation.cfl_safety,
                     static_cast<double>(cfg.simulation.num_steps)};
  j["sizes"] = {cfg.train_size, cfg.test_size};
  j["seed"] = cfg.training.seed;

  std::string s = j.dump();
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool split_is_current(const fs::path& split_dir, const std::string& digest, int64_t count) {
  std::ifstream in(split_dir / "manifest.json");
  if (!in) return false;
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return false;
  }
  if (!j.contains("config_digest") || j.at("config_digest") != digest) return false;
  if (!j.contains("samples") || static_cast<int64_t>(j.at("samples").size()) != count)
    return false;
  for (const auto& s : j.at("samples")) {
    if (!fs::exists(split_dir / s.at("input").get<std::string>())) return false;
    if (!fs::exists(split_dir / s.at("target").get<std::string>())) return false;
  }
  return true;
}

}  // namespace

Tensor phantom_for_sample(const ExperimentConfig& cfg, int64_t global_index) {
  uint64_t seed =
      Rng(cfg.training.seed, static_cast<uint64_t>(global_index), "dataset/sample").next_u64();
  if (cfg.phantom_kind == "vessels") return gen_vessels(cfg.vessels, seed);
  return gen_spheres(cfg.spheres, seed);
}

void build_dataset(const ExperimentConfig& cfg, int64_t n_angles, const std::string& dir) {
  validate_experiment_config(cfg);
  const std::vector<int64_t>& extents = cfg.extents();
  SensorArray sensors = make_sensor_array(extents, cfg.sensors.geometry, n_angles,
                                          cfg.sensors.n_z, cfg.sensors.radius_cells);
  Medium assumed = make_medium(extents, cfg.simulation.dx, cfg.medium.assumed_background,
                               nullptr, cfg.medium.inclusion, cfg.medium.sponge_width,
                               cfg.medium.sponge_strength);
  std::string digest = dataset_digest(cfg, n_angles);

  struct Split {
    const char* name;
    int64_t offset;
    int64_t count;
  };
  const Split splits[2] = {{"train", 0, cfg.train_size}, {"test", cfg.train_size, cfg.test_size}};

  for (const Split& split : splits) {
    fs::path split_dir = fs::path(dir) / split.name;
    if (split_is_current(split_dir, digest, split.count)) continue;

    std::error_code ec;
    fs::create_directories(split_dir, ec);
    if (ec) throw IoError("build_dataset: cannot create " + split_dir.string());

    std::vector<Tensor> inputs(static_cast<size_t>(split.count));
    std::vector<Tensor> targets(static_cast<size_t>(split.count));
    std::vector<uint64_t> seeds(static_cast<size_t>(split.count));

    parallel_for(0, split.count, [&](int64_t i) {
      int64_t gidx = split.offset + i;
      try {
        Tensor phantom = phantom_for_sample(cfg, gidx);
        Medium true_medium =
            make_medium(extents, cfg.simulation.dx, cfg.medium.background, &phantom,
                        cfg.medium.inclusion, cfg.medium.sponge_width,
                        cfg.medium.sponge_strength);
        double dt = cfl_dt(true_medium, cfg.simulation.cfl_safety);
        SensorData data =
            simulate_forward(phantom, true_medium, sensors, cfg.simulation.num_steps, dt);
        if (cfg.noise_psnr_db > 0.0 && data.series.max_abs() > 0.0) {
          uint64_t noise_seed =
              Rng(cfg.training.seed, static_cast<uint64_t>(gidx), "dataset/noise").next_u64();
          data = add_noise_psnr(data, cfg.noise_psnr_db, noise_seed);
        }
        Tensor recon = time_reversal(data, assumed, sensors);
        seeds[static_cast<size_t>(i)] =
            Rng(cfg.training.seed, static_cast<uint64_t>(gidx), "dataset/sample").next_u64();
        inputs[static_cast<size_t>(i)] = std::move(recon);
        targets[static_cast<size_t>(i)] = std::move(phantom);
      } catch (const Error& e) {
        throw Error("build_dataset: sample " + std::to_string(gidx) + ": " + e.what());
      }
    });

    json manifest;
    manifest["schema_version"] = 1;
    manifest["split"] = split.name;
    manifest["extents"] = extents;
    manifest["n_angles"] = n_angles;
    manifest["config_digest"] = digest;
    json samples = json::array();
    for (int64_t i = 0; i < split.count; ++i) {
      int64_t gidx = split.offset + i;
      std::string input_name = sample_file("input", gidx);
      std::string target_name = sample_file("target", gidx);
      save_tensor(inputs[static_cast<size_t>(i)], split_dir / input_name);
      save_tensor(targets[static_cast<size_t>(i)], split_dir / target_name);
      samples.push_back(json{{"id", gidx},
                             {"seed", seeds[static_cast<size_t>(i)]},
                             {"input", input_name},
                             {"target", target_name}});
    }
    manifest["samples"] = std::move(samples);

    std::ofstream out(split_dir / "manifest.json");
    if (!out) throw IoError("build_dataset: cannot write manifest in " + split_dir.string());
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("build_dataset: manifest write failed in " + split_dir.string());
  }
}

Dataset load_dataset_split(const std::string& dir, const std::string& split) {
  fs::path split_dir = fs::path(dir) / split;
  std::ifstream in(split_dir / "manifest.json");
  if (!in) throw IoError("load_dataset_split: cannot open manifest in " + split_dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("load_dataset_split: bad manifest: " + std::string(e.what()));
  }

  Dataset ds;
  try {
    ds.extents = j.at("extents").get<std::vector<int64_t>>();
    ds.n_angles = j.at("n_angles").get<int64_t>();
    for (const auto& s : j.at("samples")) {
      DatasetSample sample;
      sample.id = s.at("id").get<int64_t>();
      sample.seed = s.at("seed").get<uint64_t>();
      sample.input = load_tensor(split_dir / s.at("input").get<std::string>());
      sample.target = load_tensor(split_dir / s.at("target").get<std::string>());
      if (sample.input.shape() != ds.extents || sample.target.shape() != ds.extents)
        throw IoError("load_dataset_split: sample " + std::to_string(sample.id) +
                      " does not match the manifest extents");
      ds.samples.push_back(std::move(sample));
    }
  } catch (const json::exception& e) {
    throw IoError("load_dataset_split: bad manifest: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace pat
