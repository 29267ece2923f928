#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "pat/errors.hpp"
#include "pat/pipeline.hpp"

namespace pat {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& item : j.items())
    if (allowed.find(item.key()) == allowed.end())
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
}

template <typename T>
void read_range(const json& j, const char* key, T& lo, T& hi, const std::string& where) {
  if (!j.contains(key)) return;
  const json& r = j.at(key);
  if (!r.is_array() || r.size() != 2)
    throw ConfigError(where + ": '" + key + "' must be a [min, max] pair");
  lo = r[0].get<T>();
  hi = r[1].get<T>();
}

json range_json(double lo, double hi) { return json::array({lo, hi}); }
json range_json(int64_t lo, int64_t hi) { return json::array({lo, hi}); }

json medium_params_to_json(const MediumParams& p) {
  return json{{"sound_speed", p.sound_speed}, {"density", p.density}};
}

MediumParams medium_params_from_json(const json& j, const std::string& where) {
  check_keys(j, {"sound_speed", "density"}, where);
  MediumParams p;
  if (j.contains("sound_speed")) p.sound_speed = j.at("sound_speed").get<double>();
  if (j.contains("density")) p.density = j.at("density").get<double>();
  return p;
}

json sphere_spec_to_json(const SpherePhantomSpec& s) {
  return json{{"extents", s.extents},
              {"count", range_json(s.count_min, s.count_max)},
              {"radius", range_json(s.radius_min, s.radius_max)},
              {"magnitude", range_json(s.magnitude_min, s.magnitude_max)},
              {"smoothing_width", s.smoothing_width}};
}

SpherePhantomSpec sphere_spec_from_json(const json& j, const std::string& where) {
  check_keys(j, {"extents", "count", "radius", "magnitude", "smoothing_width"}, where);
  SpherePhantomSpec s;
  if (j.contains("extents")) s.extents = j.at("extents").get<std::vector<int64_t>>();
  read_range(j, "count", s.count_min, s.count_max, where);
  read_range(j, "radius", s.radius_min, s.radius_max, where);
  read_range(j, "magnitude", s.magnitude_min, s.magnitude_max, where);
  if (j.contains("smoothing_width")) s.smoothing_width = j.at("smoothing_width").get<int64_t>();
  return s;
}

json vessel_spec_to_json(const VesselPhantomSpec& s) {
  return json{{"extents", s.extents},
              {"branches", range_json(s.branches_min, s.branches_max)},
              {"radius", range_json(s.radius_min, s.radius_max)},
              {"steps", range_json(s.steps_min, s.steps_max)},
              {"curl", s.curl},
              {"magnitude", range_json(s.magnitude_min, s.magnitude_max)},
              {"smoothing_width", s.smoothing_width}};
}

VesselPhantomSpec vessel_spec_from_json(const json& j, const std::string& where) {
  check_keys(j, {"extents", "branches", "radius", "steps", "curl", "magnitude",
                 "smoothing_width"},
             where);
  VesselPhantomSpec s;
  if (j.contains("extents")) s.extents = j.at("extents").get<std::vector<int64_t>>();
  read_range(j, "branches", s.branches_min, s.branches_max, where);
  read_range(j, "radius", s.radius_min, s.radius_max, where);
  read_range(j, "steps", s.steps_min, s.steps_max, where);
  if (j.contains("curl")) s.curl = j.at("curl").get<double>();
  read_range(j, "magnitude", s.magnitude_min, s.magnitude_max, where);
  if (j.contains("smoothing_width")) s.smoothing_width = j.at("smoothing_width").get<int64_t>();
  return s;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  j["phantom"] = json{{"kind", cfg.phantom_kind},
                      {"spheres", sphere_spec_to_json(cfg.spheres)},
                      {"vessels", vessel_spec_to_json(cfg.vessels)}};
  j["medium"] = json{{"background", medium_params_to_json(cfg.medium.background)},
                     {"inclusion", medium_params_to_json(cfg.medium.inclusion)},
                     {"assumed_background", medium_params_to_json(cfg.medium.assumed_background)},
                     {"sponge_width", cfg.medium.sponge_width},
                     {"sponge_strength", cfg.medium.sponge_strength}};
  j["sensors"] = json{{"geometry", sensor_geometry_name(cfg.sensors.geometry)},
                      {"radius_cells", cfg.sensors.radius_cells},
                      {"n_z", cfg.sensors.n_z},
                      {"sparsity_levels", cfg.sensors.sparsity_levels}};
  j["noise_psnr_db"] = cfg.noise_psnr_db;
  j["simulation"] = json{{"dx", cfg.simulation.dx},
                         {"cfl_safety", cfg.simulation.cfl_safety},
                         {"num_steps", cfg.simulation.num_steps}};
  j["network"] = network_config_to_json(cfg.network);
  j["training"] = json{{"learning_rate", cfg.training.learning_rate},
                       {"batch_size", cfg.training.batch_size},
                       {"epochs", cfg.training.epochs},
                       {"seed", cfg.training.seed},
                       {"checkpoint_interval", cfg.training.checkpoint_interval},
                       {"eval_interval", cfg.training.eval_interval},
                       {"eval_subset", cfg.training.eval_subset}};
  j["dataset"] = json{{"train_size", cfg.train_size}, {"test_size", cfg.test_size}};
  j["output_dir"] = cfg.output_dir;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j,
             {"schema_version", "phantom", "medium", "sensors", "noise_psnr_db", "simulation",
              "network", "training", "dataset", "output_dir"},
             "config");
  if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
  if (j.at("schema_version").get<int64_t>() != 1)
    throw ConfigError("config: unsupported schema_version " + j.at("schema_version").dump());

  ExperimentConfig cfg = default_desk_config();
  if (j.contains("phantom")) {
    const json& p = j.at("phantom");
    check_keys(p, {"kind", "spheres", "vessels"}, "config.phantom");
    if (p.contains("kind")) cfg.phantom_kind = p.at("kind").get<std::string>();
    if (p.contains("spheres"))
      cfg.spheres = sphere_spec_from_json(p.at("spheres"), "config.phantom.spheres");
    if (p.contains("vessels"))
      cfg.vessels = vessel_spec_from_json(p.at("vessels"), "config.phantom.vessels");
  }
  if (j.contains("medium")) {
    const json& m = j.at("medium");
    check_keys(m, {"background", "inclusion", "assumed_background", "sponge_width",
                   "sponge_strength"},
               "config.medium");
    if (m.contains("background"))
      cfg.medium.background = medium_params_from_json(m.at("background"),
                                                      "config.medium.background");
    if (m.contains("inclusion"))
      cfg.medium.inclusion = medium_params_from_json(m.at("inclusion"),
                                                     "config.medium.inclusion");
    if (m.contains("assumed_background"))
      cfg.medium.assumed_background =
          medium_params_from_json(m.at("assumed_background"), "config.medium.assumed_background");
    if (m.contains("sponge_width")) cfg.medium.sponge_width = m.at("sponge_width").get<int64_t>();
    if (m.contains("sponge_strength"))
      cfg.medium.sponge_strength = m.at("sponge_strength").get<double>();
  }
  if (j.contains("sensors")) {
    const json& s = j.at("sensors");
    check_keys(s, {"geometry", "radius_cells", "n_z", "sparsity_levels"}, "config.sensors");
    if (s.contains("geometry"))
      cfg.sensors.geometry = parse_sensor_geometry(s.at("geometry").get<std::string>());
    if (s.contains("radius_cells")) cfg.sensors.radius_cells = s.at("radius_cells").get<double>();
    if (s.contains("n_z")) cfg.sensors.n_z = s.at("n_z").get<int64_t>();
    if (s.contains("sparsity_levels"))
      cfg.sensors.sparsity_levels = s.at("sparsity_levels").get<std::vector<int64_t>>();
  }
  if (j.contains("noise_psnr_db")) cfg.noise_psnr_db = j.at("noise_psnr_db").get<double>();
  if (j.contains("simulation")) {
    const json& s = j.at("simulation");
    check_keys(s, {"dx", "cfl_safety", "num_steps"}, "config.simulation");
    if (s.contains("dx")) cfg.simulation.dx = s.at("dx").get<double>();
    if (s.contains("cfl_safety")) cfg.simulation.cfl_safety = s.at("cfl_safety").get<double>();
    if (s.contains("num_steps")) cfg.simulation.num_steps = s.at("num_steps").get<int64_t>();
  }
  if (j.contains("network")) cfg.network = network_config_from_json(j.at("network"));
  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, {"learning_rate", "batch_size", "epochs", "seed", "checkpoint_interval",
                   "eval_interval", "eval_subset"},
               "config.training");
    if (t.contains("learning_rate")) cfg.training.learning_rate = t.at("learning_rate").get<double>();
    if (t.contains("batch_size")) cfg.training.batch_size = t.at("batch_size").get<int64_t>();
    if (t.contains("epochs")) cfg.training.epochs = t.at("epochs").get<int64_t>();
    if (t.contains("seed")) cfg.training.seed = t.at("seed").get<uint64_t>();
    if (t.contains("checkpoint_interval"))
      cfg.training.checkpoint_interval = t.at("checkpoint_interval").get<int64_t>();
    if (t.contains("eval_interval")) cfg.training.eval_interval = t.at("eval_interval").get<int64_t>();
    if (t.contains("eval_subset")) cfg.training.eval_subset = t.at("eval_subset").get<int64_t>();
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, {"train_size", "test_size"}, "config.dataset");
    if (d.contains("train_size")) cfg.train_size = d.at("train_size").get<int64_t>();
    if (d.contains("test_size")) cfg.test_size = d.at("test_size").get<int64_t>();
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  return cfg;
}

}  // namespace

const std::vector<int64_t>& ExperimentConfig::extents() const {
  return phantom_kind == "vessels" ? vessels.extents : spheres.extents;
}

void validate_experiment_config(const ExperimentConfig& cfg) {
  if (cfg.phantom_kind == "spheres")
    validate_sphere_spec(cfg.spheres);
  else if (cfg.phantom_kind == "vessels")
    validate_vessel_spec(cfg.vessels);
  else
    throw ConfigError("config: phantom kind must be 'spheres' or 'vessels'");

  validate_network_config(cfg.network);
  if (static_cast<int64_t>(cfg.extents().size()) != cfg.network.spatial_dims)
    throw ConfigError("config: phantom extents are " +
                      std::to_string(cfg.extents().size()) + "D but the network expects " +
                      std::to_string(cfg.network.spatial_dims) + "D");

  if (cfg.sensors.sparsity_levels.empty())
    throw ConfigError("config: sparsity_levels must not be empty");
  for (int64_t n : cfg.sensors.sparsity_levels)
    if (n < 1) throw ConfigError("config: every sparsity level needs at least one angle");
  if (!(cfg.sensors.radius_cells > 0.0)) throw ConfigError("config: sensor radius must be positive");

  if (!(cfg.simulation.dx > 0.0)) throw ConfigError("config: dx must be positive");
  if (!(cfg.simulation.cfl_safety > 0.0) || cfg.simulation.cfl_safety > 1.0)
    throw ConfigError("config: cfl_safety must be in (0, 1]");
  if (!std::isfinite(cfg.noise_psnr_db)) throw ConfigError("config: noise_psnr_db must be finite");

  if (cfg.training.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (cfg.training.epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (!(cfg.training.learning_rate > 0.0))
    throw ConfigError("config: learning_rate must be positive");
  if (cfg.train_size < 1 || cfg.test_size < 1)
    throw ConfigError("config: train and test sizes must be >= 1");
  if (cfg.output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
}

ExperimentConfig default_desk_config() {
  ExperimentConfig cfg;
  cfg.spheres.extents = {64, 64};
  cfg.spheres.count_min = 6;
  cfg.spheres.count_max = 12;
  cfg.spheres.radius_min = 2.0;
  cfg.spheres.radius_max = 6.0;
  cfg.vessels.extents = {64, 64};
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_experiment_config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("load_experiment_config: " + path + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("load_experiment_config: " + path + ": " + e.what());
  }
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_experiment_config: cannot open " + path);
  out << config_to_json(cfg).dump(2) << "\n";
  if (!out) throw IoError("save_experiment_config: write failed for " + path);
}

}  // namespace pat
