#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "pat/errors.hpp"
#include "pat/io.hpp"
#include "pat/metrics.hpp"
#include "pat/pipeline.hpp"
#include "pat/rng.hpp"

namespace pat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string numbered(const char* stem, int64_t i) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s_%04d.patn", stem, static_cast<int>(i));
  return buf;
}

// Stacks spatial tensors into (batch, 1, spatial...) network input.
Tensor stack_batch(const Dataset& ds, const std::vector<int64_t>& ids, bool targets) {
  std::vector<int64_t> shape = {static_cast<int64_t>(ids.size()), 1};
  shape.insert(shape.end(), ds.extents.begin(), ds.extents.end());
  Tensor out(shape);
  int64_t plane = out.numel() / static_cast<int64_t>(ids.size());
  for (size_t b = 0; b < ids.size(); ++b) {
    const DatasetSample& s = ds.samples[static_cast<size_t>(ids[b])];
    const Tensor& src = targets ? s.target : s.input;
    std::copy(src.data(), src.data() + plane, out.data() + static_cast<int64_t>(b) * plane);
  }
  return out;
}

Tensor clamp_nonnegative(Tensor t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (t[i] < 0.0) t[i] = 0.0;
  return t;
}

void write_history(const TrainingHistory& history, const fs::path& path) {
  json j;
  j["schema_version"] = 1;
  j["epoch_loss"] = history.epoch_loss;
  j["epoch_seconds"] = history.epoch_seconds;
  json evals = json::array();
  for (const auto& e : history.evals)
    evals.push_back(json{{"epoch", e.epoch}, {"mean_msssim", e.mean_msssim}});
  j["evals"] = std::move(evals);
  std::ofstream out(path);
  if (!out) throw IoError("train_network: cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("save_checkpoint: cannot create " + dir);

  json manifest;
  manifest["schema_version"] = 1;
  manifest["network"] = network_config_to_json(ckpt.network);
  manifest["epoch"] = ckpt.epoch;
  manifest["optimizer"] = json{{"step_count", ckpt.adam.step_count},
                               {"beta1", ckpt.adam.beta1},
                               {"beta2", ckpt.adam.beta2},
                               {"epsilon", ckpt.adam.epsilon}};

  json params = json::array();
  int64_t i = 0;
  for (const auto& [name, tensor] : ckpt.params) {
    std::string file = numbered("param", i++);
    save_tensor(tensor, fs::path(dir) / file);
    params.push_back(json{{"name", name}, {"file", file}});
  }
  manifest["params"] = std::move(params);

  json moments = json::array();
  if (!ckpt.adam.first_moment.empty()) {
    i = 0;
    for (const auto& [name, m] : ckpt.adam.first_moment) {
      auto v_it = ckpt.adam.second_moment.find(name);
      if (v_it == ckpt.adam.second_moment.end())
        throw StateError("save_checkpoint: second moment missing for '" + name + "'");
      std::string m_file = numbered("moment_m", i);
      std::string v_file = numbered("moment_v", i);
      ++i;
      save_tensor(m, fs::path(dir) / m_file);
      save_tensor(v_it->second, fs::path(dir) / v_file);
      moments.push_back(json{{"name", name}, {"m", m_file}, {"v", v_file}});
    }
  }
  manifest["moments"] = std::move(moments);

  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("save_checkpoint: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("save_checkpoint: manifest write failed in " + dir);
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw IoError("load_checkpoint: cannot open manifest in " + dir);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("load_checkpoint: bad manifest: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  try {
    ckpt.network = network_config_from_json(j.at("network"));
    ckpt.epoch = j.at("epoch").get<int64_t>();
    const json& opt = j.at("optimizer");
    ckpt.adam.step_count = opt.at("step_count").get<int64_t>();
    ckpt.adam.beta1 = opt.at("beta1").get<double>();
    ckpt.adam.beta2 = opt.at("beta2").get<double>();
    ckpt.adam.epsilon = opt.at("epsilon").get<double>();
    for (const auto& p : j.at("params"))
      ckpt.params[p.at("name").get<std::string>()] =
          load_tensor(fs::path(dir) / p.at("file").get<std::string>());
    for (const auto& m : j.at("moments")) {
      std::string name = m.at("name").get<std::string>();
      ckpt.adam.first_moment[name] = load_tensor(fs::path(dir) / m.at("m").get<std::string>());
      ckpt.adam.second_moment[name] = load_tensor(fs::path(dir) / m.at("v").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw IoError("load_checkpoint: bad manifest: " + std::string(e.what()));
  }
  return ckpt;
}

TrainingHistory train_network(const ExperimentConfig& cfg, const NetworkConfig& net_cfg,
                              const Dataset& train, const Dataset* held_out, uint64_t init_seed,
                              const std::string& out_dir) {
  if (train.samples.empty()) throw ConfigError("train_network: empty training set");
  if (train.extents != cfg.extents())
    throw DimensionError("train_network: dataset extents do not match the configuration");

  OpGraph graph = build_network(net_cfg);
  init_params(graph, init_seed);

  AdamState adam;
  adam.learning_rate = cfg.training.learning_rate;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("train_network: cannot create " + out_dir);

  TrainingHistory history;
  int64_t n = static_cast<int64_t>(train.samples.size());
  int64_t batch_size = std::min<int64_t>(cfg.training.batch_size, n);
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  // Progress lines go with the held-out snapshots: the study passes a test
  // split and wants visible progress over its multi-hour run, unit-scale
  // callers pass nullptr and stay quiet.
  auto snapshot = [&](int64_t epoch) {
    if (held_out == nullptr || cfg.training.eval_interval <= 0 || held_out->samples.empty())
      return;
    if (epoch % cfg.training.eval_interval != 0 && epoch != cfg.training.epochs) return;
    int64_t count = std::min<int64_t>(cfg.training.eval_subset,
                                      static_cast<int64_t>(held_out->samples.size()));
    if (count < 1) return;
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) {
      const DatasetSample& s = held_out->samples[static_cast<size_t>(i)];
      Tensor out = graph.forward(stack_batch(*held_out, {i}, false));
      Tensor img = clamp_nonnegative(out.reshaped(held_out->extents));
      acc += ms_ssim(img, s.target);
    }
    history.evals.push_back({epoch, acc / static_cast<double>(count)});
    std::printf("[train %s] epoch %lld/%lld loss %.3e heldout msssim %.4f\n",
                net_cfg.variant.c_str(), static_cast<long long>(epoch),
                static_cast<long long>(cfg.training.epochs), history.epoch_loss.back(),
                history.evals.back().mean_msssim);
    std::fflush(stdout);
  };

  if (held_out != nullptr) {
    std::printf("[train %s] %lld samples, %lld params, %lld epochs, lr %.1e\n",
                net_cfg.variant.c_str(), static_cast<long long>(n),
                static_cast<long long>(count_params(graph)),
                static_cast<long long>(cfg.training.epochs), cfg.training.learning_rate);
    std::fflush(stdout);
  }

  for (int64_t epoch = 0; epoch < cfg.training.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();

    // Same shuffle stream for every variant trained under this config, so
    // architecture comparisons see identical batch schedules.
    Rng shuffle(cfg.training.seed, static_cast<uint64_t>(epoch), "shuffle");
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle.uniform_int(0, i))]);

    double loss_sum = 0.0;
    for (int64_t start = 0; start < n; start += batch_size) {
      int64_t stop = std::min(start + batch_size, n);
      std::vector<int64_t> ids(order.begin() + start, order.begin() + stop);
      Tensor input = stack_batch(train, ids, false);
      Tensor target = stack_batch(train, ids, true);

      Tensor output = graph.forward(input);
      double loss = mse_loss(output, target);
      if (!std::isfinite(loss))
        throw StateError("train_network: loss diverged at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(start / batch_size));
      ParamMap grads = graph.backward(mse_grad(output, target));
      adam_step(graph.params(), grads, adam);
      loss_sum += loss * static_cast<double>(stop - start);
    }
    history.epoch_loss.push_back(loss_sum / static_cast<double>(n));

    auto t1 = std::chrono::steady_clock::now();
    history.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    snapshot(epoch + 1);

    if (cfg.training.checkpoint_interval > 0 && (epoch + 1) % cfg.training.checkpoint_interval == 0 &&
        epoch + 1 < cfg.training.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d", static_cast<int>(epoch + 1));
      save_checkpoint({net_cfg, graph.params(), adam, epoch + 1}, (fs::path(out_dir) / name).string());
    }
  }

  save_checkpoint({net_cfg, graph.params(), adam, cfg.training.epochs},
                  (fs::path(out_dir) / "checkpoint").string());
  write_history(history, fs::path(out_dir) / "history.json");
  return history;
}

std::vector<Tensor> run_inference(const Checkpoint& ckpt, const std::vector<Tensor>& inputs) {
  OpGraph graph = build_network(ckpt.network);
  for (const auto& [name, tensor] : ckpt.params) {
    auto it = graph.params().find(name);
    if (it == graph.params().end())
      throw DimensionError("run_inference: checkpoint parameter '" + name +
                           "' does not exist in the architecture");
    if (it->second.shape() != tensor.shape())
      throw DimensionError("run_inference: checkpoint parameter '" + name +
                           "' has mismatched shape");
    it->second = tensor;
  }
  if (graph.params().size() != ckpt.params.size())
    throw DimensionError("run_inference: checkpoint is missing parameters");

  std::vector<Tensor> outputs;
  outputs.reserve(inputs.size());
  for (const Tensor& img : inputs) {
    std::vector<int64_t> shape = {1, 1};
    shape.insert(shape.end(), img.shape().begin(), img.shape().end());
    Tensor out = graph.forward(img.reshaped(shape));
    outputs.push_back(clamp_nonnegative(out.reshaped(img.shape())));
  }
  return outputs;
}

}  // namespace pat
