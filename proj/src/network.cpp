#include "pat/network.hpp"

#include <cmath>

#include "pat/rng.hpp"

namespace pat {

namespace {

ConvSpec same_conv(int64_t dims, int64_t in_ch, int64_t out_ch, int64_t kernel,
                   int64_t dilation) {
  ConvSpec s;
  s.kernel_shape.assign(static_cast<size_t>(dims), kernel);
  s.dilation_rate = {dilation};
  s.padding = Padding::SameZero;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  return s;
}

int conv_relu(OpGraph& g, int node, const ConvSpec& spec, const std::string& name) {
  return g.add_relu(g.add_conv(node, spec, name), name + ".relu");
}

}  // namespace

int64_t DenseBlockSpec::steps() const {
  if (growth < 1 || in_channels < 1 || target_features <= in_channels)
    throw ConfigError("dense block needs positive growth and target_features > in_channels");
  if ((target_features - in_channels) % growth != 0)
    throw ConfigError("dense block: target_features " + std::to_string(target_features) +
                      " minus in_channels " + std::to_string(in_channels) +
                      " is not divisible by growth " + std::to_string(growth));
  return (target_features - in_channels) / growth;
}

int build_dense_block(OpGraph& graph, int node, const DenseBlockSpec& spec,
                      const std::string& prefix) {
  int64_t T = spec.steps();
  if (spec.split_dilated && spec.growth % 2 != 0)
    throw ConfigError(prefix + ": split dense block needs an even growth rate, got " +
                      std::to_string(spec.growth));
  int64_t dims = graph.spatial_dims();

  std::vector<int> feeds = {node};
  int64_t channels = spec.in_channels;
  for (int64_t t = 0; t < T; ++t) {
    int in = feeds.size() == 1 ? feeds[0]
                               : graph.add_concat(feeds, prefix + ".s" + std::to_string(t) +
                                                             ".cat");
    std::string sname = prefix + ".s" + std::to_string(t);
    int step_out;
    if (spec.split_dilated) {
      int std_out =
          conv_relu(graph, in, same_conv(dims, channels, spec.growth / 2, 3, 1), sname + ".std");
      int dil_out = conv_relu(
          graph, in, same_conv(dims, channels, spec.growth / 2, 3, spec.dilation_rate),
          sname + ".dil");
      step_out = graph.add_concat({std_out, dil_out}, sname + ".mix");
    } else {
      step_out = conv_relu(graph, in, same_conv(dims, channels, spec.growth, 3, 1), sname);
    }
    feeds.push_back(step_out);
    channels += spec.growth;
  }
  return graph.add_concat(feeds, prefix + ".out");
}

void validate_network_config(const NetworkConfig& cfg) {
  if (cfg.variant != "dd_unet" && cfg.variant != "fd_unet")
    throw ConfigError("network variant must be dd_unet or fd_unet, got '" + cfg.variant + "'");
  if (cfg.spatial_dims != 2 && cfg.spatial_dims != 3)
    throw ConfigError("spatial_dims must be 2 or 3");
  if (cfg.f1 < 2 || cfg.k1 < 1 || cfg.levels < 1 || cfg.input_channels < 1 ||
      cfg.output_channels < 1)
    throw ConfigError("f1, k1, levels, and channel counts must be positive (f1 at least 2)");
  if (cfg.dilation_rate < 1) throw ConfigError("dilation_rate must be positive");
  if (cfg.variant == "dd_unet" && cfg.k1 % 2 != 0)
    throw ConfigError("dd_unet needs an even growth rate k1 (steps split standard/dilated)");
  if (cfg.f1 % (2 * cfg.k1) != 0)
    throw ConfigError("f1 must be a multiple of 2*k1 so each dense block runs a whole number "
                      "of steps; got f1=" +
                      std::to_string(cfg.f1) + ", k1=" + std::to_string(cfg.k1));
}

namespace {

OpGraph build_unet(const NetworkConfig& cfg) {
  validate_network_config(cfg);
  bool dd = cfg.variant == "dd_unet";
  int64_t dims = cfg.spatial_dims;
  int64_t L = cfg.levels;

  OpGraph g;
  int cur = g.add_input(cfg.input_channels, dims);
  int64_t cur_ch = cfg.input_channels;

  std::vector<int> skips(static_cast<size_t>(L));
  for (int64_t l = 0; l < L; ++l) {
    int64_t f = cfg.f1 << l;
    int64_t k = cfg.k1 << l;
    std::string lv = "enc" + std::to_string(l);
    if (l > 0) {
      if (dd) {
        ConvSpec down;
        down.kernel_shape.assign(static_cast<size_t>(dims), 2);
        down.stride = {2};
        down.padding = Padding::Valid;
        down.in_channels = cur_ch;
        down.out_channels = cur_ch;
        cur = conv_relu(g, cur, down, lv + ".down");
      } else {
        cur = g.add_max_pool(cur, std::vector<int64_t>(static_cast<size_t>(dims), 2),
                             lv + ".pool");
      }
    }
    cur = conv_relu(g, cur, same_conv(dims, cur_ch, f / 2, 3, 1), lv + ".pre");
    DenseBlockSpec block{f / 2, f, k, cfg.dilation_rate, dd};
    cur = build_dense_block(g, cur, block, lv + ".block");
    cur_ch = f;
    skips[static_cast<size_t>(l)] = cur;
  }

  for (int64_t l = L - 2; l >= 0; --l) {
    int64_t f = cfg.f1 << l;
    int64_t k = cfg.k1 << l;
    std::string lv = "dec" + std::to_string(l);
    ConvSpec up;
    up.kernel_shape.assign(static_cast<size_t>(dims), 2);
    up.stride = {2};
    up.padding = Padding::Valid;
    up.in_channels = cur_ch;
    up.out_channels = cur_ch;
    cur = g.add_relu(g.add_transposed_conv(cur, up, lv + ".up"), lv + ".up.relu");
    cur = g.add_concat({cur, skips[static_cast<size_t>(l)]}, lv + ".skip");
    int64_t cat_ch = cur_ch + f;
    cur = conv_relu(g, cur, same_conv(dims, cat_ch, f / 2, 3, 1), lv + ".pre");
    DenseBlockSpec block{f / 2, f, k, cfg.dilation_rate, dd};
    cur = build_dense_block(g, cur, block, lv + ".block");
    cur_ch = f;
  }

  if (dd) {
    cur = conv_relu(g, cur, same_conv(dims, cur_ch, cfg.f1 / 2, 3, 1), "refine.pre");
    DenseBlockSpec block{cfg.f1 / 2, cfg.f1, cfg.k1, cfg.dilation_rate, true};
    cur = build_dense_block(g, cur, block, "refine.block");
    cur = conv_relu(g, cur, same_conv(dims, cfg.f1, cfg.f1, 3, 1), "refine.conv1");
    cur = conv_relu(g, cur, same_conv(dims, cfg.f1, cfg.f1, 3, 1), "refine.conv2");
  }
  cur = g.add_conv(cur, same_conv(dims, cfg.f1, cfg.output_channels, 1, 1), "head");
  g.set_output(cur);
  if (L > 1)
    g.require_extent_divisor(int64_t(1) << (L - 1),
                             std::to_string(L) + "-level network halves resolution " +
                                 std::to_string(L - 1) + " times");
  return g;
}

}  // namespace

OpGraph build_dd_unet(const NetworkConfig& cfg) {
  if (cfg.variant != "dd_unet") throw ConfigError("build_dd_unet: cfg.variant is not dd_unet");
  return build_unet(cfg);
}

OpGraph build_fd_unet(const NetworkConfig& cfg) {
  if (cfg.variant != "fd_unet") throw ConfigError("build_fd_unet: cfg.variant is not fd_unet");
  return build_unet(cfg);
}

OpGraph build_network(const NetworkConfig& cfg) {
  validate_network_config(cfg);
  return cfg.variant == "dd_unet" ? build_dd_unet(cfg) : build_fd_unet(cfg);
}

void init_params(OpGraph& graph, uint64_t seed) {
  const std::vector<GraphNode>& nodes = graph.nodes();
  for (size_t id = 0; id < nodes.size(); ++id) {
    const GraphNode& n = nodes[id];
    if (n.kind != OpKind::Conv && n.kind != OpKind::TransposedConv) continue;
    Tensor& w = graph.params().at(n.weights);
    int64_t kernel_volume = 1;
    for (int64_t e : n.spec.kernel_shape) kernel_volume *= e;
    double std = std::sqrt(2.0 / static_cast<double>(n.spec.in_channels * kernel_volume));
    Rng rng(seed, static_cast<uint64_t>(id), n.name);
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, std);
    if (!n.bias.empty()) graph.params().at(n.bias).fill(0.0);
  }
}

int64_t count_params(const OpGraph& graph) { return graph.param_count(); }

std::vector<LayerEntry> layer_ledger(const OpGraph& graph) {
  std::vector<LayerEntry> out;
  for (const GraphNode& n : graph.nodes()) {
    if (n.weights.empty()) continue;
    LayerEntry e;
    e.name = n.name;
    e.weight_count = graph.params().at(n.weights).numel();
    e.bias_count = n.bias.empty() ? 0 : graph.params().at(n.bias).numel();
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json network_config_to_json(const NetworkConfig& cfg) {
  return nlohmann::json{{"variant", cfg.variant},
                        {"spatial_dims", cfg.spatial_dims},
                        {"f1", cfg.f1},
                        {"k1", cfg.k1},
                        {"levels", cfg.levels},
                        {"dilation_rate", cfg.dilation_rate},
                        {"input_channels", cfg.input_channels},
                        {"output_channels", cfg.output_channels}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network config must be a JSON object");
  NetworkConfig cfg;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "variant")
        cfg.variant = value.get<std::string>();
      else if (key == "spatial_dims")
        cfg.spatial_dims = value.get<int64_t>();
      else if (key == "f1")
        cfg.f1 = value.get<int64_t>();
      else if (key == "k1")
        cfg.k1 = value.get<int64_t>();
      else if (key == "levels")
        cfg.levels = value.get<int64_t>();
      else if (key == "dilation_rate")
        cfg.dilation_rate = value.get<int64_t>();
      else if (key == "input_channels")
        cfg.input_channels = value.get<int64_t>();
      else if (key == "output_channels")
        cfg.output_channels = value.get<int64_t>();
      else
        throw ConfigError("unknown network config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("network config key '" + key + "': " + e.what());
    }
  }
  validate_network_config(cfg);
  return cfg;
}

}  // namespace pat
