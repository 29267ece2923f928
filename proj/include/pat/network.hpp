#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "pat/autodiff.hpp"

namespace pat {

// Declarative description of a post-processing UNet. f1 is the feature count
// reached by the first dense block, k1 its growth rate; both double at each
// of the `levels` resolution levels. dilation_rate only matters for the
// dd_unet variant.
struct NetworkConfig {
  std::string variant = "dd_unet";  // dd_unet | fd_unet
  int64_t spatial_dims = 2;
  int64_t f1 = 16;
  int64_t k1 = 4;
  int64_t levels = 3;
  int64_t dilation_rate = 2;
  int64_t input_channels = 1;
  int64_t output_channels = 1;
};

void validate_network_config(const NetworkConfig& cfg);

nlohmann::json network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);

// Dense block with T = (target_features - in_channels) / growth steps; each
// step consumes the concatenation of the block input and every prior step
// output. With split_dilated set, a step learns growth/2 channels through a
// standard 3-per-dim convolution and growth/2 through a dilated one;
// otherwise a single standard convolution learns all `growth` channels.
struct DenseBlockSpec {
  int64_t in_channels = 0;
  int64_t target_features = 0;
  int64_t growth = 0;
  int64_t dilation_rate = 1;
  bool split_dilated = true;

  int64_t steps() const;
};

// Appends the block to the graph, returns the output node id.
int build_dense_block(OpGraph& graph, int node, const DenseBlockSpec& spec,
                      const std::string& prefix);

OpGraph build_dd_unet(const NetworkConfig& cfg);
OpGraph build_fd_unet(const NetworkConfig& cfg);
OpGraph build_network(const NetworkConfig& cfg);  // dispatch on cfg.variant

// He-style initialization: conv weights ~ N(0, 2/fan_in) with
// fan_in = in_channels * kernel volume; biases zero. Deterministic per seed.
void init_params(OpGraph& graph, uint64_t seed);

int64_t count_params(const OpGraph& graph);

// Per-layer parameter bookkeeping, in graph order.
struct LayerEntry {
  std::string name;
  int64_t weight_count = 0;
  int64_t bias_count = 0;
};
std::vector<LayerEntry> layer_ledger(const OpGraph& graph);

}  // namespace pat
