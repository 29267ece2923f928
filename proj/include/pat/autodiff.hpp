#pragma once

#include <map>
#include <string>
#include <vector>

#include "pat/conv.hpp"
#include "pat/tensor.hpp"

namespace pat {

using ParamMap = std::map<std::string, Tensor>;

enum class OpKind { Input, Conv, TransposedConv, Relu, Concat, MaxPool };

struct GraphNode {
  OpKind kind = OpKind::Input;
  std::string name;
  std::vector<int> inputs;       // node ids, all smaller than this node's id
  ConvSpec spec;                 // Conv / TransposedConv only
  std::string weights, bias;     // parameter names ("" = none)
  std::vector<int64_t> window;   // MaxPool only
  int64_t out_channels = 0;      // tracked during construction
};

// Static operation graph in topological (insertion) order. Forward retains
// every node's activation so backward can run; a graph instance is
// single-writer during forward/backward, but parameter tensors may be read
// concurrently by other instances.
class OpGraph {
 public:
  // Construction. Every add_* validates that referenced nodes exist, so the
  // graph is acyclic by construction. Conv nodes create their parameter
  // tensors (zero-initialized) under <name>.weights / <name>.bias.
  int add_input(int64_t channels, int64_t spatial_dims, const std::string& name = "input");
  int add_conv(int node, const ConvSpec& spec, const std::string& name);
  int add_transposed_conv(int node, const ConvSpec& spec, const std::string& name);
  int add_relu(int node, const std::string& name = "");
  int add_concat(const std::vector<int>& nodes, const std::string& name = "");
  int add_max_pool(int node, const std::vector<int64_t>& window, const std::string& name = "");
  void set_output(int node);

  // Spatial extents of forward inputs must be divisible by this (UNet-style
  // architectures set it so downsampling bookkeeping is checked up front).
  void require_extent_divisor(int64_t divisor, const std::string& why);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  int output_node() const { return output_; }
  int64_t input_channels() const { return input_channels_; }
  int64_t spatial_dims() const { return spatial_dims_; }
  int64_t node_channels(int node) const;

  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }
  int64_t param_count() const;

  Tensor forward(const Tensor& input);
  // Parameter gradients for d(loss)/d(output) = output_grad. Parameters not
  // on any path to the output get zero gradients.
  ParamMap backward(const Tensor& output_grad);

  const Tensor& activation(int node) const;

 private:
  void check_node_id(int node, const char* op) const;
  Tensor eval_node(int id, const Tensor& input);

  std::vector<GraphNode> nodes_;
  ParamMap params_;
  int input_ = -1;
  int output_ = -1;
  int64_t input_channels_ = 0;
  int64_t spatial_dims_ = 0;
  int64_t extent_divisor_ = 1;
  std::string extent_divisor_why_;

  std::vector<Tensor> acts_;
  std::map<int, std::vector<int64_t>> pool_argmax_;
  bool have_acts_ = false;
};

// Mean over all elements of the squared difference.
double mse_loss(const Tensor& pred, const Tensor& target);
// d(mse_loss)/d(pred) = 2 (pred - target) / numel.
Tensor mse_grad(const Tensor& pred, const Tensor& target);

// Bias-corrected Adam. Moments are created lazily on the first step and stay
// congruent with the parameter map afterwards.
struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step_count = 0;
  ParamMap first_moment;
  ParamMap second_moment;
};

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state);

// Central-difference check of backward() against (f(θ+ε) − f(θ−ε)) / 2ε on a
// synthetic MSE loss with a seed-deterministic target. Checks every
// parameter coordinate when there are at most sample_size of them, otherwise
// a random subsample. Returns the worst relative error. Double precision
// only; epsilon must lie in [1e-7, 1e-3].
double grad_check(OpGraph& graph, const Tensor& input, double epsilon,
                  int64_t sample_size = 200, uint64_t seed = 7);

}  // namespace pat
