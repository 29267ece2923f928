#include "pat/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "pat/rng.hpp"

namespace pat {

void OpGraph::check_node_id(int node, const char* op) const {
  if (node < 0 || node >= static_cast<int>(nodes_.size()))
    throw ConfigError(std::string(op) + ": node id " + std::to_string(node) + " does not exist");
}

int OpGraph::add_input(int64_t channels, int64_t spatial_dims, const std::string& name) {
  if (input_ >= 0) throw ConfigError("graph already has an input node");
  if (channels < 1 || spatial_dims < 1 || spatial_dims > 3)
    throw ConfigError("input needs positive channels and 1 to 3 spatial dims");
  input_channels_ = channels;
  spatial_dims_ = spatial_dims;
  GraphNode n;
  n.kind = OpKind::Input;
  n.name = name;
  n.out_channels = channels;
  nodes_.push_back(std::move(n));
  input_ = static_cast<int>(nodes_.size()) - 1;
  return input_;
}

int OpGraph::add_conv(int node, const ConvSpec& spec, const std::string& name) {
  check_node_id(node, "add_conv");
  validate_conv_spec(spec);
  if (name.empty()) throw ConfigError("conv nodes need a name (it prefixes parameter names)");
  if (spec.spatial_dims() != spatial_dims_)
    throw ConfigError(name + ": kernel rank " + std::to_string(spec.spatial_dims()) +
                      " does not match graph spatial dims " + std::to_string(spatial_dims_));
  if (node_channels(node) != spec.in_channels)
    throw ConfigError(name + ": input node provides " + std::to_string(node_channels(node)) +
                      " channels, spec expects " + std::to_string(spec.in_channels));

  GraphNode n;
  n.kind = OpKind::Conv;
  n.name = name;
  n.inputs = {node};
  n.spec = spec;
  n.out_channels = spec.out_channels;
  n.weights = name + ".weights";
  std::vector<int64_t> w_shape = {spec.out_channels, spec.in_channels};
  w_shape.insert(w_shape.end(), spec.kernel_shape.begin(), spec.kernel_shape.end());
  if (!params_.emplace(n.weights, Tensor(w_shape)).second)
    throw ConfigError("duplicate parameter name " + n.weights);
  if (spec.bias) {
    n.bias = name + ".bias";
    params_.emplace(n.bias, Tensor({spec.out_channels}));
  }
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int OpGraph::add_transposed_conv(int node, const ConvSpec& spec, const std::string& name) {
  check_node_id(node, "add_transposed_conv");
  validate_conv_spec(spec);
  if (name.empty()) throw ConfigError("conv nodes need a name (it prefixes parameter names)");
  if (spec.spatial_dims() != spatial_dims_)
    throw ConfigError(name + ": kernel rank does not match graph spatial dims");
  if (node_channels(node) != spec.in_channels)
    throw ConfigError(name + ": input node provides " + std::to_string(node_channels(node)) +
                      " channels, spec expects " + std::to_string(spec.in_channels));

  GraphNode n;
  n.kind = OpKind::TransposedConv;
  n.name = name;
  n.inputs = {node};
  n.spec = spec;
  n.out_channels = spec.out_channels;
  n.weights = name + ".weights";
  std::vector<int64_t> w_shape = {spec.in_channels, spec.out_channels};
  w_shape.insert(w_shape.end(), spec.kernel_shape.begin(), spec.kernel_shape.end());
  if (!params_.emplace(n.weights, Tensor(w_shape)).second)
    throw ConfigError("duplicate parameter name " + n.weights);
  if (spec.bias) {
    n.bias = name + ".bias";
    params_.emplace(n.bias, Tensor({spec.out_channels}));
  }
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int OpGraph::add_relu(int node, const std::string& name) {
  check_node_id(node, "add_relu");
  GraphNode n;
  n.kind = OpKind::Relu;
  n.name = name.empty() ? "relu" + std::to_string(nodes_.size()) : name;
  n.inputs = {node};
  n.out_channels = node_channels(node);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int OpGraph::add_concat(const std::vector<int>& nodes, const std::string& name) {
  if (nodes.empty()) throw ConfigError("add_concat: need at least one input");
  int64_t channels = 0;
  for (int id : nodes) {
    check_node_id(id, "add_concat");
    channels += node_channels(id);
  }
  GraphNode n;
  n.kind = OpKind::Concat;
  n.name = name.empty() ? "concat" + std::to_string(nodes_.size()) : name;
  n.inputs = nodes;
  n.out_channels = channels;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int OpGraph::add_max_pool(int node, const std::vector<int64_t>& window, const std::string& name) {
  check_node_id(node, "add_max_pool");
  if (static_cast<int64_t>(window.size()) != spatial_dims_)
    throw ConfigError("add_max_pool: window rank does not match graph spatial dims");
  GraphNode n;
  n.kind = OpKind::MaxPool;
  n.name = name.empty() ? "pool" + std::to_string(nodes_.size()) : name;
  n.inputs = {node};
  n.window = window;
  n.out_channels = node_channels(node);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void OpGraph::set_output(int node) {
  check_node_id(node, "set_output");
  output_ = node;
}

void OpGraph::require_extent_divisor(int64_t divisor, const std::string& why) {
  if (divisor < 1) throw ConfigError("extent divisor must be positive");
  extent_divisor_ = divisor;
  extent_divisor_why_ = why;
}

int64_t OpGraph::node_channels(int node) const {
  check_node_id(node, "node_channels");
  return nodes_[static_cast<size_t>(node)].out_channels;
}

int64_t OpGraph::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

const Tensor& OpGraph::activation(int node) const {
  check_node_id(node, "activation");
  if (!have_acts_) throw StateError("activation requested before forward");
  return acts_[static_cast<size_t>(node)];
}

Tensor OpGraph::eval_node(int id, const Tensor& input) {
  GraphNode& n = nodes_[static_cast<size_t>(id)];
  try {
    switch (n.kind) {
      case OpKind::Input:
        return input;
      case OpKind::Conv: {
        const Tensor& w = params_.at(n.weights);
        const Tensor* b = n.bias.empty() ? nullptr : &params_.at(n.bias);
        return conv_nd(acts_[static_cast<size_t>(n.inputs[0])], w, b, n.spec);
      }
      case OpKind::TransposedConv: {
        const Tensor& w = params_.at(n.weights);
        const Tensor* b = n.bias.empty() ? nullptr : &params_.at(n.bias);
        return transposed_conv_nd(acts_[static_cast<size_t>(n.inputs[0])], w, b, n.spec);
      }
      case OpKind::Relu:
        return relu(acts_[static_cast<size_t>(n.inputs[0])]);
      case OpKind::Concat: {
        std::vector<const Tensor*> parts;
        parts.reserve(n.inputs.size());
        for (int in : n.inputs) parts.push_back(&acts_[static_cast<size_t>(in)]);
        return concat_channels(parts);
      }
      case OpKind::MaxPool:
        return max_pool_nd(acts_[static_cast<size_t>(n.inputs[0])], n.window, pool_argmax_[id]);
    }
  } catch (const Error& e) {
    throw DimensionError("node '" + n.name + "': " + e.what());
  }
  throw StateError("unreachable op kind");
}

Tensor OpGraph::forward(const Tensor& input) {
  if (input_ < 0) throw StateError("graph has no input node");
  if (output_ < 0) throw StateError("graph has no output node");
  if (input.ndim() != spatial_dims_ + 2)
    throw DimensionError("forward: input must be (batch, channels, " +
                         std::to_string(spatial_dims_) + " spatial dims), got " +
                         shape_string(input.shape()));
  if (input.extent(1) != input_channels_)
    throw DimensionError("forward: input has " + std::to_string(input.extent(1)) +
                         " channels, graph expects " + std::to_string(input_channels_));
  for (int64_t d = 2; d < input.ndim(); ++d)
    if (input.extent(d) % extent_divisor_ != 0)
      throw DimensionError("forward: spatial extent " + std::to_string(input.extent(d)) +
                           " is not divisible by " + std::to_string(extent_divisor_) + " (" +
                           extent_divisor_why_ + ")");

  acts_.clear();
  acts_.resize(nodes_.size());
  pool_argmax_.clear();
  for (int id = 0; id < static_cast<int>(nodes_.size()); ++id)
    acts_[static_cast<size_t>(id)] = eval_node(id, input);
  have_acts_ = true;
  return acts_[static_cast<size_t>(output_)];
}

ParamMap OpGraph::backward(const Tensor& output_grad) {
  if (!have_acts_) throw StateError("backward called before forward");
  const Tensor& out_act = acts_[static_cast<size_t>(output_)];
  if (!output_grad.same_shape(out_act))
    throw DimensionError("backward: output_grad shaped " + shape_string(output_grad.shape()) +
                         ", forward output was " + shape_string(out_act.shape()));

  ParamMap grads;
  for (const auto& [name, t] : params_) grads.emplace(name, Tensor(t.shape()));

  std::vector<Tensor> node_grads(nodes_.size());
  std::vector<bool> has_grad(nodes_.size(), false);
  auto accumulate = [&](int id, Tensor&& g) {
    size_t i = static_cast<size_t>(id);
    if (!has_grad[i]) {
      node_grads[i] = std::move(g);
      has_grad[i] = true;
    } else {
      Tensor& acc = node_grads[i];
      for (int64_t j = 0; j < acc.numel(); ++j) acc[j] += g[j];
    }
  };

  accumulate(output_, Tensor(output_grad));

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    size_t i = static_cast<size_t>(id);
    if (!has_grad[i]) continue;  // not on a path to the output
    const GraphNode& n = nodes_[i];
    const Tensor& g = node_grads[i];
    switch (n.kind) {
      case OpKind::Input:
        break;
      case OpKind::Conv: {
        const Tensor& in_act = acts_[static_cast<size_t>(n.inputs[0])];
        std::vector<int64_t> in_sp(in_act.shape().begin() + 2, in_act.shape().end());
        accumulate(n.inputs[0], conv_grad_input(g, params_.at(n.weights), n.spec, in_sp));
        Tensor gw = conv_grad_weights(g, in_act, n.spec);
        Tensor& gw_acc = grads.at(n.weights);
        for (int64_t j = 0; j < gw_acc.numel(); ++j) gw_acc[j] += gw[j];
        if (!n.bias.empty()) {
          Tensor gb = conv_grad_bias(g);
          Tensor& gb_acc = grads.at(n.bias);
          for (int64_t j = 0; j < gb_acc.numel(); ++j) gb_acc[j] += gb[j];
        }
        break;
      }
      case OpKind::TransposedConv: {
        const Tensor& in_act = acts_[static_cast<size_t>(n.inputs[0])];
        accumulate(n.inputs[0], transposed_conv_grad_input(g, params_.at(n.weights), n.spec));
        Tensor gw = transposed_conv_grad_weights(g, in_act, n.spec);
        Tensor& gw_acc = grads.at(n.weights);
        for (int64_t j = 0; j < gw_acc.numel(); ++j) gw_acc[j] += gw[j];
        if (!n.bias.empty()) {
          Tensor gb = conv_grad_bias(g);
          Tensor& gb_acc = grads.at(n.bias);
          for (int64_t j = 0; j < gb_acc.numel(); ++j) gb_acc[j] += gb[j];
        }
        break;
      }
      case OpKind::Relu:
        accumulate(n.inputs[0], relu_backward(acts_[static_cast<size_t>(n.inputs[0])], g));
        break;
      case OpKind::Concat: {
        int64_t batch = g.extent(0);
        int64_t plane = g.numel() / (batch * g.extent(1));
        int64_t offset = 0;
        for (int in : n.inputs) {
          const Tensor& in_act = acts_[static_cast<size_t>(in)];
          int64_t ch = in_act.extent(1);
          Tensor slice(in_act.shape());
          for (int64_t b = 0; b < batch; ++b) {
            const double* src = g.data() + (b * g.extent(1) + offset) * plane;
            double* dst = slice.data() + b * ch * plane;
            std::copy(src, src + ch * plane, dst);
          }
          accumulate(in, std::move(slice));
          offset += ch;
        }
        break;
      }
      case OpKind::MaxPool: {
        const Tensor& in_act = acts_[static_cast<size_t>(n.inputs[0])];
        Tensor gin(in_act.shape());
        const std::vector<int64_t>& argmax = pool_argmax_.at(id);
        for (int64_t j = 0; j < g.numel(); ++j) gin[argmax[static_cast<size_t>(j)]] += g[j];
        accumulate(n.inputs[0], std::move(gin));
        break;
      }
    }
  }
  return grads;
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw DimensionError("mse_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
  double acc = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.numel());
}

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw DimensionError("mse_grad: shape mismatch " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
  Tensor g(pred.shape(), pred.precision());
  double scale = 2.0 / static_cast<double>(pred.numel());
  for (int64_t i = 0; i < pred.numel(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const auto& [name, t] : params) {
      state.first_moment.emplace(name, Tensor(t.shape()));
      state.second_moment.emplace(name, Tensor(t.shape()));
    }
  }
  for (auto& [name, theta] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw DimensionError("adam_step: no gradient for parameter " + name);
    const Tensor& g = git->second;
    if (!g.same_shape(theta))
      throw DimensionError("adam_step: gradient shape mismatch for " + name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    if (!m.same_shape(theta))
      throw DimensionError("adam_step: moment shape mismatch for " + name);
    (void)v;
  }

  ++state.step_count;
  double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (auto& [name, theta] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    for (int64_t i = 0; i < theta.numel(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      double mhat = m[i] / c1;
      double vhat = v[i] / c2;
      theta[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

double grad_check(OpGraph& graph, const Tensor& input, double epsilon, int64_t sample_size,
                  uint64_t seed) {
  if (epsilon < 1e-7 || epsilon > 1e-3)
    throw ConfigError("grad_check: epsilon must lie in [1e-7, 1e-3]");
  if (input.precision() != Precision::Double)
    throw ConfigError("grad_check: single precision input rejected (insufficient accuracy)");
  for (const auto& [name, t] : graph.params())
    if (t.precision() != Precision::Double)
      throw ConfigError("grad_check: single precision parameter " + name +
                        " rejected (insufficient accuracy)");
  if (sample_size < 1) throw ConfigError("grad_check: sample_size must be positive");

  Tensor out = graph.forward(input);
  Tensor target(out.shape());
  Rng target_rng(seed, 0, "gradcheck/target");
  for (int64_t i = 0; i < target.numel(); ++i) target[i] = target_rng.normal();

  ParamMap grads = graph.backward(mse_grad(out, target));

  std::vector<std::pair<const std::string*, int64_t>> coords;
  coords.reserve(static_cast<size_t>(graph.param_count()));
  for (const auto& [name, t] : graph.params())
    for (int64_t i = 0; i < t.numel(); ++i) coords.emplace_back(&name, i);

  int64_t total = static_cast<int64_t>(coords.size());
  int64_t take = std::min(sample_size, total);
  Rng pick(seed, 1, "gradcheck/sample");
  for (int64_t i = 0; i < take; ++i) {
    int64_t j = pick.uniform_int(i, total - 1);
    std::swap(coords[static_cast<size_t>(i)], coords[static_cast<size_t>(j)]);
  }

  double worst = 0.0;
  for (int64_t i = 0; i < take; ++i) {
    const std::string& name = *coords[static_cast<size_t>(i)].first;
    int64_t idx = coords[static_cast<size_t>(i)].second;
    Tensor& theta = graph.params().at(name);
    double orig = theta[idx];

    theta[idx] = orig + epsilon;
    double lp = mse_loss(graph.forward(input), target);
    theta[idx] = orig - epsilon;
    double lm = mse_loss(graph.forward(input), target);
    theta[idx] = orig;

    double numeric = (lp - lm) / (2.0 * epsilon);
    double analytic = grads.at(name)[idx];
    double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  }
  // Leave the graph's retained activations consistent with the unperturbed
  // parameters.
  graph.forward(input);
  return worst;
}

}  // namespace pat
