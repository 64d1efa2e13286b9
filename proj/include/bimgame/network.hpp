#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bimgame/config.hpp"

// Conv-Conv-FC-LSTM network with policy and value heads, hand-written
// backpropagation through time, and RMSProp.
namespace bimgame::nn {

inline constexpr int kActions = 5;

struct Architecture {
  int height = 64;
  int width = 64;
  int conv1_filters = 16;
  int conv1_kernel = 8;
  int conv1_stride = 4;
  int conv2_filters = 32;
  int conv2_kernel = 4;
  int conv2_stride = 2;
  int fc = 256;
  int lstm = 128;

  int conv1_rows() const { return (height - conv1_kernel) / conv1_stride + 1; }
  int conv1_cols() const { return (width - conv1_kernel) / conv1_stride + 1; }
  int conv2_rows() const { return (conv1_rows() - conv2_kernel) / conv2_stride + 1; }
  int conv2_cols() const { return (conv1_cols() - conv2_kernel) / conv2_stride + 1; }
  int conv2_size() const { return conv2_rows() * conv2_cols() * conv2_filters; }
  // FC features + one-hot previous action + previous reward.
  int lstm_input() const { return fc + kActions + 1; }

  // Throws ShapeError when a layer has no valid output position.
  void validate() const;

  // Reduced network for single-core desk runs: 32x32 input, 8 and 16
  // filters, FC 64, LSTM 32.
  static Architecture desk();
  // Optional `preset` (default | desk) then per-field overrides.
  static Architecture from_config(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Offsets of each parameter block inside the flat vector.
struct Layout {
  struct Block {
    std::size_t offset = 0;
    std::size_t size = 0;
    bool is_weight = false;  // weights get L2; biases do not
    bool head = false;       // policy/value heads; everything else is shared
  };
  Block conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b;
  Block lstm_wx, lstm_wh, lstm_b;
  Block policy_w, policy_b, value_w, value_b;
  std::size_t total = 0;

  explicit Layout(const Architecture& arch);
  std::array<Block, 13> blocks() const;
};

struct NetworkParams {
  Architecture arch;
  std::vector<double> values;
  // Set on networks that must not be trained further (the shaping potential).
  bool frozen = false;

  static NetworkParams zeros(const Architecture& arch);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget
  // gate bias +1.
  static NetworkParams initialize(const Architecture& arch, std::uint64_t seed);

  Layout layout() const { return Layout(arch); }
  std::size_t size() const { return values.size(); }
};

void save_params(const NetworkParams& params, const std::string& path);
NetworkParams load_params(const std::string& path);

struct RecurrentState {
  std::vector<double> h;
  std::vector<double> c;

  static RecurrentState zeros(const Architecture& arch);
};

struct NetworkInput {
  std::vector<double> image;  // height x width, row-major
  int prev_action = -1;       // -1: none (episode start)
  double prev_reward = 0.0;
};

struct NetworkOutput {
  std::array<double, kActions> logits{};
  std::array<double, kActions> policy{};
  double value = 0.0;
  RecurrentState next;
};

std::array<double, kActions> softmax(const std::array<double, kActions>& logits);
double entropy(const std::array<double, kActions>& policy);

// Intermediate activations of one forward step, kept for backprop.
struct StepCache {
  std::vector<double> image;
  std::vector<double> a1;  // conv1 post-ReLU, positions x filters
  std::vector<double> a2;  // conv2 post-ReLU, flattened
  std::vector<double> a3;  // FC post-ReLU
  std::vector<double> u;   // LSTM input
  std::vector<double> gates;  // i, f, g, o after nonlinearity
  std::vector<double> c_prev, h_prev, c, tanh_c, h;
};

NetworkOutput forward(const NetworkParams& params, const NetworkInput& input,
                      const RecurrentState& state, StepCache* cache = nullptr);

// Forward over a sequence, threading the recurrent state.
std::vector<NetworkOutput> forward_sequence(const NetworkParams& params,
                                            std::span<const NetworkInput> inputs,
                                            const RecurrentState& initial,
                                            std::vector<StepCache>* caches = nullptr);

// Loss gradient with respect to one step's outputs.
struct OutputGrad {
  std::array<double, kActions> dlogits{};
  double dvalue = 0.0;
};

struct RecurrentGrad {
  std::vector<double> dh;
  std::vector<double> dc;
  static RecurrentGrad zeros(const Architecture& arch);
};

// Backpropagation through time over `caches`. Accumulates d(loss)/d(params)
// into `grad` (same layout as params.values) and returns the gradient with
// respect to the initial recurrent state. `carry` is the gradient flowing in
// from steps after the window (zeros for a full episode).
RecurrentGrad backward(const NetworkParams& params, std::span<const StepCache> caches,
                       std::span<const OutputGrad> output_grads, const RecurrentGrad& carry,
                       std::vector<double>& grad);

// lambda * sum of squared weights (biases excluded) and its gradient 2*lambda*w.
double l2_penalty(const NetworkParams& params, double lambda, std::vector<double>* grad);

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.99;
  double epsilon = 1e-8;
};

// Per-parameter moving average of squared gradients; one instance may be
// shared by several learners as long as updates are serialized.
class RmsProp {
 public:
  RmsProp(std::size_t size, RmsPropConfig cfg) : cfg_(cfg), mean_square_(size, 0.0) {}

  // Throws PreconditionError on frozen params or a layout mismatch.
  void update(NetworkParams& params, std::span<const double> grad);

  const std::vector<double>& mean_square() const { return mean_square_; }
  const RmsPropConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

 private:
  RmsPropConfig cfg_;
  std::vector<double> mean_square_;
};

// Scales `grad` so its L2 norm is at most `max_norm`; returns the original norm.
double clip_grad_norm(std::vector<double>& grad, double max_norm);

}  // namespace bimgame::nn
