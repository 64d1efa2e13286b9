#include "bimgame/network.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "bimgame/error.hpp"

namespace bimgame::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using CMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;
using CVecMap = Eigen::Map<const Vec>;
using VecMap = Eigen::Map<Vec>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

CMatMap cmat(const std::vector<double>& v, const Layout::Block& b, int rows, int cols) {
  return CMatMap(v.data() + b.offset, rows, cols);
}
MatMap mat(std::vector<double>& v, const Layout::Block& b, int rows, int cols) {
  return MatMap(v.data() + b.offset, rows, cols);
}
CVecMap cvec(const std::vector<double>& v, const Layout::Block& b) {
  return CVecMap(v.data() + b.offset, static_cast<Eigen::Index>(b.size));
}
VecMap vec(std::vector<double>& v, const Layout::Block& b) {
  return VecMap(v.data() + b.offset, static_cast<Eigen::Index>(b.size));
}

// Patches of the input image: one row per conv1 output position.
RowMat im2col_conv1(const Architecture& a, const double* image) {
  const int rows = a.conv1_rows(), cols = a.conv1_cols(), k = a.conv1_kernel, s = a.conv1_stride;
  RowMat p(rows * cols, k * k);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double* dst = p.data() + static_cast<std::size_t>(r * cols + c) * k * k;
      for (int ki = 0; ki < k; ++ki)
        std::memcpy(dst + ki * k, image + static_cast<std::size_t>(r * s + ki) * a.width + c * s,
                    sizeof(double) * static_cast<std::size_t>(k));
    }
  return p;
}

// Patches of conv1 activations (positions x filters): column order is
// (ki, kj, filter).
RowMat im2col_conv2(const Architecture& a, const double* a1) {
  const int c1 = a.conv1_cols(), f1 = a.conv1_filters;
  const int rows = a.conv2_rows(), cols = a.conv2_cols(), k = a.conv2_kernel, s = a.conv2_stride;
  RowMat p(rows * cols, k * k * f1);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double* dst = p.data() + static_cast<std::size_t>(r * cols + c) * k * k * f1;
      for (int ki = 0; ki < k; ++ki)
        for (int kj = 0; kj < k; ++kj)
          std::memcpy(dst + (ki * k + kj) * f1,
                      a1 + static_cast<std::size_t>((r * s + ki) * c1 + (c * s + kj)) * f1,
                      sizeof(double) * static_cast<std::size_t>(f1));
    }
  return p;
}

void col2im_conv2(const Architecture& a, const RowMat& dp, double* da1) {
  const int c1 = a.conv1_cols(), f1 = a.conv1_filters;
  const int rows = a.conv2_rows(), cols = a.conv2_cols(), k = a.conv2_kernel, s = a.conv2_stride;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double* src = dp.data() + static_cast<std::size_t>(r * cols + c) * k * k * f1;
      for (int ki = 0; ki < k; ++ki)
        for (int kj = 0; kj < k; ++kj) {
          double* dst = da1 + static_cast<std::size_t>((r * s + ki) * c1 + (c * s + kj)) * f1;
          const double* sp = src + (ki * k + kj) * f1;
          for (int f = 0; f < f1; ++f) dst[f] += sp[f];
        }
    }
}

void relu_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] < 0) x[i] = 0;
}

constexpr char kMagic[8] = {'B', 'I', 'M', 'N', 'E', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------

void Architecture::validate() const {
  auto bad = [](const std::string& what) { throw ShapeError("architecture: " + what); };
  if (height < 1 || width < 1) bad("input must be at least 1x1");
  if (conv1_filters < 1 || conv2_filters < 1 || fc < 1 || lstm < 1) bad("layer widths must be >= 1");
  if (conv1_kernel < 1 || conv1_stride < 1 || conv2_kernel < 1 || conv2_stride < 1)
    bad("kernels and strides must be >= 1");
  if (conv1_kernel > height || conv1_kernel > width) bad("conv1 kernel larger than input");
  if (conv2_kernel > conv1_rows() || conv2_kernel > conv1_cols())
    bad("conv2 kernel larger than conv1 output");
}

Architecture Architecture::desk() {
  Architecture a;
  a.height = 32;
  a.width = 32;
  a.conv1_filters = 8;
  a.conv1_kernel = 4;
  a.conv1_stride = 2;
  a.conv2_filters = 16;
  a.conv2_kernel = 3;
  a.conv2_stride = 2;
  a.fc = 64;
  a.lstm = 32;
  return a;
}

Architecture Architecture::from_config(const KeyValueConfig& kv) {
  const std::string preset = kv.get_string("preset", "default");
  if (preset != "default" && preset != "desk") throw ConfigError("unknown architecture preset " + preset);
  Architecture a = preset == "desk" ? desk() : Architecture{};
  auto geti = [&](const char* key, int fallback) { return static_cast<int>(kv.get_int(key, fallback)); };
  a.height = geti("height", a.height);
  a.width = geti("width", a.width);
  a.conv1_filters = geti("conv1_filters", a.conv1_filters);
  a.conv1_kernel = geti("conv1_kernel", a.conv1_kernel);
  a.conv1_stride = geti("conv1_stride", a.conv1_stride);
  a.conv2_filters = geti("conv2_filters", a.conv2_filters);
  a.conv2_kernel = geti("conv2_kernel", a.conv2_kernel);
  a.conv2_stride = geti("conv2_stride", a.conv2_stride);
  a.fc = geti("fc", a.fc);
  a.lstm = geti("lstm", a.lstm);
  a.validate();
  return a;
}

KeyValueConfig Architecture::to_config() const {
  KeyValueConfig kv;
  kv.set("height", std::to_string(height));
  kv.set("width", std::to_string(width));
  kv.set("conv1_filters", std::to_string(conv1_filters));
  kv.set("conv1_kernel", std::to_string(conv1_kernel));
  kv.set("conv1_stride", std::to_string(conv1_stride));
  kv.set("conv2_filters", std::to_string(conv2_filters));
  kv.set("conv2_kernel", std::to_string(conv2_kernel));
  kv.set("conv2_stride", std::to_string(conv2_stride));
  kv.set("fc", std::to_string(fc));
  kv.set("lstm", std::to_string(lstm));
  return kv;
}

Layout::Layout(const Architecture& a) {
  std::size_t at = 0;
  auto take = [&](std::size_t n, bool weight, bool head) {
    Block b{at, n, weight, head};
    at += n;
    return b;
  };
  const auto k1 = static_cast<std::size_t>(a.conv1_kernel * a.conv1_kernel);
  const auto k2 = static_cast<std::size_t>(a.conv2_kernel * a.conv2_kernel * a.conv1_filters);
  const auto f1 = static_cast<std::size_t>(a.conv1_filters);
  const auto f2 = static_cast<std::size_t>(a.conv2_filters);
  const auto fc = static_cast<std::size_t>(a.fc);
  const auto l = static_cast<std::size_t>(a.lstm);
  conv1_w = take(f1 * k1, true, false);
  conv1_b = take(f1, false, false);
  conv2_w = take(f2 * k2, true, false);
  conv2_b = take(f2, false, false);
  fc_w = take(fc * static_cast<std::size_t>(a.conv2_size()), true, false);
  fc_b = take(fc, false, false);
  lstm_wx = take(4 * l * static_cast<std::size_t>(a.lstm_input()), true, false);
  lstm_wh = take(4 * l * l, true, false);
  lstm_b = take(4 * l, false, false);
  policy_w = take(kActions * l, true, true);
  policy_b = take(kActions, false, true);
  value_w = take(l, true, true);
  value_b = take(1, false, true);
  total = at;
}

std::array<Layout::Block, 13> Layout::blocks() const {
  return {conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b, lstm_wx,
          lstm_wh, lstm_b,  policy_w, policy_b, value_w, value_b};
}

NetworkParams NetworkParams::zeros(const Architecture& arch) {
  arch.validate();
  NetworkParams p;
  p.arch = arch;
  p.values.assign(Layout(arch).total, 0.0);
  return p;
}

NetworkParams NetworkParams::initialize(const Architecture& arch, std::uint64_t seed) {
  NetworkParams p = zeros(arch);
  const Layout lay(arch);
  std::mt19937_64 rng(seed);
  auto fill = [&](const Layout::Block& b, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < b.size; ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      p.values[b.offset + i] = (2.0 * u - 1.0) * bound;
    }
  };
  fill(lay.conv1_w, arch.conv1_kernel * arch.conv1_kernel);
  fill(lay.conv2_w, arch.conv2_kernel * arch.conv2_kernel * arch.conv1_filters);
  fill(lay.fc_w, arch.conv2_size());
  fill(lay.lstm_wx, arch.lstm_input() + arch.lstm);
  fill(lay.lstm_wh, arch.lstm_input() + arch.lstm);
  fill(lay.policy_w, arch.lstm);
  fill(lay.value_w, arch.lstm);
  const auto l = static_cast<std::size_t>(arch.lstm);
  for (std::size_t i = 0; i < l; ++i) p.values[lay.lstm_b.offset + l + i] = 1.0;
  return p;
}

void save_params(const NetworkParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  const std::string arch = params.arch.to_config().to_string();
  const auto len = static_cast<std::uint32_t>(arch.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(arch.data(), len);
  const std::uint8_t frozen = params.frozen ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&frozen), 1);
  const auto count = static_cast<std::uint64_t>(params.values.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw IoError("write failed for '" + path + "'");
}

NetworkParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  std::uint32_t version = 0, len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError("'" + path + "' is not a network checkpoint");
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 20)) throw IoError("corrupt checkpoint header in '" + path + "'");
  std::string arch(len, '\0');
  in.read(arch.data(), len);
  std::uint8_t frozen = 0;
  in.read(reinterpret_cast<char*>(&frozen), 1);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in) throw IoError("truncated checkpoint '" + path + "'");
  NetworkParams p = NetworkParams::zeros(Architecture::from_config(KeyValueConfig::parse(arch)));
  if (count != p.values.size())
    throw ShapeError("checkpoint '" + path + "' has " + std::to_string(count) +
                     " parameters, architecture expects " + std::to_string(p.values.size()));
  in.read(reinterpret_cast<char*>(p.values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint '" + path + "'");
  p.frozen = frozen != 0;
  return p;
}

RecurrentState RecurrentState::zeros(const Architecture& arch) {
  const auto l = static_cast<std::size_t>(arch.lstm);
  return {std::vector<double>(l, 0.0), std::vector<double>(l, 0.0)};
}

RecurrentGrad RecurrentGrad::zeros(const Architecture& arch) {
  const auto l = static_cast<std::size_t>(arch.lstm);
  return {std::vector<double>(l, 0.0), std::vector<double>(l, 0.0)};
}

std::array<double, kActions> softmax(const std::array<double, kActions>& logits) {
  double m = logits[0];
  for (double z : logits) m = std::max(m, z);
  std::array<double, kActions> p{};
  double sum = 0.0;
  for (int i = 0; i < kActions; ++i) sum += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= sum;
  return p;
}

double entropy(const std::array<double, kActions>& policy) {
  double h = 0.0;
  for (double p : policy)
    if (p > 0) h -= p * std::log(p);
  return h;
}

// ---------------------------------------------------------------------------

NetworkOutput forward(const NetworkParams& params, const NetworkInput& input,
                      const RecurrentState& state, StepCache* cache) {
  const Architecture& a = params.arch;
  const Layout lay(a);
  const auto pixels = static_cast<std::size_t>(a.height) * a.width;
  if (input.image.size() != pixels)
    throw ShapeError("input image has " + std::to_string(input.image.size()) +
                     " pixels, expected " + std::to_string(pixels) + " (" +
                     std::to_string(a.height) + "x" + std::to_string(a.width) + ")");
  if (state.h.size() != static_cast<std::size_t>(a.lstm) ||
      state.c.size() != static_cast<std::size_t>(a.lstm))
    throw ShapeError("recurrent state has size " + std::to_string(state.h.size()) +
                     ", expected " + std::to_string(a.lstm));
  if (input.prev_action < -1 || input.prev_action >= kActions)
    throw ShapeError("prev_action out of range: " + std::to_string(input.prev_action));
  if (params.values.size() != lay.total)
    throw ShapeError("parameter vector has " + std::to_string(params.values.size()) +
                     " entries, expected " + std::to_string(lay.total));

  const std::vector<double>& w = params.values;
  const int n1 = a.conv1_rows() * a.conv1_cols();
  const int n2 = a.conv2_rows() * a.conv2_cols();
  const int k1 = a.conv1_kernel * a.conv1_kernel;
  const int k2 = a.conv2_kernel * a.conv2_kernel * a.conv1_filters;
  const int L = a.lstm;

  const RowMat p1 = im2col_conv1(a, input.image.data());
  RowMat z1 = p1 * cmat(w, lay.conv1_w, a.conv1_filters, k1).transpose();
  z1.rowwise() += cvec(w, lay.conv1_b).transpose();
  relu_inplace(z1.data(), static_cast<std::size_t>(z1.size()));

  const RowMat p2 = im2col_conv2(a, z1.data());
  RowMat z2 = p2 * cmat(w, lay.conv2_w, a.conv2_filters, k2).transpose();
  z2.rowwise() += cvec(w, lay.conv2_b).transpose();
  relu_inplace(z2.data(), static_cast<std::size_t>(z2.size()));
  const CVecMap a2(z2.data(), static_cast<Eigen::Index>(n2) * a.conv2_filters);

  Vec a3 = cmat(w, lay.fc_w, a.fc, a.conv2_size()) * a2 + cvec(w, lay.fc_b);
  relu_inplace(a3.data(), static_cast<std::size_t>(a3.size()));

  Vec u(a.lstm_input());
  u.head(a.fc) = a3;
  u.segment(a.fc, kActions).setZero();
  if (input.prev_action >= 0) u(a.fc + input.prev_action) = 1.0;
  u(a.fc + kActions) = input.prev_reward;

  const CVecMap h_prev(state.h.data(), L);
  const CVecMap c_prev(state.c.data(), L);
  Vec gates = cmat(w, lay.lstm_wx, 4 * L, a.lstm_input()) * u +
              cmat(w, lay.lstm_wh, 4 * L, L) * h_prev + cvec(w, lay.lstm_b);
  for (int i = 0; i < L; ++i) {
    gates(i) = sigmoid(gates(i));
    gates(L + i) = sigmoid(gates(L + i));
    gates(2 * L + i) = std::tanh(gates(2 * L + i));
    gates(3 * L + i) = sigmoid(gates(3 * L + i));
  }
  Vec c(L), tanh_c(L), h(L);
  for (int i = 0; i < L; ++i) {
    c(i) = gates(L + i) * c_prev(i) + gates(i) * gates(2 * L + i);
    tanh_c(i) = std::tanh(c(i));
    h(i) = gates(3 * L + i) * tanh_c(i);
  }

  NetworkOutput out;
  const Vec logits = cmat(w, lay.policy_w, kActions, L) * h + cvec(w, lay.policy_b);
  out.value = cvec(w, lay.value_w).dot(h) + w[lay.value_b.offset];
  for (int i = 0; i < kActions; ++i) out.logits[i] = logits(i);
  for (double z : out.logits)
    if (!std::isfinite(z)) throw NumericFault("non-finite policy logit in forward pass");
  if (!std::isfinite(out.value)) throw NumericFault("non-finite value in forward pass");
  out.policy = softmax(out.logits);
  out.next.h.assign(h.data(), h.data() + L);
  out.next.c.assign(c.data(), c.data() + L);

  if (cache) {
    cache->image = input.image;
    cache->a1.assign(z1.data(), z1.data() + static_cast<std::size_t>(n1) * a.conv1_filters);
    cache->a2.assign(a2.data(), a2.data() + a2.size());
    cache->a3.assign(a3.data(), a3.data() + a3.size());
    cache->u.assign(u.data(), u.data() + u.size());
    cache->gates.assign(gates.data(), gates.data() + gates.size());
    cache->c_prev = state.c;
    cache->h_prev = state.h;
    cache->c = out.next.c;
    cache->tanh_c.assign(tanh_c.data(), tanh_c.data() + L);
    cache->h = out.next.h;
  }
  return out;
}

std::vector<NetworkOutput> forward_sequence(const NetworkParams& params,
                                            std::span<const NetworkInput> inputs,
                                            const RecurrentState& initial,
                                            std::vector<StepCache>* caches) {
  std::vector<NetworkOutput> outs;
  outs.reserve(inputs.size());
  if (caches) caches->resize(inputs.size());
  RecurrentState state = initial;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    outs.push_back(forward(params, inputs[t], state, caches ? &(*caches)[t] : nullptr));
    state = outs.back().next;
  }
  return outs;
}

RecurrentGrad backward(const NetworkParams& params, std::span<const StepCache> caches,
                       std::span<const OutputGrad> output_grads, const RecurrentGrad& carry,
                       std::vector<double>& grad) {
  const Architecture& a = params.arch;
  const Layout lay(a);
  if (caches.size() != output_grads.size())
    throw ShapeError("backward: " + std::to_string(caches.size()) + " cached steps but " +
                     std::to_string(output_grads.size()) + " output gradients");
  if (grad.size() != lay.total) grad.assign(lay.total, 0.0);

  const std::vector<double>& w = params.values;
  const int L = a.lstm;
  const int n1 = a.conv1_rows() * a.conv1_cols();
  const int n2 = a.conv2_rows() * a.conv2_cols();
  const int k1 = a.conv1_kernel * a.conv1_kernel;
  const int k2 = a.conv2_kernel * a.conv2_kernel * a.conv1_filters;

  const CMatMap Wpi = cmat(w, lay.policy_w, kActions, L);
  const CVecMap wv = cvec(w, lay.value_w);
  const CMatMap Wx = cmat(w, lay.lstm_wx, 4 * L, a.lstm_input());
  const CMatMap Wh = cmat(w, lay.lstm_wh, 4 * L, L);
  const CMatMap Wfc = cmat(w, lay.fc_w, a.fc, a.conv2_size());
  const CMatMap W2 = cmat(w, lay.conv2_w, a.conv2_filters, k2);

  MatMap gWpi = mat(grad, lay.policy_w, kActions, L);
  VecMap gbpi = vec(grad, lay.policy_b);
  VecMap gwv = vec(grad, lay.value_w);
  MatMap gWx = mat(grad, lay.lstm_wx, 4 * L, a.lstm_input());
  MatMap gWh = mat(grad, lay.lstm_wh, 4 * L, L);
  VecMap gbl = vec(grad, lay.lstm_b);
  MatMap gWfc = mat(grad, lay.fc_w, a.fc, a.conv2_size());
  VecMap gbfc = vec(grad, lay.fc_b);
  MatMap gW2 = mat(grad, lay.conv2_w, a.conv2_filters, k2);
  VecMap gb2 = vec(grad, lay.conv2_b);
  MatMap gW1 = mat(grad, lay.conv1_w, a.conv1_filters, k1);
  VecMap gb1 = vec(grad, lay.conv1_b);

  Vec dh_next = CVecMap(carry.dh.data(), L);
  Vec dc_next = CVecMap(carry.dc.data(), L);
  Vec dgates(4 * L);

  for (std::size_t t = caches.size(); t-- > 0;) {
    const StepCache& sc = caches[t];
    const OutputGrad& og = output_grads[t];
    const CVecMap h(sc.h.data(), L);
    const CVecMap gates(sc.gates.data(), 4 * L);
    const Eigen::Map<const Eigen::Matrix<double, kActions, 1>> dlogits(og.dlogits.data());

    gWpi.noalias() += dlogits * h.transpose();
    gbpi += dlogits;
    gwv += og.dvalue * h;
    grad[lay.value_b.offset] += og.dvalue;

    const Vec dh = Wpi.transpose() * dlogits + og.dvalue * wv + dh_next;
    Vec dc(L);
    for (int i = 0; i < L; ++i) {
      const double ig = gates(i), fg = gates(L + i), gg = gates(2 * L + i), og_ = gates(3 * L + i);
      const double tc = sc.tanh_c[static_cast<std::size_t>(i)];
      dc(i) = dh(i) * og_ * (1.0 - tc * tc) + dc_next(i);
      dgates(i) = dc(i) * gg * ig * (1.0 - ig);
      dgates(L + i) = dc(i) * sc.c_prev[static_cast<std::size_t>(i)] * fg * (1.0 - fg);
      dgates(2 * L + i) = dc(i) * ig * (1.0 - gg * gg);
      dgates(3 * L + i) = dh(i) * tc * og_ * (1.0 - og_);
      dc_next(i) = dc(i) * fg;
    }
    if (!std::isfinite(dgates.sum())) throw NumericFault("non-finite gradient in LSTM backward");

    const CVecMap u(sc.u.data(), a.lstm_input());
    const CVecMap h_prev(sc.h_prev.data(), L);
    gWx.noalias() += dgates * u.transpose();
    gWh.noalias() += dgates * h_prev.transpose();
    gbl += dgates;
    dh_next.noalias() = Wh.transpose() * dgates;

    Vec da3 = (Wx.transpose() * dgates).head(a.fc);
    for (int i = 0; i < a.fc; ++i)
      if (sc.a3[static_cast<std::size_t>(i)] <= 0) da3(i) = 0;
    const CVecMap a2(sc.a2.data(), a.conv2_size());
    gWfc.noalias() += da3 * a2.transpose();
    gbfc += da3;

    RowMat dz2(n2, a.conv2_filters);
    Eigen::Map<Vec>(dz2.data(), dz2.size()).noalias() = Wfc.transpose() * da3;
    for (Eigen::Index i = 0; i < dz2.size(); ++i)
      if (sc.a2[static_cast<std::size_t>(i)] <= 0) dz2.data()[i] = 0;
    const RowMat p2 = im2col_conv2(a, sc.a1.data());
    gW2.noalias() += dz2.transpose() * p2;
    gb2 += dz2.colwise().sum().transpose();

    const RowMat dp2 = dz2 * W2;
    RowMat dz1 = RowMat::Zero(n1, a.conv1_filters);
    col2im_conv2(a, dp2, dz1.data());
    for (Eigen::Index i = 0; i < dz1.size(); ++i)
      if (sc.a1[static_cast<std::size_t>(i)] <= 0) dz1.data()[i] = 0;
    const RowMat p1 = im2col_conv1(a, sc.image.data());
    gW1.noalias() += dz1.transpose() * p1;
    gb1 += dz1.colwise().sum().transpose();
  }

  RecurrentGrad out;
  out.dh.assign(dh_next.data(), dh_next.data() + L);
  out.dc.assign(dc_next.data(), dc_next.data() + L);
  return out;
}

double l2_penalty(const NetworkParams& params, double lambda, std::vector<double>* grad) {
  const Layout lay(params.arch);
  if (grad && grad->size() != lay.total) grad->assign(lay.total, 0.0);
  double sum = 0.0;
  for (const auto& b : lay.blocks()) {
    if (!b.is_weight) continue;
    for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
      const double v = params.values[i];
      sum += v * v;
      if (grad) (*grad)[i] += 2.0 * lambda * v;
    }
  }
  return lambda * sum;
}

void RmsProp::update(NetworkParams& params, std::span<const double> grad) {
  if (params.frozen) throw PreconditionError("refusing to update frozen parameters");
  if (grad.size() != params.values.size() || mean_square_.size() != params.values.size())
    throw PreconditionError("optimizer/parameter layout mismatch");
  const double rho = cfg_.decay;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    mean_square_[i] = rho * mean_square_[i] + (1.0 - rho) * g * g;
    params.values[i] -= cfg_.learning_rate * g / std::sqrt(mean_square_[i] + cfg_.epsilon);
  }
}

double clip_grad_norm(std::vector<double>& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

}  // namespace bimgame::nn
