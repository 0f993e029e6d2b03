#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uctrl/matrix.hpp"
#include "uctrl/rate.hpp"
#include "uctrl/rng.hpp"

namespace uctrl::model {

enum class Activation { linear, relu, leaky_relu, tanh_act, softmax };

constexpr double kLeakySlope = 0.2;

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "tanh") return Activation::tanh_act;
  if (s == "softmax") return Activation::softmax;
  throw InvalidConfig("unknown activation: " + s);
}

struct Layer {
  Matrix w;               // out x in
  std::vector<double> b;  // out
  Activation act = Activation::linear;
};

struct Network {
  std::vector<Layer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().w.cols(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().w.rows(); }

  void validate() const {
    for (size_t l = 0; l + 1 < layers.size(); ++l) {
      if (layers[l].w.rows() != layers[l + 1].w.cols())
        throw DimensionMismatch("Network: layer " + std::to_string(l) + " does not chain");
      if (layers[l].act == Activation::softmax)
        throw InvalidConfig("Network: softmax allowed only as the final activation");
    }
    for (const auto& l : layers)
      if (static_cast<int>(l.b.size()) != l.w.rows())
        throw DimensionMismatch("Network: bias length != output rows");
  }

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }
};

// Xavier-uniform weights, zero biases, drawn from the given stream in layer
// order (weights row-major, then bias).
inline Network make_mlp(const std::vector<int>& dims, const std::vector<Activation>& acts,
                        Rng& rng) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1)
    throw InvalidConfig("make_mlp: need dims n+1 and activations n");
  Network net;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    int fan_in = dims[l], fan_out = dims[l + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    layer.w = Matrix(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) layer.w(i, j) = rng.uniform(-bound, bound);
    layer.b.assign(fan_out, 0.0);
    layer.act = acts[l];
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

// Cached activations for one forward pass. Consumed exactly once.
struct GradTape {
  const Network* net = nullptr;
  Matrix input;
  std::vector<Matrix> preacts;   // per layer, before activation
  std::vector<Matrix> postacts;  // per layer, after activation
  bool normalized = false;       // encode() appended a unit-sphere projection
  std::vector<double> prenorm_norms;
  Matrix normalized_out;
  bool consumed = false;
};

namespace detail {

inline void apply_activation(Matrix& a, Activation act) {
  switch (act) {
    case Activation::linear:
      return;
    case Activation::relu:
      for (size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] < 0.0) a.data()[i] = 0.0;
      return;
    case Activation::leaky_relu:
      for (size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] < 0.0) a.data()[i] *= kLeakySlope;
      return;
    case Activation::tanh_act:
      for (size_t i = 0; i < a.size(); ++i) a.data()[i] = std::tanh(a.data()[i]);
      return;
    case Activation::softmax:
      for (int j = 0; j < a.cols(); ++j) {
        double mx = a(0, j);
        for (int i = 1; i < a.rows(); ++i) mx = std::max(mx, a(i, j));
        double s = 0.0;
        for (int i = 0; i < a.rows(); ++i) {
          double e = std::exp(a(i, j) - mx);
          a(i, j) = e;
          s += e;
        }
        for (int i = 0; i < a.rows(); ++i) a(i, j) /= s;
      }
      return;
  }
}

// out_grad -> preactivation grad, given preact and postact for the layer.
inline Matrix activation_backward(const Matrix& pre, const Matrix& post, Activation act,
                                  const Matrix& out_grad) {
  Matrix g = out_grad;
  switch (act) {
    case Activation::linear:
      return g;
    case Activation::relu:
      for (size_t i = 0; i < g.size(); ++i)
        if (pre.data()[i] <= 0.0) g.data()[i] = 0.0;
      return g;
    case Activation::leaky_relu:
      for (size_t i = 0; i < g.size(); ++i)
        if (pre.data()[i] <= 0.0) g.data()[i] *= kLeakySlope;
      return g;
    case Activation::tanh_act:
      for (size_t i = 0; i < g.size(); ++i) {
        double t = post.data()[i];
        g.data()[i] *= (1.0 - t * t);
      }
      return g;
    case Activation::softmax:
      for (int j = 0; j < g.cols(); ++j) {
        double ip = 0.0;
        for (int i = 0; i < g.rows(); ++i) ip += post(i, j) * g(i, j);
        for (int i = 0; i < g.rows(); ++i) g(i, j) = post(i, j) * (g(i, j) - ip);
      }
      return g;
  }
  return g;
}

}  // namespace detail

inline std::pair<Matrix, GradTape> forward(const Network& net, const Matrix& x) {
  if (x.rows() != net.input_dim())
    throw DimensionMismatch("forward: input rows != network input dim");
  GradTape tape;
  tape.net = &net;
  tape.input = x;
  Matrix cur = x;
  for (const auto& layer : net.layers) {
    Matrix pre = matmul(layer.w, cur);
    for (int j = 0; j < pre.cols(); ++j)
      for (int i = 0; i < pre.rows(); ++i) pre(i, j) += layer.b[i];
    tape.preacts.push_back(pre);
    detail::apply_activation(pre, layer.act);
    tape.postacts.push_back(pre);
    cur = std::move(pre);
  }
  return {cur, std::move(tape)};
}

struct NetGrads {
  std::vector<Matrix> w;
  std::vector<std::vector<double>> b;

  void accumulate(const NetGrads& o) {
    for (size_t l = 0; l < w.size(); ++l) {
      add_in_place(w[l], o.w[l]);
      for (size_t i = 0; i < b[l].size(); ++i) b[l][i] += o.b[l][i];
    }
  }
};

inline NetGrads zero_grads(const Network& net) {
  NetGrads g;
  for (const auto& layer : net.layers) {
    g.w.emplace_back(layer.w.rows(), layer.w.cols());
    g.b.emplace_back(layer.b.size(), 0.0);
  }
  return g;
}

// Exact reverse-mode pass over the recorded computation. Returns parameter
// grads and the gradient with respect to the forward input.
inline std::pair<NetGrads, Matrix> backward(const Network& net, GradTape& tape,
                                            const Matrix& out_grad) {
  if (tape.net != &net) throw TapeMismatch("backward: tape from a different network");
  if (tape.consumed) throw TapeMismatch("backward: tape already consumed");
  tape.consumed = true;
  if (tape.postacts.size() != net.layers.size())
    throw TapeMismatch("backward: tape depth != network depth");

  Matrix g = out_grad;
  if (tape.normalized) {
    // z = y/||y||; dL/dy = (g - (z.g) z)/||y||
    const Matrix& z = tape.normalized_out;
    check_same_shape(g, z, "backward(normalized)");
    Matrix gy(g.rows(), g.cols());
    for (int j = 0; j < g.cols(); ++j) {
      double ip = 0.0;
      for (int i = 0; i < g.rows(); ++i) ip += z(i, j) * g(i, j);
      double inv = 1.0 / tape.prenorm_norms[j];
      for (int i = 0; i < g.rows(); ++i) gy(i, j) = (g(i, j) - ip * z(i, j)) * inv;
    }
    g = std::move(gy);
  }

  NetGrads grads = zero_grads(net);
  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    const Layer& layer = net.layers[l];
    Matrix gpre = detail::activation_backward(tape.preacts[l], tape.postacts[l], layer.act, g);
    const Matrix& in = (l == 0) ? tape.input : tape.postacts[l - 1];
    grads.w[l] = matmul_nt(gpre, in);
    for (int i = 0; i < gpre.rows(); ++i) {
      double s = 0.0;
      for (int j = 0; j < gpre.cols(); ++j) s += gpre(i, j);
      grads.b[l][i] = s;
    }
    g = matmul_tn(layer.w, gpre);
  }
  return {std::move(grads), std::move(g)};
}

// Forward plus unit-sphere projection of each output column, recorded on the
// tape so backward differentiates through the normalization.
inline std::pair<rate::FeatureBatch, GradTape> encode(const Network& net, const Matrix& x) {
  auto [y, tape] = forward(net, x);
  tape.prenorm_norms.resize(y.cols());
  for (int j = 0; j < y.cols(); ++j) {
    double nj = y.col_norm(j);
    if (nj < 1e-12)
      throw ZeroVector("encode: pre-projection feature column " + std::to_string(j) + " ~ 0");
    tape.prenorm_norms[j] = nj;
    for (int i = 0; i < y.rows(); ++i) y(i, j) /= nj;
  }
  tape.normalized = true;
  tape.normalized_out = y;
  return {rate::FeatureBatch(std::move(y), true), std::move(tape)};
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<std::vector<double>> m_b, v_b;
  int64_t t = 0;
};

inline AdamState make_adam_state(const Network& net) {
  AdamState s;
  for (const auto& layer : net.layers) {
    s.m_w.emplace_back(layer.w.rows(), layer.w.cols());
    s.v_w.emplace_back(layer.w.rows(), layer.w.cols());
    s.m_b.emplace_back(layer.b.size(), 0.0);
    s.v_b.emplace_back(layer.b.size(), 0.0);
  }
  return s;
}

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(Network& net, const NetGrads& grads, AdamState& state,
                      const AdamParams& hp, bool maximize) {
  if (grads.w.size() != net.layers.size())
    throw ShapeMismatch("adam_step: grads do not match network");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  const double sign = maximize ? -1.0 : 1.0;

  auto update = [&](double* p, const double* g, double* m, double* v, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      double gi = sign * g[i];
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  };

  for (size_t l = 0; l < net.layers.size(); ++l) {
    if (!net.layers[l].w.same_shape(grads.w[l]))
      throw ShapeMismatch("adam_step: weight grad shape mismatch at layer " + std::to_string(l));
    update(net.layers[l].w.data(), grads.w[l].data(), state.m_w[l].data(), state.v_w[l].data(),
           net.layers[l].w.size());
    update(net.layers[l].b.data(), grads.b[l].data(), state.m_b[l].data(), state.v_b[l].data(),
           net.layers[l].b.size());
  }
}

}  // namespace uctrl::model
