#pragma once

// Small dense/convolutional network toolkit with explicit reverse-mode
// gradients. A Stack is a scalar-independent description of a layer chain;
// execution and parameter storage are templated on the scalar type so the
// same architecture can train in float and be gradient-checked in double.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wdis/rng.hpp"

namespace wdis::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  Vector<T> value;
};

template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter<T>* find(std::string_view name) const;
  std::size_t total_size() const;
  bool all_finite() const;
  void set_zero();
  ParameterSet zeros_like() const;

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) {
      const auto i = out.add(p.name, p.shape);
      out[i].value = p.value.template cast<U>();
    }
    return out;
  }

  bool operator==(const ParameterSet& other) const;

 private:
  std::vector<Parameter<T>> params_;
};

enum class Activation { LeakyRelu, Tanh, Sigmoid };

// Shared geometry of a strided convolution between a "large" grid and a
// "small" grid. For Conv the input is large; for ConvTranspose the output is.
struct ConvGeometry {
  std::size_t large_h = 0, large_w = 0, large_c = 0;
  std::size_t small_h = 0, small_w = 0, small_c = 0;
  std::size_t kernel = 4, stride = 2, padding = 1;
};

struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::size_t weight = 0, bias = 0;
};
struct ConvLayer {
  ConvGeometry geometry;
  std::size_t weight = 0, bias = 0;
};
struct ConvTransposeLayer {
  ConvGeometry geometry;
  std::size_t weight = 0, bias = 0;
};
struct ActivationLayer {
  Activation kind = Activation::Tanh;
  double slope = 0.2;
  std::size_t width = 0;
};

using Layer = std::variant<DenseLayer, ConvLayer, ConvTransposeLayer, ActivationLayer>;

struct ParamDecl {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in = 1;
  bool is_bias = false;
};

class Stack {
 public:
  explicit Stack(std::size_t input_size = 0) : input_size_(input_size), output_size_(input_size) {}

  Stack& dense(const std::string& name, std::size_t out);
  // Halving convolution over an (h, w, c) grid to out_c channels.
  Stack& conv(const std::string& name, std::size_t h, std::size_t w, std::size_t c, std::size_t out_c,
              std::size_t kernel, std::size_t stride);
  // Doubling transposed convolution from an (h, w, c) grid to out_c channels.
  Stack& conv_transpose(const std::string& name, std::size_t h, std::size_t w, std::size_t c, std::size_t out_c,
                        std::size_t kernel, std::size_t stride);
  Stack& activation(Activation kind, double slope = 0.2);

  std::size_t input_size() const { return input_size_; }
  std::size_t output_size() const { return output_size_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<ParamDecl>& params() const { return params_; }

 private:
  std::size_t declare(std::string name, std::vector<std::size_t> shape, std::size_t fan_in, bool is_bias);

  std::size_t input_size_;
  std::size_t output_size_;
  std::vector<Layer> layers_;
  std::vector<ParamDecl> params_;
};

// Per-layer saved values: the layer input (or im2col patches for Conv) and
// the layer output.
template <typename T>
struct Tape {
  std::vector<Matrix<T>> saved;
  std::vector<Matrix<T>> outputs;
};

template <typename T>
ParameterSet<T> make_parameters(const Stack& stack);

// Fan-in scaled uniform weights bounded by 0.99, zero biases.
template <typename T>
void initialize(const Stack& stack, ParameterSet<T>& params, Rng& rng);

template <typename T>
Matrix<T> forward(const Stack& stack, const ParameterSet<T>& params, const Matrix<T>& x, Tape<T>* tape = nullptr);

// Accumulates parameter gradients into `grads` (when non-null) and returns the
// gradient with respect to the stack input.
template <typename T>
Matrix<T> backward(const Stack& stack, const ParameterSet<T>& params, const Tape<T>& tape, const Matrix<T>& grad_out,
                   ParameterSet<T>* grads);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  ParameterSet<T> first;
  ParameterSet<T> second;
  std::uint64_t step = 0;

  static AdamState like(const ParameterSet<T>& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

template <typename T>
void adam_update(ParameterSet<T>& params, const ParameterSet<T>& grads, AdamState<T>& state, const AdamConfig& config);

}  // namespace wdis::nn
