#include "wdis/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace wdis::nn {

namespace {

template <typename T>
using MatrixMap = Eigen::Map<Matrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const Matrix<T>>;

template <typename T>
ConstMatrixMap<T> as_matrix(const Parameter<T>& p, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap<T>(p.value.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MatrixMap<T> as_matrix(Parameter<T>& p, std::size_t rows, std::size_t cols) {
  return MatrixMap<T>(p.value.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Gathers kernel windows of the large grid into rows, one per small-grid site.
template <typename T>
void im2col(const T* large, std::size_t batch, const ConvGeometry& g, T* patches) {
  const std::size_t k = g.kernel, c = g.large_c;
  const std::size_t row_len = k * k * c;
  const std::size_t large_size = g.large_h * g.large_w * c;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = large + b * large_size;
    for (std::size_t sy = 0; sy < g.small_h; ++sy) {
      for (std::size_t sx = 0; sx < g.small_w; ++sx) {
        T* row = patches + ((b * g.small_h + sy) * g.small_w + sx) * row_len;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(sy * g.stride + ky) - static_cast<long>(g.padding);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(sx * g.stride + kx) - static_cast<long>(g.padding);
            T* dst = row + (ky * k + kx) * c;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.large_h) || ix >= static_cast<long>(g.large_w)) {
              std::fill_n(dst, c, T(0));
            } else {
              std::copy_n(src + (static_cast<std::size_t>(iy) * g.large_w + static_cast<std::size_t>(ix)) * c, c, dst);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds window rows back onto the large grid.
template <typename T>
void col2im(const T* patches, std::size_t batch, const ConvGeometry& g, T* large) {
  const std::size_t k = g.kernel, c = g.large_c;
  const std::size_t row_len = k * k * c;
  const std::size_t large_size = g.large_h * g.large_w * c;
  std::fill_n(large, batch * large_size, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    T* dst = large + b * large_size;
    for (std::size_t sy = 0; sy < g.small_h; ++sy) {
      for (std::size_t sx = 0; sx < g.small_w; ++sx) {
        const T* row = patches + ((b * g.small_h + sy) * g.small_w + sx) * row_len;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(sy * g.stride + ky) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.large_h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(sx * g.stride + kx) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.large_w)) continue;
            const T* s = row + (ky * k + kx) * c;
            T* d = dst + (static_cast<std::size_t>(iy) * g.large_w + static_cast<std::size_t>(ix)) * c;
            for (std::size_t ch = 0; ch < c; ++ch) d[ch] += s[ch];
          }
        }
      }
    }
  }
}

template <typename T>
struct ForwardVisitor {
  const ParameterSet<T>& params;
  const Matrix<T>& x;
  Matrix<T>* saved;

  Matrix<T> operator()(const DenseLayer& l) const {
    if (saved) *saved = x;
    Matrix<T> y = x * as_matrix(params[l.weight], l.in, l.out);
    y.rowwise() += params[l.bias].value.transpose();
    return y;
  }

  Matrix<T> operator()(const ConvLayer& l) const {
    const auto& g = l.geometry;
    const std::size_t batch = static_cast<std::size_t>(x.rows());
    const std::size_t sites = g.small_h * g.small_w;
    const std::size_t row_len = g.kernel * g.kernel * g.large_c;
    Matrix<T> patches(static_cast<Eigen::Index>(batch * sites), static_cast<Eigen::Index>(row_len));
    im2col(x.data(), batch, g, patches.data());
    Matrix<T> y(x.rows(), static_cast<Eigen::Index>(sites * g.small_c));
    MatrixMap<T> view(y.data(), static_cast<Eigen::Index>(batch * sites), static_cast<Eigen::Index>(g.small_c));
    view.noalias() = patches * as_matrix(params[l.weight], row_len, g.small_c);
    view.rowwise() += params[l.bias].value.transpose();
    if (saved) *saved = std::move(patches);
    return y;
  }

  Matrix<T> operator()(const ConvTransposeLayer& l) const {
    const auto& g = l.geometry;
    const std::size_t batch = static_cast<std::size_t>(x.rows());
    const std::size_t sites = g.small_h * g.small_w;
    const std::size_t row_len = g.kernel * g.kernel * g.large_c;
    ConstMatrixMap<T> in(x.data(), static_cast<Eigen::Index>(batch * sites), static_cast<Eigen::Index>(g.small_c));
    Matrix<T> cols = in * as_matrix(params[l.weight], g.small_c, row_len);
    Matrix<T> y(x.rows(), static_cast<Eigen::Index>(g.large_h * g.large_w * g.large_c));
    col2im(cols.data(), batch, g, y.data());
    MatrixMap<T> view(y.data(), static_cast<Eigen::Index>(batch * g.large_h * g.large_w),
                      static_cast<Eigen::Index>(g.large_c));
    view.rowwise() += params[l.bias].value.transpose();
    if (saved) *saved = x;
    return y;
  }

  Matrix<T> operator()(const ActivationLayer& l) const {
    switch (l.kind) {
      case Activation::LeakyRelu: {
        if (saved) *saved = x;
        const T slope = static_cast<T>(l.slope);
        return x.unaryExpr([slope](T v) { return v > T(0) ? v : slope * v; });
      }
      case Activation::Tanh: return x.array().tanh().matrix();
      case Activation::Sigmoid:
        return x.unaryExpr([](T v) {
          return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
        });
    }
    return x;
  }
};

template <typename T>
struct BackwardVisitor {
  const ParameterSet<T>& params;
  const Matrix<T>& saved;
  const Matrix<T>& output;
  const Matrix<T>& grad;
  ParameterSet<T>* grads;

  Matrix<T> operator()(const DenseLayer& l) const {
    const auto w = as_matrix(params[l.weight], l.in, l.out);
    if (grads) {
      as_matrix((*grads)[l.weight], l.in, l.out).noalias() += saved.transpose() * grad;
      (*grads)[l.bias].value += grad.colwise().sum().transpose();
    }
    return grad * w.transpose();
  }

  Matrix<T> operator()(const ConvLayer& l) const {
    const auto& g = l.geometry;
    const std::size_t batch = static_cast<std::size_t>(grad.rows());
    const std::size_t sites = g.small_h * g.small_w;
    const std::size_t row_len = g.kernel * g.kernel * g.large_c;
    ConstMatrixMap<T> gview(grad.data(), static_cast<Eigen::Index>(batch * sites), static_cast<Eigen::Index>(g.small_c));
    const auto w = as_matrix(params[l.weight], row_len, g.small_c);
    if (grads) {
      as_matrix((*grads)[l.weight], row_len, g.small_c).noalias() += saved.transpose() * gview;
      (*grads)[l.bias].value += gview.colwise().sum().transpose();
    }
    Matrix<T> dpatches = gview * w.transpose();
    Matrix<T> dx(grad.rows(), static_cast<Eigen::Index>(g.large_h * g.large_w * g.large_c));
    col2im(dpatches.data(), batch, g, dx.data());
    return dx;
  }

  Matrix<T> operator()(const ConvTransposeLayer& l) const {
    const auto& g = l.geometry;
    const std::size_t batch = static_cast<std::size_t>(grad.rows());
    const std::size_t sites = g.small_h * g.small_w;
    const std::size_t row_len = g.kernel * g.kernel * g.large_c;
    Matrix<T> dcols(static_cast<Eigen::Index>(batch * sites), static_cast<Eigen::Index>(row_len));
    im2col(grad.data(), batch, g, dcols.data());
    const auto w = as_matrix(params[l.weight], g.small_c, row_len);
    ConstMatrixMap<T> in(saved.data(), static_cast<Eigen::Index>(batch * sites), static_cast<Eigen::Index>(g.small_c));
    if (grads) {
      as_matrix((*grads)[l.weight], g.small_c, row_len).noalias() += in.transpose() * dcols;
      ConstMatrixMap<T> gview(grad.data(), static_cast<Eigen::Index>(batch * g.large_h * g.large_w),
                              static_cast<Eigen::Index>(g.large_c));
      (*grads)[l.bias].value += gview.colwise().sum().transpose();
    }
    Matrix<T> dx(grad.rows(), static_cast<Eigen::Index>(sites * g.small_c));
    MatrixMap<T> dview(dx.data(), static_cast<Eigen::Index>(batch * sites), static_cast<Eigen::Index>(g.small_c));
    dview.noalias() = dcols * w.transpose();
    return dx;
  }

  Matrix<T> operator()(const ActivationLayer& l) const {
    switch (l.kind) {
      case Activation::LeakyRelu: {
        const T slope = static_cast<T>(l.slope);
        return grad.binaryExpr(saved, [slope](T gv, T xv) { return xv > T(0) ? gv : slope * gv; });
      }
      case Activation::Tanh: return (grad.array() * (T(1) - output.array().square())).matrix();
      case Activation::Sigmoid: return (grad.array() * output.array() * (T(1) - output.array())).matrix();
    }
    return grad;
  }
};

}  // namespace

template <typename T>
std::size_t ParameterSet<T>::add(std::string name, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  params_.push_back({std::move(name), std::move(shape), Vector<T>::Zero(static_cast<Eigen::Index>(n))});
  return params_.size() - 1;
}

template <typename T>
const Parameter<T>* ParameterSet<T>::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
std::size_t ParameterSet<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename T>
bool ParameterSet<T>::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](const auto& p) { return p.value.allFinite(); });
}

template <typename T>
void ParameterSet<T>::set_zero() {
  for (auto& p : params_) p.value.setZero();
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros_like() const {
  ParameterSet out;
  for (const auto& p : params_) out.add(p.name, p.shape);
  return out;
}

template <typename T>
bool ParameterSet<T>::operator==(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.shape != b.shape || a.value.size() != b.value.size()) return false;
    if (!std::equal(a.value.data(), a.value.data() + a.value.size(), b.value.data())) return false;
  }
  return true;
}

std::size_t Stack::declare(std::string name, std::vector<std::size_t> shape, std::size_t fan_in, bool is_bias) {
  params_.push_back({std::move(name), std::move(shape), fan_in, is_bias});
  return params_.size() - 1;
}

Stack& Stack::dense(const std::string& name, std::size_t out) {
  DenseLayer l{output_size_, out, 0, 0};
  l.weight = declare(name + ".weight", {l.in, out}, l.in, false);
  l.bias = declare(name + ".bias", {out}, l.in, true);
  layers_.emplace_back(l);
  output_size_ = out;
  return *this;
}

Stack& Stack::conv(const std::string& name, std::size_t h, std::size_t w, std::size_t c, std::size_t out_c,
                   std::size_t kernel, std::size_t stride) {
  if (h * w * c != output_size_) throw std::invalid_argument("conv input grid does not match previous layer");
  if (kernel < stride || (kernel - stride) % 2 != 0 || h % stride != 0 || w % stride != 0)
    throw std::invalid_argument("conv geometry must halve the grid exactly");
  ConvGeometry g{h, w, c, h / stride, w / stride, out_c, kernel, stride, (kernel - stride) / 2};
  ConvLayer l{g, 0, 0};
  l.weight = declare(name + ".weight", {kernel, kernel, c, out_c}, kernel * kernel * c, false);
  l.bias = declare(name + ".bias", {out_c}, kernel * kernel * c, true);
  layers_.emplace_back(l);
  output_size_ = g.small_h * g.small_w * out_c;
  return *this;
}

Stack& Stack::conv_transpose(const std::string& name, std::size_t h, std::size_t w, std::size_t c, std::size_t out_c,
                             std::size_t kernel, std::size_t stride) {
  if (h * w * c != output_size_) throw std::invalid_argument("conv_transpose input grid does not match previous layer");
  if (kernel < stride || (kernel - stride) % 2 != 0)
    throw std::invalid_argument("conv_transpose geometry must double the grid exactly");
  ConvGeometry g{h * stride, w * stride, out_c, h, w, c, kernel, stride, (kernel - stride) / 2};
  ConvTransposeLayer l{g, 0, 0};
  const std::size_t fan_in = std::max<std::size_t>(1, c * kernel * kernel / (stride * stride));
  l.weight = declare(name + ".weight", {c, kernel, kernel, out_c}, fan_in, false);
  l.bias = declare(name + ".bias", {out_c}, fan_in, true);
  layers_.emplace_back(l);
  output_size_ = g.large_h * g.large_w * out_c;
  return *this;
}

Stack& Stack::activation(Activation kind, double slope) {
  layers_.emplace_back(ActivationLayer{kind, slope, output_size_});
  return *this;
}

template <typename T>
ParameterSet<T> make_parameters(const Stack& stack) {
  ParameterSet<T> out;
  for (const auto& d : stack.params()) out.add(d.name, d.shape);
  return out;
}

template <typename T>
void initialize(const Stack& stack, ParameterSet<T>& params, Rng& rng) {
  if (params.size() != stack.params().size()) throw std::invalid_argument("parameter set does not match stack");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& decl = stack.params()[i];
    auto& p = params[i];
    if (decl.is_bias) {
      p.value.setZero();
      continue;
    }
    const double bound = std::min(0.99, std::sqrt(3.0 / static_cast<double>(decl.fan_in)));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (Eigen::Index j = 0; j < p.value.size(); ++j) p.value[j] = static_cast<T>(uni(rng));
  }
}

template <typename T>
Matrix<T> forward(const Stack& stack, const ParameterSet<T>& params, const Matrix<T>& x, Tape<T>* tape) {
  if (static_cast<std::size_t>(x.cols()) != stack.input_size())
    throw std::invalid_argument("input width " + std::to_string(x.cols()) + " does not match stack input " +
                                std::to_string(stack.input_size()));
  const auto& layers = stack.layers();
  if (tape) {
    tape->saved.assign(layers.size(), Matrix<T>());
    tape->outputs.assign(layers.size(), Matrix<T>());
  }
  Matrix<T> current = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Matrix<T>* saved = tape ? &tape->saved[i] : nullptr;
    Matrix<T> next = std::visit(ForwardVisitor<T>{params, current, saved}, layers[i]);
    if (tape && std::holds_alternative<ActivationLayer>(layers[i])) tape->outputs[i] = next;
    current = std::move(next);
  }
  return current;
}

template <typename T>
Matrix<T> backward(const Stack& stack, const ParameterSet<T>& params, const Tape<T>& tape, const Matrix<T>& grad_out,
                   ParameterSet<T>* grads) {
  const auto& layers = stack.layers();
  if (tape.saved.size() != layers.size()) throw std::invalid_argument("tape does not match stack");
  Matrix<T> grad = grad_out;
  for (std::size_t i = layers.size(); i-- > 0;)
    grad = std::visit(BackwardVisitor<T>{params, tape.saved[i], tape.outputs[i], grad, grads}, layers[i]);
  return grad;
}

template <typename T>
void adam_update(ParameterSet<T>& params, const ParameterSet<T>& grads, AdamState<T>& state, const AdamConfig& config) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T lr = static_cast<T>(config.learning_rate), eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first[i].value;
    auto& v = state.second[i].value;
    const auto& g = grads[i].value;
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    params[i].value.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

#define WDIS_NN_INSTANTIATE(T)                                                                                   \
  template class ParameterSet<T>;                                                                                \
  template ParameterSet<T> make_parameters<T>(const Stack&);                                                     \
  template void initialize<T>(const Stack&, ParameterSet<T>&, Rng&);                                             \
  template Matrix<T> forward<T>(const Stack&, const ParameterSet<T>&, const Matrix<T>&, Tape<T>*);               \
  template Matrix<T> backward<T>(const Stack&, const ParameterSet<T>&, const Tape<T>&, const Matrix<T>&,         \
                                 ParameterSet<T>*);                                                              \
  template void adam_update<T>(ParameterSet<T>&, const ParameterSet<T>&, AdamState<T>&, const AdamConfig&);

WDIS_NN_INSTANTIATE(float)
WDIS_NN_INSTANTIATE(double)

#undef WDIS_NN_INSTANTIATE

}  // namespace wdis::nn
