#include "cscale/ops.hpp"

#include <cmath>

namespace cscale {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  require_shape(input.rank() == 3, "conv2d input must be rank 3 (h,w,c), got " + input.shape().str());
  require_shape(kernel.rank() == 4, "conv2d kernel must be rank 4 (k,k,c_in,c_out), got " + kernel.shape().str());
  const int h = input.extent(0), w = input.extent(1), c_in = input.extent(2);
  const int k = kernel.extent(0), c_out = kernel.extent(3);
  require_shape(kernel.extent(1) == k, "conv2d kernel must be square, got " + kernel.shape().str());
  require_shape(k % 2 == 1, "conv2d kernel size must be odd, got " + std::to_string(k));
  require_shape(kernel.extent(2) == c_in, "conv2d channel mismatch: input " + input.shape().str() + " vs kernel " +
                                              kernel.shape().str());
  require_shape(bias.rank() == 1 && bias.extent(0) == c_out,
                "conv2d bias must be (" + std::to_string(c_out) + "), got " + bias.shape().str());

  const int pad = k / 2;
  Tensor<T> out(Shape{h, w, c_out});
  const T* in = input.data();
  const T* ker = kernel.data();
  const T* b = bias.data();
  T* o = out.data();

  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      T* orow = o + static_cast<int64_t>(i * w + j) * c_out;
      for (int oc = 0; oc < c_out; ++oc) orow[oc] = b[oc];
      for (int di = 0; di < k; ++di) {
        const int ii = i + di - pad;
        if (ii < 0 || ii >= h) continue;
        for (int dj = 0; dj < k; ++dj) {
          const int jj = j + dj - pad;
          if (jj < 0 || jj >= w) continue;
          const T* xrow = in + static_cast<int64_t>(ii * w + jj) * c_in;
          const T* krow = ker + static_cast<int64_t>(di * k + dj) * c_in * c_out;
          for (int ic = 0; ic < c_in; ++ic) {
            const T xv = xrow[ic];
            const T* kc = krow + static_cast<int64_t>(ic) * c_out;
            for (int oc = 0; oc < c_out; ++oc) orow[oc] += xv * kc[oc];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& out_grad, const Tensor<T>& kernel) {
  const int h = out_grad.extent(0), w = out_grad.extent(1), c_out = out_grad.extent(2);
  const int k = kernel.extent(0), c_in = kernel.extent(2);
  require_shape(kernel.extent(3) == c_out, "conv2d grad channel mismatch: grad " + out_grad.shape().str() +
                                               " vs kernel " + kernel.shape().str());
  const int pad = k / 2;
  Tensor<T> dx(Shape{h, w, c_in});
  const T* g = out_grad.data();
  const T* ker = kernel.data();
  T* d = dx.data();

  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const T* grow = g + static_cast<int64_t>(i * w + j) * c_out;
      for (int di = 0; di < k; ++di) {
        const int ii = i + di - pad;
        if (ii < 0 || ii >= h) continue;
        for (int dj = 0; dj < k; ++dj) {
          const int jj = j + dj - pad;
          if (jj < 0 || jj >= w) continue;
          T* drow = d + static_cast<int64_t>(ii * w + jj) * c_in;
          const T* krow = ker + static_cast<int64_t>(di * k + dj) * c_in * c_out;
          for (int ic = 0; ic < c_in; ++ic) {
            const T* kc = krow + static_cast<int64_t>(ic) * c_out;
            T acc = T(0);
            for (int oc = 0; oc < c_out; ++oc) acc += grow[oc] * kc[oc];
            drow[ic] += acc;
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> channel_scaling_forward(const Tensor<T>& x, const Tensor<T>& s) {
  require_shape(x.rank() == 3, "channel scaling input must be rank 3, got " + x.shape().str());
  const int c = x.extent(2);
  require_shape(s.rank() == 1 && s.extent(0) == c, "channel scaling length mismatch: input " + x.shape().str() +
                                                       " vs scales " + s.shape().str());
  for (int64_t i = 0; i < s.size(); ++i) {
    if (!(s[i] >= T(0) && s[i] <= T(1))) {
      throw ContractError("scaling weight " + std::to_string(i) + " = " + std::to_string(static_cast<double>(s[i])) +
                          " outside [0,1]");
    }
  }
  Tensor<T> out(x.shape());
  const T* in = x.data();
  const T* sv = s.data();
  T* o = out.data();
  const int64_t pixels = static_cast<int64_t>(x.extent(0)) * x.extent(1);
  for (int64_t p = 0; p < pixels; ++p) {
    const T* xrow = in + p * c;
    T* orow = o + p * c;
    for (int i = 0; i < c; ++i) orow[i] = sv[i] * xrow[i];
  }
  return out;
}

template <typename T>
Tensor<T> channel_scaling_input_grad(const Tensor<T>& out_grad, const Tensor<T>& s) {
  const int c = out_grad.extent(2);
  Tensor<T> dx(out_grad.shape());
  const T* g = out_grad.data();
  const T* sv = s.data();
  T* d = dx.data();
  const int64_t pixels = static_cast<int64_t>(out_grad.extent(0)) * out_grad.extent(1);
  for (int64_t p = 0; p < pixels; ++p) {
    for (int i = 0; i < c; ++i) d[p * c + i] = sv[i] * g[p * c + i];
  }
  return dx;
}

template <typename T>
Tensor<T> channel_scaling_scale_grad(const Tensor<T>& out_grad, const Tensor<T>& x) {
  const int c = x.extent(2);
  Tensor<T> ds(Shape{c});
  const T* g = out_grad.data();
  const T* in = x.data();
  T* d = ds.data();
  const int64_t pixels = static_cast<int64_t>(x.extent(0)) * x.extent(1);
  for (int64_t p = 0; p < pixels; ++p) {
    for (int i = 0; i < c; ++i) d[i] += g[p * c + i] * in[p * c + i];
  }
  return ds;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* in = x.data();
  T* o = out.data();
  for (int64_t i = 0; i < x.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_input_grad(const Tensor<T>& out_grad, const Tensor<T>& x) {
  require_shape(out_grad.shape() == x.shape(), "relu grad shape mismatch: " + out_grad.shape().str() + " vs " +
                                                   x.shape().str());
  Tensor<T> dx(x.shape());
  const T* g = out_grad.data();
  const T* in = x.data();
  T* d = dx.data();
  for (int64_t i = 0; i < x.size(); ++i) d[i] = in[i] > T(0) ? g[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> max_pool_2x2(const Tensor<T>& x, std::vector<int64_t>* argmax) {
  require_shape(x.rank() == 3, "max pool input must be rank 3, got " + x.shape().str());
  const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
  require_shape(h % 2 == 0 && w % 2 == 0,
                "max pool requires even spatial extents, got " + x.shape().str());
  const int oh = h / 2, ow = w / 2;
  Tensor<T> out(Shape{oh, ow, c});
  if (argmax) argmax->assign(static_cast<size_t>(out.size()), 0);
  const T* in = x.data();
  T* o = out.data();
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      for (int ch = 0; ch < c; ++ch) {
        // Ties resolve to the first element in row-major window order.
        int64_t best_idx = (static_cast<int64_t>(2 * i) * w + 2 * j) * c + ch;
        T best = in[best_idx];
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            const int64_t idx = (static_cast<int64_t>(2 * i + di) * w + 2 * j + dj) * c + ch;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        const int64_t out_idx = (static_cast<int64_t>(i) * ow + j) * c + ch;
        o[out_idx] = best;
        if (argmax) (*argmax)[static_cast<size_t>(out_idx)] = best_idx;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> max_pool_2x2_input_grad(const Tensor<T>& out_grad, const Shape& input_shape,
                                  const std::vector<int64_t>& argmax) {
  require_shape(static_cast<int64_t>(argmax.size()) == out_grad.size(),
                "max pool argmax length does not match gradient " + out_grad.shape().str());
  Tensor<T> dx(input_shape);
  const T* g = out_grad.data();
  T* d = dx.data();
  for (int64_t i = 0; i < out_grad.size(); ++i) d[argmax[static_cast<size_t>(i)]] += g[i];
  return dx;
}

template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& x) {
  require_shape(x.rank() == 3, "global average pool input must be rank 3, got " + x.shape().str());
  const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
  Tensor<T> out(Shape{c});
  const T* in = x.data();
  T* o = out.data();
  const int64_t pixels = static_cast<int64_t>(h) * w;
  for (int64_t p = 0; p < pixels; ++p) {
    for (int i = 0; i < c; ++i) o[i] += in[p * c + i];
  }
  const T inv = T(1) / static_cast<T>(pixels);
  for (int i = 0; i < c; ++i) o[i] *= inv;
  return out;
}

template <typename T>
Tensor<T> global_average_pool_input_grad(const Tensor<T>& out_grad, const Shape& input_shape) {
  const int h = input_shape[0], w = input_shape[1], c = input_shape[2];
  require_shape(out_grad.rank() == 1 && out_grad.extent(0) == c,
                "global average pool grad must be (" + std::to_string(c) + "), got " + out_grad.shape().str());
  Tensor<T> dx(input_shape);
  const T* g = out_grad.data();
  T* d = dx.data();
  const T inv = T(1) / static_cast<T>(static_cast<int64_t>(h) * w);
  const int64_t pixels = static_cast<int64_t>(h) * w;
  for (int64_t p = 0; p < pixels; ++p) {
    for (int i = 0; i < c; ++i) d[p * c + i] = g[i] * inv;
  }
  return dx;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& v, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_shape(v.rank() == 1, "dense input must be rank 1, got " + v.shape().str());
  require_shape(weight.rank() == 2, "dense weight must be rank 2, got " + weight.shape().str());
  const int n = v.extent(0), m = weight.extent(1);
  require_shape(weight.extent(0) == n, "dense shape mismatch: input " + v.shape().str() + " vs weight " +
                                           weight.shape().str());
  require_shape(bias.rank() == 1 && bias.extent(0) == m,
                "dense bias must be (" + std::to_string(m) + "), got " + bias.shape().str());
  Tensor<T> out(Shape{m});
  const T* in = v.data();
  const T* wt = weight.data();
  T* o = out.data();
  for (int j = 0; j < m; ++j) o[j] = bias[j];
  for (int i = 0; i < n; ++i) {
    const T x = in[i];
    const T* wrow = wt + static_cast<int64_t>(i) * m;
    for (int j = 0; j < m; ++j) o[j] += x * wrow[j];
  }
  return out;
}

template <typename T>
Tensor<T> dense_input_grad(const Tensor<T>& out_grad, const Tensor<T>& weight) {
  const int n = weight.extent(0), m = weight.extent(1);
  require_shape(out_grad.rank() == 1 && out_grad.extent(0) == m,
                "dense grad must be (" + std::to_string(m) + "), got " + out_grad.shape().str());
  Tensor<T> dv(Shape{n});
  const T* g = out_grad.data();
  const T* wt = weight.data();
  T* d = dv.data();
  for (int i = 0; i < n; ++i) {
    const T* wrow = wt + static_cast<int64_t>(i) * m;
    T acc = T(0);
    for (int j = 0; j < m; ++j) acc += wrow[j] * g[j];
    d[i] = acc;
  }
  return dv;
}

template <typename T>
Tensor<T> dense_weight_grad(const Tensor<T>& out_grad, const Tensor<T>& v) {
  const int n = v.extent(0), m = out_grad.extent(0);
  Tensor<T> dw(Shape{n, m});
  const T* g = out_grad.data();
  const T* in = v.data();
  T* d = dw.data();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) d[static_cast<int64_t>(i) * m + j] = in[i] * g[j];
  }
  return dw;
}

template <typename T>
T sigmoid(T v) {
  if (v >= T(0)) {
    const T e = std::exp(-v);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template Tensor<float> conv2d_forward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> conv2d_forward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> conv2d_input_grad(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> conv2d_input_grad(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> channel_scaling_forward(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> channel_scaling_forward(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> channel_scaling_input_grad(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> channel_scaling_input_grad(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> channel_scaling_scale_grad(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> channel_scaling_scale_grad(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> relu(const Tensor<float>&);
template Tensor<double> relu(const Tensor<double>&);
template Tensor<float> relu_input_grad(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> relu_input_grad(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> max_pool_2x2(const Tensor<float>&, std::vector<int64_t>*);
template Tensor<double> max_pool_2x2(const Tensor<double>&, std::vector<int64_t>*);
template Tensor<float> max_pool_2x2_input_grad(const Tensor<float>&, const Shape&, const std::vector<int64_t>&);
template Tensor<double> max_pool_2x2_input_grad(const Tensor<double>&, const Shape&, const std::vector<int64_t>&);
template Tensor<float> global_average_pool(const Tensor<float>&);
template Tensor<double> global_average_pool(const Tensor<double>&);
template Tensor<float> global_average_pool_input_grad(const Tensor<float>&, const Shape&);
template Tensor<double> global_average_pool_input_grad(const Tensor<double>&, const Shape&);
template Tensor<float> dense_forward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> dense_forward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> dense_input_grad(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> dense_input_grad(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> dense_weight_grad(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> dense_weight_grad(const Tensor<double>&, const Tensor<double>&);
template float sigmoid(float);
template double sigmoid(double);

}  // namespace cscale
