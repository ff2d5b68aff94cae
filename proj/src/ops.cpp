#include <Eigen/Core>
#include <cmath>
#include <string>

#include "odm/error.hpp"
#include "odm/tape.hpp"

namespace odm {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::string shapes(const Shape& a, const Shape& b) { return a.str() + " vs " + b.str(); }

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw DimensionError(std::string(op) + ": shape mismatch " + shapes(a.shape(), b.shape()));
}

void require_channel_vector(const char* op, const Var& x, const Var& v) {
  if (v.value().size() != static_cast<std::size_t>(x.shape().c)) {
    throw DimensionError(std::string(op) + ": vector of shape " + v.shape().str() + " does not match channels of " +
                         x.shape().str());
  }
}

struct ConvGeometry {
  int cin, h, w, cout, k, stride, pad, hout, wout;
  int rows() const { return cin * k * k; }
  int cols() const { return hout * wout; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& wt, int stride, int padding) {
  if (wt.h != wt.w) throw DimensionError("conv2d: kernel must be square, got " + wt.str());
  if (in.c != wt.c) throw DimensionError("conv2d: input channels do not match kernel " + shapes(in, wt));
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (padding < 0) throw DimensionError("conv2d: padding must be >= 0");
  ConvGeometry g{in.c, in.h, in.w, wt.n, wt.h, stride, padding, 0, 0};
  const int hspan = in.h + 2 * padding - wt.h;
  const int wspan = in.w + 2 * padding - wt.w;
  if (hspan < 0 || wspan < 0) throw DimensionError("conv2d: kernel larger than padded input " + shapes(in, wt));
  g.hout = hspan / stride + 1;
  g.wout = wspan / stride + 1;
  return g;
}

// col is (cin*k*k) x (hout*wout), row-major.
void im2col(const float* img, const ConvGeometry& g, float* col) {
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        float* dst = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            const bool inside = iy >= 0 && iy < g.h && ix >= 0 && ix < g.w;
            *dst++ = inside ? img[(static_cast<std::size_t>(c) * g.h + iy) * g.w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeometry& g, float* img) {
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const float* src = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          for (int ox = 0; ox < g.wout; ++ox, ++src) {
            const int ix = ox * g.stride - g.pad + kx;
            if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) {
              img[(static_cast<std::size_t>(c) * g.h + iy) * g.w + ix] += *src;
            }
          }
        }
      }
    }
  }
}

void check_shuffle(const Shape& s, int r) {
  if (r < 1) throw DimensionError("pixel_shuffle: factor must be >= 1");
  if (s.c % (r * r) != 0) {
    throw DimensionError("pixel_shuffle: channels " + std::to_string(s.c) + " not divisible by " + std::to_string(r * r));
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias, int stride, int padding) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), stride, padding);
  if (bias != nullptr && bias->size() != static_cast<std::size_t>(g.cout)) {
    throw DimensionError("conv2d: bias " + bias->shape().str() + " does not match kernel " + weight.shape().str());
  }
  const int batch = input.shape().n;
  Tensor out({batch, g.cout, g.hout, g.wout});
  RowMat col(g.rows(), g.cols());
  ConstMapMat wm(weight.data(), g.cout, g.rows());
  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.cout) * g.cols();
  for (int b = 0; b < batch; ++b) {
    im2col(input.data() + b * in_stride, g, col.data());
    MapMat om(out.data() + b * out_stride, g.cout, g.cols());
    om.noalias() = wm * col;
    if (bias != nullptr) {
      for (int o = 0; o < g.cout; ++o) om.row(o).array() += (*bias)[static_cast<std::size_t>(o)];
    }
  }
  return out;
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride, int padding) {
  const Tensor* b = bias.valid() ? &bias.value() : nullptr;
  Tensor out = conv2d_forward(input.value(), weight.value(), b, stride, padding);
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), stride, padding);
  std::vector<Var> inputs{input, weight};
  if (bias.valid()) inputs.push_back(bias);
  return input.tape().record(std::move(out), inputs, [input, weight, g](const Tensor& gout, InputGrads gin) {
    const int batch = input.shape().n;
    const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
    const std::size_t out_stride = static_cast<std::size_t>(g.cout) * g.cols();
    ConstMapMat wm(weight.value().data(), g.cout, g.rows());
    RowMat col(g.rows(), g.cols());
    for (int b = 0; b < batch; ++b) {
      ConstMapMat go(gout.data() + b * out_stride, g.cout, g.cols());
      if (gin[1] != nullptr) {
        im2col(input.value().data() + b * in_stride, g, col.data());
        MapMat gw(gin[1]->data(), g.cout, g.rows());
        gw.noalias() += go * col.transpose();
      }
      if (gin[0] != nullptr) {
        col.noalias() = wm.transpose() * go;
        col2im_add(col.data(), g, gin[0]->data() + b * in_stride);
      }
      if (gin.size() > 2 && gin[2] != nullptr) {
        for (int o = 0; o < g.cout; ++o) (*gin[2])[static_cast<std::size_t>(o)] += go.row(o).sum();
      }
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
  return x.tape().record(std::move(out), {x}, [x](const Tensor& g, InputGrads gin) {
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0f) (*gin[0])[i] += g[i];
    }
  });
}

Var add(const Var& x, const Var& y) {
  require_same_shape("add", x, y);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y.value()[i];
  return x.tape().record(std::move(out), {x, y}, [](const Tensor& g, InputGrads gin) {
    for (Tensor* t : gin) {
      if (t == nullptr) continue;
      for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
    }
  });
}

Var sub(const Var& x, const Var& y) {
  require_same_shape("sub", x, y);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y.value()[i];
  return x.tape().record(std::move(out), {x, y}, [](const Tensor& g, InputGrads gin) {
    if (gin[0] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    }
    if (gin[1] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
    }
  });
}

Var mul_scalar(const Var& x, float c) {
  Tensor out = x.value();
  for (float& v : out.values()) v *= c;
  return x.tape().record(std::move(out), {x}, [c](const Tensor& g, InputGrads gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += c * g[i];
  });
}

Var broadcast_add_channel(const Var& x, const Var& v) {
  require_channel_vector("broadcast_add_channel", x, v);
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor out = x.value();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      float* p = out.data() + (static_cast<std::size_t>(b) * s.c + c) * plane;
      const float add = v.value()[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < plane; ++i) p[i] += add;
    }
  }
  return x.tape().record(std::move(out), {x, v}, [s, plane](const Tensor& g, InputGrads gin) {
    if (gin[0] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    }
    if (gin[1] != nullptr) {
      for (int b = 0; b < s.n; ++b) {
        for (int c = 0; c < s.c; ++c) {
          const float* p = g.data() + (static_cast<std::size_t>(b) * s.c + c) * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
          (*gin[1])[static_cast<std::size_t>(c)] += static_cast<float>(acc);
        }
      }
    }
  });
}

Var broadcast_mul_channel(const Var& x, const Var& v) {
  require_channel_vector("broadcast_mul_channel", x, v);
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor out = x.value();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      float* p = out.data() + (static_cast<std::size_t>(b) * s.c + c) * plane;
      const float m = v.value()[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < plane; ++i) p[i] *= m;
    }
  }
  return x.tape().record(std::move(out), {x, v}, [x, v, s, plane](const Tensor& g, InputGrads gin) {
    const Tensor& xv = x.value();
    for (int b = 0; b < s.n; ++b) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t base = (static_cast<std::size_t>(b) * s.c + c) * plane;
        const float m = v.value()[static_cast<std::size_t>(c)];
        if (gin[0] != nullptr) {
          for (std::size_t i = 0; i < plane; ++i) (*gin[0])[base + i] += g[base + i] * m;
        }
        if (gin[1] != nullptr) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(g[base + i]) * xv[base + i];
          (*gin[1])[static_cast<std::size_t>(c)] += static_cast<float>(acc);
        }
      }
    }
  });
}

Var mean(const Var& x) {
  const double m = mean_of(x.value().values());
  return x.tape().record(Tensor::scalar(static_cast<float>(m)), {x}, [](const Tensor& g, InputGrads gin) {
    const float share = g[0] / static_cast<float>(gin[0]->size());
    for (float& v : gin[0]->values()) v += share;
  });
}

Var std_dev(const Var& x) {
  const auto vals = x.value().values();
  if (vals.empty()) throw DimensionError("std of empty tensor");
  const double m = mean_of(vals);
  const double sd = population_std(vals);
  return x.tape().record(Tensor::scalar(static_cast<float>(sd)), {x}, [x, m, sd](const Tensor& g, InputGrads gin) {
    if (sd == 0.0) return;
    const Tensor& xv = x.value();
    const double scale = g[0] / (static_cast<double>(xv.size()) * sd);
    for (std::size_t i = 0; i < xv.size(); ++i) (*gin[0])[i] += static_cast<float>((xv[i] - m) * scale);
  });
}

std::vector<double> channel_means(const Tensor& x) {
  const Shape s = x.shape();
  if (x.empty()) throw DimensionError("channel statistics of empty tensor");
  std::vector<double> out(static_cast<std::size_t>(s.c), 0.0);
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x.data() + (static_cast<std::size_t>(b) * s.c + c) * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out[static_cast<std::size_t>(c)] += acc;
    }
  }
  const double count = static_cast<double>(s.n) * static_cast<double>(plane);
  for (double& v : out) v /= count;
  return out;
}

std::vector<double> channel_stds(const Tensor& x) {
  const Shape s = x.shape();
  const auto means = channel_means(x);
  std::vector<double> out(static_cast<std::size_t>(s.c), 0.0);
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x.data() + (static_cast<std::size_t>(b) * s.c + c) * plane;
      const double m = means[static_cast<std::size_t>(c)];
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += (p[i] - m) * (p[i] - m);
      out[static_cast<std::size_t>(c)] += acc;
    }
  }
  const double count = static_cast<double>(s.n) * static_cast<double>(plane);
  for (double& v : out) v = std::sqrt(v / count);
  return out;
}

Var channel_mean(const Var& x) {
  const Shape s = x.shape();
  const auto means = channel_means(x.value());
  std::vector<float> out(means.begin(), means.end());
  return x.tape().record(Tensor::channel_vector(out), {x}, [s](const Tensor& g, InputGrads gin) {
    const std::size_t plane = s.plane();
    const float inv = 1.0f / static_cast<float>(static_cast<std::size_t>(s.n) * plane);
    for (int b = 0; b < s.n; ++b) {
      for (int c = 0; c < s.c; ++c) {
        float* p = gin[0]->data() + (static_cast<std::size_t>(b) * s.c + c) * plane;
        const float share = g[static_cast<std::size_t>(c)] * inv;
        for (std::size_t i = 0; i < plane; ++i) p[i] += share;
      }
    }
  });
}

Var channel_std(const Var& x) {
  const Shape s = x.shape();
  const auto means = channel_means(x.value());
  const auto stds = channel_stds(x.value());
  std::vector<float> out(stds.begin(), stds.end());
  return x.tape().record(Tensor::channel_vector(out), {x}, [x, s, means, stds](const Tensor& g, InputGrads gin) {
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * static_cast<double>(plane);
    const Tensor& xv = x.value();
    for (int b = 0; b < s.n; ++b) {
      for (int c = 0; c < s.c; ++c) {
        const double sd = stds[static_cast<std::size_t>(c)];
        if (sd == 0.0) continue;
        const double m = means[static_cast<std::size_t>(c)];
        const double scale = g[static_cast<std::size_t>(c)] / (count * sd);
        const std::size_t base = (static_cast<std::size_t>(b) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) (*gin[0])[base + i] += static_cast<float>((xv[base + i] - m) * scale);
      }
    }
  });
}

Tensor pixel_shuffle_forward(const Tensor& x, int r) {
  const Shape s = x.shape();
  check_shuffle(s, r);
  const int co = s.c / (r * r);
  Tensor out({s.n, co, s.h * r, s.w * r});
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < co; ++c) {
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) {
          const int src_c = c * r * r + i * r + j;
          for (int h = 0; h < s.h; ++h) {
            for (int w = 0; w < s.w; ++w) out.at(b, c, h * r + i, w * r + j) = x.at(b, src_c, h, w);
          }
        }
      }
    }
  }
  return out;
}

Tensor pixel_unshuffle_forward(const Tensor& x, int r) {
  const Shape s = x.shape();
  if (r < 1 || s.h % r != 0 || s.w % r != 0) {
    throw DimensionError("pixel_unshuffle: spatial size " + s.str() + " not divisible by " + std::to_string(r));
  }
  Tensor out({s.n, s.c * r * r, s.h / r, s.w / r});
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) {
          const int dst_c = c * r * r + i * r + j;
          for (int h = 0; h < s.h / r; ++h) {
            for (int w = 0; w < s.w / r; ++w) out.at(b, dst_c, h, w) = x.at(b, c, h * r + i, w * r + j);
          }
        }
      }
    }
  }
  return out;
}

Var pixel_shuffle(const Var& x, int r) {
  Tensor out = pixel_shuffle_forward(x.value(), r);
  return x.tape().record(std::move(out), {x}, [r](const Tensor& g, InputGrads gin) {
    const Tensor back = pixel_unshuffle_forward(g, r);
    for (std::size_t i = 0; i < back.size(); ++i) (*gin[0])[i] += back[i];
  });
}

Var pixel_unshuffle(const Var& x, int r) {
  Tensor out = pixel_unshuffle_forward(x.value(), r);
  return x.tape().record(std::move(out), {x}, [r](const Tensor& g, InputGrads gin) {
    const Tensor back = pixel_shuffle_forward(g, r);
    for (std::size_t i = 0; i < back.size(); ++i) (*gin[0])[i] += back[i];
  });
}

Var l1_loss(const Var& a, const Var& b) {
  require_same_shape("l1_loss", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::fabs(static_cast<double>(av[i]) - bv[i]);
  const double n = static_cast<double>(av.size());
  return a.tape().record(Tensor::scalar(static_cast<float>(acc / n)), {a, b}, [a, b, n](const Tensor& g, InputGrads gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const float share = static_cast<float>(g[0] / n);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const float d = av[i] - bv[i];
      const float sgn = d > 0.0f ? share : (d < 0.0f ? -share : 0.0f);
      if (gin[0] != nullptr) (*gin[0])[i] += sgn;
      if (gin[1] != nullptr) (*gin[1])[i] -= sgn;
    }
  });
}

Var mse_loss(const Var& a, const Var& b) {
  require_same_shape("mse_loss", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    acc += d * d;
  }
  const double n = static_cast<double>(av.size());
  return a.tape().record(Tensor::scalar(static_cast<float>(acc / n)), {a, b}, [a, b, n](const Tensor& g, InputGrads gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const double scale = 2.0 * g[0] / n;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const float d = static_cast<float>(scale * (static_cast<double>(av[i]) - bv[i]));
      if (gin[0] != nullptr) (*gin[0])[i] += d;
      if (gin[1] != nullptr) (*gin[1])[i] -= d;
    }
  });
}

Var normalize_per_sample(const Var& x, float eps) {
  const Shape s = x.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  std::vector<double> norms(static_cast<std::size_t>(s.n));
  Tensor out = x.value();
  for (int b = 0; b < s.n; ++b) {
    double ss = 0.0;
    const float* p = x.value().data() + b * per;
    for (std::size_t i = 0; i < per; ++i) ss += static_cast<double>(p[i]) * p[i];
    const double denom = std::max(std::sqrt(ss), static_cast<double>(eps));
    norms[static_cast<std::size_t>(b)] = std::sqrt(ss);
    float* q = out.data() + b * per;
    for (std::size_t i = 0; i < per; ++i) q[i] = static_cast<float>(p[i] / denom);
  }
  Tensor y = out;
  return x.tape().record(std::move(out), {x}, [y, norms, per, eps](const Tensor& g, InputGrads gin) {
    for (std::size_t b = 0; b < norms.size(); ++b) {
      const float* gy = g.data() + b * per;
      const float* yy = y.data() + b * per;
      float* gx = gin[0]->data() + b * per;
      if (norms[b] > eps) {
        double dot = 0.0;
        for (std::size_t i = 0; i < per; ++i) dot += static_cast<double>(gy[i]) * yy[i];
        for (std::size_t i = 0; i < per; ++i) gx[i] += static_cast<float>((gy[i] - yy[i] * dot) / norms[b]);
      } else {
        for (std::size_t i = 0; i < per; ++i) gx[i] += gy[i] / eps;
      }
    }
  });
}

Var sum_scalars(std::span<const Var> xs) {
  if (xs.empty()) throw UsageError("sum_scalars of an empty list");
  double acc = 0.0;
  for (const Var& v : xs) {
    if (v.value().size() != 1) throw DimensionError("sum_scalars: non-scalar input " + v.shape().str());
    acc += v.value()[0];
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return xs.front().tape().record(Tensor::scalar(static_cast<float>(acc)), std::move(inputs),
                                  [](const Tensor& g, InputGrads gin) {
                                    for (Tensor* t : gin) {
                                      if (t != nullptr) (*t)[0] += g[0];
                                    }
                                  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
  require_channel_vector("batch_norm", x, gamma);
  require_channel_vector("batch_norm", x, beta);
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  const auto means = channel_means(x.value());
  const auto stds = channel_stds(x.value());
  std::vector<double> inv(means.size());
  for (std::size_t c = 0; c < inv.size(); ++c) inv[c] = 1.0 / std::sqrt(stds[c] * stds[c] + eps);
  Tensor xhat = x.value();
  Tensor out = x.value();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      const std::size_t base = (static_cast<std::size_t>(b) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const float xh = static_cast<float>((x.value()[base + i] - means[cc]) * inv[cc]);
        xhat[base + i] = xh;
        out[base + i] = gamma.value()[cc] * xh + beta.value()[cc];
      }
    }
  }
  return x.tape().record(
      std::move(out), {x, gamma, beta}, [gamma, xhat, inv, s, plane](const Tensor& g, InputGrads gin) {
        const double count = static_cast<double>(s.n) * static_cast<double>(plane);
        for (int c = 0; c < s.c; ++c) {
          const auto cc = static_cast<std::size_t>(c);
          double sum_g = 0.0;
          double sum_gx = 0.0;
          for (int b = 0; b < s.n; ++b) {
            const std::size_t base = (static_cast<std::size_t>(b) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += g[base + i];
              sum_gx += static_cast<double>(g[base + i]) * xhat[base + i];
            }
          }
          if (gin[1] != nullptr) (*gin[1])[cc] += static_cast<float>(sum_gx);
          if (gin[2] != nullptr) (*gin[2])[cc] += static_cast<float>(sum_g);
          if (gin[0] == nullptr) continue;
          const double k = gamma.value()[cc] * inv[cc] / count;
          for (int b = 0; b < s.n; ++b) {
            const std::size_t base = (static_cast<std::size_t>(b) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              (*gin[0])[base + i] += static_cast<float>(k * (count * g[base + i] - sum_g - xhat[base + i] * sum_gx));
            }
          }
        }
      });
}

}  // namespace odm
