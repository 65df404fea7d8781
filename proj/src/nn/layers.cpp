#include "svct/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "svct/error.hpp"

namespace svct::nn {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

// Column matrix of shape (c * k * k, h * w) for one batch item.
void im2col(const double* src, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            double* col) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t hw = h * w;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = src + ch * hw;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* row = col + ((ch * k + ky) * k + kx) * hw;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    double* out = row + y * w;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill(out, out + w, 0.0);
                        continue;
                    }
                    const double* in = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t x = 0; x < w; ++x) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
                        out[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w))
                                     ? 0.0
                                     : in[static_cast<std::size_t>(sx)];
                    }
                }
            }
        }
    }
}

void col2im(const double* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            double* dst) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t hw = h * w;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double* plane = dst + ch * hw;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* row = col + ((ch * k + ky) * k + kx) * hw;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    const double* in = row + y * w;
                    double* out = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t x = 0; x < w; ++x) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                        out[static_cast<std::size_t>(sx)] += in[x];
                    }
                }
            }
        }
    }
}

void check_weight(const Tensor4& x, const Tensor4& weight) {
    const Shape4& ws = weight.shape();
    require(ws.h == ws.w && (ws.h == 1 || ws.h == 3), ErrorKind::shape_mismatch,
            "convolution kernel must be 1x1 or 3x3");
    require(ws.c == x.shape().c, ErrorKind::shape_mismatch,
            "convolution expects " + std::to_string(ws.c) + " input channels, got " +
                std::to_string(x.shape().c));
}

}  // namespace

Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& weight, std::span<const double> bias) {
    check_weight(x, weight);
    const Shape4& s = x.shape();
    const Shape4& ws = weight.shape();
    require(bias.empty() || bias.size() == ws.n, ErrorKind::shape_mismatch,
            "bias length must equal output channels");
    const std::size_t k = ws.h;
    const std::size_t hw = s.plane();
    const std::size_t kdim = s.c * k * k;
    Tensor4 out(s.n, ws.n, s.h, s.w);
    std::vector<double> col(kdim * hw);
    for (std::size_t b = 0; b < s.n; ++b) {
        const double* src = x.plane(b, 0);
        const double* cols = src;
        if (k != 1) {
            im2col(src, s.c, s.h, s.w, k, col.data());
            cols = col.data();
        }
        double* dst = out.plane(b, 0);
        if (!bias.empty()) {
            for (std::size_t o = 0; o < ws.n; ++o) std::fill(dst + o * hw, dst + (o + 1) * hw, bias[o]);
        }
        MatrixMap y(dst, ws.n, hw);
        const ConstMatrixMap w(weight.data(), ws.n, kdim);
        const ConstMatrixMap c(cols, kdim, hw);
        if (bias.empty()) {
            y.noalias() = w * c;
        } else {
            y.noalias() += w * c;
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor4& x, const Tensor4& weight, const Tensor4& dout,
                            bool with_bias) {
    check_weight(x, weight);
    const Shape4& s = x.shape();
    const Shape4& ws = weight.shape();
    require(dout.shape() == Shape4{s.n, ws.n, s.h, s.w}, ErrorKind::shape_mismatch,
            "convolution output gradient has the wrong shape");
    const std::size_t k = ws.h;
    const std::size_t hw = s.plane();
    const std::size_t kdim = s.c * k * k;

    Conv2dGrads g{Tensor4(s), Tensor4(ws), {}};
    if (with_bias) g.dbias.assign(ws.n, 0.0);
    std::vector<double> col(kdim * hw);
    std::vector<double> dcol(k == 1 ? 0 : kdim * hw);
    for (std::size_t b = 0; b < s.n; ++b) {
        const double* src = x.plane(b, 0);
        const double* cols = src;
        if (k != 1) {
            im2col(src, s.c, s.h, s.w, k, col.data());
            cols = col.data();
        }
        const double* dy = dout.plane(b, 0);
        const ConstMatrixMap dy_m(dy, ws.n, hw);
        const ConstMatrixMap c(cols, kdim, hw);
        MatrixMap(g.dweight.data(), ws.n, kdim).noalias() += dy_m * c.transpose();
        double* dcols = k == 1 ? g.dx.plane(b, 0) : dcol.data();
        MatrixMap(dcols, kdim, hw).noalias() =
            ConstMatrixMap(weight.data(), ws.n, kdim).transpose() * dy_m;
        if (k != 1) col2im(dcol.data(), s.c, s.h, s.w, k, g.dx.plane(b, 0));
        if (with_bias) {
            for (std::size_t o = 0; o < ws.n; ++o) {
                double sum = 0.0;
                for (std::size_t i = 0; i < hw; ++i) sum += dy[o * hw + i];
                g.dbias[o] += sum;
            }
        }
    }
    return g;
}

BatchNorm::BatchNorm(std::size_t channels, double eps, double momentum)
    : gamma(channels, 1.0),
      beta(channels, 0.0),
      dgamma(channels, 0.0),
      dbeta(channels, 0.0),
      running_mean(channels, 0.0),
      running_var(channels, 1.0),
      eps_(eps),
      momentum_(momentum) {}

Tensor4 BatchNorm::forward(const Tensor4& x, Mode mode) {
    const Shape4& s = x.shape();
    require(s.c == channels(), ErrorKind::shape_mismatch, "batch norm channel mismatch");
    const std::size_t hw = s.plane();
    const std::size_t m = s.n * hw;
    Tensor4 out(s);
    xhat_ = Tensor4(s);
    inv_std_.assign(s.c, 0.0);
    last_mode_ = mode;
    if (mode == Mode::eval) {
        require(initialized, ErrorKind::uninitialized_stats,
                "batch norm evaluated before any training step");
    }
    for (std::size_t c = 0; c < s.c; ++c) {
        double mean, var;
        if (mode == Mode::train) {
            double sum = 0.0;
            for (std::size_t b = 0; b < s.n; ++b) {
                const double* p = x.plane(b, c);
                for (std::size_t i = 0; i < hw; ++i) sum += p[i];
            }
            mean = sum / static_cast<double>(m);
            double sq = 0.0;
            for (std::size_t b = 0; b < s.n; ++b) {
                const double* p = x.plane(b, c);
                for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
            }
            var = sq / static_cast<double>(m);
            const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
            running_mean[c] = momentum_ * running_mean[c] + (1.0 - momentum_) * mean;
            running_var[c] = momentum_ * running_var[c] + (1.0 - momentum_) * unbiased;
        } else {
            mean = running_mean[c];
            var = running_var[c];
        }
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[c] = inv;
        for (std::size_t b = 0; b < s.n; ++b) {
            const double* p = x.plane(b, c);
            double* xh = xhat_.plane(b, c);
            double* o = out.plane(b, c);
            for (std::size_t i = 0; i < hw; ++i) {
                xh[i] = (p[i] - mean) * inv;
                o[i] = gamma[c] * xh[i] + beta[c];
            }
        }
    }
    if (mode == Mode::train) initialized = true;
    return out;
}

Tensor4 BatchNorm::backward(const Tensor4& dout) {
    const Shape4& s = xhat_.shape();
    require(dout.shape() == s, ErrorKind::shape_mismatch, "batch norm gradient shape mismatch");
    const std::size_t hw = s.plane();
    const auto m = static_cast<double>(s.n * hw);
    Tensor4 dx(s);
    for (std::size_t c = 0; c < s.c; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < s.n; ++b) {
            const double* dy = dout.plane(b, c);
            const double* xh = xhat_.plane(b, c);
            for (std::size_t i = 0; i < hw; ++i) {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * xh[i];
            }
        }
        dgamma[c] += sum_dy_xhat;
        dbeta[c] += sum_dy;
        const double scale = gamma[c] * inv_std_[c];
        for (std::size_t b = 0; b < s.n; ++b) {
            const double* dy = dout.plane(b, c);
            const double* xh = xhat_.plane(b, c);
            double* d = dx.plane(b, c);
            if (last_mode_ == Mode::eval) {
                for (std::size_t i = 0; i < hw; ++i) d[i] = scale * dy[i];
            } else {
                for (std::size_t i = 0; i < hw; ++i) {
                    d[i] = scale * (dy[i] - sum_dy / m - xh[i] * sum_dy_xhat / m);
                }
            }
        }
    }
    return dx;
}

Tensor4 relu_forward(const Tensor4& x) {
    Tensor4 y(x.shape());
    const auto in = x.values();
    auto out = y.values();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    return y;
}

Tensor4 relu_backward(const Tensor4& y, const Tensor4& dout) {
    require(y.shape() == dout.shape(), ErrorKind::shape_mismatch, "relu gradient shape mismatch");
    Tensor4 dx(y.shape());
    const auto a = y.values();
    const auto g = dout.values();
    auto d = dx.values();
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] > 0.0 ? g[i] : 0.0;
    return dx;
}

MaxPoolResult maxpool2x2_forward(const Tensor4& x) {
    const Shape4& s = x.shape();
    require(s.h % 2 == 0 && s.w % 2 == 0, ErrorKind::shape_mismatch,
            "2x2 pooling needs even height and width");
    MaxPoolResult r{Tensor4(s.n, s.c, s.h / 2, s.w / 2), {}};
    r.argmax.resize(r.out.size());
    std::size_t k = 0;
    for (std::size_t b = 0; b < s.n; ++b) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const std::size_t base = (b * s.c + c) * s.plane();
            for (std::size_t y = 0; y < s.h / 2; ++y) {
                for (std::size_t xo = 0; xo < s.w / 2; ++xo, ++k) {
                    std::size_t best = base + 2 * y * s.w + 2 * xo;
                    for (std::size_t idx : {best + 1, best + s.w, best + s.w + 1}) {
                        if (x.data()[idx] > x.data()[best]) best = idx;
                    }
                    r.out.data()[k] = x.data()[best];
                    r.argmax[k] = static_cast<std::uint32_t>(best);
                }
            }
        }
    }
    return r;
}

Tensor4 maxpool2x2_backward(const Shape4& input_shape, const std::vector<std::uint32_t>& argmax,
                            const Tensor4& dout) {
    require(argmax.size() == dout.size(), ErrorKind::shape_mismatch,
            "max pool gradient shape mismatch");
    Tensor4 dx(input_shape);
    for (std::size_t k = 0; k < argmax.size(); ++k) dx.data()[argmax[k]] += dout.data()[k];
    return dx;
}

Tensor4 avg_pool2x2(const Tensor4& x) {
    const Shape4& s = x.shape();
    require(s.h % 2 == 0 && s.w % 2 == 0, ErrorKind::shape_mismatch,
            "2x2 pooling needs even height and width");
    Tensor4 out(s.n, s.c, s.h / 2, s.w / 2);
    for (std::size_t b = 0; b < s.n; ++b) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y < s.h / 2; ++y) {
                for (std::size_t xo = 0; xo < s.w / 2; ++xo) {
                    out(b, c, y, xo) = 0.25 * (x(b, c, 2 * y, 2 * xo) + x(b, c, 2 * y, 2 * xo + 1) +
                                               x(b, c, 2 * y + 1, 2 * xo) +
                                               x(b, c, 2 * y + 1, 2 * xo + 1));
                }
            }
        }
    }
    return out;
}

Tensor4 avg_unpool2x2(const Tensor4& x) {
    const Shape4& s = x.shape();
    Tensor4 out(s.n, s.c, 2 * s.h, 2 * s.w);
    for (std::size_t b = 0; b < s.n; ++b) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y < 2 * s.h; ++y) {
                for (std::size_t xo = 0; xo < 2 * s.w; ++xo) {
                    out(b, c, y, xo) = 0.25 * x(b, c, y / 2, xo / 2);
                }
            }
        }
    }
    return out;
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
    const Shape4& sa = a.shape();
    const Shape4& sb = b.shape();
    require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, ErrorKind::shape_mismatch,
            "concatenated tensors must share batch and spatial size");
    Tensor4 out(sa.n, sa.c + sb.c, sa.h, sa.w);
    for (std::size_t n = 0; n < sa.n; ++n) {
        std::copy(a.plane(n, 0), a.plane(n, 0) + sa.c * sa.plane(), out.plane(n, 0));
        std::copy(b.plane(n, 0), b.plane(n, 0) + sb.c * sb.plane(), out.plane(n, sa.c));
    }
    return out;
}

void split_channels(const Tensor4& d, std::size_t channels_a, Tensor4& da, Tensor4& db) {
    const Shape4& s = d.shape();
    require(channels_a <= s.c, ErrorKind::shape_mismatch, "split point beyond channel count");
    da = Tensor4(s.n, channels_a, s.h, s.w);
    db = Tensor4(s.n, s.c - channels_a, s.h, s.w);
    for (std::size_t n = 0; n < s.n; ++n) {
        std::copy(d.plane(n, 0), d.plane(n, channels_a), da.plane(n, 0));
        std::copy(d.plane(n, channels_a), d.plane(n, 0) + s.c * s.plane(), db.plane(n, 0));
    }
}

}  // namespace svct::nn
