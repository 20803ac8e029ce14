#include "kcflat/nn/layers.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace kcflat::nn {

std::string to_string(const Shape& s) {
    return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + "]";
}

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int conv_out_extent(int in, int kernel, int stride, int padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

// cols is [C*k*k, N*Ho*Wo]; column index = n*Ho*Wo + oy*Wo + ox.
template <typename T>
void im2col(const Tensor<T>& x, int k, int stride, int pad, int ho, int wo, AlignedVector<T>& cols) {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    const std::size_t row_len = plane * n;
    cols.assign(static_cast<std::size_t>(c) * k * k * row_len, T{});
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * row_len;
                for (int ni = 0; ni < n; ++ni) {
                    const T* src = x.sample(ni) + static_cast<std::size_t>(ci) * h * w;
                    T* dst = row + ni * plane;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        T* drow = dst + static_cast<std::size_t>(oy) * wo;
                        if (iy < 0 || iy >= h) continue;
                        const T* srow = src + static_cast<std::size_t>(iy) * w;
                        if (stride == 1) {
                            const int lo = std::max(0, pad - kx);
                            const int hi = std::min(wo, w + pad - kx);
                            for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox - pad + kx];
                        } else {
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix >= 0 && ix < w) drow[ox] = srow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const AlignedVector<T>& cols, int k, int stride, int pad, int ho, int wo, Tensor<T>& dx) {
    const int n = dx.n(), c = dx.c(), h = dx.h(), w = dx.w();
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    const std::size_t row_len = plane * n;
    dx.fill(T{});
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * row_len;
                for (int ni = 0; ni < n; ++ni) {
                    T* dst = dx.sample(ni) + static_cast<std::size_t>(ci) * h * w;
                    const T* src = row + ni * plane;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const T* srow = src + static_cast<std::size_t>(oy) * wo;
                        T* drow = dst + static_cast<std::size_t>(iy) * w;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < w) drow[ix] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    if (!(dst.shape() == src.shape())) {
        throw ShapeError("add " + to_string(src.shape()) + " into " + to_string(dst.shape()));
    }
    T* d = dst.data();
    const T* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      weight_(Shape{out_channels, in_channels, kernel, kernel}) {}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.c() != in_) {
        throw ShapeError("conv expects " + std::to_string(in_) + " input channels, got " + std::to_string(x.c()));
    }
    const int ho = conv_out_extent(x.h(), kernel_, stride_, padding_);
    const int wo = conv_out_extent(x.w(), kernel_, stride_, padding_);
    if (ho <= 0 || wo <= 0) throw ShapeError("conv input " + to_string(x.shape()) + " smaller than kernel");
    const int n = x.n();
    const int ckk = in_ * kernel_ * kernel_;
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    const Eigen::Index np = static_cast<Eigen::Index>(plane * n);

    AlignedVector<T> cols;
    im2col(x, kernel_, stride_, padding_, ho, wo, cols);
    AlignedVector<T> ybuf(static_cast<std::size_t>(out_) * np);
    Eigen::Map<const MatR<T>> wmat(weight_.value.data(), out_, ckk);
    Eigen::Map<const MatR<T>> cmat(cols.data(), ckk, np);
    Eigen::Map<MatR<T>> ymat(ybuf.data(), out_, np);
    ymat.noalias() = wmat * cmat;

    Tensor<T> y(Shape{n, out_, ho, wo});
    for (int ni = 0; ni < n; ++ni) {
        for (int co = 0; co < out_; ++co) {
            const T* src = ybuf.data() + static_cast<std::size_t>(co) * np + ni * plane;
            std::copy(src, src + plane, y.sample(ni) + co * plane);
        }
    }
    if (mode == Mode::train) input_ = x;
    return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
    if (input_.empty()) throw Error("conv backward without a training forward pass");
    const int n = input_.n();
    const int ho = grad_out.h(), wo = grad_out.w();
    const int ckk = in_ * kernel_ * kernel_;
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    const Eigen::Index np = static_cast<Eigen::Index>(plane * n);

    AlignedVector<T> gbuf(static_cast<std::size_t>(out_) * np);
    for (int ni = 0; ni < n; ++ni) {
        for (int co = 0; co < out_; ++co) {
            const T* src = grad_out.sample(ni) + co * plane;
            std::copy(src, src + plane, gbuf.data() + static_cast<std::size_t>(co) * np + ni * plane);
        }
    }
    AlignedVector<T> cols;
    im2col(input_, kernel_, stride_, padding_, ho, wo, cols);
    Eigen::Map<const MatR<T>> gmat(gbuf.data(), out_, np);
    Eigen::Map<const MatR<T>> cmat(cols.data(), ckk, np);
    Eigen::Map<MatR<T>> dw(weight_.grad.data(), out_, ckk);
    dw.noalias() += gmat * cmat.transpose();

    Eigen::Map<const MatR<T>> wmat(weight_.value.data(), out_, ckk);
    Eigen::Map<MatR<T>> dcols(cols.data(), ckk, np);
    dcols.noalias() = wmat.transpose() * gmat;

    Tensor<T> dx(input_.shape());
    col2im(cols, kernel_, stride_, padding_, ho, wo, dx);
    return dx;
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, TensorRegistry<T>& out) {
    out.parameters.push_back({prefix + "weight", &weight_});
}

template <typename T>
void Conv2d<T>::initialize(std::mt19937_64& rng) {
    // He-normal with fan_out, the usual residual-network initialization.
    const double stddev = std::sqrt(2.0 / (static_cast<double>(out_) * kernel_ * kernel_));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : weight_.value.values()) v = static_cast<T>(dist(rng));
    weight_.zero_grad();
}

// ---------------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, T momentum, T eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(Shape{1, channels, 1, 1}),
      beta_(Shape{1, channels, 1, 1}),
      running_mean_(Shape{1, channels, 1, 1}, T(0)),
      running_var_(Shape{1, channels, 1, 1}, T(1)) {
    gamma_.value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.c() != channels_) throw ShapeError("batchnorm channel mismatch");
    const int n = x.n();
    const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
    Tensor<T> y(x.shape());
    if (mode == Mode::eval) {
        for (int c = 0; c < channels_; ++c) {
            const T scale = gamma_.value[c] / std::sqrt(running_var_[c] + eps_);
            const T shift = beta_.value[c] - running_mean_[c] * scale;
            for (int ni = 0; ni < n; ++ni) {
                const T* src = x.sample(ni) + c * plane;
                T* dst = y.sample(ni) + c * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
            }
        }
        return y;
    }
    const double count = static_cast<double>(n) * plane;
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(static_cast<std::size_t>(channels_), T{});
    for (int c = 0; c < channels_; ++c) {
        double sum = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const T* src = x.sample(ni) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) sum += src[i];
        }
        const double mean = sum / count;
        double sq = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const T* src = x.sample(ni) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = src[i] - mean;
                sq += d * d;
            }
        }
        const double var = sq / count;
        const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
        inv_std_[static_cast<std::size_t>(c)] = inv_std;
        const T g = gamma_.value[c], b = beta_.value[c];
        for (int ni = 0; ni < n; ++ni) {
            const T* src = x.sample(ni) + c * plane;
            T* xh = xhat_.sample(ni) + c * plane;
            T* dst = y.sample(ni) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = static_cast<T>((src[i] - mean)) * inv_std;
                dst[i] = xh[i] * g + b;
            }
        }
        const double unbiased = count > 1 ? var * count / (count - 1) : var;
        running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
        running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
    }
    return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
    if (xhat_.empty()) throw Error("batchnorm backward without a training forward pass");
    const int n = grad_out.n();
    const std::size_t plane = static_cast<std::size_t>(grad_out.h()) * grad_out.w();
    const double count = static_cast<double>(n) * plane;
    Tensor<T> dx(grad_out.shape());
    for (int c = 0; c < channels_; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const T* dy = grad_out.sample(ni) + c * plane;
            const T* xh = xhat_.sample(ni) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += dy[i];
                sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
            }
        }
        gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
        beta_.grad[c] += static_cast<T>(sum_dy);
        const double g = gamma_.value[c];
        const double k = g * inv_std_[static_cast<std::size_t>(c)] / count;
        for (int ni = 0; ni < n; ++ni) {
            const T* dy = grad_out.sample(ni) + c * plane;
            const T* xh = xhat_.sample(ni) + c * plane;
            T* d = dx.sample(ni) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                d[i] = static_cast<T>(k * (count * dy[i] - sum_dy - xh[i] * sum_dy_xhat));
            }
        }
    }
    return dx;
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, TensorRegistry<T>& out) {
    out.parameters.push_back({prefix + "weight", &gamma_});
    out.parameters.push_back({prefix + "bias", &beta_});
    out.buffers.push_back({prefix + "running_mean", &running_mean_});
    out.buffers.push_back({prefix + "running_var", &running_var_});
}

template <typename T>
void BatchNorm2d<T>::initialize(std::mt19937_64&) {
    gamma_.value.fill(T(1));
    beta_.value.fill(T(0));
    running_mean_.fill(T(0));
    running_var_.fill(T(1));
    gamma_.zero_grad();
    beta_.zero_grad();
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y(x.shape());
    const T* s = x.data();
    T* d = y.data();
    if (mode == Mode::train) {
        active_.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const bool on = s[i] > T(0);
            active_[i] = on;
            d[i] = on ? s[i] : T(0);
        }
        shape_ = x.shape();
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) d[i] = s[i] > T(0) ? s[i] : T(0);
    }
    return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
    if (!(grad_out.shape() == shape_)) throw ShapeError("relu backward shape mismatch");
    Tensor<T> dx(grad_out.shape());
    const T* g = grad_out.data();
    T* d = dx.data();
    for (std::size_t i = 0; i < dx.size(); ++i) d[i] = active_[i] ? g[i] : T(0);
    return dx;
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, Mode mode) {
    const int ho = conv_out_extent(x.h(), kernel_, stride_, padding_);
    const int wo = conv_out_extent(x.w(), kernel_, stride_, padding_);
    if (ho <= 0 || wo <= 0) throw ShapeError("maxpool input too small: " + to_string(x.shape()));
    Tensor<T> y(Shape{x.n(), x.c(), ho, wo});
    const bool keep = mode == Mode::train;
    if (keep) {
        argmax_.assign(y.size(), -1);
        in_shape_ = x.shape();
    }
    const std::size_t in_plane = static_cast<std::size_t>(x.h()) * x.w();
    std::size_t o = 0;
    for (int ni = 0; ni < x.n(); ++ni) {
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.sample(ni) + c * in_plane;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    int best_i = -1;
                    for (int ky = 0; ky < kernel_; ++ky) {
                        const int iy = oy * stride_ - padding_ + ky;
                        if (iy < 0 || iy >= x.h()) continue;
                        for (int kx = 0; kx < kernel_; ++kx) {
                            const int ix = ox * stride_ - padding_ + kx;
                            if (ix < 0 || ix >= x.w()) continue;
                            const T v = src[iy * x.w() + ix];
                            if (v > best) {
                                best = v;
                                best_i = iy * x.w() + ix;
                            }
                        }
                    }
                    y[o] = best;
                    if (keep) argmax_[o] = best_i;
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
    if (argmax_.size() != grad_out.size()) throw Error("maxpool backward without a training forward pass");
    Tensor<T> dx(in_shape_);
    const std::size_t in_plane = static_cast<std::size_t>(in_shape_.h) * in_shape_.w;
    const std::size_t out_plane = static_cast<std::size_t>(grad_out.h()) * grad_out.w();
    for (int ni = 0; ni < grad_out.n(); ++ni) {
        for (int c = 0; c < grad_out.c(); ++c) {
            T* d = dx.sample(ni) + c * in_plane;
            const std::size_t base = (static_cast<std::size_t>(ni) * grad_out.c() + c) * out_plane;
            for (std::size_t i = 0; i < out_plane; ++i) {
                const int src = argmax_[base + i];
                if (src >= 0) d[src] += grad_out[base + i];
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, Mode) {
    in_shape_ = x.shape();
    Tensor<T> y(Shape{x.n(), x.c(), 1, 1});
    const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
    for (int ni = 0; ni < x.n(); ++ni) {
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.sample(ni) + c * plane;
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += src[i];
            y(ni, c, 0, 0) = static_cast<T>(s / static_cast<double>(plane));
        }
    }
    return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
    Tensor<T> dx(in_shape_);
    const std::size_t plane = static_cast<std::size_t>(in_shape_.h) * in_shape_.w;
    const T scale = T(1) / static_cast<T>(plane);
    for (int ni = 0; ni < in_shape_.n; ++ni) {
        for (int c = 0; c < in_shape_.c; ++c) {
            const T g = grad_out(ni, c, 0, 0) * scale;
            T* d = dx.sample(ni) + c * plane;
            std::fill(d, d + plane, g);
        }
    }
    return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_(Shape{out_features, in_features, 1, 1}),
      bias_(Shape{1, out_features, 1, 1}) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode mode) {
    if (static_cast<int>(x.shape().sample_size()) != in_) {
        throw ShapeError("linear expects " + std::to_string(in_) + " features, got " + to_string(x.shape()));
    }
    const int n = x.n();
    Tensor<T> y(Shape{n, out_, 1, 1});
    Eigen::Map<const MatR<T>> xm(x.data(), n, in_);
    Eigen::Map<const MatR<T>> wm(weight_.value.data(), out_, in_);
    Eigen::Map<MatR<T>> ym(y.data(), n, out_);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bm(bias_.value.data(), out_);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += bm;
    if (mode == Mode::train) input_ = x;
    return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
    if (input_.empty()) throw Error("linear backward without a training forward pass");
    const int n = input_.n();
    Eigen::Map<const MatR<T>> gm(grad_out.data(), n, out_);
    Eigen::Map<const MatR<T>> xm(input_.data(), n, in_);
    Eigen::Map<MatR<T>> dw(weight_.grad.data(), out_, in_);
    dw.noalias() += gm.transpose() * xm;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data(), out_);
    db += gm.colwise().sum();
    Tensor<T> dx(input_.shape());
    Eigen::Map<const MatR<T>> wm(weight_.value.data(), out_, in_);
    Eigen::Map<MatR<T>> dxm(dx.data(), n, in_);
    dxm.noalias() = gm * wm;
    return dx;
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, TensorRegistry<T>& out) {
    out.parameters.push_back({prefix + "weight", &weight_});
    out.parameters.push_back({prefix + "bias", &bias_});
}

template <typename T>
void Linear<T>::initialize(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : weight_.value.values()) v = static_cast<T>(dist(rng));
    for (auto& v : bias_.value.values()) v = static_cast<T>(dist(rng));
    weight_.zero_grad();
    bias_.zero_grad();
}

// ---------------------------------------------------------------- LogSoftmax

template <typename T>
Tensor<T> LogSoftmax<T>::forward(const Tensor<T>& x, Mode mode) {
    const int n = x.n();
    const std::size_t k = x.shape().sample_size();
    Tensor<T> y(x.shape());
    for (int ni = 0; ni < n; ++ni) {
        const T* s = x.sample(ni);
        T* d = y.sample(ni);
        const T mx = *std::max_element(s, s + k);
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += std::exp(static_cast<double>(s[i] - mx));
        const T lse = mx + static_cast<T>(std::log(acc));
        for (std::size_t i = 0; i < k; ++i) d[i] = s[i] - lse;
    }
    if (mode == Mode::train) output_ = y;
    return y;
}

template <typename T>
Tensor<T> LogSoftmax<T>::backward(const Tensor<T>& grad_out) {
    if (output_.empty()) throw Error("log-softmax backward without a training forward pass");
    const int n = output_.n();
    const std::size_t k = output_.shape().sample_size();
    Tensor<T> dx(output_.shape());
    for (int ni = 0; ni < n; ++ni) {
        const T* g = grad_out.sample(ni);
        const T* y = output_.sample(ni);
        T* d = dx.sample(ni);
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += g[i];
        for (std::size_t i = 0; i < k; ++i) d[i] = g[i] - static_cast<T>(std::exp(static_cast<double>(y[i])) * sum);
    }
    return dx;
}

// ---------------------------------------------------------------- Sequential

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
    if (children_.empty()) return x;
    Tensor<T> cur = children_.front().layer->forward(x, mode);
    for (std::size_t i = 1; i < children_.size(); ++i) cur = children_[i].layer->forward(cur, mode);
    return cur;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
    if (children_.empty()) return grad_out;
    Tensor<T> g = children_.back().layer->backward(grad_out);
    for (std::size_t i = children_.size() - 1; i-- > 0;) g = children_[i].layer->backward(g);
    return g;
}

template <typename T>
void Sequential<T>::collect(const std::string& prefix, TensorRegistry<T>& out) {
    for (auto& child : children_) {
        child.layer->collect(child.name.empty() ? prefix : prefix + child.name + ".", out);
    }
}

template <typename T>
void Sequential<T>::initialize(std::mt19937_64& rng) {
    for (auto& child : children_) child.layer->initialize(rng);
}

// ---------------------------------------------------------------- BasicBlock

template <typename T>
BasicBlock<T>::BasicBlock(int in_channels, int out_channels, int stride)
    : conv1_(in_channels, out_channels, 3, stride, 1),
      bn1_(out_channels),
      conv2_(out_channels, out_channels, 3, 1, 1),
      bn2_(out_channels) {
    if (stride != 1 || in_channels != out_channels) {
        down_conv_ = std::make_unique<Conv2d<T>>(in_channels, out_channels, 1, stride, 0);
        down_bn_ = std::make_unique<BatchNorm2d<T>>(out_channels);
    }
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> main = bn2_.forward(conv2_.forward(relu1_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode), mode), mode);
    if (down_conv_) {
        add_inplace(main, down_bn_->forward(down_conv_->forward(x, mode), mode));
    } else {
        add_inplace(main, x);
    }
    return relu_out_.forward(main, mode);
}

template <typename T>
Tensor<T> BasicBlock<T>::backward(const Tensor<T>& grad_out) {
    Tensor<T> g = relu_out_.backward(grad_out);
    Tensor<T> dx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(g)))));
    if (down_conv_) {
        add_inplace(dx, down_conv_->backward(down_bn_->backward(g)));
    } else {
        add_inplace(dx, g);
    }
    return dx;
}

template <typename T>
void BasicBlock<T>::collect(const std::string& prefix, TensorRegistry<T>& out) {
    conv1_.collect(prefix + "conv1.", out);
    bn1_.collect(prefix + "bn1.", out);
    conv2_.collect(prefix + "conv2.", out);
    bn2_.collect(prefix + "bn2.", out);
    if (down_conv_) {
        down_conv_->collect(prefix + "downsample.0.", out);
        down_bn_->collect(prefix + "downsample.1.", out);
    }
}

template <typename T>
void BasicBlock<T>::initialize(std::mt19937_64& rng) {
    conv1_.initialize(rng);
    bn1_.initialize(rng);
    conv2_.initialize(rng);
    bn2_.initialize(rng);
    if (down_conv_) {
        down_conv_->initialize(rng);
        down_bn_->initialize(rng);
    }
}

#define KCFLAT_INSTANTIATE(T)              \
    template void add_inplace<T>(Tensor<T>&, const Tensor<T>&); \
    template class Conv2d<T>;              \
    template class BatchNorm2d<T>;         \
    template class ReLU<T>;                \
    template class MaxPool2d<T>;           \
    template class GlobalAvgPool<T>;       \
    template class Linear<T>;              \
    template class LogSoftmax<T>;          \
    template class Sequential<T>;          \
    template class BasicBlock<T>;

KCFLAT_INSTANTIATE(float)
KCFLAT_INSTANTIATE(double)

#undef KCFLAT_INSTANTIATE

}  // namespace kcflat::nn
