#include "latentce/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "latentce/error.hpp"

namespace latentce::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRow = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapRow = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

// Images per GEMM. Larger chunks give bigger GEMMs at the cost of patch
// buffer size.
constexpr int kChunk = 8;

constexpr int kTapOffsets[3] = {-1, 0, 1};

// Phase (a, b) of an upsample+conv: output pixel (2i+a, 2j+b) reads low-res row
// i + kPhaseOffsets[a][r]; row group r sums kernel rows [kPhaseTapBegin, kPhaseTapEnd).
constexpr int kPhaseOffsets[2][2] = {{-1, 0}, {0, 1}};
constexpr int kPhaseTapBegin[2][2] = {{0, 1}, {0, 2}};
constexpr int kPhaseTapEnd[2][2] = {{1, 3}, {2, 3}};

struct PatchGeometry {
  int height, width, channels;  // input image
  int out_h, out_w;
  int stride;
  std::span<const int> dys, dxs;

  int taps() const { return static_cast<int>(dys.size() * dxs.size()); }
  int row_length() const { return taps() * channels; }
};

// Row (n, oy, ox) of `col` holds, for each tap (r, s), the channel vector at
// (oy*stride + dys[r], ox*stride + dxs[s]) of image n, or zeros outside.
template <typename T>
void gather_patches(const T* images, int count, const PatchGeometry& g, T* col) {
  const int c = g.channels, len = g.row_length();
  const std::size_t image_size = static_cast<std::size_t>(g.height) * g.width * c;
  for (int n = 0; n < count; ++n) {
    const T* img = images + n * image_size;
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        T* dst = col + (static_cast<std::size_t>(n * g.out_h + oy) * g.out_w + ox) * len;
        for (const int dy : g.dys) {
          const int iy = oy * g.stride + dy;
          for (const int dx : g.dxs) {
            const int ix = ox * g.stride + dx;
            if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) {
              std::fill(dst, dst + c, T{0});
            } else {
              const T* src = img + (static_cast<std::size_t>(iy) * g.width + ix) * c;
              std::copy(src, src + c, dst);
            }
            dst += c;
          }
        }
      }
    }
  }
}

// Adjoint of gather_patches.
template <typename T>
void scatter_patches(const T* col, int count, const PatchGeometry& g, T* images) {
  const int c = g.channels, len = g.row_length();
  const std::size_t image_size = static_cast<std::size_t>(g.height) * g.width * c;
  for (int n = 0; n < count; ++n) {
    T* img = images + n * image_size;
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const T* src = col + (static_cast<std::size_t>(n * g.out_h + oy) * g.out_w + ox) * len;
        for (const int dy : g.dys) {
          const int iy = oy * g.stride + dy;
          for (const int dx : g.dxs) {
            const int ix = ox * g.stride + dx;
            if (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width) {
              T* dst = img + (static_cast<std::size_t>(iy) * g.width + ix) * c;
              for (int k = 0; k < c; ++k) dst[k] += src[k];
            }
            src += c;
          }
        }
      }
    }
  }
}

template <typename T>
void require_nhwc(const BasicTensor<T>& x, int channels, const char* what) {
  if (x.rank() != 4 || x.dim(3) != channels) {
    throw ShapeError(std::string(what) + ": expected [N,H,W," + std::to_string(channels) +
                     "], got " + shape_string(x.dims()));
  }
}

// Folds the 3x3 kernel [out, 3, 3, in] into the 2x2 kernel of phase (a, b),
// laid out [out, 2, 2, in].
template <typename T>
AlignedVector<T> phase_kernel(const BasicTensor<T>& weight, int out, int in, int a, int b) {
  AlignedVector<T> k(static_cast<std::size_t>(out) * 4 * in, T{0});
  for (int o = 0; o < out; ++o)
    for (int r = 0; r < 2; ++r)
      for (int s = 0; s < 2; ++s)
        for (int ky = kPhaseTapBegin[a][r]; ky < kPhaseTapEnd[a][r]; ++ky)
          for (int kx = kPhaseTapBegin[b][s]; kx < kPhaseTapEnd[b][s]; ++kx) {
            const T* src = weight.data() + ((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * in;
            T* dst = k.data() + ((static_cast<std::size_t>(o) * 2 + r) * 2 + s) * in;
            for (int c = 0; c < in; ++c) dst[c] += src[c];
          }
  return k;
}

template <typename T>
void unfold_phase_grad(const AlignedVector<T>& dk, int out, int in, int a, int b,
                       BasicTensor<T>& dweight) {
  for (int o = 0; o < out; ++o)
    for (int r = 0; r < 2; ++r)
      for (int s = 0; s < 2; ++s)
        for (int ky = kPhaseTapBegin[a][r]; ky < kPhaseTapEnd[a][r]; ++ky)
          for (int kx = kPhaseTapBegin[b][s]; kx < kPhaseTapEnd[b][s]; ++kx) {
            const T* src = dk.data() + ((static_cast<std::size_t>(o) * 2 + r) * 2 + s) * in;
            T* dst = dweight.data() + ((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * in;
            for (int c = 0; c < in; ++c) dst[c] += src[c];
          }
}

// Direct 3x3 convolution for layers with a single input or output channel,
// where a patch matrix would be mostly overhead. Channel loops run over
// whichever side is wider: dot products over inputs when out == 1, axpys over
// outputs (with a [tap, in, out] copy of the kernel) otherwise.
template <typename T>
AlignedVector<T> kernel_tap_major(const BasicTensor<T>& weight, int out, int in) {
  AlignedVector<T> t(static_cast<std::size_t>(9) * in * out);
  for (int o = 0; o < out; ++o)
    for (int tap = 0; tap < 9; ++tap)
      for (int c = 0; c < in; ++c)
        t[(static_cast<std::size_t>(tap) * in + c) * out + o] =
            weight[(static_cast<std::size_t>(o) * 9 + tap) * in + c];
  return t;
}

template <typename T>
void direct_conv_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                         const BasicTensor<T>& bias, int stride, BasicTensor<T>& y) {
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), in = x.dim(3);
  const int oh = y.dim(1), ow = y.dim(2), out = y.dim(3);
  const bool dot_form = out == 1;
  const AlignedVector<T> wt = dot_form ? AlignedVector<T>{} : kernel_tap_major(weight, out, in);
  for (int i = 0; i < n; ++i)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        T* acc = y.data() + ((static_cast<std::size_t>(i) * oh + oy) * ow + ox) * out;
        for (int o = 0; o < out; ++o) acc[o] = bias[o];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= w) continue;
            const int tap = ky * 3 + kx;
            const T* xv = x.data() + ((static_cast<std::size_t>(i) * h + iy) * w + ix) * in;
            if (dot_form) {
              const T* wv = weight.data() + static_cast<std::size_t>(tap) * in;
              T sum{0};
#pragma omp simd reduction(+ : sum)
              for (int c = 0; c < in; ++c) sum += wv[c] * xv[c];
              acc[0] += sum;
            } else {
              for (int c = 0; c < in; ++c) {
                const T* wv = wt.data() + (static_cast<std::size_t>(tap) * in + c) * out;
                const T xc = xv[c];
#pragma omp simd
                for (int o = 0; o < out; ++o) acc[o] += xc * wv[o];
              }
            }
          }
        }
      }
}

template <typename T>
void direct_conv_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride,
                          const BasicTensor<T>& dy, BasicTensor<T>& dweight,
                          BasicTensor<T>& dbias, BasicTensor<T>* dx) {
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), in = x.dim(3);
  const int oh = dy.dim(1), ow = dy.dim(2), out = dy.dim(3);
  const bool dot_form = out == 1;
  const AlignedVector<T> wt = dot_form ? AlignedVector<T>{} : kernel_tap_major(weight, out, in);
  AlignedVector<T> dwt(dot_form ? 0 : wt.size(), T{0});
  for (int i = 0; i < n; ++i)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const T* g = dy.data() + ((static_cast<std::size_t>(i) * oh + oy) * ow + ox) * out;
        for (int o = 0; o < out; ++o) dbias[o] += g[o];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= w) continue;
            const int tap = ky * 3 + kx;
            const std::size_t xoff = ((static_cast<std::size_t>(i) * h + iy) * w + ix) * in;
            if (dot_form) {
              const T go = g[0];
              const std::size_t woff = static_cast<std::size_t>(tap) * in;
              const T* xv = x.data() + xoff;
              const T* wv = weight.data() + woff;
              T* dwv = dweight.data() + woff;
#pragma omp simd
              for (int c = 0; c < in; ++c) dwv[c] += go * xv[c];
              if (dx) {
                T* dxv = dx->data() + xoff;
#pragma omp simd
                for (int c = 0; c < in; ++c) dxv[c] += go * wv[c];
              }
            } else {
              for (int c = 0; c < in; ++c) {
                const std::size_t toff = (static_cast<std::size_t>(tap) * in + c) * out;
                const T* wv = wt.data() + toff;
                T* dwv = dwt.data() + toff;
                const T xc = x[xoff + c];
#pragma omp simd
                for (int o = 0; o < out; ++o) dwv[o] += xc * g[o];
                if (dx) {
                  T sum{0};
#pragma omp simd reduction(+ : sum)
                  for (int o = 0; o < out; ++o) sum += wv[o] * g[o];
                  (*dx)[xoff + c] += sum;
                }
              }
            }
          }
        }
      }
  if (!dot_form) {
    for (int o = 0; o < out; ++o)
      for (int tap = 0; tap < 9; ++tap)
        for (int c = 0; c < in; ++c)
          dweight[(static_cast<std::size_t>(o) * 9 + tap) * in + c] +=
              dwt[(static_cast<std::size_t>(tap) * in + c) * out + o];
  }
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(int in, int out, int s)
    : in_channels(in),
      out_channels(out),
      stride(s),
      weight({out, 3, 3, in}),
      bias({out}) {}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x, Cache* cache) const {
  require_nhwc(x, in_channels, "conv2d input");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const PatchGeometry geo{h, w, in_channels, output_extent(h), output_extent(w), stride,
                          kTapOffsets, kTapOffsets};
  const int k = geo.row_length(), pixels = geo.out_h * geo.out_w;
  BasicTensor<T> y({n, geo.out_h, geo.out_w, out_channels});
  if (in_channels == 1 || out_channels == 1) {
    direct_conv_forward(x, weight, bias, stride, y);
    if (cache) {
      cache->input = x;
      cache->recorded = true;
    }
    return y;
  }
  AlignedVector<T> col(static_cast<std::size_t>(std::min(n, kChunk)) * pixels * k);
  ConstMapRow<T> wmat(weight.data(), out_channels, k);
  const std::size_t in_image = static_cast<std::size_t>(h) * w * in_channels;
  for (int first = 0; first < n; first += kChunk) {
    const int count = std::min(kChunk, n - first);
    const int rows = count * pixels;
    gather_patches(x.data() + first * in_image, count, geo, col.data());
    ConstMapRow<T> cmat(col.data(), rows, k);
    MapRow<T> out(y.data() + static_cast<std::size_t>(first) * pixels * out_channels, rows,
                  out_channels);
    out.noalias() = cmat * wmat.transpose();
    ConstArrayMap<T> b(bias.data(), out_channels);
    for (int r = 0; r < rows; ++r) ArrayMap<T>(out.row(r).data(), out_channels) += b;
  }
  if (cache) {
    cache->input = x;
    cache->recorded = true;
  }
  return y;
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const Cache& cache, const BasicTensor<T>& dy, Conv2d& grad,
                                   bool input_grad) const {
  if (!cache.recorded) throw StateError("conv2d backward called before forward");
  const BasicTensor<T>& x = cache.input;
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const PatchGeometry geo{h, w, in_channels, output_extent(h), output_extent(w), stride,
                          kTapOffsets, kTapOffsets};
  const int k = geo.row_length(), pixels = geo.out_h * geo.out_w;
  require_dims(dy, {n, geo.out_h, geo.out_w, out_channels}, "conv2d upstream gradient");

  BasicTensor<T> dx = input_grad ? BasicTensor<T>(x.dims()) : BasicTensor<T>();
  if (in_channels == 1 || out_channels == 1) {
    direct_conv_backward(x, weight, stride, dy, grad.weight, grad.bias, input_grad ? &dx : nullptr);
    return dx;
  }
  const std::size_t buf = static_cast<std::size_t>(std::min(n, kChunk)) * pixels * k;
  AlignedVector<T> col(buf), dcol(buf);
  ConstMapRow<T> wmat(weight.data(), out_channels, k);
  MapRow<T> dw(grad.weight.data(), out_channels, k);
  const std::size_t in_image = static_cast<std::size_t>(h) * w * in_channels;
  for (int first = 0; first < n; first += kChunk) {
    const int count = std::min(kChunk, n - first);
    const int rows = count * pixels;
    gather_patches(x.data() + first * in_image, count, geo, col.data());
    ConstMapRow<T> cmat(col.data(), rows, k);
    ConstMapRow<T> g(dy.data() + static_cast<std::size_t>(first) * pixels * out_channels, rows,
                     out_channels);
    dw.noalias() += g.transpose() * cmat;
    ArrayMap<T>(grad.bias.data(), out_channels) += g.colwise().sum().transpose().array();
    if (!input_grad) continue;
    MapRow<T> dcmat(dcol.data(), rows, k);
    dcmat.noalias() = g * wmat;
    scatter_patches(dcol.data(), count, geo, dx.data() + first * in_image);
  }
  return dx;
}

template <typename T>
UpsampleConv2d<T>::UpsampleConv2d(int in, int out)
    : in_channels(in), out_channels(out), weight({out, 3, 3, in}), bias({out}) {}

template <typename T>
BasicTensor<T> UpsampleConv2d<T>::forward(const BasicTensor<T>& x, Cache* cache) const {
  require_nhwc(x, in_channels, "upsample-conv input");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int pixels = h * w, k = 4 * in_channels;
  BasicTensor<T> y({n, 2 * h, 2 * w, out_channels});
  const int chunk = std::min(n, kChunk);
  AlignedVector<T> col(static_cast<std::size_t>(chunk) * pixels * k);
  AlignedVector<T> phase_out(static_cast<std::size_t>(chunk) * pixels * out_channels);
  const std::size_t in_image = static_cast<std::size_t>(pixels) * in_channels;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const AlignedVector<T> kern = phase_kernel(weight, out_channels, in_channels, a, b);
      ConstMapRow<T> wmat(kern.data(), out_channels, k);
      const PatchGeometry geo{h, w, in_channels, h, w, 1,
                              std::span<const int>(kPhaseOffsets[a], 2),
                              std::span<const int>(kPhaseOffsets[b], 2)};
      for (int first = 0; first < n; first += kChunk) {
        const int count = std::min(kChunk, n - first);
        const int rows = count * pixels;
        gather_patches(x.data() + first * in_image, count, geo, col.data());
        MapRow<T> pmat(phase_out.data(), rows, out_channels);
        pmat.noalias() = ConstMapRow<T>(col.data(), rows, k) * wmat.transpose();
        for (int r = 0; r < rows; ++r) {
          const int img = first + r / pixels, p = r % pixels;
          const int yy = 2 * (p / w) + a, xx = 2 * (p % w) + b;
          T* dst = y.data() +
                   ((static_cast<std::size_t>(img) * 2 * h + yy) * 2 * w + xx) * out_channels;
          const T* src = phase_out.data() + static_cast<std::size_t>(r) * out_channels;
          for (int o = 0; o < out_channels; ++o) dst[o] = src[o] + bias[o];
        }
      }
    }
  }
  if (cache) {
    cache->input = x;
    cache->recorded = true;
  }
  return y;
}

template <typename T>
BasicTensor<T> UpsampleConv2d<T>::backward(const Cache& cache, const BasicTensor<T>& dy,
                                           UpsampleConv2d& grad) const {
  if (!cache.recorded) throw StateError("upsample-conv backward called before forward");
  const BasicTensor<T>& x = cache.input;
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int pixels = h * w, k = 4 * in_channels;
  require_dims(dy, {n, 2 * h, 2 * w, out_channels}, "upsample-conv upstream gradient");

  BasicTensor<T> dx(x.dims());
  const int chunk = std::min(n, kChunk);
  AlignedVector<T> col(static_cast<std::size_t>(chunk) * pixels * k);
  AlignedVector<T> dcol(col.size());
  AlignedVector<T> gphase(static_cast<std::size_t>(chunk) * pixels * out_channels);
  AlignedVector<T> dkern(static_cast<std::size_t>(out_channels) * k);
  MapRow<T> dkmat(dkern.data(), out_channels, k);
  ArrayMap<T> dbias(grad.bias.data(), out_channels);
  const std::size_t in_image = static_cast<std::size_t>(pixels) * in_channels;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const AlignedVector<T> kern = phase_kernel(weight, out_channels, in_channels, a, b);
      ConstMapRow<T> wmat(kern.data(), out_channels, k);
      const PatchGeometry geo{h, w, in_channels, h, w, 1,
                              std::span<const int>(kPhaseOffsets[a], 2),
                              std::span<const int>(kPhaseOffsets[b], 2)};
      dkmat.setZero();
      for (int first = 0; first < n; first += kChunk) {
        const int count = std::min(kChunk, n - first);
        const int rows = count * pixels;
        gather_patches(x.data() + first * in_image, count, geo, col.data());
        for (int r = 0; r < rows; ++r) {
          const int img = first + r / pixels, p = r % pixels;
          const int yy = 2 * (p / w) + a, xx = 2 * (p % w) + b;
          const T* src = dy.data() +
                         ((static_cast<std::size_t>(img) * 2 * h + yy) * 2 * w + xx) * out_channels;
          std::copy(src, src + out_channels, gphase.data() + static_cast<std::size_t>(r) * out_channels);
        }
        ConstMapRow<T> gmat(gphase.data(), rows, out_channels);
        ConstMapRow<T> cmat(col.data(), rows, k);
        dkmat.noalias() += gmat.transpose() * cmat;
        dbias += gmat.colwise().sum().transpose().array();
        MapRow<T> dcmat(dcol.data(), rows, k);
        dcmat.noalias() = gmat * wmat;
        scatter_patches(dcol.data(), count, geo, dx.data() + first * in_image);
      }
      unfold_phase_grad(dkern, out_channels, in_channels, a, b, grad.weight);
    }
  }
  return dx;
}

template <typename T>
Linear<T>::Linear(int in, int out)
    : in_features(in), out_features(out), weight({out, in}), bias({out}) {}

template <typename T>
BasicTensor<T> Linear<T>::forward(const BasicTensor<T>& x, Cache* cache) const {
  if (x.rank() != 2 || x.dim(1) != in_features) {
    throw ShapeError("linear input: expected [N," + std::to_string(in_features) + "], got " +
                     shape_string(x.dims()));
  }
  const int n = x.dim(0);
  BasicTensor<T> y({n, out_features});
  ConstMapRow<T> xm(x.data(), n, in_features);
  ConstMapRow<T> wm(weight.data(), out_features, in_features);
  MapRow<T> ym(y.data(), n, out_features);
  ym.noalias() = xm * wm.transpose();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < out_features; ++c) ym(r, c) += bias[c];
  if (cache) {
    cache->input = x;
    cache->recorded = true;
  }
  return y;
}

template <typename T>
BasicTensor<T> Linear<T>::backward(const Cache& cache, const BasicTensor<T>& dy,
                                   Linear& grad) const {
  if (!cache.recorded) throw StateError("linear backward called before forward");
  const BasicTensor<T>& x = cache.input;
  const int n = x.dim(0);
  require_dims(dy, {n, out_features}, "linear upstream gradient");
  ConstMapRow<T> xm(x.data(), n, in_features);
  ConstMapRow<T> wm(weight.data(), out_features, in_features);
  ConstMapRow<T> g(dy.data(), n, out_features);
  MapRow<T> dw(grad.weight.data(), out_features, in_features);
  dw.noalias() += g.transpose() * xm;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < out_features; ++c) grad.bias[c] += g(r, c);
  BasicTensor<T> dx(x.dims());
  MapRow<T> dxm(dx.data(), n, in_features);
  dxm.noalias() = g * wm;
  return dx;
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.dims());
  const auto n = static_cast<Eigen::Index>(x.size());
  ConstArrayMap<T> v(x.data(), n);
  ArrayMap<T>(y.data(), n) = v / (T{1} + (-v).exp());
  return y;
}

template <typename T>
BasicTensor<T> silu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  if (!x.same_shape(dy)) throw ShapeError("silu backward: shape mismatch");
  BasicTensor<T> dx(x.dims());
  const auto n = static_cast<Eigen::Index>(x.size());
  ConstArrayMap<T> v(x.data(), n);
  ConstArrayMap<T> g(dy.data(), n);
  ArrayMap<T> out(dx.data(), n);
  out = T{1} / (T{1} + (-v).exp());
  out = g * out * (T{1} + v * (T{1} - out));
  return dx;
}

template <typename T>
BasicTensor<T> film(const BasicTensor<T>& x, const BasicTensor<T>& f) {
  if (x.rank() != 4) throw ShapeError("film input must be NHWC, got " + shape_string(x.dims()));
  const int n = x.dim(0), c = x.dim(3), pixels = x.dim(1) * x.dim(2);
  require_dims(f, {n, 2 * c}, "film parameters");
  BasicTensor<T> y(x.dims());
  for (int i = 0; i < n; ++i) {
    ConstArrayMap<T> scale(f.data() + static_cast<std::size_t>(i) * 2 * c, c);
    ConstArrayMap<T> shift(f.data() + static_cast<std::size_t>(i) * 2 * c + c, c);
    for (int p = 0; p < pixels; ++p) {
      const std::size_t off = (static_cast<std::size_t>(i) * pixels + p) * c;
      ArrayMap<T>(y.data() + off, c) = ConstArrayMap<T>(x.data() + off, c) * scale + shift;
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> film_backward(const BasicTensor<T>& x, const BasicTensor<T>& f,
                             const BasicTensor<T>& dy, BasicTensor<T>& dfilm) {
  const int n = x.dim(0), c = x.dim(3), pixels = x.dim(1) * x.dim(2);
  require_dims(dy, x.dims(), "film upstream gradient");
  dfilm = BasicTensor<T>(f.dims());
  BasicTensor<T> dx(x.dims());
  for (int i = 0; i < n; ++i) {
    ConstArrayMap<T> scale(f.data() + static_cast<std::size_t>(i) * 2 * c, c);
    ArrayMap<T> dscale(dfilm.data() + static_cast<std::size_t>(i) * 2 * c, c);
    ArrayMap<T> dshift(dfilm.data() + static_cast<std::size_t>(i) * 2 * c + c, c);
    for (int p = 0; p < pixels; ++p) {
      const std::size_t off = (static_cast<std::size_t>(i) * pixels + p) * c;
      ConstArrayMap<T> g(dy.data() + off, c);
      dscale += g * ConstArrayMap<T>(x.data() + off, c);
      dshift += g;
      ArrayMap<T>(dx.data() + off, c) = g * scale;
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("upsample input must be NHWC");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  BasicTensor<T> y({n, 2 * h, 2 * w, c});
  for (int i = 0; i < n; ++i)
    for (int yy = 0; yy < 2 * h; ++yy)
      for (int xx = 0; xx < 2 * w; ++xx) {
        const T* src = x.data() + ((static_cast<std::size_t>(i) * h + yy / 2) * w + xx / 2) * c;
        std::copy(src, src + c,
                  y.data() + ((static_cast<std::size_t>(i) * 2 * h + yy) * 2 * w + xx) * c);
      }
  return y;
}

template <typename T>
BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>& dy) {
  const int n = dy.dim(0), h = dy.dim(1) / 2, w = dy.dim(2) / 2, c = dy.dim(3);
  BasicTensor<T> dx({n, h, w, c});
  for (int i = 0; i < n; ++i)
    for (int yy = 0; yy < 2 * h; ++yy)
      for (int xx = 0; xx < 2 * w; ++xx) {
        const T* src = dy.data() + ((static_cast<std::size_t>(i) * 2 * h + yy) * 2 * w + xx) * c;
        T* dst = dx.data() + ((static_cast<std::size_t>(i) * h + yy / 2) * w + xx / 2) * c;
        for (int k = 0; k < c; ++k) dst[k] += src[k];
      }
  return dx;
}

template <typename T>
BasicTensor<T> concat_columns(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw ShapeError("concat: incompatible " + shape_string(a.dims()) + " and " +
                     shape_string(b.dims()));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  BasicTensor<T> y({n, ca + cb});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < ca; ++c) y[r * (ca + cb) + c] = a[r * ca + c];
    for (int c = 0; c < cb; ++c) y[r * (ca + cb) + ca + c] = b[r * cb + c];
  }
  return y;
}

template <typename T>
void split_columns(const BasicTensor<T>& ab, int a_cols, BasicTensor<T>& a, BasicTensor<T>& b) {
  const int n = ab.dim(0), total = ab.dim(1), b_cols = total - a_cols;
  a = BasicTensor<T>({n, a_cols});
  b = BasicTensor<T>({n, b_cols});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < a_cols; ++c) a[r * a_cols + c] = ab[r * total + c];
    for (int c = 0; c < b_cols; ++c) b[r * b_cols + c] = ab[r * total + a_cols + c];
  }
}

template <typename T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x) {
  if (!acc.same_shape(x))
    throw ShapeError("add: " + shape_string(acc.dims()) + " vs " + shape_string(x.dims()));
  const auto n = static_cast<Eigen::Index>(x.size());
  ArrayMap<T>(acc.data(), n) += ConstArrayMap<T>(x.data(), n);
}

template <typename T>
BasicTensor<T> timestep_embedding(std::span<const int> timesteps, int horizon, int dim) {
  const int n = static_cast<int>(timesteps.size());
  const int half = dim / 2;
  BasicTensor<T> e({n, dim});
  for (int r = 0; r < n; ++r) {
    const double t = 1000.0 * timesteps[r] / horizon;
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      e[r * dim + i] = static_cast<T>(std::sin(t * freq));
      e[r * dim + half + i] = static_cast<T>(std::cos(t * freq));
    }
  }
  return e;
}

template <typename T>
void kaiming_uniform(BasicTensor<T>& w, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
}

#define LATENTCE_INSTANTIATE(T)                                                              \
  template struct Conv2d<T>;                                                                 \
  template struct UpsampleConv2d<T>;                                                         \
  template struct Linear<T>;                                                                 \
  template BasicTensor<T> silu(const BasicTensor<T>&);                                       \
  template BasicTensor<T> silu_backward(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> film(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> film_backward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                        const BasicTensor<T>&, BasicTensor<T>&);             \
  template BasicTensor<T> upsample_nearest2x(const BasicTensor<T>&);                         \
  template BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>&);                \
  template BasicTensor<T> concat_columns(const BasicTensor<T>&, const BasicTensor<T>&);      \
  template void split_columns(const BasicTensor<T>&, int, BasicTensor<T>&, BasicTensor<T>&); \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> timestep_embedding(std::span<const int>, int, int);                \
  template void kaiming_uniform(BasicTensor<T>&, int, std::mt19937_64&);

LATENTCE_INSTANTIATE(float)
LATENTCE_INSTANTIATE(double)

#undef LATENTCE_INSTANTIATE

}  // namespace latentce::nn
