#include "gundet/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gundet::kernels {

namespace {

std::atomic<Backend> g_backend{default_backend()};

// Per-element routines shared by both backends. Keeping the summation order
// identical is what makes serial and OpenMP results bit-exact.

inline double gemm_cell(bool trans_a, bool trans_b, int m, int n, int k,
                        const double* a, const double* b, int i, int j) {
  double acc = 0.0;
  for (int p = 0; p < k; ++p) {
    const double av = trans_a ? a[static_cast<size_t>(p) * m + i]
                              : a[static_cast<size_t>(i) * k + p];
    const double bv = trans_b ? b[static_cast<size_t>(j) * k + p]
                              : b[static_cast<size_t>(p) * n + j];
    acc += av * bv;
  }
  return acc;
}

inline double conv_cell(const Conv2dShape& s, const double* in, const double* w,
                        const double* bias, int f, int oy, int ox) {
  double acc = bias ? bias[f] : 0.0;
  const int base_y = oy * s.stride - s.pad;
  const int base_x = ox * s.stride - s.pad;
  for (int c = 0; c < s.in_channels; ++c) {
    const double* in_c = in + static_cast<size_t>(c) * s.height * s.width;
    const double* w_fc =
        w + ((static_cast<size_t>(f) * s.in_channels + c) * s.kernel) * s.kernel;
    for (int ky = 0; ky < s.kernel; ++ky) {
      const int y = base_y + ky;
      if (y < 0 || y >= s.height) continue;
      for (int kx = 0; kx < s.kernel; ++kx) {
        const int x = base_x + kx;
        if (x < 0 || x >= s.width) continue;
        acc += in_c[static_cast<size_t>(y) * s.width + x] *
               w_fc[static_cast<size_t>(ky) * s.kernel + kx];
      }
    }
  }
  return acc;
}

inline double conv_grad_in_cell(const Conv2dShape& s, const double* grad_out,
                                const double* w, int c, int y, int x) {
  const int oh = s.out_height();
  const int ow = s.out_width();
  double acc = 0.0;
  for (int f = 0; f < s.out_channels; ++f) {
    const double* go_f = grad_out + static_cast<size_t>(f) * oh * ow;
    const double* w_fc =
        w + ((static_cast<size_t>(f) * s.in_channels + c) * s.kernel) * s.kernel;
    for (int ky = 0; ky < s.kernel; ++ky) {
      const int num_y = y + s.pad - ky;
      if (num_y < 0 || num_y % s.stride != 0) continue;
      const int oy = num_y / s.stride;
      if (oy >= oh) continue;
      for (int kx = 0; kx < s.kernel; ++kx) {
        const int num_x = x + s.pad - kx;
        if (num_x < 0 || num_x % s.stride != 0) continue;
        const int ox = num_x / s.stride;
        if (ox >= ow) continue;
        acc += go_f[static_cast<size_t>(oy) * ow + ox] *
               w_fc[static_cast<size_t>(ky) * s.kernel + kx];
      }
    }
  }
  return acc;
}

inline double conv_grad_w_cell(const Conv2dShape& s, const double* in,
                               const double* grad_out, int f, int c, int ky,
                               int kx) {
  const int oh = s.out_height();
  const int ow = s.out_width();
  const double* go_f = grad_out + static_cast<size_t>(f) * oh * ow;
  const double* in_c = in + static_cast<size_t>(c) * s.height * s.width;
  double acc = 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    const int y = oy * s.stride - s.pad + ky;
    if (y < 0 || y >= s.height) continue;
    for (int ox = 0; ox < ow; ++ox) {
      const int x = ox * s.stride - s.pad + kx;
      if (x < 0 || x >= s.width) continue;
      acc += go_f[static_cast<size_t>(oy) * ow + ox] *
             in_c[static_cast<size_t>(y) * s.width + x];
    }
  }
  return acc;
}

inline void maxpool_cell(int height, int width, const double* in_c, int oy,
                         int ox, double* out_v, uint8_t* arg_v) {
  const int y0 = oy * 2;
  const int x0 = ox * 2;
  double best = in_c[static_cast<size_t>(y0) * width + x0];
  uint8_t arg = 0;
  for (uint8_t slot = 1; slot < 4; ++slot) {
    const int y = y0 + slot / 2;
    const int x = x0 + slot % 2;
    if (y >= height || x >= width) continue;
    const double v = in_c[static_cast<size_t>(y) * width + x];
    if (v > best) {
      best = v;
      arg = slot;
    }
  }
  *out_v = best;
  *arg_v = arg;
}

}  // namespace

Backend default_backend() {
#ifdef _OPENMP
  return Backend::openmp;
#else
  return Backend::serial;
#endif
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

// ---------------------------------------------------------------- serial

namespace serial {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, double beta) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double* out = &c[static_cast<size_t>(i) * n + j];
      *out = (beta == 0.0 ? 0.0 : beta * *out) +
             gemm_cell(trans_a, trans_b, m, n, k, a, b, i, j);
    }
  }
}

void conv2d_forward(const Conv2dShape& s, const double* in, const double* w,
                    const double* bias, double* out) {
  const int oh = s.out_height();
  const int ow = s.out_width();
  for (int f = 0; f < s.out_channels; ++f)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        out[(static_cast<size_t>(f) * oh + oy) * ow + ox] =
            conv_cell(s, in, w, bias, f, oy, ox);
}

void conv2d_backward_input(const Conv2dShape& s, const double* grad_out,
                           const double* w, double* grad_in) {
  for (int c = 0; c < s.in_channels; ++c)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        grad_in[(static_cast<size_t>(c) * s.height + y) * s.width + x] =
            conv_grad_in_cell(s, grad_out, w, c, y, x);
}

void conv2d_backward_params(const Conv2dShape& s, const double* in,
                            const double* grad_out, double* grad_w,
                            double* grad_b) {
  const int oh = s.out_height();
  const int ow = s.out_width();
  for (int f = 0; f < s.out_channels; ++f) {
    for (int c = 0; c < s.in_channels; ++c)
      for (int ky = 0; ky < s.kernel; ++ky)
        for (int kx = 0; kx < s.kernel; ++kx)
          grad_w[((static_cast<size_t>(f) * s.in_channels + c) * s.kernel + ky) *
                     s.kernel +
                 kx] = conv_grad_w_cell(s, in, grad_out, f, c, ky, kx);
    double acc = 0.0;
    const double* go_f = grad_out + static_cast<size_t>(f) * oh * ow;
    for (int i = 0; i < oh * ow; ++i) acc += go_f[i];
    grad_b[f] = acc;
  }
}

void maxpool2_forward(int channels, int height, int width, const double* in,
                      double* out, uint8_t* argmax) {
  const int oh = height / 2;
  const int ow = width / 2;
  for (int c = 0; c < channels; ++c) {
    const double* in_c = in + static_cast<size_t>(c) * height * width;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const size_t o = (static_cast<size_t>(c) * oh + oy) * ow + ox;
        maxpool_cell(height, width, in_c, oy, ox, &out[o], &argmax[o]);
      }
  }
}

void maxpool2_backward(int channels, int height, int width,
                       const double* grad_out, const uint8_t* argmax,
                       double* grad_in) {
  const int oh = height / 2;
  const int ow = width / 2;
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const int oy = y / 2;
        const int ox = x / 2;
        const uint8_t slot = static_cast<uint8_t>((y % 2) * 2 + (x % 2));
        double g = 0.0;
        if (oy < oh && ox < ow) {
          const size_t o = (static_cast<size_t>(c) * oh + oy) * ow + ox;
          if (argmax[o] == slot) g = grad_out[o];
        }
        grad_in[(static_cast<size_t>(c) * height + y) * width + x] = g;
      }
}

}  // namespace serial

// ---------------------------------------------------------------- openmp

namespace omp {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, double beta) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double* out = &c[static_cast<size_t>(i) * n + j];
      *out = (beta == 0.0 ? 0.0 : beta * *out) +
             gemm_cell(trans_a, trans_b, m, n, k, a, b, i, j);
    }
  }
}

void conv2d_forward(const Conv2dShape& s, const double* in, const double* w,
                    const double* bias, double* out) {
  const int oh = s.out_height();
  const int ow = s.out_width();
#pragma omp parallel for schedule(static)
  for (int f = 0; f < s.out_channels; ++f)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        out[(static_cast<size_t>(f) * oh + oy) * ow + ox] =
            conv_cell(s, in, w, bias, f, oy, ox);
}

void conv2d_backward_input(const Conv2dShape& s, const double* grad_out,
                           const double* w, double* grad_in) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < s.in_channels; ++c)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        grad_in[(static_cast<size_t>(c) * s.height + y) * s.width + x] =
            conv_grad_in_cell(s, grad_out, w, c, y, x);
}

void conv2d_backward_params(const Conv2dShape& s, const double* in,
                            const double* grad_out, double* grad_w,
                            double* grad_b) {
  const int oh = s.out_height();
  const int ow = s.out_width();
#pragma omp parallel for schedule(static)
  for (int f = 0; f < s.out_channels; ++f) {
    for (int c = 0; c < s.in_channels; ++c)
      for (int ky = 0; ky < s.kernel; ++ky)
        for (int kx = 0; kx < s.kernel; ++kx)
          grad_w[((static_cast<size_t>(f) * s.in_channels + c) * s.kernel + ky) *
                     s.kernel +
                 kx] = conv_grad_w_cell(s, in, grad_out, f, c, ky, kx);
    double acc = 0.0;
    const double* go_f = grad_out + static_cast<size_t>(f) * oh * ow;
    for (int i = 0; i < oh * ow; ++i) acc += go_f[i];
    grad_b[f] = acc;
  }
}

void maxpool2_forward(int channels, int height, int width, const double* in,
                      double* out, uint8_t* argmax) {
  const int oh = height / 2;
  const int ow = width / 2;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* in_c = in + static_cast<size_t>(c) * height * width;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const size_t o = (static_cast<size_t>(c) * oh + oy) * ow + ox;
        maxpool_cell(height, width, in_c, oy, ox, &out[o], &argmax[o]);
      }
  }
}

void maxpool2_backward(int channels, int height, int width,
                       const double* grad_out, const uint8_t* argmax,
                       double* grad_in) {
  const int oh = height / 2;
  const int ow = width / 2;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const int oy = y / 2;
        const int ox = x / 2;
        const uint8_t slot = static_cast<uint8_t>((y % 2) * 2 + (x % 2));
        double g = 0.0;
        if (oy < oh && ox < ow) {
          const size_t o = (static_cast<size_t>(c) * oh + oy) * ow + ox;
          if (argmax[o] == slot) g = grad_out[o];
        }
        grad_in[(static_cast<size_t>(c) * height + y) * width + x] = g;
      }
}

}  // namespace omp

// ---------------------------------------------------------------- dispatch

#define GUNDET_DISPATCH(fn, ...)              \
  do {                                        \
    if (backend() == Backend::openmp)         \
      omp::fn(__VA_ARGS__);                   \
    else                                      \
      serial::fn(__VA_ARGS__);                \
  } while (0)

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, double beta) {
  GUNDET_DISPATCH(gemm, trans_a, trans_b, m, n, k, a, b, c, beta);
}
void conv2d_forward(const Conv2dShape& s, const double* in, const double* w,
                    const double* bias, double* out) {
  GUNDET_DISPATCH(conv2d_forward, s, in, w, bias, out);
}
void conv2d_backward_input(const Conv2dShape& s, const double* grad_out,
                           const double* w, double* grad_in) {
  GUNDET_DISPATCH(conv2d_backward_input, s, grad_out, w, grad_in);
}
void conv2d_backward_params(const Conv2dShape& s, const double* in,
                            const double* grad_out, double* grad_w,
                            double* grad_b) {
  GUNDET_DISPATCH(conv2d_backward_params, s, in, grad_out, grad_w, grad_b);
}
void maxpool2_forward(int channels, int height, int width, const double* in,
                      double* out, uint8_t* argmax) {
  GUNDET_DISPATCH(maxpool2_forward, channels, height, width, in, out, argmax);
}
void maxpool2_backward(int channels, int height, int width,
                       const double* grad_out, const uint8_t* argmax,
                       double* grad_in) {
  GUNDET_DISPATCH(maxpool2_backward, channels, height, width, grad_out, argmax,
                  grad_in);
}

#undef GUNDET_DISPATCH

}  // namespace gundet::kernels
