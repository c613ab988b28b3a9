#pragma once

#include <cstdint>

namespace gundet::kernels {

enum class Backend { serial, openmp };

/// Process-wide backend selection. Both backends compute every output element
/// with the same inner summation order, so results are bit-identical; the
/// OpenMP variants only distribute independent output elements across threads.
void set_backend(Backend b);
Backend backend();
Backend default_backend();

struct Conv2dShape {
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

namespace serial {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, double beta);

void conv2d_forward(const Conv2dShape& s, const double* in, const double* w,
                    const double* bias, double* out);
void conv2d_backward_input(const Conv2dShape& s, const double* grad_out,
                           const double* w, double* grad_in);
void conv2d_backward_params(const Conv2dShape& s, const double* in,
                            const double* grad_out, double* grad_w,
                            double* grad_b);

void maxpool2_forward(int channels, int height, int width, const double* in,
                      double* out, uint8_t* argmax);
void maxpool2_backward(int channels, int height, int width,
                       const double* grad_out, const uint8_t* argmax,
                       double* grad_in);

}  // namespace serial

namespace omp {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, double beta);

void conv2d_forward(const Conv2dShape& s, const double* in, const double* w,
                    const double* bias, double* out);
void conv2d_backward_input(const Conv2dShape& s, const double* grad_out,
                           const double* w, double* grad_in);
void conv2d_backward_params(const Conv2dShape& s, const double* in,
                            const double* grad_out, double* grad_w,
                            double* grad_b);

void maxpool2_forward(int channels, int height, int width, const double* in,
                      double* out, uint8_t* argmax);
void maxpool2_backward(int channels, int height, int width,
                       const double* grad_out, const uint8_t* argmax,
                       double* grad_in);

}  // namespace omp

// Dispatched entry points used by the model code.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, double beta = 0.0);
void conv2d_forward(const Conv2dShape& s, const double* in, const double* w,
                    const double* bias, double* out);
void conv2d_backward_input(const Conv2dShape& s, const double* grad_out,
                           const double* w, double* grad_in);
void conv2d_backward_params(const Conv2dShape& s, const double* in,
                            const double* grad_out, double* grad_w,
                            double* grad_b);
void maxpool2_forward(int channels, int height, int width, const double* in,
                      double* out, uint8_t* argmax);
void maxpool2_backward(int channels, int height, int width,
                       const double* grad_out, const uint8_t* argmax,
                       double* grad_in);

}  // namespace gundet::kernels
