#pragma once

// Conv engine shared by inference and training. Activations are HWC. Each
// 3x3 convolution is an im2col copy followed by one matrix product through the
// SIMD kernel table; the weight layout [ky][kx][cin][cout] is already the
// (9 cin) x cout right-hand side.

#include <algorithm>
#include <vector>

#include "dr2s/core/error.hpp"
#include "dr2s/regressor/net.hpp"
#include "dr2s/simd/kernels.hpp"

namespace dr2s::regressor::detail {

template <typename T>
class Engine {
 public:
  explicit Engine(const RegressorNet& net) : net_(net), k_(simd::active_kernels().get<T>()) {
    sync();
  }

  /// Re-read parameters from the net (after an optimizer step).
  void sync() {
    const auto& p = net_.params();
    w_.assign(p.begin(), p.end());
  }

  /// Copies `rect` of `img` into HWC, centred at 0.5.
  static void load_input(const ImageF& img, const Rect& rect, std::vector<T>& out) {
    const int c = img.channels();
    out.resize(static_cast<std::size_t>(rect.w) * rect.h * c);
    for (int y = 0; y < rect.h; ++y) {
      for (int x = 0; x < rect.w; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          out[(static_cast<std::size_t>(y) * rect.w + x) * c + ch] =
              static_cast<T>(img.at(ch, rect.y + y, rect.x + x) - 0.5);
        }
      }
    }
  }

  /// Returns the logit. `input` must stay alive until backward().
  T forward(const T* input, int h, int w) {
    if (h < kMinInput || w < kMinInput) throw SizeError("regressor input must be at least 32x32");
    input_ = input;
    dims_[0] = {h, w};
    const T* in = input;
    for (int l = 0; l < kBlocks; ++l) {
      const int cin = net_.block_in(l);
      const int cout = net_.block_out(l);
      const int s = kStrides[l];
      const int ih = dims_[l][0];
      const int iw = dims_[l][1];
      const int oh = conv_out_size(ih, s);
      const int ow = conv_out_size(iw, s);
      dims_[l + 1] = {oh, ow};
      auto& out = act_[l];
      out.resize(static_cast<std::size_t>(oh) * ow * cout);
      const T* wt = w_.data() + net_.weight_offset(l);
      const T* bias = w_.data() + net_.bias_offset(l);
      const std::size_t np = static_cast<std::size_t>(oh) * ow;
      const std::size_t kk = 9 * static_cast<std::size_t>(cin);
      im2col(in, ih, iw, cin, s, oh, ow, cols_[l]);
      for (std::size_t p = 0; p < np; ++p) std::copy(bias, bias + cout, out.data() + p * cout);
      k_.gemm_acc(cols_[l].data(), wt, out.data(), np, kk, static_cast<std::size_t>(cout));
      for (T& v : out) v = std::max(v, T(0));
      in = out.data();
    }
    const int c = net_.feature_channels();
    const std::size_t n = static_cast<std::size_t>(dims_[kBlocks][0]) * dims_[kBlocks][1];
    gap_.assign(c, T(0));
    const T* psi = act_[kBlocks - 1].data();
    for (std::size_t p = 0; p < n; ++p) {
      for (int ch = 0; ch < c; ++ch) gap_[ch] += psi[p * c + ch];
    }
    for (T& g : gap_) g /= static_cast<T>(n);
    const T* head = w_.data() + net_.head_offset();
    return k_.dot(head, gap_.data(), c) + w_[net_.head_bias_offset()];
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logit) for the
  /// most recent forward().
  void backward(T dlogit, std::vector<T>& grad) {
    const int c = net_.feature_channels();
    const std::size_t hw = static_cast<std::size_t>(dims_[kBlocks][0]) * dims_[kBlocks][1];
    T* g_head = grad.data() + net_.head_offset();
    const T* head = w_.data() + net_.head_offset();
    k_.axpy(dlogit, gap_.data(), g_head, c);
    grad[net_.head_bias_offset()] += dlogit;

    auto& d_out = dact_[kBlocks - 1];
    d_out.resize(hw * c);
    const T scale = dlogit / static_cast<T>(hw);
    for (std::size_t p = 0; p < hw; ++p) {
      for (int ch = 0; ch < c; ++ch) d_out[p * c + ch] = scale * head[ch];
    }
    for (int l = kBlocks - 1; l >= 0; --l) {
      const int cin = net_.block_in(l);
      const int cout = net_.block_out(l);
      const int s = kStrides[l];
      const int ih = dims_[l][0];
      const int iw = dims_[l][1];
      const int oh = dims_[l + 1][0];
      const int ow = dims_[l + 1][1];
      const T* out = act_[l].data();
      T* dy = dact_[l].data();
      const std::size_t np = static_cast<std::size_t>(oh) * ow;
      const std::size_t kk = 9 * static_cast<std::size_t>(cin);
      const std::size_t co = static_cast<std::size_t>(cout);
      for (std::size_t i = 0; i < np * co; ++i) {
        if (!(out[i] > T(0))) dy[i] = T(0);
      }
      T* gb = grad.data() + net_.bias_offset(l);
      for (std::size_t p = 0; p < np; ++p) k_.axpy(T(1), dy + p * co, gb, co);
      // dW += cols^T dY
      transpose(cols_[l].data(), np, kk, scratch_);
      k_.gemm_acc(scratch_.data(), dy, grad.data() + net_.weight_offset(l), kk, np, co);
      if (l > 0) {
        // d cols = dY W^T, scattered back onto the input grid.
        transpose(w_.data() + net_.weight_offset(l), kk, co, wt_);
        dcols_.assign(np * kk, T(0));
        k_.gemm_acc(dy, wt_.data(), dcols_.data(), np, co, kk);
        auto& din = dact_[l - 1];
        din.assign(static_cast<std::size_t>(ih) * iw * cin, T(0));
        col2im(dcols_, ih, iw, cin, s, oh, ow, din.data());
      }
    }
  }

  int psi_height() const { return dims_[kBlocks][0]; }
  int psi_width() const { return dims_[kBlocks][1]; }
  const std::vector<T>& psi() const { return act_[kBlocks - 1]; }

 private:
  const RegressorNet& net_;
  const simd::Kernels<T>& k_;
  std::vector<T> w_;
  const T* input_ = nullptr;
  std::array<std::array<int, 2>, kBlocks + 1> dims_{};
  std::array<std::vector<T>, kBlocks> act_;
  std::array<std::vector<T>, kBlocks> dact_;
  std::array<std::vector<T>, kBlocks> cols_;
  std::vector<T> scratch_;
  std::vector<T> wt_;
  std::vector<T> dcols_;
  std::vector<T> gap_;

  // Row p of `cols` holds the 3x3 x cin receptive field of output pixel p,
  // zero where the window leaves the input.
  static void im2col(const T* in, int ih, int iw, int cin, int s, int oh, int ow, std::vector<T>& cols) {
    const std::size_t kk = 9 * static_cast<std::size_t>(cin);
    cols.assign(static_cast<std::size_t>(oh) * ow * kk, T(0));
    T* row = cols.data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, row += kk) {
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * s + ky - 1;
          if (iy < 0 || iy >= ih) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * s + kx - 1;
            if (ix < 0 || ix >= iw) continue;
            const T* src = in + (static_cast<std::size_t>(iy) * iw + ix) * cin;
            std::copy(src, src + cin, row + (ky * 3 + kx) * cin);
          }
        }
      }
    }
  }

  static void col2im(const std::vector<T>& cols, int ih, int iw, int cin, int s, int oh, int ow, T* d_in) {
    const std::size_t kk = 9 * static_cast<std::size_t>(cin);
    const T* row = cols.data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, row += kk) {
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * s + ky - 1;
          if (iy < 0 || iy >= ih) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * s + kx - 1;
            if (ix < 0 || ix >= iw) continue;
            T* dst = d_in + (static_cast<std::size_t>(iy) * iw + ix) * cin;
            const T* src = row + (ky * 3 + kx) * cin;
            for (int c = 0; c < cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }

  static void transpose(const T* a, std::size_t rows, std::size_t cols, std::vector<T>& out) {
    out.resize(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
    }
  }
};

}  // namespace dr2s::regressor::detail
