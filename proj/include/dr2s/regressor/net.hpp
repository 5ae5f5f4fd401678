#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dr2s/core/image.hpp"

namespace dr2s::regressor {

// Four conv blocks (3x3, pad 1, bias, ReLU) of widths 16, 32, 64, C with
// strides 2, 2, 2, 1, then global average pooling and a linear + sigmoid head.
//
// Parameter store layout, all double:
//   for each block l: W_l[ky][kx][cin][cout], then bias_l[cout]
//   head: A[C], then b
inline constexpr int kBlocks = 4;
inline constexpr std::array<int, kBlocks> kStrides{2, 2, 2, 1};
inline constexpr int kDownsample = 8;
inline constexpr int kMinInput = 32;

enum class Precision { Float, Double };

class RegressorNet {
 public:
  RegressorNet() : RegressorNet(1, 32) {}
  RegressorNet(int in_channels, int feature_channels);

  /// He-normal conv weights (std sqrt(2 / (9 cin))), head weights with std
  /// sqrt(1 / C), zero biases.
  static RegressorNet he_init(int in_channels, int feature_channels, std::uint64_t seed);

  int in_channels() const { return in_channels_; }
  int feature_channels() const { return widths_[kBlocks - 1]; }
  int block_in(int l) const { return l == 0 ? in_channels_ : widths_[l - 1]; }
  int block_out(int l) const { return widths_[l]; }

  std::size_t weight_offset(int l) const { return offsets_[l]; }
  std::size_t bias_offset(int l) const { return offsets_[l] + 9 * static_cast<std::size_t>(block_in(l)) * block_out(l); }
  std::size_t head_offset() const { return offsets_[kBlocks]; }
  std::size_t head_bias_offset() const { return head_offset() + feature_channels(); }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  /// Human-readable parameter name, e.g. "conv2.w[1][0][3][7]" or "head.b".
  std::string param_name(std::size_t index) const;

 private:
  int in_channels_;
  std::array<int, kBlocks> widths_;
  std::array<std::size_t, kBlocks + 1> offsets_{};
  std::vector<double> params_;
};

/// Output spatial size of one 3x3, pad-1 convolution.
inline int conv_out_size(int n, int stride) { return (n - 1) / stride + 1; }

/// Feature tensor, HWC.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  double at(int y, int x, int c) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const double* pixel(int y, int x) const {
    return values.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

struct ForwardResult {
  double score = 0.5;
  double logit = 0.0;
  FeatureMap psi;
};

/// Input is centred to x - 0.5 before the first block. Throws SizeError for
/// inputs under 32 x 32 or a channel count that does not match the net.
ForwardResult forward(const RegressorNet& net, const ImageF& patch,
                      Precision precision = Precision::Double);

/// Sigmoid kept strictly inside (0, 1).
double sigmoid(double z);

/// Head applied to one feature vector: sigmoid(A . psi + b).
double head_score(const RegressorNet& net, const double* psi);

double huber(double y, double y_hat, double delta);
/// d huber / d y_hat.
double huber_grad(double y, double y_hat, double delta);

/// Gradient of huber(y, forward(net, patch).score, delta) over every parameter,
/// in parameter-store order. Double precision.
std::vector<double> backward(const RegressorNet& net, const ImageF& patch, double y, double delta);

}  // namespace dr2s::regressor
