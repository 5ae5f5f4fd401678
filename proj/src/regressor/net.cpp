#include "dr2s/regressor/net.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "dr2s/core/error.hpp"
#include "dr2s/core/rng.hpp"
#include "engine.hpp"

namespace dr2s::regressor {

RegressorNet::RegressorNet(int in_channels, int feature_channels)
    : in_channels_(in_channels), widths_{16, 32, 64, feature_channels} {
  if (in_channels < 1) throw ConfigError("regressor needs at least one input channel");
  if (feature_channels < 1) throw ConfigError("regressor needs at least one feature channel");
  std::size_t off = 0;
  for (int l = 0; l < kBlocks; ++l) {
    offsets_[l] = off;
    off += (9 * static_cast<std::size_t>(block_in(l)) + 1) * block_out(l);
  }
  offsets_[kBlocks] = off;
  params_.assign(off + feature_channels + 1, 0.0);
}

RegressorNet RegressorNet::he_init(int in_channels, int feature_channels, std::uint64_t seed) {
  RegressorNet net(in_channels, feature_channels);
  Rng rng(seed);
  auto& p = net.params_;
  for (int l = 0; l < kBlocks; ++l) {
    const double sd = std::sqrt(2.0 / (9.0 * net.block_in(l)));
    for (std::size_t i = net.weight_offset(l); i < net.bias_offset(l); ++i) p[i] = rng.normal(0.0, sd);
  }
  const double sd = std::sqrt(1.0 / feature_channels);
  for (int c = 0; c < feature_channels; ++c) p[net.head_offset() + c] = rng.normal(0.0, sd);
  return net;
}

std::string RegressorNet::param_name(std::size_t index) const {
  char buf[128];
  if (index >= head_offset()) {
    if (index == head_bias_offset()) return "head.b";
    std::snprintf(buf, sizeof buf, "head.A[%zu]", index - head_offset());
    return buf;
  }
  int l = kBlocks - 1;
  while (index < offsets_[l]) --l;
  if (index >= bias_offset(l)) {
    std::snprintf(buf, sizeof buf, "conv%d.b[%zu]", l, index - bias_offset(l));
    return buf;
  }
  std::size_t r = index - offsets_[l];
  const std::size_t cout = r % block_out(l);
  r /= block_out(l);
  const std::size_t cin = r % block_in(l);
  r /= block_in(l);
  std::snprintf(buf, sizeof buf, "conv%d.w[%zu][%zu][%zu][%zu]", l, r / 3, r % 3, cin, cout);
  return buf;
}

double sigmoid(double z) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(s, lo, hi);
}

double head_score(const RegressorNet& net, const double* psi) {
  const auto& p = net.params();
  double z = p[net.head_bias_offset()];
  for (int c = 0; c < net.feature_channels(); ++c) z += p[net.head_offset() + c] * psi[c];
  return sigmoid(z);
}

namespace {

void check_input(const RegressorNet& net, const ImageF& patch) {
  if (patch.channels() != net.in_channels()) {
    throw SizeError("regressor expects " + std::to_string(net.in_channels()) + " channel input, got " +
                    std::to_string(patch.channels()));
  }
  if (patch.width() < kMinInput || patch.height() < kMinInput) {
    throw SizeError("regressor input must be at least 32x32");
  }
}

template <typename T>
ForwardResult run_forward(const RegressorNet& net, const ImageF& patch) {
  detail::Engine<T> eng(net);
  std::vector<T> in;
  detail::Engine<T>::load_input(patch, patch.bounds(), in);
  const double z = static_cast<double>(eng.forward(in.data(), patch.height(), patch.width()));
  ForwardResult r;
  r.logit = z;
  r.score = sigmoid(z);
  r.psi.height = eng.psi_height();
  r.psi.width = eng.psi_width();
  r.psi.channels = net.feature_channels();
  r.psi.values.assign(eng.psi().begin(), eng.psi().end());
  return r;
}

}  // namespace

ForwardResult forward(const RegressorNet& net, const ImageF& patch, Precision precision) {
  check_input(net, patch);
  return precision == Precision::Float ? run_forward<float>(net, patch) : run_forward<double>(net, patch);
}

double huber(double y, double y_hat, double delta) {
  const double r = std::abs(y - y_hat);
  return r <= delta ? 0.5 * r * r : delta * r - 0.5 * delta * delta;
}

double huber_grad(double y, double y_hat, double delta) {
  const double r = y_hat - y;
  if (std::abs(r) <= delta) return r;
  return r > 0 ? delta : -delta;
}

std::vector<double> backward(const RegressorNet& net, const ImageF& patch, double y, double delta) {
  check_input(net, patch);
  detail::Engine<double> eng(net);
  std::vector<double> in;
  detail::Engine<double>::load_input(patch, patch.bounds(), in);
  const double z = eng.forward(in.data(), patch.height(), patch.width());
  const double s = sigmoid(z);
  std::vector<double> grad(net.param_count(), 0.0);
  eng.backward(huber_grad(y, s, delta) * s * (1.0 - s), grad);
  return grad;
}

}  // namespace dr2s::regressor
