#include "dr2s/regressor/train.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "dr2s/core/error.hpp"
#include "dr2s/core/rng.hpp"
#include "engine.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace dr2s::regressor {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
  if (decay_every < 1) fail("decay_every must be positive");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (epochs < 1) fail("epochs must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(huber_delta > 0.0)) fail("huber_delta must be positive");
  if (patch_size < kMinInput) fail("patch_size must be at least 32");
  if (patches_per_image < 1) fail("patches_per_image must be positive");
  if (!(aug_noise_max >= 0.0)) fail("aug_noise_max must be >= 0");
  if (!(aug_exposure_ev >= 0.0)) fail("aug_exposure_ev must be >= 0");
  if (feature_channels < 1) fail("feature_channels must be positive");
}

double TrainConfig::lr_at(int epoch) const {
  return lr * std::pow(lr_decay, epoch / decay_every);
}

double TrainConfig::lr_at(int epoch, long step) const {
  const double ramp = warmup_steps > 0 ? std::min(1.0, static_cast<double>(step + 1) / warmup_steps) : 1.0;
  return lr_at(epoch) * ramp;
}

json to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"lr_decay", c.lr_decay},
              {"decay_every", c.decay_every},
              {"warmup_steps", c.warmup_steps},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"huber_delta", c.huber_delta},
              {"patch_size", c.patch_size},
              {"patches_per_image", c.patches_per_image},
              {"aug_noise_max", c.aug_noise_max},
              {"aug_exposure_ev", c.aug_exposure_ev},
              {"feature_channels", c.feature_channels},
              {"precision", c.precision == Precision::Float ? "float" : "double"},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  static const std::set<std::string> keys{
      "lr", "lr_decay", "decay_every", "warmup_steps", "epochs", "batch_size", "huber_delta", "patch_size",
      "patches_per_image", "aug_noise_max", "aug_exposure_ev", "feature_channels", "precision", "seed"};
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("train config: unknown key '" + k + "'");
  }
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.decay_every = j.value("decay_every", c.decay_every);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.huber_delta = j.value("huber_delta", c.huber_delta);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.patches_per_image = j.value("patches_per_image", c.patches_per_image);
    c.aug_noise_max = j.value("aug_noise_max", c.aug_noise_max);
    c.aug_exposure_ev = j.value("aug_exposure_ev", c.aug_exposure_ev);
    c.feature_channels = j.value("feature_channels", c.feature_channels);
    c.seed = j.value("seed", c.seed);
    const std::string prec = j.value("precision", std::string("float"));
    if (prec == "float") {
      c.precision = Precision::Float;
    } else if (prec == "double") {
      c.precision = Precision::Double;
    } else {
      throw ConfigError("train config: precision must be 'float' or 'double'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
  }
}

std::uint64_t init_seed(const TrainConfig& cfg) { return derive_seed(cfg.seed, "regressor.init"); }

namespace {

// Flushes denormals to zero for the calling thread while alive. A stalled
// net leaves gradients in the denormal range, which is several times slower.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

struct Sample {
  std::size_t image;
  Rect rect;
};

template <typename T>
TrainResult run(std::span<const devsim::LabeledCapture> data, std::span<const Rect> regions,
                const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const int channels = data.front().image.channels();
  TrainResult result{RegressorNet::he_init(channels, cfg.feature_channels, init_seed(cfg)), {}};
  RegressorNet& net = result.net;
  // Start the head at the label prior so the first updates carry label
  // differences rather than one shared offset, which Adam would otherwise
  // apply to every trunk weight at once and kill the last ReLU block.
  double label_mean = 0.0;
  for (const auto& d : data) label_mean += d.label;
  label_mean = std::clamp(label_mean / static_cast<double>(data.size()), 0.01, 0.99);
  net.params()[net.head_bias_offset()] = std::log(label_mean / (1.0 - label_mean));
  const FlushDenormals ftz;
  detail::Engine<T> eng(net);
  Adam adam(net.param_count());

  Rng patch_rng(derive_seed(cfg.seed, "regressor.patches"));
  Rng order_rng(derive_seed(cfg.seed, "regressor.order"));
  Rng aug_rng(derive_seed(cfg.seed, "regressor.augment"));

  std::vector<T> input;
  std::vector<T> grad_t(net.param_count());
  std::vector<double> grad(net.param_count());
  std::vector<Sample> samples;
  const int p = cfg.patch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    samples.clear();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Rect& region = regions.size() == 1 ? regions[0] : regions[i];
      for (const Rect& r : sample_patch_rects(region, p, cfg.patches_per_image, patch_rng)) {
        samples.push_back({i, r});
      }
    }
    for (std::size_t i = samples.size(); i > 1; --i) {
      std::swap(samples[i - 1], samples[order_rng.uniform_int(i)]);
    }

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad_t.begin(), grad_t.end(), T(0));
      for (std::size_t s = start; s < end; ++s) {
        const auto& cap = data[samples[s].image];
        detail::Engine<T>::load_input(cap.image, samples[s].rect, input);
        const double gain = std::exp2(aug_rng.uniform(-cfg.aug_exposure_ev, cfg.aug_exposure_ev));
        const double sigma = aug_rng.uniform(0.0, cfg.aug_noise_max);
        for (T& v : input) {
          const double x = (static_cast<double>(v) + 0.5) * gain + sigma * aug_rng.normal();
          v = static_cast<T>(std::clamp(x, 0.0, 1.0) - 0.5);
        }
        const double z = static_cast<double>(eng.forward(input.data(), p, p));
        const double y_hat = sigmoid(z);
        const double loss = huber(cap.label, y_hat, cfg.huber_delta);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "training loss became non-finite at epoch " << epoch << ", sample " << s
              << " (image " << samples[s].image << ", logit " << z << ")";
          throw NumericError(msg.str());
        }
        loss_sum += loss;
        eng.backward(static_cast<T>(huber_grad(cap.label, y_hat, cfg.huber_delta) * y_hat * (1.0 - y_hat)),
                     grad_t);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = static_cast<double>(grad_t[k]) * inv;
      adam.step(net.params(), grad, cfg.lr_at(epoch, adam.steps()));
      for (double w : net.params()) {
        if (!std::isfinite(w)) {
          throw NumericError("training produced a non-finite parameter at epoch " + std::to_string(epoch));
        }
      }
      eng.sync();
    }
    const double mean_loss = loss_sum / static_cast<double>(samples.size());
    result.loss_trace.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return result;
}

}  // namespace

TrainResult train(std::span<const devsim::LabeledCapture> data, std::span<const Rect> regions,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw DataError("training set is empty");
  if (regions.size() != 1 && regions.size() != data.size()) {
    throw ConfigError("need one training region per image, or a single shared region");
  }
  const int channels = data.front().image.channels();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& img = data[i].image;
    if (img.channels() != channels) throw DataError("training images disagree on channel count");
    const Rect& r = regions.size() == 1 ? regions[0] : regions[i];
    if (!img.bounds().contains(r)) throw BoundsError("training region outside image " + std::to_string(i));
    if (r.w < cfg.patch_size || r.h < cfg.patch_size) {
      throw ConfigError("training region smaller than the patch size");
    }
    if (!std::isfinite(data[i].label)) throw DataError("non-finite training label");
  }
  return cfg.precision == Precision::Float ? run<float>(data, regions, cfg, on_epoch)
                                           : run<double>(data, regions, cfg, on_epoch);
}

}  // namespace dr2s::regressor
