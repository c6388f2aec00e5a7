#include "fcprint/convae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fcprint/error.hpp"
#include "fcprint/rng.hpp"

namespace fcprint::convae {

std::string to_string(Activation a) {
  return a == Activation::tanh ? "tanh" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'", "activation");
}

void Architecture::validate() const {
  if (input_size < 1) throw ConfigError("input_size must be >= 1", "input_size");
  if (latent_dim < 0) throw ConfigError("latent_dim must be >= 0", "latent_dim");
  if (encoder.empty()) throw ConfigError("encoder needs at least one conv layer", "encoder");
  int size = input_size;
  for (const auto& spec : encoder) {
    if (spec.out_channels < 1) throw ConfigError("conv out_channels must be >= 1", "encoder");
    if (spec.kernel < 1 || spec.kernel % 2 == 0) throw ConfigError("conv kernel must be odd and >= 1", "encoder");
    if (spec.stride < 1) throw ConfigError("conv stride must be >= 1", "encoder");
    const int pad = (spec.kernel - 1) / 2;
    size = (size + 2 * pad - spec.kernel) / spec.stride + 1;
    if (size < 1) throw ConfigError("encoder shrinks the input below 1x1", "encoder");
  }
}

std::vector<LayerShape> layer_shapes(const Architecture& arch) {
  arch.validate();
  std::vector<LayerShape> layers;
  std::size_t offset = 0;
  auto place = [&](LayerShape& l, std::size_t weights, std::size_t biases) {
    l.weight_offset = offset;
    l.weight_count = weights;
    offset += weights;
    l.bias_offset = offset;
    l.bias_count = biases;
    offset += biases;
  };

  std::vector<int> sizes{arch.input_size};
  std::vector<int> channels{1};
  for (const auto& spec : arch.encoder) {
    LayerShape l{};
    l.kind = LayerKind::conv;
    l.in_channels = channels.back();
    l.in_height = l.in_width = sizes.back();
    l.kernel = spec.kernel;
    l.stride = spec.stride;
    l.pad = (spec.kernel - 1) / 2;
    l.out_channels = spec.out_channels;
    l.out_height = l.out_width = (sizes.back() + 2 * l.pad - l.kernel) / l.stride + 1;
    l.activated = true;
    place(l, std::size_t(l.out_channels) * l.in_channels * l.kernel * l.kernel, std::size_t(l.out_channels));
    layers.push_back(l);
    sizes.push_back(l.out_height);
    channels.push_back(l.out_channels);
  }

  const int feature = channels.back() * sizes.back() * sizes.back();
  if (arch.latent_dim > 0) {
    LayerShape enc{};
    enc.kind = LayerKind::dense;
    enc.in_channels = feature;
    enc.in_height = enc.in_width = 1;
    enc.out_channels = arch.latent_dim;
    enc.out_height = enc.out_width = 1;
    enc.activated = false;
    place(enc, std::size_t(feature) * arch.latent_dim, std::size_t(arch.latent_dim));
    layers.push_back(enc);

    LayerShape dec = enc;
    dec.in_channels = arch.latent_dim;
    dec.out_channels = feature;
    dec.activated = true;
    place(dec, std::size_t(feature) * arch.latent_dim, std::size_t(feature));
    layers.push_back(dec);
  }

  for (std::size_t j = arch.encoder.size(); j-- > 0;) {
    const LayerShape& mirror = layers[j];
    LayerShape l{};
    l.kind = LayerKind::conv_transpose;
    l.in_channels = mirror.out_channels;
    l.in_height = l.in_width = mirror.out_height;
    l.out_channels = mirror.in_channels;
    l.out_height = l.out_width = mirror.in_height;
    l.kernel = mirror.kernel;
    l.stride = mirror.stride;
    l.pad = mirror.pad;
    l.activated = j != 0;
    const int extra = l.out_height - ((l.in_height - 1) * l.stride - 2 * l.pad + l.kernel);
    if (extra < 0 || extra >= l.stride) {
      throw ConfigError("transposed convolution cannot restore size " + std::to_string(l.out_height), "encoder");
    }
    place(l, std::size_t(l.in_channels) * l.out_channels * l.kernel * l.kernel, std::size_t(l.out_channels));
    layers.push_back(l);
  }
  return layers;
}

AutoencoderParams zero_params(const Architecture& arch) {
  AutoencoderParams params;
  params.arch = arch;
  params.layers = layer_shapes(arch);
  const LayerShape& last = params.layers.back();
  params.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(last.bias_offset + last.bias_count));
  return params;
}

AutoencoderParams init_params(const Architecture& arch, double scale, std::uint64_t seed) {
  AutoencoderParams params = zero_params(arch);
  params.seed = seed;
  Rng rng(seed);
  for (const auto& l : params.layers) {
    double fan_in = 0.0;
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::conv_transpose:
        fan_in = double(l.in_channels) * l.kernel * l.kernel;
        break;
      case LayerKind::dense:
        fan_in = double(l.in_channels);
        break;
    }
    const double bound = scale / std::sqrt(fan_in);
    for (std::size_t k = 0; k < l.weight_count; ++k) {
      params.values(static_cast<Eigen::Index>(l.weight_offset + k)) = rng.uniform(-bound, bound);
    }
  }
  return params;
}

namespace {

void conv_forward(const LayerShape& l, const double* w, const double* b, const double* in, double* out) {
  const int k = l.kernel;
  for (int o = 0; o < l.out_channels; ++o) {
    for (int y = 0; y < l.out_height; ++y) {
      for (int x = 0; x < l.out_width; ++x) {
        double acc = b[o];
        for (int c = 0; c < l.in_channels; ++c) {
          const double* wk = w + (std::size_t(o) * l.in_channels + c) * k * k;
          const double* ic = in + std::size_t(c) * l.in_height * l.in_width;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y * l.stride + ky - l.pad;
            if (iy < 0 || iy >= l.in_height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x * l.stride + kx - l.pad;
              if (ix < 0 || ix >= l.in_width) continue;
              acc += wk[ky * k + kx] * ic[iy * l.in_width + ix];
            }
          }
        }
        out[(std::size_t(o) * l.out_height + y) * l.out_width + x] = acc;
      }
    }
  }
}

void conv_backward(const LayerShape& l, const double* w, const double* in, const double* dout, double* dw,
                   double* db, double* din) {
  const int k = l.kernel;
  for (int o = 0; o < l.out_channels; ++o) {
    for (int y = 0; y < l.out_height; ++y) {
      for (int x = 0; x < l.out_width; ++x) {
        const double g = dout[(std::size_t(o) * l.out_height + y) * l.out_width + x];
        db[o] += g;
        for (int c = 0; c < l.in_channels; ++c) {
          const std::size_t wbase = (std::size_t(o) * l.in_channels + c) * k * k;
          const std::size_t ibase = std::size_t(c) * l.in_height * l.in_width;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y * l.stride + ky - l.pad;
            if (iy < 0 || iy >= l.in_height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x * l.stride + kx - l.pad;
              if (ix < 0 || ix >= l.in_width) continue;
              const std::size_t ii = ibase + std::size_t(iy) * l.in_width + ix;
              dw[wbase + ky * k + kx] += g * in[ii];
              if (din) din[ii] += g * w[wbase + ky * k + kx];
            }
          }
        }
      }
    }
  }
}

void conv_transpose_forward(const LayerShape& l, const double* w, const double* b, const double* in, double* out) {
  const int k = l.kernel;
  const std::size_t plane = std::size_t(l.out_height) * l.out_width;
  for (int o = 0; o < l.out_channels; ++o) std::fill_n(out + o * plane, plane, b[o]);
  for (int c = 0; c < l.in_channels; ++c) {
    for (int y = 0; y < l.in_height; ++y) {
      for (int x = 0; x < l.in_width; ++x) {
        const double v = in[(std::size_t(c) * l.in_height + y) * l.in_width + x];
        for (int o = 0; o < l.out_channels; ++o) {
          const double* wk = w + (std::size_t(c) * l.out_channels + o) * k * k;
          double* oc = out + o * plane;
          for (int ky = 0; ky < k; ++ky) {
            const int oy = y * l.stride + ky - l.pad;
            if (oy < 0 || oy >= l.out_height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ox = x * l.stride + kx - l.pad;
              if (ox < 0 || ox >= l.out_width) continue;
              oc[oy * l.out_width + ox] += wk[ky * k + kx] * v;
            }
          }
        }
      }
    }
  }
}

void conv_transpose_backward(const LayerShape& l, const double* w, const double* in, const double* dout, double* dw,
                             double* db, double* din) {
  const int k = l.kernel;
  const std::size_t plane = std::size_t(l.out_height) * l.out_width;
  for (int o = 0; o < l.out_channels; ++o) {
    for (std::size_t q = 0; q < plane; ++q) db[o] += dout[o * plane + q];
  }
  for (int c = 0; c < l.in_channels; ++c) {
    for (int y = 0; y < l.in_height; ++y) {
      for (int x = 0; x < l.in_width; ++x) {
        const std::size_t ii = (std::size_t(c) * l.in_height + y) * l.in_width + x;
        const double v = in[ii];
        double acc = 0.0;
        for (int o = 0; o < l.out_channels; ++o) {
          const std::size_t wbase = (std::size_t(c) * l.out_channels + o) * k * k;
          const double* oc = dout + o * plane;
          for (int ky = 0; ky < k; ++ky) {
            const int oy = y * l.stride + ky - l.pad;
            if (oy < 0 || oy >= l.out_height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ox = x * l.stride + kx - l.pad;
              if (ox < 0 || ox >= l.out_width) continue;
              const double g = oc[oy * l.out_width + ox];
              dw[wbase + ky * k + kx] += g * v;
              acc += g * w[wbase + ky * k + kx];
            }
          }
        }
        if (din) din[ii] += acc;
      }
    }
  }
}

void dense_forward(const LayerShape& l, const double* w, const double* b, const double* in, double* out) {
  const std::size_t n_in = l.in_size();
  for (int o = 0; o < l.out_channels; ++o) {
    const double* row = w + std::size_t(o) * n_in;
    double acc = b[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void dense_backward(const LayerShape& l, const double* w, const double* in, const double* dout, double* dw, double* db,
                    double* din) {
  const std::size_t n_in = l.in_size();
  for (int o = 0; o < l.out_channels; ++o) {
    const double g = dout[o];
    db[o] += g;
    const std::size_t base = std::size_t(o) * n_in;
    for (std::size_t i = 0; i < n_in; ++i) {
      dw[base + i] += g * in[i];
      if (din) din[i] += g * w[base + i];
    }
  }
}

void check_input(const AutoencoderParams& params, const Eigen::MatrixXd& input) {
  const int p = params.arch.input_size;
  if (input.rows() != p || input.cols() != p) {
    throw DimensionError("autoencoder expects " + std::to_string(p) + "x" + std::to_string(p) + " input, got " +
                         std::to_string(input.rows()) + "x" + std::to_string(input.cols()));
  }
}

// Post-activation outputs of every layer; acts[0] is the row-major input.
std::vector<std::vector<double>> run_layers(const AutoencoderParams& params, const Eigen::MatrixXd& input) {
  check_input(params, input);
  const double* theta = params.values.data();
  std::vector<std::vector<double>> acts;
  acts.reserve(params.layers.size() + 1);
  const int p = params.arch.input_size;
  std::vector<double> x(std::size_t(p) * p);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) x[std::size_t(r) * p + c] = input(r, c);
  }
  acts.push_back(std::move(x));
  const bool use_tanh = params.arch.activation == Activation::tanh;
  for (const auto& l : params.layers) {
    std::vector<double> out(l.out_size());
    const double* w = theta + l.weight_offset;
    const double* b = theta + l.bias_offset;
    switch (l.kind) {
      case LayerKind::conv: conv_forward(l, w, b, acts.back().data(), out.data()); break;
      case LayerKind::dense: dense_forward(l, w, b, acts.back().data(), out.data()); break;
      case LayerKind::conv_transpose: conv_transpose_forward(l, w, b, acts.back().data(), out.data()); break;
    }
    if (l.activated && use_tanh) {
      for (double& v : out) v = std::tanh(v);
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

Eigen::MatrixXd to_matrix(const std::vector<double>& flat, int p) {
  Eigen::MatrixXd m(p, p);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) m(r, c) = flat[std::size_t(r) * p + c];
  }
  return m;
}

std::size_t latent_layer(const AutoencoderParams& params) {
  // Dense bottleneck when present, otherwise the last encoder conv.
  return params.arch.latent_dim > 0 ? params.arch.encoder.size() : params.arch.encoder.size() - 1;
}

}  // namespace

ForwardResult forward(const AutoencoderParams& params, const Eigen::MatrixXd& input) {
  const auto acts = run_layers(params, input);
  const auto& latent = acts[latent_layer(params) + 1];
  ForwardResult result;
  result.latent = Eigen::Map<const Eigen::VectorXd>(latent.data(), static_cast<Eigen::Index>(latent.size()));
  result.reconstruction = to_matrix(acts.back(), params.arch.input_size);
  return result;
}

namespace {

LossGrad accumulate(const AutoencoderParams& params, std::span<const Eigen::MatrixXd> batch,
                    std::vector<double>* sample_losses) {
  if (batch.empty()) throw ArgumentError("loss_and_grad needs a nonempty batch");
  const int p = params.arch.input_size;
  const double scale = 1.0 / (double(p) * p * double(batch.size()));
  const bool use_tanh = params.arch.activation == Activation::tanh;
  const double* theta = params.values.data();

  LossGrad out;
  out.grad = Eigen::VectorXd::Zero(params.values.size());
  double* grad = out.grad.data();

  for (const auto& sample : batch) {
    const auto acts = run_layers(params, sample);
    const auto& recon = acts.back();
    const auto& target = acts.front();
    std::vector<double> delta(recon.size());
    double sq = 0.0;
    for (std::size_t q = 0; q < recon.size(); ++q) {
      const double diff = recon[q] - target[q];
      sq += diff * diff;
      delta[q] = 2.0 * diff * scale;
    }
    out.loss += sq * scale;
    if (sample_losses) sample_losses->push_back(sq / (double(p) * p));
    for (std::size_t li = params.layers.size(); li-- > 0;) {
      const LayerShape& l = params.layers[li];
      if (l.activated && use_tanh) {
        const auto& a = acts[li + 1];
        for (std::size_t q = 0; q < delta.size(); ++q) delta[q] *= 1.0 - a[q] * a[q];
      }
      std::vector<double> din(li > 0 ? l.in_size() : 0, 0.0);
      double* din_ptr = li > 0 ? din.data() : nullptr;
      const double* w = theta + l.weight_offset;
      double* dw = grad + l.weight_offset;
      double* db = grad + l.bias_offset;
      switch (l.kind) {
        case LayerKind::conv: conv_backward(l, w, acts[li].data(), delta.data(), dw, db, din_ptr); break;
        case LayerKind::dense: dense_backward(l, w, acts[li].data(), delta.data(), dw, db, din_ptr); break;
        case LayerKind::conv_transpose:
          conv_transpose_backward(l, w, acts[li].data(), delta.data(), dw, db, din_ptr);
          break;
      }
      delta = std::move(din);
    }
  }
  return out;
}

}  // namespace

LossGrad loss_and_grad(const AutoencoderParams& params, std::span<const Eigen::MatrixXd> batch) {
  return accumulate(params, batch, nullptr);
}

double loss(const AutoencoderParams& params, std::span<const Eigen::MatrixXd> batch) {
  if (batch.empty()) throw ArgumentError("loss needs a nonempty batch");
  const int p = params.arch.input_size;
  double total = 0.0;
  for (const auto& sample : batch) {
    total += (forward(params, sample).reconstruction - sample).squaredNorm() / (double(p) * p);
  }
  return total / double(batch.size());
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1", "epochs");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1", "batch_size");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0", "learning_rate");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)", "beta1");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)", "beta2");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0", "epsilon");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ConfigError("init_scale must be >= 0", "init_scale");
}

TrainResult train(std::span<const Eigen::MatrixXd> dataset, const Architecture& arch, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ArgumentError("training dataset is empty");
  for (const auto& m : dataset) {
    if (m.rows() != arch.input_size || m.cols() != arch.input_size) {
      throw DimensionError("training matrix does not match the architecture input size");
    }
  }

  TrainResult result;
  result.params = init_params(arch, cfg.init_scale, derive_seed(cfg.seed, {stream::kAutoencoderInit}));
  result.params.seed = cfg.seed;
  Eigen::VectorXd& theta = result.params.values;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  long step = 0;

  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::vector<double> sample_loss(n);
  std::vector<Eigen::MatrixXd> batch;
  std::vector<double> batch_losses;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.seed, {stream::kAutoencoderShuffle, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    for (std::size_t start = 0; start < n; start += std::size_t(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + std::size_t(cfg.batch_size));
      batch.clear();
      for (std::size_t q = start; q < stop; ++q) batch.push_back(dataset[order[q]]);
      batch_losses.clear();
      const LossGrad lg = accumulate(result.params, batch, &batch_losses);
      // Stored by dataset index so the epoch mean does not depend on the
      // shuffle order.
      for (std::size_t q = start; q < stop; ++q) sample_loss[order[q]] = batch_losses[q - start];
      if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
        throw TrainingFailure("autoencoder training diverged at epoch " + std::to_string(epoch), epoch);
      }
      if (cfg.learning_rate == 0.0) continue;
      ++step;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * lg.grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * lg.grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
      theta.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.epsilon);
    }
    double epoch_loss = 0.0;
    for (double v : sample_loss) epoch_loss += v;
    epoch_loss /= double(n);
    if (!std::isfinite(epoch_loss) || !theta.allFinite()) {
      throw TrainingFailure("autoencoder training diverged at epoch " + std::to_string(epoch), epoch);
    }
    result.loss_history.push_back(epoch_loss);
  }
  return result;
}

TrainResult train(std::span<const connectome::Connectome> dataset, const Architecture& arch, const TrainConfig& cfg) {
  std::vector<Eigen::MatrixXd> matrices;
  matrices.reserve(dataset.size());
  for (const auto& c : dataset) matrices.push_back(c.matrix);
  return train(std::span<const Eigen::MatrixXd>(matrices), arch, cfg);
}

Eigen::MatrixXd residual_matrix(const Eigen::MatrixXd& input, const AutoencoderParams& params) {
  const Eigen::MatrixXd diff = input - forward(params, input).reconstruction;
  Eigen::MatrixXd r = 0.5 * (diff + diff.transpose());
  r.diagonal().setZero();
  return r;
}

ResidualConnectome residual(const connectome::Connectome& c, const AutoencoderParams& params) {
  return {residual_matrix(c.matrix, params), c.subject_id, c.session_label};
}

}  // namespace fcprint::convae
