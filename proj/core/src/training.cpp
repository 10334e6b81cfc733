#include "rtsrts/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "rtsrts/error.hpp"
#include "rtsrts/rtsv_io.hpp"

namespace rtsrts::training {

using tensor::Node;
using tensor::Tensor;

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("training.epochs must be positive");
  if (c.decay_start < 0 || c.decay_start >= c.epochs) {
    throw ConfigError("training.decay_start must lie in [0, epochs)");
  }
  if (!(c.lr0 > 0.0)) throw ConfigError("training.lr0 must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("training.beta1 and training.beta2 must lie in [0,1)");
  }
  if (!(c.eps > 0.0)) throw ConfigError("training.eps must be positive");
  if (!(c.alpha1 >= 0.0) || !(c.alpha2 >= 0.0)) throw ConfigError("training.alpha1 and alpha2 must be >= 0");
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + tensor::to_string(pred.shape()) + " vs target " +
                     tensor::to_string(target.shape()));
  }
  const auto p = pred.values();
  const auto t = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double(p[i]) - double(t[i]);
    acc += d * d;
  }
  const double n = static_cast<double>(p.size());
  return tensor::make_result<T>({1}, {static_cast<T>(acc / n)}, "mse_loss", {pred, target}, [n](Node<T>& self) {
    Node<T>& a = *self.parents[0];
    Node<T>& b = *self.parents[1];
    const double g = 2.0 * double(self.grad[0]) / n;
    if (a.requires_grad) a.ensure_grad();
    if (b.requires_grad) b.ensure_grad();
    for (std::size_t i = 0; i < a.value.size(); ++i) {
      const double d = g * (double(a.value[i]) - double(b.value[i]));
      if (a.requires_grad) a.grad[i] += static_cast<T>(d);
      if (b.requires_grad) b.grad[i] -= static_cast<T>(d);
    }
  });
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& p, const Tensor<T>& y) {
  if (p.shape() != y.shape()) {
    throw ShapeError("bce_loss: probabilities " + tensor::to_string(p.shape()) + " vs labels " +
                     tensor::to_string(y.shape()));
  }
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const auto pv = p.values();
  const auto yv = y.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (yv[i] != T(0) && yv[i] != T(1)) throw ValidationError("bce_loss: labels must be 0 or 1");
    const double q = std::clamp(double(pv[i]), lo, hi);
    acc -= yv[i] != T(0) ? std::log(q) : std::log1p(-q);
  }
  const double n = static_cast<double>(pv.size());
  return tensor::make_result<T>({1}, {static_cast<T>(acc / n)}, "bce_loss", {p, y}, [n](Node<T>& self) {
    Node<T>& a = *self.parents[0];
    const Node<T>& b = *self.parents[1];
    if (!a.requires_grad) return;
    a.ensure_grad();
    const double g = double(self.grad[0]) / n;
    for (std::size_t i = 0; i < a.value.size(); ++i) {
      const double q = double(a.value[i]);
      if (q < lo || q > hi) continue;
      a.grad[i] += static_cast<T>(b.value[i] != T(0) ? -g / q : g / (1.0 - q));
    }
  });
}

template <typename T>
LossParts<T> total_loss(const Tensor<T>& recon, const Tensor<T>& target_vol, const Tensor<T>& seg_p,
                        const Tensor<T>& target_mask, double alpha1, double alpha2) {
  LossParts<T> out;
  out.mse = mse_loss(recon, target_vol);
  out.total = tensor::scale(out.mse, static_cast<T>(alpha1));
  if (seg_p.defined()) {
    out.bce = bce_loss(seg_p, target_mask);
    out.total = tensor::add(out.total, tensor::scale(out.bce, static_cast<T>(alpha2)));
  }
  return out;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 1 || epoch > cfg.epochs) {
    throw ValidationError("lr_at: epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(cfg.epochs) +
                          "]");
  }
  if (epoch <= cfg.decay_start) return cfg.lr0;
  return cfg.lr0 * double(cfg.epochs - epoch) / double(cfg.epochs - cfg.decay_start);
}

template <typename T>
void adam_step(ParamStore<T>& params, double lr, double beta1, double beta2, double eps) {
  for (const auto& e : params.entries()) {
    if (!e.value.has_grad()) throw ValidationError("adam_step: parameter '" + e.name + "' has no gradient");
  }
  const std::int64_t t = params.step() + 1;
  params.set_step(t);
  const double c1 = 1.0 - std::pow(beta1, double(t));
  const double c2 = 1.0 - std::pow(beta2, double(t));
  for (auto& e : params.entries()) {
    auto v = e.value.mutable_values();
    const auto g = e.value.grad();
    if (e.first_moment.size() != v.size()) e.first_moment.assign(v.size(), T(0));
    if (e.second_moment.size() != v.size()) e.second_moment.assign(v.size(), T(0));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double gi = g[i];
      const double m = beta1 * double(e.first_moment[i]) + (1.0 - beta1) * gi;
      const double s = beta2 * double(e.second_moment[i]) + (1.0 - beta2) * gi * gi;
      e.first_moment[i] = static_cast<T>(m);
      e.second_moment[i] = static_cast<T>(s);
      v[i] = static_cast<T>(double(v[i]) - lr * (m / c1) / (std::sqrt(s / c2) + eps));
    }
  }
}

SampleTensors to_tensors(const dataset::Sample& s) {
  const auto nu = s.projection.geometry.nu, nv = s.projection.geometry.nv;
  const auto& d = s.volume.grid.dims;
  SampleTensors t;
  t.id = s.id;
  t.projection = Tensor<float>::from({1, nv, nu}, s.projection.pixels);
  t.volume = Tensor<float>::from({1, d[2], d[1], d[0]}, s.volume.voxels);
  t.mask = Tensor<float>::from({1, d[2], d[1], d[0]}, std::vector<float>(s.mask.voxels.begin(), s.mask.voxels.end()));
  return t;
}

std::vector<SampleTensors> load_split(const dataset::DatasetManifest& m, const std::string& split) {
  std::vector<SampleTensors> out;
  for (const auto* r : m.split(split)) out.push_back(to_tensors(dataset::load_sample(m, r->id)));
  return out;
}

LossParts<float> sample_loss(const network::ModelState<float>& model, const SampleTensors& s, const TrainConfig& cfg) {
  const auto fwd = network::forward(model, s.projection);
  Tensor<float> p;
  if (fwd.seg.defined()) p = tensor::slice_channels(fwd.seg, 0, 1);
  auto parts = total_loss(fwd.recon, s.volume, p, s.mask, cfg.alpha1, cfg.alpha2);
  if (cfg.deep_supervision && fwd.seg_initial.defined() && model.config.enable_ure) {
    const auto extra = bce_loss(tensor::slice_channels(fwd.seg_initial, 0, 1), s.mask);
    parts.total = tensor::add(parts.total, tensor::scale(extra, static_cast<float>(cfg.alpha2)));
  }
  return parts;
}

double validation_loss(const network::ModelState<float>& model, const std::vector<SampleTensors>& samples,
                       const TrainConfig& cfg) {
  if (samples.empty()) throw ValidationError("validation split is empty");
  tensor::NoGradGuard guard;
  double acc = 0.0;
  for (const auto& s : samples) acc += sample_loss(model, s, cfg).total.item();
  return acc / double(samples.size());
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,lr,train_mse,train_bce,train_total,val_total,seconds\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << io::format_double(e.lr) << ',' << io::format_double(e.train_mse) << ','
       << io::format_double(e.train_bce) << ',' << io::format_double(e.train_total) << ','
       << io::format_double(e.val_total) << ',' << io::format_double(e.seconds) << '\n';
  }
  return os.str();
}

TrainResult train(const network::ModelState<float>& initial, const std::vector<SampleTensors>& train_set,
                  const std::vector<SampleTensors>& val_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (train_set.empty()) throw ValidationError("training split is empty");
  if (val_set.empty()) throw ValidationError("validation split is empty");
  const auto s = static_cast<std::int64_t>(initial.config.input_size);
  for (const auto& x : train_set) {
    if (x.projection.shape() != tensor::Shape{1, s, s} || x.volume.shape() != tensor::Shape{1, s, s, s}) {
      throw ValidationError("sample " + x.id + " does not match network size " + std::to_string(s));
    }
  }

  TrainResult out{network::ModelState<float>{initial.config, initial.params.clone()}, {}, {}};
  network::ModelState<float> model{initial.config, initial.params.clone()};
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, cfg);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    for (std::size_t idx : order) {
      const auto& sample = train_set[idx];
      model.params.zero_grad();
      const auto parts = sample_loss(model, sample, cfg);
      const double total = parts.total.item();
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " + sample.id);
      }
      tensor::backward(parts.total);
      adam_step(model.params, lr, cfg.beta1, cfg.beta2, cfg.eps);
      log.train_mse += parts.mse.item();
      if (parts.bce.defined()) log.train_bce += parts.bce.item();
      log.train_total += total;
    }
    const double n = double(train_set.size());
    log.train_mse /= n;
    log.train_bce /= n;
    log.train_total /= n;
    log.val_total = validation_loss(model, val_set, cfg);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log.val_total < best_val) {
      best_val = log.val_total;
      out.log.best_epoch = epoch;
      out.best.params.assign_values(model.params);
    }
    out.log.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  out.final_model = network::ModelState<float>{model.config, model.params.clone()};
  if (out.log.best_epoch == 0) throw NumericError("validation loss was never finite");
  return out;
}

TrainResult train(const network::ModelState<float>& initial, const dataset::DatasetManifest& manifest,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (manifest.input_size != initial.config.input_size || manifest.output_size != initial.config.output_size()) {
    throw ValidationError("manifest sizes (" + std::to_string(manifest.input_size) + ", " +
                          std::to_string(manifest.output_size) + ") do not match the network input size " +
                          std::to_string(initial.config.input_size));
  }
  return train(initial, load_split(manifest, "train"), load_split(manifest, "val"), cfg, on_epoch);
}

template Tensor<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> bce_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bce_loss(const Tensor<double>&, const Tensor<double>&);
template LossParts<float> total_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                     const Tensor<float>&, double, double);
template LossParts<double> total_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                      const Tensor<double>&, double, double);
template void adam_step(ParamStore<float>&, double, double, double, double);
template void adam_step(ParamStore<double>&, double, double, double, double);

}  // namespace rtsrts::training
