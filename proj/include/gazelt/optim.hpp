#ifndef GAZELT_OPTIM_HPP
#define GAZELT_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <numeric>
#include <type_traits>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "gazelt/error.hpp"
#include "gazelt/tensor.hpp"

namespace gazelt::ad {

template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> tensor;
  bool trainable = true;
};

/// Ordered, uniquely named collection of parameters belonging to one model.
template <class Real>
class ParamSet {
 public:
  Tensor<Real> add(std::string name, Shape shape, std::vector<Real> values, bool trainable = true) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    auto t = Tensor<Real>::from(std::move(shape), std::move(values), trainable);
    index_[name] = params_.size();
    params_.push_back({std::move(name), t, trainable});
    return t;
  }

  /// He-style uniform init: U(-b, b) with b = sqrt(6 / fan_in).
  Tensor<Real> add_he(std::string name, Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<Real> v(numel_of(shape));
    for (auto& x : v) x = static_cast<Real>(u(rng));
    return add(std::move(name), std::move(shape), std::move(v));
  }

  Tensor<Real> add_const(std::string name, Shape shape, Real value) {
    auto n = numel_of(shape);
    return add(std::move(name), std::move(shape), std::vector<Real>(n, value));
  }

  const std::vector<Parameter<Real>>& params() const { return params_; }
  std::vector<Parameter<Real>>& params() { return params_; }
  std::size_t size() const { return params_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<Real>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return params_[it->second].tensor;
  }
  const Tensor<Real>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return params_[it->second].tensor;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Freezes or unfreezes every parameter.
  void set_trainable(bool on) {
    for (auto& p : params_) {
      p.trainable = on;
      p.tensor.set_requires_grad(on);
    }
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

 private:
  std::vector<Parameter<Real>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// lr(epoch) = base_lr · gamma^⌊epoch / step_size⌋. step_size 0 means constant.
struct StepLrSchedule {
  double base_lr = 1e-4;
  int step_size = 10;
  double gamma = 0.1;

  double lr(int epoch) const {
    if (step_size <= 0) return base_lr;
    return base_lr * std::pow(gamma, epoch / step_size);
  }
};

template <class Real>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(const ParamSet<Real>& params) {
    for (const auto& p : params.params()) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  std::int64_t steps() const { return step_; }

  /// One bias-corrected update using the gradients currently held by the
  /// parameters (parameters without a gradient buffer see a zero gradient).
  void step(ParamSet<Real>& params, double lr) {
    if (params.size() != m_.size()) throw ContractError("Adam state does not match parameter set");
    ++step_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params.params()[i];
      if (!p.trainable) continue;
      auto& t = p.tensor;
      if (m_[i].size() != t.numel()) throw ContractError("Adam moment shape mismatch for " + p.name);
      auto val = t.mutable_data();
      auto grad = t.grad();
      for (std::size_t k = 0; k < val.size(); ++k) {
        const double g = grad.empty() ? 0.0 : static_cast<double>(grad[k]);
        m_[i][k] = beta1 * m_[i][k] + (1.0 - beta1) * g;
        v_[i][k] = beta2 * v_[i][k] + (1.0 - beta2) * g * g;
        const double mhat = m_[i][k] / c1;
        const double vhat = v_[i][k] / c2;
        val[k] = static_cast<Real>(static_cast<double>(val[k]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

 private:
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_ = 0;
};

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 256;
  StepLrSchedule schedule{1e-4, 10, 0.1};
  std::uint64_t seed = 0;
};

/// Mini-batch training with Adam. `sample_loss(i)` builds the graph for
/// sample i and returns its scalar loss; gradients are averaged over each
/// batch. The batch size is clamped to the dataset size and the visiting
/// order is a seeded shuffle per epoch. Returns the mean loss per epoch.
template <class Real, class SampleLoss, class EpochHook = std::nullptr_t>
std::vector<double> fit(ParamSet<Real>& params, std::size_t n_samples, const TrainConfig& cfg,
                        SampleLoss&& sample_loss, EpochHook&& on_epoch = nullptr) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (cfg.epochs > 0 && !(cfg.schedule.base_lr > 0)) throw ConfigError("learning rate must be positive");
  std::vector<double> history;
  if (n_samples == 0 || cfg.epochs == 0) return history;
  const std::size_t batch = std::clamp<std::size_t>(cfg.batch_size, 1, n_samples);
  Adam<Real> opt(params);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.schedule.lr(epoch);
    double total = 0.0;
    for (std::size_t start = 0; start < n_samples; start += batch) {
      const std::size_t end = std::min(n_samples, start + batch);
      const Real inv = Real{1} / static_cast<Real>(end - start);
      params.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        auto loss = sample_loss(order[i]);
        const double v = static_cast<double>(loss.item());
        if (!std::isfinite(v)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
        total += v;
        backward(scale(loss, inv));
      }
      opt.step(params, lr);
    }
    history.push_back(total / static_cast<double>(n_samples));
    if constexpr (!std::is_same_v<std::decay_t<EpochHook>, std::nullptr_t>) on_epoch(epoch, history.back());
  }
  return history;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  std::size_t kink_skipped = 0;  // coordinates whose ±eps step crossed a relu / clamp kink
};

/// Compares reverse-mode gradients against central differences on every
/// coordinate of every trainable parameter. Relative error per coordinate is
/// |g_ad − g_fd| / max(1e-12, |g_ad| + |g_fd|). A coordinate whose ±eps
/// evaluations put some relu / clamp_min input on the other side of its kink
/// has no usable central difference; it is counted in kink_skipped instead.
inline GradCheckResult grad_check(const std::function<Tensor<double>()>& f, ParamSet<double>& params,
                                  double eps = 1e-4) {
  struct Eval {
    double value;
    std::uint64_t kinks;
  };
  auto eval = [&f]() {
    KinkTrace trace;
    detail::kink_trace = &trace;
    double v;
    try {
      v = f().item();
    } catch (...) {
      detail::kink_trace = nullptr;
      throw;
    }
    detail::kink_trace = nullptr;
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return Eval{v, trace.hash};
  };
  const auto base = eval().kinks;
  params.zero_grad();
  auto loss = f();
  backward(loss);

  GradCheckResult r;
  for (auto& p : params.params()) {
    if (!p.trainable) continue;
    std::vector<double> analytic(p.tensor.numel(), 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
    auto val = p.tensor.mutable_data();
    for (std::size_t k = 0; k < val.size(); ++k) {
      const double orig = val[k];
      val[k] = orig + eps;
      const auto up = eval();
      val[k] = orig - eps;
      const auto down = eval();
      val[k] = orig;
      ++r.coordinates;
      if (up.kinks != base || down.kinks != base) {
        ++r.kink_skipped;
        continue;
      }
      const double fd = (up.value - down.value) / (2.0 * eps);
      const double rel = std::abs(analytic[k] - fd) / std::max(1e-12, std::abs(analytic[k]) + std::abs(fd));
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = p.name;
        r.worst_index = k;
      }
    }
  }
  return r;
}

}  // namespace gazelt::ad

#endif  // GAZELT_OPTIM_HPP
