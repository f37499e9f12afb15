#ifndef GAZELT_DISTILL_HPP
#define GAZELT_DISTILL_HPP

// Student network and the distillation objective: fused teacher target,
// Bhattacharyya distance, LDAM, and the training loop.

#include <cmath>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "gazelt/error.hpp"
#include "gazelt/optim.hpp"
#include "gazelt/teacher.hpp"
#include "gazelt/tensor.hpp"

namespace gazelt::distill {

using ad::ParamSet;
using ad::Tensor;

struct LdamParams {
  std::vector<double> margins;
  double max_margin = 0.5;
};

struct FusionParams {
  double eps_bd = 1e-12;
  double lambda = 1.0;

  void validate() const {
    if (!(eps_bd > 0)) throw ConfigError("eps_bd must be positive");
    if (!(lambda >= 0)) throw ConfigError("lambda must be nonnegative");
  }
};

/// Δ_y = C / n_y^{1/4} with C = m_max · min(n)^{1/4}: the rarest class gets m_max.
inline LdamParams margins_from_counts(const std::vector<std::size_t>& counts, double max_margin = 0.5) {
  if (counts.empty()) throw ConfigError("margins need at least one class");
  if (!(max_margin >= 0)) throw ConfigError("max margin must be nonnegative");
  std::size_t n_min = counts.front();
  for (std::size_t y = 0; y < counts.size(); ++y) {
    if (counts[y] == 0) throw ConfigError("class " + std::to_string(y) + " has no training samples");
    n_min = std::min(n_min, counts[y]);
  }
  LdamParams p;
  p.max_margin = max_margin;
  const double c = max_margin * std::pow(static_cast<double>(n_min), 0.25);
  for (auto n : counts) p.margins.push_back(c / std::pow(static_cast<double>(n), 0.25));
  return p;
}

/// J = softmax((f_I + f_D) / 2).
template <class Real>
Tensor<Real> fuse(const Tensor<Real>& f_i, const Tensor<Real>& f_d) {
  if (f_i.shape() != f_d.shape() || f_i.rank() != 1)
    throw ContractError("fuse: teacher features " + ad::to_string(f_i.shape()) + " and " +
                        ad::to_string(f_d.shape()) + " must be equal-length vectors");
  return ad::softmax(ad::scale(ad::add(f_i, f_d), Real{0.5}), 0);
}

namespace detail {

template <class Real>
void require_finite(const Tensor<Real>& t, const char* what) {
  for (Real v : t.data())
    if (!std::isfinite(static_cast<double>(v))) throw NumericError(std::string(what) + " has non-finite entries");
}

}  // namespace detail

/// −ln(max(Σ_k √(softmax(f_s)_k · J_k), ε)). J is treated as a constant.
/// √p is taken as exp(½ log_softmax) so it stays smooth when p underflows.
template <class Real>
Tensor<Real> bd_loss(const Tensor<Real>& f_s, const Tensor<Real>& target, double eps_bd = 1e-12) {
  detail::require_finite(f_s, "student distill feature");
  detail::require_finite(target, "teacher distribution");
  if (f_s.shape() != target.shape() || f_s.rank() != 1)
    throw ContractError("bd_loss: " + ad::to_string(f_s.shape()) + " vs " + ad::to_string(target.shape()));
  std::vector<Real> sqrt_j(target.numel());
  for (std::size_t k = 0; k < sqrt_j.size(); ++k) {
    if (target[k] < Real{0}) throw ContractError("bd_loss: target has negative mass");
    sqrt_j[k] = std::sqrt(target[k]);
  }
  auto sqrt_p = ad::exp(ad::scale(ad::log_softmax(f_s, 0), Real{0.5}));
  auto bc = ad::sum(ad::mul(sqrt_p, Tensor<Real>::from(target.shape(), std::move(sqrt_j))));
  return ad::neg(ad::log(ad::clamp_min(bc, static_cast<Real>(eps_bd))));
}

/// −log( e^{z_y−Δ_y} / (e^{z_y−Δ_y} + Σ_{j≠y} e^{z_j}) ).
template <class Real>
Tensor<Real> ldam_loss(const Tensor<Real>& logits, std::size_t label, const LdamParams& p) {
  if (logits.rank() != 1) throw ShapeError("ldam_loss: logits must be a vector, got " + ad::to_string(logits.shape()));
  if (label >= logits.numel())
    throw ContractError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.numel()) +
                        " classes");
  if (p.margins.size() != logits.numel())
    throw ContractError("ldam_loss: " + std::to_string(p.margins.size()) + " margins for " +
                        std::to_string(logits.numel()) + " classes");
  std::vector<Real> offset(logits.numel(), Real{0});
  offset[label] = static_cast<Real>(p.margins[label]);
  auto shifted = ad::sub(logits, Tensor<Real>::from(logits.shape(), std::move(offset)));
  return ad::neg(ad::pick(ad::log_softmax(shifted, 0), label));
}

/// L_s = LDAM + λ·BD(f_s, fuse(f_I, f_D)). Teacher features are detached.
template <class Real>
Tensor<Real> student_loss(const Tensor<Real>& logits, std::size_t label, const Tensor<Real>& f_s,
                          const Tensor<Real>& f_i, const Tensor<Real>& f_d, const LdamParams& margins,
                          const FusionParams& fusion) {
  auto ldam = ldam_loss(logits, label, margins);
  if (fusion.lambda == 0) return ldam;
  auto j = fuse(f_i.detach(), f_d.detach());
  return ad::add(ldam, ad::scale(bd_loss(f_s, j, fusion.eps_bd), static_cast<Real>(fusion.lambda)));
}

// ---------------------------------------------------------------------------
// Student

struct StudentConfig {
  std::size_t in_channels = 1;
  std::size_t n_stages = 3;
  std::size_t base_channels = 16;
  std::size_t n_classes = 8;
  std::size_t distill_dim = 64;
  std::size_t stem_stride = 1;
  double input_mean = 0.0;
  double input_std = 1.0;

  void validate() const {
    if (in_channels == 0 || n_stages == 0 || base_channels == 0 || n_classes == 0 || distill_dim == 0)
      throw ConfigError("student config values must be positive");
    if (stem_stride != 1 && stem_stride != 2) throw ConfigError("stem stride must be 1 or 2");
    if (!std::isfinite(input_mean) || !(input_std > 0.0) || !std::isfinite(input_std))
      throw ConfigError("student input statistics must be finite with a positive deviation");
  }
  std::size_t stage_channels(std::size_t s) const { return base_channels << s; }
};

template <class Real>
struct Student {
  StudentConfig cfg;
  ParamSet<Real> params;
};

template <class Real>
struct StudentOutputs {
  Tensor<Real> logits;   // n_classes
  Tensor<Real> distill;  // distill_dim
};

namespace detail {

inline std::string skey(std::size_t s, const char* what) { return "stage" + std::to_string(s) + "." + what; }

}  // namespace detail

template <class Real>
Student<Real> make_student(const StudentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Student<Real> st;
  st.cfg = cfg;
  auto& p = st.params;
  std::mt19937_64 rng(seed);
  const std::size_t c0 = cfg.base_channels;
  p.add_he("stem.w", {c0, cfg.in_channels, 3, 3}, cfg.in_channels * 9, rng);
  p.add_const("stem.b", {c0}, Real{0});
  std::size_t cin = c0;
  for (std::size_t s = 0; s < cfg.n_stages; ++s) {
    const std::size_t c = cfg.stage_channels(s);
    p.add_he(detail::skey(s, "conv1.w"), {c, cin, 3, 3}, cin * 9, rng);
    p.add_const(detail::skey(s, "conv1.b"), {c}, Real{0});
    p.add_he(detail::skey(s, "conv2.w"), {c, c, 3, 3}, c * 9, rng);
    p.add_const(detail::skey(s, "conv2.b"), {c}, Real{0});
    // The residual branch starts damped so the untrained network stays near the skip path.
    p.add_const(detail::skey(s, "gain"), {c, 1, 1}, Real{0.2});
    if (s > 0) p.add_he(detail::skey(s, "skip.w"), {c, cin}, cin, rng);
    cin = c;
  }
  p.add_he("head.cls.w", {cfg.n_classes, cin}, cin, rng);
  p.add_const("head.cls.b", {cfg.n_classes}, Real{0});
  p.add_he("head.distill.w", {cfg.distill_dim, cin}, cin, rng);
  p.add_const("head.distill.b", {cfg.distill_dim}, Real{0});
  return st;
}

/// Stem conv, then residual stages of two 3×3 convs each. Stages after the
/// first halve the resolution and project the skip with avg-pool + 1×1.
template <class Real>
StudentOutputs<Real> student_forward(const ParamSet<Real>& p, const StudentConfig& cfg, const Tensor<Real>& image) {
  if (image.rank() != 3 || image.dim(0) != cfg.in_channels)
    throw ShapeError("student input " + ad::to_string(image.shape()) + " must have " +
                     std::to_string(cfg.in_channels) + " channels");
  auto x = ad::relu(ad::conv2d(ad::standardize(image, cfg.input_mean, cfg.input_std), p.at("stem.w"), p.at("stem.b"), cfg.stem_stride));
  for (std::size_t s = 0; s < cfg.n_stages; ++s) {
    const std::size_t stride = s == 0 ? 1 : 2;
    if (stride == 2 && (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0))
      throw ShapeError("student stage " + std::to_string(s) + " input " + ad::to_string(x.shape()) +
                       " is not divisible by 2");
    auto h = ad::relu(ad::conv2d(x, p.at(detail::skey(s, "conv1.w")), p.at(detail::skey(s, "conv1.b")), stride));
    h = ad::conv2d(h, p.at(detail::skey(s, "conv2.w")), p.at(detail::skey(s, "conv2.b")), 1);
    h = ad::mul(h, p.at(detail::skey(s, "gain")));
    auto skip = s == 0 ? x : ad::pointwise(ad::avg_pool2d(x, 2, 2), p.at(detail::skey(s, "skip.w")), Tensor<Real>{});
    x = ad::relu(ad::add(h, skip));
  }
  auto feat = ad::global_avg_pool(x);
  return {ad::linear(feat, p.at("head.cls.w"), p.at("head.cls.b")),
          ad::linear(feat, p.at("head.distill.w"), p.at("head.distill.b"))};
}

template <class Real>
std::vector<double> predict_logits(const Student<Real>& st, const Tensor<Real>& image) {
  auto z = student_forward(st.params, st.cfg, image).logits;
  return {z.data().begin(), z.data().end()};
}

// ---------------------------------------------------------------------------
// Training

template <class Real>
struct StudentSample {
  std::string image_id;
  Tensor<Real> image;
  std::size_t label = 0;
};

struct StudentTrainConfig {
  ad::TrainConfig train{100, 256, {1e-4, 0, 0.1}, 0};
  FusionParams fusion;
  double max_margin = 0.5;
};

/// Fused teacher target J for one image, from a frozen teacher.
template <class Real>
Tensor<Real> teacher_target(const teacher::Teacher<Real>& t, const Tensor<Real>& image) {
  auto f_i = teacher::twi_forward(t.twi, t.cfg, image).feature.detach();
  auto f_d = teacher::twd_forward(t.twd, t.cfg, image).feature.detach();
  return fuse(f_i, f_d).detach();
}

struct StudentHistory {
  std::vector<double> loss;
  LdamParams margins;
};

/// Trains the student on L_s. The teacher is frozen first and only queried
/// once per image for its fused target; it never enters the student graph.
template <class Real, class Log = std::nullptr_t>
StudentHistory train_student(Student<Real>& student, teacher::Teacher<Real>& teacher,
                             const std::vector<StudentSample<Real>>& samples, const StudentTrainConfig& cfg,
                             Log&& log = nullptr) {
  cfg.fusion.validate();
  if (teacher.cfg.distill_dim != student.cfg.distill_dim)
    throw ConfigError("teacher distill dim " + std::to_string(teacher.cfg.distill_dim) +
                      " does not match student distill dim " + std::to_string(student.cfg.distill_dim));
  teacher.freeze();

  std::vector<std::size_t> counts(student.cfg.n_classes, 0);
  for (const auto& s : samples) {
    if (s.label >= counts.size())
      throw DataError("image '" + s.image_id + "' has label " + std::to_string(s.label) + " outside " +
                      std::to_string(counts.size()) + " classes");
    ++counts[s.label];
  }
  StudentHistory h;
  h.margins = margins_from_counts(counts, cfg.max_margin);

  std::vector<Tensor<Real>> targets;
  if (cfg.fusion.lambda > 0)
    for (const auto& s : samples) targets.push_back(teacher_target(teacher, s.image));

  h.loss = ad::fit(student.params, samples.size(), cfg.train, [&](std::size_t i) {
    auto out = student_forward(student.params, student.cfg, samples[i].image);
    auto l = ldam_loss(out.logits, samples[i].label, h.margins);
    if (cfg.fusion.lambda == 0) return l;
    return ad::add(l, ad::scale(bd_loss(out.distill, targets[i], cfg.fusion.eps_bd),
                                static_cast<Real>(cfg.fusion.lambda)));
  }, [&](int epoch, double loss) {
    if constexpr (!std::is_same_v<std::decay_t<Log>, std::nullptr_t>) log(epoch, loss);
  });
  return h;
}

}  // namespace gazelt::distill

#endif  // GAZELT_DISTILL_HPP
