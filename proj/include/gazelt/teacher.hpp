#ifndef GAZELT_TEACHER_HPP
#define GAZELT_TEACHER_HPP

// The gaze-pretrained teacher: a focal-gating branch (TW-I) and a global
// context branch (TW-D). Sub-block t of each branch emits a spatial attention
// map that is trained against time window t of the corresponding HVA stack.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "gazelt/error.hpp"
#include "gazelt/hva.hpp"
#include "gazelt/optim.hpp"
#include "gazelt/tensor.hpp"

namespace gazelt::teacher {

using ad::ParamSet;
using ad::Tensor;

struct TwBlockConfig {
  std::size_t in_channels = 1;
  std::size_t n_subblocks = 4;
  std::size_t base_channels = 16;
  std::size_t distill_dim = 64;
  // Pixel statistics of the training split, applied before the first sub-block.
  double input_mean = 0.0;
  double input_std = 1.0;

  /// Only the first four sub-blocks halve the resolution; deeper ones (used
  /// when more than four windows are requested) keep it.
  static constexpr std::size_t kMaxDownsample = 4;
  std::size_t n_downsample() const { return std::min(n_subblocks, kMaxDownsample); }

  void validate() const {
    if (in_channels == 0 || n_subblocks == 0 || base_channels == 0 || distill_dim == 0)
      throw ConfigError("teacher config values must be positive");
    if (!std::isfinite(input_mean) || !(input_std > 0.0) || !std::isfinite(input_std))
      throw ConfigError("teacher input statistics must be finite with a positive deviation");
  }

  void check_input(const ad::Shape& s) const {
    const std::size_t f = std::size_t{1} << n_downsample();
    if (s.size() != 3 || s[0] != in_channels || s[1] % f != 0 || s[2] % f != 0 || s[1] < f || s[2] < f)
      throw ShapeError("teacher input " + ad::to_string(s) + " must be " + std::to_string(in_channels) +
                       "×H×W with H, W divisible by " + std::to_string(f));
  }

  /// Spatial extent of layer t's attention map for an input of extent `n`.
  std::size_t layer_extent(std::size_t n, std::size_t t) const {
    return n >> std::min(t + 1, n_downsample());
  }
};

template <class Real>
struct TeacherOutputs {
  std::vector<Tensor<Real>> attn_maps;  // layer t: h_t × w_t
  Tensor<Real> feature;                 // distill_dim
};

template <class Real>
struct Teacher {
  TwBlockConfig cfg;
  ParamSet<Real> twi;
  ParamSet<Real> twd;

  void freeze() {
    twi.set_trainable(false);
    twd.set_trainable(false);
  }
};

namespace detail {

inline std::string key(const char* branch, std::size_t t, const char* what) {
  return std::string(branch) + "." + std::to_string(t) + "." + what;
}

template <class Real>
Tensor<Real> downsample_if(const TwBlockConfig& cfg, const Tensor<Real>& x, std::size_t t) {
  return t < cfg.n_downsample() ? ad::avg_pool2d(x, 2, 2) : x;
}

}  // namespace detail

/// Seeded initialisation of both branches. Weights use He-uniform scaling,
/// biases start at zero.
template <class Real>
Teacher<Real> make_teacher(const TwBlockConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Teacher<Real> t;
  t.cfg = cfg;
  std::mt19937_64 rng(seed);
  const std::size_t c = cfg.base_channels;
  for (std::size_t l = 0; l < cfg.n_subblocks; ++l) {
    const std::size_t cin = l == 0 ? cfg.in_channels : c;
    t.twi.add_he(detail::key("twi", l, "z.w"), {c, cin}, cin, rng);
    t.twi.add_const(detail::key("twi", l, "z.b"), {c}, Real{0});
    t.twi.add_he(detail::key("twi", l, "mix.w"), {c, 2 * c}, 2 * c, rng);
    t.twi.add_const(detail::key("twi", l, "mix.b"), {c}, Real{0});
  }
  t.twi.add_he("twi.proj.w", {cfg.distill_dim, c}, c, rng);
  for (std::size_t l = 0; l < cfg.n_subblocks; ++l) {
    const std::size_t cin = l == 0 ? cfg.in_channels : c;
    t.twd.add_he(detail::key("twd", l, "k.w"), {c, cin}, cin, rng);
    t.twd.add_const(detail::key("twd", l, "k.b"), {c}, Real{0});
    t.twd.add_he(detail::key("twd", l, "v.w"), {c, cin}, cin, rng);
    t.twd.add_const(detail::key("twd", l, "v.b"), {c}, Real{0});
  }
  t.twd.add_he("twd.proj.w", {cfg.distill_dim, c}, c, rng);
  return t;
}

/// Focal-gating branch. Per sub-block: optional 2× downsample, pointwise
/// projection Z, local contexts (3×3 and 7×7 average pools), gate
/// m = sigmoid(pointwise mix of both contexts), features Z ⊙ m. The layer's
/// attention map is the channel mean of the gate.
template <class Real>
TeacherOutputs<Real> twi_forward(const ParamSet<Real>& p, const TwBlockConfig& cfg, const Tensor<Real>& image) {
  cfg.check_input(image.shape());
  TeacherOutputs<Real> out;
  Tensor<Real> x = ad::standardize(image, cfg.input_mean, cfg.input_std);
  for (std::size_t l = 0; l < cfg.n_subblocks; ++l) {
    x = detail::downsample_if(cfg, x, l);
    auto z = ad::pointwise(x, p.at(detail::key("twi", l, "z.w")), p.at(detail::key("twi", l, "z.b")));
    auto ctx = ad::concat<Real>({ad::avg_pool2d(z, 3, 1), ad::avg_pool2d(z, 7, 1)}, 0);
    auto gate = ad::sigmoid(ad::pointwise(ctx, p.at(detail::key("twi", l, "mix.w")),
                                          p.at(detail::key("twi", l, "mix.b"))));
    out.attn_maps.push_back(ad::mean(gate, {0}));
    x = ad::mul(z, gate);
  }
  out.feature = ad::linear(ad::global_avg_pool(x), p.at("twi.proj.w"), Tensor<Real>{});
  return out;
}

/// Global-context branch. Per sub-block: optional 2× downsample, keys and
/// values by pointwise projection, query = mean key, attention = softmax over
/// positions of ⟨key, query⟩/√c, and the attended value vector is added back
/// to every position. The layer's attention map is that softmax.
template <class Real>
TeacherOutputs<Real> twd_forward(const ParamSet<Real>& p, const TwBlockConfig& cfg, const Tensor<Real>& image) {
  cfg.check_input(image.shape());
  TeacherOutputs<Real> out;
  const std::size_t c = cfg.base_channels;
  const Real inv_sqrt_c = Real{1} / std::sqrt(static_cast<Real>(c));
  Tensor<Real> x = ad::standardize(image, cfg.input_mean, cfg.input_std);
  for (std::size_t l = 0; l < cfg.n_subblocks; ++l) {
    x = detail::downsample_if(cfg, x, l);
    const std::size_t h = x.dim(1), w = x.dim(2), n = h * w;
    auto keys = ad::reshape(ad::pointwise(x, p.at(detail::key("twd", l, "k.w")), p.at(detail::key("twd", l, "k.b"))),
                            {c, n});
    auto values = ad::pointwise(x, p.at(detail::key("twd", l, "v.w")), p.at(detail::key("twd", l, "v.b")));
    auto query = ad::reshape(ad::mean(keys, {1}), {1, c});
    auto attn = ad::softmax(ad::scale(ad::matmul(query, keys), inv_sqrt_c), 1);  // 1 × n
    auto context = ad::matmul(ad::reshape(values, {c, n}), ad::reshape(attn, {n, 1}));
    out.attn_maps.push_back(ad::reshape(attn, {h, w}));
    x = ad::add(values, ad::reshape(context, {c, 1, 1}));
  }
  out.feature = ad::linear(ad::global_avg_pool(x), p.at("twd.proj.w"), Tensor<Real>{});
  return out;
}

/// Σ_t ‖ O_t/‖O_t‖₂ − f_t/‖f_t‖₂ ‖₂ over flattened maps. A zero-norm operand
/// is replaced by the uniform map. Targets must already match each layer's
/// resolution.
template <class Real>
Tensor<Real> tval_loss(const std::vector<Tensor<Real>>& outputs, const std::vector<Tensor<Real>>& targets) {
  if (outputs.size() != targets.size() || outputs.empty())
    throw ContractError("tVAL loss needs one target per layer: " + std::to_string(outputs.size()) + " outputs, " +
                        std::to_string(targets.size()) + " targets");
  Tensor<Real> total;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    if (outputs[t].numel() != targets[t].numel())
      throw ShapeError("layer " + std::to_string(t) + " output " + ad::to_string(outputs[t].shape()) +
                       " vs target " + ad::to_string(targets[t].shape()));
    Tensor<Real> o = outputs[t];
    if (ad::l2_norm(o).item() == Real{0}) o = Tensor<Real>::full(o.shape(), Real{1});
    auto o_hat = ad::div(o, ad::l2_norm(o));

    std::vector<Real> f(targets[t].data().begin(), targets[t].data().end());
    Real fn{0};
    for (Real v : f) fn += v * v;
    fn = std::sqrt(fn);
    if (fn == Real{0}) {
      std::fill(f.begin(), f.end(), Real{1});
      fn = std::sqrt(static_cast<Real>(f.size()));
    }
    for (auto& v : f) v /= fn;
    auto term = ad::l2_norm(ad::sub(o_hat, Tensor<Real>::from(o.shape(), std::move(f))));
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

/// Integration tVAL: TW-I layer outputs against the integration windows.
template <class Real>
Tensor<Real> i_tval_loss(const std::vector<Tensor<Real>>& o_int, const std::vector<Tensor<Real>>& f_int) {
  return tval_loss(o_int, f_int);
}

/// Disintegration tVAL: TW-D layer outputs against the disintegration windows.
template <class Real>
Tensor<Real> d_tval_loss(const std::vector<Tensor<Real>>& o_dis, const std::vector<Tensor<Real>>& f_dis) {
  return tval_loss(o_dis, f_dis);
}

/// Resizes window t of a stack to layer t's resolution.
template <class Real>
std::vector<Tensor<Real>> layer_targets(const hva::HvaStack& stack, const TwBlockConfig& cfg, std::size_t height,
                                        std::size_t width) {
  if (stack.n_windows() != cfg.n_subblocks)
    throw DataError("HVA stack has " + std::to_string(stack.n_windows()) + " windows but the teacher has " +
                    std::to_string(cfg.n_subblocks) + " sub-blocks");
  std::vector<Tensor<Real>> out;
  for (std::size_t t = 0; t < cfg.n_subblocks; ++t) {
    const std::size_t h = cfg.layer_extent(height, t), w = cfg.layer_extent(width, t);
    auto m = hva::resize_map(stack.map(t), h, w);
    out.push_back(Tensor<Real>::from({h, w}, std::vector<Real>(m.grid.begin(), m.grid.end())));
  }
  return out;
}

template <class Real>
struct TeacherSample {
  std::string image_id;
  Tensor<Real> image;
  const hva::HvaSet* hva = nullptr;
};

struct TeacherTrainConfig {
  ad::TrainConfig twi{100, 256, {1e-4, 10, 0.1}, 0};
  ad::TrainConfig twd{250, 256, {5e-4, 10, 0.1}, 0};
};

struct TeacherHistory {
  std::vector<double> twi;
  std::vector<double> twd;
};

/// Trains TW-I on the integration tVAL and TW-D on the disintegration tVAL,
/// each with its own optimiser and schedule.
template <class Real, class Log = std::nullptr_t>
TeacherHistory train_teacher(Teacher<Real>& teacher, const std::vector<TeacherSample<Real>>& samples,
                             const TeacherTrainConfig& cfg, Log&& log = nullptr) {
  std::vector<std::vector<Tensor<Real>>> int_targets, dis_targets;
  for (const auto& s : samples) {
    if (!s.hva) throw DataError("no HVA maps for training image '" + s.image_id + "'");
    teacher.cfg.check_input(s.image.shape());
    int_targets.push_back(layer_targets<Real>(s.hva->integration, teacher.cfg, s.image.dim(1), s.image.dim(2)));
    dis_targets.push_back(layer_targets<Real>(s.hva->disintegration, teacher.cfg, s.image.dim(1), s.image.dim(2)));
  }
  TeacherHistory h;
  h.twi = ad::fit(teacher.twi, samples.size(), cfg.twi, [&](std::size_t i) {
    return i_tval_loss(twi_forward(teacher.twi, teacher.cfg, samples[i].image).attn_maps, int_targets[i]);
  }, [&](int epoch, double loss) {
    if constexpr (!std::is_same_v<std::decay_t<Log>, std::nullptr_t>) log("twi", epoch, loss);
  });
  h.twd = ad::fit(teacher.twd, samples.size(), cfg.twd, [&](std::size_t i) {
    return d_tval_loss(twd_forward(teacher.twd, teacher.cfg, samples[i].image).attn_maps, dis_targets[i]);
  }, [&](int epoch, double loss) {
    if constexpr (!std::is_same_v<std::decay_t<Log>, std::nullptr_t>) log("twd", epoch, loss);
  });
  return h;
}

}  // namespace gazelt::teacher

#endif  // GAZELT_TEACHER_HPP
