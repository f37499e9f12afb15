#ifndef GAZELT_CONFIG_HPP
#define GAZELT_CONFIG_HPP

// Run configuration and its JSON form. Missing keys keep their defaults;
// unknown keys are rejected so typos do not pass silently.

#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazelt/checkpoint.hpp"
#include "gazelt/distill.hpp"
#include "gazelt/error.hpp"
#include "gazelt/gaze_ingest.hpp"
#include "gazelt/hva.hpp"
#include "gazelt/teacher.hpp"

namespace gazelt::config {

using nlohmann::json;

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t n_windows = 4;
  std::string data_dir = "data";
  std::string out_dir = "runs";

  ingest::SynthConfig synth;
  ingest::GroupThresholds groups;
  hva::IntegrationParams hva;
  teacher::TwBlockConfig teacher;  // n_subblocks follows n_windows
  teacher::TeacherTrainConfig teacher_train;
  distill::StudentConfig student;  // n_classes and in_channels follow the data
  distill::StudentTrainConfig student_train;

  std::vector<std::size_t> sweep_windows{2, 4, 8};
  std::size_t ablation_seeds = 5;
  double ablation_lambda = 1.0;

  void validate() const;
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config section '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ValidationError("unknown config key '" + where + (where.empty() ? "" : ".") + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + where + (where.empty() ? "" : ".") + key + "' has the wrong type");
  }
}

inline json train_to_json(const ad::TrainConfig& t) {
  return {{"lr", t.schedule.base_lr}, {"epochs", t.epochs}, {"batch_size", t.batch_size},
          {"step_size", t.schedule.step_size}, {"gamma", t.schedule.gamma}};
}

inline void train_from_json(const json& j, ad::TrainConfig& t, const std::string& where) {
  check_keys(j, where, {"lr", "epochs", "batch_size", "step_size", "gamma"});
  read(j, "lr", t.schedule.base_lr, where);
  read(j, "epochs", t.epochs, where);
  read(j, "batch_size", t.batch_size, where);
  read(j, "step_size", t.schedule.step_size, where);
  read(j, "gamma", t.schedule.gamma, where);
}

inline void validate_train(const ad::TrainConfig& t, const std::string& where) {
  if (!(t.schedule.base_lr > 0)) throw ConfigError(where + ".lr must be positive");
  if (t.epochs <= 0) throw ConfigError(where + ".epochs must be positive");
  if (t.batch_size == 0) throw ConfigError(where + ".batch_size must be positive");
  if (!(t.schedule.gamma > 0)) throw ConfigError(where + ".gamma must be positive");
}

}  // namespace detail

/// Training-stage defaults: TW-I lr 1e-4 for 100 epochs, TW-D lr 5e-4 for
/// 250 epochs, both Adam + StepLR(10, 0.1); student lr 1e-4 for 100 epochs
/// with Adam at a constant rate; batch 256 everywhere.
inline RunConfig default_config() { return RunConfig{}; }

inline void RunConfig::validate() const {
  if (n_windows == 0) throw ConfigError("n_windows must be positive");
  hva.validate();
  teacher.validate();
  detail::validate_train(teacher_train.twi, "teacher.twi");
  detail::validate_train(teacher_train.twd, "teacher.twd");
  detail::validate_train(student_train.train, "student.train");
  student_train.fusion.validate();
  if (teacher.distill_dim != student.distill_dim)
    throw ConfigError("teacher.distill_dim and student.distill_dim must match");
  if (student.n_stages == 0 || student.base_channels == 0) throw ConfigError("student sizes must be positive");
  if (student.stem_stride != 1 && student.stem_stride != 2) throw ConfigError("student.stem_stride must be 1 or 2");
  if (sweep_windows.empty()) throw ConfigError("sweep.windows must not be empty");
  for (auto n : sweep_windows)
    if (n == 0) throw ConfigError("sweep.windows entries must be positive");
  if (ablation_seeds < 2) throw ConfigError("ablation.seeds must be at least 2");
  if (!(ablation_lambda > 0)) throw ConfigError("ablation.lambda must be positive");
  if (synth.n_train == 0) throw ConfigError("synth.n_train must be positive");
}

inline json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["n_windows"] = c.n_windows;
  j["data_dir"] = c.data_dir;
  j["out_dir"] = c.out_dir;
  const auto& s = c.synth;
  j["synth"] = {{"n_head", s.n_head},
                {"n_medium", s.n_medium},
                {"n_tail", s.n_tail},
                {"imbalance_factor", s.imbalance_factor},
                {"image_size", s.image_size},
                {"n_train", s.n_train},
                {"n_balanced_per_class", s.n_balanced_per_class},
                {"n_test", s.n_test},
                {"cooccur_prob", s.cooccur_prob},
                {"seed", s.seed}};
  j["groups"] = {{"head_above", c.groups.head_above}, {"tail_below", c.groups.tail_below}};
  j["hva"] = {{"d_thr", c.hva.d_thr},     {"alpha_sub", c.hva.alpha_sub},
              {"sigma_i", c.hva.sigma_i}, {"sigma_d", c.hva.sigma_d},
              {"trunc_radius_sigmas", c.hva.trunc_radius_sigmas}, {"scale", c.hva.scale}};
  j["teacher"] = {{"base_channels", c.teacher.base_channels},
                  {"distill_dim", c.teacher.distill_dim},
                  {"twi", detail::train_to_json(c.teacher_train.twi)},
                  {"twd", detail::train_to_json(c.teacher_train.twd)}};
  j["student"] = {{"n_stages", c.student.n_stages},
                  {"base_channels", c.student.base_channels},
                  {"stem_stride", c.student.stem_stride},
                  {"distill_dim", c.student.distill_dim},
                  {"lambda", c.student_train.fusion.lambda},
                  {"eps_bd", c.student_train.fusion.eps_bd},
                  {"max_margin", c.student_train.max_margin},
                  {"train", detail::train_to_json(c.student_train.train)}};
  j["sweep"] = {{"windows", c.sweep_windows}};
  j["ablation"] = {{"seeds", c.ablation_seeds}, {"lambda", c.ablation_lambda}};
  return j;
}

inline RunConfig from_json(const json& j) {
  using detail::read;
  RunConfig c;
  detail::check_keys(j, "", {"seed", "n_windows", "data_dir", "out_dir", "synth", "groups", "hva", "teacher",
                             "student", "sweep", "ablation"});
  read(j, "seed", c.seed, "");
  read(j, "n_windows", c.n_windows, "");
  read(j, "data_dir", c.data_dir, "");
  read(j, "out_dir", c.out_dir, "");
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    detail::check_keys(s, "synth", {"n_head", "n_medium", "n_tail", "imbalance_factor", "image_size", "n_train",
                                    "n_balanced_per_class", "n_test", "cooccur_prob", "seed"});
    read(s, "n_head", c.synth.n_head, "synth");
    read(s, "n_medium", c.synth.n_medium, "synth");
    read(s, "n_tail", c.synth.n_tail, "synth");
    read(s, "imbalance_factor", c.synth.imbalance_factor, "synth");
    read(s, "image_size", c.synth.image_size, "synth");
    read(s, "n_train", c.synth.n_train, "synth");
    read(s, "n_balanced_per_class", c.synth.n_balanced_per_class, "synth");
    read(s, "n_test", c.synth.n_test, "synth");
    read(s, "cooccur_prob", c.synth.cooccur_prob, "synth");
    read(s, "seed", c.synth.seed, "synth");
  }
  if (j.contains("groups")) {
    detail::check_keys(j["groups"], "groups", {"head_above", "tail_below"});
    read(j["groups"], "head_above", c.groups.head_above, "groups");
    read(j["groups"], "tail_below", c.groups.tail_below, "groups");
  }
  if (j.contains("hva")) {
    const auto& h = j["hva"];
    detail::check_keys(h, "hva", {"d_thr", "alpha_sub", "sigma_i", "sigma_d", "trunc_radius_sigmas", "scale"});
    read(h, "d_thr", c.hva.d_thr, "hva");
    read(h, "alpha_sub", c.hva.alpha_sub, "hva");
    read(h, "sigma_i", c.hva.sigma_i, "hva");
    read(h, "sigma_d", c.hva.sigma_d, "hva");
    read(h, "trunc_radius_sigmas", c.hva.trunc_radius_sigmas, "hva");
    read(h, "scale", c.hva.scale, "hva");
  }
  if (j.contains("teacher")) {
    const auto& t = j["teacher"];
    detail::check_keys(t, "teacher", {"base_channels", "distill_dim", "twi", "twd"});
    read(t, "base_channels", c.teacher.base_channels, "teacher");
    read(t, "distill_dim", c.teacher.distill_dim, "teacher");
    if (t.contains("twi")) detail::train_from_json(t["twi"], c.teacher_train.twi, "teacher.twi");
    if (t.contains("twd")) detail::train_from_json(t["twd"], c.teacher_train.twd, "teacher.twd");
  }
  if (j.contains("student")) {
    const auto& s = j["student"];
    detail::check_keys(s, "student", {"n_stages", "base_channels", "stem_stride", "distill_dim", "lambda", "eps_bd",
                                      "max_margin", "train"});
    read(s, "n_stages", c.student.n_stages, "student");
    read(s, "base_channels", c.student.base_channels, "student");
    read(s, "stem_stride", c.student.stem_stride, "student");
    read(s, "distill_dim", c.student.distill_dim, "student");
    read(s, "lambda", c.student_train.fusion.lambda, "student");
    read(s, "eps_bd", c.student_train.fusion.eps_bd, "student");
    read(s, "max_margin", c.student_train.max_margin, "student");
    if (s.contains("train")) detail::train_from_json(s["train"], c.student_train.train, "student.train");
  }
  if (j.contains("sweep")) {
    detail::check_keys(j["sweep"], "sweep", {"windows"});
    read(j["sweep"], "windows", c.sweep_windows, "sweep");
  }
  if (j.contains("ablation")) {
    detail::check_keys(j["ablation"], "ablation", {"seeds", "lambda"});
    read(j["ablation"], "seeds", c.ablation_seeds, "ablation");
    read(j["ablation"], "lambda", c.ablation_lambda, "ablation");
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

/// Stable hash of the canonical JSON form.
inline std::string config_hash(const RunConfig& c) { return io::hex64(io::fnv1a64(to_json(c).dump())); }

}  // namespace gazelt::config

#endif  // GAZELT_CONFIG_HPP
