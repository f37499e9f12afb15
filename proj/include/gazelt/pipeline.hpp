#ifndef GAZELT_PIPELINE_HPP
#define GAZELT_PIPELINE_HPP

// Pipeline stages behind the command-line driver. Each stage has an
// in-memory form (reused by the sweep and the ablation) and a file-based
// wrapper that reads and writes the on-disk layout:
//
//   <data>/manifest.json, <data>/images/*.pgm, <data>/fixations.csv
//   <out>/hva/<id>.{int,dis}.hva
//   <out>/teacher.gzlt, <out>/student.gzlt, <out>/metrics_<split>.json

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazelt/checkpoint.hpp"
#include "gazelt/config.hpp"
#include "gazelt/distill.hpp"
#include "gazelt/gaze_ingest.hpp"
#include "gazelt/hva.hpp"
#include "gazelt/image.hpp"
#include "gazelt/metrics.hpp"
#include "gazelt/teacher.hpp"

namespace gazelt::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using Real = float;
using Log = std::function<void(const std::string&)>;

inline void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << j.dump(2) << "\n";
}

inline json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Data

struct Dataset {
  ingest::DatasetManifest manifest;
  std::vector<ad::Tensor<Real>> images;  // parallel to manifest.records
  std::vector<ingest::GazeSequence> gaze;

  std::vector<std::size_t> indices(ingest::Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      if (manifest.records[i].split == s) out.push_back(i);
    return out;
  }
};

inline ad::Tensor<Real> to_tensor(const Image& img) {
  return ad::Tensor<Real>::from({img.channels, img.height, img.width},
                                std::vector<Real>(img.pixels.begin(), img.pixels.end()));
}

struct InputStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Pixel mean and standard deviation over the training split. Both models
/// standardize with these, and the values travel inside their checkpoints.
inline InputStats input_stats(const Dataset& d) {
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    if (d.manifest.records[i].split != ingest::Split::train) continue;
    for (Real v : d.images[i].data()) {
      sum += v;
      sq += static_cast<double>(v) * v;
      n += 1.0;
    }
  }
  if (n == 0.0) return {};
  const double mean = sum / n, var = sq / n - mean * mean;
  return {mean, var > 1e-12 ? std::sqrt(var) : 1.0};
}

/// Writes the synthetic dataset and returns its in-memory form.
inline Dataset run_synth(const config::RunConfig& cfg, const fs::path& data_dir, const Log& log = {}) {
  auto ds = ingest::synth_dataset(cfg.synth);
  fs::create_directories(data_dir / "images");
  Dataset out;
  out.manifest = ds.manifest;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    write_pnm((data_dir / ds.manifest.records[i].path).string(), ds.images[i]);
    out.images.push_back(to_tensor(ds.images[i]));
  }
  ingest::write_manifest((data_dir / "manifest.json").string(), ds.manifest);
  std::ofstream csv(data_dir / "fixations.csv");
  ingest::write_fixation_csv(csv, ds.gaze);
  out.gaze = ds.gaze;
  auto counts = ds.manifest.class_counts();
  std::ostringstream msg;
  msg << "synth: " << ds.manifest.records.size() << " images, train counts";
  for (auto c : counts) msg << ' ' << c;
  say(log, msg.str());
  return out;
}

/// Reads the manifest, every image and the fixation file. Fixations are
/// clamped to their image bounds.
inline Dataset load_dataset(const fs::path& data_dir, const Log& log = {}) {
  Dataset d;
  d.manifest = ingest::read_manifest((data_dir / "manifest.json").string());
  for (const auto& r : d.manifest.records) {
    auto img = read_pnm((data_dir / r.path).string());
    if (img.height != r.height || img.width != r.width || img.channels != r.channels)
      throw DataError("image '" + r.id + "' does not match its manifest dimensions");
    d.images.push_back(to_tensor(img));
  }
  std::ifstream csv(data_dir / "fixations.csv");
  if (!csv) throw DataError("missing fixation file in '" + data_dir.string() + "'");
  std::map<std::string, const ingest::ImageRecord*> by_id;
  for (const auto& r : d.manifest.records) by_id[r.id] = &r;
  std::size_t clamped = 0;
  for (auto& seq : ingest::parse_fixation_csv(csv)) {
    auto it = by_id.find(seq.image_id);
    if (it == by_id.end()) throw DataError("fixations reference unknown image '" + seq.image_id + "'");
    auto [clean, report] = ingest::validate_sequence(std::move(seq), it->second->height, it->second->width);
    clamped += report.clamped;
    d.gaze.push_back(std::move(clean));
  }
  if (clamped) say(log, "ingest: clamped " + std::to_string(clamped) + " out-of-bounds fixations");
  return d;
}

/// Validation summary written by the `ingest` command.
inline json ingest_report(const Dataset& d, const ingest::GroupThresholds& th) {
  std::size_t train_with_gaze = 0, points = 0;
  std::map<std::string, bool> has_gaze;
  for (const auto& g : d.gaze) {
    has_gaze[g.image_id] = true;
    points += g.points.size();
  }
  std::vector<std::string> missing;
  for (const auto& r : d.manifest.records)
    if (r.split == ingest::Split::train) {
      if (has_gaze.count(r.id)) ++train_with_gaze;
      else missing.push_back(r.id);
    }
  json groups = json::array();
  for (auto g : d.manifest.grouping(th)) groups.push_back(ingest::to_string(g));
  return {{"n_images", d.manifest.records.size()},
          {"n_sequences", d.gaze.size()},
          {"n_fixations", points},
          {"train_with_gaze", train_with_gaze},
          {"train_missing_gaze", missing},
          {"class_counts", d.manifest.class_counts()},
          {"groups", groups}};
}

// ---------------------------------------------------------------------------
// HVA

using HvaStore = std::map<std::string, hva::HvaSet>;

inline HvaStore build_hva(const Dataset& d, std::size_t n_windows, const hva::IntegrationParams& params) {
  std::map<std::string, const ingest::ImageRecord*> by_id;
  for (const auto& r : d.manifest.records) by_id[r.id] = &r;
  HvaStore store;
  for (const auto& seq : d.gaze) {
    const auto* r = by_id.at(seq.image_id);
    if (r->split != ingest::Split::train) continue;
    if (store.count(seq.image_id)) continue;  // first reader wins
    store.emplace(seq.image_id, hva::compute_hva(seq, n_windows, params, r->height, r->width));
  }
  return store;
}

inline void write_hva_store(const HvaStore& store, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [id, set] : store) {
    std::ofstream fi(dir / (id + ".int.hva"), std::ios::binary), fd(dir / (id + ".dis.hva"), std::ios::binary);
    if (!fi || !fd) throw DataError("cannot write HVA files for '" + id + "'");
    hva::write_hva(fi, set.integration);
    hva::write_hva(fd, set.disintegration);
  }
}

/// Loads the HVA pair of every train image that has one on disk.
inline HvaStore read_hva_store(const Dataset& d, const fs::path& dir) {
  HvaStore store;
  for (const auto& r : d.manifest.records) {
    if (r.split != ingest::Split::train) continue;
    const auto pi = dir / (r.id + ".int.hva"), pd = dir / (r.id + ".dis.hva");
    if (!fs::exists(pi) || !fs::exists(pd)) continue;
    std::ifstream fi(pi, std::ios::binary), fd(pd, std::ios::binary);
    hva::HvaSet set;
    set.image_id = r.id;
    set.integration = hva::read_hva(fi);
    set.disintegration = hva::read_hva(fd);
    if (set.integration.variant != hva::Variant::integration || set.disintegration.variant != hva::Variant::disintegration)
      throw DataError("HVA files for '" + r.id + "' have swapped variants");
    store.emplace(r.id, std::move(set));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Teacher

inline teacher::TwBlockConfig teacher_config(const config::RunConfig& cfg, std::size_t n_windows,
                                             std::size_t in_channels) {
  auto tc = cfg.teacher;
  tc.n_subblocks = n_windows;
  tc.in_channels = in_channels;
  return tc;
}

struct TeacherRun {
  teacher::Teacher<Real> model;
  teacher::TeacherHistory history;
};

inline TeacherRun fit_teacher(const config::RunConfig& cfg, const Dataset& d, const HvaStore& store,
                              std::size_t n_windows, const Log& log = {}) {
  const auto train = d.indices(ingest::Split::train);
  if (train.empty()) throw DataError("no training images");
  auto tc = teacher_config(cfg, n_windows, d.images[train[0]].dim(0));
  const auto stats = input_stats(d);
  tc.input_mean = stats.mean;
  tc.input_std = stats.std;
  TeacherRun run{teacher::make_teacher<Real>(tc, cfg.seed), {}};
  std::vector<teacher::TeacherSample<Real>> samples;
  for (auto i : train) {
    const auto& id = d.manifest.records[i].id;
    auto it = store.find(id);
    samples.push_back({id, d.images[i], it == store.end() ? nullptr : &it->second});
  }
  auto tt = cfg.teacher_train;
  tt.twi.seed = cfg.seed;
  tt.twd.seed = cfg.seed + 1;
  run.history = teacher::train_teacher(run.model, samples, tt, [&](const char* branch, int epoch, double loss) {
    std::ostringstream msg;
    msg << "teacher " << branch << " epoch " << epoch + 1 << " loss " << loss;
    say(log, msg.str());
  });
  run.model.freeze();
  return run;
}

inline io::Checkpoint teacher_checkpoint(const config::RunConfig& cfg, const TeacherRun& run) {
  io::Checkpoint ck;
  ck.stage = "teacher";
  ck.config_hash = config::config_hash(cfg);
  ck.seed = cfg.seed;
  const auto& c = run.model.cfg;
  ck.extra = {{"in_channels", c.in_channels},
              {"n_subblocks", c.n_subblocks},
              {"base_channels", c.base_channels},
              {"distill_dim", c.distill_dim},
              {"input_mean", c.input_mean},
              {"input_std", c.input_std},
              {"history", {{"twi", run.history.twi}, {"twd", run.history.twd}}}};
  io::append_params(ck, run.model.twi);
  io::append_params(ck, run.model.twd);
  return ck;
}

inline teacher::Teacher<Real> teacher_from_checkpoint(const io::Checkpoint& ck) {
  io::require_stage(ck, "teacher");
  teacher::TwBlockConfig c;
  try {
    c.in_channels = ck.extra.at("in_channels").get<std::size_t>();
    c.n_subblocks = ck.extra.at("n_subblocks").get<std::size_t>();
    c.base_channels = ck.extra.at("base_channels").get<std::size_t>();
    c.distill_dim = ck.extra.at("distill_dim").get<std::size_t>();
    c.input_mean = ck.extra.at("input_mean").get<double>();
    c.input_std = ck.extra.at("input_std").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(0, std::string("teacher checkpoint metadata: ") + e.what());
  }
  auto t = teacher::make_teacher<Real>(c, 0);
  io::load_params(ck, t.twi, "twi.");
  io::load_params(ck, t.twd, "twd.");
  t.freeze();
  return t;
}

// ---------------------------------------------------------------------------
// Student

struct StudentRun {
  distill::Student<Real> model;
  distill::StudentHistory history;
  double lambda = 0;
};

inline StudentRun fit_student(const config::RunConfig& cfg, const Dataset& d, teacher::Teacher<Real>& teacher,
                              double lambda, std::uint64_t seed, const Log& log = {}) {
  const auto train = d.indices(ingest::Split::train);
  if (train.empty()) throw DataError("no training images");
  auto sc = cfg.student;
  sc.n_classes = d.manifest.class_names.size();
  sc.in_channels = d.images[train[0]].dim(0);
  const auto stats = input_stats(d);
  sc.input_mean = stats.mean;
  sc.input_std = stats.std;
  StudentRun run{distill::make_student<Real>(sc, seed), {}, lambda};
  std::vector<distill::StudentSample<Real>> samples;
  for (auto i : train) samples.push_back({d.manifest.records[i].id, d.images[i], d.manifest.records[i].label});
  auto st = cfg.student_train;
  st.fusion.lambda = lambda;
  st.train.seed = seed ^ 0x9e3779b97f4a7c15ULL;
  run.history = distill::train_student(run.model, teacher, samples, st, [&](int epoch, double loss) {
    std::ostringstream msg;
    msg << "student (lambda " << lambda << ", seed " << seed << ") epoch " << epoch + 1 << " loss " << loss;
    say(log, msg.str());
  });
  return run;
}

inline io::Checkpoint student_checkpoint(const config::RunConfig& cfg, const StudentRun& run, std::uint64_t seed) {
  io::Checkpoint ck;
  ck.stage = "student";
  ck.config_hash = config::config_hash(cfg);
  ck.seed = seed;
  const auto& c = run.model.cfg;
  ck.extra = {{"in_channels", c.in_channels},   {"n_stages", c.n_stages},       {"base_channels", c.base_channels},
              {"n_classes", c.n_classes},       {"distill_dim", c.distill_dim}, {"stem_stride", c.stem_stride},
              {"input_mean", c.input_mean},     {"input_std", c.input_std},
              {"lambda", run.lambda},           {"margins", run.history.margins.margins},
              {"history", run.history.loss}};
  io::append_params(ck, run.model.params);
  return ck;
}

inline distill::Student<Real> student_from_checkpoint(const io::Checkpoint& ck) {
  io::require_stage(ck, "student");
  distill::StudentConfig c;
  try {
    c.in_channels = ck.extra.at("in_channels").get<std::size_t>();
    c.n_stages = ck.extra.at("n_stages").get<std::size_t>();
    c.base_channels = ck.extra.at("base_channels").get<std::size_t>();
    c.n_classes = ck.extra.at("n_classes").get<std::size_t>();
    c.distill_dim = ck.extra.at("distill_dim").get<std::size_t>();
    c.stem_stride = ck.extra.at("stem_stride").get<std::size_t>();
    c.input_mean = ck.extra.at("input_mean").get<double>();
    c.input_std = ck.extra.at("input_std").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(0, std::string("student checkpoint metadata: ") + e.what());
  }
  auto s = distill::make_student<Real>(c, 0);
  io::load_params(ck, s.params, "");
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation

inline metrics::MetricsReport evaluate_student(const distill::Student<Real>& st, const Dataset& d, ingest::Split split,
                                               const ingest::GroupThresholds& th, std::uint64_t seed) {
  const auto idx = d.indices(split);
  if (idx.empty()) throw DataError(std::string("manifest has no '") + ingest::to_string(split) + "' split");
  if (st.cfg.n_classes != d.manifest.class_names.size())
    throw ConfigError("student has " + std::to_string(st.cfg.n_classes) + " classes but the manifest has " +
                      std::to_string(d.manifest.class_names.size()));
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> labels;
  for (auto i : idx) {
    auto z = distill::predict_logits(st, d.images[i]);
    // Softmax probabilities so one-vs-rest AUC compares calibrated scores.
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (auto& v : z) s += v = std::exp(v - m);
    for (auto& v : z) v /= s;
    scores.push_back(std::move(z));
    labels.push_back(d.manifest.records[i].label);
  }
  return metrics::evaluate_scores(scores, labels, st.cfg.n_classes, d.manifest.grouping(th), ingest::to_string(split),
                                  seed);
}

// ---------------------------------------------------------------------------
// Experiments

struct SweepRow {
  std::size_t n_windows = 0;
  metrics::MetricsReport balanced;
  double teacher_twi_final = 0;
  double teacher_twd_final = 0;
};

/// Full pipeline per window count; one teacher and one student each.
inline std::vector<SweepRow> sweep_windows(const config::RunConfig& cfg, const Dataset& d, const Log& log = {}) {
  std::vector<SweepRow> rows;
  for (auto n : cfg.sweep_windows) {
    say(log, "sweep: n_windows = " + std::to_string(n));
    auto store = build_hva(d, n, cfg.hva);
    auto t = fit_teacher(cfg, d, store, n, log);
    auto s = fit_student(cfg, d, t.model, cfg.student_train.fusion.lambda, cfg.seed, log);
    SweepRow row{n, evaluate_student(s.model, d, ingest::Split::balanced_test, cfg.groups, cfg.seed), 0, 0};
    if (!t.history.twi.empty()) row.teacher_twi_final = t.history.twi.back();
    if (!t.history.twd.empty()) row.teacher_twd_final = t.history.twd.back();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  char b[32];
  std::snprintf(b, sizeof b, "%.3f", *v);
  return b;
}

inline std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "| Windows | Head | Medium | Tail | Avg. Acc | bAcc | MCC | AUC | wF1 |\n"
     << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const auto& m = r.balanced;
    os << "| " << r.n_windows << " windows | " << fmt(m.head) << " | " << fmt(m.medium) << " | " << fmt(m.tail)
       << " | " << fmt(m.avg_acc) << " | " << fmt(m.balanced_acc) << " | " << fmt(m.mcc) << " | "
       << fmt(m.auc_macro_ovr) << " | " << fmt(m.weighted_f1) << " |\n";
  }
  return os.str();
}

inline json sweep_json(const std::vector<SweepRow>& rows) {
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"n_windows", r.n_windows},
                 {"teacher_twi_final_loss", r.teacher_twi_final},
                 {"teacher_twd_final_loss", r.teacher_twd_final},
                 {"balanced_test", metrics::to_json(r.balanced)}});
  return j;
}

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<metrics::MetricsReport> baseline;  // λ = 0
  std::vector<metrics::MetricsReport> distilled;  // λ = λ*
  std::vector<double> tail_baseline, tail_distilled;
  std::size_t wins = 0;
  std::optional<metrics::WelchResult> welch;
  std::string welch_note;
};

/// One teacher, then a λ = 0 and a λ = λ* student per seed, compared on the
/// tail-group accuracy of the balanced split.
inline AblationResult ablate_kd(const config::RunConfig& cfg, const Dataset& d, const Log& log = {}) {
  auto store = build_hva(d, cfg.n_windows, cfg.hva);
  auto t = fit_teacher(cfg, d, store, cfg.n_windows, log);
  AblationResult r;
  for (std::size_t k = 0; k < cfg.ablation_seeds; ++k) {
    const std::uint64_t seed = cfg.seed + 1000 * (k + 1);
    r.seeds.push_back(seed);
    for (double lambda : {0.0, cfg.ablation_lambda}) {
      auto s = fit_student(cfg, d, t.model, lambda, seed, log);
      auto rep = evaluate_student(s.model, d, ingest::Split::balanced_test, cfg.groups, seed);
      if (!rep.tail) throw DataError("balanced split has no tail-group samples");
      (lambda == 0 ? r.baseline : r.distilled).push_back(rep);
      (lambda == 0 ? r.tail_baseline : r.tail_distilled).push_back(*rep.tail);
      std::ostringstream msg;
      msg << "ablate-kd seed " << seed << " lambda " << lambda << " tail " << *rep.tail << " avg "
          << fmt(rep.avg_acc);
      say(log, msg.str());
    }
    if (r.tail_distilled.back() > r.tail_baseline.back()) ++r.wins;
  }
  try {
    r.welch = metrics::welch_t_test(r.tail_distilled, r.tail_baseline);
  } catch (const DegenerateInputError& e) {
    r.welch_note = e.what();
  }
  return r;
}

inline json ablation_json(const AblationResult& r, double lambda) {
  json runs = json::array();
  for (std::size_t k = 0; k < r.seeds.size(); ++k)
    runs.push_back({{"seed", r.seeds[k]},
                    {"tail_lambda0", r.tail_baseline[k]},
                    {"tail_lambda", r.tail_distilled[k]},
                    {"lambda0", metrics::to_json(r.baseline[k])},
                    {"lambda", metrics::to_json(r.distilled[k])}});
  json j{{"lambda", lambda}, {"runs", runs}, {"wins", r.wins}, {"n_seeds", r.seeds.size()}};
  if (r.welch) j["welch"] = {{"t", r.welch->t}, {"df", r.welch->df}, {"p", r.welch->p}};
  else j["welch"] = {{"error", r.welch_note}};
  return j;
}

// ---------------------------------------------------------------------------
// Gradient checks through the full forward graphs, double precision.

struct GradCheckEntry {
  std::string name;
  ad::GradCheckResult result;
};

/// Pass rule: max relative error below 1e-4, and at most 5% of the
/// coordinates skipped for kink crossings so a check cannot pass vacuously.
inline bool gradcheck_passes(const ad::GradCheckResult& r) {
  return r.max_rel_error < 1e-4 && r.kink_skipped * 20 <= r.coordinates;
}

inline std::vector<GradCheckEntry> run_gradchecks(std::uint64_t seed = 0) {
  using ad::Tensor;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0), bias(-0.2, 0.2);
  auto image = [&] {
    std::vector<double> v(32 * 32);
    for (auto& x : v) x = u01(rng);
    return Tensor<double>::from({1, 32, 32}, v);
  };
  auto vec = [&](std::size_t n, double lo) {
    std::vector<double> v(n);
    for (auto& x : v) x = lo + (1 - lo) * u01(rng);
    return Tensor<double>::from({n}, v);
  };
  auto jitter_biases = [&](ad::ParamSet<double>& ps) {
    for (auto& p : ps.params())
      if (p.name.back() == 'b')
        for (auto& v : p.tensor.mutable_data()) v = bias(rng);
  };
  std::vector<GradCheckEntry> out;

  teacher::TwBlockConfig tc{1, 2, 4, 8};
  auto t = teacher::make_teacher<double>(tc, seed + 1);
  jitter_biases(t.twi);
  jitter_biases(t.twd);
  auto timg = image();
  auto map = [&](std::size_t side) {
    return ad::reshape(vec(side * side, 0.05), {side, side});
  };
  std::vector<Tensor<double>> f_int{map(16), map(8)}, f_dis{map(16), map(8)};
  out.push_back({"tVAL-I", ad::grad_check([&] {
                   return teacher::i_tval_loss(teacher::twi_forward(t.twi, tc, timg).attn_maps, f_int);
                 }, t.twi)});
  out.push_back({"tVAL-D", ad::grad_check([&] {
                   return teacher::d_tval_loss(teacher::twd_forward(t.twd, tc, timg).attn_maps, f_dis);
                 }, t.twd)});

  distill::StudentConfig sc{1, 3, 2, 3, 4, 1};
  auto s = distill::make_student<double>(sc, seed + 2);
  jitter_biases(s.params);
  auto simg = image();
  // Spread-out teacher features give a peaked J, so BD sits well away from 0
  // where −ln(BC) would lose digits to cancellation.
  auto f_i = ad::scale(vec(4, -1.0), 4.0), f_d = ad::scale(vec(4, -1.0), 4.0);
  auto j = distill::fuse(f_i, f_d);
  auto margins = distill::margins_from_counts({40, 9, 2});
  // Steps that cross a relu kink are skipped inside grad_check; below 1e-4
  // round-off in f swamps the smallest gradients.
  const double eps = 1e-4;
  out.push_back({"BD", ad::grad_check([&] {
                   return distill::bd_loss(distill::student_forward(s.params, sc, simg).distill, j);
                 }, s.params, eps)});
  out.push_back({"LDAM", ad::grad_check([&] {
                   return distill::ldam_loss(distill::student_forward(s.params, sc, simg).logits, 2, margins);
                 }, s.params, eps)});
  out.push_back({"L_s", ad::grad_check([&] {
                   auto o = distill::student_forward(s.params, sc, simg);
                   return distill::student_loss(o.logits, 1, o.distill, f_i, f_d, margins, distill::FusionParams{});
                 }, s.params, eps)});
  return out;
}

}  // namespace gazelt::pipeline

#endif  // GAZELT_PIPELINE_HPP
