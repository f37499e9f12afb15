#ifndef GAZELT_GAZE_INGEST_HPP
#define GAZELT_GAZE_INGEST_HPP

// Fixation logs, dataset manifests, head/medium/tail grouping and the
// synthetic long-tailed dataset generator used for desk-scale experiments.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gazelt/error.hpp"
#include "gazelt/image.hpp"

namespace gazelt::ingest {

struct FixationPoint {
  double x_px = 0;
  double y_px = 0;
  double onset_ms = 0;
  double duration_ms = 0;

  friend bool operator==(const FixationPoint&, const FixationPoint&) = default;
};

struct GazeSequence {
  std::string image_id;
  std::string reader;  // empty when the log has no reader column
  std::vector<FixationPoint> points;
  double total_duration_ms = 0;

  friend bool operator==(const GazeSequence&, const GazeSequence&) = default;
};

inline constexpr std::string_view kFixationHeader = "image_id,x_px,y_px,onset_ms,duration_ms";

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_number(std::string_view field, std::size_t line, const char* column) {
  double v = 0;
  auto first = field.data(), last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || field.empty() || !std::isfinite(v))
    throw ParseError(line, std::string("non-numeric ") + column + " '" + std::string(field) + "'");
  return v;
}

}  // namespace detail

/// Parses a fixation log. One sequence per (image_id, reader) key, sorted by
/// key; points within a sequence are stably sorted by onset.
inline std::vector<GazeSequence> parse_fixation_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_reader = false;
  if (line == std::string(kFixationHeader) + ",reader")
    with_reader = true;
  else if (line != kFixationHeader)
    throw ParseError(1, "unexpected header '" + line + "', expected '" + std::string(kFixationHeader) + "'");
  const std::size_t arity = with_reader ? 6 : 5;

  std::map<std::pair<std::string, std::string>, GazeSequence> groups;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_commas(line);
    if (fields.size() != arity)
      throw ParseError(lineno, "expected " + std::to_string(arity) + " fields, got " +
                                   std::to_string(fields.size()));
    if (fields[0].empty()) throw ParseError(lineno, "empty image_id");
    FixationPoint p;
    p.x_px = detail::parse_number(fields[1], lineno, "x_px");
    p.y_px = detail::parse_number(fields[2], lineno, "y_px");
    p.onset_ms = detail::parse_number(fields[3], lineno, "onset_ms");
    p.duration_ms = detail::parse_number(fields[4], lineno, "duration_ms");
    if (p.duration_ms <= 0)
      throw ValidationError("line " + std::to_string(lineno) + ": duration_ms must be positive, got " +
                            std::string(fields[4]));
    if (p.onset_ms < 0)
      throw ValidationError("line " + std::to_string(lineno) + ": onset_ms must be nonnegative");
    std::string reader = with_reader ? std::string(fields[5]) : std::string();
    auto& seq = groups[{std::string(fields[0]), reader}];
    seq.image_id = std::string(fields[0]);
    seq.reader = reader;
    seq.points.push_back(p);
  }
  std::vector<GazeSequence> out;
  out.reserve(groups.size());
  for (auto& [key, seq] : groups) {
    std::stable_sort(seq.points.begin(), seq.points.end(),
                     [](const FixationPoint& a, const FixationPoint& b) { return a.onset_ms < b.onset_ms; });
    for (const auto& p : seq.points) seq.total_duration_ms = std::max(seq.total_duration_ms, p.onset_ms + p.duration_ms);
    out.push_back(std::move(seq));
  }
  return out;
}

inline std::vector<GazeSequence> parse_fixation_csv(const std::string& text) {
  std::istringstream is(text);
  return parse_fixation_csv(is);
}

/// Writes sequences back in the log format with round-trip precision. The
/// reader column is emitted when any sequence carries a reader.
inline void write_fixation_csv(std::ostream& os, const std::vector<GazeSequence>& seqs) {
  const bool with_reader = std::any_of(seqs.begin(), seqs.end(), [](const auto& s) { return !s.reader.empty(); });
  os << kFixationHeader << (with_reader ? ",reader" : "") << '\n';
  char buf[64];
  auto num = [&buf](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  };
  for (const auto& s : seqs)
    for (const auto& p : s.points) {
      os << s.image_id << ',' << num(p.x_px) << ',' << num(p.y_px) << ',' << num(p.onset_ms) << ','
         << num(p.duration_ms);
      if (with_reader) os << ',' << s.reader;
      os << '\n';
    }
}

/// First sequence for `image_id` (the default when several readers exist).
inline const GazeSequence* find_sequence(const std::vector<GazeSequence>& seqs, const std::string& image_id) {
  for (const auto& s : seqs)
    if (s.image_id == image_id) return &s;
  return nullptr;
}

struct ClampReport {
  std::size_t clamped = 0;
};

/// Clamps out-of-bounds fixations to the nearest in-bounds pixel.
inline std::pair<GazeSequence, ClampReport> validate_sequence(GazeSequence seq, std::size_t height,
                                                              std::size_t width) {
  if (height == 0 || width == 0) throw ValidationError("image dims must be positive");
  ClampReport report;
  const double xmax = static_cast<double>(width - 1), ymax = static_cast<double>(height - 1);
  for (auto& p : seq.points) {
    bool moved = false;
    if (p.x_px < 0) { p.x_px = 0; moved = true; }
    if (p.x_px >= static_cast<double>(width)) { p.x_px = xmax; moved = true; }
    if (p.y_px < 0) { p.y_px = 0; moved = true; }
    if (p.y_px >= static_cast<double>(height)) { p.y_px = ymax; moved = true; }
    if (moved) ++report.clamped;
  }
  return {std::move(seq), report};
}

// ---------------------------------------------------------------------------
// Class grouping

enum class ClassGroup { head, medium, tail };

inline const char* to_string(ClassGroup g) {
  switch (g) {
    case ClassGroup::head: return "head";
    case ClassGroup::medium: return "medium";
    case ClassGroup::tail: return "tail";
  }
  return "?";
}

inline ClassGroup group_from_string(const std::string& s) {
  if (s == "head") return ClassGroup::head;
  if (s == "medium") return ClassGroup::medium;
  if (s == "tail") return ClassGroup::tail;
  throw ValidationError("unknown class group '" + s + "'");
}

/// head ⇔ count > head_above; tail ⇔ count < tail_below; medium otherwise.
struct GroupThresholds {
  std::size_t head_above = 1000;
  std::size_t tail_below = 100;
};

using ClassGrouping = std::vector<ClassGroup>;

inline ClassGrouping group_classes(const std::vector<std::size_t>& counts, GroupThresholds th = {}) {
  if (counts.empty()) throw ValidationError("group_classes: no classes");
  ClassGrouping g;
  g.reserve(counts.size());
  for (auto c : counts)
    g.push_back(c > th.head_above ? ClassGroup::head : c < th.tail_below ? ClassGroup::tail : ClassGroup::medium);
  return g;
}

// ---------------------------------------------------------------------------
// Manifest

enum class Split { train, balanced_test, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::balanced_test: return "balanced_test";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "balanced_test") return Split::balanced_test;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "'");
}

struct ImageRecord {
  std::string id;
  std::string path;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t label = 0;
  Split split = Split::train;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ImageRecord> records;
  /// Explicit grouping; when absent it is derived from train counts.
  std::optional<ClassGrouping> groups;

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> c(class_names.size(), 0);
    for (const auto& r : records)
      if (r.split == Split::train) ++c.at(r.label);
    return c;
  }

  ClassGrouping grouping(GroupThresholds th = {}) const {
    return groups ? *groups : group_classes(class_counts(), th);
  }

  std::vector<const ImageRecord*> split(Split s) const {
    std::vector<const ImageRecord*> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(&r);
    return out;
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline void validate_manifest(const DatasetManifest& m) {
  if (m.class_names.empty()) throw ValidationError("manifest has no classes");
  for (const auto& r : m.records) {
    if (r.label >= m.class_names.size())
      throw ValidationError("record '" + r.id + "' has label " + std::to_string(r.label) + " but only " +
                            std::to_string(m.class_names.size()) + " classes exist");
    if (r.height == 0 || r.width == 0 || r.channels == 0)
      throw ValidationError("record '" + r.id + "' has nonpositive dims");
  }
  if (m.groups && m.groups->size() != m.class_names.size())
    throw ValidationError("manifest groups cover " + std::to_string(m.groups->size()) + " of " +
                          std::to_string(m.class_names.size()) + " classes");
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["class_names"] = m.class_names;
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : m.records)
    recs.push_back({{"id", r.id}, {"path", r.path}, {"label", r.label}, {"split", to_string(r.split)},
                    {"height", r.height}, {"width", r.width}, {"channels", r.channels}});
  if (m.groups) {
    auto& g = j["groups"] = nlohmann::json::array();
    for (auto x : *m.groups) g.push_back(to_string(x));
  }
  j["class_counts"] = m.class_counts();
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& r : j.at("records")) {
      ImageRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.path = r.at("path").get<std::string>();
      rec.label = r.at("label").get<std::size_t>();
      rec.split = split_from_string(r.at("split").get<std::string>());
      rec.height = r.at("height").get<std::size_t>();
      rec.width = r.at("width").get<std::size_t>();
      rec.channels = r.at("channels").get<std::size_t>();
      m.records.push_back(std::move(rec));
    }
    if (j.contains("groups")) {
      ClassGrouping g;
      for (const auto& s : j.at("groups")) g.push_back(group_from_string(s.get<std::string>()));
      m.groups = std::move(g);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest schema violation: ") + e.what());
  }
  validate_manifest(m);
  return m;
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  return manifest_from_json(j);
}

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << manifest_to_json(m).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic long-tailed dataset

struct SynthConfig {
  std::size_t n_head = 3;
  std::size_t n_medium = 3;
  std::size_t n_tail = 2;
  double imbalance_factor = 100.0;
  std::size_t image_size = 64;
  std::size_t n_train = 2000;
  std::size_t n_balanced_per_class = 50;
  std::size_t n_test = 500;
  /// Probability that a non-head image also shows a head-class finding.
  double cooccur_prob = 0.6;
  std::uint64_t seed = 0;

  std::size_t n_classes() const { return n_head + n_medium + n_tail; }
};

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<GazeSequence> gaze;  // one per train record
  std::vector<Image> images;       // parallel to manifest.records
  /// Patch centre per class, (x, y) in pixels.
  std::vector<std::pair<double, double>> class_centres;
};

/// Largest-remainder apportionment of `total` over an exponential profile
/// whose first/last weight ratio is `factor`. Every class gets at least one.
inline std::vector<std::size_t> long_tailed_counts(std::size_t total, std::size_t k, double factor) {
  if (k == 0) throw ConfigError("no classes");
  if (factor < 1.0) throw ConfigError("imbalance_factor must be >= 1");
  if (total < k) throw ConfigError("fewer samples than classes");
  std::vector<double> w(k);
  for (std::size_t c = 0; c < k; ++c)
    w[c] = k == 1 ? 1.0 : std::pow(factor, -static_cast<double>(c) / static_cast<double>(k - 1));
  double ws = 0;
  for (double x : w) ws += x;
  std::vector<std::size_t> n(k);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double ideal = static_cast<double>(total) * w[c] / ws;
    n[c] = static_cast<std::size_t>(std::floor(ideal));
    assigned += n[c];
    rem.emplace_back(ideal - std::floor(ideal), c);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++n[rem[i % k].second];
  for (auto& c : n) c = std::max<std::size_t>(c, 1);
  return n;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct SynthContext {
  const SynthConfig& cfg;
  std::size_t patch;  // patch side in pixels
  std::vector<std::pair<double, double>> centres;
  std::vector<ClassGroup> groups;
};

/// Class-specific finding at the class location. The appearance is
/// rotation-invariant and coded by the class index bits: size (bit 0),
/// polarity (bit 1), solid disc or ring (bit 2), outer halo (bit 3).
inline void draw_finding(Image& img, const SynthContext& ctx, std::size_t cls, double jx, double jy) {
  const double cx = ctx.centres[cls].first + jx, cy = ctx.centres[cls].second + jy;
  const double patch = static_cast<double>(ctx.patch);
  const double radius = patch * ((cls & 1) ? 0.75 : 0.4);
  const double amp = (cls & 2) ? -0.22 : 0.45;
  const bool ring = cls & 4, halo = cls & 8;
  const double width = std::max(1.2, 0.3 * radius);
  const long r = static_cast<long>(std::ceil(radius * (halo ? 1.8 : 1.0) + 3.0 * width));
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx) {
      const long x = std::lround(cx) + dx, y = std::lround(cy) + dy;
      if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) continue;
      const double u = static_cast<double>(x) - cx, v = static_cast<double>(y) - cy;
      const double rho = std::sqrt(u * u + v * v);
      double shape = ring ? std::exp(-0.5 * (rho - radius) * (rho - radius) / (width * width))
                          : std::exp(-0.5 * rho * rho / (0.6 * radius * 0.6 * radius));
      if (halo) shape += 0.6 * std::exp(-0.5 * (rho - 1.8 * radius) * (rho - 1.8 * radius) / (width * width));
      for (std::size_t c = 0; c < img.channels; ++c)
        img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += static_cast<float>(amp * shape);
    }
}

struct Findings {
  std::size_t label;
  std::optional<std::size_t> cooccur;  // head-class finding shown alongside
  double jx[2], jy[2];
};

inline Image render_image(const SynthContext& ctx, const Findings& f, std::mt19937_64& rng) {
  const std::size_t s = ctx.cfg.image_size;
  Image img{1, s, s, std::vector<float>(s * s)};
  std::normal_distribution<double> noise(0.0, 0.08);
  const double shade = std::uniform_real_distribution<double>(-0.05, 0.05)(rng);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double yy = static_cast<double>(y) / static_cast<double>(s);
      img.at(0, y, x) = static_cast<float>(0.25 + shade + 0.1 * yy + noise(rng));
    }
  draw_finding(img, ctx, f.label, f.jx[0], f.jy[0]);
  if (f.cooccur) draw_finding(img, ctx, *f.cooccur, f.jx[1], f.jy[1]);
  for (auto& p : img.pixels) p = std::clamp(p, 0.0f, 1.0f);
  // quantise exactly as the 8-bit image files store it
  for (auto& p : img.pixels) p = static_cast<float>(std::lround(p * 255.0f)) / 255.0f;
  return img;
}

/// Early fixations visit the most common finding present, late fixations the
/// rarest; a fraction of fixations survey the whole image.
inline GazeSequence simulate_gaze(const SynthContext& ctx, const std::string& id, const Findings& f,
                                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> dwell(150.0, 600.0);
  std::uniform_real_distribution<double> saccade(20.0, 80.0);
  const double target_total = std::uniform_real_distribution<double>(8000.0, 16000.0)(rng);
  GazeSequence seq;
  seq.image_id = id;
  double t = std::uniform_real_distribution<double>(0.0, 200.0)(rng);
  while (t < target_total) {
    FixationPoint p;
    p.onset_ms = t;
    p.duration_ms = dwell(rng);
    seq.points.push_back(p);
    t += p.duration_ms + saccade(rng);
  }
  for (const auto& p : seq.points) seq.total_duration_ms = std::max(seq.total_duration_ms, p.onset_ms + p.duration_ms);

  // The label is always the rarer finding when a head-class finding co-occurs.
  const std::size_t late_cls = f.label;
  const std::size_t early_cls = f.cooccur ? *f.cooccur : f.label;
  const bool late_only = !f.cooccur && ctx.groups[f.label] != ClassGroup::head;
  const double size = static_cast<double>(ctx.cfg.image_size);
  std::normal_distribution<double> jitter(0.0, 0.6 * static_cast<double>(ctx.patch));
  for (auto& p : seq.points) {
    const bool early = p.onset_ms < seq.total_duration_ms / 2.0;
    if (u01(rng) < 0.15 || (early && late_only)) {
      p.x_px = u01(rng) * size;
      p.y_px = u01(rng) * size;
      continue;
    }
    const std::size_t cls = early ? early_cls : late_cls;
    const int slot = (early && f.cooccur) ? 1 : 0;
    p.x_px = ctx.centres[cls].first + f.jx[slot] + jitter(rng);
    p.y_px = ctx.centres[cls].second + f.jy[slot] + jitter(rng);
  }
  return seq;
}

}  // namespace detail

/// Builds a long-tailed dataset in memory. Deterministic given `cfg.seed`.
inline SynthDataset synth_dataset(const SynthConfig& cfg) {
  const std::size_t k = cfg.n_classes();
  if (k < 2) throw ConfigError("synthetic dataset needs at least two classes");
  if (cfg.imbalance_factor < 1.0) throw ConfigError("imbalance_factor must be >= 1");
  if (cfg.image_size < 32) throw ConfigError("image_size must be >= 32");
  if (cfg.n_head == 0) throw ConfigError("synthetic dataset needs at least one head class");
  if (cfg.cooccur_prob < 0.0 || cfg.cooccur_prob > 1.0) throw ConfigError("cooccur_prob must lie in [0, 1]");

  // Class locations on a 4×4 grid of cells, assigned by a seeded shuffle.
  const std::size_t grid = 4;
  if (k > grid * grid)
    throw ConfigError("cannot place " + std::to_string(k) + " class patches; at most " +
                      std::to_string(grid * grid) + " fit");
  const double cell = static_cast<double>(cfg.image_size) / static_cast<double>(grid);
  std::mt19937_64 layout_rng(detail::splitmix64(cfg.seed ^ 0x5a17ULL));
  std::vector<std::size_t> cells(grid * grid);
  std::iota(cells.begin(), cells.end(), 0);
  std::shuffle(cells.begin(), cells.end(), layout_rng);

  SynthDataset out;
  detail::SynthContext ctx{cfg, std::max<std::size_t>(6, cfg.image_size / 8), {}, {}};
  for (std::size_t c = 0; c < k; ++c) {
    const double cx = (static_cast<double>(cells[c] % grid) + 0.5) * cell;
    const double cy = (static_cast<double>(cells[c] / grid) + 0.5) * cell;
    ctx.centres.emplace_back(cx, cy);
  }
  for (std::size_t c = 0; c < k; ++c)
    ctx.groups.push_back(c < cfg.n_head ? ClassGroup::head
                         : c < cfg.n_head + cfg.n_medium ? ClassGroup::medium
                                                         : ClassGroup::tail);
  out.class_centres = ctx.centres;

  auto& m = out.manifest;
  for (std::size_t c = 0; c < k; ++c) {
    const char* g = to_string(ctx.groups[c]);
    m.class_names.push_back(std::string(g) + "_" + std::to_string(c));
  }
  m.groups = ctx.groups;

  const auto train_counts = long_tailed_counts(cfg.n_train, k, cfg.imbalance_factor);
  const auto test_counts = long_tailed_counts(std::max(cfg.n_test, k), k, cfg.imbalance_factor);
  struct Planned { std::size_t label; Split split; };
  std::vector<Planned> plan;
  auto push_counts = [&](const std::vector<std::size_t>& counts, Split s) {
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t i = 0; i < counts[c]; ++i) plan.push_back({c, s});
  };
  push_counts(train_counts, Split::train);
  push_counts(std::vector<std::size_t>(k, cfg.n_balanced_per_class), Split::balanced_test);
  if (cfg.n_test > 0) push_counts(test_counts, Split::test);

  const double jmax = cell / 8.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    std::mt19937_64 rng(detail::splitmix64(cfg.seed * 0x100000001b3ULL + i));
    std::uniform_real_distribution<double> jit(-jmax, jmax);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    detail::Findings f{plan[i].label, std::nullopt, {jit(rng), jit(rng)}, {jit(rng), jit(rng)}};
    if (ctx.groups[f.label] != ClassGroup::head && u01(rng) < cfg.cooccur_prob)
      f.cooccur = static_cast<std::size_t>(u01(rng) * static_cast<double>(cfg.n_head)) % cfg.n_head;

    char id[32];
    std::snprintf(id, sizeof id, "img_%05zu", i);
    ImageRecord rec{id, std::string("images/") + id + ".pgm", cfg.image_size, cfg.image_size, 1,
                    plan[i].label, plan[i].split};
    out.images.push_back(detail::render_image(ctx, f, rng));
    if (rec.split == Split::train) out.gaze.push_back(detail::simulate_gaze(ctx, id, f, rng));
    m.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace gazelt::ingest

#endif  // GAZELT_GAZE_INGEST_HPP
