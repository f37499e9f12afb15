#ifndef GAZELT_HVA_HPP
#define GAZELT_HVA_HPP

// Time-windowed human visual attention (HVA) maps. A gaze sequence is split
// into n equal time windows; each window yields an integration map (main
// fixation cluster plus down-weighted substitute clusters, narrow Gaussian)
// and a disintegration map (raw fixations, wide Gaussian).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "gazelt/error.hpp"
#include "gazelt/gaze_ingest.hpp"

namespace gazelt::hva {

using ingest::FixationPoint;
using ingest::GazeSequence;

struct TimeWindowPartition {
  std::size_t n_windows = 0;
  std::vector<double> boundaries;  // n + 1 values, equal widths
  std::vector<std::vector<FixationPoint>> window_points;
};

/// Assigns each fixation to window ⌊onset·n/total⌋, capped at n−1.
inline TimeWindowPartition partition_fixations(const GazeSequence& seq, std::size_t n) {
  if (n == 0) throw ContractError("partition_fixations: n must be positive");
  if (!(seq.total_duration_ms > 0))
    throw DegenerateInputError("sequence '" + seq.image_id + "' has zero total duration");
  TimeWindowPartition p;
  p.n_windows = n;
  p.window_points.resize(n);
  const double total = seq.total_duration_ms;
  for (std::size_t i = 0; i <= n; ++i)
    p.boundaries.push_back(total * static_cast<double>(i) / static_cast<double>(n));
  p.boundaries.back() = total;
  for (const auto& pt : seq.points) {
    const double pos = std::floor(pt.onset_ms * static_cast<double>(n) / total);
    const std::size_t w = pos < 0 ? 0 : std::min(n - 1, static_cast<std::size_t>(pos));
    p.window_points[w].push_back(pt);
  }
  return p;
}

struct ClusterResult {
  std::vector<FixationPoint> main;
  std::vector<FixationPoint> substitutes;
};

namespace detail {

inline bool canonical_less(const FixationPoint& a, const FixationPoint& b) {
  return std::tie(a.onset_ms, a.x_px, a.y_px, a.duration_ms) <
         std::tie(b.onset_ms, b.x_px, b.y_px, b.duration_ms);
}

inline std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace detail

/// Single-linkage clusters (join when distance ≤ d_thr). The main region is
/// the cluster with the largest total dwell; ties go to the cluster holding
/// the earliest fixation. Output order is canonical (onset, x, y, duration),
/// so the result does not depend on input order.
inline ClusterResult cluster_integration(std::vector<FixationPoint> points, double d_thr) {
  if (!(d_thr > 0)) throw ContractError("cluster_integration: d_thr must be positive");
  ClusterResult r;
  if (points.empty()) return r;
  std::sort(points.begin(), points.end(), detail::canonical_less);
  const std::size_t n = points.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const double thr2 = d_thr * d_thr;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = points[i].x_px - points[j].x_px, dy = points[i].y_px - points[j].y_px;
      if (dx * dx + dy * dy <= thr2) {
        auto a = detail::find_root(parent, i), b = detail::find_root(parent, j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  // Roots are the smallest index of each cluster, i.e. its earliest point.
  std::vector<double> dwell(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) dwell[detail::find_root(parent, i)] += points[i].duration_ms;
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (detail::find_root(parent, i) == i && dwell[i] > dwell[best]) best = i;
  for (std::size_t i = 0; i < n; ++i)
    (detail::find_root(parent, i) == best ? r.main : r.substitutes).push_back(points[i]);
  return r;
}

struct IntegrationParams {
  double d_thr = 64.0;
  double alpha_sub = 0.5;
  double sigma_i = 64.0;
  double sigma_d = 128.0;
  double trunc_radius_sigmas = 4.0;
  /// Resolution factor between the working images and the native resolution
  /// the distances above refer to; d_thr and both sigmas are multiplied by it.
  double scale = 1.0;

  void validate() const {
    if (!(d_thr > 0) || !(sigma_i > 0) || !(sigma_d > 0) || !(trunc_radius_sigmas > 0) || !(scale > 0))
      throw ConfigError("HVA parameters must be positive");
    if (alpha_sub < 0 || alpha_sub > 1) throw ConfigError("alpha_sub must lie in [0, 1]");
  }
};

enum class Variant : std::uint8_t { integration = 0, disintegration = 1 };

struct AttentionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> grid;
  Variant variant = Variant::integration;
  std::size_t window_index = 0;
  bool normalized = false;

  double at(std::size_t y, std::size_t x) const { return grid[y * width + x]; }
};

/// Separable Gaussian smoothing, kernel radius ⌈trunc·σ⌉ renormalised to sum
/// 1 per axis, zero padding at the borders.
inline std::vector<double> gaussian_filter(const std::vector<double>& grid, std::size_t height,
                                           std::size_t width, double sigma, double trunc = 4.0) {
  if (!(sigma > 0)) throw ContractError("gaussian_filter: sigma must be positive");
  if (grid.size() != height * width) throw ShapeError("gaussian_filter: grid size does not match dims");
  const long r = static_cast<long>(std::ceil(trunc * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double ks = 0;
  for (long i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = v;
    ks += v;
  }
  for (auto& v : k) v /= ks;

  const long h = static_cast<long>(height), w = static_cast<long>(width);
  std::vector<double> tmp(grid.size(), 0.0), out(grid.size(), 0.0);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const double v = grid[static_cast<std::size_t>(y * w + x)];
      if (v == 0.0) continue;
      const long lo = std::max(-r, -x), hi = std::min(r, w - 1 - x);
      for (long d = lo; d <= hi; ++d) tmp[static_cast<std::size_t>(y * w + x + d)] += v * k[static_cast<std::size_t>(d + r)];
    }
  for (long y = 0; y < h; ++y) {
    const long lo = std::max(-r, -y), hi = std::min(r, h - 1 - y);
    for (long d = lo; d <= hi; ++d) {
      const double kv = k[static_cast<std::size_t>(d + r)];
      const double* src = tmp.data() + y * w;
      double* dst = out.data() + (y + d) * w;
      for (long x = 0; x < w; ++x) dst[x] += kv * src[x];
    }
  }
  return out;
}

namespace detail {

inline void deposit(std::vector<double>& grid, std::size_t height, std::size_t width, const FixationPoint& p,
                    double weight) {
  const long x = std::clamp<long>(std::lround(p.x_px), 0, static_cast<long>(width) - 1);
  const long y = std::clamp<long>(std::lround(p.y_px), 0, static_cast<long>(height) - 1);
  grid[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] += weight;
}

}  // namespace detail

/// Renders one window's map, peak-normalised to 1. An empty window renders
/// as the all-ones map.
inline AttentionMap render_map(const std::vector<FixationPoint>& window_points, Variant variant,
                               const IntegrationParams& params, std::size_t height, std::size_t width,
                               std::size_t window_index = 0) {
  if (height == 0 || width == 0) throw ContractError("render_map: dims must be positive");
  AttentionMap m{height, width, std::vector<double>(height * width, 0.0), variant, window_index, true};
  if (window_points.empty()) {
    std::fill(m.grid.begin(), m.grid.end(), 1.0);
    return m;
  }
  double sigma = 0;
  if (variant == Variant::integration) {
    auto clusters = cluster_integration(window_points, params.d_thr * params.scale);
    for (const auto& p : clusters.main) detail::deposit(m.grid, height, width, p, p.duration_ms);
    for (const auto& p : clusters.substitutes)
      detail::deposit(m.grid, height, width, p, params.alpha_sub * p.duration_ms);
    sigma = params.sigma_i * params.scale;
  } else {
    for (const auto& p : window_points) detail::deposit(m.grid, height, width, p, p.duration_ms);
    sigma = params.sigma_d * params.scale;
  }
  m.grid = gaussian_filter(m.grid, height, width, sigma, params.trunc_radius_sigmas);
  const double peak = *std::max_element(m.grid.begin(), m.grid.end());
  if (peak > 0) {
    for (auto& v : m.grid) v /= peak;
  } else {
    std::fill(m.grid.begin(), m.grid.end(), 1.0);
  }
  return m;
}

/// Bilinear resize with corner-aligned sampling.
inline AttentionMap resize_map(const AttentionMap& map, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ContractError("resize_map: target dims must be positive");
  AttentionMap out = map;
  out.height = h;
  out.width = w;
  if (h == map.height && w == map.width) return out;
  out.grid.assign(h * w, 0.0);
  const double sy = h > 1 ? static_cast<double>(map.height - 1) / static_cast<double>(h - 1) : 0.0;
  const double sx = w > 1 ? static_cast<double>(map.width - 1) / static_cast<double>(w - 1) : 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) * sy;
    const std::size_t y0 = std::min(static_cast<std::size_t>(std::floor(fy)), map.height - 1);
    const std::size_t y1 = std::min(y0 + 1, map.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) * sx;
      const std::size_t x0 = std::min(static_cast<std::size_t>(std::floor(fx)), map.width - 1);
      const std::size_t x1 = std::min(x0 + 1, map.width - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = map.at(y0, x0) * (1 - tx) + map.at(y0, x1) * tx;
      const double bot = map.at(y1, x0) * (1 - tx) + map.at(y1, x1) * tx;
      out.grid[y * w + x] = std::max(0.0, top * (1 - ty) + bot * ty);
    }
  }
  return out;
}

/// All maps of one variant for one image, stored as float32.
struct HvaStack {
  Variant variant = Variant::integration;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<float>> grids;

  std::size_t n_windows() const { return grids.size(); }
  AttentionMap map(std::size_t t) const {
    AttentionMap m{height, width, std::vector<double>(grids.at(t).begin(), grids.at(t).end()), variant, t, true};
    return m;
  }
  friend bool operator==(const HvaStack&, const HvaStack&) = default;
};

struct HvaSet {
  std::string image_id;
  HvaStack integration;
  HvaStack disintegration;

  std::size_t n_windows() const { return integration.n_windows(); }
};

/// Full pipeline for one gaze sequence: partition, then render both variants
/// per window at the given image resolution.
inline HvaSet compute_hva(const GazeSequence& seq, std::size_t n_windows, const IntegrationParams& params,
                          std::size_t height, std::size_t width) {
  params.validate();
  auto part = partition_fixations(seq, n_windows);
  HvaSet set;
  set.image_id = seq.image_id;
  for (auto v : {Variant::integration, Variant::disintegration}) {
    HvaStack& st = v == Variant::integration ? set.integration : set.disintegration;
    st.variant = v;
    st.height = height;
    st.width = width;
    for (std::size_t t = 0; t < n_windows; ++t) {
      auto m = render_map(part.window_points[t], v, params, height, width, t);
      st.grids.emplace_back(m.grid.begin(), m.grid.end());
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Binary format, little-endian:
//   "HVA1" | u32 version=1 | u32 width | u32 height | u32 n_windows |
//   u8 variant | n_windows × (height × width) float32 row-major

inline constexpr std::array<char, 4> kHvaMagic{'H', 'V', 'A', '1'};
inline constexpr std::uint32_t kHvaVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(os, bits);
}

/// Byte reader that tracks the offset for error messages.
class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  std::size_t offset() const { return off_; }

  void read(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) throw FormatError(off_ + got, std::string("truncated ") + what);
    off_ += n;
  }
  std::uint8_t u8(const char* what) {
    char c;
    read(&c, 1, what);
    return static_cast<std::uint8_t>(c);
  }
  std::uint16_t u16(const char* what) {
    unsigned char b[2];
    read(reinterpret_cast<char*>(b), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    const std::uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
  std::size_t off_ = 0;
};

}  // namespace detail

inline void write_hva(std::ostream& os, const HvaStack& st) {
  for (const auto& g : st.grids)
    if (g.size() != st.height * st.width) throw ValidationError("HVA grid size does not match dims");
  os.write(kHvaMagic.data(), 4);
  detail::put_u32(os, kHvaVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(st.width));
  detail::put_u32(os, static_cast<std::uint32_t>(st.height));
  detail::put_u32(os, static_cast<std::uint32_t>(st.grids.size()));
  const char v = static_cast<char>(st.variant);
  os.write(&v, 1);
  for (const auto& g : st.grids)
    for (float f : g) detail::put_f32(os, f);
}

inline HvaStack read_hva(std::istream& is) {
  detail::Reader r(is);
  std::array<char, 4> magic{};
  r.read(magic.data(), 4, "magic");
  if (magic != kHvaMagic) throw FormatError(0, "bad HVA magic");
  const auto version = r.u32("version");
  if (version != kHvaVersion)
    throw FormatError(4, "unsupported HVA version " + std::to_string(version));
  HvaStack st;
  st.width = r.u32("width");
  st.height = r.u32("height");
  const auto n = r.u32("n_windows");
  const auto v = r.u8("variant");
  if (v > 1) throw FormatError(20, "bad HVA variant " + std::to_string(v));
  st.variant = static_cast<Variant>(v);
  st.grids.assign(n, std::vector<float>(st.width * st.height));
  for (auto& g : st.grids)
    for (auto& f : g) f = r.f32("payload");
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after HVA payload");
  return st;
}

}  // namespace gazelt::hva

#endif  // GAZELT_HVA_HPP
