#pragma once

// Boundary extraction from segmented OCT label volumes.
//
// A volume is a stack of B-scans; each B-scan is a (depth x A-scan) grid of
// tissue labels. For every requested layer the anterior and posterior
// boundary pixels are found per B-scan, converted to millimetres and pooled
// into one labeled cloud, which is then farthest-point downsampled.

#include <algorithm>
#include <array>
#include <bit>
#include <iterator>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include "onh/error.hpp"
#include "onh/log.hpp"
#include "onh/pointcloud.hpp"

namespace onh {

inline constexpr std::uint8_t kBackground = 255;

struct VoxelSpacing {
  double between_bscans_um = 35.1;
  double lateral_um = 11.5;
  double axial_um = 3.87;
};

// One B-scan: rows are depth (anterior first), columns are A-scans.
class LabelGrid {
 public:
  LabelGrid() = default;
  LabelGrid(std::size_t rows, std::size_t cols, std::uint8_t fill = kBackground)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> data_;
};

// Label volume indexed (bscan, ascan, depth); storage is row-major in that
// order, so every A-scan is contiguous.
class SegmentedVolume {
 public:
  SegmentedVolume() = default;
  SegmentedVolume(std::size_t n_bscans, std::size_t n_ascans, std::size_t depth_px,
                  VoxelSpacing spacing = {})
      : n_bscans_(n_bscans),
        n_ascans_(n_ascans),
        depth_px_(depth_px),
        spacing_(spacing),
        labels_(n_bscans * n_ascans * depth_px, kBackground) {
    validate_spacing();
  }

  std::size_t n_bscans() const { return n_bscans_; }
  std::size_t n_ascans() const { return n_ascans_; }
  std::size_t depth_px() const { return depth_px_; }
  const VoxelSpacing& spacing() const { return spacing_; }

  std::uint8_t& at(std::size_t b, std::size_t a, std::size_t d) {
    return labels_[(b * n_ascans_ + a) * depth_px_ + d];
  }
  std::uint8_t at(std::size_t b, std::size_t a, std::size_t d) const {
    return labels_[(b * n_ascans_ + a) * depth_px_ + d];
  }

  std::vector<std::uint8_t>& raw() { return labels_; }
  const std::vector<std::uint8_t>& raw() const { return labels_; }

  LabelGrid bscan(std::size_t b) const {
    LabelGrid g(depth_px_, n_ascans_);
    for (std::size_t a = 0; a < n_ascans_; ++a) {
      for (std::size_t d = 0; d < depth_px_; ++d) g.at(d, a) = at(b, a, d);
    }
    return g;
  }

  void validate() const {
    validate_spacing();
    if (labels_.size() != n_bscans_ * n_ascans_ * depth_px_) {
      throw ValidationError("volume: label count does not match dimensions");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] != kBackground && labels_[i] >= kLayerCount) {
        throw ValidationError("volume: invalid label " + std::to_string(labels_[i]) +
                              " at voxel " + std::to_string(i));
      }
    }
  }

  // Millimetre coordinates of voxel (b, a, d); origin at voxel (0, 0, 0).
  Vec3 to_mm(double b, double a, double d) const {
    return {a * spacing_.lateral_um / 1000.0, b * spacing_.between_bscans_um / 1000.0,
            d * spacing_.axial_um / 1000.0};
  }

 private:
  void validate_spacing() const {
    if (!(spacing_.between_bscans_um > 0) || !(spacing_.lateral_um > 0) || !(spacing_.axial_um > 0)) {
      throw ValidationError("volume: spacing must be strictly positive");
    }
  }

  std::size_t n_bscans_ = 0;
  std::size_t n_ascans_ = 0;
  std::size_t depth_px_ = 0;
  VoxelSpacing spacing_;
  std::vector<std::uint8_t> labels_;
};

// --- SEGV1 binary format -----------------------------------------------
// "SEGV1", dims u32 x3 (bscans, ascans, depth), spacings f64 x3 in um
// (between B-scans, lateral, axial), then the label bytes. Little endian.

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > in.size()) throw ValidationError(path + ": truncated file");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_segv(const std::string& path, const SegmentedVolume& vol) {
  vol.validate();
  std::string out = "SEGV1";
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(vol.n_bscans()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(vol.n_ascans()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(vol.depth_px()));
  detail::put_le<double>(out, vol.spacing().between_bscans_um);
  detail::put_le<double>(out, vol.spacing().lateral_um);
  detail::put_le<double>(out, vol.spacing().axial_um);
  out.append(reinterpret_cast<const char*>(vol.raw().data()), vol.raw().size());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(path, "write failed");
}

inline SegmentedVolume read_segv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open for reading");
  std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 5 || in.compare(0, 5, "SEGV1") != 0) throw ValidationError(path + ": missing SEGV1 header");
  std::size_t pos = 5;
  const auto nb = detail::get_le<std::uint32_t>(in, pos, path);
  const auto na = detail::get_le<std::uint32_t>(in, pos, path);
  const auto nd = detail::get_le<std::uint32_t>(in, pos, path);
  VoxelSpacing sp;
  sp.between_bscans_um = detail::get_le<double>(in, pos, path);
  sp.lateral_um = detail::get_le<double>(in, pos, path);
  sp.axial_um = detail::get_le<double>(in, pos, path);
  const std::size_t count = std::size_t{nb} * na * nd;
  if (in.size() - pos != count) {
    throw ValidationError(path + ": expected " + std::to_string(count) + " label bytes, found " +
                          std::to_string(in.size() - pos));
  }
  SegmentedVolume vol(nb, na, nd, sp);
  std::memcpy(vol.raw().data(), in.data() + pos, count);
  vol.validate();
  return vol;
}

// --- boundary detection ----------------------------------------------------

struct EdgePixel {
  std::size_t row = 0;  // depth index
  std::size_t col = 0;  // A-scan index
  BoundarySide side = BoundarySide::Anterior;

  auto operator<=>(const EdgePixel&) const = default;
};

enum class EdgeMethod {
  Morphological,  // mask minus its 4-connected erosion
  Canny,          // Gaussian sigma 1 px, hysteresis 0.1 / 0.2 of max gradient
};

namespace detail {

class Mask {
 public:
  Mask(const LabelGrid& grid, LayerLabel layer) : rows_(grid.rows()), cols_(grid.cols()), m_(rows_ * cols_) {
    const auto code = static_cast<std::uint8_t>(layer_code(layer));
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) m_[r * cols_ + c] = grid.at(r, c) == code;
  }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool at(std::size_t r, std::size_t c) const { return m_[r * cols_ + c]; }
  // Out-of-range coordinates replicate the nearest border pixel.
  bool clamped(long r, long c) const {
    r = std::clamp<long>(r, 0, static_cast<long>(rows_) - 1);
    c = std::clamp<long>(c, 0, static_cast<long>(cols_) - 1);
    return at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  }
  bool any() const { return std::find(m_.begin(), m_.end(), true) != m_.end(); }

 private:
  std::size_t rows_, cols_;
  std::vector<bool> m_;
};

inline bool on_morph_boundary(const Mask& m, std::size_t r, std::size_t c) {
  if (!m.at(r, c)) return false;
  const long rr = static_cast<long>(r), cc = static_cast<long>(c);
  return !(m.clamped(rr - 1, cc) && m.clamped(rr + 1, cc) && m.clamped(rr, cc - 1) &&
           m.clamped(rr, cc + 1));
}

// Appends the side-tagged entries for boundary pixel (r, c). A pixel exposed
// both above and below (one pixel thick) yields one entry per side. Pixels
// exposed only laterally are assigned by their position in the column run.
inline void tag_sides(const Mask& m, std::size_t r, std::size_t c, std::vector<EdgePixel>& out) {
  const bool open_above = r > 0 && !m.at(r - 1, c);
  const bool open_below = r + 1 < m.rows() && !m.at(r + 1, c);
  if (open_above) out.push_back({r, c, BoundarySide::Anterior});
  if (open_below) out.push_back({r, c, BoundarySide::Posterior});
  if (open_above || open_below) return;
  std::size_t top = r, bottom = r;
  while (top > 0 && m.at(top - 1, c)) --top;
  while (bottom + 1 < m.rows() && m.at(bottom + 1, c)) ++bottom;
  out.push_back({r, c, (r - top) <= (bottom - r) ? BoundarySide::Anterior : BoundarySide::Posterior});
}

inline std::vector<std::vector<bool>> canny_edges(const Mask& m) {
  const long R = static_cast<long>(m.rows()), C = static_cast<long>(m.cols());
  constexpr double sigma = 1.0;
  constexpr int radius = 3;
  std::array<double, 2 * radius + 1> kernel{};
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= ksum;

  auto clampi = [](long v, long hi) { return std::clamp<long>(v, 0, hi - 1); };
  std::vector<double> tmp(R * C), smooth(R * C);
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * m.at(r, clampi(c + i, C));
      tmp[r * C + c] = s;
    }
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp[clampi(r + i, R) * C + c];
      smooth[r * C + c] = s;
    }
  auto S = [&](long r, long c) { return smooth[clampi(r, R) * C + clampi(c, C)]; };

  std::vector<double> gr(R * C), gc(R * C), mag(R * C);
  double gmax = 0.0;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      const double dc = (S(r - 1, c + 1) + 2 * S(r, c + 1) + S(r + 1, c + 1)) -
                        (S(r - 1, c - 1) + 2 * S(r, c - 1) + S(r + 1, c - 1));
      const double dr = (S(r + 1, c - 1) + 2 * S(r + 1, c) + S(r + 1, c + 1)) -
                        (S(r - 1, c - 1) + 2 * S(r - 1, c) + S(r - 1, c + 1));
      gr[r * C + c] = dr;
      gc[r * C + c] = dc;
      mag[r * C + c] = std::hypot(dr, dc);
      gmax = std::max(gmax, mag[r * C + c]);
    }
  std::vector<std::vector<bool>> edges(R, std::vector<bool>(C, false));
  if (gmax <= 0) return edges;

  auto M = [&](long r, long c) {
    if (r < 0 || r >= R || c < 0 || c >= C) return 0.0;
    return mag[r * C + c];
  };
  // Non-maximum suppression; ">=" behind and ">" ahead along the gradient
  // keeps exactly one pixel of a symmetric two-pixel plateau.
  std::vector<double> thin(R * C, 0.0);
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      const double g = mag[r * C + c];
      if (g <= 0) continue;
      const double ur = gr[r * C + c] / g, uc = gc[r * C + c] / g;
      const long sr = std::lround(ur), sc = std::lround(uc);
      if (g >= M(r - sr, c - sc) && g > M(r + sr, c + sc)) thin[r * C + c] = g;
    }

  const double high = 0.2 * gmax, low = 0.1 * gmax;
  std::deque<std::pair<long, long>> queue;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c)
      if (thin[r * C + c] >= high) {
        edges[r][c] = true;
        queue.emplace_back(r, c);
      }
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    for (long dr = -1; dr <= 1; ++dr)
      for (long dc = -1; dc <= 1; ++dc) {
        const long nr = r + dr, nc = c + dc;
        if (nr < 0 || nr >= R || nc < 0 || nc >= C || edges[nr][nc]) continue;
        if (thin[nr * C + nc] >= low) {
          edges[nr][nc] = true;
          queue.emplace_back(nr, nc);
        }
      }
  }

  // Snap edge pixels lying just outside the mask onto the mask side, one
  // step along the gradient (which points into the mask).
  std::vector<std::vector<bool>> snapped(R, std::vector<bool>(C, false));
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      if (!edges[r][c]) continue;
      if (m.at(r, c)) {
        snapped[r][c] = true;
        continue;
      }
      const double g = mag[r * C + c];
      const long nr = r + std::lround(gr[r * C + c] / g), nc = c + std::lround(gc[r * C + c] / g);
      if (nr >= 0 && nr < R && nc >= 0 && nc < C && m.at(nr, nc)) snapped[nr][nc] = true;
    }
  return snapped;
}

}  // namespace detail

// Boundary pixels of `layer` in one B-scan, sorted by (row, col, side).
inline std::vector<EdgePixel> detect_boundaries(const LabelGrid& bscan, LayerLabel layer,
                                                EdgeMethod method = EdgeMethod::Morphological) {
  if (bscan.rows() < 3 || bscan.cols() < 3) {
    throw ValidationError("detect_boundaries: B-scan must be at least 3x3");
  }
  detail::Mask mask(bscan, layer);
  std::vector<EdgePixel> out;
  if (!mask.any()) return out;
  if (method == EdgeMethod::Morphological) {
    for (std::size_t r = 0; r < mask.rows(); ++r)
      for (std::size_t c = 0; c < mask.cols(); ++c)
        if (detail::on_morph_boundary(mask, r, c)) detail::tag_sides(mask, r, c, out);
  } else {
    const auto edges = detail::canny_edges(mask);
    for (std::size_t r = 0; r < mask.rows(); ++r)
      for (std::size_t c = 0; c < mask.cols(); ++c)
        if (edges[r][c]) detail::tag_sides(mask, r, c, out);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Boundaries of one layer across all B-scans (index = B-scan). Used for
// layers outside the default extraction set.
inline std::vector<std::vector<EdgePixel>> derive_layer_boundaries(
    const SegmentedVolume& volume, LayerLabel layer, EdgeMethod method = EdgeMethod::Morphological) {
  std::vector<std::vector<EdgePixel>> per_bscan(volume.n_bscans());
  bool found = false;
  for (std::size_t b = 0; b < volume.n_bscans(); ++b) {
    per_bscan[b] = detect_boundaries(volume.bscan(b), layer, method);
    found = found || !per_bscan[b].empty();
  }
  if (!found) {
    throw ValidationError("derive_layer_boundaries: layer " + std::string(layer_name(layer)) +
                          " absent from volume");
  }
  return per_bscan;
}

struct ExtractOptions {
  LayerSet layers = kDefaultLayers;
  std::size_t target_points = kModelPoints;
  std::uint64_t seed = 0;
  EdgeMethod method = EdgeMethod::Morphological;
};

// All boundary points of the requested layers, before downsampling. Pool
// order: B-scan, then layer code, then (row, col, side).
inline PointCloud extract_boundary_points(const SegmentedVolume& volume, LayerSet layers,
                                          EdgeMethod method = EdgeMethod::Morphological) {
  if (layers.empty()) throw ValidationError("extract_cloud: empty layer set");
  volume.validate();
  PointCloud cloud;
  std::vector<BoundarySide> sides;
  const auto members = layers.members();
  for (std::size_t b = 0; b < volume.n_bscans(); ++b) {
    const auto grid = volume.bscan(b);
    for (auto layer : members) {
      for (const auto& e : detect_boundaries(grid, layer, method)) {
        const auto mm = volume.to_mm(static_cast<double>(b), static_cast<double>(e.col),
                                     static_cast<double>(e.row));
        cloud.points.push_back({mm[0], mm[1], mm[2], layer});
        sides.push_back(e.side);
      }
    }
  }
  cloud.sides = std::move(sides);
  return cloud;
}

inline PointCloud extract_cloud(const SegmentedVolume& volume, const ExtractOptions& opt = {}) {
  if (opt.target_points < 1) throw ValidationError("extract_cloud: target_points must be >= 1");
  auto pooled = extract_boundary_points(volume, opt.layers, opt.method);
  if (pooled.empty()) {
    throw ValidationError("extract_cloud: no boundary points for layers {" + opt.layers.to_string() + "}");
  }
  if (opt.target_points > pooled.size()) {
    log::warn("extract_cloud: only " + std::to_string(pooled.size()) + " boundary points available, " +
              std::to_string(opt.target_points) + " requested; keeping all");
  }
  return downsample_fps(pooled, opt.target_points, opt.seed);
}

}  // namespace onh
