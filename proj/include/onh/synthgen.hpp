#pragma once

// Synthetic optic nerve head generator.
//
// Each eye is described by a PhenotypeParams record. Boundary surfaces are
// analytic depth fields z(x, y) in millimetres (z grows posteriorly):
//
//   z_j(x, y) = z0 + tan(disc_tilt) * (x - xc) + cup(x, y) + offset_j + canal_j(x, y)
//
// where cup is an elliptical Gaussian depression, offset_j accumulates the
// layer thickness stack and canal_j (sclera and LC interfaces only) is a
// non-negative tilted displacement confined to the disc ellipse. The
// interfaces are sampled on the OCT scan raster to produce labeled clouds.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "onh/error.hpp"
#include "onh/extraction.hpp"
#include "onh/onhpc.hpp"
#include "onh/pointcloud.hpp"

namespace onh {

struct PhenotypeParams {
  double rnfl_thickness = 100.0;       // um
  double prelamina_thickness = 300.0;  // um
  double orl_thickness = 200.0;        // um
  double choroid_thickness = 230.0;    // um
  double scleral_thickness = 400.0;    // um
  double lc_thickness = 275.0;         // um
  double cup_depth = 200.0;            // um
  double cup_diameter = 0.75;          // mm
  double disc_diameter = 1.75;         // mm
  double disc_tilt_deg = 0.0;
  double sco_tilt_deg = 0.0;
  double elongation_ratio = 1.0;

  bool operator==(const PhenotypeParams&) const = default;

  void validate() const;
};

inline constexpr std::size_t kParamCount = 12;

struct ParamField {
  std::string_view name;
  double PhenotypeParams::*member;
};

inline constexpr std::array<ParamField, kParamCount> kParamFields = {{
    {"rnfl_thickness", &PhenotypeParams::rnfl_thickness},
    {"prelamina_thickness", &PhenotypeParams::prelamina_thickness},
    {"orl_thickness", &PhenotypeParams::orl_thickness},
    {"choroid_thickness", &PhenotypeParams::choroid_thickness},
    {"scleral_thickness", &PhenotypeParams::scleral_thickness},
    {"lc_thickness", &PhenotypeParams::lc_thickness},
    {"cup_depth", &PhenotypeParams::cup_depth},
    {"cup_diameter", &PhenotypeParams::cup_diameter},
    {"disc_diameter", &PhenotypeParams::disc_diameter},
    {"disc_tilt_deg", &PhenotypeParams::disc_tilt_deg},
    {"sco_tilt_deg", &PhenotypeParams::sco_tilt_deg},
    {"elongation_ratio", &PhenotypeParams::elongation_ratio},
}};

inline void PhenotypeParams::validate() const {
  for (const auto& f : kParamFields) {
    if (!std::isfinite(this->*f.member)) {
      throw ValidationError("phenotype: " + std::string(f.name) + " is not finite");
    }
  }
  for (std::size_t i : {0, 1, 2, 3, 4, 5, 7, 8}) {  // thicknesses and diameters
    if (!(this->*kParamFields[i].member > 0)) {
      throw ValidationError("phenotype: " + std::string(kParamFields[i].name) + " must be > 0");
    }
  }
  if (cup_depth < 0) throw ValidationError("phenotype: cup_depth must be >= 0");
  if (!(cup_diameter < disc_diameter + 1.0)) {
    throw ValidationError("phenotype: cup_diameter must be < disc_diameter + 1 mm");
  }
  if (std::abs(disc_tilt_deg) > 30.0 || std::abs(sco_tilt_deg) > 30.0) {
    throw ValidationError("phenotype: tilts must lie within +-30 degrees");
  }
  if (elongation_ratio < 1.0 || elongation_ratio > 1.6) {
    throw ValidationError("phenotype: elongation_ratio must lie in [1.0, 1.6]");
  }
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Uniform range per PhenotypeParams field (kParamFields order) per class.
struct ClassPriors {
  std::array<std::array<Range, kParamCount>, kClassCount> ranges{};

  Range& at(ClassLabel c, std::string_view field) {
    for (std::size_t i = 0; i < kParamCount; ++i)
      if (kParamFields[i].name == field) return ranges[class_code(c)][i];
    throw ValidationError("priors: unknown field " + std::string(field));
  }
  const Range& at(ClassLabel c, std::string_view field) const { return const_cast<ClassPriors*>(this)->at(c, field); }

  void validate() const {
    for (int c = 0; c < kClassCount; ++c) {
      PhenotypeParams lo, hi;
      for (std::size_t i = 0; i < kParamCount; ++i) {
        const auto& r = ranges[c][i];
        if (!(r.lo <= r.hi)) {
          throw ValidationError("priors: inverted range for " + std::string(kParamFields[i].name));
        }
        lo.*kParamFields[i].member = r.lo;
        hi.*kParamFields[i].member = r.hi;
      }
      lo.validate();
      hi.validate();
      // The cup/disc constraint couples two fields; check the worst corner.
      PhenotypeParams worst = lo;
      worst.cup_diameter = hi.cup_diameter;
      worst.validate();
    }
  }

  // Default ranges: H thick RNFL/prelamina, small shallow cup; G thin
  // RNFL/prelamina/LC, deep wide cup; HM tilted elongated disc, thin sclera
  // and LC, shallow wide cup, thick prelamina; HMG combines the HM changes
  // with a deep cup and thin RNFL/prelamina.
  static ClassPriors defaults() {
    ClassPriors p;
    auto set = [&](ClassLabel c, std::string_view f, double lo, double hi) { p.at(c, f) = {lo, hi}; };
    using enum ClassLabel;
    for (auto c : {H, HM, G, HMG}) set(c, "orl_thickness", 180, 220);

    set(H, "rnfl_thickness", 90, 110);
    set(G, "rnfl_thickness", 40, 60);
    set(HM, "rnfl_thickness", 75, 95);
    set(HMG, "rnfl_thickness", 35, 55);

    set(H, "prelamina_thickness", 250, 350);
    set(G, "prelamina_thickness", 100, 180);
    set(HM, "prelamina_thickness", 280, 380);
    set(HMG, "prelamina_thickness", 80, 150);

    set(H, "choroid_thickness", 200, 260);
    set(G, "choroid_thickness", 200, 260);
    set(HM, "choroid_thickness", 100, 160);
    set(HMG, "choroid_thickness", 100, 160);

    set(H, "scleral_thickness", 350, 450);
    set(G, "scleral_thickness", 350, 450);
    set(HM, "scleral_thickness", 200, 300);
    set(HMG, "scleral_thickness", 200, 300);

    set(H, "lc_thickness", 250, 300);
    set(G, "lc_thickness", 180, 230);
    set(HM, "lc_thickness", 180, 230);
    set(HMG, "lc_thickness", 150, 200);

    set(H, "cup_depth", 150, 250);
    set(G, "cup_depth", 500, 750);
    set(HM, "cup_depth", 100, 200);
    set(HMG, "cup_depth", 550, 800);

    set(H, "cup_diameter", 0.6, 0.9);
    set(G, "cup_diameter", 1.1, 1.5);
    set(HM, "cup_diameter", 1.0, 1.4);
    set(HMG, "cup_diameter", 1.1, 1.5);

    set(H, "disc_diameter", 1.6, 1.9);
    set(G, "disc_diameter", 1.6, 1.9);
    set(HM, "disc_diameter", 1.9, 2.3);
    set(HMG, "disc_diameter", 1.9, 2.3);

    set(H, "disc_tilt_deg", 0, 3);
    set(G, "disc_tilt_deg", 0, 3);
    set(HM, "disc_tilt_deg", 8, 15);
    set(HMG, "disc_tilt_deg", 10, 18);

    set(H, "sco_tilt_deg", 0, 3);
    set(G, "sco_tilt_deg", 0, 3);
    set(HM, "sco_tilt_deg", 6, 12);
    set(HMG, "sco_tilt_deg", 8, 14);

    set(H, "elongation_ratio", 1.0, 1.1);
    set(G, "elongation_ratio", 1.0, 1.1);
    set(HM, "elongation_ratio", 1.2, 1.5);
    set(HMG, "elongation_ratio", 1.2, 1.5);
    return p;
  }
};

inline PhenotypeParams sample_params(ClassLabel c, const ClassPriors& priors, std::uint64_t seed) {
  priors.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PhenotypeParams p;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const auto& r = priors.ranges[class_code(c)][i];
    const double u = unit(rng);
    p.*kParamFields[i].member = r.lo == r.hi ? r.lo : r.lo + u * (r.hi - r.lo);
  }
  return p;
}

// Scan raster the surfaces are sampled on; defaults match a 97 x 384 volume.
struct ScanRaster {
  std::size_t n_bscans = 97;
  std::size_t n_ascans = 384;
  double between_bscans_mm = 0.0351;
  double lateral_mm = 0.0115;

  double x(std::size_t a) const { return static_cast<double>(a) * lateral_mm; }
  double y(std::size_t b) const { return static_cast<double>(b) * between_bscans_mm; }
  double x_center() const { return static_cast<double>(n_ascans - 1) / 2.0 * lateral_mm; }
  double y_center() const { return static_cast<double>(n_bscans - 1) / 2.0 * between_bscans_mm; }
  std::size_t central_bscan() const { return (n_bscans - 1) / 2; }
};

// Anterior-to-posterior tissue order in the synthetic stack.
inline constexpr std::array<LayerLabel, kLayerCount> kStackOrder = {
    LayerLabel::RNFL,    LayerLabel::GCL_IPL,   LayerLabel::ORL,    LayerLabel::RPE,
    LayerLabel::CHOROID, LayerLabel::PRELAMINA, LayerLabel::SCLERA, LayerLabel::LC};

inline constexpr double kGclIplThicknessUm = 70.0;
inline constexpr double kRpeThicknessUm = 20.0;
// Far-field depth of the anterior retinal surface below the scan top.
inline constexpr double kSurfaceDepthMm = 0.3;

// Per-layer thickness (um) in stack order.
using LayerStack = std::array<double, kLayerCount>;

inline LayerStack thickness_stack(const PhenotypeParams& p) {
  return {p.rnfl_thickness,    kGclIplThicknessUm,    p.orl_thickness,     kRpeThicknessUm,
          p.choroid_thickness, p.prelamina_thickness, p.scleral_thickness, p.lc_thickness};
}

inline std::size_t stack_position(LayerLabel l) {
  for (std::size_t i = 0; i < kLayerCount; ++i)
    if (kStackOrder[i] == l) return i;
  return kLayerCount;
}

// Interface j separates stack layers j-1 and j; interface 0 is the anterior
// surface of the RNFL and interface kLayerCount the posterior LC surface.
class BoundarySurfaces {
 public:
  static constexpr std::size_t kInterfaces = kLayerCount + 1;

  BoundarySurfaces(const PhenotypeParams& p, const ScanRaster& raster)
      : BoundarySurfaces(p, raster, thickness_stack(p)) {}

  // Explicit stack; used to probe the crossing check.
  BoundarySurfaces(const PhenotypeParams& p, const ScanRaster& raster, const LayerStack& stack)
      : params_(p), xc_(raster.x_center()), yc_(raster.y_center()) {
    p.validate();
    double acc = 0.0;
    for (std::size_t j = 0; j < kInterfaces; ++j) {
      offset_[j] = acc / 1000.0;
      if (j < kLayerCount) acc += stack[j];
    }
    const double e = std::sqrt(p.elongation_ratio);
    cup_sigma_x_ = p.cup_diameter / 2.0 * e / 2.0;
    cup_sigma_y_ = p.cup_diameter / 2.0 / e / 2.0;
    disc_rx_ = p.disc_diameter / 2.0 * e;
    disc_ry_ = p.disc_diameter / 2.0 / e;
    tilt_ = std::tan(p.disc_tilt_deg * std::numbers::pi / 180.0);
    sco_ = std::tan(p.sco_tilt_deg * std::numbers::pi / 180.0);
    check_crossings(raster);
  }

  const PhenotypeParams& params() const { return params_; }

  // Depression of the anterior surface (mm) at (x, y).
  double cup(double x, double y) const {
    const double u = (x - xc_) / cup_sigma_x_;
    const double v = (y - yc_) / cup_sigma_y_;
    return params_.cup_depth / 1000.0 * std::exp(-0.5 * (u * u + v * v));
  }

  // Base plane plus disc tilt, without the cup.
  double far_field(double x) const { return kSurfaceDepthMm + tilt_ * (x - xc_); }

  // Non-negative posterior displacement of the scleral canal (mm).
  double canal(double x, double y) const {
    const double u = (x - xc_) / disc_rx_;
    const double v = (y - yc_) / disc_ry_;
    const double rho2 = u * u + v * v;
    if (rho2 >= 1.0) return 0.0;
    const double w = (1.0 - rho2) * (1.0 - rho2);
    return w * (sco_ * (x - xc_) + std::abs(sco_) * disc_rx_);
  }

  double depth(std::size_t interface, double x, double y) const {
    double z = far_field(x) + cup(x, y) + offset_[interface];
    if (interface >= stack_position(LayerLabel::SCLERA)) z += canal(x, y);
    return z;
  }

  double anterior(LayerLabel l, double x, double y) const { return depth(stack_position(l), x, y); }
  double posterior(LayerLabel l, double x, double y) const {
    return depth(stack_position(l) + 1, x, y);
  }

  // Reference point for normalization: raster centre at the far-field depth
  // of Bruch's membrane (posterior RPE surface).
  Vec3 reference_center() const {
    return {xc_, yc_, kSurfaceDepthMm + offset_[stack_position(LayerLabel::CHOROID)]};
  }

 private:
  void check_crossings(const ScanRaster& raster) const {
    constexpr int kGrid = 21;
    const double w = raster.x(raster.n_ascans - 1), h = raster.y(raster.n_bscans - 1);
    for (std::size_t j = 0; j + 1 < kInterfaces; ++j) {
      for (int gi = 0; gi < kGrid; ++gi) {
        for (int gj = 0; gj < kGrid; ++gj) {
          const double x = w * gi / (kGrid - 1), y = h * gj / (kGrid - 1);
          if (!(depth(j + 1, x, y) > depth(j, x, y))) {
            throw ValidationError("build_surfaces: boundaries cross between " +
                                  interface_name(j) + " and " + interface_name(j + 1));
          }
        }
      }
    }
  }

  static std::string interface_name(std::size_t j) {
    if (j < kLayerCount) return std::string(layer_name(kStackOrder[j])) + " anterior";
    return std::string(layer_name(kStackOrder[kLayerCount - 1])) + " posterior";
  }

  PhenotypeParams params_;
  double xc_, yc_;
  std::array<double, kInterfaces> offset_{};
  double cup_sigma_x_ = 1, cup_sigma_y_ = 1, disc_rx_ = 1, disc_ry_ = 1, tilt_ = 0, sco_ = 0;
};

inline BoundarySurfaces build_surfaces(const PhenotypeParams& p, const ScanRaster& raster = {}) {
  return BoundarySurfaces(p, raster);
}

struct GenerateOptions {
  ScanRaster raster;
  LayerSet layers = kDefaultLayers;
};

struct GeneratedCloud {
  PointCloud cloud;
  std::vector<std::size_t> source_bscan;  // raster row of every output point
};

// Samples every layer boundary at every raster location, adds axial noise,
// normalizes and downsamples. Raster points are emitted B-scan by B-scan,
// then A-scan, then layer (stack order), anterior before posterior.
inline GeneratedCloud generate_cloud_detailed(const PhenotypeParams& params, std::size_t n_points,
                                              double noise_sigma_um, std::uint64_t seed,
                                              std::optional<ClassLabel> label = std::nullopt,
                                              const GenerateOptions& opt = {}) {
  if (n_points < 64) throw ValidationError("generate_cloud: n_points must be >= 64");
  if (noise_sigma_um < 0) throw ValidationError("generate_cloud: noise must be >= 0");
  if (opt.layers.empty()) throw ValidationError("generate_cloud: empty layer set");
  const BoundarySurfaces surf(params, opt.raster);

  std::vector<LayerLabel> layers;
  for (auto l : kStackOrder)
    if (opt.layers.contains(l)) layers.push_back(l);

  const auto& r = opt.raster;
  PointCloud raw;
  std::vector<BoundarySide> sides;
  std::vector<std::size_t> rows;
  const std::size_t total = r.n_bscans * r.n_ascans * layers.size() * 2;
  raw.points.reserve(total);
  sides.reserve(total);
  rows.reserve(total);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma_um > 0 ? noise_sigma_um / 1000.0 : 1.0);
  for (std::size_t b = 0; b < r.n_bscans; ++b) {
    const double y = r.y(b);
    for (std::size_t a = 0; a < r.n_ascans; ++a) {
      const double x = r.x(a);
      for (auto l : layers) {
        for (auto side : {BoundarySide::Anterior, BoundarySide::Posterior}) {
          double z = side == BoundarySide::Anterior ? surf.anterior(l, x, y) : surf.posterior(l, x, y);
          if (noise_sigma_um > 0) z += noise(rng);
          raw.points.push_back({x, y, z, l});
          sides.push_back(side);
          rows.push_back(b);
        }
      }
    }
  }
  raw.sides = std::move(sides);
  raw.class_label = label;

  auto normalized = normalize(raw, surf.reference_center());
  const auto idx = fps_indices(normalized.points, n_points, seed ^ 0x9E3779B97F4A7C15ULL);
  GeneratedCloud out;
  out.cloud = select_points(normalized, idx);
  out.source_bscan.reserve(idx.size());
  for (auto i : idx) out.source_bscan.push_back(rows[i]);
  return out;
}

inline PointCloud generate_cloud(const PhenotypeParams& params, std::size_t n_points, double noise_sigma_um,
                                 std::uint64_t seed, std::optional<ClassLabel> label = std::nullopt,
                                 const GenerateOptions& opt = {}) {
  return generate_cloud_detailed(params, n_points, noise_sigma_um, seed, label, opt).cloud;
}

// Normalized y coordinate of the central B-scan and the half-spacing
// tolerance that isolates exactly that row.
inline double central_slice_tolerance(const ScanRaster& r) {
  return r.between_bscans_mm / kNormalizationScale / 2.0;
}

// Label volume of the synthetic surfaces (no noise), for extraction tests.
inline SegmentedVolume voxelize(const PhenotypeParams& params, std::size_t n_bscans, std::size_t n_ascans,
                                std::size_t depth_px, const VoxelSpacing& spacing = {}) {
  ScanRaster raster{n_bscans, n_ascans, spacing.between_bscans_um / 1000.0, spacing.lateral_um / 1000.0};
  const BoundarySurfaces surf(params, raster);
  SegmentedVolume vol(n_bscans, n_ascans, depth_px, spacing);
  std::array<double, BoundarySurfaces::kInterfaces> z{};
  for (std::size_t b = 0; b < n_bscans; ++b) {
    for (std::size_t a = 0; a < n_ascans; ++a) {
      for (std::size_t j = 0; j < z.size(); ++j) z[j] = surf.depth(j, raster.x(a), raster.y(b));
      std::size_t j = 0;
      for (std::size_t d = 0; d < depth_px; ++d) {
        const double zd = static_cast<double>(d) * spacing.axial_um / 1000.0;
        while (j < z.size() && z[j] <= zd) ++j;
        // j = number of interfaces at or above this depth.
        if (j >= 1 && j <= kLayerCount) vol.at(b, a, d) = static_cast<std::uint8_t>(layer_code(kStackOrder[j - 1]));
      }
    }
  }
  return vol;
}

// --- datasets ---------------------------------------------------------------

struct ManifestRow {
  std::string path;  // as written in the manifest (relative to its directory)
  std::string subject_id;
  ClassLabel label = ClassLabel::H;
  std::string cohort;

  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  std::filesystem::path base_dir;  // directory the relative paths resolve against
  std::vector<ManifestRow> rows;

  std::filesystem::path resolve(const ManifestRow& r) const {
    std::filesystem::path p(r.path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline std::string manifest_csv(const Manifest& m) {
  std::string out = "path,subject_id,class,cohort\n";
  for (const auto& r : m.rows) {
    out += r.path + ',' + r.subject_id + ',' + std::to_string(class_code(r.label)) + ',' + r.cohort + '\n';
  }
  return out;
}

inline Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                               const std::string& source = "<manifest>") {
  Manifest m;
  m.base_dir = base_dir;
  std::size_t pos = 0, line_no = 0;
  bool header = true;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != "path,subject_id,class,cohort") {
        throw ValidationError(source + ": expected header 'path,subject_id,class,cohort'");
      }
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::size_t s = 0;
    while (true) {
      auto c = line.find(',', s);
      f.emplace_back(line.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s));
      if (c == std::string_view::npos) break;
      s = c + 1;
    }
    const auto ctx = source + ":" + std::to_string(line_no);
    if (f.size() != 4) throw ValidationError(ctx + ": expected 4 fields");
    if (f[0].empty()) throw ValidationError(ctx + ": empty path");
    if (f[1].empty()) throw ValidationError(ctx + ": empty subject_id");
    ManifestRow row{f[0], f[1], class_from_code(static_cast<int>(detail::parse_int(f[2], ctx))), f[3]};
    m.rows.push_back(std::move(row));
  }
  if (header) throw ValidationError(source + ": missing header");
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path.string()), path.parent_path(), path.string());
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_text_file(path.string(), manifest_csv(m));
}

// Generation record stored next to each synthetic cloud so that the same
// eye can be re-sampled with a different layer set.
struct SynthRecord {
  PhenotypeParams params;
  ClassLabel label = ClassLabel::H;
  std::size_t n_points = kModelPoints;
  double noise_um = 5.0;
  std::uint64_t seed = 0;
  ScanRaster raster;
};

inline nlohmann::ordered_json to_json(const PhenotypeParams& p) {
  nlohmann::ordered_json j;
  for (const auto& f : kParamFields) j[std::string(f.name)] = p.*f.member;
  return j;
}

inline PhenotypeParams params_from_json(const nlohmann::json& j) {
  PhenotypeParams p;
  for (const auto& f : kParamFields) p.*f.member = j.at(std::string(f.name)).get<double>();
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const auto& f : kParamFields) known = known || f.name == k;
    if (!known) throw ValidationError("phenotype: unknown field " + k);
  }
  p.validate();
  return p;
}

inline std::string record_json(const SynthRecord& r) {
  nlohmann::ordered_json j;
  j["class"] = class_code(r.label);
  j["n_points"] = r.n_points;
  j["noise_um"] = r.noise_um;
  j["seed"] = r.seed;
  j["raster"] = {{"n_bscans", r.raster.n_bscans},
                 {"n_ascans", r.raster.n_ascans},
                 {"between_bscans_mm", r.raster.between_bscans_mm},
                 {"lateral_mm", r.raster.lateral_mm}};
  j["params"] = to_json(r.params);
  return j.dump(2) + "\n";
}

inline SynthRecord parse_record(const std::string& text, const std::string& source) {
  try {
    auto j = nlohmann::json::parse(text);
    SynthRecord r;
    r.label = class_from_code(j.at("class").get<int>());
    r.n_points = j.at("n_points").get<std::size_t>();
    r.noise_um = j.at("noise_um").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto& rj = j.at("raster");
    r.raster.n_bscans = rj.at("n_bscans").get<std::size_t>();
    r.raster.n_ascans = rj.at("n_ascans").get<std::size_t>();
    r.raster.between_bscans_mm = rj.at("between_bscans_mm").get<double>();
    r.raster.lateral_mm = rj.at("lateral_mm").get<double>();
    r.params = params_from_json(j.at("params"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

inline std::filesystem::path record_path(const std::filesystem::path& cloud_path) {
  auto p = cloud_path;
  p += ".params.json";
  return p;
}

// SplitMix64 finalizer; derives independent per-item seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

struct DatasetOptions {
  std::size_t per_class_count = 100;
  std::size_t n_points = kModelPoints;
  double noise_um = 5.0;
  std::uint64_t seed = 0;
  ClassPriors priors = ClassPriors::defaults();
  GenerateOptions generate;
  std::string cohort = "synthetic";
};

inline PointCloud generate_from_record(const SynthRecord& r, const std::string& subject_id,
                                       LayerSet layers = kDefaultLayers) {
  GenerateOptions g{r.raster, layers};
  auto cloud = generate_cloud(r.params, r.n_points, r.noise_um, r.seed, r.label, g);
  cloud.subject_id = subject_id;
  return cloud;
}

// Writes <class>_<index>.onhpc clouds, their generation records and
// manifest.csv into out_dir. One eye per subject.
inline Manifest generate_dataset(const std::filesystem::path& out_dir, const DatasetOptions& opt) {
  if (opt.per_class_count < 1) throw ValidationError("generate_dataset: per_class_count must be >= 1");
  opt.priors.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), "cannot create directory: " + ec.message());

  Manifest m;
  m.base_dir = out_dir;
  std::size_t subject = 0;
  for (int c = 0; c < kClassCount; ++c) {
    const auto label = class_from_code(c);
    for (std::size_t i = 0; i < opt.per_class_count; ++i, ++subject) {
      char sid[32];
      std::snprintf(sid, sizeof sid, "S%05zu", subject + 1);
      char name[64];
      std::snprintf(name, sizeof name, "%s_%04zu.onhpc", std::string(class_name(label)).c_str(), i);

      SynthRecord rec;
      rec.label = label;
      rec.n_points = opt.n_points;
      rec.noise_um = opt.noise_um;
      rec.raster = opt.generate.raster;
      rec.params = sample_params(label, opt.priors, derive_seed(opt.seed, c, 2 * i));
      rec.seed = derive_seed(opt.seed, c, 2 * i + 1);

      const auto cloud = generate_from_record(rec, sid, opt.generate.layers);
      const auto path = out_dir / name;
      write_onhpc(path.string(), cloud);
      write_text_file(record_path(path).string(), record_json(rec));
      m.rows.push_back({name, sid, label, opt.cohort});
    }
  }
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

}  // namespace onh
