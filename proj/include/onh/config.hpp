#pragma once

// Run configuration document (schema "onhcfg/1"). Every section is optional
// on input; the resolved form written next to outputs lists every key.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "onh/error.hpp"
#include "onh/extraction.hpp"
#include "onh/latent.hpp"
#include "onh/onhpc.hpp"
#include "onh/synthgen.hpp"
#include "onh/trainer.hpp"

namespace onh {

inline constexpr const char* kConfigSchema = "onhcfg/1";

struct SynthSection {
  std::size_t per_class = 100;
  std::size_t n_points = kModelPoints;
  double noise_um = 5.0;
  std::string cohort = "synthetic";
  LayerSet layers = kDefaultLayers;
  ScanRaster raster;
  ClassPriors priors = ClassPriors::defaults();
};

struct ExtractSection {
  std::size_t target_points = kModelPoints;
  LayerSet layers = kDefaultLayers;
  EdgeMethod method = EdgeMethod::Morphological;
};

struct LatentSection {
  double smoothing = 0.001;
  std::size_t steps = kMorphSteps;
  double slice_tol = kDefaultSliceTolerance;
  std::vector<std::size_t> stages = {kDefaultRenderStages.begin(), kDefaultRenderStages.end()};
};

struct Seeds {
  std::uint64_t synth = 0;
  std::uint64_t extract = 0;
  std::uint64_t train = 0;
  std::uint64_t cluster = 0;
};

struct RunConfig {
  SynthSection synth;
  ExtractSection extract;
  TrainConfig train;  // model + train sections; its seed mirrors seeds.train
  LatentSection latent;
  Seeds seeds;

  TrainConfig train_config() const {
    TrainConfig c = train;
    c.seed = seeds.train;
    return c;
  }

  void validate() const {
    if (synth.per_class < 1) throw ValidationError("synth.per_class must be >= 1");
    if (synth.n_points < 64) throw ValidationError("synth.n_points must be >= 64");
    if (!(synth.noise_um >= 0)) throw ValidationError("synth.noise_um must be >= 0");
    if (synth.layers.empty()) throw ValidationError("synth.layers must not be empty");
    if (synth.raster.n_bscans < 2 || synth.raster.n_ascans < 2) throw ValidationError("synth.raster too small");
    if (!(synth.raster.between_bscans_mm > 0) || !(synth.raster.lateral_mm > 0)) {
      throw ValidationError("synth.raster spacings must be > 0");
    }
    synth.priors.validate();
    if (extract.target_points < 1) throw ValidationError("extract.target_points must be >= 1");
    if (extract.layers.empty()) throw ValidationError("extract.layers must not be empty");
    train.validate();
    if (!(latent.smoothing >= 0)) throw ValidationError("latent.smoothing must be >= 0");
    if (latent.steps < 1) throw ValidationError("latent.steps must be >= 1");
    if (!(latent.slice_tol > 0)) throw ValidationError("latent.slice_tol must be > 0");
    for (auto s : latent.stages)
      if (s > latent.steps) throw ValidationError("latent.stages entry " + std::to_string(s) + " exceeds steps");
  }
};

namespace detail {

inline std::string edge_method_name(EdgeMethod m) { return m == EdgeMethod::Canny ? "canny" : "morphological"; }

inline EdgeMethod parse_edge_method(const std::string& s) {
  if (s == "morphological") return EdgeMethod::Morphological;
  if (s == "canny") return EdgeMethod::Canny;
  throw ValidationError("extract.method: expected 'morphological' or 'canny', got '" + s + "'");
}

inline LayerSet read_layers(const json& j, const std::string& ctx) {
  if (!j.is_string()) throw ValidationError(ctx + ": expected a comma separated string");
  try {
    return LayerSet::parse(j.get<std::string>());
  } catch (const ValidationError& e) {
    throw ValidationError(ctx + ": " + e.what());
  }
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["schema"] = kConfigSchema;
  {
    auto& s = j["synth"];
    s["per_class"] = c.synth.per_class;
    s["n_points"] = c.synth.n_points;
    s["noise_um"] = c.synth.noise_um;
    s["cohort"] = c.synth.cohort;
    s["layers"] = c.synth.layers.to_string();
    s["raster"] = {{"n_bscans", c.synth.raster.n_bscans},
                   {"n_ascans", c.synth.raster.n_ascans},
                   {"between_bscans_mm", c.synth.raster.between_bscans_mm},
                   {"lateral_mm", c.synth.raster.lateral_mm}};
    nlohmann::ordered_json pri;
    for (int k = 0; k < kClassCount; ++k) {
      nlohmann::ordered_json cls;
      for (std::size_t f = 0; f < kParamCount; ++f) {
        const auto& r = c.synth.priors.ranges[k][f];
        cls[std::string(kParamFields[f].name)] = {r.lo, r.hi};
      }
      pri[std::string(kClassNames[k])] = cls;
    }
    s["priors"] = pri;
  }
  j["extract"] = {{"target_points", c.extract.target_points},
                  {"layers", c.extract.layers.to_string()},
                  {"method", detail::edge_method_name(c.extract.method)}};
  j["model"] = to_json(c.train.model);
  j["train"] = to_json(c.train);
  j["latent"] = {{"smoothing", c.latent.smoothing},
                 {"steps", c.latent.steps},
                 {"slice_tol", c.latent.slice_tol},
                 {"stages", c.latent.stages}};
  j["seeds"] = {{"synth", c.seeds.synth}, {"extract", c.seeds.extract}, {"train", c.seeds.train},
                {"cluster", c.seeds.cluster}};
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read_key;
  using detail::reject_unknown;
  reject_unknown(j, {"schema", "synth", "extract", "model", "train", "latent", "seeds"}, "config");
  if (j.contains("schema") && j.at("schema") != kConfigSchema) {
    throw ValidationError("config: unsupported schema " + j.at("schema").dump() + ", expected \"" + kConfigSchema + "\"");
  }
  RunConfig c;
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown(s, {"per_class", "n_points", "noise_um", "cohort", "layers", "raster", "priors"}, "synth");
    read_key(s, "per_class", c.synth.per_class, "synth");
    read_key(s, "n_points", c.synth.n_points, "synth");
    read_key(s, "noise_um", c.synth.noise_um, "synth");
    read_key(s, "cohort", c.synth.cohort, "synth");
    if (s.contains("layers")) c.synth.layers = detail::read_layers(s.at("layers"), "synth.layers");
    if (s.contains("raster")) {
      const auto& r = s.at("raster");
      reject_unknown(r, {"n_bscans", "n_ascans", "between_bscans_mm", "lateral_mm"}, "synth.raster");
      read_key(r, "n_bscans", c.synth.raster.n_bscans, "synth.raster");
      read_key(r, "n_ascans", c.synth.raster.n_ascans, "synth.raster");
      read_key(r, "between_bscans_mm", c.synth.raster.between_bscans_mm, "synth.raster");
      read_key(r, "lateral_mm", c.synth.raster.lateral_mm, "synth.raster");
    }
    if (s.contains("priors")) {
      const auto& p = s.at("priors");
      reject_unknown(p, {"H", "HM", "G", "HMG"}, "synth.priors");
      for (const auto& [cls, fields] : p.items()) {
        const auto label = parse_class(cls);
        if (!fields.is_object()) throw ValidationError("synth.priors." + cls + ": expected an object");
        for (const auto& [field, range] : fields.items()) {
          const std::string ctx = "synth.priors." + cls + "." + field;
          if (!range.is_array() || range.size() != 2 || !range[0].is_number() || !range[1].is_number()) {
            throw ValidationError(ctx + ": expected [lo, hi]");
          }
          Range* r;
          try {
            r = &c.synth.priors.at(label, field);
          } catch (const ValidationError&) {
            throw ValidationError(ctx + ": unknown phenotype field");
          }
          *r = {range[0].get<double>(), range[1].get<double>()};
        }
      }
    }
  }
  if (j.contains("extract")) {
    const auto& e = j.at("extract");
    reject_unknown(e, {"target_points", "layers", "method"}, "extract");
    read_key(e, "target_points", c.extract.target_points, "extract");
    if (e.contains("layers")) c.extract.layers = detail::read_layers(e.at("layers"), "extract.layers");
    if (e.contains("method")) {
      if (!e.at("method").is_string()) throw ValidationError("extract.method: wrong type");
      c.extract.method = detail::parse_edge_method(e.at("method").get<std::string>());
    }
  }
  if (j.contains("model")) c.train.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) train_section_from_json(j.at("train"), c.train);
  if (j.contains("latent")) {
    const auto& l = j.at("latent");
    reject_unknown(l, {"smoothing", "steps", "slice_tol", "stages"}, "latent");
    read_key(l, "smoothing", c.latent.smoothing, "latent");
    read_key(l, "steps", c.latent.steps, "latent");
    read_key(l, "slice_tol", c.latent.slice_tol, "latent");
    read_key(l, "stages", c.latent.stages, "latent");
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    reject_unknown(s, {"synth", "extract", "train", "cluster"}, "seeds");
    read_key(s, "synth", c.seeds.synth, "seeds");
    read_key(s, "extract", c.seeds.extract, "seeds");
    read_key(s, "train", c.seeds.train, "seeds");
    read_key(s, "cluster", c.seeds.cluster, "seeds");
  }
  c.train.seed = c.seeds.train;
  c.validate();
  return c;
}

inline RunConfig parse_run_config(std::string_view text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(source + ": invalid JSON: " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(read_text_file(path), path); }

inline std::string run_config_text(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace onh
