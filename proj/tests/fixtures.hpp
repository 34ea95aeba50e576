#pragma once

// Scaled-down models and datasets for tests that train.

#include <filesystem>

#include "onh/synthgen.hpp"
#include "onh/trainer.hpp"

namespace fixtures {

// Same structure as the default architecture, a fraction of the width.
inline onh::ModelConfig small_config(std::size_t k = 16, std::size_t n = 24) {
  onh::ModelConfig c;
  c.encoder.latent_dim = k;
  c.encoder.input_points = n;
  c.encoder.widths = {8, 8, 12, 16};
  c.encoder.tnet_widths = {8, 12};
  c.decoder.n_patches = 4;
  c.decoder.points_per_patch = 8;
  c.decoder.grid_rows = 2;
  c.decoder.grid_cols = 4;
  c.decoder.widths = {12, 8};
  c.classifier.widths = {10, 4};
  return c;
}

inline onh::GenerateOptions small_raster() {
  onh::GenerateOptions g;
  g.raster = {9, 48, 0.35, 0.09};
  return g;
}

inline onh::Manifest small_dataset(const std::filesystem::path& dir, std::size_t per_class, std::size_t points,
                                   std::uint64_t seed) {
  onh::DatasetOptions o;
  o.per_class_count = per_class;
  o.n_points = points;
  o.seed = seed;
  o.generate = small_raster();
  return onh::generate_dataset(dir, o);
}

inline onh::TrainConfig small_train_config(std::size_t points, std::size_t epochs, std::uint64_t seed = 5) {
  onh::TrainConfig c;
  c.model = small_config(16, points);
  c.max_epochs = epochs;
  c.batch_size = 4;
  c.learning_rate = 0.005;
  c.seed = seed;
  return c;
}

}  // namespace fixtures
