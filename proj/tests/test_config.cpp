#include <gtest/gtest.h>

#include "gen.hpp"
#include "onh/config.hpp"

using namespace onh;

namespace {

void expect_rejected(const std::string& text, const std::string& fragment) {
  try {
    parse_run_config(text, "cfg.json");
    FAIL() << "accepted: " << text;
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("cfg.json"), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(RunConfig, DefaultsRoundTrip) {
  const RunConfig c;
  const auto text = run_config_text(c);
  EXPECT_EQ(run_config_text(parse_run_config(text, "x")), text);
  EXPECT_EQ(run_config_text(parse_run_config("{}", "x")), text);
}

TEST(RunConfig, EveryFieldRoundTrips) {
  RunConfig c;
  c.synth.per_class = 7;
  c.synth.n_points = 512;
  c.synth.noise_um = 2.5;
  c.synth.cohort = "site_b";
  c.synth.layers = LayerSet::parse("rnfl,lc");
  c.synth.raster = {21, 64, 0.2, 0.05};
  c.synth.priors.at(ClassLabel::G, "cup_depth") = {0.31, 0.44};
  c.extract.target_points = 300;
  c.extract.method = EdgeMethod::Canny;
  c.train.model.encoder.latent_dim = 256;
  c.train.learning_rate = 3e-4;
  c.train.augment = false;
  c.latent.smoothing = 0.05;
  c.latent.steps = 10;
  c.latent.stages = {0, 10};
  c.seeds = {1, 2, 3, 4};
  c.train.seed = 3;
  const auto text = run_config_text(c);
  const auto back = parse_run_config(text, "x");
  EXPECT_EQ(run_config_text(back), text);
  EXPECT_EQ(back.synth.priors.at(ClassLabel::G, "cup_depth").hi, 0.44);
  EXPECT_EQ(back.extract.method, EdgeMethod::Canny);
  EXPECT_EQ(back.train_config().seed, 3u);
  EXPECT_EQ(back.train.model.encoder.latent_dim, 256u);
}

TEST(RunConfig, PartialSectionsKeepDefaults) {
  const auto c = parse_run_config(R"({"train": {"epochs": 3}, "seeds": {"train": 9}})", "x");
  EXPECT_EQ(c.train.max_epochs, 3u);
  EXPECT_EQ(c.train.batch_size, TrainConfig{}.batch_size);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.synth.per_class, 100u);
}

TEST(RunConfig, UnknownKeysAreRejectedWithTheirPath) {
  expect_rejected(R"({"trian": {}})", "unknown key 'trian'");
  expect_rejected(R"({"train": {"learning_rate": 0.1}})", "unknown key 'learning_rate'");
  expect_rejected(R"({"synth": {"raster": {"rows": 3}}})", "synth.raster");
  expect_rejected(R"({"synth": {"priors": {"H": {"cup_width": [0, 1]}}}})", "cup_width");
  expect_rejected(R"({"synth": {"priors": {"X": {}}}})", "X");
  expect_rejected(R"({"latent": {"smoothness": 1}})", "smoothness");
  expect_rejected(R"({"model": {"latent": 8}})", "latent");
  expect_rejected(R"({"train": {"augmentation": {"jitter": 1}}})", "train.augmentation");
}

TEST(RunConfig, SchemaAndTypeErrors) {
  expect_rejected(R"({"schema": "onhcfg/2"})", "schema");
  expect_rejected("{not json", "invalid JSON");
  expect_rejected(R"({"synth": {"per_class": "many"}})", "synth.per_class");
  expect_rejected(R"({"synth": {"layers": ["rnfl"]}})", "synth.layers");
  expect_rejected(R"({"synth": {"layers": "rnfl,cornea"}})", "cornea");
  expect_rejected(R"({"extract": {"method": "sobel"}})", "extract.method");
  expect_rejected(R"({"synth": {"priors": {"H": {"cup_depth": [1]}}}})", "[lo, hi]");
}

TEST(RunConfig, ValueErrors) {
  expect_rejected(R"({"synth": {"n_points": 10}})", "n_points");
  expect_rejected(R"({"synth": {"per_class": 0}})", "per_class");
  expect_rejected(R"({"latent": {"steps": 4, "stages": [0, 5]}})", "stages");
  expect_rejected(R"({"latent": {"slice_tol": 0}})", "slice_tol");
  expect_rejected(R"({"synth": {"priors": {"H": {"cup_depth": [0.5, 0.1]}}}})", "cup_depth");
  expect_rejected(R"({"train": {"batch": 0}})", "batch");
}

TEST(RunConfig, LoadsFromFile) {
  gen::TempDir dir("config");
  const auto path = (dir.path / "c.json").string();
  RunConfig c;
  c.seeds.cluster = 77;
  write_text_file(path, run_config_text(c));
  EXPECT_EQ(load_run_config(path).seeds.cluster, 77u);
  EXPECT_THROW(load_run_config((dir.path / "missing.json").string()), IoError);
}
