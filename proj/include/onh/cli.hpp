#pragma once

// The onhpheno command line: one binary, one subcommand per pipeline stage.
// Exit codes: 0 success, 1 usage error, 2 data or validation error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "onh/config.hpp"
#include "onh/error.hpp"
#include "onh/extraction.hpp"
#include "onh/latent.hpp"
#include "onh/onhpc.hpp"
#include "onh/synthgen.hpp"
#include "onh/trainer.hpp"

namespace onh::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct Streams {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;
};

inline void ensure_dir(const fs::path& d) {
  if (d.empty()) return;
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw IoError(d.string(), "cannot create directory: " + ec.message());
}

// Resolved config and version string next to a command's outputs.
inline void write_provenance(const fs::path& dir, const std::string& command, const RunConfig& c) {
  ensure_dir(dir);
  write_text_file((dir / (command + ".config.json")).string(), run_config_text(c));
  write_text_file((dir / "VERSION").string(), std::string(kVersion) + "\n");
}

inline fs::path parent_or_cwd(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

inline std::vector<std::size_t> rows_for_subjects(const Manifest& m, const std::vector<std::string>& subjects) {
  const std::set<std::string> s(subjects.begin(), subjects.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    if (s.count(m.rows[i].subject_id)) rows.push_back(i);
  return rows;
}

inline std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// --- option state ---------------------------------------------------------------

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  // synth
  std::string out_dir;
  std::optional<std::size_t> per_class, n_points, input_points, epochs, latent_dim, batch, folds_opt;
  std::optional<double> noise_um, smoothing, tol;
  // extract
  std::string volume, out;
  std::optional<std::string> layers;
  // train / eval / embed / morph
  std::string manifest, checkpoint, set = "test", embedding, pca, clusters, from_subject, from_centroid, to_centroid;
  std::optional<std::size_t> steps;
  std::size_t folds = 5;
  std::string cloud;
  double y_center = 0.0;
};

inline RunConfig base_config(const Options& o) {
  return o.config.empty() ? RunConfig{} : load_run_config(o.config);
}

inline void finish_config(RunConfig& c) {
  c.train.seed = c.seeds.train;
  c.validate();
}

inline EpochCallback progress(const Streams& s, const std::string& prefix = "") {
  return [&s, prefix](const EpochLog& e) {
    if (s.quiet) return;
    s.err << prefix << "epoch " << e.epoch << " train " << format_double(e.train_loss) << " val "
          << format_double(e.val_loss) << '\n';
  };
}

// --- subcommands ------------------------------------------------------------------

inline int run_synth(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  if (o.per_class) c.synth.per_class = *o.per_class;
  if (o.n_points) c.synth.n_points = *o.n_points;
  if (o.noise_um) c.synth.noise_um = *o.noise_um;
  if (o.layers) c.synth.layers = LayerSet::parse(*o.layers);
  if (o.seed) c.seeds.synth = *o.seed;
  finish_config(c);
  DatasetOptions d;
  d.per_class_count = c.synth.per_class;
  d.n_points = c.synth.n_points;
  d.noise_um = c.synth.noise_um;
  d.seed = c.seeds.synth;
  d.priors = c.synth.priors;
  d.generate = {c.synth.raster, c.synth.layers};
  d.cohort = c.synth.cohort;
  const auto m = generate_dataset(o.out_dir, d);
  write_provenance(o.out_dir, "synth", c);
  if (!s.quiet) s.err << "wrote " << m.rows.size() << " clouds to " << o.out_dir << '\n';
  return kExitOk;
}

inline int run_extract(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  if (o.n_points) c.extract.target_points = *o.n_points;
  if (o.layers) c.extract.layers = LayerSet::parse(*o.layers);
  if (o.seed) c.seeds.extract = *o.seed;
  finish_config(c);
  const auto vol = read_segv(o.volume);
  const auto cloud = extract_cloud(vol, {c.extract.layers, c.extract.target_points, c.seeds.extract, c.extract.method});
  write_onhpc(o.out, cloud);
  write_provenance(parent_or_cwd(o.out), "extract", c);
  if (!s.quiet) s.err << "wrote " << cloud.size() << " points to " << o.out << '\n';
  return kExitOk;
}

inline void apply_train_overrides(const Options& o, RunConfig& c) {
  if (o.epochs) c.train.max_epochs = *o.epochs;
  if (o.latent_dim) c.train.model.encoder.latent_dim = *o.latent_dim;
  if (o.input_points) c.train.model.encoder.input_points = *o.input_points;
  if (o.batch) c.train.batch_size = *o.batch;
  if (o.seed) c.seeds.train = *o.seed;
  finish_config(c);
}

inline int run_train(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  apply_train_overrides(o, c);
  const auto tc = c.train_config();
  const auto m = read_manifest(o.manifest);
  const auto data = load_dataset(m, tc.model.encoder.input_points, tc.seed);
  const auto sp = split(m, tc.ratios, tc.seed);
  const auto res = train(tc, m, data, sp, progress(s));
  const fs::path dir = o.out_dir;
  ensure_dir(dir);
  save_checkpoint((dir / "model.ckpt").string(), res.checkpoint);
  write_text_file((dir / "training_log.csv").string(), training_log_csv(res.log));
  auto report = metrics_json(evaluate(model_from(res.checkpoint), data, sp.test));
  report["set"] = "test";
  report["best_epoch"] = res.checkpoint.epoch;
  write_text_file((dir / "metrics.json").string(), json_text(report));
  write_provenance(dir, "train", c);
  s.out << json_text(report);
  return kExitOk;
}

inline int run_eval(const Options& o, const Streams& s) {
  const auto ck = load_checkpoint(o.checkpoint);
  const auto m = read_manifest(o.manifest);
  const auto data = load_dataset(m, ck.config.model.encoder.input_points, ck.config.seed);
  std::vector<std::size_t> rows;
  if (o.set == "test") rows = rows_for_subjects(m, ck.test_subjects);
  else if (o.set == "val") rows = rows_for_subjects(m, ck.val_subjects);
  else if (o.set == "train") rows = rows_for_subjects(m, ck.train_subjects);
  else for (std::size_t i = 0; i < m.rows.size(); ++i) rows.push_back(i);
  if (rows.empty()) throw ValidationError("eval: no manifest rows belong to the '" + o.set + "' set of this checkpoint");
  auto report = metrics_json(evaluate(model_from(ck), data, rows));
  report["set"] = o.set;
  report["best_epoch"] = ck.epoch;
  if (!o.out.empty()) {
    ensure_dir(parent_or_cwd(o.out));
    write_text_file(o.out, json_text(report));
    RunConfig c;
    c.train = ck.config;
    c.seeds.train = ck.config.seed;
    write_provenance(parent_or_cwd(o.out), "eval", c);
  }
  s.out << json_text(report);
  return kExitOk;
}

inline int run_crossval(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  apply_train_overrides(o, c);
  const auto tc = c.train_config();
  const auto m = read_manifest(o.manifest);
  const auto data = load_dataset(m, tc.model.encoder.input_points, tc.seed);
  const auto cv = crossval(tc, m, data, o.folds, [&](std::size_t f, const EpochLog& e) {
    progress(s, "fold " + std::to_string(f) + " ")(e);
  });
  const fs::path dir = o.out_dir;
  ensure_dir(dir);
  std::string csv = "fold,micro_auc,accuracy,mean_chamfer,best_epoch\n";
  for (const auto& f : cv.folds) {
    csv += std::to_string(f.fold) + ',' + format_double(f.metrics.cls.micro_auc) + ',' +
           format_double(f.metrics.cls.accuracy) + ',' + format_double(f.metrics.mean_chamfer) + ',' +
           std::to_string(f.best_epoch) + '\n';
  }
  write_text_file((dir / "crossval.csv").string(), csv);
  nlohmann::ordered_json summary;
  for (const auto& [k, v] : cv.summary) summary[k] = {{"mean", v.mean}, {"sd", v.sd}};
  write_text_file((dir / "crossval_summary.json").string(), json_text(summary));
  write_provenance(dir, "crossval", c);
  s.out << json_text(summary);
  return kExitOk;
}

inline int run_ablate(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  apply_train_overrides(o, c);
  const auto tc = c.train_config();
  const auto m = read_manifest(o.manifest);
  const auto data = load_dataset(m, tc.model.encoder.input_points, tc.seed);
  const auto rows = ablate_layers(tc, m, data, default_groupings(), o.folds_opt.value_or(0),
                                  [&](const std::string& g, const EpochLog& e) { progress(s, g + " ")(e); });
  const fs::path dir = o.out_dir;
  ensure_dir(dir);
  const auto csv = ablation_csv(rows);
  write_text_file((dir / "ablation.csv").string(), csv);
  write_provenance(dir, "ablate-layers", c);
  s.out << csv;
  return kExitOk;
}

inline int run_sweep(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  apply_train_overrides(o, c);
  const auto tc = c.train_config();
  const auto m = read_manifest(o.manifest);
  const auto data = load_dataset(m, tc.model.encoder.input_points, tc.seed);
  const fs::path dir = o.out_dir;
  ensure_dir(dir);
  const auto rows = latent_sweep(tc, m, data, dir, [&](std::size_t k, const EpochLog& e) {
    progress(s, "k=" + std::to_string(k) + " ")(e);
  });
  const auto csv = sweep_csv(rows);
  write_text_file((dir / "sweep.csv").string(), csv);
  write_provenance(dir, "latent-sweep", c);
  s.out << csv;
  return kExitOk;
}

inline int run_embed(const Options& o, const Streams& s) {
  const auto ck = load_checkpoint(o.checkpoint);
  const auto m = read_manifest(o.manifest);
  const auto data = load_dataset(m, ck.config.model.encoder.input_points, ck.config.seed);
  const auto net = model_from(ck);
  std::vector<Eigen::VectorXd> latents;
  for (const auto& smp : data) latents.push_back(net.encode(cloud_xyz(smp.cloud)).transpose());
  // The projection is fitted on training subjects only and then applied to all.
  std::vector<Eigen::VectorXd> fit;
  for (auto r : rows_for_subjects(m, ck.train_subjects)) fit.push_back(latents[r]);
  if (fit.empty()) throw ValidationError("embed: no manifest rows belong to the checkpoint's training set");
  const auto pca = pca_fit(fit);
  std::vector<EmbeddingPoint> pts;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto e = pca_forward(pca, latents[i]);
    pts.push_back({data[i].subject_id, e[0], e[1], data[i].label, std::nullopt});
  }
  const fs::path out = o.out;
  ensure_dir(parent_or_cwd(out));
  write_text_file(out.string(), embedding_csv(pts));
  write_text_file((parent_or_cwd(out) / "pca.json").string(), to_json(pca).dump() + "\n");
  RunConfig c;
  c.train = ck.config;
  c.seeds.train = ck.config.seed;
  write_provenance(parent_or_cwd(out), "embed", c);
  if (!s.quiet) s.err << "embedded " << pts.size() << " clouds; PCA fitted on " << fit.size() << '\n';
  return kExitOk;
}

inline int run_cluster(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  if (o.seed) c.seeds.cluster = *o.seed;
  finish_config(c);
  auto pts = parse_embedding_csv(read_text_file(o.embedding), o.embedding);
  std::vector<Vec2> xy;
  for (const auto& p : pts) xy.push_back(p.xy());
  const auto km = kmeans_fit(xy, kClusterCount, c.seeds.cluster);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i].cluster = km.assignments[i];
  const fs::path out = o.out.empty() ? fs::path(o.embedding) : fs::path(o.out);
  ensure_dir(parent_or_cwd(out));
  write_text_file(out.string(), embedding_csv(pts));
  nlohmann::ordered_json j;
  j["centroids"] = nlohmann::ordered_json::array();
  for (const auto& v : km.centroids) j["centroids"].push_back({v[0], v[1]});
  j["iterations"] = km.iterations;
  j["objective"] = km.objective;
  std::vector<ClassLabel> cls;
  std::vector<std::size_t> ids;
  for (const auto& p : pts)
    if (p.label) {
      cls.push_back(*p.label);
      ids.push_back(*p.cluster);
    }
  if (!cls.empty()) {
    const auto mt = match_classes(cls, ids);
    nlohmann::ordered_json match;
    for (int k = 0; k < kClassCount; ++k) match[std::string(kClassNames[k])] = mt.cluster_of[k];
    j["class_cluster"] = match;
    j["coverage"] = mt.coverage();
  }
  write_text_file((parent_or_cwd(out) / "clusters.json").string(), json_text(j));
  write_provenance(parent_or_cwd(out), "cluster", c);
  if (!s.quiet) s.err << "clustered " << pts.size() << " points in " << km.iterations << " iterations\n";
  return kExitOk;
}

// Centroid of the k-means cluster matched to `label` on the labeled points.
inline Vec2 class_centroid(const std::vector<EmbeddingPoint>& pts, const ClusterModel& km, ClassLabel label) {
  if (km.k() != kClusterCount) throw ValidationError("morph: expected " + std::to_string(kClusterCount) + " centroids");
  std::vector<ClassLabel> cls;
  std::vector<std::size_t> ids;
  for (const auto& p : pts) {
    if (!p.label) continue;
    cls.push_back(*p.label);
    ids.push_back(p.cluster ? *p.cluster : km.assign(p.xy()));
  }
  if (cls.empty()) throw ValidationError("morph: embedding has no class labels to match clusters against");
  return km.centroids[match_classes(cls, ids).cluster_of[class_code(label)]];
}

inline int run_morph(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  if (o.smoothing) c.latent.smoothing = *o.smoothing;
  if (o.tol) c.latent.slice_tol = *o.tol;
  if (o.steps) {
    c.latent.steps = *o.steps;
    // Keep the default five-stage rendering proportional to the step count.
    if (o.config.empty()) {
      c.latent.stages.clear();
      for (std::size_t q = 0; q <= 4; ++q) c.latent.stages.push_back(q * c.latent.steps / 4);
      c.latent.stages.erase(std::unique(c.latent.stages.begin(), c.latent.stages.end()), c.latent.stages.end());
    }
  }
  if (o.from_subject.empty() == o.from_centroid.empty()) {
    throw CLI::ValidationError("morph", "exactly one of --from-subject or --from-centroid is required");
  }
  const auto ck = load_checkpoint(o.checkpoint);
  c.train = ck.config;
  c.seeds.train = ck.config.seed;
  finish_config(c);
  if (ck.exemplars.empty()) throw ValidationError("morph: checkpoint has no layer exemplars");
  const fs::path emb_dir = parent_or_cwd(o.embedding);
  const auto pts = parse_embedding_csv(read_text_file(o.embedding), o.embedding);
  const auto pca_path = o.pca.empty() ? (emb_dir / "pca.json").string() : o.pca;
  const auto clusters_path = o.clusters.empty() ? (emb_dir / "clusters.json").string() : o.clusters;
  const auto pca = pca_from_json(nlohmann::json::parse(read_text_file(pca_path)));
  const auto km = clusters_from_json(nlohmann::json::parse(read_text_file(clusters_path)));

  Vec2 start;
  if (!o.from_subject.empty()) {
    auto it = std::find_if(pts.begin(), pts.end(), [&](const EmbeddingPoint& p) { return p.id == o.from_subject; });
    if (it == pts.end()) throw ValidationError("morph: subject " + o.from_subject + " not in " + o.embedding);
    start = it->xy();
  } else {
    start = class_centroid(pts, km, parse_class(o.from_centroid));
  }
  const Vec2 target = class_centroid(pts, km, parse_class(o.to_centroid));
  const auto net = model_from(ck);
  const auto traj = morph(pca, net, start, target, c.latent.steps);

  const fs::path dir = o.out_dir;
  ensure_dir(dir);
  std::string csv = "stage,pd1,pd2\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    csv += std::to_string(i) + ',' + format_double(traj[i].embedding[0]) + ',' + format_double(traj[i].embedding[1]) + '\n';
  }
  write_text_file((dir / "trajectory.csv").string(), csv);
  const auto stages = render_morph(traj, ck.exemplars, dir, c.latent.smoothing, c.latent.slice_tol, c.latent.stages);
  std::string summary = "stage,rnfl_anterior_cup_depth\n";
  for (const auto& st : stages) {
    char name[32];
    std::snprintf(name, sizeof name, "stage_%02zu.onhpc", st.stage);
    write_onhpc((dir / name).string(), labeled_decoding(ck.exemplars, traj[st.stage].latent, traj[st.stage].cloud));
    std::string depth;
    for (const auto& cv : st.curves)
      if (cv.layer == LayerLabel::RNFL && cv.side == BoundarySide::Anterior) depth = format_double(cup_depth(cv));
    summary += std::to_string(st.stage) + ',' + depth + '\n';
  }
  write_text_file((dir / "stages.csv").string(), summary);
  write_provenance(dir, "morph", c);
  if (!s.quiet) s.err << "rendered " << stages.size() << " stages to " << dir.string() << '\n';
  return kExitOk;
}

inline int run_render_slice(const Options& o, const Streams& s) {
  RunConfig c = base_config(o);
  if (o.smoothing) c.latent.smoothing = *o.smoothing;
  if (o.tol) c.latent.slice_tol = *o.tol;
  finish_config(c);
  const fs::path cloud_path = o.cloud;
  const auto cloud = read_onhpc(o.cloud);
  const auto curves = fit_boundary_splines(central_slice(cloud, o.y_center, c.latent.slice_tol), c.latent.smoothing);
  const fs::path dir = o.out_dir.empty() ? parent_or_cwd(cloud_path) : fs::path(o.out_dir);
  ensure_dir(dir);
  const auto stem = cloud_path.stem().string();
  write_text_file((dir / (stem + ".slice.csv")).string(), curves_csv(curves));
  write_text_file((dir / (stem + ".slice.svg")).string(), curves_svg(curves, {}, stem));
  write_provenance(dir, "render-slice", c);
  if (!s.quiet) s.err << "fitted " << curves.size() << " boundary curves\n";
  return kExitOk;
}

// --- dispatch -------------------------------------------------------------------------

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Optic nerve head phenotyping from OCT-derived point clouds", "onhpheno"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (onhcfg/1 JSON)");
    sub->add_flag("--quiet", o.quiet, "Suppress progress output");
  };
  auto seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Seed for all randomness of this command"); };
  auto train_flags = [&](CLI::App* sub) {
    common(sub);
    seed(sub);
    sub->add_option("--manifest", o.manifest, "Dataset manifest CSV")->required();
    sub->add_option("--out-dir", o.out_dir, "Output directory")->required();
    sub->add_option("--epochs", o.epochs, "Training epochs");
    sub->add_option("--latent-dim", o.latent_dim, "Latent code size k");
    sub->add_option("--input-points", o.input_points, "Points per cloud fed to the encoder");
    sub->add_option("--batch", o.batch, "Minibatch size");
  };

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic dataset");
  common(synth);
  seed(synth);
  synth->add_option("--out-dir", o.out_dir, "Output directory")->required();
  synth->add_option("--per-class", o.per_class, "Clouds per class");
  synth->add_option("--points", o.n_points, "Points per cloud");
  synth->add_option("--noise", o.noise_um, "Axial noise sigma in micrometres");
  synth->add_option("--layers", o.layers, "Comma separated layer names");

  auto* extract = app.add_subcommand("extract", "Extract a boundary point cloud from a segmented volume");
  common(extract);
  seed(extract);
  extract->add_option("--volume", o.volume, "SEGV1 label volume")->required();
  extract->add_option("--out", o.out, "Output ONHPC file")->required();
  extract->add_option("--points", o.n_points, "Target point count");
  extract->add_option("--layers", o.layers, "Comma separated layer names");

  auto* trn = app.add_subcommand("train", "Train the encoder/decoder/classifier ensemble");
  train_flags(trn);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a subject set");
  common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  ev->add_option("--manifest", o.manifest, "Dataset manifest CSV")->required();
  ev->add_option("--set", o.set, "Subject set")->check(CLI::IsMember({"test", "val", "train", "all"}));
  ev->add_option("--out", o.out, "Also write the metrics JSON here");

  auto* cv = app.add_subcommand("crossval", "Subject-disjoint stratified k-fold cross-validation");
  train_flags(cv);
  cv->add_option("--folds", o.folds, "Number of folds")->check(CLI::Range(2, 1000));

  auto* abl = app.add_subcommand("ablate-layers", "Retrain per layer grouping and compare AUC");
  train_flags(abl);
  abl->add_option("--folds", o.folds_opt, "Cross-validate each grouping with this many folds");

  auto* sweep = app.add_subcommand("latent-sweep", "Train at k = 128, 256, 512, 1024");
  train_flags(sweep);

  auto* emb = app.add_subcommand("embed", "Project latent codes onto two principal directions");
  common(emb);
  emb->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  emb->add_option("--manifest", o.manifest, "Dataset manifest CSV")->required();
  emb->add_option("--out", o.out, "Embedding CSV")->required();

  auto* clu = app.add_subcommand("cluster", "k-means (k = 4) on an embedding");
  common(clu);
  seed(clu);
  clu->add_option("--embedding", o.embedding, "Embedding CSV")->required();
  clu->add_option("--out", o.out, "Clustered embedding CSV (default: rewrite the input)");

  auto* mor = app.add_subcommand("morph", "Walk the embedding towards a class centroid and render slices");
  common(mor);
  mor->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  mor->add_option("--embedding", o.embedding, "Clustered embedding CSV")->required();
  mor->add_option("--pca", o.pca, "PCA model (default: pca.json beside the embedding)");
  mor->add_option("--clusters", o.clusters, "Cluster model (default: clusters.json beside the embedding)");
  auto* fs_opt = mor->add_option("--from-subject", o.from_subject, "Start at this subject's embedding point");
  auto* fc_opt = mor->add_option("--from-centroid", o.from_centroid, "Start at the centroid matched to this class");
  fs_opt->excludes(fc_opt);
  mor->add_option("--to-centroid", o.to_centroid, "Target class centroid")->required();
  mor->add_option("--steps", o.steps, "Number of increments")->check(CLI::PositiveNumber);
  mor->add_option("--smoothing", o.smoothing, "Spline smoothing parameter");
  mor->add_option("--tol", o.tol, "Half-width of the central slab (normalized units)");
  mor->add_option("--out-dir", o.out_dir, "Output directory")->required();

  auto* rs = app.add_subcommand("render-slice", "Fit boundary splines to a cloud's central slice");
  common(rs);
  rs->add_option("--cloud", o.cloud, "ONHPC cloud")->required();
  rs->add_option("--smoothing", o.smoothing, "Spline smoothing parameter");
  rs->add_option("--tol", o.tol, "Half-width of the slab (normalized units)");
  rs->add_option("--y-center", o.y_center, "Slab centre (normalized units)");
  rs->add_option("--out-dir", o.out_dir, "Output directory (default: beside the cloud)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  Streams s{out, err, o.quiet};
  auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (name == "synth") return run_synth(o, s);
    if (name == "extract") return run_extract(o, s);
    if (name == "train") return run_train(o, s);
    if (name == "eval") return run_eval(o, s);
    if (name == "crossval") return run_crossval(o, s);
    if (name == "ablate-layers") return run_ablate(o, s);
    if (name == "latent-sweep") return run_sweep(o, s);
    if (name == "embed") return run_embed(o, s);
    if (name == "cluster") return run_cluster(o, s);
    if (name == "morph") return run_morph(o, s);
    if (name == "render-slice") return run_render_slice(o, s);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace onh::cli
