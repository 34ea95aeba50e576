#pragma once

// Subject-level splitting, balancing, the joint training loop, checkpoints,
// evaluation, cross-validation and the layer / latent-size sweeps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "onh/diff.hpp"
#include "onh/error.hpp"
#include "onh/log.hpp"
#include "onh/metrics.hpp"
#include "onh/model.hpp"
#include "onh/onhpc.hpp"
#include "onh/pointcloud.hpp"
#include "onh/synthgen.hpp"

namespace onh {

inline constexpr const char* kVersion = "onhpheno 1.0.0";

// --- configuration -------------------------------------------------------------

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  double learning_rate = 0.001;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 1000;
  bool augment = true;
  AugmentParams augmentation;
  std::uint64_t seed = 0;
  std::array<double, 3> ratios = {0.70, 0.15, 0.15};  // train, val, test

  void validate() const {
    model.validate();
    weights.validate();
    if (!(learning_rate > 0)) throw ValidationError("train: learning_rate must be > 0");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    for (double r : ratios)
      if (!(r >= 0)) throw ValidationError("train: ratios must be >= 0");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
      throw ValidationError("train: split ratios must sum to 1");
    }
    if (augmentation.jitter_sigma < 0 || augmentation.max_rot_deg < 0 || augmentation.max_shift < 0) {
      throw ValidationError("train: augmentation parameters must be >= 0");
    }
  }
};

namespace detail {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& ctx) {
  if (!j.is_object()) throw ValidationError(ctx + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ValidationError(ctx + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(ctx + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline detail::ojson to_json(const ModelConfig& m) {
  detail::ojson j;
  j["latent_dim"] = m.encoder.latent_dim;
  j["input_points"] = m.encoder.input_points;
  j["encoder_widths"] = m.encoder.widths;
  j["feature_transform"] = m.encoder.feature_transform;
  j["transform_after"] = m.encoder.transform_after;
  j["tnet_widths"] = m.encoder.tnet_widths;
  j["feature_transform_reg"] = m.feature_transform_reg;
  j["n_patches"] = m.decoder.n_patches;
  j["points_per_patch"] = m.decoder.points_per_patch;
  j["grid_rows"] = m.decoder.grid_rows;
  j["grid_cols"] = m.decoder.grid_cols;
  j["decoder_widths"] = m.decoder.widths;
  j["classifier_widths"] = m.classifier.widths;
  return j;
}

inline ModelConfig model_config_from_json(const detail::json& j, ModelConfig m = {}) {
  const std::string ctx = "model";
  detail::reject_unknown(j,
                         {"latent_dim", "input_points", "encoder_widths", "feature_transform", "transform_after",
                          "tnet_widths", "feature_transform_reg", "n_patches", "points_per_patch", "grid_rows",
                          "grid_cols", "decoder_widths", "classifier_widths"},
                         ctx);
  detail::read_key(j, "latent_dim", m.encoder.latent_dim, ctx);
  detail::read_key(j, "input_points", m.encoder.input_points, ctx);
  detail::read_key(j, "encoder_widths", m.encoder.widths, ctx);
  detail::read_key(j, "feature_transform", m.encoder.feature_transform, ctx);
  detail::read_key(j, "transform_after", m.encoder.transform_after, ctx);
  detail::read_key(j, "tnet_widths", m.encoder.tnet_widths, ctx);
  detail::read_key(j, "feature_transform_reg", m.feature_transform_reg, ctx);
  detail::read_key(j, "n_patches", m.decoder.n_patches, ctx);
  detail::read_key(j, "points_per_patch", m.decoder.points_per_patch, ctx);
  detail::read_key(j, "grid_rows", m.decoder.grid_rows, ctx);
  detail::read_key(j, "grid_cols", m.decoder.grid_cols, ctx);
  detail::read_key(j, "decoder_widths", m.decoder.widths, ctx);
  detail::read_key(j, "classifier_widths", m.classifier.widths, ctx);
  m.validate();
  return m;
}

inline detail::ojson to_json(const TrainConfig& c) {
  detail::ojson j;
  j["lr"] = c.learning_rate;
  j["batch"] = c.batch_size;
  j["epochs"] = c.max_epochs;
  j["w_rec"] = c.weights.w_rec;
  j["w_cls"] = c.weights.w_cls;
  j["ratios"] = c.ratios;
  j["augment"] = c.augment;
  j["augmentation"] = {{"jitter_sigma", c.augmentation.jitter_sigma},
                       {"max_rot_deg", c.augmentation.max_rot_deg},
                       {"max_shift", c.augmentation.max_shift}};
  return j;
}

// Reads the `train` section onto `c` (model and seed are separate sections).
inline void train_section_from_json(const detail::json& j, TrainConfig& c) {
  const std::string ctx = "train";
  detail::reject_unknown(j, {"lr", "batch", "epochs", "w_rec", "w_cls", "ratios", "augment", "augmentation"}, ctx);
  detail::read_key(j, "lr", c.learning_rate, ctx);
  detail::read_key(j, "batch", c.batch_size, ctx);
  detail::read_key(j, "epochs", c.max_epochs, ctx);
  detail::read_key(j, "w_rec", c.weights.w_rec, ctx);
  detail::read_key(j, "w_cls", c.weights.w_cls, ctx);
  detail::read_key(j, "ratios", c.ratios, ctx);
  detail::read_key(j, "augment", c.augment, ctx);
  if (j.contains("augmentation")) {
    const auto& a = j.at("augmentation");
    detail::reject_unknown(a, {"jitter_sigma", "max_rot_deg", "max_shift"}, "train.augmentation");
    detail::read_key(a, "jitter_sigma", c.augmentation.jitter_sigma, "train.augmentation");
    detail::read_key(a, "max_rot_deg", c.augmentation.max_rot_deg, "train.augmentation");
    detail::read_key(a, "max_shift", c.augmentation.max_shift, "train.augmentation");
  }
}

inline detail::ojson full_json(const TrainConfig& c) {
  detail::ojson j;
  j["seed"] = c.seed;
  j["model"] = to_json(c.model);
  j["train"] = to_json(c);
  return j;
}

inline TrainConfig train_config_from_full_json(const detail::json& j) {
  detail::reject_unknown(j, {"seed", "model", "train"}, "config");
  TrainConfig c;
  detail::read_key(j, "seed", c.seed, "config");
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) train_section_from_json(j.at("train"), c);
  c.validate();
  return c;
}

// --- data ----------------------------------------------------------------------

struct Sample {
  std::size_t row = 0;  // manifest row
  std::string subject_id;
  ClassLabel label = ClassLabel::H;
  std::string cohort;
  PointCloud cloud;  // exactly input_points points
};

using Dataset = std::vector<Sample>;

inline std::uint64_t resample_seed(std::uint64_t seed, std::size_t row) { return derive_seed(seed, 0x4E5, row); }

inline Sample make_sample(const Manifest& m, std::size_t row, PointCloud cloud, std::size_t input_points,
                          std::uint64_t seed) {
  const auto& r = m.rows[row];
  if (cloud.class_label && *cloud.class_label != r.label) {
    throw ValidationError(m.resolve(r).string() + ": class in file disagrees with manifest");
  }
  if (cloud.size() != input_points) cloud = resample_to(cloud, input_points, resample_seed(seed, row));
  return {row, r.subject_id, r.label, r.cohort, std::move(cloud)};
}

// Loads every manifest row; clouds whose size differs from the encoder's
// input are resampled (FPS down, seeded repetition up).
inline Dataset load_dataset(const Manifest& m, std::size_t input_points, std::uint64_t seed) {
  if (m.rows.empty()) throw ValidationError("manifest has no rows");
  Dataset out;
  out.reserve(m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    out.push_back(make_sample(m, i, read_onhpc(m.resolve(m.rows[i]).string()), input_points, seed));
  }
  return out;
}

// --- splitting -------------------------------------------------------------------

struct Split {
  std::vector<std::size_t> train, val, test;  // manifest row indices, ascending
};

namespace detail {

// Subjects per class in sorted id order; a subject must carry one class.
inline std::array<std::vector<std::string>, kClassCount> subjects_by_class(const Manifest& m) {
  std::map<std::string, ClassLabel> cls;
  for (const auto& r : m.rows) {
    auto [it, inserted] = cls.emplace(r.subject_id, r.label);
    if (!inserted && it->second != r.label) {
      throw ValidationError("subject " + r.subject_id + " appears with two different classes");
    }
  }
  std::array<std::vector<std::string>, kClassCount> out;
  for (const auto& [s, c] : cls) out[class_code(c)].push_back(s);
  return out;
}

// Largest-remainder apportionment of n items to the given ratios; ties go to
// the earlier slot.
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& r) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    const double q = static_cast<double>(n) * r[i];
    out[i] = static_cast<std::size_t>(std::floor(q + 1e-9));
    rem[i] = q - static_cast<double>(out[i]);
    used += out[i];
  }
  while (used < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best] + 1e-12) best = i;
    ++out[best];
    rem[best] = -1.0;
    ++used;
  }
  return out;
}

inline std::vector<std::size_t> rows_of(const Manifest& m, const std::set<std::string>& subjects) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    if (subjects.count(m.rows[i].subject_id)) rows.push_back(i);
  return rows;
}

}  // namespace detail

inline Split split(const Manifest& m, const std::array<double, 3>& ratios, std::uint64_t seed) {
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
  const auto by_class = detail::subjects_by_class(m);
  std::set<std::string> tr, va, te;
  for (int c = 0; c < kClassCount; ++c) {
    auto subjects = by_class[c];
    if (subjects.size() < 3) {
      throw ValidationError("class " + std::string(kClassNames[c]) + " has " + std::to_string(subjects.size()) +
                            " subjects; at least 3 are needed to stratify");
    }
    std::mt19937_64 rng(derive_seed(seed, 0x5B17, static_cast<std::uint64_t>(c)));
    std::shuffle(subjects.begin(), subjects.end(), rng);
    auto n = detail::apportion(subjects.size(), ratios);
    // Every set needs a subject of every class.
    for (int s = 1; s < 3; ++s) {
      if (n[s] == 0) {
        ++n[s];
        --n[0];
      }
    }
    std::size_t i = 0;
    for (; i < n[0]; ++i) tr.insert(subjects[i]);
    for (; i < n[0] + n[1]; ++i) va.insert(subjects[i]);
    for (; i < subjects.size(); ++i) te.insert(subjects[i]);
  }
  return {detail::rows_of(m, tr), detail::rows_of(m, va), detail::rows_of(m, te)};
}

// Oversamples every (class, cohort) cell to the largest cell by cycling
// through its rows; cells are emitted in (class, cohort) order.
inline std::vector<std::size_t> balance(const Manifest& m, const std::vector<std::size_t>& train) {
  if (train.empty()) throw ValidationError("balance: empty training set");
  std::map<std::pair<int, std::string>, std::vector<std::size_t>> cells;
  for (auto r : train) cells[{class_code(m.rows[r].label), m.rows[r].cohort}].push_back(r);
  std::size_t target = 0;
  for (const auto& [k, rows] : cells) target = std::max(target, rows.size());
  std::vector<std::size_t> out;
  out.reserve(target * cells.size());
  for (const auto& [k, rows] : cells)
    for (std::size_t i = 0; i < target; ++i) out.push_back(rows[i % rows.size()]);
  return out;
}

// --- checkpoints --------------------------------------------------------------------

struct Checkpoint {
  TrainConfig config;
  std::size_t epoch = 0;
  double val_loss = 0.0;
  std::vector<std::string> train_subjects, val_subjects, test_subjects;
  LayerExemplars exemplars;  // decoder colouring; empty when not calibrated
  diff::ParamStore params;
};

inline void round_to_f32(diff::ParamStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& v = store.tensor(i).values;
    v = v.cast<float>().cast<double>();
  }
}

inline EnsembleNet model_from(const Checkpoint& c) { return EnsembleNet(c.config.model, c.params); }

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + 4 > in.size()) throw IoError(path, "truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

inline constexpr const char* kExemplarLatents = "exemplars.latent";
inline constexpr const char* kExemplarLayers = "exemplars.layers";

// Record: name, dims, then the values (row-major storage order) as f32.
inline void put_record(std::string& out, const std::string& name, const diff::Shape& shape, const Matrix& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const float f = static_cast<float>(m.data()[k]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

inline diff::Shape matrix_shape(const Matrix& m) {
  return {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

// Reads one record's header; returns its name and dims.
inline std::pair<std::string, diff::Shape> get_record_header(const std::string& in, std::size_t& pos,
                                                             const std::string& path) {
  const auto name_len = get_u32(in, pos, path);
  if (pos + name_len > in.size()) throw IoError(path, "truncated checkpoint");
  std::string name = in.substr(pos, name_len);
  pos += name_len;
  const auto ndims = get_u32(in, pos, path);
  diff::Shape shape;
  for (std::uint32_t d = 0; d < ndims; ++d) shape.push_back(get_u32(in, pos, path));
  return {std::move(name), std::move(shape)};
}

inline void get_values(const std::string& in, std::size_t& pos, const std::string& path, Matrix& m) {
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const std::uint32_t bits = get_u32(in, pos, path);
    float v;
    std::memcpy(&v, &bits, 4);
    m.data()[k] = v;
  }
}

inline std::vector<std::string> subjects_of(const Manifest& m, const std::vector<std::size_t>& rows) {
  std::set<std::string> s;
  for (auto r : rows) s.insert(m.rows[r].subject_id);
  return {s.begin(), s.end()};
}

}  // namespace detail

inline std::string checkpoint_bytes(const Checkpoint& c) {
  detail::ojson head;
  head["version"] = kVersion;
  head["config"] = full_json(c.config);
  head["epoch"] = c.epoch;
  head["val_loss"] = c.val_loss;
  head["split"] = {{"train", c.train_subjects}, {"val", c.val_subjects}, {"test", c.test_subjects}};
  const std::string head_text = head.dump();

  std::string out = "ONHCKPT1";
  detail::put_u32(out, static_cast<std::uint32_t>(head_text.size()));
  out += head_text;
  // Parameter records, then the two exemplar records when calibrated.
  detail::put_u32(out, static_cast<std::uint32_t>(c.params.size() + (c.exemplars.empty() ? 0 : 2)));
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const auto& t = c.params.tensor(i);
    detail::put_record(out, c.params.name(i), t.shape, t.values);
  }
  if (!c.exemplars.empty()) {
    const auto& ex = c.exemplars;
    Matrix codes(static_cast<Eigen::Index>(ex.size()), static_cast<Eigen::Index>(ex.layers.front().size()));
    for (std::size_t e = 0; e < ex.size(); ++e)
      for (std::size_t p = 0; p < ex.layers[e].size(); ++p)
        codes(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(p)) = layer_code(ex.layers[e][p]);
    detail::put_record(out, detail::kExemplarLatents, detail::matrix_shape(ex.latents), ex.latents);
    detail::put_record(out, detail::kExemplarLayers, detail::matrix_shape(codes), codes);
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open for writing");
  const auto bytes = checkpoint_bytes(c);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(path, "write failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open");
  std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 8 || in.compare(0, 8, "ONHCKPT1") != 0) throw IoError(path, "not an ONHCKPT1 checkpoint");
  std::size_t pos = 8;
  const auto head_len = detail::get_u32(in, pos, path);
  if (pos + head_len > in.size()) throw IoError(path, "truncated checkpoint header");
  Checkpoint c;
  try {
    const auto head = nlohmann::json::parse(in.substr(pos, head_len));
    c.config = train_config_from_full_json(head.at("config"));
    c.epoch = head.at("epoch").get<std::size_t>();
    c.val_loss = head.at("val_loss").get<double>();
    const auto& sp = head.at("split");
    c.train_subjects = sp.at("train").get<std::vector<std::string>>();
    c.val_subjects = sp.at("val").get<std::vector<std::string>>();
    c.test_subjects = sp.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, std::string("bad checkpoint header: ") + e.what());
  }
  pos += head_len;

  EnsembleNet net(c.config.model, c.config.seed);
  c.params = net.params();
  const auto count = detail::get_u32(in, pos, path);
  if (count != c.params.size() && count != c.params.size() + 2) {
    throw IoError(path, "parameter count does not match the stored configuration");
  }
  for (std::uint32_t i = 0; i < c.params.size(); ++i) {
    const auto [name, shape] = detail::get_record_header(in, pos, path);
    auto& t = c.params.tensor(i);
    if (name != c.params.name(i)) throw IoError(path, "unexpected parameter '" + name + "'");
    if (shape != t.shape) throw IoError(path, "shape mismatch for '" + name + "'");
    detail::get_values(in, pos, path, t.values);
  }
  if (count > c.params.size()) {
    const auto [lname, lshape] = detail::get_record_header(in, pos, path);
    if (lname != detail::kExemplarLatents || lshape.size() != 2 || lshape[0] == 0 ||
        lshape[1] != c.config.model.encoder.latent_dim) {
      throw IoError(path, "bad exemplar latent record");
    }
    auto& ex = c.exemplars;
    ex.latents.resize(static_cast<Eigen::Index>(lshape[0]), static_cast<Eigen::Index>(lshape[1]));
    detail::get_values(in, pos, path, ex.latents);
    const auto [cname, cshape] = detail::get_record_header(in, pos, path);
    if (cname != detail::kExemplarLayers || cshape != diff::Shape{lshape[0], c.config.model.decoder.output_points()}) {
      throw IoError(path, "bad exemplar layer record");
    }
    Matrix codes(static_cast<Eigen::Index>(cshape[0]), static_cast<Eigen::Index>(cshape[1]));
    detail::get_values(in, pos, path, codes);
    for (Eigen::Index e = 0; e < codes.rows(); ++e) {
      std::vector<LayerLabel> labels;
      for (Eigen::Index p = 0; p < codes.cols(); ++p) {
        const double v = codes(e, p);
        if (!(v >= 0 && v < kLayerCount) || v != std::floor(v)) throw IoError(path, "bad exemplar layer code");
        labels.push_back(layer_from_code(static_cast<int>(v)));
      }
      ex.layers.push_back(std::move(labels));
    }
  }
  if (pos != in.size()) throw IoError(path, "trailing bytes after parameters");
  return c;
}

// --- evaluation ------------------------------------------------------------------------

struct SampleResult {
  std::size_t row = 0;
  std::array<double, kClassCount> probs{};
  double chamfer = 0.0;
};

struct EvalMetrics {
  ClassificationMetrics cls;
  double mean_chamfer = 0.0;
  std::vector<SampleResult> samples;
};

// Pure function of (model, samples); runs in f64.
inline EvalMetrics evaluate(const EnsembleNet& net, const Dataset& data, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw ValidationError("evaluate: empty set");
  EvalMetrics out;
  std::vector<std::array<double, kClassCount>> probs;
  std::vector<ClassLabel> truth;
  double cd_sum = 0.0;
  for (auto r : rows) {
    const auto& s = data.at(r);
    const Matrix xyz = cloud_xyz(s.cloud);
    const LatentCode z = net.encode(xyz);
    const Matrix p = net.classify(z);
    SampleResult res;
    res.row = r;
    for (int c = 0; c < kClassCount; ++c) res.probs[c] = p(0, c);
    res.chamfer = chamfer(net.decode(z), xyz);
    cd_sum += res.chamfer;
    probs.push_back(res.probs);
    truth.push_back(s.label);
    out.samples.push_back(res);
  }
  out.cls = classification_metrics(probs, truth);
  out.mean_chamfer = cd_sum / static_cast<double>(rows.size());
  return out;
}

inline detail::ojson metrics_json(const EvalMetrics& m) {
  detail::ojson j;
  j["n"] = m.samples.size();
  j["micro_auc"] = m.cls.micro_auc;
  detail::ojson per;
  for (int c = 0; c < kClassCount; ++c) {
    per[std::string(kClassNames[c])] = m.cls.class_auc[c] ? detail::ojson(*m.cls.class_auc[c]) : detail::ojson(nullptr);
  }
  j["class_auc"] = per;
  j["accuracy"] = m.cls.accuracy;
  j["mean_chamfer"] = m.mean_chamfer;
  detail::ojson cm = detail::ojson::array();
  for (const auto& row : m.cls.confusion) cm.push_back(row);
  j["confusion"] = cm;  // [truth][predicted], classes in H, HM, G, HMG order
  return j;
}

// --- training ----------------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_chamfer = 0.0;
  double val_ce = 0.0;
};

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_loss,val_loss,val_chamfer,val_ce\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.val_loss) + ',' +
           format_double(e.val_chamfer) + ',' + format_double(e.val_ce) + '\n';
  }
  return out;
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  Split split;
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {

template <typename S>
MatrixT<S> xyz_as(const PointCloud& cloud) {
  MatrixT<S> m(static_cast<Eigen::Index>(cloud.size()), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = static_cast<S>(cloud.points[i].x);
    m(r, 1) = static_cast<S>(cloud.points[i].y);
    m(r, 2) = static_cast<S>(cloud.points[i].z);
  }
  return m;
}

struct LossSum {
  double total = 0.0, chamfer = 0.0, ce = 0.0;
};

// Mean loss terms over `rows` without augmentation, in training precision.
inline LossSum mean_loss(const EnsembleNet& net, const diff::ParamMirror<float>& mirror, const Dataset& data,
                         const std::vector<std::size_t>& rows, const LossWeights& w) {
  LossSum s;
  for (auto r : rows) {
    diff::BasicGraph<float> g(&mirror);
    const auto& sample = data.at(r);
    Var x = g.constant(xyz_as<float>(sample.cloud));
    const auto f = net.forward(g, x);
    const auto terms = net.loss(g, f, x, sample.label, w);
    const double total = static_cast<double>(g.value(terms.total)(0, 0));
    if (!std::isfinite(total)) throw diff::NonFiniteError("non-finite loss on subject " + sample.subject_id);
    s.total += total;
    s.chamfer += terms.chamfer;
    s.ce += terms.cross_entropy;
  }
  const double n = static_cast<double>(rows.size());
  s.total /= n;
  s.chamfer /= n;
  s.ce /= n;
  return s;
}

}  // namespace detail

// Joint training of all three branches. Forward/backward run in f32 against
// f64 master weights; the checkpoint keeps the lowest-validation-loss epoch
// (epoch 0 = initialization), rounded to f32.
inline TrainResult train(const TrainConfig& cfg, const Manifest& m, const Dataset& data, const Split& sp,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.size() != m.rows.size()) throw ValidationError("train: dataset does not match manifest");
  if (sp.train.empty() || sp.val.empty()) throw ValidationError("train: empty training or validation set");
  for (const auto& s : data) {
    if (s.cloud.size() != cfg.model.encoder.input_points) {
      throw ValidationError("train: sample " + s.subject_id + " has " + std::to_string(s.cloud.size()) +
                            " points, model expects " + std::to_string(cfg.model.encoder.input_points));
    }
  }

  EnsembleNet net(cfg.model, derive_seed(cfg.seed, 0x1417));
  round_to_f32(net.params());
  diff::ParamMirror<float> mirror(net.params());
  diff::AdamState adam(net.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8});
  diff::BasicGradients<float> batch_grads(net.params());
  diff::Gradients grads(net.params());

  TrainResult result;
  result.split = sp;
  auto& ck = result.checkpoint;
  ck.config = cfg;
  ck.train_subjects = detail::subjects_of(m, sp.train);
  ck.val_subjects = detail::subjects_of(m, sp.val);
  ck.test_subjects = detail::subjects_of(m, sp.test);

  auto record = [&](const EpochLog& e) {
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
  };

  {
    const auto tr = detail::mean_loss(net, mirror, data, sp.train, cfg.weights);
    const auto va = detail::mean_loss(net, mirror, data, sp.val, cfg.weights);
    record({0, tr.total, va.total, va.chamfer, va.ce});
    ck.epoch = 0;
    ck.val_loss = va.total;
    ck.params = net.params();
  }

  const auto balanced = balance(m, sp.train);
  const std::uint64_t aug_base = derive_seed(cfg.seed, 0xA06);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto order = balanced;
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5A0F, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      batch_grads.set_zero();
      for (std::size_t k = start; k < end; ++k) {
        const auto& sample = data[order[k]];
        const PointCloud cloud =
            cfg.augment ? augment(sample.cloud, derive_seed(aug_base, epoch, k), cfg.augmentation) : sample.cloud;
        diff::BasicGraph<float> g(&mirror);
        Var x = g.constant(detail::xyz_as<float>(cloud));
        try {
          const auto f = net.forward(g, x);
          const auto terms = net.loss(g, f, x, sample.label, cfg.weights);
          g.backward(terms.total, &batch_grads, inv_b);
          loss_sum += static_cast<double>(g.value(terms.total)(0, 0));
        } catch (const diff::NonFiniteError& e) {
          throw diff::NonFiniteError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                                     ": " + e.what());
        }
      }
      grads.set_zero();
      grads += batch_grads;
      diff::adam_step(net.params(), grads, adam);
      mirror.refresh(net.params());
    }

    detail::LossSum va;
    try {
      va = detail::mean_loss(net, mirror, data, sp.val, cfg.weights);
    } catch (const diff::NonFiniteError& e) {
      throw diff::NonFiniteError("epoch " + std::to_string(epoch) + ", validation: " + e.what());
    }
    record({epoch, loss_sum / static_cast<double>(order.size()), va.total, va.chamfer, va.ce});
    if (va.total < ck.val_loss) {
      ck.epoch = epoch;
      ck.val_loss = va.total;
      ck.params = net.params();
      round_to_f32(ck.params);
    }
  }

  // Layer colouring for rendering: exemplars are the training clouds.
  const EnsembleNet best = model_from(ck);
  std::vector<PointCloud> calib;
  for (auto r : sp.train) calib.push_back(data[r].cloud);
  ck.exemplars = calibrate_layer_exemplars(best, calib);
  return result;
}

// --- cross-validation --------------------------------------------------------------------

struct FoldResult {
  std::size_t fold = 0;
  Split split;
  EvalMetrics metrics;
  std::size_t best_epoch = 0;
};

struct MeanSd {
  double mean = 0.0, sd = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  if (v.empty()) throw ValidationError("mean_sd: empty");
  MeanSd r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

// Subject-disjoint stratified folds; within each fold the validation slice
// is carved from the training portion at ratio val / (train + val).
inline std::vector<Split> crossval_splits(const Manifest& m, std::size_t folds, const std::array<double, 3>& ratios,
                                          std::uint64_t seed) {
  if (folds < 2) throw ValidationError("crossval: folds must be >= 2");
  const auto by_class = detail::subjects_by_class(m);
  const double val_frac = ratios[1] / (ratios[0] + ratios[1]);
  std::vector<std::array<std::set<std::string>, 3>> sets(folds);
  for (int c = 0; c < kClassCount; ++c) {
    auto subjects = by_class[c];
    // Every fold needs a test subject and two left over for train/val.
    const std::size_t largest_test = (subjects.size() + folds - 1) / folds;
    if (subjects.size() < folds || subjects.size() < largest_test + 2) {
      throw ValidationError("class " + std::string(kClassNames[c]) + " has " + std::to_string(subjects.size()) +
                            " subjects; too few for " + std::to_string(folds) + " folds");
    }
    std::mt19937_64 rng(derive_seed(seed, 0xF01D, static_cast<std::uint64_t>(c)));
    std::shuffle(subjects.begin(), subjects.end(), rng);
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<std::string> rest;
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (i % folds == f) {
          sets[f][2].insert(subjects[i]);
        } else {
          rest.push_back(subjects[i]);
        }
      }
      std::size_t n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(rest.size())));
      n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);
      for (std::size_t i = 0; i < rest.size(); ++i) sets[f][i < n_val ? 1 : 0].insert(rest[i]);
    }
  }
  std::vector<Split> out;
  for (auto& s : sets) out.push_back({detail::rows_of(m, s[0]), detail::rows_of(m, s[1]), detail::rows_of(m, s[2])});
  return out;
}

struct CrossvalResult {
  std::vector<FoldResult> folds;
  std::map<std::string, MeanSd> summary;
};

inline std::map<std::string, MeanSd> summarize_folds(const std::vector<FoldResult>& folds) {
  std::map<std::string, std::vector<double>> cols;
  for (const auto& f : folds) {
    cols["micro_auc"].push_back(f.metrics.cls.micro_auc);
    cols["mean_chamfer"].push_back(f.metrics.mean_chamfer);
    cols["accuracy"].push_back(f.metrics.cls.accuracy);
    for (int c = 0; c < kClassCount; ++c) {
      if (f.metrics.cls.class_auc[c]) cols["auc_" + std::string(kClassNames[c])].push_back(*f.metrics.cls.class_auc[c]);
    }
  }
  std::map<std::string, MeanSd> out;
  for (const auto& [k, v] : cols) out[k] = mean_sd(v);
  return out;
}

inline CrossvalResult crossval(const TrainConfig& cfg, const Manifest& m, const Dataset& data, std::size_t folds,
                               const std::function<void(std::size_t, const EpochLog&)>& on_epoch = {}) {
  CrossvalResult out;
  const auto splits = crossval_splits(m, folds, cfg.ratios, cfg.seed);
  for (std::size_t f = 0; f < splits.size(); ++f) {
    TrainConfig fc = cfg;
    fc.seed = derive_seed(cfg.seed, 0xF0, f);
    const auto res = train(fc, m, data, splits[f], [&](const EpochLog& e) {
      if (on_epoch) on_epoch(f, e);
    });
    out.folds.push_back({f, splits[f], evaluate(model_from(res.checkpoint), data, splits[f].test), res.checkpoint.epoch});
  }
  out.summary = summarize_folds(out.folds);
  return out;
}

// --- layer ablation --------------------------------------------------------------------

struct Grouping {
  std::string name;
  std::optional<LayerSet> layers;  // nullopt = the clouds as stored
  std::optional<double> clinical_auc;
};

inline std::vector<Grouping> default_groupings() {
  using L = LayerLabel;
  return {{"all", std::nullopt, 0.92},
          {"rnfl", LayerSet{L::RNFL}, 0.89},
          {"gcl_ipl+orl", LayerSet{L::GCL_IPL, L::ORL}, 0.87},
          {"choroid", LayerSet{L::CHOROID}, 0.78},
          {"sclera+lc", LayerSet{L::SCLERA, L::LC}, 0.85}};
}

// Clouds restricted to `layers`: synthetic clouds are regenerated from their
// generation record with the new layer set; other clouds are filtered and
// resampled back to the encoder's input size.
inline Dataset layer_dataset(const Manifest& m, const Dataset& base, LayerSet layers, std::size_t input_points,
                             std::uint64_t seed) {
  Dataset out;
  out.reserve(base.size());
  for (const auto& s : base) {
    const auto path = m.resolve(m.rows[s.row]);
    const auto rec_path = record_path(path);
    PointCloud cloud;
    if (std::filesystem::exists(rec_path)) {
      const auto rec = parse_record(read_text_file(rec_path.string()), rec_path.string());
      cloud = generate_from_record(rec, s.subject_id, layers);
    } else {
      cloud = split_by_layers(read_onhpc(path.string()), layers);
    }
    out.push_back(make_sample(m, s.row, std::move(cloud), input_points, seed));
  }
  return out;
}

struct AblationRow {
  Grouping grouping;
  EvalMetrics metrics;
  std::optional<MeanSd> cv_micro_auc;  // when run with folds
};

inline std::vector<AblationRow> ablate_layers(const TrainConfig& cfg, const Manifest& m, const Dataset& base,
                                              const std::vector<Grouping>& groupings, std::size_t folds = 0,
                                              const std::function<void(const std::string&, const EpochLog&)>& on_epoch = {}) {
  std::vector<AblationRow> rows;
  const auto sp = split(m, cfg.ratios, cfg.seed);
  for (const auto& g : groupings) {
    Dataset data;
    try {
      data = g.layers ? layer_dataset(m, base, *g.layers, cfg.model.encoder.input_points, cfg.seed) : base;
    } catch (const ValidationError& e) {
      throw ValidationError("grouping '" + g.name + "': " + e.what());
    }
    auto cb = [&](const EpochLog& e) {
      if (on_epoch) on_epoch(g.name, e);
    };
    AblationRow row{g, {}, std::nullopt};
    if (folds > 0) {
      const auto cv = crossval(cfg, m, data, folds, [&](std::size_t, const EpochLog& e) { cb(e); });
      row.cv_micro_auc = cv.summary.at("micro_auc");
      row.metrics = cv.folds.front().metrics;
    } else {
      const auto res = train(cfg, m, data, sp, cb);
      row.metrics = evaluate(model_from(res.checkpoint), data, sp.test);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "grouping,layers,micro_auc,cv_sd,mean_chamfer,clinical_reference_auc\n";
  for (const auto& r : rows) {
    // Layer lists are '+'-joined so the field holds no commas.
    std::string layers = r.grouping.layers ? r.grouping.layers->to_string() : std::string("stored");
    std::replace(layers.begin(), layers.end(), ',', '+');
    out += r.grouping.name + ',' + layers + ',';
    out += format_double(r.cv_micro_auc ? r.cv_micro_auc->mean : r.metrics.cls.micro_auc) + ',';
    out += (r.cv_micro_auc ? format_double(r.cv_micro_auc->sd) : std::string()) + ',';
    out += format_double(r.metrics.mean_chamfer) + ',';
    out += (r.grouping.clinical_auc ? format_double(*r.grouping.clinical_auc) : std::string()) + '\n';
  }
  return out;
}

// --- latent-size sweep -------------------------------------------------------------------

inline constexpr std::array<double, 4> kClinicalChamfer = {0.024, 0.019, 0.013, 0.014};

struct SweepRow {
  std::size_t k = 0;
  EvalMetrics metrics;
  std::string checkpoint_path;
};

inline std::vector<SweepRow> latent_sweep(const TrainConfig& cfg, const Manifest& m, const Dataset& data,
                                          const std::filesystem::path& out_dir,
                                          const std::function<void(std::size_t, const EpochLog&)>& on_epoch = {}) {
  const auto sp = split(m, cfg.ratios, cfg.seed);
  std::vector<SweepRow> rows;
  for (std::size_t k : kLatentSweep) {
    TrainConfig kc = cfg;
    kc.model.encoder.latent_dim = k;
    const auto res = train(kc, m, data, sp, [&](const EpochLog& e) {
      if (on_epoch) on_epoch(k, e);
    });
    const auto path = (out_dir / ("k" + std::to_string(k) + ".ckpt")).string();
    save_checkpoint(path, res.checkpoint);
    write_text_file((out_dir / ("k" + std::to_string(k) + "_log.csv")).string(), training_log_csv(res.log));
    rows.push_back({k, evaluate(model_from(res.checkpoint), data, sp.test), path});
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "k,mean_chamfer,micro_auc,clinical_reference_chamfer\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += std::to_string(rows[i].k) + ',' + format_double(rows[i].metrics.mean_chamfer) + ',' +
           format_double(rows[i].metrics.cls.micro_auc) + ',';
    out += (i < kClinicalChamfer.size() && rows[i].k == kLatentSweep[i] ? format_double(kClinicalChamfer[i])
                                                                         : std::string()) +
           '\n';
  }
  return out;
}

}  // namespace onh
