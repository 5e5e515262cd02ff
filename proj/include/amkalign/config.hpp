#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "amkalign/encoder.hpp"
#include "amkalign/losses.hpp"

namespace amkalign {

using ojson = nlohmann::ordered_json;

enum class DataMode { Vector, Image };

inline const char* to_string(DataMode m) { return m == DataMode::Vector ? "vector" : "image"; }

/// Ablation switches: Base always on, then UBF, IMDAL, IDAL.
struct AblationFlags {
  bool ubf = true;
  bool imdal = true;
  bool idal = true;

  /// M0 = Base, M1 = +UBF, M2 = +UBF+IMDAL, M3 = +UBF+IDAL, M4 = all.
  static AblationFlags model(int m) {
    switch (m) {
      case 0: return {false, false, false};
      case 1: return {true, false, false};
      case 2: return {true, true, false};
      case 3: return {true, false, true};
      case 4: return {true, true, true};
      default: throw ConfigError("ablation model must be M0..M4, got M" + std::to_string(m));
    }
  }
};

/// Staged schedule with every level a tenth of the reference schedule. Without
/// normalization layers, peak 0.1 with momentum 0.9 drives ReLU units dead here.
inline LrSchedule desk_lr() {
  LrSchedule s;
  s.start = 0.001;
  s.peak = 0.01;
  s.mid = 0.001;
  s.final = 0.0001;
  return s;
}

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int identities = 32;
  int samples_per_identity = 8;
  double test_fraction = 0.5;
  int latent_dim = 12;
  int token_dim = 24;
  int tokens = 4;
  double modality_gap = 1.5;
  double noise = 0.3;
  double nuisance = 1.0;
  double modality_private = 2.0;
  DataMode mode = DataMode::Vector;
  int image_height = 64;
  int image_width = 32;
  double brightness_jitter = 0.1;
  double ubp = 0.5;

  int epochs = 20;
  int ids_per_batch = 8;      // P
  int samples_per_batch = 4;  // K
  LrSchedule lr = desk_lr();
  double momentum = 0.9;
  double weight_decay = 5e-4;

  LossWeights weights;
  KernelSettings kernel;
  int hidden = 32;
  int feature_dim = 16;
  int embed_dim = 16;
  double gem_p = 3.0;
  AblationFlags flags;

  int train_identities() const {
    return identities - static_cast<int>(std::floor(test_fraction * identities));
  }
  int test_identities() const { return identities - train_identities(); }
  std::size_t part_tokens() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ubp * tokens)));
  }
  int batch_size() const { return ids_per_batch * samples_per_batch; }

  EncoderSizes encoder_sizes() const {
    return {static_cast<std::size_t>(token_dim), static_cast<std::size_t>(hidden),
            static_cast<std::size_t>(feature_dim), static_cast<std::size_t>(embed_dim),
            static_cast<std::size_t>(train_identities()), gem_p};
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError(what);
    };
    need(identities >= 4, "identities must be >= 4");
    need(samples_per_identity >= 4, "samples_per_identity must be >= 4");
    need(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction must lie in (0, 1)");
    need(test_identities() >= 2 && train_identities() >= 2,
         "both splits need at least two identities");
    need(latent_dim >= 1 && token_dim >= 2 && tokens >= 1, "latent_dim, token_dim, tokens must be positive");
    need(std::isfinite(modality_gap) && modality_gap >= 0.0, "modality_gap must be >= 0");
    need(std::isfinite(noise) && noise >= 0.0, "noise must be >= 0");
    need(std::isfinite(nuisance) && nuisance >= 0.0, "nuisance must be >= 0");
    need(std::isfinite(modality_private) && modality_private >= 0.0,
         "modality_private must be >= 0");
    need(std::isfinite(ubp) && ubp > 0.0 && ubp <= 1.0, "ubp must lie in (0, 1]");
    need(epochs >= 0, "epochs must be >= 0");
    need(ids_per_batch >= 2 && samples_per_batch >= 2,
         "batches need >= 2 identities x >= 2 samples");
    need(ids_per_batch <= train_identities(),
         "ids_per_batch exceeds the number of training identities");
    need(samples_per_batch <= samples_per_identity, "samples_per_batch exceeds samples_per_identity");
    need(hidden >= 1 && feature_dim >= 1 && embed_dim >= 1, "encoder sizes must be >= 1");
    need(std::isfinite(gem_p) && gem_p >= 1.0, "gem_p must be >= 1");
    need(kernel.count >= 1 && kernel.ratio > 1.0, "kernel count >= 1 and ratio > 1 required");
    need(std::isfinite(brightness_jitter) && brightness_jitter >= 0.0 && brightness_jitter < 0.25,
         "brightness_jitter must lie in [0, 0.25)");
    if (mode == DataMode::Image) {
      need(image_height >= 32 && image_width >= 32, "image side must be >= 32");
      need(token_dim % 2 == 0, "image mode needs an even token_dim");
      need(static_cast<int>(image_height) % tokens == 0, "image_height must be a multiple of tokens");
    }
    try {
      weights.validate();
      lr.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    need(flags.ubf || !flags.imdal, "IMDAL aligns global and part features and needs UBF on");
  }
};

inline ojson to_json(const ExperimentConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["identities"] = c.identities;
  j["samples_per_identity"] = c.samples_per_identity;
  j["test_fraction"] = c.test_fraction;
  j["latent_dim"] = c.latent_dim;
  j["token_dim"] = c.token_dim;
  j["tokens"] = c.tokens;
  j["modality_gap"] = c.modality_gap;
  j["noise"] = c.noise;
  j["nuisance"] = c.nuisance;
  j["modality_private"] = c.modality_private;
  j["mode"] = to_string(c.mode);
  j["image_height"] = c.image_height;
  j["image_width"] = c.image_width;
  j["brightness_jitter"] = c.brightness_jitter;
  j["ubp"] = c.ubp;
  j["epochs"] = c.epochs;
  j["ids_per_batch"] = c.ids_per_batch;
  j["samples_per_batch"] = c.samples_per_batch;
  j["lr"] = {{"start", c.lr.start},           {"peak", c.lr.peak},
             {"mid", c.lr.mid},               {"final", c.lr.final},
             {"warmup_end", c.lr.warmup_end}, {"hold_end", c.lr.hold_end},
             {"mid_end", c.lr.mid_end}};
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["weights"] = {{"w_intra", c.weights.w_intra},
                  {"w_inter", c.weights.w_inter},
                  {"lambda_tri", c.weights.lambda_tri},
                  {"margin", c.weights.margin}};
  j["kernel"] = {{"count", c.kernel.count},
                 {"ratio", c.kernel.ratio},
                 {"logits", c.kernel.logits},
                 {"bandwidths", c.kernel.bandwidths}};
  j["hidden"] = c.hidden;
  j["feature_dim"] = c.feature_dim;
  j["embed_dim"] = c.embed_dim;
  j["gem_p"] = c.gem_p;
  j["flags"] = {{"ubf", c.flags.ubf}, {"imdal", c.flags.imdal}, {"idal", c.flags.idal}};
  return j;
}

namespace detail {

class JsonReader {
 public:
  JsonReader(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  JsonReader child(const char* key) {
    seen_.insert(key);
    static const ojson empty = ojson::object();
    return JsonReader(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key " + where() + "." + k);
    }
  }

 private:
  std::string where() const { return path_; }
  const ojson& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Fields absent from j keep their defaults. Unknown keys are rejected.
inline ExperimentConfig config_from_json(const ojson& j, ExperimentConfig c = {}) {
  detail::JsonReader r(j, "config");
  r.get("seed", c.seed);
  r.get("identities", c.identities);
  r.get("samples_per_identity", c.samples_per_identity);
  r.get("test_fraction", c.test_fraction);
  r.get("latent_dim", c.latent_dim);
  r.get("token_dim", c.token_dim);
  r.get("tokens", c.tokens);
  r.get("modality_gap", c.modality_gap);
  r.get("noise", c.noise);
  r.get("nuisance", c.nuisance);
  r.get("modality_private", c.modality_private);
  std::string mode = to_string(c.mode);
  r.get("mode", mode);
  if (mode == "vector") {
    c.mode = DataMode::Vector;
  } else if (mode == "image") {
    c.mode = DataMode::Image;
  } else {
    throw ConfigError("config.mode must be \"vector\" or \"image\"");
  }
  r.get("image_height", c.image_height);
  r.get("image_width", c.image_width);
  r.get("brightness_jitter", c.brightness_jitter);
  r.get("ubp", c.ubp);
  r.get("epochs", c.epochs);
  r.get("ids_per_batch", c.ids_per_batch);
  r.get("samples_per_batch", c.samples_per_batch);
  {
    auto lr = r.child("lr");
    lr.get("start", c.lr.start);
    lr.get("peak", c.lr.peak);
    lr.get("mid", c.lr.mid);
    lr.get("final", c.lr.final);
    lr.get("warmup_end", c.lr.warmup_end);
    lr.get("hold_end", c.lr.hold_end);
    lr.get("mid_end", c.lr.mid_end);
    lr.finish();
  }
  r.get("momentum", c.momentum);
  r.get("weight_decay", c.weight_decay);
  {
    auto w = r.child("weights");
    w.get("w_intra", c.weights.w_intra);
    w.get("w_inter", c.weights.w_inter);
    w.get("lambda_tri", c.weights.lambda_tri);
    w.get("margin", c.weights.margin);
    w.finish();
  }
  {
    auto k = r.child("kernel");
    k.get("count", c.kernel.count);
    k.get("ratio", c.kernel.ratio);
    k.get("logits", c.kernel.logits);
    k.get("bandwidths", c.kernel.bandwidths);
    k.finish();
  }
  r.get("hidden", c.hidden);
  r.get("feature_dim", c.feature_dim);
  r.get("embed_dim", c.embed_dim);
  r.get("gem_p", c.gem_p);
  {
    auto f = r.child("flags");
    f.get("ubf", c.flags.ubf);
    f.get("imdal", c.flags.imdal);
    f.get("idal", c.flags.idal);
    f.finish();
  }
  r.finish();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace amkalign
