#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>
#include <numeric>
#include <string>
#include <vector>

#include "amkalign/config.hpp"
#include "amkalign/encoder.hpp"
#include "amkalign/eval.hpp"
#include "amkalign/losses.hpp"
#include "amkalign/synthetic.hpp"

namespace amkalign {

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double l_id = 0.0;
  double l_tri = 0.0;
  double l_imdal = 0.0;
  double l_idal = 0.0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochLog> log;
};

/// P identities × K samples per batch. Each identity's samples are consumed in
/// shuffled chunks of K; identities left over after filling whole batches are dropped.
inline std::vector<std::vector<std::size_t>> pk_batches(const std::vector<int>& labels, int p, int k,
                                                        Rng& rng) {
  std::vector<int> ids;
  std::vector<std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find(ids.begin(), ids.end(), labels[i]);
    if (it == ids.end()) {
      ids.push_back(labels[i]);
      by_id.emplace_back();
      it = ids.end() - 1;
    }
    by_id[static_cast<std::size_t>(it - ids.begin())].push_back(i);
  }
  std::size_t rounds = std::numeric_limits<std::size_t>::max();
  for (const auto& v : by_id) rounds = std::min(rounds, v.size() / static_cast<std::size_t>(k));
  if (static_cast<int>(ids.size()) < p || rounds == 0) {
    throw ConfigError("PK sampling needs >= " + std::to_string(p) + " identities with >= " +
                      std::to_string(k) + " samples each");
  }
  for (auto& v : by_id) rng.shuffle(v);
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> order(ids.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t start = 0; start + static_cast<std::size_t>(p) <= order.size();
         start += static_cast<std::size_t>(p)) {
      std::vector<std::size_t> batch;
      for (std::size_t q = start; q < start + static_cast<std::size_t>(p); ++q) {
        const auto& v = by_id[order[q]];
        batch.insert(batch.end(), v.begin() + static_cast<long>(r * k),
                     v.begin() + static_cast<long>((r + 1) * k));
      }
      batches.push_back(std::move(batch));
    }
  }
  rng.shuffle(batches);
  return batches;
}

inline TokenBatch gather(const TokenBatch& src, const std::vector<std::size_t>& rows) {
  const std::size_t l = src.per_sample, d = src.tokens.cols();
  Matrix out(rows.size() * l, d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(src.tokens.data().begin() + static_cast<long>(rows[i] * l * d),
              src.tokens.data().begin() + static_cast<long>((rows[i] + 1) * l * d),
              out.data().begin() + static_cast<long>(i * l * d));
  }
  return {std::move(out), l};
}

/// Every same-identity (RGB, IR) sample pair of a split. One epoch visits each pair once.
struct PairIndex {
  std::vector<std::size_t> rgb, ir;
  std::vector<int> labels;
};

inline PairIndex all_pairs(const SplitData& data) {
  PairIndex p;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.size(); ++j) {
      if (data.labels[i] != data.labels[j]) continue;
      p.rgb.push_back(i);
      p.ir.push_back(j);
      p.labels.push_back(data.labels[i]);
    }
  }
  return p;
}

inline PairBatch make_pair_batch(const SplitData& data, const PairIndex& pairs,
                                 const std::vector<std::size_t>& rows, const ExperimentConfig& cfg) {
  std::vector<std::size_t> rgb_rows, ir_rows;
  PairBatch b;
  for (std::size_t r : rows) {
    rgb_rows.push_back(pairs.rgb[r]);
    ir_rows.push_back(pairs.ir[r]);
    b.labels.push_back(pairs.labels[r]);
  }
  b.rgb = gather(data.rgb, rgb_rows);
  b.ir = gather(data.ir, ir_rows);
  b.part_tokens = cfg.part_tokens();
  b.use_part = cfg.flags.ubf;
  return b;
}

inline LossWeights effective_weights(const ExperimentConfig& cfg) {
  LossWeights w = cfg.weights;
  if (!cfg.flags.imdal) w.w_intra = 0.0;
  if (!cfg.flags.idal) w.w_inter = 0.0;
  return w;
}

inline EncoderParams initial_params(const ExperimentConfig& cfg) {
  Rng rng = Rng(cfg.seed).split(2);
  return init_encoder(cfg.encoder_sizes(), rng);
}

inline TrainResult train(const ExperimentConfig& cfg, const Dataset& ds) {
  cfg.validate();
  TrainResult tr{initial_params(cfg), {}};
  auto opt = make_optimizer(tr.params, cfg.momentum, cfg.weight_decay);
  Rng rng = Rng(cfg.seed).split(3);
  const LossWeights w = effective_weights(cfg);
  const PairIndex pairs = all_pairs(ds.train);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = staged_lr(static_cast<std::size_t>(epoch), static_cast<std::size_t>(cfg.epochs),
                                cfg.lr);
    const auto batches = pk_batches(pairs.labels, cfg.ids_per_batch, cfg.samples_per_batch, rng);
    EpochLog log{epoch, lr};
    for (const auto& rows : batches) {
      const PairBatch batch = make_pair_batch(ds.train, pairs, rows, cfg);
      const auto fwd = forward(tr.params, batch);
      const auto kernels = resolve_alignment_kernels(fwd.out, cfg.kernel, w.w_intra > 0.0,
                                                     w.w_inter > 0.0);
      const auto rep = total_objective(fwd.out, w, kernels);
      if (!std::isfinite(rep.total)) {
        throw ContractViolation("non-finite loss at epoch " + std::to_string(epoch));
      }
      const auto grads = backward(tr.params, fwd.cache, rep);
      sgd_step(tr.params, grads, opt, lr);
      log.total += rep.total;
      log.l_id += rep.l_id;
      log.l_tri += rep.l_tri;
      log.l_imdal += rep.l_imdal;
      log.l_idal += rep.l_idal;
    }
    const auto nb = static_cast<double>(batches.size());
    for (double* v : {&log.total, &log.l_id, &log.l_tri, &log.l_imdal, &log.l_idal}) *v /= nb;
    tr.log.push_back(log);
    ++opt.epoch;
  }
  return tr;
}

struct EvalReport {
  MetricsReport ir_to_rgb;
  MetricsReport rgb_to_ir;
  DistanceGap gap;
};

inline Matrix normalized_embeddings(const EncoderParams& p, const TokenBatch& b,
                                    const ExperimentConfig& cfg) {
  return l2_normalize_rows(embed(p, b, cfg.part_tokens(), cfg.flags.ubf));
}

inline EvalReport evaluate(const EncoderParams& params, const ExperimentConfig& cfg,
                           const SplitData& split) {
  const Matrix rgb = normalized_embeddings(params, split.rgb, cfg);
  const Matrix ir = normalized_embeddings(params, split.ir, cfg);
  const FeatureBatch frgb(rgb, split.labels, Modality::RGB, Branch::Fused);
  const FeatureBatch fir(ir, split.labels, Modality::IR, Branch::Fused);
  EvalReport r;
  r.ir_to_rgb = cmc_map_minp({fir, frgb});
  r.rgb_to_ir = cmc_map_minp({frgb, fir});
  std::vector<int> both = split.labels;
  both.insert(both.end(), split.labels.begin(), split.labels.end());
  r.gap = distance_gap(FeatureBatch(vstack(rgb, ir), both));
  for (auto* m : {&r.ir_to_rgb, &r.rgb_to_ir}) {
    m->intra_mean = r.gap.intra_mean;
    m->inter_mean = r.gap.inter_mean;
    m->gap = r.gap.gap;
  }
  return r;
}

/// Headline Rank-1: IR queries against the RGB gallery.
inline double rank1(const EvalReport& r) { return r.ir_to_rgb.cmc.front().second; }

struct RunResult {
  TrainResult train;
  EvalReport eval;
  EvalReport untrained;
};

inline RunResult run_experiment(const ExperimentConfig& cfg, const Dataset& ds) {
  RunResult r;
  r.untrained = evaluate(initial_params(cfg), cfg, ds.test);
  r.train = train(cfg, ds);
  r.eval = evaluate(r.train.params, cfg, ds.test);
  return r;
}

inline ojson metrics_json(const MetricsReport& m) {
  ojson j;
  ojson cmc = ojson::object();
  for (const auto& [k, v] : m.cmc) cmc["rank" + std::to_string(k)] = v;
  j["cmc"] = cmc;
  j["mAP"] = m.map;
  j["mINP"] = m.minp;
  j["intra_mean"] = m.intra_mean;
  j["inter_mean"] = m.inter_mean;
  j["gap"] = m.gap;
  return j;
}

inline ojson eval_json(const EvalReport& r) {
  ojson j;
  j["ir_to_rgb"] = metrics_json(r.ir_to_rgb);
  j["rgb_to_ir"] = metrics_json(r.rgb_to_ir);
  return j;
}

enum class SweepAxis { Weights, Ubp };

inline SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "weights") return SweepAxis::Weights;
  if (name == "ubp") return SweepAxis::Ubp;
  throw ConfigError("sweep axis must be \"weights\" or \"ubp\", got \"" + name + "\"");
}

/// Grid points: (w_intra, w_inter) pairs for weights, single ratios for ubp.
inline std::vector<std::vector<double>> default_grid(SweepAxis axis) {
  if (axis == SweepAxis::Weights) {
    return {{0.0, 1.0}, {0.2, 0.8}, {0.4, 0.6}, {0.6, 0.4}, {0.8, 0.2}, {1.0, 0.0}};
  }
  return {{0.3}, {0.4}, {0.5}, {0.6}, {0.7}, {0.8}};
}

inline ExperimentConfig apply_point(ExperimentConfig c, SweepAxis axis,
                                    const std::vector<double>& point) {
  const std::size_t want = axis == SweepAxis::Weights ? 2 : 1;
  if (point.size() != want) {
    throw ConfigError("sweep point needs " + std::to_string(want) + " value(s)");
  }
  if (axis == SweepAxis::Weights) {
    c.weights.w_intra = point[0];
    c.weights.w_inter = point[1];
  } else {
    c.ubp = point[0];
  }
  c.validate();
  return c;
}

struct SweepRun {
  std::size_t point = 0;
  std::uint64_t seed = 0;
  EvalReport eval;
};

/// Trains and evaluates every (point, seed) pair. Jobs run on up to `threads`
/// workers; results are stored by job index, so output does not depend on threads.
inline std::vector<SweepRun> run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                       const std::vector<std::vector<double>>& grid,
                                       const std::vector<std::uint64_t>& seeds,
                                       unsigned threads = 1) {
  if (grid.empty() || seeds.empty()) throw ConfigError("sweep needs >= 1 grid point and >= 1 seed");
  std::vector<ExperimentConfig> configs;
  for (const auto& point : grid) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig c = apply_point(base, axis, point);
      c.seed = seed;
      configs.push_back(c);
    }
  }
  std::vector<SweepRun> runs(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < configs.size(); j = next++) {
      try {
        const Dataset ds = gen_dataset(configs[j]);
        const TrainResult tr = train(configs[j], ds);
        runs[j] = {j / seeds.size(), configs[j].seed, evaluate(tr.params, configs[j], ds.test)};
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return runs;
}

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / (n - 1.0)) : 0.0};
}

}  // namespace amkalign
