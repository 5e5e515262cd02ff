#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "amkalign/amkalign.hpp"

using namespace amkalign;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  unsigned threads = 1;
};

ExperimentConfig resolve_config(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

std::string out_path(const Globals& g, const std::string& name) {
  return (std::filesystem::path(g.out) / name).string();
}

std::string json_text(const ojson& j) { return j.dump(2) + "\n"; }

void log(const std::string& msg) { std::cerr << msg << "\n"; }

std::string train_log_csv(const std::vector<EpochLog>& rows) {
  std::string out = csv_row({"epoch", "lr", "total", "l_id", "l_tri", "l_imdal", "l_idal"});
  for (const auto& e : rows) {
    out += csv_row({std::to_string(e.epoch), format_double(e.lr), format_double(e.total),
                    format_double(e.l_id), format_double(e.l_tri), format_double(e.l_imdal),
                    format_double(e.l_idal)});
  }
  return out;
}

void cmd_train(const Globals& g) {
  const ExperimentConfig c = resolve_config(g);
  const Dataset ds = gen_dataset(c);
  const TrainResult tr = train(c, ds);
  save_checkpoint(out_path(g, "checkpoint.bin"), tr.params);
  write_file_atomic(out_path(g, "train_log.csv"), train_log_csv(tr.log));
  write_file_atomic(out_path(g, "config.json"), json_text(to_json(c)));
  log("trained " + std::to_string(c.epochs) + " epochs, seed " + std::to_string(c.seed) + " -> " +
      g.out);
}

const std::vector<std::pair<const char*, const MetricsReport EvalReport::*>> kDirections{
    {"ir_to_rgb", &EvalReport::ir_to_rgb}, {"rgb_to_ir", &EvalReport::rgb_to_ir}};

void cmd_eval(const Globals& g, const std::string& checkpoint) {
  const ExperimentConfig c = resolve_config(g);
  const Dataset ds = gen_dataset(c);
  const EncoderParams params = load_checkpoint(checkpoint, initial_params(c));
  const EvalReport r = evaluate(params, c, ds.test);

  ojson report;
  report["seed"] = c.seed;
  report["ir_to_rgb"] = metrics_json(r.ir_to_rgb);
  report["rgb_to_ir"] = metrics_json(r.rgb_to_ir);
  report["distance_gap"] = {
      {"intra_mean", r.gap.intra_mean}, {"inter_mean", r.gap.inter_mean}, {"gap", r.gap.gap}};
  write_file_atomic(out_path(g, "report.json"), json_text(report));

  std::vector<std::string> header{"direction"};
  for (const auto& [k, v] : r.ir_to_rgb.cmc) header.push_back("rank" + std::to_string(k));
  for (const char* h : {"mAP", "mINP", "intra_mean", "inter_mean", "gap"}) header.push_back(h);
  std::string metrics = csv_row(header);
  std::string cmc = csv_row({"direction", "rank", "rate"});
  for (const auto& [name, member] : kDirections) {
    const MetricsReport& m = r.*member;
    std::vector<std::string> row{name};
    for (const auto& [k, v] : m.cmc) row.push_back(format_double(v));
    for (double v : {m.map, m.minp, m.intra_mean, m.inter_mean, m.gap}) row.push_back(format_double(v));
    metrics += csv_row(row);
    for (std::size_t k = 0; k < m.cmc_curve.size(); ++k) {
      cmc += csv_row({name, std::to_string(k + 1), format_double(m.cmc_curve[k])});
    }
  }
  write_file_atomic(out_path(g, "metrics.csv"), metrics);
  write_file_atomic(out_path(g, "cmc.csv"), cmc);
  std::cout << json_text(report);
}

void cmd_sweep(const Globals& g, const std::string& axis_name, int seed_count) {
  const ExperimentConfig base = resolve_config(g);
  if (seed_count < 1) throw ConfigError("--seeds must be >= 1");
  const SweepAxis axis = parse_sweep_axis(axis_name);
  const auto grid = default_grid(axis);
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < seed_count; ++s) seeds.push_back(base.seed + static_cast<std::uint64_t>(s));
  const auto runs = run_sweep(base, axis, grid, seeds, g.threads);

  const std::vector<std::string> point_cols =
      axis == SweepAxis::Weights ? std::vector<std::string>{"w_intra", "w_inter"}
                                 : std::vector<std::string>{"ubp"};
  auto point_cells = [&](std::size_t p) {
    std::vector<std::string> cells;
    for (double v : grid[p]) cells.push_back(format_double(v));
    return cells;
  };
  auto metric_values = [](const SweepRun& run) {
    const MetricsReport& m = run.eval.ir_to_rgb;
    return std::vector<double>{m.cmc.front().second, m.map, m.minp, run.eval.gap.gap};
  };
  const std::vector<std::string> metric_names{"rank1", "mAP", "mINP", "gap"};

  std::vector<std::string> header = point_cols;
  header.push_back("seed");
  header.insert(header.end(), metric_names.begin(), metric_names.end());
  std::string runs_csv = csv_row(header);
  for (const auto& run : runs) {
    auto row = point_cells(run.point);
    row.push_back(std::to_string(run.seed));
    for (double v : metric_values(run)) row.push_back(format_double(v));
    runs_csv += csv_row(row);
  }

  header = point_cols;
  header.push_back("runs");
  for (const auto& n : metric_names) {
    header.push_back(n + "_mean");
    header.push_back(n + "_sd");
  }
  std::string summary = csv_row(header);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    std::vector<std::vector<double>> cols(metric_names.size());
    for (const auto& run : runs) {
      if (run.point != p) continue;
      const auto v = metric_values(run);
      for (std::size_t k = 0; k < v.size(); ++k) cols[k].push_back(v[k]);
    }
    auto row = point_cells(p);
    row.push_back(std::to_string(cols[0].size()));
    for (const auto& col : cols) {
      const auto [mean, sd] = mean_sd(col);
      row.push_back(format_double(mean));
      row.push_back(format_double(sd));
    }
    summary += csv_row(row);
  }
  write_file_atomic(out_path(g, "sweep_" + axis_name + ".csv"), summary);
  write_file_atomic(out_path(g, "sweep_" + axis_name + "_runs.csv"), runs_csv);
  log(std::to_string(runs.size()) + " runs over " + std::to_string(grid.size()) + " points -> " +
      g.out);
}

struct MmdOptions {
  std::string x, y, params;
  int kernels = 5;
  double ratio = 2.0;
  std::vector<double> bandwidths, logits;
};

void cmd_mmd(const Globals& g, MmdOptions o) {
  const Matrix x = read_csv_matrix(o.x), y = read_csv_matrix(o.y);
  if (x.cols() != y.cols()) {
    throw ShapeError("x has " + std::to_string(x.cols()) + " columns, y has " +
                     std::to_string(y.cols()));
  }
  if (!o.params.empty()) {
    ojson p;
    try {
      p = ojson::parse(read_file(o.params));
      o.bandwidths = p.at("bandwidths").get<std::vector<double>>();
      o.logits = p.at("logits").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(o.params + ": " + e.what());
    }
  }
  std::string source = "given";
  std::optional<double> base;
  if (o.bandwidths.empty()) {
    if (o.kernels < 1) throw InvalidArgument("--kernels must be >= 1");
    try {
      base = median_bandwidth(pairwise_sq_dists(vstack(x, y)));
      source = "median";
    } catch (const DegenerateInput&) {
      // Every point coincides, so the MMD is zero for any bandwidth.
      base = 1.0;
      source = "unit_fallback";
      log("all points coincide; using base bandwidth 1");
    }
    o.bandwidths = bandwidth_ladder(*base, o.kernels, o.ratio);
  }
  if (o.logits.empty()) o.logits.assign(o.bandwidths.size(), 0.0);
  const KernelParams k(o.bandwidths, o.logits);
  const double value = mmd2_unbiased(x, y, k);

  ojson j;
  j["x"] = o.x;
  j["y"] = o.y;
  j["n_x"] = x.rows();
  j["n_y"] = y.rows();
  j["dim"] = x.cols();
  j["bandwidth_source"] = source;
  if (base) {
    j["sigma_base"] = *base;
    j["kernels"] = o.kernels;
    j["ratio"] = o.ratio;
  }
  j["bandwidths"] = k.bandwidths;
  j["logits"] = k.logits;
  j["weights"] = k.weights();
  j["mmd2"] = value;
  write_file_atomic(out_path(g, "mmd.json"), json_text(j));
  std::cout << json_text(j);
}

struct PcOptions {
  std::string input;
  double threshold = 0.0;
  double auto_k = 0.0;
  LogGaborSettings bank;
};

void cmd_pcmap(const Globals& g, const PcOptions& o) {
  const GrayImage img = read_pgm(o.input);
  const LogGaborBank bank = build_log_gabor_bank(img.height(), img.width(), o.bank);
  PcParams params;
  params.noise_threshold =
      o.auto_k > 0.0 ? finest_scale_noise_threshold(img, bank, o.auto_k) : o.threshold;
  const GrayImage pc = phase_congruency(img, bank, params);
  const AttentionParams att_params;
  const GrayImage att = edge_attention(pc, att_params);
  write_file_atomic(out_path(g, "pc.pgm"), encode_pgm(pc));
  write_file_atomic(out_path(g, "attention.pgm"), encode_pgm(att));
  write_file_atomic(out_path(g, "pc.csv"), matrix_csv(pc.pixels()));
  ojson j;
  j["input"] = o.input;
  j["height"] = img.height();
  j["width"] = img.width();
  j["scales"] = o.bank.scales;
  j["orientations"] = o.bank.orientations;
  j["min_wavelength"] = o.bank.min_wavelength;
  j["mult"] = o.bank.mult;
  j["sigma_onf"] = o.bank.sigma_onf;
  j["sigma_theta"] = bank.sigma_theta;
  j["noise_threshold"] = params.noise_threshold;
  j["auto_threshold_k"] = o.auto_k;
  j["epsilon"] = params.epsilon;
  j["spread_cutoff"] = params.spread_cutoff;
  j["spread_gain"] = params.spread_gain;
  j["attention_kernel"] = att_params.kernel.data();
  j["attention_bias"] = att_params.bias;
  write_file_atomic(out_path(g, "pc_map.json"), json_text(j));
}

std::string labels_csv(const std::vector<int>& labels) {
  std::string out;
  for (int l : labels) out += std::to_string(l) + "\n";
  return out;
}

void cmd_gen(const Globals& g) {
  const ExperimentConfig c = resolve_config(g);
  const Dataset ds = gen_dataset(c);
  for (const auto& [name, split] : {std::pair<const char*, const SplitData*>{"train", &ds.train},
                                    {"test", &ds.test}}) {
    write_file_atomic(out_path(g, std::string(name) + "_rgb.csv"),
                      matrix_csv(flatten_samples(split->rgb)));
    write_file_atomic(out_path(g, std::string(name) + "_ir.csv"),
                      matrix_csv(flatten_samples(split->ir)));
    write_file_atomic(out_path(g, std::string(name) + "_labels.csv"), labels_csv(split->labels));
  }
  if (c.mode == DataMode::Image) {
    std::vector<int> labels = ds.train.labels;
    labels.insert(labels.end(), ds.test.labels.begin(), ds.test.labels.end());
    for (std::size_t i = 0; i < ds.rgb_images.size(); ++i) {
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%04zu_id%03d", i, labels[i]);
      write_file_atomic(out_path(g, std::string("images/rgb_") + stem + ".pgm"),
                        encode_pgm(ds.rgb_images[i]));
      write_file_atomic(out_path(g, std::string("images/ir_") + stem + ".pgm"),
                        encode_pgm(ds.ir_images[i]));
    }
  }
  write_file_atomic(out_path(g, "config.json"), json_text(to_json(c)));
  log("generated " + std::string(to_string(c.mode)) + " dataset -> " + g.out);
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
      return 2;
    case ErrorKind::Contract:
      return 4;
    default:
      return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive multi-kernel modality alignment toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config JSON");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Sweep worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* train_cmd = app.add_subcommand("train", "Train an encoder on the synthetic dataset");
  train_cmd->fallthrough();

  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint in both retrieval directions");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint from train")->required();

  std::string axis;
  int seeds = 5;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a parameter grid");
  sweep_cmd->fallthrough();
  sweep_cmd->add_option("--axis", axis, "weights or ubp")->required();
  sweep_cmd->add_option("--seeds", seeds, "Seeds per grid point")->capture_default_str();

  MmdOptions mo;
  auto* mmd_cmd = app.add_subcommand("mmd", "AMK-MMD² between two CSV point sets");
  mmd_cmd->fallthrough();
  mmd_cmd->add_option("--x", mo.x, "CSV of source rows")->required();
  mmd_cmd->add_option("--y", mo.y, "CSV of target rows")->required();
  mmd_cmd->add_option("--kernels", mo.kernels, "Ladder size")->capture_default_str();
  mmd_cmd->add_option("--ratio", mo.ratio, "Ladder ratio")->capture_default_str();
  mmd_cmd->add_option("--bandwidths", mo.bandwidths, "Fixed bandwidths")->delimiter(',');
  mmd_cmd->add_option("--logits", mo.logits, "Kernel weight logits")->delimiter(',');
  mmd_cmd->add_option("--params", mo.params, "JSON with bandwidths and logits, e.g. a previous output");

  PcOptions po;
  auto* pc_cmd = app.add_subcommand("pc-map", "Phase congruency and edge attention maps");
  pc_cmd->fallthrough();
  pc_cmd->add_option("--input", po.input, "Input PGM")->required();
  pc_cmd->add_option("--threshold", po.threshold, "Noise threshold T")->capture_default_str();
  pc_cmd->add_option("--auto-threshold", po.auto_k,
                     "Set T to k times the finest-scale median amplitude");
  pc_cmd->add_option("--scales", po.bank.scales)->capture_default_str();
  pc_cmd->add_option("--orientations", po.bank.orientations)->capture_default_str();
  pc_cmd->add_option("--min-wavelength", po.bank.min_wavelength)->capture_default_str();
  pc_cmd->add_option("--mult", po.bank.mult)->capture_default_str();

  auto* gen_cmd = app.add_subcommand("gen", "Write the synthetic dataset");
  gen_cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) cmd_train(g);
    if (*eval_cmd) cmd_eval(g, checkpoint);
    if (*sweep_cmd) cmd_sweep(g, axis, seeds);
    if (*mmd_cmd) cmd_mmd(g, mo);
    if (*pc_cmd) cmd_pcmap(g, po);
    if (*gen_cmd) cmd_gen(g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
