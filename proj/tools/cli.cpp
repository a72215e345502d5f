/*
 * Copyright (c) 2026 The aasvd Authors. All Rights Reserved
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "aasvd/config.hpp"
#include "aasvd/container.hpp"
#include "aasvd/metrics.hpp"
#include "aasvd/parallel.hpp"
#include "aasvd/pipeline.hpp"
#include "aasvd/rng.hpp"

namespace aasvd::cli {
namespace {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
    case ErrorCode::kCorruptContainer:
      return kIoFailure;
    case ErrorCode::kNonFiniteActivation:
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kSingularCovariance:
    case ErrorCode::kSingularFactor:
    case ErrorCode::kNotPositiveDefinite:
      return kNumericFailure;
    default:
      return kBadConfig;
  }
}

// A JSON document given inline ("{...}") or as a path.
std::string json_argument(const std::string& value) {
  const auto first = value.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && value[first] == '{') return value;
  return read_file(value);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create output directory " + dir.string());
  }
}

// Outputs are assembled in memory and only written once everything has
// succeeded, each through a temporary file and rename.
void write_all(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  ensure_dir(dir);
  for (const auto& [name, bytes] : files) write_file_atomic(dir / name, bytes);
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> ratio;
  std::optional<std::string> objective;
  std::optional<bool> refine;
  std::optional<std::string> run_id;
  std::optional<std::string> shift_source;
};

struct Prepared {
  ToyModel model;
  RunSpec spec;
  std::uint64_t seed = 0;
  CalibrationSet calib;
  CalibrationSet eval;
};

Prepared prepare(const std::string& model_path, const std::string& config_arg,
                 const Overrides& o) {
  Prepared p;
  p.spec = parse_run_spec(json_argument(config_arg));
  if (o.ratio) p.spec.run.ratio.target_ratio = *o.ratio;
  if (o.objective) p.spec.run.objective = parse_objective(*o.objective);
  if (o.refine) p.spec.run.refine_enabled = *o.refine;
  if (o.shift_source) p.spec.run.shift_source = parse_shift_source(*o.shift_source);
  if (o.run_id) {
    if (!valid_run_id(*o.run_id)) throw Error(ErrorCode::kInvalidConfig, "invalid --run-id");
    p.spec.run.run_id = *o.run_id;
  }
  if (o.seed) p.spec.seed = *o.seed;
  p.spec.run.validate();

  p.model = load_model(model_path);
  if (p.spec.dims && !(*p.spec.dims == p.model.dims)) {
    throw Error(ErrorCode::kInvalidConfig, "config dims do not match the model container");
  }
  if (p.spec.n_blocks && *p.spec.n_blocks != p.model.n_blocks()) {
    throw Error(ErrorCode::kInvalidConfig, "config n_blocks does not match the model container");
  }
  p.seed = p.spec.seed.value_or(p.model.embed_seed);
  p.spec.run.seed = p.seed;
  p.calib = generate_calibration(p.model.dims, p.spec.calibration_sequences,
                                 split_seed(p.seed, seed_stream::kCalibration));
  p.eval = generate_calibration(p.model.dims, p.spec.eval_sequences,
                                split_seed(p.seed, seed_stream::kEval));
  return p;
}

struct RunOutput {
  CompressResult result;
  std::vector<DepthErrors> evolution;
};

RunOutput execute(const Prepared& p, const RunConfig& cfg) {
  RunOutput r;
  r.result = compress_model(p.model, p.calib, cfg);
  r.evolution = error_evolution(p.model, r.result.model, p.eval);
  return r;
}

std::string summary_line(const std::string& label, const std::string& value) {
  std::string padded = label;
  if (padded.size() < 24) padded.resize(24, ' ');
  return padded + value + "\n";
}

std::string totals_text(const AccountingTotals& t) {
  std::string s;
  s += summary_line("linear_params_before", std::to_string(t.linear_params_before));
  s += summary_line("linear_params_after", std::to_string(t.linear_params_after));
  s += summary_line("total_params_before", std::to_string(t.total_params_before));
  s += summary_line("total_params_after", std::to_string(t.total_params_after));
  s += summary_line("flops_per_token_before", std::to_string(t.flops_before));
  s += summary_line("flops_per_token_after", std::to_string(t.flops_after));
  s += summary_line("flop_reduction", format_double(t.flop_reduction));
  s += summary_line("effective_ratio", format_double(t.effective_ratio));
  s += summary_line("rank_fraction", format_double(t.rank_fraction));
  s += summary_line("factorized_layers", std::to_string(t.factorized_layers));
  return s;
}

// ---------------------------------------------------------------- commands

int cmd_gen_model(const std::string& dims_arg, std::optional<std::uint64_t> seed,
                  const std::string& out_path, std::ostream& out) {
  ModelSpec spec = dims_arg.empty() ? ModelSpec{} : parse_model_spec(json_argument(dims_arg));
  if (seed) spec.seed = *seed;
  const ToyModel model = make_model(spec.dims, spec.n_blocks, spec.seed);
  save_model(out_path, model);
  out << "wrote " << out_path << "\n";
  out << summary_line("blocks", std::to_string(model.n_blocks()));
  out << summary_line("parameters", std::to_string(model.parameter_count()));
  return kOk;
}

int cmd_compress(const std::string& model_path, const std::string& config_arg,
                 const std::string& out_dir, const Overrides& o, bool verbose, std::ostream& out,
                 std::ostream& err) {
  const Prepared p = prepare(model_path, config_arg, o);
  const RunOutput r = execute(p, p.spec.run);
  const CompressionReport& rep = r.result.report;
  const std::string& id = p.spec.run.run_id;
  write_all(out_dir, {
                         {"model.aasv", encode_container(model_tensors(r.result.model))},
                         {"report.csv", evolution_csv(id, r.evolution)},
                         {"layers.csv", layers_csv(id, rep.layers)},
                         {"blocks.csv", blocks_csv(id, rep.blocks)},
                         {"refine_trace.csv", refine_trace_csv(id, rep.blocks)},
                         {"accounting.json", accounting_json(rep.totals)},
                         {"run_config.json", run_spec_json(p.spec)},
                     });
  if (verbose) {
    for (const auto& b : rep.blocks) {
      err << "block " << b.block << ": calibration mse " << format_double(b.mse) << ", cosine "
          << format_double(b.cosine) << "\n";
    }
  }
  out << summary_line("run_id", id);
  out << summary_line("objective", std::string(to_string(p.spec.run.objective)));
  out << summary_line("refine", p.spec.run.refine_enabled ? "on" : "off");
  out << totals_text(rep.totals);
  if (!r.evolution.empty()) {
    const auto& last = r.evolution.back();
    const auto s = static_cast<std::size_t>(Site::kBlockOut);
    out << summary_line("final_mse", format_double(last.mse[s]));
    out << summary_line("final_cosine", format_double(last.cosine[s]));
  }
  return kOk;
}

int cmd_ablate(const std::string& model_path, const std::string& config_arg,
               const std::string& out_dir, const Overrides& o, std::ostream& out) {
  const Prepared p = prepare(model_path, config_arg, o);
  struct Cell {
    Objective objective;
    bool refine;
    RunConfig cfg;
    RunOutput output;
  };
  std::vector<Cell> cells;
  for (Objective obj : kAllObjectives) {
    for (bool refine : {false, true}) {
      Cell c{obj, refine, p.spec.run, {}};
      c.cfg.objective = obj;
      c.cfg.refine_enabled = refine;
      c.cfg.compare_objectives = true;
      c.cfg.run_id = p.spec.run.run_id + "." + std::string(to_string(obj)) +
                     (refine ? ".refine" : ".plain");
      cells.push_back(std::move(c));
    }
  }
  parallel_for(cells.size(), [&](std::size_t i) { cells[i].output = execute(p, cells[i].cfg); });

  std::string grid = "run_id,objective,refine,final_mse,final_cosine,params_after\n";
  std::string layers;
  std::string evolution;
  const auto s = static_cast<std::size_t>(Site::kBlockOut);
  for (const auto& c : cells) {
    const DepthErrors& last = c.output.evolution.back();
    grid += c.cfg.run_id + "," + std::string(to_string(c.objective)) + "," +
            (c.refine ? "1" : "0") + "," + format_double(last.mse[s]) + "," +
            format_double(last.cosine[s]) + "," +
            std::to_string(c.output.result.report.totals.total_params_after) + "\n";
    std::string l = layers_csv(c.cfg.run_id, c.output.result.report.layers);
    std::string e = evolution_csv(c.cfg.run_id, c.output.evolution);
    if (!layers.empty()) l.erase(0, l.find('\n') + 1);
    if (!evolution.empty()) e.erase(0, e.find('\n') + 1);
    layers += l;
    evolution += e;
  }
  write_all(out_dir, {{"ablation.csv", grid},
                      {"ablation_layers.csv", layers},
                      {"ablation_report.csv", evolution},
                      {"run_config.json", run_spec_json(p.spec)}});
  out << grid;
  return kOk;
}

int cmd_report(const std::string& in_dir, std::ostream& out) {
  const fs::path dir(in_dir);
  const std::string csv = read_file(dir / "report.csv");
  const std::string json = read_file(dir / "accounting.json");
  const auto rows = parse_evolution_csv(csv);
  const AccountingTotals totals = parse_accounting_json(json);

  std::string current;
  for (const auto& r : rows) {
    if (r.run_id != current) {
      current = r.run_id;
      out << "run " << current << "\n";
      out << "block  site       metric  value\n";
    }
    std::string line = std::to_string(r.block);
    line.resize(7, ' ');
    std::string site(to_string(r.site));
    site.resize(11, ' ');
    std::string metric = r.metric;
    metric.resize(8, ' ');
    out << line << site << metric << format_double(r.value) << "\n";
  }
  out << "totals\n" << totals_text(totals);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anchored low-rank compression of toy transformer blocks", "aasvd"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log per-block progress to stderr");

  std::string dims_arg;
  std::string out_path;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen-model", "Write a seeded toy model container");
  gen->add_option("--dims", dims_arg, "Model JSON (inline or path)");
  gen->add_option("--seed", gen_seed, "Root seed");
  gen->add_option("--out", out_path, "Output container path")->required();

  std::string model_path;
  std::string config_arg;
  std::string out_dir;
  Overrides overrides;
  std::optional<std::string> refine_flag;
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--model", model_path, "Model container")->required();
    cmd->add_option("--config", config_arg, "Run config JSON (inline or path)")->required();
    cmd->add_option("--out", out_dir, "Output directory")->required();
    cmd->add_option("--seed", overrides.seed, "Root seed override");
    cmd->add_option("--ratio", overrides.ratio, "Target ratio override");
    cmd->add_option("--run-id", overrides.run_id, "Run identifier override");
    cmd->add_option("--shift-source", overrides.shift_source, "in_place or block_entry");
  };
  auto* compress = app.add_subcommand("compress", "Compress a model and write reports");
  add_run_options(compress);
  compress->add_option("--objective", overrides.objective, "Objective override");
  compress->add_option("--refine", refine_flag, "on or off")
      ->check(CLI::IsMember({"on", "off"}));
  auto* ablate = app.add_subcommand("ablate", "Run the objective x refinement grid");
  add_run_options(ablate);

  std::string in_dir;
  auto* report = app.add_subcommand("report", "Summarize a compress output directory");
  report->add_option("--in", in_dir, "Directory with report.csv and accounting.json")
      ->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kBadConfig;
  }
  if (refine_flag) overrides.refine = *refine_flag == "on";

  try {
    if (*gen) return cmd_gen_model(dims_arg, gen_seed, out_path, out);
    if (*compress) {
      return cmd_compress(model_path, config_arg, out_dir, overrides, verbose, out, err);
    }
    if (*ablate) return cmd_ablate(model_path, config_arg, out_dir, overrides, out);
    if (*report) return cmd_report(in_dir, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kBadConfig;
}

}  // namespace aasvd::cli
