// Copyright 2026 The ATFuse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "atfuse/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "atfuse/checkpoint.hpp"
#include "atfuse/error.hpp"
#include "atfuse/gradcheck.hpp"
#include "atfuse/kernels.hpp"

namespace atfuse::cli {

namespace fs = std::filesystem;

RunConfig resolve_config(const fs::path& config_path, const std::vector<std::string>& overrides,
                         const std::int64_t* seed) {
  RunConfig cfg;
  if (!config_path.empty()) cfg.apply(read_settings(config_path));
  for (const auto& o : overrides) {
    const auto [key, value] = split_assignment(o);
    cfg.apply(key, value);
  }
  if (seed) {
    if (*seed < 0) throw ConfigError("--seed must be non-negative");
    cfg.set_seed(static_cast<std::uint64_t>(*seed));
  }
  cfg.validate();
  return cfg;
}

namespace {

std::vector<ImagePair> corpus_pairs(const fs::path& corpus) {
  std::vector<ImagePair> pairs;
  for (auto& np : load_corpus(corpus)) pairs.push_back(std::move(np.pair));
  return pairs;
}

// Largest top-left crop whose sides are multiples of p.
ImagePair crop_to_multiple(const ImagePair& pair, std::size_t p) {
  const std::size_t h = pair.ir.height / p * p, w = pair.ir.width / p * p;
  if (h == 0 || w == 0) throw DimensionError("image smaller than patch size " + std::to_string(p));
  if (h == pair.ir.height && w == pair.ir.width) return pair;
  return {crop(pair.ir, 0, 0, h, w), crop(pair.vi, 0, 0, h, w)};
}

void print_report(std::ostream& out, const metrics::MetricReport& r) {
  out << std::setprecision(6) << "AG " << r.ag << "  EN " << r.en << "  SD " << r.sd << "  SF "
      << r.sf << "  Qabf " << r.qabf << '\n';
}

}  // namespace

TrainOutputs cmd_train(const RunConfig& cfg, const fs::path& corpus, const fs::path& out_dir) {
  const std::vector<ImagePair> pairs = corpus_pairs(corpus);
  if (pairs.empty()) throw FormatError("no image pairs found under " + corpus.string());
  fs::create_directories(out_dir);
  TrainOutputs outputs;
  outputs.effective_config = out_dir / "effective.cfg";
  outputs.log = out_dir / "train_log.csv";
  outputs.checkpoint = out_dir / "checkpoint.atf";
  write_settings(cfg.to_settings(), outputs.effective_config);

  std::ofstream log(outputs.log);
  if (!log) throw Error("cannot write " + outputs.log.string());
  write_log_header(log);
  TrainHooks hooks;
  hooks.on_step = [&](const TrainLogRecord& r) {
    write_log_record(log, r);
    log.flush();
  };
  hooks.on_checkpoint = [&](std::size_t epoch, AtfuseModel& model) {
    if (epoch == cfg.train.epochs) {
      save_checkpoint(model, outputs.checkpoint);
    } else {
      std::ostringstream name;
      name << "checkpoint_epoch" << std::setw(4) << std::setfill('0') << epoch << ".atf";
      save_checkpoint(model, out_dir / name.str());
    }
  };
  AtfuseModel model(cfg.model);
  TrainResult result = train(model, pairs, cfg, hooks);
  outputs.records = std::move(result.log);
  return outputs;
}

metrics::MetricReport cmd_fuse(const fs::path& checkpoint, const fs::path& ir_path,
                               const fs::path& vi_path, const fs::path& out) {
  ImagePair pair{load_gray(ir_path), load_gray(vi_path)};
  if (!pair.ir.same_size(pair.vi)) {
    throw DimensionError("ir " + std::to_string(pair.ir.height) + "x" +
                         std::to_string(pair.ir.width) + " and vi " +
                         std::to_string(pair.vi.height) + "x" + std::to_string(pair.vi.width) +
                         " differ; inputs must be registered");
  }
  AtfuseModel model = load_checkpoint(checkpoint);
  const GrayImage fused = fuse_images(model, pair);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_gray(fused, out);
  Settings snapshot = model.config().to_settings();
  write_settings(snapshot, fs::path(out).replace_extension(".cfg"));
  return metrics::evaluate(quantize(fused), pair.ir, pair.vi);
}

std::vector<metrics::NamedReport> cmd_eval(const fs::path& fused_dir, const fs::path& ir_dir,
                                           const fs::path& vi_dir, const fs::path& csv_out) {
  for (const auto& d : {fused_dir, ir_dir, vi_dir}) {
    if (!fs::is_directory(d)) throw FormatError("not a directory: " + d.string());
  }
  const auto ir_list = list_images(ir_dir);
  const auto vi_list = list_images(vi_dir);
  const std::map<std::string, fs::path> irs(ir_list.begin(), ir_list.end());
  const std::map<std::string, fs::path> vis(vi_list.begin(), vi_list.end());
  std::vector<metrics::NamedReport> rows;
  for (const auto& [name, path] : list_images(fused_dir)) {
    const auto ir = irs.find(name);
    const auto vi = vis.find(name);
    if (ir == irs.end() || vi == vis.end()) {
      throw FormatError("no source pair for fused image '" + name + "'");
    }
    rows.push_back({name, metrics::evaluate(load_gray(path), load_gray(ir->second),
                                            load_gray(vi->second))});
  }
  if (csv_out.has_parent_path()) fs::create_directories(csv_out.parent_path());
  std::ofstream csv(csv_out);
  if (!csv) throw Error("cannot write " + csv_out.string());
  metrics::write_csv(csv, rows);
  return rows;
}

std::vector<AblationRow> ablation_grid(const std::string& variant, const RunConfig& base) {
  std::vector<AblationRow> rows;
  auto row = [&](std::string label, auto&& edit) {
    RunConfig cfg = base;
    edit(cfg);
    cfg.validate();
    rows.push_back({std::move(label), cfg, {}, 0.0});
  };
  if (variant == "no_diim" || variant == "no_aciim") {
    row(variant, [&](RunConfig& c) { c.model.variant = parse_variant(variant); });
    row("full", [](RunConfig& c) { c.model.variant = Variant::kFull; });
  } else if (variant == "alpha_sweep") {
    for (double a : {0.0, 20.0, 50.0, 80.0, 100.0}) {
      row("alpha_" + setting::format_double(a), [a](RunConfig& c) { c.loss.alpha = a; });
    }
  } else if (variant == "gamma_sweep") {
    for (double g : {0.5, 0.75, 1.0}) {
      row("gamma_" + setting::format_double(g), [g](RunConfig& c) { c.loss.gamma = g; });
    }
  } else if (variant == "block_count") {
    for (std::size_t b : {1u, 2u, 3u}) {
      row("blocks_" + std::to_string(b), [b](RunConfig& c) { c.model.n_fusion_blocks = b; });
    }
  } else {
    throw ConfigError("unknown ablation '" + variant +
                      "' (no_diim, no_aciim, alpha_sweep, gamma_sweep, block_count)");
  }
  return rows;
}

std::vector<AblationRow> cmd_ablate(const std::string& variant, const RunConfig& base,
                                    const fs::path& corpus, const fs::path& out_dir) {
  std::vector<AblationRow> rows = ablation_grid(variant, base);
  const auto named = load_corpus(corpus);
  if (named.empty()) throw FormatError("no image pairs found under " + corpus.string());
  const fs::path root = out_dir / variant;
  fs::create_directories(root);
  write_settings(base.to_settings(), root / "effective.cfg");
  for (auto& r : rows) {
    const TrainOutputs trained = cmd_train(r.config, corpus, root / r.label);
    r.final_total = trained.records.back().loss.total;
    AtfuseModel model = load_checkpoint(trained.checkpoint);
    std::vector<metrics::MetricReport> reports;
    for (const auto& np : named) {
      const ImagePair pair = crop_to_multiple(np.pair, r.config.model.patch_size);
      reports.push_back(metrics::evaluate(quantize(fuse_images(model, pair)), pair.ir, pair.vi));
    }
    r.metrics = metrics::mean_report(reports);
  }
  std::ofstream csv(root / "comparison.csv");
  if (!csv) throw Error("cannot write " + (root / "comparison.csv").string());
  csv << "variant,seed,ag,en,sd,sf,qabf,final_total\n";
  for (const auto& r : rows) {
    using setting::format_double;
    csv << r.label << ',' << r.config.train.seed << ',' << format_double(r.metrics.ag) << ','
        << format_double(r.metrics.en) << ',' << format_double(r.metrics.sd) << ','
        << format_double(r.metrics.sf) << ',' << format_double(r.metrics.qabf) << ','
        << format_double(r.final_total) << '\n';
  }
  return rows;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ATFuse infrared/visible image fusion", "atfuse"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = 0;
  std::string corpus, out_dir;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "settings file (section.key = value)");
    sub->add_option("--set", overrides, "KEY=VALUE override, repeatable");
    sub->add_option("--seed", seed, "seed for initialization and sampling");
    sub->add_option("--corpus", corpus, "directory with ir/ and vi/")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
  };

  auto* train_cmd = app.add_subcommand("train", "train a model on a corpus");
  add_run_options(train_cmd);

  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare ablation variants");
  std::string variant;
  ablate_cmd->add_option("variant", variant, "no_diim | no_aciim | alpha_sweep | gamma_sweep | block_count")
      ->required();
  add_run_options(ablate_cmd);

  auto* fuse_cmd = app.add_subcommand("fuse", "fuse one registered pair");
  std::string checkpoint, ir_path, vi_path, fused_out;
  fuse_cmd->add_option("--checkpoint", checkpoint)->required();
  fuse_cmd->add_option("--ir", ir_path)->required();
  fuse_cmd->add_option("--vi", vi_path)->required();
  fuse_cmd->add_option("--out", fused_out, "output PGM path")->required();

  auto* eval_cmd = app.add_subcommand("eval", "metrics of fused images against their sources");
  std::string fused_dir, ir_dir, vi_dir, csv_out;
  eval_cmd->add_option("--fused", fused_dir)->required();
  eval_cmd->add_option("--ir", ir_dir)->required();
  eval_cmd->add_option("--vi", vi_dir)->required();
  eval_cmd->add_option("--csv", csv_out)->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string scope = "all";
  double tolerance = 1e-4;
  std::int64_t grad_seed = 7;
  grad_cmd->add_option("--scope", scope, "all | ops | blocks | losses");
  grad_cmd->add_option("--tolerance", tolerance);
  grad_cmd->add_option("--seed", grad_seed);

  std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    const std::int64_t* seed_ptr = nullptr;
    for (auto* sub : {train_cmd, ablate_cmd}) {
      if (sub->parsed() && sub->count("--seed") > 0) seed_ptr = &seed;
    }
    if (train_cmd->parsed()) {
      const RunConfig cfg = resolve_config(config_path, overrides, seed_ptr);
      const TrainOutputs o = cmd_train(cfg, corpus, out_dir);
      const auto& first = o.records.front().loss;
      const auto& last = o.records.back().loss;
      out << "trained " << o.records.size() << " steps, total loss " << first.total << " -> "
          << last.total << "\ncheckpoint " << o.checkpoint.string() << '\n';
    } else if (ablate_cmd->parsed()) {
      const RunConfig cfg = resolve_config(config_path, overrides, seed_ptr);
      for (const auto& r : cmd_ablate(variant, cfg, corpus, out_dir)) {
        out << std::left << std::setw(12) << r.label << ' ';
        print_report(out, r.metrics);
      }
      out << "comparison " << (fs::path(out_dir) / variant / "comparison.csv").string() << '\n';
    } else if (fuse_cmd->parsed()) {
      print_report(out, cmd_fuse(checkpoint, ir_path, vi_path, fused_out));
    } else if (eval_cmd->parsed()) {
      const auto rows = cmd_eval(fused_dir, ir_dir, vi_dir, csv_out);
      out << rows.size() << " pairs evaluated, " << csv_out << '\n';
    } else if (grad_cmd->parsed()) {
      GradCheckOptions opt;
      opt.tolerance = tolerance;
      opt.seed = static_cast<std::uint64_t>(grad_seed);
      const GradCheckReport report = grad_check(parse_grad_scope(scope), opt);
      for (const auto& g : report.groups) {
        out << std::left << std::setw(24) << g.name << std::setw(14) << status_name(g.status)
            << "max_rel_err " << std::scientific << std::setprecision(3) << g.max_rel_error
            << std::defaultfloat << "  checked " << g.checked << "  skipped " << g.skipped << '\n';
      }
      out << (report.pass() ? "gradcheck passed" : "gradcheck FAILED") << " at tolerance "
          << tolerance << '\n';
      return report.pass() ? kExitOk : kExitCheckFailed;
    }
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace atfuse::cli
