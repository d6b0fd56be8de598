// Copyright 2026 The slicealign Authors.
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

#include "slicealign/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "slicealign/error.hpp"
#include "slicealign/gradcheck.hpp"
#include "slicealign/io.hpp"
#include "slicealign/version.hpp"

namespace slicealign {
namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFormat:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kConfigMismatch:
    case ErrorCode::kInvalidPattern:
    case ErrorCode::kInvalidPromptBank:
    case ErrorCode::kUnknownFinding:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

struct Common {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

RunConfig resolve_config(const std::string& path, const Common& common) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (cfg.train.proj_dim != cfg.synth.proj_dim) cfg.train.proj_dim = cfg.synth.proj_dim;
  if (common.seed) {
    cfg.synth.seed = *common.seed;
    cfg.train.seed = *common.seed;
    cfg.eval.bootstrap.seed = *common.seed;
  }
  cfg.eval.bootstrap.threads = common.threads;
  return cfg;
}

Manifest base_manifest(const std::string& command, const RunConfig& cfg) {
  Manifest m;
  m.command = command;
  m.config_hash = config_hash(cfg);
  m.synth_seed = cfg.synth.seed;
  m.train_seed = cfg.train.seed;
  m.eval_seed = cfg.eval.bootstrap.seed;
  return m;
}

// ------------------------------------------------------------------- mine

struct MineArgs {
  std::string reports;
  std::string patterns;
  std::string out;
  double pitch_mm = 12.0;
  bool scrub = false;
};

int cmd_mine(const MineArgs& a, std::ostream& out, std::ostream& err) {
  const PatternSet patterns = a.patterns.empty() ? PatternSet::defaults()
                                                 : PatternSet::from_file(a.patterns);
  const std::vector<Report> reports = read_reports(a.reports);
  const std::vector<ScrubRule> rules = default_scrub_rules();

  std::vector<SnippetRecord> snippets;
  std::map<std::string, std::size_t> per_pattern;
  for (const auto& p : patterns.patterns()) per_pattern[p.name] = 0;
  std::size_t without_sentence = 0;
  std::size_t without_geometry = 0;

  for (const Report& r : reports) {
    for (const SliceReference& ref : extract_references(r.full_text, patterns)) {
      ++per_pattern[ref.pattern];
      SnippetRecord s;
      s.report_id = r.report_id;
      s.reference = ref;
      try {
        s.text = snippet_for(r.full_text, ref, patterns);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNoSentenceFound) throw;
        ++without_sentence;
        continue;
      }
      if (a.scrub) s.text = scrub_identifiers(s.text, rules);
      const SeriesGeometry* geom = nullptr;
      for (const auto& g : r.series_geometries) {
        if (g.series == ref.series) geom = &g;
      }
      if (geom != nullptr) {
        try {
          const double mm = reference_to_mm(ref, *geom);
          DepthGrid grid;
          grid.pitch_mm = a.pitch_mm;
          grid.count = std::max(1, static_cast<int>(std::ceil(geom->axial_length_mm / a.pitch_mm)));
          s.axial_mm = mm;
          s.depth_index = mm_to_depth_index(mm, grid);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kImageOutOfRange && e.code() != ErrorCode::kOutOfVolume &&
              e.code() != ErrorCode::kSeriesMismatch) {
            throw;
          }
          s.axial_mm.reset();
          s.depth_index.reset();
          ++without_geometry;
        }
      } else {
        ++without_geometry;
      }
      snippets.push_back(std::move(s));
    }
  }

  if (a.out.empty() || a.out == "-") {
    write_snippets(out, snippets);
  } else {
    std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::kIo, a.out + ": cannot open for writing");
    write_snippets(f, snippets);
    if (!f) throw Error(ErrorCode::kIo, a.out + ": write failed");
  }
  std::ostream& log = (a.out.empty() || a.out == "-") ? err : out;
  log << "mined " << snippets.size() << " snippet(s) from " << reports.size() << " report(s)\n";
  for (const auto& [name, count] : per_pattern) log << "  " << name << ": " << count << "\n";
  if (without_sentence > 0) log << "  skipped without a sentence: " << without_sentence << "\n";
  if (without_geometry > 0) log << "  without axial position: " << without_geometry << "\n";
  return kExitOk;
}

// ------------------------------------------------------------ eval-mining

struct EvalMiningArgs {
  std::string predicted;
  std::string gold;
  std::size_t resamples = 10000;
  double level = 0.95;
};

int cmd_eval_mining(const EvalMiningArgs& a, const Common& common, std::ostream& out,
                    std::ostream& err) {
  const ReferenceSets predicted = read_reference_sets(a.predicted);
  const ReferenceSets gold = read_reference_sets(a.gold);
  for (const auto& [id, _] : predicted) {
    if (gold.find(id) == gold.end()) {
      throw Error(ErrorCode::kFormat, "report '" + id + "' appears in predictions but not in gold");
    }
  }

  struct Counts {
    std::int64_t tp = 0, fp = 0, fn = 0;
  };
  std::vector<Counts> per_report;
  std::size_t gold_refs = 0;
  for (const auto& [id, refs] : gold) {
    ReferenceSets p, g;
    g[id] = refs;
    if (auto it = predicted.find(id); it != predicted.end()) p[id] = it->second;
    const MiningScores s = evaluate_mining(p, g);
    per_report.push_back({s.true_positives, s.false_positives, s.false_negatives});
    gold_refs += refs.size();
  }
  if (gold_refs == 0) err << "warning: gold holds no references; recall is 100 by convention\n";

  const MiningScores total = evaluate_mining(predicted, gold);
  out << "reports " << gold.size() << ", gold references " << gold_refs << ", true positives "
      << total.true_positives << ", false positives " << total.false_positives
      << ", false negatives " << total.false_negatives << "\n";

  if (per_report.empty()) {
    out << "precision " << fixed(100.0 * total.precision) << "\nrecall " << fixed(100.0 * total.recall)
        << "\nf1 " << fixed(100.0 * total.f1) << "\n";
    return kExitOk;
  }
  BootstrapConfig boot;
  boot.resamples = a.resamples;
  boot.level = a.level;
  boot.seed = common.seed.value_or(0);
  boot.threads = common.threads;
  auto score = [](std::span<const Counts> sample) {
    Counts c;
    for (const auto& s : sample) {
      c.tp += s.tp;
      c.fp += s.fp;
      c.fn += s.fn;
    }
    return mining_scores_from_counts(c.tp, c.fp, c.fn);
  };
  const std::span<const Counts> all(per_report);
  const std::pair<const char*, double MiningScores::*> rows[] = {
      {"precision", &MiningScores::precision},
      {"recall", &MiningScores::recall},
      {"f1", &MiningScores::f1}};
  for (const auto& [name, member] : rows) {
    const Interval ci = bootstrap_ci(
        all, [&, member](std::span<const Counts> s) { return 100.0 * (score(s).*member); }, boot);
    out << name << " " << fixed(ci.point) << " [" << fixed(ci.lower) << ", " << fixed(ci.upper)
        << "]\n";
  }
  return kExitOk;
}

// -------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t trials = 100;
  std::string inject_fault;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  GradSuiteOptions opt;
  opt.seed = a.seed;
  opt.trials = a.trials;
  if (!a.inject_fault.empty()) {
    opt.inject_fault = true;
    bool known = false;
    for (GradTarget t : all_grad_targets()) {
      if (a.inject_fault == grad_target_name(t)) {
        opt.fault_target = t;
        known = true;
      }
    }
    if (!known) throw Error(ErrorCode::kInvalidConfig, "unknown fault target '" + a.inject_fault + "'");
  }
  const std::vector<GradCheckCase> cases = run_gradient_suite(opt);

  bool all_pass = true;
  for (GradTarget t : opt.targets) {
    double worst = 0.0;
    std::size_t failures = 0;
    for (const auto& c : cases) {
      if (c.target != t) continue;
      worst = std::max(worst, c.report.max_rel_error);
      if (!(c.report.max_rel_error < opt.tolerance)) {
        ++failures;
        if (failures <= 3) {
          out << "  FAIL " << grad_target_name(t) << " trial " << c.trial << " (" << c.config
              << "): coordinate " << c.report.worst_index << " analytic " << c.report.analytic
              << " numeric " << c.report.numeric << " rel.err " << c.report.max_rel_error << "\n";
        }
      }
    }
    all_pass = all_pass && failures == 0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-18s %zu trial(s)  max rel.err %.3e  %s\n",
                  grad_target_name(t), opt.trials, worst, failures == 0 ? "PASS" : "FAIL");
    out << buf;
  }
  out << (all_pass ? "PASS" : "FAIL") << " (seed " << a.seed << ", tolerance " << opt.tolerance
      << ")\n";
  return all_pass ? kExitOk : kExitFailure;
}

// ------------------------------------------------------- gen / train / eval

int cmd_gen_synth(const std::string& config, const std::string& out_dir, const Common& common,
                  std::ostream& out) {
  const RunConfig cfg = resolve_config(config, common);
  const Corpus corpus = generate(cfg.synth);
  const fs::path dir(out_dir);
  save_corpus(dir, corpus);
  write_text_file(dir / "run_config.json", run_config_json(cfg));
  Manifest m = base_manifest("gen-synth", cfg);
  if (!config.empty()) m.inputs.push_back(config);
  m.outputs = {"corpus.json", "images.remb",   "texts.remb",    "snippets.remb", "depth.remb",
               "prompts.remb", "prompts.jsonl", "reports.jsonl", "volumes.jsonl", "run_config.json"};
  write_text_file(dir / "manifest.json", manifest_json(m));
  const auto n = corpus.size();
  out << "generated " << n << " pairs (" << corpus.indices(Split::kTrain).size() << " train, "
      << corpus.indices(Split::kVal).size() << " val, " << corpus.indices(Split::kTest).size()
      << " test) into " << dir.string() << "\n";
  return kExitOk;
}

void check_corpus_matches(const Corpus& corpus, const RunConfig& cfg) {
  if (corpus.raw_dim() != cfg.synth.raw_dim) {
    throw Error(ErrorCode::kConfigMismatch,
                "corpus raw_dim " + std::to_string(corpus.raw_dim()) + " differs from config raw_dim " +
                    std::to_string(cfg.synth.raw_dim));
  }
}

int cmd_train(const std::string& config, const std::string& corpus_dir, const std::string& out_dir,
              const Common& common, std::ostream& out) {
  const RunConfig cfg = resolve_config(config, common);
  const Corpus corpus = load_corpus(corpus_dir);
  check_corpus_matches(corpus, cfg);
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  std::ofstream log(dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw Error(ErrorCode::kIo, (dir / "train_log.jsonl").string() + ": cannot open");
  const TrainState state = train(corpus, cfg.train, [&](const EpochLog& e) {
    log << epoch_log_json(e) << '\n';
    out << "epoch " << e.epoch << "  lr " << e.lr << "  global " << fixed(e.loss_global, 4)
        << "  prompt " << fixed(e.loss_prompt, 4) << "  loc " << fixed(e.loss_loc, 4) << "  total "
        << fixed(e.loss_total, 4) << "\n";
  });
  for (const auto& note : state.notes) out << "note: " << note << "\n";
  const std::string hash = config_hash(cfg);
  save_checkpoint(dir / "checkpoint.rfkt", state, hash);
  write_text_file(dir / "run_config.json", run_config_json(cfg));
  Manifest m = base_manifest("train", cfg);
  if (!config.empty()) m.inputs.push_back(config);
  m.inputs.push_back(corpus_dir);
  m.outputs = {"checkpoint.rfkt", "train_log.jsonl", "run_config.json"};
  write_text_file(dir / "manifest.json", manifest_json(m));
  out << "wrote " << (dir / "checkpoint.rfkt").string() << " after " << state.step << " steps\n";
  return kExitOk;
}

int cmd_eval(const std::string& config, const std::string& corpus_dir, const std::string& checkpoint,
             const std::string& out_dir, const Common& common, std::ostream& out) {
  const RunConfig cfg = resolve_config(config, common);
  const Corpus corpus = load_corpus(corpus_dir);
  check_corpus_matches(corpus, cfg);
  CheckpointInfo info;
  const TrainState state = load_checkpoint(checkpoint, &info);
  if (info.raw_dim != corpus.raw_dim() || info.proj_dim != cfg.synth.proj_dim) {
    throw Error(ErrorCode::kConfigMismatch,
                "checkpoint dims " + std::to_string(info.raw_dim) + "x" +
                    std::to_string(info.proj_dim) + " do not match expected " +
                    std::to_string(corpus.raw_dim()) + "x" + std::to_string(cfg.synth.proj_dim));
  }
  const EvalResult result = evaluate_checkpoint(state, corpus, cfg.eval);
  out << result.report.to_table();
  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    write_text_file(dir / "metrics.json", metrics_json(result));
    Manifest m = base_manifest("eval", cfg);
    if (!config.empty()) m.inputs.push_back(config);
    m.inputs.push_back(corpus_dir);
    m.inputs.push_back(checkpoint);
    m.outputs = {"metrics.json"};
    write_text_file(dir / "manifest.json", manifest_json(m));
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Slice-level report/volume alignment toolkit", "slicealign"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Master seed; every random stream derives from it");
    sub->add_option("--threads", common.threads, "Worker cap for parallel sections")
        ->check(CLI::PositiveNumber);
  };

  MineArgs mine;
  CLI::App* mine_cmd = app.add_subcommand("mine", "Extract slice-referenced snippets from reports");
  mine_cmd->add_option("reports", mine.reports, "Reports as JSON Lines")->required();
  mine_cmd->add_option("patterns", mine.patterns, "Optional reference pattern file");
  mine_cmd->add_option("--out", mine.out, "Snippet JSON Lines output ('-' for stdout)");
  mine_cmd->add_option("--pitch-mm", mine.pitch_mm, "Depth grid pitch for depth_index")
      ->check(CLI::PositiveNumber);
  mine_cmd->add_flag("--scrub", mine.scrub, "Mask identifiers in snippet text");
  add_common(mine_cmd);

  EvalMiningArgs em;
  CLI::App* em_cmd =
      app.add_subcommand("eval-mining", "Micro precision/recall/F1 of mined references");
  em_cmd->add_option("predicted", em.predicted, "Predicted references (JSON Lines)")->required();
  em_cmd->add_option("gold", em.gold, "Gold references (JSON Lines)")->required();
  em_cmd->add_option("--resamples", em.resamples, "Bootstrap resamples over reports")
      ->check(CLI::PositiveNumber);
  em_cmd->add_option("--level", em.level, "Confidence level")->check(CLI::Range(0.0, 1.0));
  add_common(em_cmd);

  GradcheckArgs gc;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gc_cmd->add_option("--trials", gc.trials, "Random configurations per target")
      ->check(CLI::PositiveNumber);
  gc_cmd->add_option("--inject-fault", gc.inject_fault)->group("");
  add_common(gc_cmd);

  std::string config, out_dir, corpus_dir, checkpoint;
  CLI::App* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic corpus");
  gen_cmd->add_option("--config", config, "Run configuration JSON");
  gen_cmd->add_option("--out", out_dir, "Output directory")->required();
  add_common(gen_cmd);

  CLI::App* train_cmd = app.add_subcommand("train", "Train projection heads on a corpus");
  train_cmd->add_option("--config", config, "Run configuration JSON");
  train_cmd->add_option("--corpus", corpus_dir, "Corpus directory from gen-synth")->required();
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  add_common(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with bootstrap CIs");
  eval_cmd->add_option("--config", config, "Run configuration JSON");
  eval_cmd->add_option("--corpus", corpus_dir, "Corpus directory from gen-synth")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file from train")->required();
  eval_cmd->add_option("--out", out_dir, "Directory for metrics.json and manifest.json");
  add_common(eval_cmd);

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("slicealign");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_storage) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (mine_cmd->parsed()) return cmd_mine(mine, out, err);
    if (em_cmd->parsed()) return cmd_eval_mining(em, common, out, err);
    if (gc_cmd->parsed()) {
      gc.seed = common.seed.value_or(0);
      return cmd_gradcheck(gc, out);
    }
    if (gen_cmd->parsed()) return cmd_gen_synth(config, out_dir, common, out);
    if (train_cmd->parsed()) return cmd_train(config, corpus_dir, out_dir, common, out);
    if (eval_cmd->parsed()) return cmd_eval(config, corpus_dir, checkpoint, out_dir, common, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace slicealign
