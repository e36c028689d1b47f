#include "convformer/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "convformer/bench.hpp"
#include "convformer/checkpoint.hpp"
#include "convformer/error.hpp"
#include "convformer/synth.hpp"

namespace convformer::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write '" + path.string() + "'");
  out << text;
}

data::CandidateFile candidates_for(const std::string& given, const data::SequenceDataset& ds, data::Split split,
                                   std::uint64_t seed, const fs::path& out_dir, std::ostream& log) {
  if (!given.empty()) return data::read_candidates(fs::path(given));
  auto c = data::build_candidate_file(ds, split, seed);
  const fs::path p = out_dir / (to_string(split) + "_candidates.txt");
  data::write_candidates(p, c);
  log << "sampled " << to_string(split) << " candidates -> " << p.string() << "\n";
  return c;
}

std::string metrics_line(const EvalReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4);
  s << "HIT@5=" << r.at("HIT@5") << " HIT@10=" << r.at("HIT@10") << " NDCG@10=" << r.at("NDCG@10")
    << " MRR=" << r.at("MRR");
  return s.str();
}

}  // namespace

RunOutcome run_training(const RunConfig& cfg_in, const fs::path& out_dir, std::ostream& log) {
  RunConfig cfg = cfg_in;
  if (!fs::exists(cfg.data.path)) throw ConfigError("data.path", "file '" + cfg.data.path + "' does not exist");
  const auto ds = data::load_sequences(cfg.data.path, cfg.data.min_count);
  log << "dataset: " << ds.user_count() << " users, " << ds.item_count() << " items, " << ds.action_count()
      << " actions\n";
  cfg.model.vocab_size = ds.vocab_size();
  fs::create_directories(out_dir);

  data::CandidateFile valid_c, test_c;
  const data::CandidateFile* valid_ptr = nullptr;
  const data::CandidateFile* test_ptr = nullptr;
  if (cfg.train.valid_mode == EvalMode::OneVs99) {
    valid_c = candidates_for(cfg.data.valid_candidates, ds, data::Split::Valid, cfg.data.candidate_seed, out_dir, log);
    valid_ptr = &valid_c;
  }
  if (cfg.eval.mode == EvalMode::OneVs99) {
    if (cfg.eval.split == data::Split::Valid && valid_ptr) {
      test_ptr = valid_ptr;
    } else {
      const std::string& given = cfg.eval.split == data::Split::Valid ? cfg.data.valid_candidates : cfg.data.test_candidates;
      test_c = candidates_for(given, ds, cfg.eval.split, cfg.data.candidate_seed + 1, out_dir, log);
      test_ptr = &test_c;
    }
  }

  Model model(cfg.model, cfg.init_seed);
  RunOutcome outcome;
  outcome.train = train(model, ds, cfg.train, valid_ptr, [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << " loss " << std::setprecision(6) << r.train_loss << " valid MRR " << r.valid_mrr
        << "\n";
  });
  outcome.report = evaluate(model, ds, cfg.eval.split, cfg.eval.mode, test_ptr);
  log << "best epoch " << outcome.train.best_epoch << "; " << to_string(cfg.eval.split) << " "
      << metrics_line(outcome.report) << "\n";

  outcome.checkpoint = out_dir / "checkpoint.json";
  save_checkpoint(outcome.checkpoint, model);
  std::ostringstream hist;
  write_history_csv(hist, outcome.train.history);
  write_text(out_dir / "history.csv", hist.str());
  write_text(out_dir / "report.json", outcome.report.to_json().dump(2) + "\n");
  write_text(out_dir / "config.json", to_json(cfg_in).dump(2) + "\n");
  return outcome;
}

std::vector<std::string> default_axis_values(const std::string& axis) {
  if (axis == "kernel_size") return {"3", "15", "30", "45", "50"};
  if (axis == "padding") return {"zero", "circular", "reflect"};
  if (axis == "mixer") return {"SA", "SAR_O", "SAR_P", "SAR_R", "SAR_W", "DWC"};
  if (axis == "window") return {"3", "15", "30", "45"};
  throw UserError("unknown ablation axis '" + axis + "' (expected kernel_size, padding, mixer or window)");
}

RunConfig with_axis(const RunConfig& base, const std::string& axis, const std::string& value) {
  RunConfig c = base;
  auto number = [&](const std::string& v) {
    std::size_t used = 0;
    unsigned long n = 0;
    try {
      n = std::stoul(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size()) throw UserError("ablation value '" + v + "' is not a non-negative integer");
    return static_cast<std::size_t>(n);
  };
  if (axis == "kernel_size") {
    if (!c.model.mixer.uses_kernel()) throw UserError("kernel_size ablation needs a convolutional mixer");
    c.model.mixer.kernel_size = number(value);
  } else if (axis == "padding") {
    c.model.mixer.padding = mixers::parse_padding(value);
  } else if (axis == "mixer") {
    c.model.mixer.kind = mixers::parse_mixer_kind(value);
  } else if (axis == "window") {
    c.model.mixer.kind = mixers::MixerKind::SA_WINDOWED;
    c.model.mixer.window = number(value);
  } else {
    default_axis_values(axis);  // throws
  }
  c.model.mixer.validate(c.model.max_len);
  if (c.model.accelerated && c.model.mixer.uses_kernel() && c.model.mixer.padding == mixers::Padding::Reflect) {
    throw UserError("axis value " + value + ": accelerated path does not support reflect padding");
  }
  return c;
}

namespace {

int cmd_train(const std::string& config_path, const std::string& out_override, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  const fs::path dir = out_override.empty() ? fs::path(cfg.output.dir) : fs::path(out_override);
  run_training(cfg, dir, out);
  out << "wrote " << (dir / "checkpoint.json").string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, const std::string& cands, const std::string& mode_s,
             const std::string& split_s, std::size_t min_count, const std::string& output, std::ostream& out) {
  const EvalMode mode = parse_eval_mode(mode_s);
  const data::Split split = parse_split(split_s);
  if (mode == EvalMode::OneVs99 && cands.empty()) throw UserError("--candidates is required for ONE_VS_99");
  const Model model = load_checkpoint(ckpt);
  const auto ds = data::load_sequences(data_path, min_count);
  data::CandidateFile c;
  if (mode == EvalMode::OneVs99) c = data::read_candidates(fs::path(cands));
  const EvalReport r = evaluate(model, ds, split, mode, mode == EvalMode::OneVs99 ? &c : nullptr);
  const std::string text = r.to_json().dump(2) + "\n";
  if (!output.empty()) write_text(output, text);
  out << text;
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& axis, std::vector<std::string> values,
               const std::string& out_override, std::ostream& out) {
  const RunConfig base = load_run_config(config_path);
  if (values.empty()) values = default_axis_values(axis);
  std::vector<RunConfig> runs;
  for (const auto& v : values) runs.push_back(with_axis(base, axis, v));  // validate all before training
  const fs::path root = out_override.empty() ? fs::path(base.output.dir) / ("ablate-" + axis) : fs::path(out_override);
  fs::create_directories(root);
  std::ostringstream csv;
  csv << "axis,value,best_epoch,best_valid_MRR";
  for (auto k : kHitCutoffs) csv << ",HIT@" << k;
  for (auto k : kNdcgCutoffs) csv << ",NDCG@" << k;
  csv << ",MRR\n";
  csv << std::setprecision(17);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out << "== " << axis << " = " << values[i] << "\n";
    const auto o = run_training(runs[i], root / (axis + "-" + values[i]), out);
    csv << axis << ',' << values[i] << ',' << o.train.best_epoch << ',' << o.train.best_valid_mrr;
    for (auto k : kHitCutoffs) csv << ',' << o.report.at("HIT@" + std::to_string(k));
    for (auto k : kNdcgCutoffs) csv << ',' << o.report.at("NDCG@" + std::to_string(k));
    csv << ',' << o.report.at("MRR") << '\n';
  }
  write_text(root / "ablation.csv", csv.str());
  out << "wrote " << (root / "ablation.csv").string() << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::vector<std::size_t> Ls{500, 1000};
  std::size_t D = 64;
  std::vector<std::size_t> Ks;
  std::size_t batch = 16;
  bench::BenchOptions opt;
  std::vector<std::string> kinds{"SA", "dwc_direct", "dwc_fft"};
  std::string padding = "circular";
  std::string csv = "bench.csv";
  std::string json;
};

int cmd_bench(BenchArgs a, std::ostream& out) {
  if (a.opt.warmup < 3) throw UserError("--warmup must be >= 3");
  a.opt.padding = mixers::parse_padding(a.padding);
  std::vector<bench::BenchKind> kinds;
  for (const auto& k : a.kinds) kinds.push_back(bench::parse_bench_kind(k));
  std::vector<bench::BenchCase> cases;
  for (std::size_t L : a.Ls) {
    const auto ks = a.Ks.empty() ? bench::default_kernel_sweep(L) : a.Ks;
    for (auto k : ks) {
      if (k < 1 || k > L) throw UserError("kernel size " + std::to_string(k) + " outside [1, " + std::to_string(L) + "]");
    }
    for (auto kind : kinds) {
      const std::vector<std::size_t> kl = kind == bench::BenchKind::SA ? std::vector<std::size_t>{0} : ks;
      for (auto k : kl) cases.push_back({kind, L, a.D, k, a.batch});
    }
  }
  const auto recs = bench::time_mixers(cases, a.opt);
  for (const auto& r : recs) {
    out << std::left << std::setw(11) << bench::to_string(r.kind) << " L=" << r.L << " K=" << r.K << " median "
        << std::fixed << std::setprecision(3) << r.median_ns / 1e6 << " ms mean " << r.mean_ns / 1e6 << " ms\n";
  }
  std::ostringstream csv;
  bench::write_csv(csv, recs);
  write_text(a.csv, csv.str());
  if (!a.json.empty()) write_text(a.json, bench::to_json(recs).dump(2) + "\n");
  return kExitOk;
}

int cmd_gen_data(const synth::MarkovSpec& spec, std::uint64_t seed, const std::string& output, std::ostream& out) {
  const auto s = synth::generate(spec, seed);
  data::write_sequences(fs::path(output), s.dataset);
  out << "wrote " << s.dataset.user_count() << " sequences (" << s.dataset.action_count() << " actions) to " << output
      << "\n";
  return kExitOk;
}

int cmd_make_candidates(const std::string& data_path, const std::string& split_s, std::uint64_t seed,
                        std::size_t negatives, std::size_t min_count, const std::string& output, std::ostream& out) {
  const auto ds = data::load_sequences(data_path, min_count);
  const auto c = data::build_candidate_file(ds, parse_split(split_s), seed, negatives);
  data::write_candidates(fs::path(output), c);
  out << "wrote candidates for " << c.users.size() << " users to " << output << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ConvFormer sequential recommender"};
  app.require_subcommand(1);
  std::function<int()> action;

  std::string config, out_dir;
  auto* train_cmd = app.add_subcommand("train", "train a model from a JSON run config");
  train_cmd->add_option("--config", config, "run config (JSON)")->required();
  train_cmd->add_option("--output-dir", out_dir, "overrides output.dir");
  train_cmd->callback([&] { action = [&] { return cmd_train(config, out_dir, out); }; });

  std::string ckpt, data_path, cands, mode = "ONE_VS_99", split = "test", report_path;
  std::size_t min_count = 5;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "sequence file")->required();
  eval_cmd->add_option("--candidates", cands, "candidate file (ONE_VS_99)");
  eval_cmd->add_option("--mode", mode, "ONE_VS_99 or FULL_SORT")->capture_default_str();
  eval_cmd->add_option("--split", split, "valid or test")->capture_default_str();
  eval_cmd->add_option("--min-count", min_count, "k-core threshold")->capture_default_str();
  eval_cmd->add_option("--output", report_path, "also write the report here");
  eval_cmd->callback([&] {
    action = [&] { return cmd_eval(ckpt, data_path, cands, mode, split, min_count, report_path, out); };
  });

  std::string axis;
  std::vector<std::string> values;
  auto* ablate_cmd = app.add_subcommand("ablate", "one training run per axis value");
  ablate_cmd->add_option("--config", config, "base run config (JSON)")->required();
  ablate_cmd->add_option("--axis", axis, "kernel_size, padding, mixer or window")->required();
  ablate_cmd->add_option("--values", values, "axis values (default: the standard sweep)")->delimiter(',');
  ablate_cmd->add_option("--output-dir", out_dir, "root directory for the runs");
  ablate_cmd->callback([&] { action = [&] { return cmd_ablate(config, axis, values, out_dir, out); }; });

  BenchArgs b;
  auto* bench_cmd = app.add_subcommand("bench", "time token-mixer forward passes");
  bench_cmd->add_option("--L", b.Ls, "sequence lengths")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--D", b.D, "hidden size")->capture_default_str();
  bench_cmd->add_option("--K", b.Ks, "kernel sizes (default: 10, L/8, L/4, L/2, L)")->delimiter(',');
  bench_cmd->add_option("--batch", b.batch, "sequences per timed repeat")->capture_default_str();
  bench_cmd->add_option("--repeats", b.opt.repeats, "timed repeats (>= 10)")->capture_default_str();
  bench_cmd->add_option("--warmup", b.opt.warmup, "untimed repeats (>= 3)")->capture_default_str();
  bench_cmd->add_option("--seed", b.opt.seed, "input seed")->capture_default_str();
  bench_cmd->add_option("--mixers", b.kinds, "SA, dwc_direct, dwc_fft")->delimiter(',');
  bench_cmd->add_option("--padding", b.padding, "DWC padding")->capture_default_str();
  bench_cmd->add_option("--csv", b.csv, "CSV output")->capture_default_str();
  bench_cmd->add_option("--json", b.json, "plot-data JSON output");
  bench_cmd->callback([&] { action = [&] { return cmd_bench(b, out); }; });

  synth::MarkovSpec spec;
  std::string structure = "random", gen_out;
  std::uint64_t gen_seed = 1;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic Markov sequence file");
  gen_cmd->add_option("--order", spec.order, "Markov order")->capture_default_str();
  gen_cmd->add_option("--items", spec.item_count, "item count")->capture_default_str();
  gen_cmd->add_option("--users", spec.user_count, "user count")->capture_default_str();
  gen_cmd->add_option("--min-len", spec.min_len, "shortest sequence")->capture_default_str();
  gen_cmd->add_option("--max-len", spec.max_len, "longest sequence")->capture_default_str();
  gen_cmd->add_option("--fanout", spec.fanout, "successors per item")->capture_default_str();
  gen_cmd->add_option("--structure", structure, "random or cycle")->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "seed")->capture_default_str();
  gen_cmd->add_option("--output", gen_out, "output sequence file")->required();
  gen_cmd->callback([&] {
    action = [&] {
      if (structure == "random") spec.structure = synth::Structure::Random;
      else if (structure == "cycle") spec.structure = synth::Structure::Cycle;
      else throw UserError("--structure must be random or cycle");
      return cmd_gen_data(spec, gen_seed, gen_out, out);
    };
  });

  std::uint64_t cand_seed = 2024;
  std::size_t negatives = 99;
  std::string cand_out;
  auto* cand_cmd = app.add_subcommand("make-candidates", "sample and persist 1-vs-99 candidate sets");
  cand_cmd->add_option("--data", data_path, "sequence file")->required();
  cand_cmd->add_option("--split", split, "valid or test")->capture_default_str();
  cand_cmd->add_option("--seed", cand_seed, "sampling seed")->capture_default_str();
  cand_cmd->add_option("--negatives", negatives, "negatives per user")->capture_default_str();
  cand_cmd->add_option("--min-count", min_count, "k-core threshold")->capture_default_str();
  cand_cmd->add_option("--output", cand_out, "candidate file")->required();
  cand_cmd->callback([&] {
    action = [&] { return cmd_make_candidates(data_path, split, cand_seed, negatives, min_count, cand_out, out); };
  });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUser;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUser;
  } catch (const UserError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace convformer::cli
