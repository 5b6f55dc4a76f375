// Command-line surface for the spectrogram-attention pipeline: feature
// extraction, synthetic corpus generation, training, evaluation, the noise
// robustness sweep, attention inspection, and the gradient check suite.
//
// Exit codes: 0 success, 1 check/assertion failure, 2 missing or invalid
// input artifact, 3 configuration error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fefa/fefa.hpp"

namespace fs = std::filesystem;
using namespace fefa;

namespace {

constexpr int kExitCheckFailure = 1;
constexpr int kExitInputError = 2;
constexpr int kExitConfigError = 3;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

RunConfig load_run_config(const GlobalOpts& g) {
  if (g.config_path.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_config(g.config_path);
  if (g.has_seed_override) {
    cfg.seed = g.seed_override;
    cfg.validate();
  }
  return cfg;
}

fs::path ensure_out_dir(const GlobalOpts& g) {
  fs::path dir(g.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir))
    throw InputError("cannot create output directory " + dir.string());
  return dir;
}

std::string utt_file_name(int speaker, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "spk%02d_utt%03d.wav", speaker, index);
  return buf;
}

int cmd_featurize(const GlobalOpts& g, const std::string& wav_path) {
  const RunConfig cfg = load_run_config(g);
  const fs::path out = ensure_out_dir(g);
  if (!fs::exists(wav_path)) throw InputError("no such file: " + wav_path);
  const Waveform wave = read_wav(wav_path);
  Spectrogram spec;
  try {
    spec = spectrogram(wave, cfg.dsp);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  write_matrix_csv((out / "spectrogram.csv").string(), spec.values);
  write_pgm((out / "spectrogram.pgm").string(), spec.values);
  std::cout << "wrote " << (out / "spectrogram.csv").string() << " ("
            << spec.bins() << " bins x " << spec.frames() << " frames)\n";
  return 0;
}

int cmd_gen_corpus(const GlobalOpts& g) {
  const RunConfig cfg = load_run_config(g);
  const fs::path out = ensure_out_dir(g);
  const Corpus corpus = generate_corpus(cfg.corpus);
  const fs::path wav_dir = out / "corpus";
  fs::create_directories(wav_dir);
  std::string manifest = "file,speaker,utterance,split,speaker_f0_hz\n";
  for (const Utterance& utt : corpus.utterances) {
    const std::string name = utt_file_name(utt.speaker, utt.index);
    write_wav((wav_dir / name).string(), utt.wave);
    char row[160];
    std::snprintf(row, sizeof(row), "corpus/%s,%d,%d,%s,%.6f\n", name.c_str(),
                  utt.speaker, utt.index, utt.train_split ? "train" : "test",
                  corpus.speakers[static_cast<std::size_t>(utt.speaker)].f0_hz);
    manifest += row;
  }
  write_text_file((out / "corpus_manifest.csv").string(), manifest);
  std::cout << "wrote " << corpus.utterances.size() << " utterances to "
            << wav_dir.string() << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g) {
  const RunConfig cfg = load_run_config(g);
  const fs::path out = ensure_out_dir(g);
  const Corpus corpus = generate_corpus(cfg.corpus);
  const Dataset data = featurize_corpus(corpus, cfg.dsp);
  TrainResult result = train(cfg.model_spec(), data, cfg.train_config());
  write_text_file((out / "training_log.csv").string(), training_log_csv(result.log));
  save_checkpoint((out / "checkpoint.fefa").string(), result.model, cfg.train_hash(),
                  cfg.epochs);
  if (!result.log.empty()) {
    const EpochLog& last = result.log.back();
    std::cout << "final epoch " << last.epoch << ": train_loss " << last.train_loss
              << ", test_acc " << last.test_acc_pct << "%\n";
  }
  std::cout << "wrote " << (out / "checkpoint.fefa").string() << "\n";
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt_path) {
  const RunConfig cfg = load_run_config(g);
  const fs::path out = ensure_out_dir(g);
  if (!fs::exists(ckpt_path)) throw InputError("no such checkpoint: " + ckpt_path);
  LoadedCheckpoint ckpt = load_checkpoint_checked(ckpt_path, cfg.train_hash());

  const Corpus corpus = generate_corpus(cfg.corpus);
  const auto test_split = corpus.split(/*train=*/false);
  std::vector<Tensor4> test_x;
  std::vector<int> test_y;
  for (const Utterance* u : test_split) {
    test_x.push_back(features_from_wave(u->wave, cfg.dsp));
    test_y.push_back(u->speaker);
  }
  const TrialSet trials = build_trials(test_y, cfg.n_trials, cfg.trial_seed);
  const EvalResult r = evaluate(ckpt.model, test_x, test_y, trials);

  EvalReport report;
  EvalRow row;
  row.variant = ckpt.model.spec.fefa == FefaMode::none ? "baseline" : "fefa";
  row.backbone = to_string(ckpt.model.spec.backbone);
  row.dist = "none";
  row.snr_db = kInfiniteSnrDb;
  row.accuracy_pct = r.accuracy_pct;
  row.eer_pct = r.eer_pct;
  row.delta_eer_pct = 0.0;
  row.seeds = std::to_string(ckpt.model.spec.seed);
  report.rows.push_back(row);
  write_text_file((out / "eval.csv").string(), eval_report_csv(report));
  std::cout << "accuracy " << r.accuracy_pct << "%, EER " << r.eer_pct << "%\n";
  return 0;
}

int cmd_noise_test(const GlobalOpts& g, const std::vector<std::string>& baseline_paths,
                   const std::vector<std::string>& fefa_paths) {
  const RunConfig cfg = load_run_config(g);
  const fs::path out = ensure_out_dir(g);
  if (baseline_paths.empty() || fefa_paths.empty())
    throw ConfigError("noise-test needs at least one --baseline and one --fefa checkpoint");

  std::vector<Model> models;
  std::vector<std::uint64_t> seeds;
  SweepVariant baseline{"baseline", {}}, fefa_variant{"fefa", {}};
  models.reserve(baseline_paths.size() + fefa_paths.size());
  for (const auto& p : baseline_paths) {
    if (!fs::exists(p)) throw InputError("no such checkpoint: " + p);
    LoadedCheckpoint c = load_checkpoint_checked(p, cfg.train_hash());
    if (c.model.spec.fefa != FefaMode::none)
      throw InputError("checkpoint " + p + " is not a baseline model");
    seeds.push_back(c.model.spec.seed);
    models.push_back(std::move(c.model));
    baseline.models.push_back(&models.back());
  }
  for (const auto& p : fefa_paths) {
    if (!fs::exists(p)) throw InputError("no such checkpoint: " + p);
    LoadedCheckpoint c = load_checkpoint_checked(p, cfg.train_hash());
    if (c.model.spec.fefa == FefaMode::none)
      throw InputError("checkpoint " + p + " has no attention placements");
    models.push_back(std::move(c.model));
    fefa_variant.models.push_back(&models.back());
  }

  const Corpus corpus = generate_corpus(cfg.corpus);
  const auto test_split = corpus.split(/*train=*/false);
  std::vector<int> test_y;
  for (const Utterance* u : test_split) test_y.push_back(u->speaker);
  const TrialSet trials = build_trials(test_y, cfg.n_trials, cfg.trial_seed);

  const EvalReport report =
      robustness_sweep({baseline, fefa_variant}, corpus, trials, cfg.snr_list,
                       cfg.noise_dists, cfg.dsp, cfg.noise_seed, seeds);
  write_text_file((out / "noise_report.csv").string(), eval_report_csv(report));
  std::cout << eval_report_csv(report);
  return 0;
}

int cmd_attn_map(const GlobalOpts& g, const std::string& ckpt_path,
                 const std::string& wav_path) {
  const RunConfig cfg = load_run_config(g);
  const fs::path out = ensure_out_dir(g);
  if (!fs::exists(ckpt_path)) throw InputError("no such checkpoint: " + ckpt_path);
  if (!fs::exists(wav_path)) throw InputError("no such file: " + wav_path);
  LoadedCheckpoint ckpt = load_checkpoint_checked(ckpt_path, cfg.train_hash());
  if (ckpt.model.fefa_layers().empty())
    throw InputError("checkpoint " + ckpt_path + " has no attention placements");
  const Waveform wave = read_wav(wav_path);
  const AttentionHeatmap hm = attention_heatmap(ckpt.model, wave, cfg.dsp);

  write_text_file((out / "attention.csv").string(), attention_csv(hm));
  write_pgm((out / "enhanced.pgm").string(), hm.enhanced);
  for (std::size_t i = 0; i < hm.placement_names.size(); ++i) {
    // Attention strip: each bin's weight repeated over a fixed width.
    const Vec& p = hm.placement_p[i];
    Matrix strip(p.size(), 16);
    for (std::size_t r = 0; r < p.size(); ++r)
      for (std::size_t c = 0; c < 16; ++c) strip.at(r, c) = p[r];
    std::string name = hm.placement_names[i];
    for (char& ch : name)
      if (ch == '.') ch = '_';
    write_pgm((out / ("attention_" + name + ".pgm")).string(), strip);
  }
  std::cout << "wrote attention maps for " << hm.placement_names.size()
            << " placement(s)\n";
  return 0;
}

int cmd_grad_check(std::uint64_t seed, std::size_t instances) {
  const auto reports = run_gradient_suite(seed, instances);
  bool all_pass = true;
  for (const auto& r : reports) {
    std::printf("%-30s max_rel_err %.3e (tol %.0e, %zu instances)  %s\n",
                r.name.c_str(), r.max_rel_err, r.tolerance, r.instances,
                r.pass() ? "ok" : "FAIL");
    all_pass = all_pass && r.pass();
  }
  return all_pass ? 0 : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frequency-bin attention pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "run configuration file");
  app.add_option("--out", g.out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", g.seed_override, "override the config seed");

  std::string wav_path, ckpt_path;
  std::vector<std::string> baseline_paths, fefa_paths;
  std::uint64_t gc_seed = 20240901;
  std::size_t gc_instances = 10;

  auto* featurize = app.add_subcommand("featurize", "WAV to spectrogram CSV/PGM");
  featurize->add_option("wav", wav_path, "input mono 16-bit PCM WAV")->required();

  app.add_subcommand("gen-corpus", "write the synthetic corpus as WAV files");
  app.add_subcommand("train", "train a model on the synthetic corpus");

  auto* eval_cmd = app.add_subcommand("eval", "accuracy and EER of a checkpoint");
  eval_cmd->add_option("checkpoint", ckpt_path, "trained checkpoint")->required();

  auto* noise = app.add_subcommand("noise-test", "noise robustness sweep");
  noise->add_option("--baseline", baseline_paths, "baseline checkpoint(s), one per seed")
      ->required();
  noise->add_option("--fefa", fefa_paths, "attention checkpoint(s), one per seed")
      ->required();

  auto* attn = app.add_subcommand("attn-map", "export attention weights and heatmaps");
  attn->add_option("checkpoint", ckpt_path, "trained checkpoint")->required();
  attn->add_option("wav", wav_path, "input WAV")->required();

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
  gc->add_option("--gc-seed", gc_seed, "suite seed");
  gc->add_option("--instances", gc_instances, "random instances per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }
  g.has_seed_override = seed_opt->count() > 0;

  try {
    if (featurize->parsed()) return cmd_featurize(g, wav_path);
    if (app.got_subcommand("gen-corpus")) return cmd_gen_corpus(g);
    if (app.got_subcommand("train")) return cmd_train(g);
    if (eval_cmd->parsed()) return cmd_eval(g, ckpt_path);
    if (noise->parsed()) return cmd_noise_test(g, baseline_paths, fefa_paths);
    if (attn->parsed()) return cmd_attn_map(g, ckpt_path, wav_path);
    if (gc->parsed()) return cmd_grad_check(gc_seed, gc_instances);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
  return kExitConfigError;
}
