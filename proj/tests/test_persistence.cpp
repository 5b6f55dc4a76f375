#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fefa/checkpoint.hpp"
#include "fefa/config.hpp"

using namespace fefa;
using Catch::Approx;

namespace fs = std::filesystem;

TEST_CASE("config parsing", "[persistence]") {
  SECTION("empty text keeps every default") {
    const RunConfig cfg = parse_config_text("");
    REQUIRE(cfg.dsp.fft_size == 512);
    REQUIRE(cfg.dsp.bins() == 257);
    REQUIRE(cfg.corpus.n_speakers == 8);
    REQUIRE(cfg.backbone == Backbone::vgg_m);
    REQUIRE(cfg.snr_list == std::vector<double>{20.0, 50.0, 100.0});
    REQUIRE(cfg.noise_dists.size() == 2);
  }
  SECTION("keys, comments, and whitespace") {
    const RunConfig cfg = parse_config_text(
        "# spectral front end\n"
        "fft_size = 128\n"
        "window_ms = 20   # shorter window\n"
        "hop_ms=5\n"
        "sample_rate_hz = 4000\n"
        "backbone = seresnet_m\n"
        "fefa = multi\n"
        "scale_mode = literal\n"
        "snr_list = 10, 30\n"
        "noise_dists = uniform\n"
        "\n");
    REQUIRE(cfg.dsp.fft_size == 128);
    REQUIRE(cfg.dsp.window_ms == 20.0);
    REQUIRE(cfg.dsp.hop_ms == 5.0);
    REQUIRE(cfg.backbone == Backbone::seresnet_m);
    REQUIRE(cfg.fefa == FefaMode::multi);
    REQUIRE(cfg.scale_mode == ScaleMode::literal);
    REQUIRE(cfg.snr_list == std::vector<double>{10.0, 30.0});
    REQUIRE(cfg.noise_dists == std::vector<NoiseDist>{NoiseDist::uniform});
  }
  SECTION("unknown keys are rejected") {
    REQUIRE_THROWS_AS(parse_config_text("learning_rate = 0.1\n"), ConfigError);
  }
  SECTION("malformed values are rejected") {
    REQUIRE_THROWS_AS(parse_config_text("fft_size = twelve\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_config_text("fft_size\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_config_text("backbone = resnet50\n"), ConfigError);
  }
  SECTION("invariants are validated at load time") {
    REQUIRE_THROWS_AS(parse_config_text("fft_size = 100\n"), ConfigError);   // not 2^k
    REQUIRE_THROWS_AS(parse_config_text("hop_ms = 30\n"), ConfigError);      // > window
    REQUIRE_THROWS_AS(parse_config_text("n_speakers = 1\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_config_text("fefa_local_window = 4\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_config_text("f0_max_hz = 9000\n"), ConfigError);  // >= Nyquist
  }
  SECTION("the train hash tracks the data contract, not run seed or variant") {
    const RunConfig a = parse_config_text("");
    const RunConfig b = parse_config_text("seed = 99\nfefa = single\nepochs = 3\n");
    const RunConfig c = parse_config_text("fft_size = 128\nsample_rate_hz = 4000\nf0_max_hz = 900\n");
    const RunConfig d = parse_config_text("corpus_seed = 2\n");
    REQUIRE(a.train_hash() == b.train_hash());
    REQUIRE(a.train_hash() != c.train_hash());
    REQUIRE(a.train_hash() != d.train_hash());
  }
}

TEST_CASE("checkpoint round trip is bit-exact", "[persistence]") {
  const fs::path dir = fs::temp_directory_path() / "fefa_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.fefa").string();

  ModelSpec spec;
  spec.backbone = Backbone::seresnet_m;
  spec.fefa = FefaMode::multi;
  spec.n_classes = 4;
  spec.embedding_dim = 8;
  spec.input_bins = 32;
  spec.seed = 123;
  Model model = build_model(spec);

  save_checkpoint(path, model, 0xabcdefull, 7);
  LoadedCheckpoint loaded = load_checkpoint(path);

  REQUIRE(loaded.meta.config_hash == 0xabcdefull);
  REQUIRE(loaded.meta.epochs_trained == 7);
  REQUIRE(loaded.meta.spec.backbone == Backbone::seresnet_m);
  REQUIRE(loaded.meta.spec.fefa == FefaMode::multi);
  REQUIRE(loaded.meta.spec.seed == 123);

  auto ra = model.params();
  auto rb = loaded.model.params();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    REQUIRE(ra[i].name == rb[i].name);
    REQUIRE(ra[i].shape == rb[i].shape);
    for (std::size_t j = 0; j < ra[i].size; ++j)
      REQUIRE(ra[i].data[j] == rb[i].data[j]);
  }

  SECTION("re-saving the loaded model reproduces the file byte for byte") {
    const std::string path2 = (dir / "model2.fefa").string();
    save_checkpoint(path2, loaded.model, 0xabcdefull, 7);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)),
                         std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)),
                         std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);
  }
  SECTION("hash mismatch fails loudly") {
    REQUIRE_THROWS_AS(load_checkpoint_checked(path, 0x1234ull), ConfigError);
    REQUIRE_NOTHROW(load_checkpoint_checked(path, 0xabcdefull));
  }
  SECTION("truncated and corrupt files are rejected") {
    const std::string bad = (dir / "bad.fefa").string();
    std::ofstream(bad, std::ios::binary) << "FEFACKPTgarbage";
    REQUIRE_THROWS_AS(load_checkpoint(bad), InputError);
    REQUIRE_THROWS_AS(load_checkpoint((dir / "missing.fefa").string()), InputError);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loading restores identical behavior", "[persistence]") {
  const fs::path dir = fs::temp_directory_path() / "fefa_ckpt_behavior";
  fs::create_directories(dir);
  const std::string path = (dir / "model.fefa").string();

  ModelSpec spec;
  spec.fefa = FefaMode::single;
  spec.n_classes = 3;
  spec.embedding_dim = 6;
  spec.input_bins = 16;
  spec.seed = 9;
  Model model = build_model(spec);
  // Perturb so we are not comparing fresh builds.
  auto refs = model.params();
  Rng rng(77);
  for (auto& r : refs)
    for (std::size_t j = 0; j < r.size; ++j) r.data[j] += rng.uniform(-0.01, 0.01);

  save_checkpoint(path, model, 1, 0);
  LoadedCheckpoint loaded = load_checkpoint(path);

  Tensor4 x(2, 1, 16, 10);
  for (double& v : x.data) v = rng.uniform(0.0, 3.0);
  const Matrix la = model.forward(x, false);
  const Matrix lb = loaded.model.forward(x, false);
  REQUIRE(la.data == lb.data);
  fs::remove_all(dir);
}
