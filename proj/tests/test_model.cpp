#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fefa/gradcheck.hpp"
#include "fefa/model.hpp"
#include "fefa/train.hpp"

using namespace fefa;
using Catch::Approx;

namespace {

ModelSpec small_spec(Backbone b, FefaMode mode, std::uint64_t seed = 3) {
  ModelSpec spec;
  spec.backbone = b;
  spec.fefa = mode;
  spec.n_classes = 4;
  spec.embedding_dim = 8;
  spec.input_bins = 16;
  spec.seed = seed;
  return spec;
}

Tensor4 random_input(Rng& rng, std::size_t n, std::size_t bins, std::size_t frames) {
  Tensor4 x(n, 1, bins, frames);
  for (double& v : x.data) v = rng.uniform(0.0, 4.0);
  return x;
}

}  // namespace

TEST_CASE("parameter counts are frozen per backbone", "[model]") {
  ModelSpec spec;  // 257 bins, 8 classes, embedding 32
  spec.backbone = Backbone::vgg_m;
  REQUIRE(build_model(spec).param_count() == 7208u);
  spec.backbone = Backbone::resnet_m;
  REQUIRE(build_model(spec).param_count() == 20632u);
  spec.backbone = Backbone::seresnet_m;
  REQUIRE(build_model(spec).param_count() == 21374u);

  SECTION("single FEFA adds exactly the 257-bin kernel") {
    spec.backbone = Backbone::vgg_m;
    spec.fefa = FefaMode::single;
    REQUIRE(build_model(spec).param_count() == 7208u + 66306u);
  }
}

TEST_CASE("attention placements", "[model]") {
  ModelSpec spec;  // input_bins 257

  SECTION("none leaves the model without placements") {
    REQUIRE(fefa_placement_bins(spec).empty());
    REQUIRE(build_model(spec).fefa_layers().empty());
  }
  SECTION("single puts one placement on the input") {
    spec.fefa = FefaMode::single;
    REQUIRE(fefa_placement_bins(spec) == std::vector<std::size_t>{257});
    Model m = build_model(spec);
    REQUIRE(m.fefa_layers().size() == 1);
    REQUIRE(m.fefa_layers()[0]->params().bins_out() == 257);
  }
  SECTION("vgg multi follows every dimension change") {
    spec.fefa = FefaMode::multi;
    REQUIRE(fefa_placement_bins(spec) == std::vector<std::size_t>{257, 128, 64, 32});
    REQUIRE(build_model(spec).fefa_layers().size() == 4);
  }
  SECTION("resnet multi follows the two stride-2 stages") {
    spec.backbone = Backbone::resnet_m;
    spec.fefa = FefaMode::multi;
    REQUIRE(fefa_placement_bins(spec) == std::vector<std::size_t>{257, 129, 65});
  }
}

TEST_CASE("builds are deterministic in the seed", "[model]") {
  const ModelSpec spec = small_spec(Backbone::resnet_m, FefaMode::none, 11);
  Model a = build_model(spec);
  Model b = build_model(spec);
  auto ra = a.params(), rb = b.params();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    REQUIRE(ra[i].name == rb[i].name);
    for (std::size_t j = 0; j < ra[i].size; ++j)
      REQUIRE(ra[i].data[j] == rb[i].data[j]);
  }

  ModelSpec other = spec;
  other.seed = 12;
  Model c = build_model(other);
  auto rc = c.params();
  bool any_diff = false;
  for (std::size_t j = 0; j < ra[0].size; ++j)
    any_diff = any_diff || ra[0].data[j] != rc[0].data[j];
  REQUIRE(any_diff);
}

TEST_CASE("zero-initialized attention placements are exact identities", "[model]") {
  Rng rng(21);
  for (Backbone b : {Backbone::vgg_m, Backbone::resnet_m, Backbone::seresnet_m}) {
    for (FefaMode mode : {FefaMode::single, FefaMode::multi}) {
      Model plain = build_model(small_spec(b, FefaMode::none));
      Model attn = build_model(small_spec(b, mode));
      for (int trial = 0; trial < 5; ++trial) {
        const Tensor4 x = random_input(rng, 2, 16, 12);
        const Matrix la = plain.forward(x, false);
        const Matrix lb = attn.forward(x, false);
        for (std::size_t i = 0; i < la.data.size(); ++i)
          REQUIRE(lb.data[i] ==
                  Approx(la.data[i]).margin(1e-12 * std::max(1.0, std::abs(la.data[i]))));
      }
    }
  }
}

TEST_CASE("full-model gradients pass finite differences", "[model][grad]") {
  Rng rng(31);
  for (Backbone b : {Backbone::vgg_m, Backbone::resnet_m, Backbone::seresnet_m}) {
    REQUIRE(gradcheck::check_model(rng, b, FefaMode::none) <= 1e-4);
    REQUIRE(gradcheck::check_model(rng, b, FefaMode::single) <= 1e-4);
    REQUIRE(gradcheck::check_model(rng, b, FefaMode::multi) <= 1e-4);
  }
}

TEST_CASE("one training step decreases the batch loss at small lr", "[model]") {
  Rng rng(41);
  Model model = build_model(small_spec(Backbone::vgg_m, FefaMode::single));
  const Tensor4 batch = random_input(rng, 4, 16, 12);
  const std::vector<int> labels{0, 1, 2, 3};

  auto refs = model.params();
  AdamState adam;
  std::vector<std::size_t> sizes;
  for (const auto& r : refs) sizes.push_back(r.size);
  adam.init(sizes);

  Matrix grad;
  const double loss0 = softmax_cross_entropy(model.forward(batch, true), labels, grad);
  model.zero_grads();
  model.backward(grad);
  for (std::size_t slot = 0; slot < refs.size(); ++slot)
    adam_update_slot(slot, refs[slot].data, refs[slot].grad, refs[slot].size, adam, 1e-4);
  ++adam.step;
  Matrix grad1;
  const double loss1 = softmax_cross_entropy(model.forward(batch, false), labels, grad1);
  REQUIRE(loss1 < loss0);
}

TEST_CASE("training is deterministic given seeds", "[model]") {
  SyntheticCorpusSpec cs;
  cs.n_speakers = 2;
  cs.utterances_per_speaker = 10;
  cs.duration_s = 0.2;
  cs.sample_rate_hz = 2000;
  cs.f0_min_hz = 100.0;
  cs.f0_max_hz = 300.0;
  cs.harmonics_per_speaker = 2;
  const Corpus corpus = generate_corpus(cs);

  SpectrogramConfig dsp;
  dsp.fft_size = 64;
  const Dataset data = featurize_corpus(corpus, dsp);

  ModelSpec ms = small_spec(Backbone::vgg_m, FefaMode::single, 5);
  ms.n_classes = 2;
  ms.input_bins = 33;
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.seed = 5;
  tc.sched.step_size = 8;

  const TrainResult a = train(ms, data, tc);
  const TrainResult b = train(ms, data, tc);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    REQUIRE(a.log[i].train_loss == b.log[i].train_loss);
    REQUIRE(a.log[i].test_acc_pct == b.log[i].test_acc_pct);
  }

  SECTION("zero epochs keeps the initialization") {
    TrainConfig none = tc;
    none.epochs = 0;
    TrainResult r = train(ms, data, none);
    Model fresh = build_model(ms);
    auto ra = r.model.params(), rf = fresh.params();
    for (std::size_t i = 0; i < ra.size(); ++i)
      for (std::size_t j = 0; j < ra[i].size; ++j)
        REQUIRE(ra[i].data[j] == rf[i].data[j]);
  }
}
