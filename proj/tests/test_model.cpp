#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csmae/backbone.hpp"
#include "csmae/errors.hpp"
#include "csmae/losses.hpp"
#include "csmae/ops.hpp"
#include "csmae/training.hpp"
#include "fixtures.hpp"

using namespace csmae;

namespace {

Tensor random_tokens(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<Real> v(n * d);
  for (auto& x : v) x = static_cast<Real>(rng.normal());
  return Tensor({n, d}, v);
}

bool all_zero(const Tensor& t) {
  if (!t.has_grad()) return true;
  const auto g = t.grad();
  return std::all_of(g.begin(), g.end(), [](Real x) { return x == 0; });
}

}  // namespace

TEST_CASE("model parameter names and shapes") {
  test::Tiny tiny;
  Rng rng(1);
  const ModelParams m = make_model(tiny.tokenizer, tiny.backbone, rng);
  CHECK(m.params.find("tok.proj.weight") != nullptr);
  CHECK(m.params.find("dec.mask_token") != nullptr);
  for (const auto& p : m.params) {
    const bool prefixed = p.name.rfind("tok.", 0) == 0 || p.name.rfind("enc.", 0) == 0 || p.name.rfind("dec.", 0) == 0;
    CHECK(prefixed);
  }
  CHECK(m.decoder.mask_token.shape() == Shape{1, 8});
  BackboneConfig bad = tiny.backbone;
  bad.encoder_dim = 32;
  CHECK_THROWS_AS(make_model(tiny.tokenizer, bad, rng), ConfigError);
  bad = tiny.backbone;
  bad.decoder_heads = 3;
  CHECK_THROWS_AS(make_model(tiny.tokenizer, bad, rng), ConfigError);
}

TEST_CASE("depth-0 encoder is the final layer norm") {
  test::Tiny tiny;
  tiny.backbone.encoder_depth = 0;
  Rng rng(2);
  const ModelParams m = make_model(tiny.tokenizer, tiny.backbone, rng);
  const Tensor x = random_tokens(5, 16, rng);
  const Tensor y = encode_tokens(x, m);
  const Tensor ref = ops::layer_norm(x, Tensor::full({16}, 1), Tensor::zeros({16}));
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(ref.data()[i]));
}

TEST_CASE("encoder output shape follows the visible set") {
  test::Tiny tiny;
  Rng rng(3);
  const ModelParams m = make_model(tiny.tokenizer, tiny.backbone, rng);
  const Tensor tokens = random_tokens(8, 16, rng);
  for (std::size_t keep = 1; keep < 8; ++keep) {
    std::vector<std::size_t> ids(keep);
    std::iota(ids.begin(), ids.end(), 8 - keep);
    const LatentBatch lb = encode(tokens, MaskSpec::from_visible(8, ids, 0.5), m);
    CHECK(lb.features.shape() == Shape{keep, 16});
  }
}

TEST_CASE("encoder is permutation equivariant") {
  test::Tiny tiny;
  tiny.backbone.encoder_depth = 2;
  Rng rng(4);
  const ModelParams m = make_model(tiny.tokenizer, tiny.backbone, rng);
  const Tensor x = random_tokens(7, 16, rng);
  const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  const Tensor a = encode_tokens(ops::gather_rows(x, perm), m);
  const Tensor b = ops::gather_rows(encode_tokens(x, m), perm);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-5));
}

TEST_CASE("decoder predicts every masked slot") {
  test::Tiny tiny;
  Rng rng(5);
  const ModelParams m = make_model(tiny.tokenizer, tiny.backbone, rng);
  const Tensor tokens = random_tokens(8, 16, rng);
  const MaskSpec spec = MaskSpec::from_visible(8, {2, 5}, 0.75);
  const PatchPredictions p = decode(encode(tokens, spec, m), m);
  CHECK(p.values.shape() == Shape{6, tiny.tokenizer.patch_length()});
  CHECK(p.ids == spec.masked);
  // Same mask token, different positions: rows must not coincide.
  for (std::size_t i = 0; i + 1 < p.values.rows(); ++i) {
    double diff = 0;
    for (std::size_t j = 0; j < p.values.cols(); ++j) diff += std::abs(p.values.at(i, j) - p.values.at(i + 1, j));
    CHECK(diff > 1e-4);
  }
}

TEST_CASE("mask token receives gradient") {
  test::Tiny tiny;
  Rng rng(6);
  const ModelParams m = make_model(tiny.tokenizer, tiny.backbone, rng);
  const Tensor tokens = random_tokens(8, 16, rng);
  const MaskSpec spec = MaskSpec::from_visible(8, {0, 7}, 0.75);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(ops::mean(decode(encode(tokens, spec, m), m).values));
  }
  CHECK_FALSE(all_zero(m.decoder.mask_token));
}

TEST_CASE("decoder positional table interpolates the encoder table") {
  const Tensor enc = positional_encoding(10, 16);
  const Tensor same = decoder_positional_encoding(10, 16, 16);
  CHECK(std::equal(enc.data().begin(), enc.data().end(), same.data().begin()));
  const Tensor dec = decoder_positional_encoding(10, 16, 6);
  CHECK(dec.shape() == Shape{10, 6});
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(dec.at(i, 0) == enc.at(i, 0));
    CHECK(dec.at(i, 5) == enc.at(i, 15));
  }
}

TEST_CASE("reconstruction loss hand cases") {
  const Tensor zeros = Tensor::zeros({2, 2});
  const ReconstructionLoss same = reconstruction_loss(zeros, zeros, LossKind::mse);
  CHECK(same.total.item() == 0);
  const ReconstructionLoss r = reconstruction_loss(Tensor({2, 2}, {1, 1, 0, 0}), zeros, LossKind::mse);
  CHECK(r.per_token.at(0, 0) == doctest::Approx(1));
  CHECK(r.per_token.at(1, 0) == doctest::Approx(0));
  CHECK(r.total.item() == doctest::Approx(0.5));
  const ReconstructionLoss l1 = reconstruction_loss(Tensor::full({3, 4}, 0.5), Tensor::zeros({3, 4}), LossKind::l1);
  CHECK(l1.total.item() == doctest::Approx(0.5));
  CHECK_THROWS_AS(reconstruction_loss(zeros, Tensor::zeros({2, 3}), LossKind::mse), ContractError);
  CHECK(parse_loss_kind("l1") == LossKind::l1);
  CHECK_THROWS_AS(parse_loss_kind("huber"), ConfigError);
}

TEST_CASE("selection loss hand example and contracts") {
  const MaskSpec spec = MaskSpec::from_visible(2, {0}, 0.5);
  Tensor logits = Tensor::zeros({2, 1}, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = selection_loss(ops::log_softmax(logits, 0), Tensor({1, 1}, {2}), spec);
    tape.backward(loss);
  }
  CHECK(loss.item() == doctest::Approx(-std::log(0.5) * 2).epsilon(1e-6));
  CHECK(logits.grad()[1] < 0);
  CHECK(logits.grad()[0] + logits.grad()[1] == doctest::Approx(0).epsilon(1e-6));

  Tensor l2 = Tensor::zeros({2, 1}, true);
  Tape t2;
  {
    Tape::Scope scope(t2);
    const Tensor zero = selection_loss(ops::log_softmax(l2, 0), Tensor::zeros({1, 1}), spec);
    CHECK(zero.item() == 0);
    t2.backward(zero);
  }
  for (Real g : l2.grad()) CHECK(g == 0);

  CHECK_THROWS_AS(selection_loss(Tensor::zeros({2, 1}), Tensor::zeros({1, 1}, true), spec), ContractError);
  CHECK_THROWS_AS(selection_loss(Tensor::zeros({3, 1}), Tensor::zeros({1, 1}), spec), ContractError);
  CHECK_THROWS_AS(selection_loss(Tensor::zeros({2, 1}), Tensor::zeros({2, 1}), spec), ContractError);
}

TEST_CASE("zero selection weight leaves theta without gradient") {
  test::Tiny tiny;
  tiny.pretrain.selection_weight = 0;
  Pretrainer tr(tiny.tokenizer, tiny.backbone, tiny.selection, tiny.pretrain);
  const auto clips = tiny.clips(2);
  const std::vector<const PreparedClip*> batch{&clips[0], &clips[1]};
  tr.train_step(batch, 1e-3);
  for (const auto& p : tr.selection_params()) CHECK(all_zero(p.tensor));
}

TEST_CASE("baseline strategies never touch theta") {
  test::Tiny tiny;
  tiny.pretrain.strategy = MaskStrategy::random;
  Pretrainer tr(tiny.tokenizer, tiny.backbone, tiny.selection, tiny.pretrain);
  std::vector<std::vector<Real>> before;
  for (const auto& p : tr.selection_params()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  const auto clips = tiny.clips(2);
  const std::vector<const PreparedClip*> batch{&clips[0], &clips[1]};
  for (int i = 0; i < 5; ++i) {
    const LossReport r = tr.train_step(batch, 1e-3);
    CHECK(r.selection == 0);
    CHECK_FALSE(r.region_prob_mass.has_value());
  }
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto now = tr.selection_params()[i].tensor.data();
    CHECK(std::equal(now.begin(), now.end(), before[i].begin()));
  }
}

TEST_CASE("finite differences confirm the isolation of the two losses") {
  test::Tiny tiny;
  Pretrainer tr(tiny.tokenizer, tiny.backbone, tiny.selection, tiny.pretrain);
  const auto clips = tiny.clips(1);
  Rng rng(7);
  const MaskSpec spec = forward_clip(clips[0], tr.model(), &tr.selection(), tr.config(), rng).spec;
  auto losses = [&] {
    Rng r(7);
    const ClipForward f = forward_clip(clips[0], tr.model(), &tr.selection(), tr.config(), r, &spec);
    return std::pair<double, double>{f.reconstruction.total.item(), f.selection.item()};
  };
  const auto base = losses();
  bool select_moved = false;
  for (auto& p : tr.selection_params()) {
    auto v = p.tensor.data();
    const Real saved = v[0];
    v[0] = saved + Real(0.05);
    const auto moved = losses();
    v[0] = saved;
    CHECK(moved.first == base.first);
    select_moved = select_moved || moved.second != base.second;
  }
  CHECK(select_moved);
}

TEST_CASE("train step reports") {
  test::Tiny tiny;
  Pretrainer tr(tiny.tokenizer, tiny.backbone, tiny.selection, tiny.pretrain);
  const auto clips = tiny.clips(3);
  const std::vector<const PreparedClip*> batch{&clips[0], &clips[1], &clips[2]};
  const LossReport r = tr.train_step(batch, 1e-3);
  CHECK(r.step == 0);
  CHECK(tr.step() == 1);
  CHECK(r.reconstruction > 0);
  CHECK(r.selection > 0);
  REQUIRE(r.region_prob_mass.has_value());
  CHECK(*r.region_prob_mass > 0);
  CHECK(*r.region_prob_mass < 1);
  CHECK(r.per_token_errors.size() == 3);
  // 2x4x4 = 32 tokens at ratio 0.75 -> 24 masked.
  CHECK(r.per_token_errors[0].size() == 24);
  CHECK_THROWS_AS(tr.train_step(std::span<const PreparedClip* const>{}, 1e-3), ContractError);
}
