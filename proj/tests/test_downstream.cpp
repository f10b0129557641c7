#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "csmae/downstream.hpp"
#include "csmae/errors.hpp"
#include "csmae/ops.hpp"
#include "fixtures.hpp"
#include "json.hpp"

using namespace csmae;

namespace {

SplitSpec contiguous_split(std::size_t train, std::size_t val, std::size_t test) {
  SplitSpec s;
  for (std::size_t i = 0; i < train + val + test; ++i) {
    (i < train ? s.train : i < train + val ? s.val : s.test).push_back(i);
  }
  return s;
}

}  // namespace

TEST_CASE("metrics on hand-built confusion matrices") {
  SUBCASE("perfect") {
    const std::vector<std::size_t> y{0, 1, 2, 2};
    const MetricsReport m = compute_metrics(y, y, 3);
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.jaccard == 1.0);
  }
  SUBCASE("mixed two-class") {
    const std::vector<std::size_t> labels{0, 0, 1, 1}, preds{0, 1, 1, 1};
    const MetricsReport m = compute_metrics(preds, labels, 2);
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.precision == doctest::Approx(5.0 / 6));
    CHECK(m.recall == doctest::Approx(0.75));
    CHECK(m.jaccard == doctest::Approx(7.0 / 12));
    CHECK(m.confusion[0][1] == 1);
    CHECK(m.confusion[1][1] == 2);
  }
  SUBCASE("single predicted class") {
    const std::vector<std::size_t> labels{0, 0, 1, 1}, preds{0, 0, 0, 0};
    const MetricsReport m = compute_metrics(preds, labels, 2);
    CHECK(m.accuracy == doctest::Approx(0.5));
    CHECK(m.precision == doctest::Approx(0.5));
    CHECK(m.recall == doctest::Approx(0.5));
    CHECK(m.jaccard == doctest::Approx(0.25));
  }
  SUBCASE("contracts") {
    const std::vector<std::size_t> a{0, 1}, b{0};
    CHECK_THROWS_AS(compute_metrics(a, b, 2), DimensionError);
    CHECK_THROWS_AS(compute_metrics(std::vector<std::size_t>{}, std::vector<std::size_t>{}, 2), ContractError);
    const std::vector<std::size_t> c{0, 5};
    CHECK_THROWS_AS(compute_metrics(c, a, 2), IndexError);
  }
}

TEST_CASE("metrics report json carries the four metrics") {
  const std::vector<std::size_t> y{0, 1};
  const auto j = nlohmann::json::parse(compute_metrics(y, y, 2).to_json());
  for (const char* key : {"accuracy", "precision", "recall", "jaccard"}) CHECK(j.contains(key));
}

TEST_CASE("split spec") {
  SplitSpec s = contiguous_split(4, 2, 2);
  s.label_fraction = 0.5;
  CHECK_NOTHROW(s.validate());
  const SplitSpec back = SplitSpec::from_json(s.to_json());
  CHECK(back.train == s.train);
  CHECK(back.test == s.test);
  CHECK(back.label_fraction == 0.5);
  s.test.push_back(1);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(SplitSpec::from_json(R"({"train":[0],"val":[],"test":[1],"extra":1})"), ConfigError);
}

TEST_CASE("training ids honour the label fraction") {
  const SplitSpec split = contiguous_split(120, 4, 4);
  std::vector<PreparedClip> clips(128);
  FinetuneData data{clips, std::vector<bool>(128, false), 12};
  FinetuneConfig cfg;
  cfg.label_fraction = 0.1;
  const auto ids = training_clip_ids(split, data, cfg);
  CHECK(ids.size() == 12);
  CHECK(ids.front() == 0);
  cfg.label_fraction = 0;
  data.labeled[3] = data.labeled[50] = true;
  data.labeled[125] = true;  // a test clip, never used for training
  CHECK(training_clip_ids(split, data, cfg) == std::vector<std::size_t>{3, 50});
}

TEST_CASE("classifier head contracts") {
  test::Tiny tiny;
  Rng rng(1);
  ParamSet params;
  const ModelParams model = make_model(tiny.tokenizer, tiny.backbone, rng);
  ClassifierHead head = make_head(params, 16, 5, rng);
  const auto clips = tiny.clips(1);
  const Tensor logits = classify_clip(clips[0].patches, model, head);
  CHECK(logits.shape() == Shape{1, 5});

  std::fill(head.linear.weight.data().begin(), head.linear.weight.data().end(), Real(0));
  std::fill(head.linear.bias.data().begin(), head.linear.bias.data().end(), Real(0));
  const Tensor p = ops::softmax(classify_clip(clips[0].patches, model, head), 1);
  for (Real v : p.data()) CHECK(v == doctest::Approx(0.2));
}

TEST_CASE("mean pooling ignores token order") {
  test::Tiny tiny;
  Rng rng(2);
  const ModelParams model = make_model(tiny.tokenizer, tiny.backbone, rng);
  const auto clips = tiny.clips(1);
  const Tensor tokens = embed_patches(clips[0].patches, tiny.tokenizer, model.tokenizer);
  std::vector<std::size_t> perm(tokens.rows());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 7 + 3) % perm.size();
  const Tensor a = ops::mean(encode_tokens(tokens, model), 0);
  const Tensor b = ops::mean(encode_tokens(ops::gather_rows(tokens, perm), model), 0);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-5));
  const Tensor pooled = pooled_features(clips[0].patches, model);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == pooled.data()[i]);
}

TEST_CASE("standardization statistics") {
  ClassifierHead head;
  const std::vector<Tensor> rows{Tensor({1, 2}, {1, 10}), Tensor({1, 2}, {3, 10})};
  fit_standardization(head, rows, 0);
  CHECK(head.center.at(0, 0) == doctest::Approx(2));
  CHECK(head.center.at(0, 1) == doctest::Approx(10));
  CHECK(head.inv_scale.at(0, 0) == doctest::Approx(1));
}

TEST_CASE("separable toy corpus is learned perfectly") {
  test::Tiny tiny;
  tiny.synth.color_coded_phases = true;
  tiny.synth.num_phases = 4;
  // With a jittered background the mean-pooled color no longer separates the classes.
  tiny.synth.background_jitter = 0;
  const auto clips = tiny.clips(40, 5);
  const SplitSpec split = contiguous_split(24, 8, 8);
  FinetuneData data{clips, std::vector<bool>(40, true), 4};
  FinetuneConfig cfg;
  cfg.epochs = 100;
  cfg.encoder_lr_scale = 1.0;
  cfg.patience = 100;
  const FinetuneResult r = finetune_run(data, split, nullptr, tiny.tokenizer, tiny.backbone, cfg);
  CHECK(r.test.accuracy == 1.0);
  CHECK(r.train_clips == 24);
}

TEST_CASE("fine-tuning reads test clips only for the final report") {
  test::Tiny tiny;
  const auto clips = tiny.clips(16);
  const SplitSpec split = contiguous_split(8, 4, 4);
  std::vector<bool> labeled(16, false);
  labeled[0] = labeled[1] = labeled[2] = true;
  FinetuneData data{clips, labeled, 12};
  FinetuneConfig cfg;
  cfg.epochs = 3;
  std::set<std::size_t> trained, tested;
  bool test_before_end = false;
  const FinetuneResult r =
      finetune_run(data, split, nullptr, tiny.tokenizer, tiny.backbone, cfg, [&](std::size_t id, AccessPurpose p) {
        if (p == AccessPurpose::train) trained.insert(id);
        if (p == AccessPurpose::test) tested.insert(id);
        if (p != AccessPurpose::test && !tested.empty()) test_before_end = true;
      });
  CHECK(trained == std::set<std::size_t>{0, 1, 2});
  CHECK(tested == std::set<std::size_t>{12, 13, 14, 15});
  CHECK_FALSE(test_before_end);
  CHECK(r.train_clips == 3);

  std::vector<bool> none(16, false);
  FinetuneData empty{clips, none, 12};
  CHECK_THROWS_AS(finetune_run(empty, split, nullptr, tiny.tokenizer, tiny.backbone, cfg), ConfigError);
}

TEST_CASE("pretrained and scratch runs differ only in initialization") {
  test::Tiny tiny;
  const auto clips = tiny.clips(12);
  const SplitSpec split = contiguous_split(6, 3, 3);
  FinetuneData data{clips, std::vector<bool>(12, true), 12};
  FinetuneConfig cfg;
  cfg.epochs = 2;
  Pretrainer tr(tiny.tokenizer, tiny.backbone, tiny.selection, tiny.pretrain);
  const Checkpoint ck = tr.to_checkpoint();
  const FinetuneResult a = finetune_run(data, split, &ck, tiny.tokenizer, tiny.backbone, cfg);
  const FinetuneResult b = finetune_run(data, split, &ck, tiny.tokenizer, tiny.backbone, cfg);
  const FinetuneResult s = finetune_run(data, split, nullptr, tiny.tokenizer, tiny.backbone, cfg);
  CHECK(a.test.confusion == b.test.confusion);
  const auto w1 = a.params.find("tok.proj.weight")->data();
  const auto w2 = s.params.find("tok.proj.weight")->data();
  CHECK_FALSE(std::equal(w1.begin(), w1.end(), w2.begin()));

  test::Tiny other;
  other.backbone.encoder_depth = 2;
  CHECK_THROWS_AS(finetune_run(data, split, &ck, other.tokenizer, other.backbone, cfg), ConfigError);
}

TEST_CASE("classifier checkpoint round trip predicts identically") {
  test::Tiny tiny;
  const auto clips = tiny.clips(12);
  const SplitSpec split = contiguous_split(6, 3, 3);
  FinetuneData data{clips, std::vector<bool>(12, true), 12};
  FinetuneConfig cfg;
  cfg.epochs = 2;
  const FinetuneResult r = finetune_run(data, split, nullptr, tiny.tokenizer, tiny.backbone, cfg);
  const Classifier c = load_classifier(classifier_checkpoint(r, tiny.tokenizer, tiny.backbone, 12));
  const Tensor x = classify_clip(clips[10].patches, c.model, c.head);
  const Classifier again = load_classifier(classifier_checkpoint(r, tiny.tokenizer, tiny.backbone, 12));
  const Tensor y = classify_clip(clips[10].patches, again.model, again.head);
  CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  const std::vector<std::size_t> ids{9, 10, 11};
  const auto preds = predict(data, ids, c.model, c.head, {}, AccessPurpose::test);
  std::vector<std::size_t> labels{clips[9].phase, clips[10].phase, clips[11].phase};
  CHECK(compute_metrics(preds, labels, 12).confusion == r.test.confusion);
}

TEST_CASE("finetune config validation") {
  FinetuneConfig cfg;
  cfg.encoder_lr_scale = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.label_fraction = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
