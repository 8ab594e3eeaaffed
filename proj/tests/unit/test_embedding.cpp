#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "abanet/embedding.hpp"
#include "abanet/errors.hpp"
#include "abanet/init.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace abanet;
using namespace abanet::testing;

TEST_CASE("vocabulary reserves unk and pad") {
  Vocabulary v;
  CHECK(v.size() == 2);
  CHECK(v.id("<unk>") == Vocabulary::kUnk);
  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.add("cat") == 2);
  CHECK(v.add("cat") == 2);
  CHECK(v.id("dog") == Vocabulary::kUnk);
  CHECK(v.encode({"cat", "dog"}) == std::vector<int>{2, 0});
  CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"a", "b"}), DataError);
  CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"<unk>", "<pad>", "x", "x"}), DataError);
}

TEST_CASE("embedding file loader fills known rows and zeros the rest") {
  const auto path = std::filesystem::temp_directory_path() / "abanet_embed_test.txt";
  {
    std::ofstream out(path);
    out << "cat 1 2 3\nzebra 9 9 9\n";
  }
  Vocabulary v;
  v.add("cat");
  v.add("dog");
  Tensor t = load_embedding_file(path, v, 3);
  CHECK(t.shape() == Shape{4, 3});
  CHECK(t(2, 0) == 1.0);
  CHECK(t(2, 2) == 3.0);
  for (std::size_t c = 0; c < 3; ++c) CHECK(t(3, c) == 0.0);

  {
    std::ofstream out(path);
    out << "cat 1 2 3\ndog 1 x 3\n";
  }
  try {
    load_embedding_file(path, v, 3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  {
    std::ofstream out(path);
    out << "cat 1 2\n";
  }
  CHECK_THROWS_AS(load_embedding_file(path, v, 3), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("embed_words returns table rows and respects the fixed flag") {
  Rng rng(1);
  ParamStore store;
  store.add("words", random_tensor({5, 300}, rng), false);
  const Tensor before = store.value("words");
  Tape tape;
  Var e = embed_words(tape, store, "words", {0, 0});
  CHECK(e.shape() == Shape{2, 300});
  for (std::size_t c = 0; c < 300; ++c) CHECK(e.value()(0, c) == e.value()(1, c));
  CHECK_FALSE(e.requires_grad());
  CHECK_THROWS_AS(embed_words(tape, store, "words", {5}), DataError);
  CHECK(bitwise_equal(before, store.value("words")));
}

namespace {

Tensor naive_char_cnn(const ParamStore& store, const std::vector<std::vector<int>>& ids, const CharCnnConfig& cfg) {
  const Tensor& table = store.value("c.table");
  const Tensor& w = store.value("c.filters");
  const Tensor& b = store.value("c.bias");
  Tensor out({ids.size(), cfg.filters});
  for (std::size_t word = 0; word < ids.size(); ++word) {
    for (std::size_t f = 0; f < cfg.filters; ++f) {
      double best = -INFINITY;
      for (std::size_t s = 0; s + cfg.kernel <= cfg.max_chars; ++s) {
        double acc = b[f];
        for (std::size_t k = 0; k < cfg.kernel; ++k) {
          const int id = ids[word][s + k];
          if (id == Vocabulary::kPad) continue;
          for (std::size_t e = 0; e < cfg.char_dim; ++e) {
            acc += table(static_cast<std::size_t>(id), e) * w[(k * cfg.char_dim + e) * cfg.filters + f];
          }
        }
        best = std::max(best, acc);
      }
      out(word, f) = std::max(0.0, best);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("char CNN matches a naive convolution and pooling loop") {
  CharCnnConfig cfg{5, 3, 7, 6};
  CharCnn cnn("c", 12, cfg);
  ParamStore store;
  Rng rng(2);
  cnn.init(store, rng);
  store.value("c.bias") = random_tensor({7}, rng);
  std::vector<std::vector<int>> ids = {{2, 3, 4, 5, 1, 1}, {11, 10, 9, 8, 7, 6}, {0, 1, 1, 1, 1, 1}};
  Tape tape;
  Var out = cnn.forward(tape, store, ids, 0.0, Context::eval());
  CHECK(out.shape() == Shape{3, 7});
  CHECK(max_abs_diff(out.value(), naive_char_cnn(store, ids, cfg)) < 1e-12);
}

TEST_CASE("char CNN edge cases") {
  ParamStore store;
  Rng rng(3);
  SUBCASE("all-pad word pools the bias") {
    CharCnn cnn("c", 6, CharCnnConfig{4, 3, 5, 5});
    cnn.init(store, rng);
    store.value("c.bias") = Tensor::vector({-1, 0.5, 2, 0, 3});
    Tape tape;
    Var out = cnn.forward(tape, store, {{1, 1, 1, 1, 1}}, 0.0, Context::eval());
    CHECK(bitwise_equal(out.value(), Tensor({1, 5}, {0, 0.5, 2, 0, 3})));
  }
  SUBCASE("anagrams agree at kernel width one") {
    CharCnn cnn("c", 26, CharCnnConfig{4, 1, 6, 5});
    cnn.init(store, rng);
    Vocabulary chars;
    for (char ch = 'a'; ch <= 'z'; ++ch) chars.add(std::string(1, ch));
    auto ids = char_ids_for({"stone", "notes"}, chars, 5);
    Tape tape;
    Var out = cnn.forward(tape, store, ids, 0.0, Context::eval());
    for (std::size_t f = 0; f < 6; ++f) CHECK(out.value()(0, f) == out.value()(1, f));
  }
  SUBCASE("max_chars shorter than the kernel is a configuration error") {
    CHECK_THROWS_AS(CharCnn("c", 6, CharCnnConfig{4, 5, 5, 4}), ConfigError);
  }
}

TEST_CASE("char ids pad and truncate") {
  Vocabulary chars;
  chars.add("a");
  chars.add("b");
  auto ids = char_ids_for({"ab", "abzab"}, chars, 4);
  CHECK(ids[0] == std::vector<int>{2, 3, 1, 1});
  CHECK(ids[1] == std::vector<int>{2, 3, 0, 2});
}

TEST_CASE("feature embedding width, zero tables and concat order") {
  FeatureConfig cfg;
  CHECK(cfg.width() == 28);
  FeatureEmbedding fe("f", cfg);
  ParamStore store;
  Rng rng(4);
  fe.init(store, rng);
  for (std::size_t n : {1u, 4u, 9u}) {
    Tape tape;
    std::vector<int> ids(n, 0);
    CHECK(fe.forward(tape, store, ids, ids, ids).shape() == Shape{n, 28});
  }

  for (const char* t : {"f.pos", "f.ner", "f.rule"}) store.value(t).fill(0.0);
  {
    Tape tape;
    Var out = fe.forward(tape, store, {3, 1}, {2, 2}, {0, 5});
    for (double v : out.value().data()) CHECK(v == 0.0);
  }

  store.value("f.pos")(3, 0) = 1.0;
  store.value("f.ner")(2, 1) = 2.0;
  store.value("f.rule")(5, 3) = 3.0;
  Tape tape;
  Var out = fe.forward(tape, store, {3}, {2}, {5});
  Tensor expect({1, 28});
  expect[0] = 1.0;
  expect[16 + 1] = 2.0;
  expect[24 + 3] = 3.0;
  CHECK(bitwise_equal(out.value(), expect));
  CHECK_THROWS_AS(fe.forward(tape, store, {64}, {0}, {0}), DataError);
  CHECK_THROWS_AS(fe.forward(tape, store, {0, 0}, {0}, {0}), DataError);
}

TEST_CASE("highway gate saturation") {
  Highway hw("h", 6);
  ParamStore store;
  Rng rng(5);
  hw.init(store, rng);
  Tensor x = random_tensor({4, 6}, rng);

  for (std::size_t l = 0; l < 2; ++l) store.value(hw.gate_bias_name(l)).fill(-30.0);
  Tape t1;
  CHECK(max_abs_diff(hw.forward(t1, store, t1.constant(x)).value(), x) < 1e-6);

  for (std::size_t l = 0; l < 2; ++l) store.value(hw.gate_bias_name(l)).fill(30.0);
  Tensor y = x;
  for (std::size_t l = 0; l < 2; ++l) {
    const std::string p = "h." + std::to_string(l);
    Tensor t = matmul(y, store.value(p + ".transform"));
    for (std::size_t r = 0; r < t.dim(0); ++r) {
      for (std::size_t c = 0; c < 6; ++c) t(r, c) = std::max(0.0, t(r, c) + store.value(p + ".transform_bias")[c]);
    }
    y = t;
  }
  Tape t2;
  CHECK(max_abs_diff(hw.forward(t2, store, t2.constant(x)).value(), y) < 1e-6);
}

TEST_CASE("highway gradient check at width 6") {
  Highway hw("h", 6);
  ParamStore store;
  Rng rng(6);
  hw.init(store, rng);
  for (std::size_t l = 0; l < 2; ++l) store.value("h." + std::to_string(l) + ".transform_bias") = random_tensor({6}, rng);
  store.add("x", random_tensor({3, 6}, rng));
  LossFn f = [&](Tape& tape, const Context&) { return contract(hw.forward(tape, store, tape.parameter(store, "x")), 9); };
  auto report = grad_check(f, store, Context::eval());
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("BiLSTM single step symmetry and shapes") {
  BiLstm lstm("l", 4, 3, 1, true);
  ParamStore store;
  Rng rng(7);
  lstm.init(store, rng);
  Tape t1;
  Var one = lstm.forward(t1, store, t1.constant(random_tensor({1, 4}, rng)));
  CHECK(one.shape() == Shape{1, 6});
  for (std::size_t c = 0; c < 3; ++c) CHECK(one.value()(0, c) == one.value()(0, c + 3));

  for (std::size_t n : {1u, 2u, 5u, 11u}) {
    Tape tape;
    CHECK(lstm.forward(tape, store, tape.constant(random_tensor({n, 4}, rng))).shape() == Shape{n, 6});
  }
  Tape t2;
  CHECK_THROWS_AS(lstm.forward(t2, store, t2.constant(Tensor({3, 5}))), DimensionError);
}

TEST_CASE("BiLSTM reversal oracle with shared directions") {
  BiLstm lstm("l", 4, 3, 1, true);
  ParamStore store;
  Rng rng(8);
  lstm.init(store, rng);
  const std::size_t n = 5, h = 3;
  Tensor x = random_tensor({n, 4}, rng);
  Tensor xr({n, 4});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < 4; ++c) xr(t, c) = x(n - 1 - t, c);
  }
  Tape tape;
  Tensor y = lstm.forward(tape, store, tape.constant(x)).value();
  Tensor yr = lstm.forward(tape, store, tape.constant(xr)).value();
  double worst = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < h; ++c) {
      worst = std::max(worst, std::abs(yr(t, c) - y(n - 1 - t, c + h)));
      worst = std::max(worst, std::abs(yr(t, c + h) - y(n - 1 - t, c)));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("BiLSTM gradient check at n=3, d=4, h=3") {
  BiLstm lstm("l", 4, 3);
  ParamStore store;
  Rng rng(9);
  lstm.init(store, rng);
  for (bool bwd : {false, true}) store.value(lstm.param_name(0, bwd, "bias")) = random_tensor({12}, rng, -0.5, 0.5);
  store.add("x", random_tensor({3, 4}, rng));
  LossFn f = [&](Tape& tape, const Context&) { return contract(lstm.forward(tape, store, tape.parameter(store, "x")), 3); };
  auto report = grad_check(f, store, Context::eval());
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("contextual mix") {
  Rng rng(10);
  std::vector<Tensor> layers = {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), random_tensor({4, 3}, rng)};
  const std::vector<int> ones(4, 1);

  SUBCASE("one-hot weights select a layer") {
    for (std::size_t j = 0; j < 3; ++j) {
      Tape tape;
      Tensor theta({3});
      theta[j] = 1.0;
      CHECK(bitwise_equal(contextual_mix(tape.constant(theta), layers, ones).value(), layers[j]));
    }
  }
  SUBCASE("opposite layers cancel") {
    Tensor neg = layers[0];
    for (double& v : neg.data()) v = -v;
    Tape tape;
    Var out = contextual_mix(tape.constant(Tensor::vector({0.5, 0.5})), {layers[0], neg}, ones);
    for (double v : out.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("linear in theta") {
    Tensor t1 = random_tensor({3}, rng), t2 = random_tensor({3}, rng), combo({3});
    const double a = 0.7, b = -1.3;
    for (std::size_t l = 0; l < 3; ++l) combo[l] = a * t1[l] + b * t2[l];
    Tape tape;
    Tensor m1 = contextual_mix(tape.constant(t1), layers, ones).value();
    Tensor m2 = contextual_mix(tape.constant(t2), layers, ones).value();
    Tensor mc = contextual_mix(tape.constant(combo), layers, ones).value();
    Tensor expect = m1;
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = a * m1[i] + b * m2[i];
    CHECK(max_abs_diff(mc, expect) < 1e-6);
  }
  SUBCASE("three sub-tokens are averaged before mixing") {
    Tensor h = Tensor::matrix({{1, 2}, {3, 6}, {5, 1}, {7, 7}});
    Tape tape;
    Var out = contextual_mix(tape.constant(Tensor::vector({2.0})), {h}, {3, 1});
    CHECK(out.value()(0, 0) == doctest::Approx(2.0 * 3.0));
    CHECK(out.value()(0, 1) == doctest::Approx(2.0 * 3.0));
    CHECK(out.value()(1, 0) == 14.0);
    CHECK(out.value()(1, 1) == 14.0);
    CHECK_THROWS_AS(contextual_mix(tape.constant(Tensor::vector({1.0})), {h}, {2, 1}), DataError);
  }
  SUBCASE("layer shapes must agree") {
    Tape tape;
    CHECK_THROWS_AS(contextual_mix(tape.constant(Tensor::vector({1, 1})), {layers[0], Tensor({4, 2})}, ones),
                    DimensionError);
  }
  SUBCASE("gradient flows into theta") {
    ParamStore store;
    store.add("theta", random_tensor({3}, rng));
    LossFn f = [&](Tape& tape, const Context&) {
      return contract(contextual_mix(tape.parameter(store, "theta"), layers, ones), 5);
    };
    CHECK(grad_check(f, store, Context::eval()).max_rel_error < 1e-6);
  }
}
