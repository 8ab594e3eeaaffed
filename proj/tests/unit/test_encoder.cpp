#include <cmath>
#include <random>

#include "abanet/encoder.hpp"
#include "abanet/errors.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace abanet;
using namespace abanet::testing;

namespace {

double norm(const Tensor& t, std::size_t offset, std::size_t len) {
  double s = 0.0;
  for (std::size_t i = 0; i < len; ++i) s += t[offset + i] * t[offset + i];
  return std::sqrt(s);
}

// Primary [1 x 2 x 2], two digit capsules of width 2, three iterations,
// evaluated in long double from the routing recurrence.
std::vector<long double> routing_by_hand(const Tensor& u, const Tensor& w, std::size_t iters) {
  const std::size_t P = 2, D = 2, q = 2, p = 2;
  long double uhat[2][2][2] = {};
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < D; ++j) {
      for (std::size_t a = 0; a < q; ++a) {
        for (std::size_t b = 0; b < p; ++b) uhat[i][j][a] += w[((i * D + j) * q + a) * p + b] * static_cast<long double>(u[i * p + b]);
      }
    }
  }
  long double logit[2][2] = {};
  long double v[2][2] = {};
  for (std::size_t it = 0; it < iters; ++it) {
    long double s[2][2] = {};
    for (std::size_t i = 0; i < P; ++i) {
      const long double z = std::exp(logit[i][0]) + std::exp(logit[i][1]);
      for (std::size_t j = 0; j < D; ++j) {
        const long double c = std::exp(logit[i][j]) / z;
        for (std::size_t a = 0; a < q; ++a) s[j][a] += c * uhat[i][j][a];
      }
    }
    for (std::size_t j = 0; j < D; ++j) {
      const long double n2 = s[j][0] * s[j][0] + s[j][1] * s[j][1];
      const long double f = n2 / (1.0L + n2) / std::sqrt(n2);
      for (std::size_t a = 0; a < q; ++a) v[j][a] = f * s[j][a];
    }
    for (std::size_t i = 0; i < P; ++i) {
      for (std::size_t j = 0; j < D; ++j) logit[i][j] += uhat[i][j][0] * v[j][0] + uhat[i][j][1] * v[j][1];
    }
  }
  return {v[0][0], v[0][1], v[1][0], v[1][1]};
}

EncoderBlockConfig tiny_block(std::size_t d, std::size_t blocks = 1) {
  EncoderBlockConfig b;
  b.num_conv_layers = 1;
  b.kernel = 3;
  b.filters = d;
  b.num_heads = 2;
  b.num_blocks = blocks;
  b.ffn_width = d;
  b.dropout = 0.0;
  return b;
}

CapsuleConfig tiny_caps() { return CapsuleConfig{2, 4, 2, 4, 3}; }

}  // namespace

TEST_CASE("positional encoding") {
  Tensor pe = positional_encoding(4, 4);
  for (std::size_t c = 0; c < 4; ++c) CHECK(pe(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
  CHECK(bitwise_equal(pe, positional_encoding(4, 4)));
  for (std::size_t pos = 0; pos < 4; ++pos) {
    for (std::size_t i = 0; i < 2; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * i / 4.0);
      CHECK(pe(pos, 2 * i) == doctest::Approx(std::sin(angle)).epsilon(1e-14));
      CHECK(pe(pos, 2 * i + 1) == doctest::Approx(std::cos(angle)).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(positional_encoding(3, 5), ConfigError);
}

TEST_CASE("squash closed forms and random properties") {
  Tape tape;
  Var zero = squash(tape.constant(Tensor({2, 3})));
  for (double v : zero.value().data()) CHECK(v == 0.0);

  Var unit = squash(tape.constant(Tensor::vector({0.6, 0.8})));
  CHECK(unit.value()[0] == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(unit.value()[1] == doctest::Approx(0.4).epsilon(1e-14));

  Rng rng(1);
  std::uniform_real_distribution<double> mag(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor v = random_tensor({5}, rng);
    const double s = std::pow(10.0, mag(rng));
    for (double& x : v.data()) x *= s;
    Tensor out = squash(tape.constant(v)).value();
    const double nv = norm(v, 0, 5), no = norm(out, 0, 5);
    CHECK(no < 1.0);
    CHECK(std::abs(no - nv * nv / (1.0 + nv * nv)) < 1e-6);
    double dot = 0.0;
    for (std::size_t i = 0; i < 5; ++i) dot += v[i] * out[i];
    CHECK(dot / (nv * no) >= 1.0 - 1e-6);
  }
}

TEST_CASE("dynamic routing couplings") {
  Rng rng(2);
  Tape tape;
  Var u = tape.constant(random_tensor({3, 16, 8}, rng));
  Var w = tape.constant(random_tensor({16, 16, 8, 8}, rng, -0.2, 0.2));

  std::vector<Tensor> one;
  Var v = dynamic_routing(u, w, 1, &one);
  CHECK(v.shape() == Shape{3, 16, 8});
  REQUIRE(one.size() == 1);
  for (double c : one[0].data()) CHECK(std::abs(c - 1.0 / 16.0) <= 1e-9);

  std::vector<Tensor> three;
  dynamic_routing(u, w, 3, &three);
  REQUIRE(three.size() == 3);
  for (const Tensor& c : three) {
    for (std::size_t row = 0; row < 3 * 16; ++row) {
      double s = 0.0;
      for (std::size_t j = 0; j < 16; ++j) s += c[row * 16 + j];
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
  CHECK_THROWS_AS(dynamic_routing(u, w, 0), ConfigError);
}

TEST_CASE("dynamic routing matches a hand simulation") {
  Tensor u = Tensor({1, 2, 2}, {0.5, -1.0, 1.5, 0.25});
  Tensor w = Tensor({2, 2, 2, 2}, {0.3, -0.7, 1.1, 0.4, -0.9, 0.2, 0.6, 0.8, 0.5, 0.5, -0.3, 1.2, 0.7, -1.4, 0.1, 0.9});
  Tape tape;
  Var v = dynamic_routing(tape.constant(u), tape.constant(w), 3);
  const auto expect = routing_by_hand(u, w, 3);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(static_cast<long double>(v.value()[i]) - expect[i]) < 1e-12L);
}

TEST_CASE("dynamic routing gradient includes the routing path") {
  Rng rng(3);
  auto report = check_op({random_tensor({2, 2, 4}, rng), random_tensor({2, 2, 4, 4}, rng)},
                         [](const std::vector<Var>& in) { return dynamic_routing(in[0], in[1], 3); });
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("conv-pri-dig shapes under the full configuration") {
  EncoderBlockConfig block;
  EncoderStack stack("enc", block, CapsuleConfig{});
  ParamStore store;
  Rng rng(4);
  stack.init(store, rng);
  for (std::size_t n : {1u, 7u, 40u}) {
    Tape tape;
    Var out = stack.conv_pri_dig(tape, store, 0, 0, tape.constant(random_tensor({n, 128}, rng)));
    CHECK(out.shape() == Shape{n, 128});
  }
  Tape tape;
  Var zero = stack.conv_pri_dig(tape, store, 0, 2, tape.constant(Tensor({6, 128})));
  for (double v : zero.value().data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(stack.conv_pri_dig(tape, store, 0, 0, tape.constant(Tensor({3, 64}))), DimensionError);
}

TEST_CASE("conv-pri-dig gradient check at reduced size") {
  EncoderStack stack("enc", tiny_block(8), tiny_caps());
  ParamStore store;
  Rng rng(5);
  stack.init(store, rng);
  store.add("x", random_tensor({4, 8}, rng));
  GradCheckOptions opts;
  opts.epsilon = 1e-5;
  opts.only = {"x", "enc.block0.conv0.depthwise", "enc.block0.conv0.pointwise", "enc.block0.conv0.routing"};
  LossFn f = [&](Tape& tape, const Context&) {
    return contract(stack.conv_pri_dig(tape, store, 0, 0, tape.parameter(store, "x")), 4);
  };
  CHECK(grad_check(f, store, Context::eval(), opts).max_rel_error < 1e-5);
}

TEST_CASE("self-attention hand cases") {
  SUBCASE("single token attends to itself") {
    EncoderStack stack("enc", tiny_block(8), tiny_caps());
    ParamStore store;
    Rng rng(6);
    stack.init(store, rng);
    Tensor x = random_tensor({1, 8}, rng);
    Tape tape;
    std::vector<Tensor> weights;
    Var out = stack.self_attention(tape, store, 0, tape.constant(x), {}, &weights);
    for (const Tensor& a : weights) CHECK(a[0] == 1.0);
    Tensor expect = matmul(matmul(x, store.value("enc.block0.attn.value")), store.value("enc.block0.attn.output"));
    CHECK(max_abs_diff(out.value(), expect) < 1e-12);
  }
  SUBCASE("one head, two tokens, width two") {
    EncoderBlockConfig b = tiny_block(2);
    b.num_heads = 1;
    EncoderStack stack("enc", b, CapsuleConfig{1, 2, 1, 2, 1});
    ParamStore store;
    Rng rng(7);
    stack.init(store, rng);
    store.value("enc.block0.attn.query") = Tensor::matrix({{1, 0}, {0, 2}});
    store.value("enc.block0.attn.key") = Tensor::matrix({{0, 1}, {1, 0}});
    store.value("enc.block0.attn.value") = Tensor::identity(2);
    store.value("enc.block0.attn.output") = Tensor::matrix({{1, 1}, {0, 1}});
    Tensor x = Tensor::matrix({{1, 2}, {3, -1}});
    Tape tape;
    std::vector<Tensor> weights;
    Var out = stack.self_attention(tape, store, 0, tape.constant(x), {}, &weights);
    // q = [[1,4],[3,-2]], k = [[2,1],[-1,3]], scores / sqrt(2).
    const double r = 1.0 / std::sqrt(2.0);
    const double s[2][2] = {{6 * r, 11 * r}, {4 * r, -9 * r}};
    Tensor expect({2, 2});
    for (std::size_t i = 0; i < 2; ++i) {
      const double a0 = 1.0 / (1.0 + std::exp(s[i][1] - s[i][0]));
      const double a1 = 1.0 - a0;
      CHECK(weights[0](i, 0) == doctest::Approx(a0).epsilon(1e-12));
      const double m0 = a0 * x(0, 0) + a1 * x(1, 0), m1 = a0 * x(0, 1) + a1 * x(1, 1);
      expect(i, 0) = m0;
      expect(i, 1) = m0 + m1;
    }
    CHECK(max_abs_diff(out.value(), expect) < 1e-12);
  }
  SUBCASE("rows sum to one and masked columns get zero weight") {
    EncoderStack stack("enc", tiny_block(8), tiny_caps());
    ParamStore store;
    Rng rng(8);
    stack.init(store, rng);
    Tape tape;
    std::vector<Tensor> weights;
    stack.self_attention(tape, store, 0, tape.constant(random_tensor({5, 8}, rng)), {1, 1, 0, 1, 0}, &weights);
    REQUIRE(weights.size() == 2);
    for (const Tensor& a : weights) {
      for (std::size_t i = 0; i < 5; ++i) {
        CHECK(a(i, 2) == 0.0);
        CHECK(a(i, 4) == 0.0);
        CHECK(std::abs(a(i, 0) + a(i, 1) + a(i, 3) - 1.0) < 1e-12);
      }
    }
  }
  SUBCASE("heads must divide the width") {
    EncoderBlockConfig b = tiny_block(8);
    b.num_heads = 3;
    CHECK_THROWS_AS(EncoderStack("enc", b, tiny_caps()), ConfigError);
  }
}

TEST_CASE("survival probability") {
  CHECK(survival_probability(10, 10, 0.9) == doctest::Approx(0.9));
  CHECK(survival_probability(1, 100000, 0.9) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(survival_probability(3, 6, 0.9) == doctest::Approx(0.95));
  CHECK_THROWS_AS(survival_probability(1, 2, 0.0), ConfigError);
  CHECK_THROWS_AS(survival_probability(1, 2, 1.5), ConfigError);
}

TEST_CASE("residual sublayer with a zero branch is the identity in both modes") {
  Rng rng(9);
  Tape tape;
  Var x = tape.constant(random_tensor({3, 4}, rng));
  Var g = tape.constant(Tensor({4}, 1.0)), b = tape.constant(Tensor({4}));
  SublayerFn zero = [&](Var z) { return scale(z, 0.0); };
  Rng train_rng(1);
  for (const Context& ctx : {Context::eval(), Context::train(train_rng)}) {
    for (std::size_t l = 1; l <= 4; ++l) {
      CHECK(bitwise_equal(residual_sublayer(x, zero, g, b, l, 4, 0.9, 0.0, ctx).value(), x.value()));
    }
  }
}

TEST_CASE("stochastic depth Monte Carlo survival rate") {
  const std::size_t total = 7, trials = 10000;
  const double pL = 0.9, c = 1.0;
  Tape tape;
  Var x = tape.constant(Tensor({1, 2}));
  Var g = tape.constant(Tensor({2}, 1.0)), b = tape.constant(Tensor({2}));
  SublayerFn constant = [&](Var) { return tape.constant(Tensor({1, 2}, c)); };
  Rng rng(2024);
  Context ctx = Context::train(rng);
  for (std::size_t l = 1; l <= total; ++l) {
    const double p = survival_probability(l, total, pL);
    double mean = 0.0;
    for (std::size_t t = 0; t < trials; ++t) mean += residual_sublayer(x, constant, g, b, l, total, pL, 0.0, ctx).value()[0];
    mean /= static_cast<double>(trials);
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
    CHECK(std::abs(mean - p * c) <= 3.0 * sigma + 1e-12);
    Tensor eval = residual_sublayer(x, constant, g, b, l, total, pL, 0.0, Context::eval()).value();
    CHECK(eval[0] == doctest::Approx(p * c).epsilon(1e-15));
  }
}

TEST_CASE("encoder stack shapes, determinism and the empty stack") {
  Rng rng(10);
  Tensor x = random_tensor({6, 8}, rng);
  SUBCASE("four blocks preserve shape and evaluation is repeatable") {
    EncoderStack stack("enc", tiny_block(8, 4), tiny_caps());
    ParamStore store;
    stack.init(store, rng);
    Tape t1, t2;
    Var a = stack.forward(t1, store, t1.constant(x), {1, 1, 1, 1, 0, 0}, Context::eval());
    Var b = stack.forward(t2, store, t2.constant(x), {1, 1, 1, 1, 0, 0}, Context::eval());
    CHECK(a.shape() == Shape{6, 8});
    CHECK(bitwise_equal(a.value(), b.value()));
  }
  SUBCASE("zero blocks is the identity") {
    EncoderStack stack("enc", tiny_block(8, 0), tiny_caps());
    ParamStore store;
    stack.init(store, rng);
    CHECK(stack.param_names().empty());
    Tape tape;
    CHECK(bitwise_equal(stack.forward(tape, store, tape.constant(x), {}, Context::eval()).value(), x));
  }
  SUBCASE("paper encoder configurations construct") {
    EncoderBlockConfig emb;
    CHECK(emb.num_conv_layers == 5);
    CHECK(emb.kernel == 7);
    CHECK(emb.num_blocks == 1);
    EncoderBlockConfig model = emb;
    model.num_conv_layers = 2;
    model.kernel = 5;
    model.num_blocks = 4;
    CHECK_NOTHROW(EncoderStack("m", model, CapsuleConfig{}));
    CHECK(model.total_sublayers() == 16);
  }
  SUBCASE("aliased stacks share values") {
    EncoderStack a("a", tiny_block(8), tiny_caps()), b("b", tiny_block(8), tiny_caps());
    ParamStore store;
    a.init(store, rng);
    b.alias_to(store, a);
    Tape t1, t2;
    CHECK(bitwise_equal(a.forward(t1, store, t1.constant(x), {}, Context::eval()).value(),
                        b.forward(t2, store, t2.constant(x), {}, Context::eval()).value()));
  }
  SUBCASE("full stack gradient check at reduced size") {
    EncoderStack stack("enc", tiny_block(8), tiny_caps());
    ParamStore store;
    stack.init(store, rng);
    for (const auto& n : stack.param_names()) {
      if (n.find("ln_bias") != std::string::npos || n.find(".b") != std::string::npos) {
        store.value(n) = random_tensor(store.value(n).shape(), rng, -0.3, 0.3);
      }
    }
    store.add("x", random_tensor({4, 8}, rng));
    LossFn f = [&](Tape& tape, const Context& ctx) {
      return contract(stack.forward(tape, store, tape.parameter(store, "x"), {1, 1, 1, 0}, ctx), 12);
    };
    CHECK(grad_check(f, store, Context::eval()).max_rel_error < 1e-4);
  }
}
