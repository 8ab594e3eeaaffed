#include <cmath>
#include <random>

#include "abanet/attention.hpp"
#include "abanet/errors.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace abanet;
using namespace abanet::testing;

namespace {

std::vector<Var> constants(Tape& tape, const std::vector<Tensor>& ts) {
  std::vector<Var> out;
  for (const Tensor& t : ts) out.push_back(tape.constant(t));
  return out;
}

AdaptiveAttentionConfig small_config(std::size_t d, bool scale = true) {
  AdaptiveAttentionConfig cfg;
  cfg.width = d;
  cfg.input_widths = {5, 3, 4, 4, 4, 6};
  cfg.use_adaptive_scale = scale;
  cfg.dropout = 0.0;
  return cfg;
}

HosInputs random_inputs(Tape& tape, std::size_t n, const std::array<std::size_t, kHosComponents>& widths, Rng& rng) {
  HosInputs in;
  for (std::size_t g = 0; g < kHosComponents; ++g) in[g] = tape.constant(random_tensor({n, widths[g]}, rng));
  return in;
}

}  // namespace

TEST_CASE("assemble_hos projects six components to the common width") {
  AdaptiveAttentionConfig cfg;
  cfg.input_widths = {328, 64, 128, 128, 128, 256};
  AdaptiveAttention att("att", cfg);
  ParamStore store;
  Rng rng(1);
  att.init(store, rng);
  Tape tape;
  HosInputs in = random_inputs(tape, 4, cfg.input_widths, rng);
  in[2] = tape.constant(Tensor({4, 128}));
  HistoryOfSemantic hos = assemble_hos(tape, store, "att", in);
  REQUIRE(hos.components.size() == 6);
  for (const Var& c : hos.components) CHECK(c.shape() == Shape{4, 128});
  for (double v : hos.components[2].value().data()) CHECK(v == 0.0);

  HosInputs bad = in;
  bad[4] = tape.constant(Tensor({3, 128}));
  CHECK_THROWS_AS(assemble_hos(tape, store, "att", bad), DimensionError);

  HosInputs missing = in;
  missing[3].reset();
  try {
    assemble_hos(tape, store, "att", missing);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("contextual") != std::string::npos);
  }
}

TEST_CASE("adaptive_scale mixing") {
  Rng rng(2);
  std::vector<Tensor> comps;
  for (int g = 0; g < 6; ++g) comps.push_back(random_tensor({3, 4}, rng));
  Tape tape;
  auto vars = constants(tape, comps);

  auto same = adaptive_scale(vars, tape.constant(initial_lambda(LambdaInit::kIdentity)));
  for (std::size_t g = 0; g < 6; ++g) CHECK(bitwise_equal(same[g].value(), comps[g]));

  auto literal = adaptive_scale(vars, tape.constant(initial_lambda(LambdaInit::kPaperLiteral)));
  for (std::size_t g = 0; g < 6; ++g) CHECK(bitwise_equal(literal[g].value(), comps[0]));

  Tensor lambda = Tensor::matrix({{0.5, -2.0}, {1.5, 0.25}});
  auto two = adaptive_scale({vars[0], vars[1]}, tape.constant(lambda));
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(two[0].value()[i] == doctest::Approx(0.5 * comps[0][i] - 2.0 * comps[1][i]).epsilon(1e-14));
    CHECK(two[1].value()[i] == doctest::Approx(1.5 * comps[0][i] + 0.25 * comps[1][i]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(adaptive_scale(vars, tape.constant(Tensor::identity(5))), DimensionError);
}

TEST_CASE("top-k selection and tie-breaking") {
  CHECK(top_k_indices(Tensor::vector({0.1, 0.5, 0.2, 0.9, 0.3, 0.0}), 3) == std::vector<std::size_t>{1, 3, 4});
  CHECK(top_k_indices(Tensor({6}, 1.0 / 6.0), 3) == std::vector<std::size_t>{0, 1, 2});
  CHECK(top_k_indices(Tensor::vector({1, 2, 2, 2, 0, 2}), 3) == std::vector<std::size_t>{1, 2, 3});

  Rng rng(3);
  std::vector<Tensor> comps;
  for (int g = 0; g < 6; ++g) comps.push_back(random_tensor({2, 128}, rng));
  Tape tape;
  auto vars = constants(tape, comps);

  Selection dominant = select_top_k(vars, tape.constant(Tensor::vector({10, 10, 10, -10, -10, -10})));
  CHECK(dominant.indices == std::vector<std::size_t>{0, 1, 2});
  CHECK(dominant.output.shape() == Shape{2, 384});

  Selection uniform = select_top_k(vars, tape.constant(Tensor({6})));
  CHECK(uniform.indices == std::vector<std::size_t>{0, 1, 2});

  Selection mixed = select_top_k(vars, tape.constant(Tensor::vector({0, 3, -1, 2, 1, -2})));
  CHECK(mixed.indices == std::vector<std::size_t>{1, 3, 4});
  for (std::size_t slot = 0; slot < 3; ++slot) {
    const std::size_t g = mixed.indices[slot];
    for (std::size_t c = 0; c < 128; ++c) {
      CHECK(mixed.output.value()(1, slot * 128 + c) == mixed.weights[g] * comps[g](1, c));
    }
  }
  CHECK_THROWS_AS(select_top_k({vars[0], vars[1]}, tape.constant(Tensor({2}))), ConfigError);

  for (int trial = 0; trial < 100; ++trial) {
    Selection s = select_top_k(vars, tape.constant(random_tensor({6}, rng, -3, 3)));
    REQUIRE(s.indices.size() == 3);
    CHECK(s.indices[0] < s.indices[1]);
    CHECK(s.indices[1] < s.indices[2]);
  }
}

TEST_CASE("selection gradient reaches only selected weights") {
  Rng rng(4);
  ParamStore store;
  store.add("alpha", Tensor::vector({0.3, -0.2, 0.9, 0.1, -0.7, 0.5}));
  std::vector<Tensor> comps;
  for (int g = 0; g < 6; ++g) comps.push_back(random_tensor({2, 3}, rng));
  LossFn f = [&](Tape& tape, const Context&) {
    return contract(select_top_k(constants(tape, comps), tape.parameter(store, "alpha")).output, 2);
  };
  CHECK(grad_check(f, store, Context::eval()).max_rel_error < 1e-6);
}

TEST_CASE("trilinear similarity") {
  Tape tape;
  Rng rng(5);
  Var p = tape.constant(random_tensor({3, 4}, rng));
  Var q = tape.constant(random_tensor({2, 4}, rng));
  Var h0 = trilinear_similarity(p, q, tape.constant(Tensor({12})), 0.1, Context::eval());
  for (double v : h0.value().data()) CHECK(v == 0.0);

  Var ones = trilinear_similarity(tape.constant(Tensor({1, 5}, 1.0)), tape.constant(Tensor({1, 5}, 1.0)),
                                  tape.constant(Tensor({15}, 1.0)), 0.0, Context::eval());
  CHECK(ones.value()[0] == 15.0);

  Tensor P = Tensor::matrix({{1, 2}, {-1, 0.5}});
  Tensor Q = Tensor::matrix({{0, 3}, {2, -1}});
  Tensor w = Tensor::vector({0.5, -1, 2, 1, 0.25, -0.5});
  Var h = trilinear_similarity(tape.constant(P), tape.constant(Q), tape.constant(w), 0.0, Context::eval());
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double e = 0.0;
      for (std::size_t c = 0; c < 2; ++c) e += w[c] * P(i, c) + w[2 + c] * Q(j, c) + w[4 + c] * P(i, c) * Q(j, c);
      CHECK(std::abs(h.value()(i, j) - e) < 1e-12);
    }
  }
  CHECK_THROWS_AS(trilinear_similarity(p, tape.constant(Tensor({2, 3})), tape.constant(Tensor({12})), 0.0,
                                       Context::eval()),
                  DimensionError);
}

TEST_CASE("passage-to-question and question-to-passage attention") {
  Tape tape;
  Rng rng(6);
  SUBCASE("single question token") {
    Tensor q = random_tensor({1, 4}, rng);
    Var m = p2q_attention(tape.constant(random_tensor({3, 1}, rng)), tape.constant(q), {}, {});
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(m.value()(i, c) == q(0, c));
    }
  }
  SUBCASE("single token on both sides") {
    Tensor p = random_tensor({1, 4}, rng);
    Var h = tape.constant(Tensor({1, 1}, 0.7));
    Var row;
    p2q_attention(h, tape.constant(random_tensor({1, 4}, rng)), {}, {}, &row);
    Var s = q2p_attention(h, row, tape.constant(p), {}, {});
    CHECK(max_abs_diff(s.value(), p) < 1e-15);
  }
  SUBCASE("2x2 hand computation in extended precision") {
    Tensor H = Tensor::matrix({{0.3, -1.2}, {2.0, 0.4}});
    Tensor P = Tensor::matrix({{1, -2, 0.5}, {0.25, 3, -1}});
    Tensor Q = Tensor::matrix({{-1, 0, 2}, {0.5, 1.5, -0.5}});
    Var hv = tape.constant(H), row, col;
    Var m = p2q_attention(hv, tape.constant(Q), {}, {}, &row);
    Var s = q2p_attention(hv, row, tape.constant(P), {}, {}, &col);
    long double R[2][2], C[2][2];
    for (int i = 0; i < 2; ++i) {
      const long double z = std::exp(static_cast<long double>(H(i, 0))) + std::exp(static_cast<long double>(H(i, 1)));
      for (int j = 0; j < 2; ++j) R[i][j] = std::exp(static_cast<long double>(H(i, j))) / z;
    }
    for (int j = 0; j < 2; ++j) {
      const long double z = std::exp(static_cast<long double>(H(0, j))) + std::exp(static_cast<long double>(H(1, j)));
      for (int i = 0; i < 2; ++i) C[i][j] = std::exp(static_cast<long double>(H(i, j))) / z;
    }
    for (int i = 0; i < 2; ++i) {
      for (int c = 0; c < 3; ++c) {
        long double em = 0, es = 0;
        for (int j = 0; j < 2; ++j) em += R[i][j] * Q(j, c);
        for (int k = 0; k < 2; ++k) {
          long double a = 0;
          for (int j = 0; j < 2; ++j) a += R[i][j] * C[k][j];
          es += a * P(k, c);
        }
        CHECK(std::abs(static_cast<long double>(m.value()(i, c)) - em) < 1e-12L);
        CHECK(std::abs(static_cast<long double>(s.value()(i, c)) - es) < 1e-12L);
      }
    }
  }
  SUBCASE("masks, stochasticity, and empty sides") {
    Var h = tape.constant(random_tensor({4, 3}, rng, -3, 3));
    const SequenceMask pm = {1, 1, 1, 0}, qm = {1, 0, 1};
    Var row, col;
    Var m = p2q_attention(h, tape.constant(random_tensor({3, 2}, rng)), pm, qm, &row);
    q2p_attention(h, row, tape.constant(random_tensor({4, 2}, rng)), pm, qm, &col);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(row.value()(i, 1) == 0.0);
      CHECK(std::abs(row.value()(i, 0) + row.value()(i, 2) - 1.0) < 1e-12);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(col.value()(3, j) == 0.0);
      double s = 0.0;
      for (std::size_t i = 0; i < 4; ++i) s += col.value()(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    Tensor prod = matmul(row.value(), transpose(col.value()));
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += prod(i, k);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(p2q_attention(h, tape.constant(random_tensor({3, 2}, rng)), pm, {0, 0, 0}), DataError);
    CHECK_THROWS_AS(q2p_attention(h, row, tape.constant(random_tensor({4, 2}, rng)), {0, 0, 0, 0}, qm), DataError);
  }
}

TEST_CASE("fuse_output layout") {
  Tape tape;
  Rng rng(7);
  Tensor m = random_tensor({2, 384}, rng), s = random_tensor({2, 384}, rng);
  Var o = fuse_output(tape.constant(Tensor({2, 384})), tape.constant(m), tape.constant(s));
  CHECK(o.shape() == Shape{2, 1536});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t c = 0; c < 384; ++c) {
      CHECK(o.value()(i, c) == 0.0);
      CHECK(o.value()(i, 384 + c) == m(i, c));
      CHECK(o.value()(i, 768 + c) == 0.0);
      CHECK(o.value()(i, 1152 + c) == 0.0);
    }
  }
  CHECK_THROWS_AS(fuse_output(tape.constant(Tensor({2, 3})), tape.constant(m), tape.constant(s)), DimensionError);
}

TEST_CASE("permuting passage tokens permutes the fused output rows") {
  AdaptiveAttention att("att", small_config(4));
  ParamStore store;
  Rng rng(8);
  att.init(store, rng);
  store.value("att.alpha") = Tensor::vector({0.4, -0.1, 0.3, 0.2, -0.5, 0.0});
  Tape tape;
  HosInputs p = random_inputs(tape, 4, att.config().input_widths, rng);
  HosInputs q = random_inputs(tape, 3, att.config().input_widths, rng);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  HosInputs pp;
  for (std::size_t g = 0; g < kHosComponents; ++g) {
    std::vector<Var> rows;
    for (std::size_t r : perm) rows.push_back(slice(*p[g], 0, r, 1));
    pp[g] = concat(rows, 0);
  }
  Tensor a = att.forward(tape, store, p, q, {}, {}, Context::eval()).O.value();
  Tensor b = att.forward(tape, store, pp, q, {}, {}, Context::eval()).O.value();
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t c = 0; c < a.dim(1); ++c) CHECK(std::abs(b(i, c) - a(perm[i], c)) < 1e-12);
  }
}

TEST_CASE("identity lambda equals skipping the scaling stage") {
  Rng rng(9);
  AdaptiveAttention with("att", small_config(4, true)), without("att", small_config(4, false));
  ParamStore store;
  with.init(store, rng);
  store.value("att.alpha") = random_tensor({6}, rng);
  store.value("att.similarity") = random_tensor({36}, rng);
  Tape tape;
  HosInputs p = random_inputs(tape, 5, with.config().input_widths, rng);
  HosInputs q = random_inputs(tape, 3, with.config().input_widths, rng);
  auto a = with.forward(tape, store, p, q, {1, 1, 1, 1, 0}, {1, 1, 0}, Context::eval());
  auto b = without.forward(tape, store, p, q, {1, 1, 1, 1, 0}, {1, 1, 0}, Context::eval());
  CHECK(bitwise_equal(a.O.value(), b.O.value()));
  CHECK(a.selected == b.selected);
  CHECK(with.output_width() == 48);
  CHECK(a.O.shape() == Shape{5, 48});
}

TEST_CASE("end-to-end attention gradient check at n=3, m=2, d_h=6") {
  Rng rng(10);
  ParamStore store;
  store.add("p", random_tensor({3, 6}, rng));
  store.add("q", random_tensor({2, 6}, rng));
  store.add("w", random_tensor({18}, rng));
  LossFn direct = [&](Tape& tape, const Context& ctx) {
    Var p = tape.parameter(store, "p"), q = tape.parameter(store, "q");
    Var h = trilinear_similarity(p, q, tape.parameter(store, "w"), 0.0, ctx);
    Var row;
    Var m = p2q_attention(h, q, {}, {}, &row);
    Var s = q2p_attention(h, row, p, {}, {});
    return contract(fuse_output(p, m, s), 3);
  };
  CHECK(grad_check(direct, store, Context::eval()).max_rel_error < 1e-3);

  AdaptiveAttentionConfig cfg = small_config(2);
  cfg.lambda_init = LambdaInit::kIdentity;
  AdaptiveAttention att("att", cfg);
  ParamStore full;
  att.init(full, rng);
  full.value("att.alpha") = Tensor::vector({0.9, -0.4, 0.5, 0.2, -0.8, 0.1});
  full.value("att.lambda_p") = random_tensor({6, 6}, rng, -0.6, 0.6);
  full.value("att.lambda_q") = random_tensor({6, 6}, rng, -0.6, 0.6);
  std::vector<Tensor> pin, qin;
  for (std::size_t g = 0; g < kHosComponents; ++g) {
    pin.push_back(random_tensor({3, cfg.input_widths[g]}, rng));
    qin.push_back(random_tensor({2, cfg.input_widths[g]}, rng));
  }
  LossFn layer = [&](Tape& tape, const Context& ctx) {
    HosInputs p, q;
    for (std::size_t g = 0; g < kHosComponents; ++g) {
      p[g] = tape.constant(pin[g]);
      q[g] = tape.constant(qin[g]);
    }
    return contract(att.forward(tape, full, p, q, {}, {}, ctx).O, 4);
  };
  CHECK(grad_check(layer, full, Context::eval()).max_rel_error < 1e-3);
}
