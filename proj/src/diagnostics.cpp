#include "abanet/diagnostics.hpp"

#include <chrono>
#include <algorithm>
#include <functional>
#include <map>

#include "abanet/ops.hpp"
#include "abanet/train.hpp"

namespace abanet {

namespace {

using Build = std::function<Var(const std::vector<Var>&)>;

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  Build build;
  double lo = -1.0;
  double hi = 1.0;
};

Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void away_from_zero(Tensor& t) {
  for (double& v : t.data()) v += v >= 0.0 ? 0.2 : -0.2;
}

std::vector<OpCase> op_cases() {
  static const Tensor row_mask = Tensor::matrix({{1, 1, 0}, {0, 1, 1}});
  static const Tensor vec_mask = Tensor::vector({1, 0, 1, 1, 1});
  return {
      {"add", {{2, 3}, {2, 3}}, [](auto& v) { return add(v[0], v[1]); }},
      {"sub", {{2, 3}, {2, 3}}, [](auto& v) { return sub(v[0], v[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](auto& v) { return mul(v[0], v[1]); }},
      {"add_bias", {{3, 4}, {4}}, [](auto& v) { return add_bias(v[0], v[1]); }},
      {"scale", {{2, 3}}, [](auto& v) { return scale(v[0], -1.7); }},
      {"add_scalar", {{2, 3}}, [](auto& v) { return mul(add_scalar(v[0], 0.3), v[0]); }},
      {"one_minus", {{2, 3}}, [](auto& v) { return mul(one_minus(v[0]), v[0]); }},
      {"relu", {{3, 3}}, [](auto& v) { return relu(v[0]); }},
      {"sigmoid", {{2, 3}}, [](auto& v) { return sigmoid(v[0]); }},
      {"tanh", {{2, 3}}, [](auto& v) { return tanh(v[0]); }},
      {"exp", {{2, 3}}, [](auto& v) { return exp(v[0]); }},
      {"log", {{2, 3}}, [](auto& v) { return log(v[0]); }, 0.5, 2.0},
      {"matmul", {{2, 3}, {3, 4}}, [](auto& v) { return matmul(v[0], v[1]); }},
      {"transpose", {{2, 3}}, [](auto& v) { return transpose(v[0]); }},
      {"reshape", {{2, 3}}, [](auto& v) { return reshape(v[0], {3, 2}); }},
      {"concat", {{2, 3}, {2, 1}}, [](auto& v) { return concat({v[0], v[1]}, 1); }},
      {"slice", {{4, 3}}, [](auto& v) { return slice(v[0], 0, 1, 2); }},
      {"sum", {{2, 3}}, [](auto& v) { return mul(sum(v[0]), sum(v[0])); }},
      {"pick", {{2, 3}}, [](auto& v) { return mul(pick(v[0], 4), pick(v[0], 1)); }},
      {"mul_scalar_at", {{2, 3}, {3}}, [](auto& v) { return mul_scalar_at(v[0], v[1], 2); }},
      {"masked_softmax", {{2, 3}}, [](auto& v) { return masked_softmax(v[0], &row_mask, 1); }},
      {"masked_cross_entropy", {{5}}, [](auto& v) { return masked_cross_entropy(v[0], &vec_mask, 3); }},
      {"layer_norm", {{3, 4}, {4}, {4}}, [](auto& v) { return layer_norm(v[0], v[1], v[2]); }},
      {"depthwise_conv1d", {{5, 3}, {3, 3}}, [](auto& v) { return depthwise_conv1d(v[0], v[1]); }},
      {"char_conv_maxpool", {{2, 5, 3}, {3, 3, 4}, {4}}, [](auto& v) { return char_conv_maxpool(v[0], v[1], v[2]); }},
      {"gather_rows", {{4, 3}}, [](auto& v) { return gather_rows(v[0], {2, 0, 2, 3}, 3); }},
      {"trilinear", {{3, 4}, {2, 4}, {12}}, [](auto& v) { return trilinear(v[0], v[1], v[2]); }},
      {"squash", {{3, 2, 4}}, [](auto& v) { return squash(v[0]); }},
      {"capsule_predict", {{3, 2, 4}, {2, 2, 4, 4}}, [](auto& v) { return capsule_predict(v[0], v[1]); }},
      {"capsule_weighted_sum", {{3, 2, 2}, {3, 2, 2, 4}}, [](auto& v) { return capsule_weighted_sum(v[0], v[1]); }},
      {"capsule_agreement", {{3, 2, 2, 4}, {3, 2, 4}}, [](auto& v) { return capsule_agreement(v[0], v[1]); }},
  };
}

GradCheckEntry summarize(const std::string& name, const std::vector<const ParamGradError*>& params, double tol) {
  GradCheckEntry e;
  e.name = name;
  for (const ParamGradError* p : params) {
    e.coords += p->checked;
    e.kink_crossings += p->kink_crossings;
    if (p->max_rel_error >= e.max_rel_error) {
      e.max_rel_error = p->max_rel_error;
      e.worst_param = p->name;
    }
  }
  e.passed = e.max_rel_error < tol;
  return e;
}

// Winning window per (word, filter), identified by the first window with the
// same content so ties between identical all-padding windows do not count.
void maxpool_branches(const Tensor& x, const Tensor& w, const Tensor& b, std::string& sig) {
  const std::size_t n = x.dim(0), c = x.dim(1), e = x.dim(2), k = w.dim(0), f = w.dim(2);
  const std::size_t positions = c - k + 1;
  std::vector<double> z(positions);
  for (std::size_t t = 0; t < n; ++t) {
    auto same_window = [&](std::size_t p, std::size_t q) {
      for (std::size_t i = 0; i < k * e; ++i) {
        if (x[(t * c + p) * e + i] != x[(t * c + q) * e + i]) return false;
      }
      return true;
    };
    for (std::size_t o = 0; o < f; ++o) {
      for (std::size_t p = 0; p < positions; ++p) {
        double acc = b[o];
        for (std::size_t j = 0; j < k; ++j) {
          for (std::size_t i = 0; i < e; ++i) acc += x[(t * c + p + j) * e + i] * w[(j * e + i) * f + o];
        }
        z[p] = acc;
      }
      std::size_t best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
      std::size_t first = 0;
      while (!same_window(first, best)) ++first;
      sig.push_back(static_cast<char>('a' + first));
    }
  }
}

}  // namespace

std::string branch_signature(const Tape& tape) {
  std::string sig;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    const std::string& op = tape.op_name(id);
    const auto& in = tape.input_ids(id);
    if (op == "relu") {
      for (double v : tape.value(in[0]).data()) sig.push_back(v > 0.0 ? '+' : '-');
    } else if (op == "char_conv_maxpool") {
      maxpool_branches(tape.value(in[0]), tape.value(in[1]), tape.value(in[2]), sig);
    }
  }
  return sig;
}

std::vector<GradCheckEntry> grad_check_ops(const GradCheckOptions& opts, std::uint64_t seed) {
  std::vector<GradCheckEntry> out;
  Rng rng(seed);
  for (const OpCase& c : op_cases()) {
    ParamStore store;
    std::vector<std::string> names;
    for (std::size_t k = 0; k < c.shapes.size(); ++k) {
      Tensor t = uniform(c.shapes[k], rng, c.lo, c.hi);
      if (std::string(c.name) == "relu" || std::string(c.name) == "char_conv_maxpool") away_from_zero(t);
      names.push_back(std::string(c.name) + ".in" + std::to_string(k));
      store.add(names.back(), std::move(t));
    }
    const Tensor* weights = nullptr;
    Tensor contraction;
    LossFn f = [&](Tape& tape, const Context&) {
      std::vector<Var> vars;
      for (const auto& n : names) vars.push_back(tape.parameter(store, n));
      Var y = c.build(vars);
      if (!weights) {
        contraction = uniform(y.shape(), rng, -1.0, 1.0);
        weights = &contraction;
      }
      return sum(mul(y, tape.constant(*weights)));
    };
    const GradCheckReport r = grad_check(f, store, Context::eval(), opts);
    std::vector<const ParamGradError*> ps;
    for (const auto& p : r.params) ps.push_back(&p);
    out.push_back(summarize(c.name, ps, opts.tolerance));
  }
  return out;
}

Example grad_check_example() {
  Example ex;
  ex.id = "gradcheck";
  ex.passage = {"w1", "w2", "w3", "w4", "w5"};
  ex.question = {"w3", "w7", "w2"};
  ex.pos = {1, 0, 3, 2, 1};
  ex.ner = {0, 1, 0, 0, 1};
  ex.rule = {1, 0, 0, 1, 0};
  ex.answer_begin = 1;
  ex.answer_end = 3;
  ex.answerable = true;
  return ex;
}

void randomize_for_grad_check(ParamStore& store, Rng& rng) {
  for (const auto& name : store.names()) {
    if (!store.trainable(name)) continue;
    Tensor& t = store.value(name);
    bool zero = true;
    for (double v : t.data()) zero = zero && v == 0.0;
    if (zero) t = uniform(t.shape(), rng, -0.2, 0.2);
  }
  if (store.contains("att.alpha")) {
    Tensor& alpha = store.value("att.alpha");
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      alpha[i] = 0.9 - 0.31 * static_cast<double>((i * 7) % alpha.size());
    }
  }
}

std::string module_of(const std::string& param) { return param.substr(0, param.find('.')); }

ModelGradCheck grad_check_model(const ModelConfig& config, std::uint64_t seed, const GradCheckOptions& opts,
                                std::size_t max_draws) {
  const auto start = std::chrono::steady_clock::now();
  const Example ex = grad_check_example();
  const auto [words, chars] = build_vocabularies({ex});
  AbaNet model(config, words, chars);
  GradCheckOptions checked = opts;
  checked.branch_signature = branch_signature;
  Rng rng(seed);

  ModelGradCheck out;
  for (out.draws = 1; out.draws <= std::max<std::size_t>(max_draws, 1); ++out.draws) {
    ParamStore store;
    model.init(store, rng);
    randomize_for_grad_check(store, rng);
    LossFn f = [&](Tape& tape, const Context& ctx) { return batch_loss(tape, model, store, {&ex}, ctx); };
    out.report = grad_check(f, store, Context::eval(), checked);
    if (out.report.kink_crossings == 0) break;
  }
  out.draws = std::min(out.draws, std::max<std::size_t>(max_draws, 1));

  std::map<std::string, std::vector<const ParamGradError*>> groups;
  std::vector<std::string> order;
  for (const auto& p : out.report.params) {
    const std::string m = module_of(p.name);
    if (!groups.count(m)) order.push_back(m);
    groups[m].push_back(&p);
  }
  for (const auto& m : order) out.modules.push_back(summarize(m, groups[m], opts.tolerance));
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace abanet
