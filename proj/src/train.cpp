#include "abanet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "abanet/errors.hpp"
#include "abanet/ops.hpp"

namespace abanet {

AdamConfig AdamConfig::from(const ModelConfig& c) {
  return AdamConfig{c.learning_rate, c.beta1, c.beta2, c.adam_eps, c.warmup_steps, c.grad_clip};
}

double Adam::current_learning_rate() const {
  if (config_.warmup_steps == 0 || t_ >= config_.warmup_steps) return config_.learning_rate;
  return config_.learning_rate * static_cast<double>(t_ + 1) / static_cast<double>(config_.warmup_steps);
}

void Adam::step(ParamStore& store) {
  const auto names = store.names();
  double clip = 1.0;
  if (config_.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& n : names) {
      if (!store.trainable(n)) continue;
      for (double g : store.grad(n).data()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.grad_clip) clip = config_.grad_clip / norm;
  }
  const double lr = current_learning_rate();
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& n : names) {
    if (!store.trainable(n)) continue;
    Tensor& w = store.value(n);
    const Tensor& g = store.grad(n);
    auto [mit, fresh] = m_.try_emplace(n, w.shape());
    auto vit = v_.try_emplace(n, w.shape()).first;
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

Var batch_loss(Tape& tape, const AbaNet& model, const ParamStore& store, const std::vector<const Example*>& batch,
               const Context& ctx) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  Var total;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Example& ex = *batch[k];
    ForwardResult r = model.forward(tape, store, ex, ctx);
    Var l = span_loss(r.logits, ex.answer_begin, ex.answer_end);
    total = k == 0 ? l : add(total, l);
  }
  Var mean = scale(total, 1.0 / static_cast<double>(batch.size()));
  return add(mean, l2_decay(tape, store, model.config().l2));
}

namespace {

[[noreturn]] void non_finite(const Tape& tape, const std::string& what) {
  std::string where = "no tape value is non-finite";
  if (auto id = tape.first_non_finite()) {
    where = "first non-finite value produced by op '" + tape.op_name(*id) + "' (node " + std::to_string(*id) + ")";
  }
  throw NumericalError(what + "; " + where);
}

}  // namespace

double train_step(const AbaNet& model, ParamStore& store, Adam& optimizer, const std::vector<const Example*>& batch,
                  Rng& rng) {
  store.zero_grad();
  Tape tape;
  Var loss = batch_loss(tape, model, store, batch, Context::train(rng));
  const double value = loss.value().item();
  if (!std::isfinite(value)) non_finite(tape, "non-finite loss " + std::to_string(value));
  abanet::backward(tape, loss, store);
  for (const auto& n : store.names()) {
    if (store.trainable(n) && !store.grad(n).all_finite()) non_finite(tape, "non-finite gradient for '" + n + "'");
  }
  optimizer.step(store);
  return value;
}

Prediction predict(const AbaNet& model, const ParamStore& store, const Example& ex) {
  Tape tape;
  ForwardResult r = model.forward(tape, store, ex, Context::eval());
  DecodedSpan span = decode_span(r.p_begin, r.p_end, model.config().max_answer_len, model.config().unanswerable);
  Prediction p;
  p.id = ex.id;
  p.begin = span.begin;
  p.end = span.end;
  p.score = span.score;
  if (!span.no_answer) {
    for (std::size_t i = span.begin; i <= span.end; ++i) {
      if (!p.text.empty()) p.text += ' ';
      p.text += ex.passage[i];
    }
  }
  p.attention = r.attention.H_row;
  return p;
}

Scores evaluate(const AbaNet& model, const ParamStore& store, const std::vector<Example>& data) {
  if (data.empty()) throw DataError("cannot evaluate an empty dataset");
  std::vector<std::string> preds, golds;
  preds.reserve(data.size());
  golds.reserve(data.size());
  for (const auto& ex : data) {
    preds.push_back(predict(model, store, ex).text);
    golds.push_back(ex.answer_text());
  }
  return score_answers(preds, golds);
}

TrainResult train(const AbaNet& model, ParamStore& store, const std::vector<Example>& data, const TrainOptions& opts) {
  if (data.empty()) throw DataError("cannot train on an empty dataset");
  Rng rng(opts.seed);
  Adam optimizer(AdamConfig::from(model.config()));
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = model.config().batch_size;
  bool done = false;
  for (std::size_t epoch = 1; epoch <= opts.epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const Example*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) batch.push_back(&data[order[k]]);
      const double loss = train_step(model, store, optimizer, batch, rng);
      result.losses.push_back(loss);
      sum += loss;
      ++batches;
      if (opts.on_step) opts.on_step(optimizer.steps(), loss);
      if (opts.max_steps && optimizer.steps() >= opts.max_steps) {
        done = true;
        break;
      }
    }
    EpochLog log{epoch, optimizer.steps(), sum / static_cast<double>(batches), evaluate(model, store, data)};
    result.epochs.push_back(log);
    if (opts.on_epoch) opts.on_epoch(log);
  }
  return result;
}

std::string format_epoch(const EpochLog& log) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.6f em=%.4f f1=%.4f", log.epoch, log.loss, log.scores.em,
                log.scores.f1);
  return buf;
}

}  // namespace abanet
