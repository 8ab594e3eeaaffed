#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "abanet/metrics.hpp"
#include "abanet/model.hpp"

namespace abanet {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.8;
  double beta2 = 0.999;
  double eps = 1e-7;
  // Linear warmup of the learning rate over this many steps.
  std::size_t warmup_steps = 0;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;

  static AdamConfig from(const ModelConfig& c);
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Updates every trainable canonical parameter from its gradient slot.
  void step(ParamStore& store);

  std::size_t steps() const { return t_; }
  double current_learning_rate() const;

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

// Mean span loss over the batch plus L2 decay, recorded on `tape`.
Var batch_loss(Tape& tape, const AbaNet& model, const ParamStore& store, const std::vector<const Example*>& batch,
               const Context& ctx);

// Training-mode forward, backward and one optimizer update. Returns the
// pre-update loss. A non-finite loss or gradient raises NumericalError naming
// the op that first produced a non-finite value.
double train_step(const AbaNet& model, ParamStore& store, Adam& optimizer, const std::vector<const Example*>& batch,
                  Rng& rng);

struct Prediction {
  std::string id;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string text;
  double score = 0.0;
  Tensor attention;  // row-softmaxed passage-to-question weights
};

Prediction predict(const AbaNet& model, const ParamStore& store, const Example& ex);

// Evaluation-mode macro EM/F1. Throws DataError on an empty dataset.
Scores evaluate(const AbaNet& model, const ParamStore& store, const std::vector<Example>& data);

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double loss = 0.0;
  Scores scores;
};

struct TrainOptions {
  std::size_t epochs = 1;
  // Stops after this many optimizer steps when nonzero.
  std::size_t max_steps = 0;
  std::uint64_t seed = 1;
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(std::size_t step, double loss)> on_step;
};

struct TrainResult {
  std::vector<double> losses;
  std::vector<EpochLog> epochs;
};

// Shuffled mini-batches of config().batch_size; evaluates on `data` after
// every epoch.
TrainResult train(const AbaNet& model, ParamStore& store, const std::vector<Example>& data, const TrainOptions& opts);

// Formats one epoch as `epoch=<k> loss=<v> em=<v> f1=<v>`.
std::string format_epoch(const EpochLog& log);

}  // namespace abanet
