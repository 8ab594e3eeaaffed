#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "abanet/checkpoint.hpp"
#include "abanet/cli.hpp"
#include "abanet/diagnostics.hpp"
#include "abanet/errors.hpp"
#include "abanet/metrics.hpp"
#include "abanet/ops.hpp"

namespace py = pybind11;
using namespace abanet;

namespace {

Tensor to_tensor(const std::vector<double>& v) {
  if (v.empty()) throw DimensionError("expected a non-empty sequence");
  return Tensor({v.size()}, v);
}

py::object from_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

RunConfig run_config(const std::string& profile, const std::vector<std::pair<std::string, std::string>>& settings) {
  return make_run_config(std::nullopt, profile, settings);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the abanet reading-comprehension package";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("profile_settings", [](const std::string& name) {
    ModelConfig c = ModelConfig::for_profile(name);
    c.finalize();
    return c.settings();
  }, py::arg("name"), "Every setting of a named profile as (key, value) pairs.");

  m.def("normalize_answer", &normalize_answer, py::arg("text"));
  m.def("exact_match", [](const std::string& p, const std::string& g) { return exact_match(p, g); },
        py::arg("prediction"), py::arg("gold"));
  m.def("f1_score", [](const std::string& p, const std::string& g) { return f1_score(p, g); }, py::arg("prediction"),
        py::arg("gold"));
  m.def("score_answers", [](const std::vector<std::string>& preds, const std::vector<std::string>& golds) {
    const Scores s = score_answers(preds, golds);
    return py::dict(py::arg("em") = s.em, py::arg("f1") = s.f1, py::arg("examples") = s.count);
  }, py::arg("predictions"), py::arg("golds"));

  m.def("generate", [](const std::string& task, std::size_t size, std::uint64_t seed) {
    py::list out;
    for (const Example& ex : gen_synthetic(parse_task(task), size, seed)) out.append(from_json(example_to_json(ex).dump()));
    return out;
  }, py::arg("task"), py::arg("size"), py::arg("seed"), "Synthetic examples as JSONL-schema dicts.");

  m.def("decode_span", [](const std::vector<double>& p_begin, const std::vector<double>& p_end, std::size_t max_len,
                          bool unanswerable) {
    const DecodedSpan s = decode_span(to_tensor(p_begin), to_tensor(p_end), max_len, unanswerable);
    return py::make_tuple(s.begin, s.end, s.score, s.no_answer);
  }, py::arg("p_begin"), py::arg("p_end"), py::arg("max_len") = 30, py::arg("unanswerable") = false,
        "(begin, end, score, no_answer) maximizing p_begin[i] * p_end[j].");

  m.def("squash", [](const std::vector<double>& v) {
    Tape tape;
    const Tensor out = squash(tape.constant(to_tensor(v).reshaped({1, v.size()}))).value();
    return out.values();
  }, py::arg("vector"));

  m.def("survival_probability", &survival_probability, py::arg("l"), py::arg("total"), py::arg("survival_last") = 0.9);

  m.def("train", [](const std::filesystem::path& data, const std::filesystem::path& checkpoint, const std::string& profile,
                    std::size_t epochs, std::uint64_t seed,
                    const std::vector<std::pair<std::string, std::string>>& settings) {
    RunConfig run = run_config(profile, settings);
    run.data = data;
    run.checkpoint = checkpoint;
    run.epochs = epochs;
    run.seed = seed;
    std::ostringstream log;
    TrainSummary s;
    {
      py::gil_scoped_release release;
      s = cmd_train(run, log);
    }
    py::list epochs_out;
    for (const EpochLog& e : s.epochs) {
      epochs_out.append(py::dict(py::arg("epoch") = e.epoch, py::arg("loss") = e.loss, py::arg("em") = e.scores.em,
                                 py::arg("f1") = e.scores.f1));
    }
    return py::dict(py::arg("epochs") = epochs_out, py::arg("digest") = hex64(s.checkpoint_digest),
                    py::arg("log") = log.str());
  }, py::arg("data"), py::arg("checkpoint"), py::arg("profile") = "mini", py::arg("epochs") = 1, py::arg("seed") = 1,
        py::arg("settings") = std::vector<std::pair<std::string, std::string>>{});

  m.def("evaluate", [](const std::filesystem::path& checkpoint, const std::filesystem::path& data) {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
    const Scores s = evaluate(ckpt.model, ckpt.params, load_jsonl(data));
    return py::dict(py::arg("em") = s.em, py::arg("f1") = s.f1, py::arg("examples") = s.count);
  }, py::arg("checkpoint"), py::arg("data"));

  m.def("predict", [](const std::filesystem::path& checkpoint, const std::filesystem::path& data, bool dump_attention) {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
    py::list out;
    for (const Example& ex : load_jsonl(data)) {
      out.append(from_json(prediction_json(predict(ckpt.model, ckpt.params, ex), dump_attention)));
    }
    return out;
  }, py::arg("checkpoint"), py::arg("data"), py::arg("dump_attention") = false);

  m.def("file_digest", [](const std::filesystem::path& p) { return hex64(file_digest(p)); }, py::arg("path"));

  m.def("grad_check_ops", [] {
    py::list out;
    for (const auto& e : grad_check_ops()) {
      out.append(py::dict(py::arg("op") = e.name, py::arg("max_rel_error") = e.max_rel_error,
                          py::arg("passed") = e.passed));
    }
    return out;
  }, "Finite-difference check of every differentiable primitive.");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
