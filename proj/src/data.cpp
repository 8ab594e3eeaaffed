#include "abanet/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "abanet/errors.hpp"

namespace abanet {

using nlohmann::json;

std::string Example::answer_text() const {
  if (!answerable) return "";
  std::string out;
  for (std::size_t i = answer_begin; i <= answer_end && i < passage.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += passage[i];
  }
  return out;
}

std::vector<int> Example::passage_subtokens() const {
  return subtokens.empty() ? std::vector<int>(passage.size(), 1) : subtokens;
}

namespace {

void require(bool ok, const Example& ex, const std::string& what) {
  if (!ok) throw DataError("example '" + ex.id + "': " + what);
}

void check_ids(const std::vector<int>& ids, std::size_t n, const Example& ex, const char* field, bool optional) {
  if (optional && ids.empty()) return;
  require(ids.size() == n, ex, std::string(field) + " has " + std::to_string(ids.size()) + " entries, expected " +
                                   std::to_string(n));
  for (int v : ids) require(v >= 0, ex, std::string(field) + " contains a negative id");
}

}  // namespace

void validate(const Example& ex) {
  require(!ex.id.empty(), ex, "empty id");
  require(!ex.passage.empty(), ex, "empty passage");
  require(!ex.question.empty(), ex, "empty question");
  const std::size_t n = ex.passage.size(), m = ex.question.size();
  check_ids(ex.pos, n, ex, "pos", false);
  check_ids(ex.ner, n, ex, "ner", false);
  check_ids(ex.rule, n, ex, "rule", false);
  check_ids(ex.question_pos, m, ex, "question_pos", true);
  check_ids(ex.question_ner, m, ex, "question_ner", true);
  check_ids(ex.question_rule, m, ex, "question_rule", true);
  if (!ex.subtokens.empty()) {
    require(ex.subtokens.size() == n, ex, "subtokens length differs from passage length");
    for (int s : ex.subtokens) require(s >= 1, ex, "subtoken counts must be at least 1");
  }
  if (ex.answerable) {
    require(ex.answer_begin <= ex.answer_end, ex, "answer_begin > answer_end");
    require(ex.answer_end < n, ex, "answer_end " + std::to_string(ex.answer_end) + " outside passage of length " +
                                       std::to_string(n));
  } else {
    require(ex.answer_begin == n - 1 && ex.answer_end == n - 1, ex,
            "unanswerable example must point at the last passage token");
  }
}

Example example_from_json(const json& j) {
  if (!j.is_object()) throw DataError("expected a JSON object");
  Example ex;
  auto span_index = [&](const char* key) -> std::size_t {
    const long long v = j.at(key).get<long long>();
    if (v < 0) throw DataError("example '" + ex.id + "': " + key + " is negative");
    return static_cast<std::size_t>(v);
  };
  try {
    ex.id = j.at("id").get<std::string>();
    ex.passage = j.at("passage").get<std::vector<std::string>>();
    ex.question = j.at("question").get<std::vector<std::string>>();
    ex.pos = j.at("pos").get<std::vector<int>>();
    ex.ner = j.at("ner").get<std::vector<int>>();
    ex.rule = j.at("rule").get<std::vector<int>>();
    ex.answer_begin = span_index("answer_begin");
    ex.answer_end = span_index("answer_end");
    ex.answerable = j.at("answerable").get<bool>();
    if (j.contains("subtokens")) ex.subtokens = j.at("subtokens").get<std::vector<int>>();
    if (j.contains("question_pos")) ex.question_pos = j.at("question_pos").get<std::vector<int>>();
    if (j.contains("question_ner")) ex.question_ner = j.at("question_ner").get<std::vector<int>>();
    if (j.contains("question_rule")) ex.question_rule = j.at("question_rule").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DataError("example '" + ex.id + "': " + e.what());
  }
  validate(ex);
  return ex;
}

json example_to_json(const Example& ex) {
  json j = {{"id", ex.id},
            {"passage", ex.passage},
            {"question", ex.question},
            {"pos", ex.pos},
            {"ner", ex.ner},
            {"rule", ex.rule},
            {"answer_begin", ex.answer_begin},
            {"answer_end", ex.answer_end},
            {"answerable", ex.answerable}};
  if (!ex.subtokens.empty()) j["subtokens"] = ex.subtokens;
  if (!ex.question_pos.empty()) j["question_pos"] = ex.question_pos;
  if (!ex.question_ner.empty()) j["question_ner"] = ex.question_ner;
  if (!ex.question_rule.empty()) j["question_rule"] = ex.question_rule;
  return j;
}

std::vector<Example> parse_jsonl(const std::string& text, const std::string& source) {
  std::vector<Example> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + "malformed JSON (" + e.what() + ")");
    }
    try {
      out.push_back(example_from_json(j));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

std::vector<Example> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str(), path.string());
}

std::string to_jsonl(const std::vector<Example>& examples) {
  std::string out;
  for (const auto& ex : examples) out += example_to_json(ex).dump() + "\n";
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset: " + path.string());
  out << to_jsonl(examples);
}

SyntheticTask parse_task(const std::string& name) {
  if (name == "copy-locate") return SyntheticTask::kCopyLocate;
  if (name == "marker-span") return SyntheticTask::kMarkerSpan;
  throw ConfigError("unknown synthetic task '" + name + "' (expected copy-locate or marker-span)");
}

const char* task_name(SyntheticTask task) {
  return task == SyntheticTask::kCopyLocate ? "copy-locate" : "marker-span";
}

std::vector<Example> gen_synthetic(SyntheticTask task, std::size_t size, std::uint64_t seed,
                                   const SyntheticOptions& options) {
  if (options.min_length < 3 || options.max_length < options.min_length) {
    throw ConfigError("synthetic data: need 3 <= min_length <= max_length");
  }
  if (task == SyntheticTask::kCopyLocate && options.vocab < options.max_length) {
    throw ConfigError("synthetic data: copy-locate needs vocab >= max_length");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length(options.min_length, options.max_length);
  std::uniform_int_distribution<int> pos_id(0, static_cast<int>(options.pos_vocab) - 1);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < options.vocab; ++i) words.push_back("w" + std::to_string(i));

  std::vector<Example> out;
  out.reserve(size);
  for (std::size_t k = 0; k < size; ++k) {
    Example ex;
    ex.id = std::string(task_name(task)) + "-" + std::to_string(k);
    const std::size_t n = length(rng);
    if (task == SyntheticTask::kCopyLocate) {
      std::vector<std::size_t> order(options.vocab);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i = 0; i < n; ++i) ex.passage.push_back(words[order[i]]);
      const std::size_t at = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      ex.question = {ex.passage[at]};
      ex.answer_begin = ex.answer_end = at;
    } else {
      std::uniform_int_distribution<std::size_t> word(0, options.vocab - 1);
      const std::size_t inner = std::uniform_int_distribution<std::size_t>(1, n - 2)(rng);
      const std::size_t open = std::uniform_int_distribution<std::size_t>(0, n - 2 - inner)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (i == open) ex.passage.push_back("[");
        else if (i == open + inner + 1) ex.passage.push_back("]");
        else ex.passage.push_back(words[word(rng)]);
      }
      ex.question = {"what", "is", "marked"};
      ex.answer_begin = open + 1;
      ex.answer_end = open + inner;
    }
    ex.pos.resize(n);
    for (int& p : ex.pos) p = pos_id(rng);
    ex.ner.assign(n, 0);
    ex.rule.assign(n, 0);
    out.push_back(std::move(ex));
  }
  return out;
}

bool satisfies_rule(SyntheticTask task, const Example& ex) {
  if (!ex.answerable || ex.answer_end >= ex.passage.size() || ex.answer_begin > ex.answer_end) return false;
  if (task == SyntheticTask::kCopyLocate) {
    if (ex.question.size() != 1 || ex.answer_begin != ex.answer_end) return false;
    return std::count(ex.passage.begin(), ex.passage.end(), ex.question[0]) == 1 &&
           ex.passage[ex.answer_begin] == ex.question[0];
  }
  if (ex.answer_begin == 0 || ex.answer_end + 1 >= ex.passage.size()) return false;
  if (ex.passage[ex.answer_begin - 1] != "[" || ex.passage[ex.answer_end + 1] != "]") return false;
  for (std::size_t i = ex.answer_begin; i <= ex.answer_end; ++i) {
    if (ex.passage[i] == "[" || ex.passage[i] == "]") return false;
  }
  return std::count(ex.passage.begin(), ex.passage.end(), "[") == 1 &&
         std::count(ex.passage.begin(), ex.passage.end(), "]") == 1;
}

}  // namespace abanet
