#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace abanet {

// One reading-comprehension instance. Feature ids describe the passage;
// question features are optional and default to id 0. An unanswerable example
// carries the span (last, last).
struct Example {
  std::string id;
  std::vector<std::string> passage;
  std::vector<std::string> question;
  std::vector<int> pos, ner, rule;
  std::vector<int> question_pos, question_ner, question_rule;
  std::size_t answer_begin = 0;
  std::size_t answer_end = 0;
  bool answerable = true;
  std::vector<int> subtokens;

  // Passage tokens answer_begin..answer_end joined by spaces, or "" when
  // unanswerable.
  std::string answer_text() const;
  // Subtoken counts, defaulting to one per passage token.
  std::vector<int> passage_subtokens() const;

  bool operator==(const Example&) const = default;
};

// Throws DataError naming the example id on any invariant violation.
void validate(const Example& ex);

Example example_from_json(const nlohmann::json& j);
nlohmann::json example_to_json(const Example& ex);

// One JSON object per line; blank lines are skipped. Errors carry the line
// number, and span violations also the example id.
std::vector<Example> load_jsonl(const std::filesystem::path& path);
std::vector<Example> parse_jsonl(const std::string& text, const std::string& source = "<string>");
void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples);
std::string to_jsonl(const std::vector<Example>& examples);

enum class SyntheticTask { kCopyLocate, kMarkerSpan };

SyntheticTask parse_task(const std::string& name);
const char* task_name(SyntheticTask task);

struct SyntheticOptions {
  std::size_t min_length = 5;
  std::size_t max_length = 8;
  std::size_t vocab = 40;
  std::size_t pos_vocab = 8;
};

// copy-locate: distinct passage tokens, the question is one of them and the
// answer is its position. marker-span: the answer is the run of tokens
// strictly between the sentinels "[" and "]".
std::vector<Example> gen_synthetic(SyntheticTask task, std::size_t size, std::uint64_t seed,
                                   const SyntheticOptions& options = {});

// Re-derives the gold span of a synthetic example from its generating rule.
bool satisfies_rule(SyntheticTask task, const Example& ex);

}  // namespace abanet
