#include "abanet/metrics.hpp"

#include <cctype>
#include <sstream>
#include <unordered_map>

#include "abanet/errors.hpp"

namespace abanet {

namespace {

std::vector<std::string> normalized_tokens(const std::string& text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    lowered += static_cast<char>(std::tolower(c));
  }
  std::istringstream in(lowered);
  std::vector<std::string> tokens;
  std::string t;
  while (in >> t) {
    if (t == "a" || t == "an" || t == "the") continue;
    tokens.push_back(t);
  }
  return tokens;
}

}  // namespace

std::string normalize_answer(const std::string& text) {
  std::string out;
  for (const auto& t : normalized_tokens(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

double exact_match(const std::string& prediction, const std::string& gold) {
  return normalize_answer(prediction) == normalize_answer(gold) ? 1.0 : 0.0;
}

double f1_score(const std::string& prediction, const std::string& gold) {
  const auto p = normalized_tokens(prediction);
  const auto g = normalized_tokens(gold);
  if (p.empty() || g.empty()) return p.empty() && g.empty() ? 1.0 : 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

Scores score_answers(const std::vector<std::string>& predictions, const std::vector<std::string>& golds) {
  if (predictions.size() != golds.size()) throw DataError("score_answers: prediction and gold counts differ");
  if (predictions.empty()) throw DataError("cannot evaluate an empty dataset");
  Scores s;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    s.em += exact_match(predictions[i], golds[i]);
    s.f1 += f1_score(predictions[i], golds[i]);
  }
  s.count = predictions.size();
  s.em /= static_cast<double>(s.count);
  s.f1 /= static_cast<double>(s.count);
  return s;
}

}  // namespace abanet
