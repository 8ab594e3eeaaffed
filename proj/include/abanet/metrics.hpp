#pragma once

#include <string>
#include <vector>

namespace abanet {

// Lowercase, drop punctuation, drop the articles a/an/the, collapse spaces.
std::string normalize_answer(const std::string& text);

double exact_match(const std::string& prediction, const std::string& gold);

// Token-bag F1 over normalized tokens. Both empty scores 1; exactly one empty
// scores 0.
double f1_score(const std::string& prediction, const std::string& gold);

struct Scores {
  double em = 0.0;
  double f1 = 0.0;
  std::size_t count = 0;
};

// Macro averages over aligned prediction/gold lists.
Scores score_answers(const std::vector<std::string>& predictions, const std::vector<std::string>& golds);

}  // namespace abanet
