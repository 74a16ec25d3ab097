#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "plab/corpus.hpp"
#include "plab/rng.hpp"

namespace plab::test {

// Second BLEU implementation, written straight from the definition with
// string-keyed n-gram maps.
inline double reference_bleu(const std::string& cand, const std::string& ref) {
  const auto c = split_words(cand), r = split_words(ref);
  if (c.empty()) return 0.0;
  const auto grams = [](const std::vector<std::string>& w, std::size_t n) {
    std::map<std::string, int> out;
    for (std::size_t i = 0; i + n <= w.size(); ++i) {
      std::string key;
      for (std::size_t j = i; j < i + n; ++j) key += w[j] + "\x1f";
      ++out[key];
    }
    return out;
  };
  double log_sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cg = grams(c, n), rg = grams(r, n);
    int match = 0, total = 0;
    for (const auto& [g, cnt] : cg) {
      total += cnt;
      const auto it = rg.find(g);
      if (it != rg.end()) match += std::min(cnt, it->second);
    }
    double p;
    if (match > 0) {
      p = static_cast<double>(match) / total;
    } else if (n == 1) {
      return 0.0;
    } else {
      p = 1.0 / (total + 1.0);
    }
    log_sum += std::log(p) / 4.0;
  }
  const double bp = c.size() < r.size() ? std::exp(1.0 - static_cast<double>(r.size()) / c.size()) : 1.0;
  return 100.0 * bp * std::exp(log_sum);
}

/// Up to 11 words from a 10-word pool, mixed case.
inline std::string random_sentence(Rng& rng) {
  static const char* words[] = {"the", "a", "cat", "dog", "sat", "ran", "on", "mat", "Red", "blue"};
  std::string s;
  const std::size_t n = rng.uniform_int(12);
  for (std::size_t i = 0; i < n; ++i) s += std::string(i ? " " : "") + words[rng.uniform_int(10)];
  return s;
}

}  // namespace plab::test
