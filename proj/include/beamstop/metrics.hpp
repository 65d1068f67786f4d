#pragma once

// BLEU and length-ratio evaluation. Corpus BLEU is reported on the 0-100
// scale; the sentence-level prefix BLEU used for loss scaling lives on 0-1.
// Token sequences are compared as vocabulary ids; </eos> is excluded from
// all counts.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "beamstop/vocab.hpp"

namespace beamstop {

struct EvalReport {
  double corpus_bleu = 0.0;    // 0..100
  double len_ratio_ref = 0.0;  // sum |y| / sum |y*|
  double len_ratio_src = 0.0;  // sum |y| / sum |x|
  int sentence_count = 0;
};

namespace detail {

inline TokenSequence strip_token(const TokenSequence& s, TokenId drop) {
  TokenSequence out;
  out.reserve(s.size());
  for (TokenId t : s)
    if (t != drop) out.push_back(t);
  return out;
}

// n-gram counts of orders 1..max_n, keyed by the n-gram itself.
inline std::map<TokenSequence, long> ngram_counts(const TokenSequence& s,
                                                  int n) {
  std::map<TokenSequence, long> counts;
  if (static_cast<int>(s.size()) >= n)
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
      ++counts[TokenSequence(s.begin() + static_cast<long>(i),
                             s.begin() + static_cast<long>(i) + n)];
  return counts;
}

}  // namespace detail

// Standard corpus BLEU: geometric mean of clipped n-gram precisions
// (n = 1..4) times the brevity penalty exp(min(0, 1 - r/c)). With multiple
// references, clipping uses the per-n-gram maximum across references and r
// accumulates the reference length closest to the hypothesis length (ties
// resolved toward the shorter reference). Orders for which the hypothesis
// side has no n-grams at all are left out of the geometric mean; an order
// with n-grams but zero matches makes the score 0.
inline double corpus_bleu(const std::vector<TokenSequence>& hyps,
                          const std::vector<std::vector<TokenSequence>>& refs,
                          TokenId eos_id = Vocab::kEos) {
  if (hyps.empty()) throw std::invalid_argument("corpus_bleu: no hypotheses");
  if (hyps.size() != refs.size())
    throw std::invalid_argument(
        "corpus_bleu: hypothesis/reference count mismatch: " +
        std::to_string(hyps.size()) + " vs " + std::to_string(refs.size()));
  constexpr int kMaxOrder = 4;
  long matches[kMaxOrder] = {0, 0, 0, 0};
  long totals[kMaxOrder] = {0, 0, 0, 0};
  long hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty())
      throw std::invalid_argument("corpus_bleu: sentence " + std::to_string(i) +
                                  " has no references");
    const TokenSequence hyp = detail::strip_token(hyps[i], eos_id);
    std::vector<TokenSequence> rs;
    rs.reserve(refs[i].size());
    for (const auto& r : refs[i]) rs.push_back(detail::strip_token(r, eos_id));

    hyp_len += static_cast<long>(hyp.size());
    long best_r = static_cast<long>(rs[0].size());
    for (const auto& r : rs) {
      const long rl = static_cast<long>(r.size());
      const long c = static_cast<long>(hyp.size());
      if (std::labs(rl - c) < std::labs(best_r - c) ||
          (std::labs(rl - c) == std::labs(best_r - c) && rl < best_r))
        best_r = rl;
    }
    ref_len += best_r;

    for (int n = 1; n <= kMaxOrder; ++n) {
      auto hyp_counts = detail::ngram_counts(hyp, n);
      std::map<TokenSequence, long> ref_max;
      for (const auto& r : rs)
        for (const auto& [gram, c] : detail::ngram_counts(r, n))
          ref_max[gram] = std::max(ref_max[gram], c);
      for (const auto& [gram, c] : hyp_counts) {
        totals[n - 1] += c;
        auto it = ref_max.find(gram);
        if (it != ref_max.end()) matches[n - 1] += std::min(c, it->second);
      }
    }
  }
  double log_prec_sum = 0.0;
  int orders_used = 0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (totals[n] == 0) continue;  // no n-grams of this order exist at all
    ++orders_used;
    if (matches[n] == 0) return 0.0;
    log_prec_sum += std::log(static_cast<double>(matches[n]) /
                             static_cast<double>(totals[n]));
  }
  if (orders_used == 0 || hyp_len == 0) return 0.0;
  const double bp =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) /
                                       static_cast<double>(hyp_len)));
  return 100.0 * bp * std::exp(log_prec_sum / orders_used);
}

// Smoothed sentence-level BLEU on [0,1] for the loss scale term. Orders up
// to 4; unigram precision is unsmoothed so disjoint prefixes score 0, while
// higher orders use add-one smoothing so short prefixes are not annihilated.
inline double sentence_bleu_prefix(const TokenSequence& hyp,
                                   const TokenSequence& gold) {
  if (hyp.empty() || gold.empty())
    throw std::invalid_argument("sentence_bleu_prefix: empty input");
  constexpr int kMaxOrder = 4;
  double log_prec_sum = 0.0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    auto hyp_counts = detail::ngram_counts(hyp, n);
    auto gold_counts = detail::ngram_counts(gold, n);
    long match = 0, total = 0;
    for (const auto& [gram, c] : hyp_counts) {
      total += c;
      auto it = gold_counts.find(gram);
      if (it != gold_counts.end()) match += std::min(c, it->second);
    }
    double p;
    if (n == 1) {
      if (total == 0) return 0.0;
      p = static_cast<double>(match) / static_cast<double>(total);
      if (p == 0.0) return 0.0;
    } else {
      p = static_cast<double>(match + 1) / static_cast<double>(total + 1);
    }
    log_prec_sum += std::log(p);
  }
  const double bp =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(gold.size()) /
                                       static_cast<double>(hyp.size())));
  const double bleu = bp * std::exp(log_prec_sum / kMaxOrder);
  return std::min(1.0, std::max(0.0, bleu));
}

// Both length-ratio variants: hypothesis/reference (closest reference length
// per sentence) and hypothesis/source.
inline std::pair<double, double> length_ratios(
    const std::vector<TokenSequence>& hyps,
    const std::vector<std::vector<TokenSequence>>& refs,
    const std::vector<TokenSequence>& srcs, TokenId eos_id = Vocab::kEos) {
  if (hyps.size() != refs.size() || hyps.size() != srcs.size())
    throw std::invalid_argument("length_ratios: misaligned corpus sizes");
  long hyp_len = 0, ref_len = 0, src_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const long c =
        static_cast<long>(detail::strip_token(hyps[i], eos_id).size());
    hyp_len += c;
    long best_r = 0;
    bool first = true;
    for (const auto& r : refs[i]) {
      const long rl = static_cast<long>(detail::strip_token(r, eos_id).size());
      if (first || std::labs(rl - c) < std::labs(best_r - c) ||
          (std::labs(rl - c) == std::labs(best_r - c) && rl < best_r)) {
        best_r = rl;
        first = false;
      }
    }
    ref_len += best_r;
    src_len += static_cast<long>(detail::strip_token(srcs[i], eos_id).size());
  }
  return {static_cast<double>(hyp_len) / static_cast<double>(ref_len),
          static_cast<double>(hyp_len) / static_cast<double>(src_len)};
}

}  // namespace beamstop
