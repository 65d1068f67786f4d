#pragma once

// Beam search over any step scorer, with three stopping regimes:
//
//  - optimal:   stop when the top unfinished hypothesis scores below the
//               best finished one, or a finished hypothesis tops the beam.
//               Sound only for probabilistic scorers, whose per-step log
//               scores are strictly negative (hypothesis scores strictly
//               decrease with length).
//  - shrinking: finished slots are refilled with a duplicate of the top
//               unfinished candidate; search ends when every candidate is
//               finished. The regime raw-score training uses.
//  - maxlen:    run to the length cap and return the best hypothesis that
//               finished along the way.
//
// In the optimal/maxlen regimes the beam always holds the top-b unfinished
// extensions; a finished extension ranking above the b-th unfinished one is
// moved to a best-finished register (mirroring the expel-and-promote rule
// the training search applies to early </eos>). Ties are broken toward the
// lexicographically lower token sequence everywhere, so decoding is fully
// deterministic.

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "beamstop/model.hpp"
#include "beamstop/tensor.hpp"
#include "beamstop/vocab.hpp"

namespace beamstop {

enum class StopMode { optimal, shrinking, maxlen };

inline const char* to_string(StopMode m) {
  switch (m) {
    case StopMode::optimal: return "optimal";
    case StopMode::shrinking: return "shrinking";
    case StopMode::maxlen: return "maxlen";
  }
  return "?";
}

inline StopMode stop_mode_from_string(const std::string& s) {
  if (s == "optimal") return StopMode::optimal;
  if (s == "shrinking") return StopMode::shrinking;
  if (s == "maxlen") return StopMode::maxlen;
  throw std::invalid_argument("unknown stop mode: " + s);
}

template <class State>
struct Hypothesis {
  TokenSequence tokens;  // generated target tokens (start sentinel excluded)
  double score = 0.0;    // cumulative step-score sum
  bool finished = false;
  State state{};
  Tensor score_node;  // cumulative score on the tape (training search)
  bool truncated = false;

  int length() const { return static_cast<int>(tokens.size()); }
};

// Orders by score descending, ties toward the lexicographically lower token
// sequence.
template <class State>
bool hyp_before(const Hypothesis<State>& a, const Hypothesis<State>& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

template <class State>
struct Beam {
  explicit Beam(int width_ = 1) : width(width_) {
    if (width_ < 1) throw std::invalid_argument("beam width must be >= 1");
  }
  std::vector<Hypothesis<State>> candidates;  // sorted, best first
  int width;

  bool empty() const { return candidates.empty(); }
  const Hypothesis<State>& top() const { return candidates.front(); }

  void sort() {
    std::stable_sort(candidates.begin(), candidates.end(),
                     hyp_before<State>);
  }
};

// One candidate extension: parent index into the expanded beam, the new
// token, and the resulting cumulative score.
struct Extension {
  int parent = -1;
  TokenId token = -1;
  double score = 0.0;
};

template <class Scorer>
struct Expansion {
  using State = typename Scorer::State;
  std::vector<int> parents;  // beam indices that were expanded (unfinished)
  std::vector<typename Scorer::StepOut> outs;  // aligned with `parents`
  std::vector<Extension> exts;  // sorted best-first, truncated to k
};

namespace detail {

template <class State>
bool ext_before(const Beam<State>& beam, const Extension& a,
                const Extension& b) {
  if (a.score != b.score) return a.score > b.score;
  const TokenSequence& ta = beam.candidates[static_cast<std::size_t>(a.parent)].tokens;
  const TokenSequence& tb = beam.candidates[static_cast<std::size_t>(b.parent)].tokens;
  const std::size_t na = ta.size(), nb = tb.size();
  for (std::size_t i = 0; i < std::min(na, nb); ++i)
    if (ta[i] != tb[i]) return ta[i] < tb[i];
  if (na != nb) return na < nb;  // same scores, one prefix of the other
  return a.token < b.token;
}

}  // namespace detail

// Top-k successor extensions over all unfinished parents and the whole
// vocabulary, scored by parent.score + step_score(token). The per-parent
// step outputs are kept so callers can materialize chosen extensions (and
// read per-step g values) without recomputing.
template <class Scorer>
Expansion<Scorer> expand(const Beam<typename Scorer::State>& beam,
                         const Scorer& scorer, int k) {
  Expansion<Scorer> out;
  const int v = scorer.vocab_size();
  for (int i = 0; i < static_cast<int>(beam.candidates.size()); ++i) {
    const auto& hyp = beam.candidates[static_cast<std::size_t>(i)];
    if (hyp.finished) continue;
    const TokenId prev = hyp.tokens.empty() ? Vocab::kBos : hyp.tokens.back();
    out.parents.push_back(i);
    out.outs.push_back(scorer.step(hyp.state, prev));
    const auto& scores = out.outs.back().scores;
    for (TokenId t = 0; t < v; ++t)
      out.exts.push_back(Extension{i, t,
                                   hyp.score + scores[static_cast<std::size_t>(t)]});
  }
  if (out.parents.empty())
    throw std::logic_error("expand: no unfinished candidate in the beam");
  std::stable_sort(out.exts.begin(), out.exts.end(),
                   [&beam](const Extension& a, const Extension& b) {
                     return detail::ext_before(beam, a, b);
                   });
  if (k >= 0 && static_cast<std::size_t>(k) < out.exts.size())
    out.exts.resize(static_cast<std::size_t>(k));
  return out;
}

// Builds the hypothesis an extension denotes. The cumulative score tensor is
// chained from the parent's so that, under an active tape, gradients reach
// every step score along the prefix.
template <class Scorer>
Hypothesis<typename Scorer::State> materialize(
    const Beam<typename Scorer::State>& beam, const Expansion<Scorer>& exp,
    const Extension& ext) {
  const auto& parent = beam.candidates[static_cast<std::size_t>(ext.parent)];
  std::size_t slot = 0;
  while (exp.parents[slot] != ext.parent) ++slot;
  const auto& step_out = exp.outs[slot];

  Hypothesis<typename Scorer::State> hyp;
  hyp.tokens = parent.tokens;
  hyp.tokens.push_back(ext.token);
  hyp.score = ext.score;
  hyp.finished = ext.token == Vocab::kEos;
  hyp.state = step_out.next;
  Tensor step_score = pick(step_out.scores, static_cast<std::size_t>(ext.token));
  hyp.score_node = parent.score_node.defined()
                       ? add(parent.score_node, step_score)
                       : step_score;
  return hyp;
}

// The optimal stopping test: true iff the top of the beam is finished, or a
// finished hypothesis exists that outscores the top unfinished candidate.
// Raw-mode scores can grow with length, which voids the criterion.
template <class State>
bool optimal_stop_check(const Beam<State>& beam,
                        const std::optional<Hypothesis<State>>& best_finished,
                        ScorerMode mode) {
  if (mode == ScorerMode::raw)
    throw std::logic_error(
        "optimal stopping is undefined for the raw scorer mode");
  if (beam.empty())
    throw std::logic_error("optimal_stop_check: empty beam");
  if (beam.top().finished) return true;
  if (!best_finished.has_value()) return false;
  for (const auto& hyp : beam.candidates)
    if (!hyp.finished) return hyp.score < best_finished->score;
  return true;  // only finished candidates left
}

template <class State>
struct ShrinkStepResult {
  Beam<State> beam;
  bool terminate = false;  // every candidate was finished
};

// BSO's shrinking-beam rule: every finished slot is refilled with a
// duplicate of the top unfinished candidate; when no unfinished candidate
// remains the search is over.
template <class State>
ShrinkStepResult<State> shrinking_beam_step(const Beam<State>& beam) {
  ShrinkStepResult<State> res{Beam<State>(beam.width), false};
  const Hypothesis<State>* top_unfinished = nullptr;
  for (const auto& hyp : beam.candidates)
    if (!hyp.finished) {
      top_unfinished = &hyp;
      break;
    }
  if (top_unfinished == nullptr) {
    res.beam = beam;
    res.terminate = true;
    return res;
  }
  for (const auto& hyp : beam.candidates)
    res.beam.candidates.push_back(hyp.finished ? *top_unfinished : hyp);
  res.beam.sort();
  return res;
}

template <class State>
struct DecodeResult {
  Hypothesis<State> best;
  bool truncated = false;  // nothing finished within the length cap
};

namespace detail {

template <class State>
void register_finished(std::optional<Hypothesis<State>>& best,
                       const Hypothesis<State>& hyp) {
  if (!best.has_value() || hyp_before(hyp, *best)) best = hyp;
}

}  // namespace detail

// Full beam-search decode. L_max caps the number of steps in every regime
// (raw scores may never self-terminate). Returns the highest-scoring
// finished hypothesis, or the force-terminated top candidate flagged as
// truncated when nothing finished in time.
template <class Scorer>
DecodeResult<typename Scorer::State> decode_with_scorer(const Scorer& scorer,
                                                        int b, StopMode stop,
                                                        int l_max) {
  using State = typename Scorer::State;
  if (b < 1) throw std::invalid_argument("beam size must be >= 1");
  if (l_max < 1) throw std::invalid_argument("L_max must be >= 1");
  const ScorerMode mode = scorer.scorer_mode();
  if (stop == StopMode::optimal && mode == ScorerMode::raw)
    throw std::invalid_argument(
        "optimal stopping requires a probabilistic scorer mode");

  Beam<State> beam(b);
  {
    Hypothesis<State> root;
    root.state = scorer.initial_state();
    beam.candidates.push_back(std::move(root));
  }
  std::optional<Hypothesis<State>> best_finished;

  for (int t = 1; t <= l_max; ++t) {
    if (beam.empty()) break;

    if (stop == StopMode::shrinking) {
      // finished candidates pass through and compete; refill afterwards
      bool any_unfinished = false;
      for (const auto& h : beam.candidates) any_unfinished |= !h.finished;
      if (!any_unfinished) break;
      auto exp = expand(beam, scorer, -1);
      std::vector<Hypothesis<State>> merged;
      for (const auto& h : beam.candidates)
        if (h.finished) merged.push_back(h);
      for (const auto& ext : exp.exts) {
        if (static_cast<int>(merged.size()) >= b + static_cast<int>(beam.candidates.size()))
          break;
        merged.push_back(materialize(beam, exp, ext));
      }
      Beam<State> next(b);
      next.candidates = std::move(merged);
      next.sort();
      if (static_cast<int>(next.candidates.size()) > b)
        next.candidates.resize(static_cast<std::size_t>(b));
      for (const auto& h : next.candidates)
        if (h.finished) detail::register_finished(best_finished, h);
      auto shrunk = shrinking_beam_step(next);
      if (shrunk.terminate) {
        beam = std::move(shrunk.beam);
        break;
      }
      beam = std::move(shrunk.beam);
      continue;
    }

    // optimal / maxlen: beam holds unfinished candidates only
    auto exp = expand(beam, scorer, 2 * b + 2);
    Beam<State> transient(b);
    for (std::size_t i = 0;
         i < exp.exts.size() && static_cast<int>(i) < b; ++i)
      transient.candidates.push_back(materialize(beam, exp, exp.exts[i]));

    if (stop == StopMode::optimal &&
        optimal_stop_check(transient, best_finished, mode)) {
      for (const auto& h : transient.candidates)
        if (h.finished) detail::register_finished(best_finished, h);
      return {*best_finished, false};
    }

    Beam<State> next(b);
    std::size_t idx = 0;
    for (const auto& ext : exp.exts) {
      if (static_cast<int>(next.candidates.size()) >= b) break;
      Hypothesis<State> hyp =
          idx < transient.candidates.size()
              ? transient.candidates[idx]
              : materialize(beam, exp, ext);
      ++idx;
      if (hyp.finished)
        detail::register_finished(best_finished, hyp);
      else
        next.candidates.push_back(std::move(hyp));
    }
    beam = std::move(next);
  }

  if (best_finished.has_value()) return {*best_finished, false};

  // nothing finished: force-terminate the top candidate
  Beam<State>* final_beam = &beam;
  if (final_beam->empty())
    throw std::logic_error("decode: search exhausted without candidates");
  Hypothesis<State> forced = final_beam->top();
  forced.tokens.push_back(Vocab::kEos);
  forced.finished = true;
  forced.truncated = true;
  return {std::move(forced), true};
}

inline int default_length_cap(int src_len) { return 3 * src_len + 10; }

// Model-level decode entry point.
inline DecodeResult<DecoderState> decode(const EncoderDecoder& model,
                                         const TokenSequence& src, int b,
                                         ScorerMode mode, StopMode stop,
                                         int l_max = 0) {
  if (l_max <= 0) l_max = default_length_cap(static_cast<int>(src.size()));
  ModelScorer scorer = make_scorer(model, src, mode);
  return decode_with_scorer(scorer, b, stop, l_max);
}

}  // namespace beamstop
