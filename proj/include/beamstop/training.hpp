#pragma once

// Training procedures: cross-entropy pretraining under teacher forcing,
// beam-search margin training with gold restarts, and the early-stopping
// penalty that expels premature </eos> candidates from the training beam.
//
// Search decisions (which candidates make the beam) are non-differentiable;
// gradients flow only through the score values appearing in active hinges.
// Every loss term is also recorded as a prefix-level trace so the same loss
// can be re-evaluated on a frozen search trajectory (used by the
// finite-difference checks).

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "beamstop/beam.hpp"
#include "beamstop/data.hpp"
#include "beamstop/metrics.hpp"
#include "beamstop/model.hpp"
#include "beamstop/optim.hpp"
#include "beamstop/rng.hpp"
#include "beamstop/tensor.hpp"

namespace beamstop {

struct TrainConfig {
  enum class Mode { ce, bso_raw, bso_sigmoid };

  Mode mode = Mode::ce;
  int train_beam = 4;
  double margin = 1.0;      // sequence-margin constant
  double eos_margin = 0.0;  // early-stop hinge constant (none in the rule)
  double lr = 0.1;
  double lr_decay = 0.5;
  int batch_size = 64;
  int epochs = 20;
  bool early_stop_penalty = true;
  bool scale_augment = true;
  // Margin hinge on cumulative prefix scores (the default) or on the
  // per-step scores of the colliding tokens.
  bool margin_on_cumulative = true;
  std::uint64_t seed = 1;

  bool is_bso() const { return mode != Mode::ce; }

  ScorerMode scorer_mode() const {
    switch (mode) {
      case Mode::ce: return ScorerMode::logsoftmax;
      case Mode::bso_raw: return ScorerMode::raw;
      case Mode::bso_sigmoid: return ScorerMode::sigmoid;
    }
    throw std::logic_error("unreachable train mode");
  }

  void validate() const {
    if (is_bso() && train_beam < 2)
      throw std::invalid_argument(
          "beam training needs train_beam >= 2 (a b-th competitor)");
    if (lr <= 0.0 || lr_decay <= 0.0)
      throw std::invalid_argument("lr and lr_decay must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  }

  // The conventional settings per phase; callers override freely.
  static TrainConfig defaults_for(Mode m) {
    TrainConfig cfg;
    cfg.mode = m;
    if (m == Mode::ce) {
      cfg.lr = 0.1;
      cfg.lr_decay = 0.5;
      cfg.batch_size = 64;
      cfg.epochs = 20;
    } else {
      cfg.lr = 0.01;
      cfg.lr_decay = 0.75;
      cfg.batch_size = 40;
      cfg.epochs = 5;
      cfg.early_stop_penalty = m == Mode::bso_sigmoid;
    }
    return cfg;
  }
};

inline TrainConfig::Mode train_mode_from_string(const std::string& s) {
  if (s == "ce") return TrainConfig::Mode::ce;
  if (s == "bso-raw") return TrainConfig::Mode::bso_raw;
  if (s == "bso-sigmoid") return TrainConfig::Mode::bso_sigmoid;
  throw std::invalid_argument("unknown train mode: " + s);
}

inline const char* to_string(TrainConfig::Mode m) {
  switch (m) {
    case TrainConfig::Mode::ce: return "ce";
    case TrainConfig::Mode::bso_raw: return "bso-raw";
    case TrainConfig::Mode::bso_sigmoid: return "bso-sigmoid";
  }
  return "?";
}

struct ViolationRecord {
  enum class Kind { margin, early_eos, final_step };
  int t = 0;
  Kind kind = Kind::margin;
  double loss_value = 0.0;
  double delta_scale = 1.0;
};

struct TrainStepReport {
  double margin_loss = 0.0;      // sequence-margin loss of the sentence
  double early_stop_loss = 0.0;  // early-</eos> penalty of the sentence
  int restarts = 0;
  std::vector<ViolationRecord> violations;
  bool skipped = false;     // gold longer than the search length cap
  int missing_bplus1 = 0;   // pool too small for the b+1-th reference
};

// One recorded loss term, stated purely in terms of token prefixes so the
// loss can be recomputed with perturbed parameters while the search path
// stays pinned.
struct TraceTerm {
  ViolationRecord::Kind kind = ViolationRecord::Kind::margin;
  double delta = 1.0;
  bool cumulative = true;  // hinge on cumulative vs per-step scores
  TokenSequence offender;  // competitor / early-</eos> prefix (length t)
  TokenSequence anchor;    // gold prefix / b+1-th candidate prefix
};

struct TrainTrajectory {
  double margin = 1.0;
  double eos_margin = 0.0;
  std::vector<TraceTerm> terms;
};

// --------------------------------------------------------------------------
// Cross-entropy pretraining (teacher forcing)
// --------------------------------------------------------------------------

inline Tensor cross_entropy_loss(const EncoderDecoder& model,
                                 const TokenSequence& src,
                                 const TokenSequence& gold, bool train = false,
                                 Rng* drop_rng = nullptr) {
  if (gold.empty() || gold.back() != Vocab::kEos)
    throw std::invalid_argument(
        "cross_entropy_loss: gold must end with </eos>");
  EncodedSource enc = model.encode(src, train, drop_rng);
  DecoderState state = model.initial_state(enc);
  TokenId prev = Vocab::kBos;
  Tensor total;
  for (TokenId tok : gold) {
    auto [raw, next] = model.decode_step(enc, state, prev, train, drop_rng);
    Tensor lp = pick(log_softmax(raw), static_cast<std::size_t>(tok));
    total = total.defined() ? add(total, lp) : lp;
    state = std::move(next);
    prev = tok;
  }
  return neg(total);
}

// --------------------------------------------------------------------------
// The two loss rules, in plain arithmetic
// --------------------------------------------------------------------------

// delta * (margin + bth_score - gold_score)^+ on whatever score domain the
// caller passes (cumulative prefix scores by default).
inline double bso_margin_loss(double gold_score_t, double bth_score_t,
                              double delta, double margin = 1.0) {
  if (delta < 0.0 || delta > 1.0)
    throw std::invalid_argument("bso_margin_loss: delta must lie in [0,1]");
  const double z = margin + bth_score_t - gold_score_t;
  return delta * (z > 0.0 ? z : 0.0);
}

// One ranked candidate of an expansion pool at some step.
struct StepCandidate {
  TokenId token = -1;
  double step_g = 0.0;  // per-step probability-domain score of the token
};

// Sum over early </eos> candidates in the top b of (g_eos - g_{b+1})^+,
// computed on per-step g values. Only meaningful before the gold reference
// finishes. A pool without a b+1-th entry contributes nothing and bumps the
// diagnostic counter.
inline double early_stop_penalty(const std::vector<StepCandidate>& pool, int b,
                                 int t, int gold_len, double eos_margin = 0.0,
                                 int* missing_bplus1 = nullptr) {
  if (t >= gold_len)
    throw std::invalid_argument(
        "early_stop_penalty: only defined before the gold reference finishes");
  if (static_cast<int>(pool.size()) < b + 1) {
    bool any_eos = false;
    for (int j = 0; j < static_cast<int>(pool.size()) && j < b; ++j)
      any_eos = any_eos || pool[static_cast<std::size_t>(j)].token == Vocab::kEos;
    if (any_eos && missing_bplus1 != nullptr) ++*missing_bplus1;
    return 0.0;
  }
  const double g_ref = pool[static_cast<std::size_t>(b)].step_g;
  double total = 0.0;
  for (int j = 0; j < b; ++j) {
    const auto& cand = pool[static_cast<std::size_t>(j)];
    if (cand.token != Vocab::kEos) continue;
    const double z = eos_margin + cand.step_g - g_ref;
    if (z > 0.0) total += z;
  }
  return total;
}

// --------------------------------------------------------------------------
// Beam training search
// --------------------------------------------------------------------------

namespace detail {

template <class Scorer>
Tensor per_step_score(const Expansion<Scorer>& exp, const Extension& ext) {
  std::size_t slot = 0;
  while (exp.parents[slot] != ext.parent) ++slot;
  return pick(exp.outs[slot].scores, static_cast<std::size_t>(ext.token));
}

template <class Scorer>
const typename Scorer::StepOut& step_out_of(const Expansion<Scorer>& exp,
                                            int parent) {
  std::size_t slot = 0;
  while (exp.parents[slot] != parent) ++slot;
  return exp.outs[slot];
}

inline Tensor acc(Tensor sum, Tensor term) {
  return sum.defined() ? add(sum, term) : term;
}

}  // namespace detail

// Runs the width-b training search over one sentence, accumulating the
// margin loss and the early-stopping penalty as tensors. Works on any
// scorer (tests drive it with scripted score tables). Search procedure per
// step t:
//   1. expand every beam candidate over the full vocabulary (the gold-prefix
//      candidate is in the beam by construction, so its extension is in the
//      pool);
//   2. before the gold finishes, every </eos> in the top b accrues the
//      early-stop hinge against the b+1-th pool candidate and is expelled,
//      the next-best unfinished candidate taking its slot;
//   3. if the gold prefix fell out of the top b, accrue the margin hinge
//      against the b-th candidate and restart the beam from the gold prefix;
//   4. at t = |gold|, force gold above the highest incorrect candidate by
//      the margin.
template <class Scorer>
TrainStepReport bso_sentence_losses(
    const Scorer& scorer, const TokenSequence& gold, const TrainConfig& cfg,
    Tensor* total_out, TrainTrajectory* traj = nullptr,
    const std::function<void(int, const Beam<typename Scorer::State>&, int)>&
        observer = nullptr) {
  using State = typename Scorer::State;
  if (gold.empty() || gold.back() != Vocab::kEos)
    throw std::invalid_argument("beam training: gold must end with </eos>");
  const int b = cfg.train_beam;
  const int T = static_cast<int>(gold.size());

  TrainStepReport report;
  if (traj != nullptr) {
    traj->margin = cfg.margin;
    traj->eos_margin = cfg.eos_margin;
    traj->terms.clear();
  }
  Tensor margin_acc, eos_acc;

  Beam<State> beam(b);
  {
    Hypothesis<State> root;
    root.state = scorer.initial_state();
    beam.candidates.push_back(std::move(root));
  }
  int gold_pos = 0;

  for (int t = 1; t <= T; ++t) {
    auto exp = expand(beam, scorer, -1);
    const TokenId gold_tok = gold[static_cast<std::size_t>(t - 1)];
    auto is_gold_ext = [&](const Extension& e) {
      return e.parent == gold_pos && e.token == gold_tok;
    };

    if (t == T) {
      // final step: gold emits </eos>; its sequence score must beat the
      // highest incorrect candidate by the margin
      const Extension* gold_ext = nullptr;
      const Extension* incorrect = nullptr;
      for (const auto& e : exp.exts) {
        if (is_gold_ext(e) && gold_ext == nullptr) gold_ext = &e;
        else if (incorrect == nullptr) incorrect = &e;
        if (gold_ext && incorrect) break;
      }
      if (gold_ext == nullptr)
        throw std::logic_error("beam training: gold extension missing");
      if (incorrect != nullptr) {
        auto gold_hyp = materialize(beam, exp, *gold_ext);
        auto inc_hyp = materialize(beam, exp, *incorrect);
        double delta = 1.0;
        if (cfg.scale_augment) {
          delta = 1.0 - sentence_bleu_prefix(inc_hyp.tokens, gold_hyp.tokens);
          delta = std::min(1.0, std::max(0.0, delta));
        }
        Tensor z = add_scalar(sub(inc_hyp.score_node, gold_hyp.score_node),
                              cfg.margin);
        Tensor term = mul_scalar(relu_plus(z), delta);
        margin_acc = detail::acc(margin_acc, term);
        if (term.item() > 0.0)
          report.violations.push_back({t, ViolationRecord::Kind::final_step,
                                       term.item(), delta});
        if (traj != nullptr)
          traj->terms.push_back({ViolationRecord::Kind::final_step, delta,
                                 true, inc_hyp.tokens, gold_hyp.tokens});
      }
      break;
    }

    // early-</eos> handling among the top b of the pool
    const bool have_bplus1 = static_cast<int>(exp.exts.size()) >= b + 1;
    for (int j = 0; j < b && j < static_cast<int>(exp.exts.size()); ++j) {
      const auto& e = exp.exts[static_cast<std::size_t>(j)];
      if (e.token != Vocab::kEos) continue;
      if (!cfg.early_stop_penalty) continue;
      if (!have_bplus1) {
        ++report.missing_bplus1;
        continue;
      }
      const auto& ref = exp.exts[static_cast<std::size_t>(b)];
      Tensor g_eos =
          scorer.step_g(detail::step_out_of(exp, e.parent), e.token);
      Tensor g_ref =
          scorer.step_g(detail::step_out_of(exp, ref.parent), ref.token);
      Tensor q = relu_plus(add_scalar(sub(g_eos, g_ref), cfg.eos_margin));
      eos_acc = detail::acc(eos_acc, q);
      if (q.item() > 0.0)
        report.violations.push_back(
            {t, ViolationRecord::Kind::early_eos, q.item(), 1.0});
      if (traj != nullptr) {
        TraceTerm term;
        term.kind = ViolationRecord::Kind::early_eos;
        term.cumulative = false;
        term.offender = beam.candidates[static_cast<std::size_t>(e.parent)].tokens;
        term.offender.push_back(e.token);
        term.anchor = beam.candidates[static_cast<std::size_t>(ref.parent)].tokens;
        term.anchor.push_back(ref.token);
        traj->terms.push_back(std::move(term));
      }
    }

    // expel </eos>, promote next-best: the beam keeps the top-b unfinished
    Beam<State> next(b);
    int new_gold_pos = -1;
    const Extension* gold_ext = nullptr;
    for (const auto& e : exp.exts) {
      if (is_gold_ext(e)) gold_ext = &e;
      if (static_cast<int>(next.candidates.size()) >= b) {
        if (gold_ext != nullptr) break;
        continue;  // keep scanning only to locate the gold extension
      }
      if (e.token == Vocab::kEos) continue;
      if (is_gold_ext(e))
        new_gold_pos = static_cast<int>(next.candidates.size());
      next.candidates.push_back(materialize(beam, exp, e));
    }

    if (new_gold_pos < 0) {
      // gold fell out of the beam: margin violation against the b-th
      // candidate, then restart from the gold prefix
      if (gold_ext == nullptr)
        throw std::logic_error("beam training: gold extension missing");
      auto gold_hyp = materialize(beam, exp, *gold_ext);
      const auto& bth = next.candidates.back();
      double delta = 1.0;
      if (cfg.scale_augment) {
        delta = 1.0 - sentence_bleu_prefix(bth.tokens, gold_hyp.tokens);
        delta = std::min(1.0, std::max(0.0, delta));
      }
      Tensor z;
      if (cfg.margin_on_cumulative) {
        z = add_scalar(sub(bth.score_node, gold_hyp.score_node), cfg.margin);
      } else {
        // per-step variant: hinge on the two tokens' step scores
        const Extension* bth_ext = nullptr;
        int seen = 0;
        for (const auto& e : exp.exts) {
          if (e.token == Vocab::kEos) continue;
          if (++seen == static_cast<int>(next.candidates.size())) {
            bth_ext = &e;
            break;
          }
        }
        Tensor bth_step = detail::per_step_score(exp, *bth_ext);
        Tensor gold_step = detail::per_step_score(exp, *gold_ext);
        z = add_scalar(sub(bth_step, gold_step), cfg.margin);
      }
      Tensor term = mul_scalar(relu_plus(z), delta);
      margin_acc = detail::acc(margin_acc, term);
      if (term.item() > 0.0)
        report.violations.push_back(
            {t, ViolationRecord::Kind::margin, term.item(), delta});
      if (traj != nullptr)
        traj->terms.push_back({ViolationRecord::Kind::margin, delta,
                               cfg.margin_on_cumulative, bth.tokens,
                               gold_hyp.tokens});
      ++report.restarts;
      Beam<State> restart(b);
      restart.candidates.push_back(std::move(gold_hyp));
      beam = std::move(restart);
      gold_pos = 0;
    } else {
      beam = std::move(next);
      gold_pos = new_gold_pos;
    }
    if (observer) observer(t, beam, gold_pos);
  }

  report.margin_loss = margin_acc.defined() ? margin_acc.item() : 0.0;
  report.early_stop_loss = eos_acc.defined() ? eos_acc.item() : 0.0;
  Tensor total = margin_acc.defined() ? margin_acc : Tensor();
  if (eos_acc.defined()) total = detail::acc(total, eos_acc);
  if (total_out != nullptr) *total_out = total;
  return report;
}

// One sentence of beam training on a real model: runs the search on a fresh
// tape, backpropagates margin + early-stop loss (scaled by loss_scale, for
// batch averaging), and steps the optimizer when one is given. Sentences
// longer than the search length cap are skipped with a diagnostic.
inline TrainStepReport beam_train_step(EncoderDecoder& model,
                                       const TokenSequence& src,
                                       const TokenSequence& gold,
                                       const TrainConfig& cfg,
                                       Adagrad* opt = nullptr,
                                       double loss_scale = 1.0,
                                       TrainTrajectory* traj = nullptr) {
  cfg.validate();
  if (!cfg.is_bso())
    throw std::invalid_argument("beam_train_step: cfg.mode must be a BSO mode");
  if (static_cast<int>(gold.size()) >
      default_length_cap(static_cast<int>(src.size()))) {
    TrainStepReport r;
    r.skipped = true;
    return r;
  }
  Tape tape;
  ModelScorer scorer{&model, model.encode(src), cfg.scorer_mode()};
  Tensor total;
  TrainStepReport report =
      bso_sentence_losses(scorer, gold, cfg, &total, traj);
  if (total.defined() && total.requires_grad() && total.item() > 0.0) {
    Tensor scaled =
        loss_scale == 1.0 ? total : mul_scalar(total, loss_scale);
    backward(scaled);
  }
  if (opt != nullptr) opt->step();
  return report;
}

// Validation-side loss: the same search without tape or updates.
inline TrainStepReport beam_search_eval(const EncoderDecoder& model,
                                        const TokenSequence& src,
                                        const TokenSequence& gold,
                                        const TrainConfig& cfg) {
  ModelScorer scorer{&model, model.encode(src), cfg.scorer_mode()};
  return bso_sentence_losses(scorer, gold, cfg, nullptr, nullptr);
}

// --------------------------------------------------------------------------
// Frozen-trajectory replay
// --------------------------------------------------------------------------

// Recomputes the recorded loss terms with the current parameters, keeping
// the search path pinned. Prefix states are cached so shared prefixes are
// evaluated once.
inline Tensor replay_trajectory_loss(const EncoderDecoder& model,
                                     const TokenSequence& src,
                                     const TrainTrajectory& traj,
                                     ScorerMode mode) {
  ModelScorer scorer{&model, model.encode(src), mode};

  struct Entry {
    DecoderState state;
    Tensor cum;                 // cumulative score of the prefix
    ModelScorer::StepOut last;  // the step output that scored tokens.back()
  };
  std::map<TokenSequence, Entry> memo;
  memo[{}] = Entry{scorer.initial_state(), Tensor(), {}};

  std::function<const Entry&(const TokenSequence&)> eval =
      [&](const TokenSequence& prefix) -> const Entry& {
    auto it = memo.find(prefix);
    if (it != memo.end()) return it->second;
    TokenSequence parent(prefix.begin(), prefix.end() - 1);
    const Entry& pe = eval(parent);
    const TokenId prev = parent.empty() ? Vocab::kBos : parent.back();
    Entry e;
    e.last = scorer.step(pe.state, prev);
    e.state = e.last.next;
    Tensor step =
        pick(e.last.scores, static_cast<std::size_t>(prefix.back()));
    e.cum = pe.cum.defined() ? add(pe.cum, step) : step;
    return memo.emplace(prefix, std::move(e)).first->second;
  };

  Tensor margin_acc, eos_acc;
  for (const auto& term : traj.terms) {
    const Entry& off = eval(term.offender);
    const Entry& anc = eval(term.anchor);
    if (term.kind == ViolationRecord::Kind::early_eos) {
      Tensor g_off = scorer.step_g(off.last, term.offender.back());
      Tensor g_anc = scorer.step_g(anc.last, term.anchor.back());
      Tensor q = relu_plus(add_scalar(sub(g_off, g_anc), traj.eos_margin));
      eos_acc = detail::acc(eos_acc, q);
    } else {
      Tensor off_score =
          term.cumulative
              ? off.cum
              : pick(off.last.scores,
                     static_cast<std::size_t>(term.offender.back()));
      Tensor anc_score =
          term.cumulative
              ? anc.cum
              : pick(anc.last.scores,
                     static_cast<std::size_t>(term.anchor.back()));
      Tensor z = add_scalar(sub(off_score, anc_score), traj.margin);
      Tensor t2 = mul_scalar(relu_plus(z), term.delta);
      margin_acc = detail::acc(margin_acc, t2);
    }
  }
  Tensor total = margin_acc.defined() ? margin_acc : Tensor();
  if (eos_acc.defined()) total = detail::acc(total, eos_acc);
  return total.defined() ? total : Tensor::scalar(0.0);
}

// --------------------------------------------------------------------------
// Epoch loop
// --------------------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  double train_margin_loss = 0.0;  // CE loss in this column for ce mode
  double train_earlystop_loss = 0.0;
  double restarts_per_sentence = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

inline void append_metrics_csv(const std::string& path,
                               const EpochMetrics& m) {
  const bool fresh = [&] {
    std::ifstream probe(path);
    return !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
  }();
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append metrics CSV: " + path);
  if (fresh)
    out << "epoch,train_margin_loss,train_earlystop_loss,"
           "restarts_per_sentence,val_loss,lr\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.8g\n", m.epoch,
                m.train_margin_loss, m.train_earlystop_loss,
                m.restarts_per_sentence, m.val_loss, m.lr);
  out << buf;
}

// Iterates epochs over the shuffled corpus, accumulating gradients over
// batch_size sentences per optimizer step. The learning rate is multiplied
// by lr_decay whenever the validation loss fails to improve.
inline std::vector<EpochMetrics> train(EncoderDecoder& model,
                                       const ParallelCorpus& train_corpus,
                                       const ParallelCorpus& valid_corpus,
                                       const TrainConfig& cfg,
                                       const std::string& metrics_csv = "",
                                       std::ostream* log = nullptr) {
  cfg.validate();
  if (train_corpus.pairs.empty())
    throw std::invalid_argument("train: empty training corpus");

  Adagrad opt(model.params(), cfg.lr);
  SeedSplitter split(cfg.seed);
  Rng shuffle_rng = split.stream("train.shuffle");
  Rng dropout_rng = split.stream("train.dropout");

  std::vector<EpochMetrics> history;
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_corpus.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0, eos_sum = 0.0;
    long restarts = 0, used = 0;

    std::size_t i = 0;
    while (i < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(batch_end - i);
      for (; i < batch_end; ++i) {
        const auto& pair = train_corpus.pairs[order[i]];
        if (cfg.mode == TrainConfig::Mode::ce) {
          Tape tape;
          Tensor loss = cross_entropy_loss(model, pair.src, pair.tgt,
                                           /*train=*/true, &dropout_rng);
          loss_sum += loss.item();
          Tensor scaled = mul_scalar(loss, scale);
          backward(scaled);
          ++used;
        } else {
          TrainStepReport rep =
              beam_train_step(model, pair.src, pair.tgt, cfg, nullptr, scale);
          if (rep.skipped) continue;
          loss_sum += rep.margin_loss;
          eos_sum += rep.early_stop_loss;
          restarts += rep.restarts;
          ++used;
        }
      }
      opt.step();
    }

    // validation loss, no updates
    double val_sum = 0.0;
    for (const auto& pair : valid_corpus.pairs) {
      if (cfg.mode == TrainConfig::Mode::ce) {
        val_sum += cross_entropy_loss(model, pair.src, pair.tgt).item();
      } else {
        TrainStepReport rep = beam_search_eval(model, pair.src, pair.tgt, cfg);
        val_sum += rep.margin_loss + rep.early_stop_loss;
      }
    }
    const double denom = used > 0 ? static_cast<double>(used) : 1.0;
    EpochMetrics m;
    m.epoch = epoch;
    m.train_margin_loss = loss_sum / denom;
    m.train_earlystop_loss = eos_sum / denom;
    m.restarts_per_sentence = static_cast<double>(restarts) / denom;
    m.val_loss = valid_corpus.pairs.empty()
                     ? 0.0
                     : val_sum / static_cast<double>(valid_corpus.pairs.size());
    if (!valid_corpus.pairs.empty()) {
      if (m.val_loss >= best_val) opt.decay_lr(cfg.lr_decay);
      best_val = std::min(best_val, m.val_loss);
    }
    m.lr = opt.lr();
    history.push_back(m);
    if (!metrics_csv.empty()) append_metrics_csv(metrics_csv, m);
    if (log != nullptr)
      *log << "epoch " << epoch << " train_loss " << m.train_margin_loss
           << " earlystop " << m.train_earlystop_loss << " restarts/sent "
           << m.restarts_per_sentence << " val_loss " << m.val_loss << " lr "
           << m.lr << "\n";
  }
  return history;
}

}  // namespace beamstop
