#pragma once

// Encoder-decoder scoring function. The encoder/decoder are stacked GRUs
// (optionally bidirectional encoder, optional dot attention); the decoder
// produces a raw score per vocabulary word at each step, which the scorer
// wrappers turn into raw / log-softmax / log-sigmoid step scores.

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "beamstop/checkpoint.hpp"
#include "beamstop/optim.hpp"
#include "beamstop/rng.hpp"
#include "beamstop/tensor.hpp"
#include "beamstop/vocab.hpp"

namespace beamstop {

enum class ScorerMode { raw, logsoftmax, sigmoid };

inline const char* to_string(ScorerMode m) {
  switch (m) {
    case ScorerMode::raw: return "raw";
    case ScorerMode::logsoftmax: return "logsoftmax";
    case ScorerMode::sigmoid: return "sigmoid";
  }
  return "?";
}

inline ScorerMode scorer_mode_from_string(const std::string& s) {
  if (s == "raw") return ScorerMode::raw;
  if (s == "logsoftmax") return ScorerMode::logsoftmax;
  if (s == "sigmoid") return ScorerMode::sigmoid;
  throw std::invalid_argument("unknown scorer mode: " + s);
}

enum class CellKind { lstm, gru };

inline const char* to_string(CellKind c) {
  return c == CellKind::lstm ? "lstm" : "gru";
}

inline CellKind cell_kind_from_string(const std::string& s) {
  if (s == "lstm") return CellKind::lstm;
  if (s == "gru") return CellKind::gru;
  throw std::invalid_argument("unknown cell kind: " + s);
}

struct ModelConfig {
  int embed_dim = 64;
  int hidden_dim = 64;
  int enc_layers = 1;
  int dec_layers = 1;
  bool bidirectional_encoder = false;
  bool attention = true;
  double dropout = 0.0;
  // LSTM by default: the counting behavior this task needs requires an
  // additive cell state; a plain GRU saturates into a fixed point on long
  // outputs.
  CellKind cell = CellKind::lstm;

  void validate() const {
    if (embed_dim <= 0 || hidden_dim <= 0 || enc_layers <= 0 || dec_layers <= 0)
      throw std::invalid_argument("model dimensions must be positive");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("dropout must lie in [0,1)");
  }
};

// Per-position encoder states (the N-by-D matrix the decoder attends over)
// plus the final state used to initialize the decoder.
struct EncodedSource {
  Tensor states;       // [N, D], D = hidden * (2 if bidirectional else 1)
  Tensor states_t;     // [D, N], cached transpose for the attention context
  Tensor final_state;  // [D, 1]
  int n = 0;
};

struct DecoderState {
  std::vector<Tensor> h;  // one hidden vector per decoder layer
  std::vector<Tensor> c;  // LSTM cell states; empty for GRU models
};

// Trainable scalar of the sigmoid scoring rule g = (1 + e^{w f})^{-1}.
// Initialized to -1 so that larger raw scores map to larger probabilities,
// preserving the pretrained ranking when the softmax layer is swapped out.
struct SigmoidScorer {
  Tensor w;
};

// g in log domain for every word: log g = -softplus(w * f).
inline Tensor score_step(const Tensor& raw, ScorerMode mode,
                         const SigmoidScorer& sig) {
  switch (mode) {
    case ScorerMode::raw: return raw;
    case ScorerMode::logsoftmax: return log_softmax(raw);
    case ScorerMode::sigmoid: return neg(softplus(mul(raw, sig.w)));
  }
  throw std::logic_error("unreachable scorer mode");
}

namespace detail {

struct RnnState {
  Tensor h;
  Tensor c;  // LSTM only
};

struct RnnCell {
  CellKind kind = CellKind::lstm;
  // LSTM parameters
  Tensor Wi, Ui, bi, Wf, Uf, bf, Wo, Uo, bo, Wg, Ug, bg;
  // GRU parameters
  Tensor Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;

  RnnState step(const Tensor& x, const RnnState& s) const {
    if (kind == CellKind::gru) {
      Tensor z = beamstop::sigmoid(add(add(matmul(Wz, x), matmul(Uz, s.h)), bz));
      Tensor r = beamstop::sigmoid(add(add(matmul(Wr, x), matmul(Ur, s.h)), br));
      Tensor hc = beamstop::tanh(
          add(add(matmul(Wh, x), matmul(Uh, mul(r, s.h))), bh));
      return {add(mul(sub(Tensor::scalar(1.0), z), s.h), mul(z, hc)), Tensor()};
    }
    Tensor i = beamstop::sigmoid(add(add(matmul(Wi, x), matmul(Ui, s.h)), bi));
    Tensor f = beamstop::sigmoid(add(add(matmul(Wf, x), matmul(Uf, s.h)), bf));
    Tensor o = beamstop::sigmoid(add(add(matmul(Wo, x), matmul(Uo, s.h)), bo));
    Tensor g = beamstop::tanh(add(add(matmul(Wg, x), matmul(Ug, s.h)), bg));
    Tensor c = add(mul(f, s.c), mul(i, g));
    return {mul(o, beamstop::tanh(c)), c};
  }
};

}  // namespace detail

class EncoderDecoder {
 public:
  EncoderDecoder(const ModelConfig& cfg, int src_vocab_size, int tgt_vocab_size,
                 Rng init_rng)
      : cfg_(cfg), src_vocab_(src_vocab_size), tgt_vocab_(tgt_vocab_size) {
    cfg_.validate();
    if (src_vocab_ <= static_cast<int>(Vocab::kUnk) ||
        tgt_vocab_ <= static_cast<int>(Vocab::kUnk))
      throw std::invalid_argument("vocab sizes must cover the reserved ids");
    build_params(init_rng);
  }

  const ModelConfig& config() const { return cfg_; }
  int src_vocab_size() const { return src_vocab_; }
  int tgt_vocab_size() const { return tgt_vocab_; }
  int encoder_dim() const {
    return cfg_.hidden_dim * (cfg_.bidirectional_encoder ? 2 : 1);
  }

  Params& params() { return params_; }
  const Params& params() const { return params_; }

  ScorerMode scorer_mode() const { return mode_; }
  void set_scorer_mode(ScorerMode m) { mode_ = m; }
  int train_beam() const { return train_beam_; }
  void set_train_beam(int b) { train_beam_ = b; }

  const SigmoidScorer& sigmoid_scorer() const { return sig_; }
  SigmoidScorer& sigmoid_scorer() { return sig_; }

  // Dimensionality of the encoder summary used to initialize the decoder:
  // final hidden state, plus the final cell state for LSTM models.
  int summary_dim() const {
    return encoder_dim() * (cfg_.cell == CellKind::lstm ? 2 : 1);
  }

  EncodedSource encode(const TokenSequence& src, bool train = false,
                       Rng* drop_rng = nullptr) const {
    if (src.empty()) throw std::invalid_argument("encode: empty source");
    for (TokenId t : src)
      if (t < 0 || t >= src_vocab_)
        throw std::invalid_argument("encode: token id " + std::to_string(t) +
                                    " outside vocabulary of size " +
                                    std::to_string(src_vocab_));
    const std::size_t n = src.size();
    const auto H = static_cast<std::size_t>(cfg_.hidden_dim);
    const bool lstm = cfg_.cell == CellKind::lstm;
    std::vector<Tensor> inputs(n);
    for (std::size_t i = 0; i < n; ++i)
      inputs[i] = maybe_dropout(lookup_col(src_embed_, static_cast<std::size_t>(src[i])),
                                train, drop_rng);

    Tensor final_h, final_c;
    std::vector<Tensor> fwd_h, bwd_h;
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      fwd_h.assign(n, Tensor());
      detail::RnnState st{Tensor(H, 1), lstm ? Tensor(H, 1) : Tensor()};
      for (std::size_t i = 0; i < n; ++i) {
        st = enc_fwd_[static_cast<std::size_t>(l)].step(inputs[i], st);
        fwd_h[i] = st.h;
      }
      Tensor layer_final_h = st.h, layer_final_c = st.c;
      if (cfg_.bidirectional_encoder) {
        bwd_h.assign(n, Tensor());
        detail::RnnState sb{Tensor(H, 1), lstm ? Tensor(H, 1) : Tensor()};
        for (std::size_t i = n; i-- > 0;) {
          sb = enc_bwd_[static_cast<std::size_t>(l)].step(inputs[i], sb);
          bwd_h[i] = sb.h;
        }
        layer_final_h = vconcat(layer_final_h, sb.h);
        if (lstm) layer_final_c = vconcat(layer_final_c, sb.c);
      }
      final_h = layer_final_h;
      final_c = layer_final_c;
      // layer output becomes the next layer's input
      for (std::size_t i = 0; i < n; ++i) {
        Tensor o = cfg_.bidirectional_encoder ? vconcat(fwd_h[i], bwd_h[i])
                                              : fwd_h[i];
        inputs[i] = (l + 1 < cfg_.enc_layers) ? maybe_dropout(o, train, drop_rng)
                                              : o;
      }
    }
    EncodedSource enc;
    enc.states = stack_rows(inputs);
    enc.states_t = cfg_.attention ? transpose(enc.states) : Tensor();
    enc.final_state = lstm ? vconcat(final_h, final_c) : final_h;
    enc.n = static_cast<int>(n);
    return enc;
  }

  DecoderState initial_state(const EncodedSource& enc) const {
    DecoderState st;
    st.h.reserve(static_cast<std::size_t>(cfg_.dec_layers));
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      st.h.push_back(beamstop::tanh(
          add(matmul(dec_init_h_W_[static_cast<std::size_t>(l)], enc.final_state),
              dec_init_h_b_[static_cast<std::size_t>(l)])));
      if (cfg_.cell == CellKind::lstm)
        st.c.push_back(beamstop::tanh(
            add(matmul(dec_init_c_W_[static_cast<std::size_t>(l)],
                       enc.final_state),
                dec_init_c_b_[static_cast<std::size_t>(l)])));
    }
    return st;
  }

  // Raw (unnormalized) score for every target word given the previous one.
  std::pair<Tensor, DecoderState> decode_step(const EncodedSource& enc,
                                              const DecoderState& state,
                                              TokenId y_prev,
                                              bool train = false,
                                              Rng* drop_rng = nullptr) const {
    if (y_prev < 0 || y_prev >= tgt_vocab_)
      throw std::invalid_argument("decode_step: token id " +
                                  std::to_string(y_prev) +
                                  " outside vocabulary of size " +
                                  std::to_string(tgt_vocab_));
    if (static_cast<int>(state.h.size()) != cfg_.dec_layers)
      throw std::invalid_argument("decode_step: decoder state has " +
                                  std::to_string(state.h.size()) +
                                  " layers, model expects " +
                                  std::to_string(cfg_.dec_layers));
    const bool lstm = cfg_.cell == CellKind::lstm;
    Tensor x = maybe_dropout(
        lookup_col(tgt_embed_, static_cast<std::size_t>(y_prev)), train,
        drop_rng);
    DecoderState next;
    next.h.reserve(state.h.size());
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      detail::RnnState in{state.h[static_cast<std::size_t>(l)],
                          lstm ? state.c[static_cast<std::size_t>(l)] : Tensor()};
      detail::RnnState out = dec_cells_[static_cast<std::size_t>(l)].step(x, in);
      next.h.push_back(out.h);
      if (lstm) next.c.push_back(out.c);
      x = (l + 1 < cfg_.dec_layers) ? maybe_dropout(out.h, train, drop_rng)
                                    : out.h;
    }
    Tensor combined = x;
    if (cfg_.attention) {
      Tensor proj = matmul(att_W_, combined);      // [D,1]
      Tensor scores = matmul(enc.states, proj);    // [N,1]
      Tensor alpha = softmax(scores);              // [N,1]
      Tensor ctx = matmul(enc.states_t, alpha);    // [D,1]
      combined = beamstop::tanh(
          add(add(matmul(att_Wc_ctx_, ctx), matmul(att_Wc_h_, combined)),
              att_bc_));
      combined = maybe_dropout(combined, train, drop_rng);
    }
    Tensor raw = add(matmul(out_W_, combined), out_b_);
    return {raw, std::move(next)};
  }

  Tensor score_step(const Tensor& raw, ScorerMode mode) const {
    return beamstop::score_step(raw, mode, sig_);
  }

  // Per-step probability-domain value of one word (Eq.-4-style g): the
  // sigmoid g, the softmax probability, or the raw score itself, depending
  // on the mode.
  Tensor step_g(const Tensor& raw, TokenId tok, ScorerMode mode) const {
    Tensor f = pick(raw, static_cast<std::size_t>(tok));
    switch (mode) {
      case ScorerMode::raw: return f;
      case ScorerMode::logsoftmax:
        return beamstop::exp(pick(log_softmax(raw), static_cast<std::size_t>(tok)));
      case ScorerMode::sigmoid:
        return beamstop::sigmoid(neg(mul(f, sig_.w)));
    }
    throw std::logic_error("unreachable scorer mode");
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
      throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out << kCheckpointHeader << "\n";
    const std::vector<double> meta = {
        static_cast<double>(cfg_.embed_dim),
        static_cast<double>(cfg_.hidden_dim),
        static_cast<double>(cfg_.enc_layers),
        static_cast<double>(cfg_.dec_layers),
        cfg_.bidirectional_encoder ? 1.0 : 0.0,
        cfg_.attention ? 1.0 : 0.0,
        cfg_.dropout,
        static_cast<double>(src_vocab_),
        static_cast<double>(tgt_vocab_),
        static_cast<double>(static_cast<int>(mode_)),
        static_cast<double>(train_beam_),
        cfg_.cell == CellKind::lstm ? 0.0 : 1.0};
    out << "meta.config 1 " << meta.size() << "\n";
    for (std::size_t i = 0; i < meta.size(); ++i)
      out << (i ? " " : "") << format_double(meta[i]);
    out << "\n";
    for (const auto& [name, t] : params_) {
      out << name << " " << t.rows() << " " << t.cols() << "\n";
      const auto& v = t.values();
      for (std::size_t i = 0; i < v.size(); ++i)
        out << (i ? " " : "") << format_double(v[i]);
      out << "\n";
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
  }

  static EncoderDecoder load(const std::string& path) {
    auto records = read_checkpoint(path);
    const CheckpointRecord* meta = nullptr;
    for (const auto& r : records)
      if (r.name == "meta.config") meta = &r;
    if (!meta || meta->values.size() < 12)
      throw std::runtime_error("checkpoint " + path +
                               " has no usable meta.config record");
    ModelConfig cfg;
    cfg.embed_dim = static_cast<int>(meta->values[0]);
    cfg.hidden_dim = static_cast<int>(meta->values[1]);
    cfg.enc_layers = static_cast<int>(meta->values[2]);
    cfg.dec_layers = static_cast<int>(meta->values[3]);
    cfg.bidirectional_encoder = meta->values[4] != 0.0;
    cfg.attention = meta->values[5] != 0.0;
    cfg.dropout = meta->values[6];
    cfg.cell = meta->values[11] == 0.0 ? CellKind::lstm : CellKind::gru;
    EncoderDecoder model(cfg, static_cast<int>(meta->values[7]),
                         static_cast<int>(meta->values[8]), Rng(0));
    model.mode_ = static_cast<ScorerMode>(static_cast<int>(meta->values[9]));
    model.train_beam_ = static_cast<int>(meta->values[10]);
    for (auto& [name, t] : model.params_) {
      const CheckpointRecord* found = nullptr;
      for (const auto& r : records)
        if (r.name == name) {
          found = &r;
          break;
        }
      if (!found)
        throw std::runtime_error("checkpoint " + path +
                                 " is missing parameter " + name);
      if (found->rows != t.rows() || found->cols != t.cols())
        throw std::runtime_error("checkpoint shape mismatch for " + name +
                                 " in " + path);
      t.values() = found->values;
    }
    return model;
  }

 private:
  Tensor maybe_dropout(Tensor t, bool train, Rng* rng) const {
    if (!train || cfg_.dropout == 0.0 || rng == nullptr) return t;
    return beamstop::dropout(t, cfg_.dropout, [rng] { return rng->uniform(); });
  }

  Tensor xavier(const std::string& name, std::size_t rows, std::size_t cols,
                Rng& rng) {
    Tensor t(rows, cols);
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (auto& x : t.values()) x = rng.uniform(-limit, limit);
    return params_.add(name, std::move(t));
  }

  Tensor zeros_param(const std::string& name, std::size_t rows) {
    return params_.add(name, Tensor(rows, 1));
  }

  detail::RnnCell make_cell(const std::string& prefix, std::size_t in_dim,
                            std::size_t hid, Rng& rng) {
    detail::RnnCell c;
    c.kind = cfg_.cell;
    if (cfg_.cell == CellKind::gru) {
      c.Wz = xavier(prefix + ".Wz", hid, in_dim, rng);
      c.Uz = xavier(prefix + ".Uz", hid, hid, rng);
      c.bz = zeros_param(prefix + ".bz", hid);
      c.Wr = xavier(prefix + ".Wr", hid, in_dim, rng);
      c.Ur = xavier(prefix + ".Ur", hid, hid, rng);
      c.br = zeros_param(prefix + ".br", hid);
      c.Wh = xavier(prefix + ".Wh", hid, in_dim, rng);
      c.Uh = xavier(prefix + ".Uh", hid, hid, rng);
      c.bh = zeros_param(prefix + ".bh", hid);
      return c;
    }
    c.Wi = xavier(prefix + ".Wi", hid, in_dim, rng);
    c.Ui = xavier(prefix + ".Ui", hid, hid, rng);
    c.bi = zeros_param(prefix + ".bi", hid);
    c.Wf = xavier(prefix + ".Wf", hid, in_dim, rng);
    c.Uf = xavier(prefix + ".Uf", hid, hid, rng);
    c.bf = params_.add(prefix + ".bf", Tensor(hid, 1, 1.0));  // remember early
    c.Wo = xavier(prefix + ".Wo", hid, in_dim, rng);
    c.Uo = xavier(prefix + ".Uo", hid, hid, rng);
    c.bo = zeros_param(prefix + ".bo", hid);
    c.Wg = xavier(prefix + ".Wg", hid, in_dim, rng);
    c.Ug = xavier(prefix + ".Ug", hid, hid, rng);
    c.bg = zeros_param(prefix + ".bg", hid);
    return c;
  }

  void build_params(Rng& rng) {
    const auto E = static_cast<std::size_t>(cfg_.embed_dim);
    const auto H = static_cast<std::size_t>(cfg_.hidden_dim);
    const auto D = static_cast<std::size_t>(encoder_dim());

    src_embed_ = params_.add("src_embed",
                             [&] {
                               Tensor t(static_cast<std::size_t>(src_vocab_), E);
                               for (auto& x : t.values())
                                 x = rng.uniform(-0.08, 0.08);
                               return t;
                             }());
    tgt_embed_ = params_.add("tgt_embed",
                             [&] {
                               Tensor t(static_cast<std::size_t>(tgt_vocab_), E);
                               for (auto& x : t.values())
                                 x = rng.uniform(-0.08, 0.08);
                               return t;
                             }());
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      const std::size_t in_dim = l == 0 ? E : D;
      const std::string base = "enc.l" + std::to_string(l);
      enc_fwd_.push_back(make_cell(base + ".fwd", in_dim, H, rng));
      if (cfg_.bidirectional_encoder)
        enc_bwd_.push_back(make_cell(base + ".bwd", in_dim, H, rng));
    }
    const auto S = static_cast<std::size_t>(summary_dim());
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      const std::size_t in_dim = l == 0 ? E : H;
      dec_cells_.push_back(
          make_cell("dec.l" + std::to_string(l), in_dim, H, rng));
      dec_init_h_W_.push_back(
          xavier("dec.init.l" + std::to_string(l) + ".hW", H, S, rng));
      dec_init_h_b_.push_back(
          zeros_param("dec.init.l" + std::to_string(l) + ".hb", H));
      if (cfg_.cell == CellKind::lstm) {
        dec_init_c_W_.push_back(
            xavier("dec.init.l" + std::to_string(l) + ".cW", H, S, rng));
        dec_init_c_b_.push_back(
            zeros_param("dec.init.l" + std::to_string(l) + ".cb", H));
      }
    }
    if (cfg_.attention) {
      att_W_ = xavier("att.W", D, H, rng);
      att_Wc_ctx_ = xavier("att.Wc_ctx", H, D, rng);
      att_Wc_h_ = xavier("att.Wc_h", H, H, rng);
      att_bc_ = zeros_param("att.bc", H);
    }
    out_W_ = xavier("out.W", static_cast<std::size_t>(tgt_vocab_), H, rng);
    out_b_ = zeros_param("out.b", static_cast<std::size_t>(tgt_vocab_));
    sig_.w = params_.add("sig.w", Tensor::scalar(-1.0));
  }

  ModelConfig cfg_;
  int src_vocab_ = 0;
  int tgt_vocab_ = 0;
  ScorerMode mode_ = ScorerMode::logsoftmax;
  int train_beam_ = 0;
  Params params_;

  Tensor src_embed_, tgt_embed_;
  std::vector<detail::RnnCell> enc_fwd_, enc_bwd_;
  std::vector<detail::RnnCell> dec_cells_;
  std::vector<Tensor> dec_init_h_W_, dec_init_h_b_;
  std::vector<Tensor> dec_init_c_W_, dec_init_c_b_;
  Tensor att_W_, att_Wc_ctx_, att_Wc_h_, att_bc_;
  Tensor out_W_, out_b_;
  SigmoidScorer sig_;
};

// Binds a model, an encoded source, and a scorer mode into the stepping
// interface the beam searcher consumes. Any type with the same members can
// stand in (tests use scripted score tables).
struct ModelScorer {
  const EncoderDecoder* model;
  EncodedSource enc;
  ScorerMode mode;

  using State = DecoderState;

  struct StepOut {
    Tensor raw;     // unnormalized scores, [V,1]
    Tensor scores;  // mode-domain step scores, [V,1]
    State next;
  };

  int vocab_size() const { return model->tgt_vocab_size(); }
  ScorerMode scorer_mode() const { return mode; }

  State initial_state() const { return model->initial_state(enc); }

  StepOut step(const State& state, TokenId y_prev) const {
    auto [raw, next] = model->decode_step(enc, state, y_prev);
    Tensor scores = model->score_step(raw, mode);
    return {std::move(raw), std::move(scores), std::move(next)};
  }

  // Probability-domain per-step value of one word of a previous step().
  Tensor step_g(const StepOut& out, TokenId tok) const {
    return model->step_g(out.raw, tok, mode);
  }
};

inline ModelScorer make_scorer(const EncoderDecoder& model,
                               const TokenSequence& src, ScorerMode mode) {
  return ModelScorer{&model, model.encode(src), mode};
}

}  // namespace beamstop
