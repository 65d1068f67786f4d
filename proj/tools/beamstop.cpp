// beamstop command-line tool: synthetic-corpus generation, cross-entropy
// and beam-search training, decoding, evaluation, and the beam-size sweep.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beamstop/beam.hpp"
#include "beamstop/data.hpp"
#include "beamstop/metrics.hpp"
#include "beamstop/model.hpp"
#include "beamstop/training.hpp"

namespace {

using namespace beamstop;

constexpr const char* kEvalCsvHeader =
    "beam,scorer_mode,stop_mode,bleu,len_ratio_ref,len_ratio_src";

std::vector<int> parse_beams(const std::string& spec) {
  std::vector<int> beams;
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const int lo = std::stoi(spec.substr(0, dots));
    const int hi = std::stoi(spec.substr(dots + 2));
    if (lo < 1 || hi < lo) throw std::invalid_argument("bad beam range: " + spec);
    for (int b = lo; b <= hi; ++b) beams.push_back(b);
    return beams;
  }
  std::string tok;
  std::istringstream ss(spec);
  while (std::getline(ss, tok, ',')) beams.push_back(std::stoi(tok));
  if (beams.empty()) throw std::invalid_argument("empty beam list: " + spec);
  for (int b : beams)
    if (b < 1) throw std::invalid_argument("beam sizes must be >= 1");
  return beams;
}

void log_resolved_config(const CLI::App* sub) {
  std::cerr << "# resolved config [" << sub->get_name() << "]\n";
  for (const auto* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "--config") continue;
    std::string val = opt->count() ? opt->results().at(0)
                                   : opt->get_default_str();
    std::cerr << "#   " << opt->get_name() << " = " << val << "\n";
  }
}

std::string vocab_sidecar(const std::string& ckpt, const char* side) {
  return ckpt + "." + side + ".vocab";
}

void append_eval_row(const std::string& path, int beam,
                     const std::string& scorer_mode,
                     const std::string& stop_mode, double bleu,
                     double ratio_ref, double ratio_src) {
  const bool fresh = [&] {
    std::ifstream probe(path);
    return !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
  }();
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write CSV: " + path);
  if (fresh) out << kEvalCsvHeader << "\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%s,%s,%.4f,%.6f,%.6f\n", beam,
                scorer_mode.c_str(), stop_mode.c_str(), bleu, ratio_ref,
                ratio_src);
  out << buf;
  if (!out) throw std::runtime_error("CSV write failed: " + path);
}

struct DecodedCorpus {
  std::vector<TokenSequence> hyps;
  int truncated = 0;
};

DecodedCorpus decode_corpus(const EncoderDecoder& model,
                            const std::vector<TokenSequence>& srcs, int beam,
                            StopMode stop, int max_len) {
  DecodedCorpus out;
  out.hyps.reserve(srcs.size());
  for (const auto& src : srcs) {
    auto res = decode(model, src, beam, model.scorer_mode(), stop, max_len);
    TokenSequence toks = res.best.tokens;
    while (!toks.empty() && toks.back() == Vocab::kEos) toks.pop_back();
    out.hyps.push_back(std::move(toks));
    out.truncated += res.truncated ? 1 : 0;
  }
  return out;
}

StopMode default_stop_for(ScorerMode mode) {
  return mode == ScorerMode::raw ? StopMode::shrinking : StopMode::optimal;
}

// --------------------------------------------------------------------------

struct GenSynthArgs {
  std::string out_dir;
  std::uint64_t seed = 1;
  int train_n = 5000, valid_n = 1000, test_n = 1000;
  int len_min = 2, len_max = 18;
};

void run_gen_synth(const GenSynthArgs& a) {
  SynthSpec spec;
  spec.train_sents = a.train_n;
  spec.valid_sents = a.valid_n;
  spec.test_sents = a.test_n;
  spec.len_min = a.len_min;
  spec.len_max = a.len_max;
  spec.seed = a.seed;
  generate_corpus(spec, a.out_dir);
  std::cerr << "wrote " << a.out_dir << "/{train,valid,test}.{src,tgt}\n";
}

struct TrainArgs {
  std::string mode;
  std::string data_dir;
  std::string out_ckpt;
  std::string init_from;
  std::string metrics_csv;
  int train_beam = 4;
  std::string early_stop_penalty;  // empty: mode default (sigmoid on, raw off)
  std::string scale_augment;
  int epochs = -1;
  double lr = -1.0, lr_decay = -1.0, margin = 1.0;
  int batch = -1;
  std::uint64_t seed = 1;
  int embed = 64, hidden = 64, enc_layers = 1, dec_layers = 1;
  std::string bidir = "off", attention = "on";
  std::string cell = "lstm";
  double dropout = 0.0;
  int min_freq = 1;
};

void run_train(const TrainArgs& a) {
  TrainConfig cfg = TrainConfig::defaults_for(train_mode_from_string(a.mode));
  cfg.train_beam = a.train_beam;
  cfg.margin = a.margin;
  cfg.seed = a.seed;
  if (!a.early_stop_penalty.empty())
    cfg.early_stop_penalty = a.early_stop_penalty == "on";
  if (!a.scale_augment.empty()) cfg.scale_augment = a.scale_augment == "on";
  if (a.epochs >= 0) cfg.epochs = a.epochs;
  if (a.lr > 0) cfg.lr = a.lr;
  if (a.lr_decay > 0) cfg.lr_decay = a.lr_decay;
  if (a.batch > 0) cfg.batch_size = a.batch;
  cfg.validate();

  if (cfg.is_bso() && a.init_from.empty())
    throw std::runtime_error(
        "BSO training modes require --init-from with a pretrained checkpoint");

  const std::string train_src = a.data_dir + "/train.src";
  const std::string train_tgt = a.data_dir + "/train.tgt";
  const std::string valid_src = a.data_dir + "/valid.src";
  const std::string valid_tgt = a.data_dir + "/valid.tgt";

  Vocab src_vocab, tgt_vocab;
  std::optional<EncoderDecoder> model;
  if (!a.init_from.empty()) {  // BSO requires this; CE may warm-start
    src_vocab = Vocab::load(vocab_sidecar(a.init_from, "src"));
    tgt_vocab = Vocab::load(vocab_sidecar(a.init_from, "tgt"));
    model.emplace(EncoderDecoder::load(a.init_from));
    if (model->src_vocab_size() != src_vocab.size() ||
        model->tgt_vocab_size() != tgt_vocab.size())
      throw std::runtime_error("checkpoint/vocab mismatch for " + a.init_from);
  } else {
    src_vocab = Vocab::build(read_lines(train_src), a.min_freq);
    tgt_vocab = Vocab::build(read_lines(train_tgt), a.min_freq);
    ModelConfig mc;
    mc.embed_dim = a.embed;
    mc.hidden_dim = a.hidden;
    mc.enc_layers = a.enc_layers;
    mc.dec_layers = a.dec_layers;
    mc.bidirectional_encoder = a.bidir == "on";
    mc.attention = a.attention == "on";
    mc.cell = cell_kind_from_string(a.cell);
    mc.dropout = a.dropout;
    SeedSplitter split(cfg.seed);
    model.emplace(mc, src_vocab.size(), tgt_vocab.size(),
                  split.stream("model.init"));
  }

  ParallelCorpus train_corpus =
      load_parallel(train_src, train_tgt, src_vocab, tgt_vocab);
  ParallelCorpus valid_corpus =
      load_parallel(valid_src, valid_tgt, src_vocab, tgt_vocab);

  const std::string metrics =
      a.metrics_csv.empty() ? a.out_ckpt + ".metrics.csv" : a.metrics_csv;
  std::error_code ec;
  std::filesystem::remove(metrics, ec);  // fresh metrics per run

  train(*model, train_corpus, valid_corpus, cfg, metrics, &std::cerr);

  model->set_scorer_mode(cfg.scorer_mode());
  model->set_train_beam(cfg.is_bso() ? cfg.train_beam : 0);
  model->save(a.out_ckpt);
  src_vocab.save(vocab_sidecar(a.out_ckpt, "src"));
  tgt_vocab.save(vocab_sidecar(a.out_ckpt, "tgt"));
  std::cerr << "wrote " << a.out_ckpt << " and metrics CSV " << metrics << "\n";
}

struct DecodeArgs {
  std::string ckpt;
  std::string src_file;
  std::string out_file;
  int beam = 0;  // 0: train_beam - 1 when available, else 1
  std::string stop = "auto";
  int max_len = 0;
};

void run_decode(const DecodeArgs& a) {
  EncoderDecoder model = EncoderDecoder::load(a.ckpt);
  Vocab src_vocab = Vocab::load(vocab_sidecar(a.ckpt, "src"));
  Vocab tgt_vocab = Vocab::load(vocab_sidecar(a.ckpt, "tgt"));
  if (model.src_vocab_size() != src_vocab.size() ||
      model.tgt_vocab_size() != tgt_vocab.size())
    throw std::runtime_error("checkpoint/vocab mismatch for " + a.ckpt);

  int beam = a.beam;
  if (beam <= 0) beam = model.train_beam() >= 2 ? model.train_beam() - 1 : 1;
  const StopMode stop = a.stop == "auto"
                            ? default_stop_for(model.scorer_mode())
                            : stop_mode_from_string(a.stop);

  std::vector<TokenSequence> srcs;
  for (const auto& line : read_lines(a.src_file))
    srcs.push_back(src_vocab.encode_line(line));

  DecodedCorpus dec = decode_corpus(model, srcs, beam, stop, a.max_len);
  std::ofstream out(a.out_file);
  if (!out) throw std::runtime_error("cannot write output file: " + a.out_file);
  for (const auto& hyp : dec.hyps) out << tgt_vocab.decode(hyp) << "\n";
  if (!out) throw std::runtime_error("output write failed: " + a.out_file);
  std::cerr << "decoded " << srcs.size() << " sentences (beam " << beam
            << ", stop " << to_string(stop) << ", " << dec.truncated
            << " truncated)\n";
}

struct EvalArgs {
  std::string hyp_file;
  std::string ref_files;  // comma-separated
  std::string src_file;
  std::string out_csv;
  int beam = 0;
  std::string scorer_mode = "na";
  std::string stop_mode = "na";
};

void run_eval(const EvalArgs& a) {
  // intern surface tokens into a private id space; comparison is exact
  Vocab interner;
  auto encode_file = [&interner](const std::string& path) {
    std::vector<TokenSequence> out;
    for (const auto& line : read_lines(path)) {
      TokenSequence seq;
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) seq.push_back(interner.add_token(tok));
      out.push_back(std::move(seq));
    }
    return out;
  };

  auto hyps = encode_file(a.hyp_file);
  std::vector<std::vector<TokenSequence>> refs(hyps.size());
  std::istringstream rs(a.ref_files);
  std::string ref_path;
  int ref_count = 0;
  while (std::getline(rs, ref_path, ',')) {
    auto ref = encode_file(ref_path);
    if (ref.size() != hyps.size())
      throw std::runtime_error("reference " + ref_path + " has " +
                               std::to_string(ref.size()) + " lines, hyp has " +
                               std::to_string(hyps.size()));
    for (std::size_t i = 0; i < ref.size(); ++i)
      refs[i].push_back(std::move(ref[i]));
    ++ref_count;
  }
  if (ref_count == 0) throw std::runtime_error("no reference files given");
  auto srcs = encode_file(a.src_file);
  if (srcs.size() != hyps.size())
    throw std::runtime_error("source/hypothesis line counts differ");

  const double bleu = corpus_bleu(hyps, refs);
  auto [ratio_ref, ratio_src] = length_ratios(hyps, refs, srcs);
  append_eval_row(a.out_csv, a.beam, a.scorer_mode, a.stop_mode, bleu,
                  ratio_ref, ratio_src);
  std::cerr << "bleu " << bleu << " len_ratio_ref " << ratio_ref
            << " len_ratio_src " << ratio_src << "\n";
}

struct SweepArgs {
  std::string ckpt;
  std::string data_dir;
  std::string beams = "1..9";
  std::string stop = "auto";
  std::string out_csv;
  int max_len = 0;
};

void run_sweep(const SweepArgs& a) {
  EncoderDecoder model = EncoderDecoder::load(a.ckpt);
  Vocab src_vocab = Vocab::load(vocab_sidecar(a.ckpt, "src"));
  Vocab tgt_vocab = Vocab::load(vocab_sidecar(a.ckpt, "tgt"));
  const StopMode stop = a.stop == "auto"
                            ? default_stop_for(model.scorer_mode())
                            : stop_mode_from_string(a.stop);

  std::vector<TokenSequence> srcs, refs_flat;
  for (const auto& line : read_lines(a.data_dir + "/test.src"))
    srcs.push_back(src_vocab.encode_line(line));
  for (const auto& line : read_lines(a.data_dir + "/test.tgt"))
    refs_flat.push_back(tgt_vocab.encode_line(line));
  if (srcs.size() != refs_flat.size())
    throw std::runtime_error("test.src/test.tgt line counts differ");
  std::vector<std::vector<TokenSequence>> refs;
  refs.reserve(refs_flat.size());
  for (auto& r : refs_flat) refs.push_back({r});

  std::error_code ec;
  std::filesystem::remove(a.out_csv, ec);  // the sweep CSV is a whole artifact
  for (int beam : parse_beams(a.beams)) {
    DecodedCorpus dec = decode_corpus(model, srcs, beam, stop, a.max_len);
    const double bleu = corpus_bleu(dec.hyps, refs);
    auto [ratio_ref, ratio_src] = length_ratios(dec.hyps, refs, srcs);
    append_eval_row(a.out_csv, beam, to_string(model.scorer_mode()),
                    to_string(stop), bleu, ratio_ref, ratio_src);
    std::cerr << "beam " << beam << ": bleu " << bleu << " len_ratio_ref "
              << ratio_ref << " len_ratio_src " << ratio_src << " ("
              << dec.truncated << " truncated)\n";
  }
  std::cerr << "wrote " << a.out_csv << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beam search optimization with learned stopping"};
  app.require_subcommand(1);

  GenSynthArgs gen;
  auto* gen_cmd =
      app.add_subcommand("gen-synth", "generate the synthetic counting task");
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("--train", gen.train_n, "training sentences");
  gen_cmd->add_option("--valid", gen.valid_n, "validation sentences");
  gen_cmd->add_option("--test", gen.test_n, "test sentences");
  gen_cmd->add_option("--len-min", gen.len_min, "min source length");
  gen_cmd->add_option("--len-max", gen.len_max, "max source length");
  gen_cmd->set_config("--config");
  gen_cmd->callback([&] {
    log_resolved_config(gen_cmd);
    run_gen_synth(gen);
  });

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--mode", tr.mode, "ce | bso-raw | bso-sigmoid")
      ->required()
      ->check(CLI::IsMember({"ce", "bso-raw", "bso-sigmoid"}));
  train_cmd->add_option("--data", tr.data_dir, "corpus directory")->required();
  train_cmd->add_option("--out", tr.out_ckpt, "output checkpoint")->required();
  train_cmd->add_option("--train-beam", tr.train_beam, "training beam width");
  train_cmd->add_option("--init-from", tr.init_from,
                        "checkpoint to initialize from (required for BSO)");
  train_cmd
      ->add_option("--early-stop-penalty", tr.early_stop_penalty,
                   "penalize early </eos> (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd
      ->add_option("--scale-augment", tr.scale_augment,
                   "BLEU-scaled margin loss (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--epochs", tr.epochs, "training epochs");
  train_cmd->add_option("--lr", tr.lr, "learning rate");
  train_cmd->add_option("--lr-decay", tr.lr_decay, "learning rate decay");
  train_cmd->add_option("--batch", tr.batch, "sentences per optimizer step");
  train_cmd->add_option("--margin", tr.margin, "margin constant");
  train_cmd->add_option("--seed", tr.seed, "random seed");
  train_cmd->add_option("--metrics", tr.metrics_csv,
                        "metrics CSV path (default <out>.metrics.csv)");
  train_cmd->add_option("--embed", tr.embed, "embedding size");
  train_cmd->add_option("--hidden", tr.hidden, "hidden size");
  train_cmd->add_option("--enc-layers", tr.enc_layers, "encoder layers");
  train_cmd->add_option("--dec-layers", tr.dec_layers, "decoder layers");
  train_cmd->add_option("--bidir", tr.bidir, "bidirectional encoder (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--attention", tr.attention, "attention (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--cell", tr.cell, "recurrent cell (lstm|gru)")
      ->check(CLI::IsMember({"lstm", "gru"}));
  train_cmd->add_option("--dropout", tr.dropout, "dropout rate");
  train_cmd->add_option("--min-freq", tr.min_freq, "vocab min frequency");
  train_cmd->set_config("--config");
  train_cmd->callback([&] {
    log_resolved_config(train_cmd);
    run_train(tr);
  });

  DecodeArgs dec;
  auto* dec_cmd = app.add_subcommand("decode", "decode a source file");
  dec_cmd->add_option("--ckpt", dec.ckpt, "model checkpoint")->required();
  dec_cmd->add_option("--src", dec.src_file, "source file")->required();
  dec_cmd->add_option("--out", dec.out_file, "output file")->required();
  dec_cmd->add_option("--beam", dec.beam,
                      "beam size (default: train beam - 1)");
  dec_cmd
      ->add_option("--stop", dec.stop,
                   "stopping regime (optimal|shrinking|maxlen|auto)")
      ->check(CLI::IsMember({"optimal", "shrinking", "maxlen", "auto"}));
  dec_cmd->add_option("--max-len", dec.max_len,
                      "length cap (0: 3*source_len+10)");
  dec_cmd->set_config("--config");
  dec_cmd->callback([&] {
    log_resolved_config(dec_cmd);
    run_decode(dec);
  });

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score hypotheses");
  eval_cmd->add_option("--hyp", ev.hyp_file, "hypothesis file")->required();
  eval_cmd->add_option("--ref", ev.ref_files, "reference file(s), comma-separated")
      ->required();
  eval_cmd->add_option("--src", ev.src_file, "source file")->required();
  eval_cmd->add_option("--out", ev.out_csv, "CSV to append to")->required();
  eval_cmd->add_option("--beam", ev.beam, "beam label for the CSV row");
  eval_cmd->add_option("--scorer-mode", ev.scorer_mode,
                       "scorer label for the CSV row");
  eval_cmd->add_option("--stop-mode", ev.stop_mode,
                       "stop label for the CSV row");
  eval_cmd->set_config("--config");
  eval_cmd->callback([&] {
    log_resolved_config(eval_cmd);
    run_eval(ev);
  });

  SweepArgs sw;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "decode the test set over a range of beams");
  sweep_cmd->add_option("--ckpt", sw.ckpt, "model checkpoint")->required();
  sweep_cmd->add_option("--data", sw.data_dir, "corpus directory")->required();
  sweep_cmd->add_option("--beams", sw.beams, "beam sizes, e.g. 1..9 or 2,4,6");
  sweep_cmd
      ->add_option("--stop", sw.stop,
                   "stopping regime (optimal|shrinking|maxlen|auto)")
      ->check(CLI::IsMember({"optimal", "shrinking", "maxlen", "auto"}));
  sweep_cmd->add_option("--out", sw.out_csv, "output CSV")->required();
  sweep_cmd->add_option("--max-len", sw.max_len,
                        "length cap (0: 3*source_len+10)");
  sweep_cmd->set_config("--config");
  sweep_cmd->callback([&] {
    log_resolved_config(sweep_cmd);
    run_sweep(sw);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
