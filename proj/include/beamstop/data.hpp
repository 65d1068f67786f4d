#pragma once

// Synthetic counting-translation corpus and parallel-corpus ingestion.
//
// The synthetic task maps letters to runs of `x`: a->x, b->x x, c->x x x,
// d->x x x x, e->x x x x x. Corpus files are plain text, one sentence per
// line, single-space separated, LF newlines, no trailing spaces.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "beamstop/rng.hpp"
#include "beamstop/vocab.hpp"

namespace beamstop {

struct SentencePair {
  TokenSequence src;
  TokenSequence tgt;  // ends with </eos>
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::size_t size() const { return pairs.size(); }
};

// --------------------------------------------------------------------------
// Synthetic task
// --------------------------------------------------------------------------

struct SynthSpec {
  int train_sents = 5000;
  int valid_sents = 1000;
  int test_sents = 1000;
  int len_min = 2;   // source length law: uniform integers in [len_min, len_max]
  int len_max = 18;
  std::uint64_t seed = 1;
};

inline int letter_value(char c) {
  if (c < 'a' || c > 'e')
    throw std::invalid_argument(std::string("synthetic source symbol out of "
                                            "alphabet {a..e}: \"") +
                                c + "\"");
  return c - 'a' + 1;
}

// Expands a source letter sentence into its target: each letter contributes
// value(letter) copies of "x".
inline std::vector<std::string> expand_source(
    const std::vector<std::string>& src) {
  if (src.empty())
    throw std::invalid_argument("expand_source: empty source sentence");
  int total = 0;
  for (const auto& tok : src) {
    if (tok.size() != 1)
      throw std::invalid_argument("synthetic source symbol out of alphabet "
                                  "{a..e}: \"" + tok + "\"");
    total += letter_value(tok[0]);
  }
  return std::vector<std::string>(static_cast<std::size_t>(total), "x");
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

// Writes {train,valid,test}.{src,tgt} under `dir`. Letters are i.i.d.
// uniform over {a..e}; source lengths are uniform in [len_min, len_max].
// Byte-identical across runs for a fixed spec.
inline void generate_corpus(const SynthSpec& spec, const std::string& dir) {
  if (spec.train_sents <= 0 || spec.valid_sents <= 0 || spec.test_sents <= 0)
    throw std::invalid_argument("generate_corpus: split sizes must be positive");
  if (spec.len_min < 1 || spec.len_max < spec.len_min)
    throw std::invalid_argument("generate_corpus: bad length law [" +
                                std::to_string(spec.len_min) + "," +
                                std::to_string(spec.len_max) + "]");
  std::filesystem::create_directories(dir);
  SeedSplitter split(spec.seed);
  const struct {
    const char* name;
    int n;
  } splits[] = {{"train", spec.train_sents},
                {"valid", spec.valid_sents},
                {"test", spec.test_sents}};
  for (const auto& s : splits) {
    Rng rng = split.stream(std::string("data.") + s.name);
    std::ofstream src_out(dir + "/" + s.name + ".src");
    std::ofstream tgt_out(dir + "/" + s.name + ".tgt");
    if (!src_out || !tgt_out)
      throw std::runtime_error("cannot write corpus files under " + dir);
    for (int i = 0; i < s.n; ++i) {
      const int len =
          static_cast<int>(rng.uniform_int(spec.len_min, spec.len_max));
      std::vector<std::string> src;
      src.reserve(static_cast<std::size_t>(len));
      for (int j = 0; j < len; ++j)
        src.push_back(std::string(1, static_cast<char>('a' + rng.uniform_int(0, 4))));
      src_out << join_tokens(src) << "\n";
      tgt_out << join_tokens(expand_source(src)) << "\n";
    }
    if (!src_out || !tgt_out)
      throw std::runtime_error("corpus write failed under " + dir);
  }
}

// --------------------------------------------------------------------------
// Ingestion
// --------------------------------------------------------------------------

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Tokenizes two aligned files on whitespace, maps OOV to <unk>, and appends
// </eos> to every target sentence.
inline ParallelCorpus load_parallel(const std::string& src_path,
                                    const std::string& tgt_path,
                                    const Vocab& src_vocab,
                                    const Vocab& tgt_vocab) {
  auto src_lines = read_lines(src_path);
  auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size())
    throw std::runtime_error("line count mismatch: " + src_path + " has " +
                             std::to_string(src_lines.size()) + " lines, " +
                             tgt_path + " has " +
                             std::to_string(tgt_lines.size()));
  ParallelCorpus corpus;
  corpus.pairs.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair p;
    p.src = src_vocab.encode_line(src_lines[i]);
    p.tgt = tgt_vocab.encode_line(tgt_lines[i]);
    p.tgt.push_back(Vocab::kEos);
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

// Convenience: builds the vocabularies from the given (training) files and
// loads the corpus with them.
struct LoadedCorpus {
  Vocab src_vocab;
  Vocab tgt_vocab;
  ParallelCorpus corpus;
};

inline LoadedCorpus load_parallel_build_vocab(const std::string& src_path,
                                              const std::string& tgt_path,
                                              int min_freq = 1) {
  LoadedCorpus out;
  out.src_vocab = Vocab::build(read_lines(src_path), min_freq);
  out.tgt_vocab = Vocab::build(read_lines(tgt_path), min_freq);
  out.corpus = load_parallel(src_path, tgt_path, out.src_vocab, out.tgt_vocab);
  return out;
}

}  // namespace beamstop
