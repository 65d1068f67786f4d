#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace beamstop {

using TokenId = int;
using TokenSequence = std::vector<TokenId>;

// Token inventory with four fixed reserved ids. Vocab files hold one token
// per line (line number = id); the first four lines must be the reserved
// tokens in order.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;

  Vocab() {
    for (const char* t : {"<pad>", "<s>", "</eos>", "<unk>"}) add_token(t);
  }

  TokenId add_token(const std::string& tok) {
    auto it = index_.find(tok);
    if (it != index_.end()) return it->second;
    const TokenId id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(tok);
    index_.emplace(tok, id);
    return id;
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  const std::string& token(TokenId id) const {
    if (id < 0 || id >= size())
      throw std::out_of_range("token id " + std::to_string(id) +
                              " out of range (vocab size " +
                              std::to_string(size()) + ")");
    return tokens_[static_cast<std::size_t>(id)];
  }

  // Unknown tokens map to <unk>.
  TokenId id(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& tok) const {
    return index_.find(tok) != index_.end();
  }

  TokenSequence encode_line(const std::string& line) const {
    TokenSequence out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(id(tok));
    return out;
  }

  std::string decode(const TokenSequence& ids, bool strip_eos = true) const {
    std::string out;
    for (TokenId t : ids) {
      if (strip_eos && t == kEos) continue;
      if (!out.empty()) out += ' ';
      out += token(t);
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocab file: " + path);
    for (const auto& t : tokens_) out << t << "\n";
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocab file: " + path);
    Vocab v;
    std::string line;
    int lineno = 0;
    static const char* reserved[4] = {"<pad>", "<s>", "</eos>", "<unk>"};
    while (std::getline(in, line)) {
      if (lineno < 4) {
        if (line != reserved[lineno])
          throw std::runtime_error("vocab file " + path + " line " +
                                   std::to_string(lineno + 1) + " must be " +
                                   reserved[lineno] + ", got \"" + line + "\"");
      } else {
        if (v.contains(line))
          throw std::runtime_error("vocab file " + path +
                                   " has duplicate token \"" + line + "\"");
        v.add_token(line);
      }
      ++lineno;
    }
    if (lineno < 4)
      throw std::runtime_error("vocab file " + path +
                               " is missing the reserved tokens");
    return v;
  }

  // Builds a vocab from whitespace-tokenized lines, keeping tokens seen at
  // least min_freq times. Insertion order: frequency descending, then token
  // string, so the result is deterministic.
  static Vocab build(const std::vector<std::string>& lines, int min_freq = 1) {
    std::map<std::string, long> counts;
    for (const auto& line : lines) {
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) ++counts[tok];
    }
    std::vector<std::pair<long, std::string>> ranked;
    ranked.reserve(counts.size());
    for (auto& [tok, c] : counts)
      if (c >= min_freq) ranked.emplace_back(-c, tok);
    std::sort(ranked.begin(), ranked.end());
    Vocab v;
    for (auto& [negc, tok] : ranked) v.add_token(tok);
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace beamstop
