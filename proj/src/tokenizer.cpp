#include "erasure/tokenizer.hpp"

#include <array>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "erasure/error.hpp"

namespace erasure {

using json = nlohmann::json;

namespace {

std::string utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

// Length in bytes of the UTF-8 sequence starting with lead byte c.
std::size_t utf8_len(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte; treat as a single unit
}

struct ByteTables {
  std::array<std::string, 256> encoder;
  std::unordered_map<std::string, unsigned char> decoder;

  ByteTables() {
    std::array<bool, 256> printable{};
    for (int b = '!'; b <= '~'; ++b) printable[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) {
      const char32_t cp = printable[b] ? static_cast<char32_t>(b) : next++;
      encoder[b] = utf8(cp);
      decoder[encoder[b]] = static_cast<unsigned char>(b);
    }
  }
};

const ByteTables& tables() {
  static const ByteTables t;
  return t;
}

enum class CharClass { Letter, Digit, Space, Other };

CharClass classify(unsigned char c) {
  if (c >= 0x80) return CharClass::Letter;
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return CharClass::Letter;
  if (c >= '0' && c <= '9') return CharClass::Digit;
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
    return CharClass::Space;
  }
  return CharClass::Other;
}

std::pair<std::string, std::string> split_merge(const std::string& m) {
  const auto sp = m.find(' ');
  if (sp == std::string::npos || sp == 0 || sp + 1 >= m.size()) {
    throw DataError("malformed merge rule '" + m + "'");
  }
  return {m.substr(0, sp), m.substr(sp + 1)};
}

}  // namespace

const std::string& byte_to_unicode(unsigned char b) { return tables().encoder[b]; }

std::string bytes_to_symbols(std::string_view bytes) {
  std::string out;
  for (unsigned char b : bytes) out += tables().encoder[b];
  return out;
}

std::string symbols_to_bytes(std::string_view symbols) {
  std::string out;
  std::size_t i = 0;
  while (i < symbols.size()) {
    const auto n = utf8_len(static_cast<unsigned char>(symbols[i]));
    const std::string cp(symbols.substr(i, n));
    const auto it = tables().decoder.find(cp);
    if (it == tables().decoder.end()) {
      throw DataError("token text contains a symbol outside the byte alphabet");
    }
    out += static_cast<char>(it->second);
    i += n;
  }
  return out;
}

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  const auto cls = [&](std::size_t i) { return classify(static_cast<unsigned char>(text[i])); };
  // End of the run of characters of class c starting at i.
  const auto run_end = [&](std::size_t i, CharClass c) {
    while (i < n && cls(i) == c) i += utf8_len(static_cast<unsigned char>(text[i]));
    return std::min(i, n);
  };

  std::size_t i = 0;
  while (i < n) {
    if (text[i] == '\'') {
      bool matched = false;
      for (std::string_view suffix : {"re", "ve", "ll", "s", "t", "m", "d"}) {
        if (text.substr(i + 1, suffix.size()) == suffix) {
          out.emplace_back(text.substr(i, 1 + suffix.size()));
          i += 1 + suffix.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    const std::size_t body = (text[i] == ' ' && i + 1 < n && cls(i + 1) != CharClass::Space)
                                 ? i + 1
                                 : i;
    const CharClass c = cls(body);
    if (c != CharClass::Space) {
      const std::size_t end = run_end(body, c);
      out.emplace_back(text.substr(i, end - i));
      i = end;
      continue;
    }
    const std::size_t end = run_end(i, CharClass::Space);
    // \s+(?!\S) leaves the last whitespace character for the next token when
    // a non-space follows; a lone whitespace character falls through to \s+.
    const std::size_t take = (end < n && end - i > 1) ? end - i - 1 : end - i;
    out.emplace_back(text.substr(i, take));
    i += take;
  }
  return out;
}

Vocabulary::Vocabulary(std::unordered_map<std::string, TokenId> vocab,
                       std::vector<std::pair<std::string, std::string>> merges,
                       std::optional<TokenId> bos)
    : token_to_id_(std::move(vocab)), merges_(std::move(merges)), bos_(bos) {
  if (token_to_id_.empty()) throw DataError("vocabulary is empty");
  TokenId max_id = 0;
  for (const auto& [tok, id] : token_to_id_) {
    if (id < 0) throw DataError("vocabulary id for '" + tok + "' is negative");
    max_id = std::max(max_id, id);
  }
  id_to_token_.resize(static_cast<std::size_t>(max_id) + 1);
  for (const auto& [tok, id] : token_to_id_) id_to_token_[id] = tok;
  for (std::size_t r = 0; r < merges_.size(); ++r) ranks_.emplace(merges_[r], r);
  if (bos_ && (*bos_ < 0 || *bos_ > max_id)) throw DataError("bos token id out of range");
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("vocabulary '" + path.string() + "' is not valid JSON: " + e.what());
  }
  const json& body = doc.contains("model") && doc["model"].is_object() ? doc["model"] : doc;
  if (!body.contains("vocab") || !body["vocab"].is_object()) {
    throw DataError("vocabulary '" + path.string() + "' has no \"vocab\" object");
  }
  std::unordered_map<std::string, TokenId> vocab;
  for (const auto& [tok, id] : body["vocab"].items()) vocab.emplace(tok, id.get<TokenId>());
  std::vector<std::pair<std::string, std::string>> merges;
  if (body.contains("merges")) {
    for (const auto& m : body["merges"]) {
      if (m.is_string()) {
        merges.push_back(split_merge(m.get<std::string>()));
      } else if (m.is_array() && m.size() == 2) {
        merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
      } else {
        throw DataError("vocabulary '" + path.string() + "' has a malformed merge entry");
      }
    }
  }
  std::optional<TokenId> bos;
  if (doc.contains("bos_token") && doc["bos_token"].is_string()) {
    const auto name = doc["bos_token"].get<std::string>();
    const auto it = vocab.find(name);
    if (it == vocab.end()) throw DataError("bos token '" + name + "' is not in the vocabulary");
    bos = it->second;
  }
  return Vocabulary(std::move(vocab), std::move(merges), bos);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  json vocab = json::object();
  for (const auto& [tok, id] : token_to_id_) vocab[tok] = id;
  json merges = json::array();
  for (const auto& [a, b] : merges_) merges.push_back(a + " " + b);
  json doc = {{"vocab", vocab}, {"merges", merges}};
  if (bos_) doc["bos_token"] = id_to_token_[*bos_];
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << doc.dump() << '\n';
}

std::vector<std::string> Vocabulary::bpe(const std::string& word) const {
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < word.size();) {
    const auto n = utf8_len(static_cast<unsigned char>(word[i]));
    parts.push_back(word.substr(i, n));
    i += n;
  }
  while (parts.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::pair<std::string, std::string> best;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      const auto it = ranks_.find({parts[i], parts[i + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = it->first;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    std::vector<std::string> merged;
    for (std::size_t i = 0; i < parts.size();) {
      if (i + 1 < parts.size() && parts[i] == best.first && parts[i + 1] == best.second) {
        merged.push_back(parts[i] + parts[i + 1]);
        i += 2;
      } else {
        merged.push_back(parts[i]);
        ++i;
      }
    }
    parts = std::move(merged);
  }
  return parts;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& word : pretokenize(text)) {
    for (const auto& piece : bpe(bytes_to_symbols(word))) {
      const auto it = token_to_id_.find(piece);
      if (it == token_to_id_.end()) {
        throw DataError("token '" + piece + "' produced by BPE is missing from the vocabulary");
      }
      out.push_back(it->second);
    }
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string symbols;
  for (TokenId id : ids) symbols += token_of(id);
  return symbols_to_bytes(symbols);
}

std::optional<TokenId> Vocabulary::id_of(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size() ||
      (id_to_token_[id].empty())) {
    throw DataError("token id " + std::to_string(id) + " is not in the vocabulary");
  }
  return id_to_token_[id];
}

std::string Vocabulary::text_of(TokenId id) const {
  const TokenId ids[] = {id};
  try {
    return decode(ids);
  } catch (const DataError&) {
    return token_of(id);  // special tokens are not in the byte alphabet
  }
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  return vocab.encode(text);
}

const std::vector<PromptFixture>& adversarial_fixtures() {
  static const std::vector<PromptFixture> fixtures = {
      {"prompt1", "It's in the cupboard, either on the top or on the", {" bottom", " top"}, 1.07},
      {"prompt2", "I went to university at Michigan", {" State", " University"}, 1.89},
      {"prompt3", "class MyClass:\n\tdef", {" __", " get"}, 3.02},
      {"prompt4", "The church I go to is the Seventh-day Adventist", {" Church", " church"}, 0.94},
  };
  return fixtures;
}

}  // namespace erasure
