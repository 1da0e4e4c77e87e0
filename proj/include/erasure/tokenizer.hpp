#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "erasure/model.hpp"

namespace erasure {

// Byte-level BPE vocabulary: token strings use the GPT-2 byte-to-unicode
// alphabet (e.g. a leading space is "Ġ", newline "Ċ", tab "ĉ").
class Vocabulary {
 public:
  Vocabulary(std::unordered_map<std::string, TokenId> vocab,
             std::vector<std::pair<std::string, std::string>> merges,
             std::optional<TokenId> bos = std::nullopt);

  // Bundle JSON: {"vocab": {token: id}, "merges": ["a b", ...], "bos_token": "..."}.
  // The "model" object of a tokenizer.json file is accepted as well.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::optional<TokenId> id_of(std::string_view token) const;
  const std::string& token_of(TokenId id) const;
  // Decoded text of a single token (e.g. " bottom").
  std::string text_of(TokenId id) const;

  std::optional<TokenId> bos() const { return bos_; }
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

 private:
  std::vector<std::string> bpe(const std::string& word) const;

  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
  std::optional<TokenId> bos_;
};

// Splits text the way the GPT-2 pre-tokenizer regex does:
//   's|'t|'re|'ve|'m|'ll|'d| ?L+| ?N+| ?[^\s L N]+|\s+(?!\S)|\s+
// Letters are ASCII letters plus every non-ASCII code point; numbers are
// ASCII digits.
std::vector<std::string> pretokenize(std::string_view text);

// GPT-2's reversible byte <-> printable-unicode mapping (UTF-8 encoded).
const std::string& byte_to_unicode(unsigned char b);
std::string bytes_to_symbols(std::string_view bytes);
std::string symbols_to_bytes(std::string_view symbols);

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);

// Prompts whose top-1 token aligns with the L0H2 output direction in the
// GELU-4L model, with the reported top-2 tokens and logit differences.
struct PromptFixture {
  std::string name;
  std::string text;
  std::pair<std::string, std::string> expected_top2;
  double expected_logit_diff = 0.0;
};

const std::vector<PromptFixture>& adversarial_fixtures();

}  // namespace erasure
