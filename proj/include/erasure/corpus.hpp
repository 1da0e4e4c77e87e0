#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "erasure/model.hpp"

namespace erasure {

struct TokenCorpus {
  std::vector<std::vector<TokenId>> documents;
  nlohmann::json metadata = nlohmann::json::object();
};

// JSON-lines: an optional leading metadata object, then one JSON array of
// token ids per line. Blank lines are ignored. When d_vocab is given, ids are
// range-checked and the offending document is named in the error.
TokenCorpus load_corpus(const std::filesystem::path& path,
                        std::optional<int> d_vocab = std::nullopt);
void save_corpus(const std::filesystem::path& path, const TokenCorpus& corpus);

// Throws DataError naming the first document with an id >= d_vocab.
void validate(const TokenCorpus& corpus, int d_vocab);

// Seeded sampling streams.
//
// Sample i draws its document from stream (seed, 2i) and its start offset from
// stream (seed, 2i+1). A stream is std::mt19937_64 seeded with
// splitmix64(seed + (stream+1) * 0x9E3779B97F4A7C15), and bounded integers use
// rejection sampling on the raw 64-bit outputs, so the draws do not depend on
// the standard library's distribution implementations.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

// Uniform integer in [0, n) from the given stream's generator.
class SampleStream {
 public:
  SampleStream(std::uint64_t seed, std::uint64_t stream)
      : engine_(stream_seed(seed, stream)) {}

  std::uint64_t uniform(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

// n windows of exactly len tokens. Documents are chosen uniformly among those
// with at least len tokens; the window start is uniform within the document.
std::vector<std::vector<TokenId>> sample(const TokenCorpus& corpus, std::size_t n,
                                         std::size_t len, std::uint64_t seed);

}  // namespace erasure

namespace erasure {

// n document prefixes of exactly len tokens, documents drawn uniformly (with
// replacement) among those with at least len tokens. Donor prompts for head
// input patching come from here.
std::vector<std::vector<TokenId>> sample_prefixes(const TokenCorpus& corpus, std::size_t n,
                                                  std::size_t len, std::uint64_t seed);

}  // namespace erasure
