#include "erasure/corpus.hpp"

#include <fstream>
#include <limits>
#include <string>

#include "erasure/error.hpp"

namespace erasure {

using json = nlohmann::json;

TokenCorpus load_corpus(const std::filesystem::path& path, std::optional<int> d_vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path.string() + "'");
  TokenCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool seen_document = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("corpus '" + path.string() + "' line " + std::to_string(line_no) +
                      ": " + e.what());
    }
    if (j.is_object() && !seen_document && corpus.metadata.empty()) {
      corpus.metadata = std::move(j);
      continue;
    }
    if (!j.is_array()) {
      throw DataError("corpus '" + path.string() + "' line " + std::to_string(line_no) +
                      ": expected an array of token ids");
    }
    std::vector<TokenId> doc;
    doc.reserve(j.size());
    for (const auto& v : j) {
      if (!v.is_number_integer()) {
        throw DataError("corpus '" + path.string() + "' line " + std::to_string(line_no) +
                        ": token ids must be integers");
      }
      const auto id = v.get<std::int64_t>();
      if (id < 0 || id > std::numeric_limits<TokenId>::max()) {
        throw DataError("corpus document " + std::to_string(corpus.documents.size()) +
                        " (line " + std::to_string(line_no) + "): token id " +
                        std::to_string(id) + " out of range");
      }
      doc.push_back(static_cast<TokenId>(id));
    }
    if (doc.empty()) {
      throw DataError("corpus document " + std::to_string(corpus.documents.size()) +
                      " (line " + std::to_string(line_no) + ") is empty");
    }
    corpus.documents.push_back(std::move(doc));
    seen_document = true;
  }
  if (corpus.documents.empty()) {
    throw DataError("corpus '" + path.string() + "' contains no documents");
  }
  if (d_vocab) validate(corpus, *d_vocab);
  return corpus;
}

void validate(const TokenCorpus& corpus, int d_vocab) {
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    for (TokenId id : corpus.documents[d]) {
      if (id < 0 || id >= d_vocab) {
        throw DataError("corpus document " + std::to_string(d) + " contains token id " +
                        std::to_string(id) + " >= d_vocab " + std::to_string(d_vocab));
      }
    }
  }
}

void save_corpus(const std::filesystem::path& path, const TokenCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  if (!corpus.metadata.empty()) out << corpus.metadata.dump() << '\n';
  for (const auto& doc : corpus.documents) out << json(doc).dump() << '\n';
  if (!out) throw DataError("failed writing corpus '" + path.string() + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed + (stream + 1) * 0x9E3779B97F4A7C15ULL);
}

std::uint64_t SampleStream::uniform(std::uint64_t n) {
  if (n == 0) throw UsageError("uniform: empty range");
  // Largest multiple of n representable in 64 bits; draws at or above it are
  // rejected.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
  std::uint64_t x = engine_();
  while (x > limit) x = engine_();
  return x % n;
}

std::vector<std::vector<TokenId>> sample(const TokenCorpus& corpus, std::size_t n,
                                         std::size_t len, std::uint64_t seed) {
  if (len == 0) throw UsageError("sample: length must be positive");
  std::vector<std::size_t> eligible;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (corpus.documents[d].size() >= len) eligible.push_back(d);
  }
  if (eligible.empty()) {
    throw DataError("sample: no corpus document has at least " + std::to_string(len) +
                    " tokens");
  }
  std::vector<std::vector<TokenId>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SampleStream doc_stream(seed, 2 * i);
    SampleStream offset_stream(seed, 2 * i + 1);
    const auto& doc = corpus.documents[eligible[doc_stream.uniform(eligible.size())]];
    const auto start = offset_stream.uniform(doc.size() - len + 1);
    out.emplace_back(doc.begin() + static_cast<std::ptrdiff_t>(start),
                     doc.begin() + static_cast<std::ptrdiff_t>(start + len));
  }
  return out;
}

std::vector<std::vector<TokenId>> sample_prefixes(const TokenCorpus& corpus, std::size_t n,
                                                  std::size_t len, std::uint64_t seed) {
  if (len == 0) throw UsageError("sample_prefixes: length must be positive");
  std::vector<std::size_t> eligible;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (corpus.documents[d].size() >= len) eligible.push_back(d);
  }
  if (eligible.empty()) {
    throw DataError("sample_prefixes: no corpus document has at least " + std::to_string(len) +
                    " tokens");
  }
  std::vector<std::vector<TokenId>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SampleStream doc_stream(seed, 2 * i);
    const auto& doc = corpus.documents[eligible[doc_stream.uniform(eligible.size())]];
    out.emplace_back(doc.begin(), doc.begin() + static_cast<std::ptrdiff_t>(len));
  }
  return out;
}

}  // namespace erasure
