#include "erasure/erasure.h"

#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "erasure/analysis.hpp"
#include "erasure/corpus.hpp"
#include "erasure/dla.hpp"
#include "erasure/error.hpp"
#include "erasure/experiments.hpp"
#include "erasure/interventions.hpp"
#include "erasure/model.hpp"
#include "erasure/tokenizer.hpp"

struct ers_model {
  erasure::Model model;
};
struct ers_corpus {
  erasure::TokenCorpus corpus;
};
struct ers_vocab {
  erasure::Vocabulary vocab;
};
struct ers_cache {
  erasure::ActivationCache cache;
};

namespace {

using json = nlohmann::json;

thread_local std::string last_error;

template <typename Fn>
ers_status guarded(Fn&& fn) noexcept {
  try {
    last_error.clear();
    fn();
    return ERS_OK;
  } catch (const erasure::Error& e) {
    last_error = e.what();
    return static_cast<ers_status>(e.kind());
  } catch (const json::exception& e) {
    last_error = e.what();
    return ERS_ERR_USAGE;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return ERS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return ERS_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return ERS_ERR_INTERNAL;
  }
}

template <typename T>
void require(const T* p, const char* what) {
  if (p == nullptr) throw erasure::UsageError(std::string(what) + " must not be NULL");
}

// Token texts can be partial UTF-8 sequences; those bytes become U+FFFD.
std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

char* duplicate(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void copy_out(const erasure::Matrix& m, float* out, size_t cap, size_t* rows, size_t* cols) {
  require(rows, "rows");
  require(cols, "cols");
  *rows = m.rows();
  *cols = m.cols();
  if (out == nullptr) return;  // shape query
  if (cap < m.size()) {
    throw erasure::UsageError("output buffer holds " + std::to_string(cap) + " floats, need " +
                              std::to_string(m.size()));
  }
  std::memcpy(out, m.values().data(), m.size() * sizeof(float));
}

std::span<const erasure::TokenId> token_span(const int32_t* tokens, size_t n) {
  if (n > 0) require(tokens, "tokens");
  return {tokens, n};
}

}  // namespace

extern "C" {

const char* ers_last_error(void) { return last_error.c_str(); }

const char* ers_version(void) { return "1.0.0"; }

void ers_string_free(char* s) { delete[] s; }

ers_status ers_model_load(const char* path, ers_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ers_model{erasure::load_weights(path)};
  });
}

ers_status ers_model_save(const ers_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    erasure::save_weights(path, model->model);
  });
}

void ers_model_free(ers_model* model) { delete model; }

ers_status ers_model_info(const ers_model* model, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    const auto& c = model->model.config;
    const json info = {{"name", model->model.name},
                       {"n_layers", c.n_layers},
                       {"d_model", c.d_model},
                       {"n_heads", c.n_heads},
                       {"d_head", c.d_head},
                       {"d_mlp", c.d_mlp},
                       {"d_vocab", c.d_vocab},
                       {"n_ctx", c.n_ctx},
                       {"ln_eps", c.ln_eps},
                       {"gelu_variant", erasure::to_string(c.gelu_variant)}};
    *out_json = duplicate(dump(info));
  });
}

ers_status ers_corpus_load(const char* path, const ers_model* model, ers_corpus** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    std::optional<int> d_vocab;
    if (model != nullptr) d_vocab = model->model.config.d_vocab;
    *out = new ers_corpus{erasure::load_corpus(path, d_vocab)};
  });
}

ers_status ers_corpus_size(const ers_corpus* corpus, size_t* out_documents) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out_documents, "out_documents");
    *out_documents = corpus->corpus.documents.size();
  });
}

void ers_corpus_free(ers_corpus* corpus) { delete corpus; }

ers_status ers_corpus_from_text(const ers_vocab* vocab, const char* text_path,
                                const char* out_path) {
  return guarded([&] {
    require(vocab, "vocab");
    require(text_path, "text_path");
    require(out_path, "out_path");
    std::ifstream in(text_path);
    if (!in) throw erasure::DataError(std::string("cannot open '") + text_path + "'");
    erasure::TokenCorpus corpus;
    corpus.metadata = {{"source", text_path}};
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto ids = vocab->vocab.encode(line);
      if (!ids.empty()) corpus.documents.push_back(std::move(ids));
    }
    if (corpus.documents.empty()) {
      throw erasure::DataError(std::string("'") + text_path + "' has no text");
    }
    erasure::save_corpus(out_path, corpus);
  });
}

ers_status ers_vocab_load(const char* path, ers_vocab** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ers_vocab{erasure::Vocabulary::load(path)};
  });
}

void ers_vocab_free(ers_vocab* vocab) { delete vocab; }

ers_status ers_tokenize(const ers_vocab* vocab, const char* text, int32_t* out, size_t cap,
                        size_t* out_len) {
  return guarded([&] {
    require(vocab, "vocab");
    require(text, "text");
    require(out_len, "out_len");
    const auto ids = vocab->vocab.encode(text);
    *out_len = ids.size();
    if (out != nullptr) std::memcpy(out, ids.data(), std::min(cap, ids.size()) * sizeof(int32_t));
  });
}

ers_status ers_decode(const ers_vocab* vocab, const int32_t* ids, size_t n, char** out_text) {
  return guarded([&] {
    require(vocab, "vocab");
    require(out_text, "out_text");
    *out_text = duplicate(vocab->vocab.decode(token_span(ids, n)));
  });
}

ers_status ers_forward(const ers_model* model, const int32_t* tokens, size_t n,
                       const char* plan_json, ers_cache** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    const auto span = token_span(tokens, n);
    if (plan_json == nullptr) {
      *out = new ers_cache{erasure::forward(model->model, span)};
      return;
    }
    const auto plan = erasure::plan_from_json(json::parse(plan_json));
    *out = new ers_cache{erasure::apply_plan(model->model, span, plan)};
  });
}

void ers_cache_free(ers_cache* cache) { delete cache; }

ers_status ers_cache_seq_len(const ers_cache* cache, size_t* out) {
  return guarded([&] {
    require(cache, "cache");
    require(out, "out");
    *out = cache->cache.seq_len();
  });
}

ers_status ers_cache_resid(const ers_cache* cache, const char* checkpoint, float* out,
                           size_t cap, size_t* rows, size_t* cols) {
  return guarded([&] {
    require(cache, "cache");
    require(checkpoint, "checkpoint");
    copy_out(cache->cache.resid_at(erasure::parse_checkpoint(checkpoint)), out, cap, rows, cols);
  });
}

ers_status ers_cache_component(const ers_cache* cache, const char* component, float* out,
                               size_t cap, size_t* rows, size_t* cols) {
  return guarded([&] {
    require(cache, "cache");
    require(component, "component");
    copy_out(cache->cache.output(erasure::parse_component(component)), out, cap, rows, cols);
  });
}

ers_status ers_cache_logits(const ers_cache* cache, float* out, size_t cap, size_t* rows,
                            size_t* cols) {
  return guarded([&] {
    require(cache, "cache");
    copy_out(cache->cache.logits, out, cap, rows, cols);
  });
}

ers_status ers_projection_ratio(const float* a, const float* b, size_t n, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = erasure::projection_ratio({a, n}, {b, n});
  });
}

ers_status ers_top2(const ers_cache* cache, size_t pos, int32_t* token_a, int32_t* token_b) {
  return guarded([&] {
    require(cache, "cache");
    require(token_a, "token_a");
    require(token_b, "token_b");
    const auto spec = erasure::top2(cache->cache, pos);
    *token_a = spec.token_a;
    *token_b = spec.token_b;
  });
}

ers_status ers_logit_diff(const ers_model* model, const ers_cache* cache, const char* component,
                          size_t pos, int32_t token_a, int32_t token_b, double* out) {
  return guarded([&] {
    require(model, "model");
    require(cache, "cache");
    require(component, "component");
    require(out, "out");
    const auto c = erasure::parse_component(component);
    erasure::validate(c, model->model.config);
    *out = erasure::logit_diff(model->model, cache->cache, c, {token_a, token_b, pos});
  });
}

ers_status ers_run(const char* command, const ers_model* model, const ers_corpus* corpus,
                   const ers_vocab* vocab, const char* options_json, char** out_report_json) {
  return guarded([&] {
    require(command, "command");
    require(model, "model");
    require(out_report_json, "out_report_json");
    const json options = options_json ? json::parse(options_json) : json::object();
    const std::string cmd = command;
    const auto& m = model->model;
    if (cmd == "verify-reference") {
      const auto path = options.at("fixtures_path").get<std::string>();
      std::ifstream in(path);
      if (!in) throw erasure::DataError("cannot open reference fixtures '" + path + "'");
      json fixtures;
      try {
        fixtures = json::parse(in);
      } catch (const json::exception& e) {
        throw erasure::DataError("reference fixtures '" + path + "' are not valid JSON: " + e.what());
      }
      *out_report_json = duplicate(
          dump(erasure::run_verify_reference(m, fixtures, options.value("tolerance", 1e-2))));
      return;
    }
    require(corpus, "corpus");
    const auto opts = erasure::options_from_json(options);
    json report;
    if (cmd == "trace-writer") {
      report = erasure::run_trace_writer(m, corpus->corpus, opts);
    } else if (cmd == "scan-erasers") {
      report = erasure::run_scan_erasers(m, corpus->corpus, opts);
    } else if (cmd == "patch-vcomp") {
      report = erasure::run_patch_vcomp(m, corpus->corpus, opts);
    } else if (cmd == "dla-correlate") {
      report = erasure::run_dla_correlate(m, corpus->corpus, opts);
    } else if (cmd == "adversarial") {
      require(vocab, "vocab");
      report = erasure::run_adversarial(m, vocab->vocab, corpus->corpus, opts);
    } else {
      throw erasure::UsageError("unknown command '" + cmd + "'");
    }
    *out_report_json = duplicate(dump(report));
  });
}

}  // extern "C"
