// Command-line driver: one subcommand per experiment, JSON and CSV reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "erasure/erasure.h"

namespace {

using json = nlohmann::json;

struct Failure {
  int code;
  std::string message;
};

void check(ers_status s, const std::string& context) {
  if (s != ERS_OK) throw Failure{static_cast<int>(s), context + ": " + ers_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ModelPtr = std::unique_ptr<ers_model, Deleter<ers_model, ers_model_free>>;
using CorpusPtr = std::unique_ptr<ers_corpus, Deleter<ers_corpus, ers_corpus_free>>;
using VocabPtr = std::unique_ptr<ers_vocab, Deleter<ers_vocab, ers_vocab_free>>;

std::string take_string(char* s) {
  std::string out(s);
  ers_string_free(s);
  return out;
}

// Flags shared by the experiment subcommands; unset flags fall back to the
// config file, then to library defaults.
struct Flags {
  std::string config, model, corpus, vocab, out, format, component, fixtures;
  std::size_t n = 0, len = 0, donors = 0;
  std::uint64_t seed = 0;
  double threshold = 0.0, tolerance = 0.0;
  bool patch_vcomp = false, include_pos0 = false, no_bos = false;
  std::string erasers;
  std::vector<int> layers;
  unsigned threads = 0;
};

struct Bound {
  CLI::App* app;
  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

Bound bind(CLI::App* app, Flags& f, bool experiment) {
  Bound b{app, {}};
  b.opts["config"] = app->add_option("--config", f.config, "JSON config file mirroring the flags");
  b.opts["model"] = app->add_option("--model", f.model, "weight interchange file");
  b.opts["out"] = app->add_option("--out", f.out, "output directory (default: JSON to stdout)");
  b.opts["format"] = app->add_option("--format", f.format, "json, csv or both")
                         ->check(CLI::IsMember({"json", "csv", "both"}));
  b.opts["threads"] = app->add_option("--threads", f.threads, "worker threads (0 = all cores)");
  if (!experiment) return b;
  b.opts["corpus"] = app->add_option("--corpus", f.corpus, "token corpus (JSON lines)");
  b.opts["vocab"] = app->add_option("--vocab", f.vocab, "vocabulary bundle");
  b.opts["n"] = app->add_option("--n", f.n, "number of samples");
  b.opts["len"] = app->add_option("--len", f.len, "tokens per sample");
  b.opts["seed"] = app->add_option("--seed", f.seed, "sampling seed");
  b.opts["threshold"] = app->add_option("--threshold", f.threshold, "eraser q75 threshold");
  b.opts["patch_vcomp"] = app->add_flag("--patch-vcomp", f.patch_vcomp,
                                        "overlay the V-composition patched trace");
  b.opts["include_pos0"] =
      app->add_flag("--include-pos0", f.include_pos0, "include position 0 in aggregates");
  b.opts["component"] = app->add_option("--component,--writer,--target", f.component,
                                        "writer / target component, e.g. L0H2");
  b.opts["erasers"] = app->add_option("--erasers", f.erasers,
                                      "comma-separated eraser heads (default: scan)");
  b.opts["layers"] = app->add_option("--layers", f.layers, "layers to scan")->delimiter(',');
  b.opts["donors"] = app->add_option("--donors", f.donors, "donor prompts per fixture");
  b.opts["no_bos"] = app->add_flag("--no-bos", f.no_bos, "do not prepend the BOS token");
  return b;
}

// Merges the config file with explicitly given flags (flags win).
json merged_config(const Bound& b, const Flags& f) {
  json cfg = json::object();
  if (b.given("config")) {
    std::ifstream in(f.config);
    if (!in) throw Failure{3, "cannot open config '" + f.config + "'"};
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      throw Failure{2, "config '" + f.config + "' is not valid JSON: " + e.what()};
    }
    if (!cfg.is_object()) throw Failure{2, "config must be a JSON object"};
  }
  const auto set = [&](const char* flag, const char* key, const json& value) {
    if (b.given(flag)) cfg[key] = value;
  };
  set("model", "model", f.model);
  set("corpus", "corpus", f.corpus);
  set("vocab", "vocab", f.vocab);
  set("out", "out", f.out);
  set("format", "format", f.format);
  set("threads", "threads", f.threads);
  set("n", "n", f.n);
  set("len", "len", f.len);
  set("seed", "seed", f.seed);
  set("threshold", "threshold", f.threshold);
  set("patch_vcomp", "patch_vcomp", f.patch_vcomp);
  set("include_pos0", "include_pos0", f.include_pos0);
  set("component", "component", f.component);
  set("layers", "layers", f.layers);
  set("donors", "donors", f.donors);
  if (b.given("no_bos")) cfg["prepend_bos"] = !f.no_bos;
  if (b.given("erasers")) {
    json list = json::array();
    std::string item;
    for (char ch : f.erasers + ",") {
      if (ch == ',') {
        if (!item.empty()) list.push_back(item);
        item.clear();
      } else if (ch != ' ') {
        item += ch;
      }
    }
    cfg["erasers"] = list;
  }
  return cfg;
}

std::string require_path(const json& cfg, const char* key) {
  if (!cfg.contains(key) || !cfg[key].is_string() || cfg[key].get<std::string>().empty()) {
    throw Failure{2, std::string("--") + key + " is required"};
  }
  return cfg[key].get<std::string>();
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n\r\t") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  return v.dump();
}

void write_outputs(const json& cfg, const std::string& command, const json& report) {
  const std::string format = cfg.value("format", std::string("json"));
  if (!cfg.contains("out")) {
    std::cout << report.dump(2) << '\n';
    return;
  }
  const std::filesystem::path dir = cfg["out"].get<std::string>();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Failure{3, "cannot create output directory '" + dir.string() + "'"};
  if (format == "json" || format == "both") {
    std::ofstream out(dir / (command + ".json"));
    out << report.dump(2) << '\n';
    if (!out) throw Failure{3, "failed writing report"};
  }
  if (format == "csv" || format == "both") {
    for (const auto& [name, table] : report.at("tables").items()) {
      std::ofstream out(dir / (command + "_" + name + ".csv"));
      const auto& cols = table.at("columns");
      for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << csv_cell(cols[i]);
      out << '\n';
      for (const auto& row : table.at("rows")) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
        out << '\n';
      }
      if (!out) throw Failure{3, "failed writing CSV table " + name};
    }
  }
}

int run_experiment(const std::string& command, const Bound& b, const Flags& f) {
  json cfg = merged_config(b, f);
  ers_model* raw_model = nullptr;
  check(ers_model_load(require_path(cfg, "model").c_str(), &raw_model), "loading model");
  ModelPtr model(raw_model);

  ers_corpus* raw_corpus = nullptr;
  check(ers_corpus_load(require_path(cfg, "corpus").c_str(), model.get(), &raw_corpus),
        "loading corpus");
  CorpusPtr corpus(raw_corpus);

  VocabPtr vocab;
  if (command == "adversarial") {
    ers_vocab* raw_vocab = nullptr;
    check(ers_vocab_load(require_path(cfg, "vocab").c_str(), &raw_vocab), "loading vocabulary");
    vocab.reset(raw_vocab);
  }

  json options = cfg;
  for (const char* key : {"model", "corpus", "vocab", "out", "format"}) options.erase(key);
  char* out = nullptr;
  check(ers_run(command.c_str(), model.get(), corpus.get(), vocab.get(), options.dump().c_str(),
                &out),
        command);
  write_outputs(cfg, command, json::parse(take_string(out)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual-stream erasure analysis for GPT-2-style transformers"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> experiments = {
      {"trace-writer", "projection ratio of a component's output across the residual stream"},
      {"scan-erasers", "projection ratios of later components onto a target; flags erasers"},
      {"patch-vcomp", "clean vs V-composition-ablated projection ratios"},
      {"dla-correlate", "writer DLA vs erasure-isolated DLA, with a linear fit"},
      {"adversarial", "DLA logit differences under head input patching on fixture prompts"},
  };
  std::map<std::string, std::pair<Flags, Bound>> bound;
  for (const auto& [name, help] : experiments) {
    auto& slot = bound[name];
    slot.second = bind(app.add_subcommand(name, help), slot.first, true);
  }

  Flags verify_flags;
  auto* verify = app.add_subcommand("verify-reference", "compare logits against reference fixtures");
  Bound verify_bound = bind(verify, verify_flags, false);
  verify->add_option("--fixtures", verify_flags.fixtures, "reference logits JSON")->required();
  verify->add_option("--tolerance", verify_flags.tolerance, "max abs logit difference")
      ->default_val(1e-2);

  std::string tc_vocab, tc_text, tc_out;
  auto* tokenize_corpus =
      app.add_subcommand("tokenize-corpus", "tokenize a text file (one document per line)");
  tokenize_corpus->add_option("--vocab", tc_vocab, "vocabulary bundle")->required();
  tokenize_corpus->add_option("--text", tc_text, "input text file")->required();
  tokenize_corpus->add_option("--output", tc_out, "output corpus path")->required();

  std::string info_model;
  auto* info = app.add_subcommand("info", "print the model config");
  info->add_option("--model", info_model, "weight interchange file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (auto& [name, slot] : bound) {
      if (slot.second.app->parsed()) return run_experiment(name, slot.second, slot.first);
    }
    if (verify->parsed()) {
      json cfg = merged_config(verify_bound, verify_flags);
      ers_model* raw = nullptr;
      check(ers_model_load(require_path(cfg, "model").c_str(), &raw), "loading model");
      ModelPtr model(raw);
      const json options = {{"fixtures_path", verify_flags.fixtures},
                            {"tolerance", verify_flags.tolerance}};
      char* out = nullptr;
      check(ers_run("verify-reference", model.get(), nullptr, nullptr, options.dump().c_str(), &out),
            "verify-reference");
      const json report = json::parse(take_string(out));
      write_outputs(cfg, "verify-reference", report);
      return report.value("pass", false) ? 0 : 4;
    }
    if (tokenize_corpus->parsed()) {
      ers_vocab* raw = nullptr;
      check(ers_vocab_load(tc_vocab.c_str(), &raw), "loading vocabulary");
      VocabPtr vocab(raw);
      check(ers_corpus_from_text(vocab.get(), tc_text.c_str(), tc_out.c_str()), "tokenizing");
      return 0;
    }
    if (info->parsed()) {
      ers_model* raw = nullptr;
      check(ers_model_load(info_model.c_str(), &raw), "loading model");
      ModelPtr model(raw);
      char* out = nullptr;
      check(ers_model_info(model.get(), &out), "info");
      std::cout << json::parse(take_string(out)).dump(2) << '\n';
      return 0;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  }
  return 2;
}
