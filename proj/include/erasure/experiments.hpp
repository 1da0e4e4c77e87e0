#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "erasure/analysis.hpp"
#include "erasure/corpus.hpp"
#include "erasure/model.hpp"
#include "erasure/tokenizer.hpp"

namespace erasure {

inline constexpr int kReportFormatVersion = 1;

struct ExperimentOptions {
  std::size_t n = 300;
  std::size_t len = 128;
  std::uint64_t seed = 0;
  bool include_pos0 = false;
  double threshold = kDefaultEraserThreshold;
  double eps_b = kDefaultEpsB;
  bool patch_vcomp = false;
  // Writer / scan target / adversarial target head.
  ComponentId component = ComponentId::attn_head(0, 2);
  // nullopt means "identify them with a scan over the same samples".
  std::optional<std::vector<ComponentId>> erasers;
  // Layers to scan; empty means every layer after the target's.
  std::vector<int> layers;
  // Donor prompts per fixture for the adversarial command.
  std::size_t donors = 300;
  // Prepend the vocabulary's BOS token to fixture prompts and donors.
  bool prepend_bos = true;
  // Worker threads; 0 picks the hardware concurrency. Not part of the report.
  unsigned threads = 0;
};

nlohmann::json options_to_json(const ExperimentOptions& o);
// Missing keys keep their defaults. Throws UsageError on bad values.
ExperimentOptions options_from_json(const nlohmann::json& j);

// Runs fn(i) for i in [0, n) on a pool of worker threads. Callers write into
// per-index slots, so results do not depend on scheduling.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

// Each command returns a self-describing JSON run report:
//   {format_version, command, config, model, conventions, tables, ...}
// Tables have the form {"columns": [...], "rows": [[...], ...]}.
nlohmann::json run_trace_writer(const Model& model, const TokenCorpus& corpus,
                                const ExperimentOptions& opts);
nlohmann::json run_scan_erasers(const Model& model, const TokenCorpus& corpus,
                                const ExperimentOptions& opts);
nlohmann::json run_patch_vcomp(const Model& model, const TokenCorpus& corpus,
                               const ExperimentOptions& opts);
nlohmann::json run_dla_correlate(const Model& model, const TokenCorpus& corpus,
                                 const ExperimentOptions& opts);
nlohmann::json run_adversarial(const Model& model, const Vocabulary& vocab,
                               const TokenCorpus& corpus, const ExperimentOptions& opts,
                               const std::vector<PromptFixture>& fixtures = adversarial_fixtures());

// Compares the engine against a reference-logits fixture file:
//   {"fixtures": [{"name", "prompt", "tokens", "top_k_ids", "top_k_logits"}]}
nlohmann::json run_verify_reference(const Model& model, const nlohmann::json& fixtures,
                                    double tolerance = 1e-2);

// Eraser scan result shared by several commands.
struct EraserScan {
  std::map<ComponentId, QuantileSummary> summaries;
  std::map<ComponentId, std::size_t> excluded;
  std::vector<ComponentId> erasers;
  std::optional<QuantileSummary> summed;  // PR(sum of eraser outputs, target)
};

EraserScan scan_erasers(const Model& model, const std::vector<std::vector<TokenId>>& samples,
                        const ComponentId& target, const std::vector<ComponentId>& candidates,
                        const ExperimentOptions& opts);

// Heads and MLPs in the requested layers (default: all layers after target).
std::vector<ComponentId> scan_candidates(const ModelConfig& cfg, const ComponentId& target,
                                         const std::vector<int>& layers);

nlohmann::json summary_json(const QuantileSummary& s);

}  // namespace erasure
