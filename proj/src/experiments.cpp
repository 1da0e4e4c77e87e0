#include "erasure/experiments.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

#include "erasure/dla.hpp"
#include "erasure/error.hpp"
#include "erasure/interventions.hpp"

namespace erasure {

using json = nlohmann::json;

namespace {

json table(std::vector<std::string> columns) {
  return {{"columns", std::move(columns)}, {"rows", json::array()}};
}

json model_json(const Model& model) {
  const auto& c = model.config;
  return {{"name", model.name},
          {"n_layers", c.n_layers},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"d_head", c.d_head},
          {"d_mlp", c.d_mlp},
          {"d_vocab", c.d_vocab},
          {"n_ctx", c.n_ctx},
          {"ln_eps", c.ln_eps},
          {"gelu_variant", to_string(c.gelu_variant)}};
}

json conventions() {
  return {
      {"projection_ratio", "PR(a,b) = (a.b)/||b||^2, accumulated in float64"},
      {"resid_trace", "PR(resid[checkpoint][pos], component_out[pos])"},
      {"component_matrix",
       "PR(candidate_out[pos], target_out[pos]); -1 means the candidate fully cancels the target"},
      {"summed_erasers", "PR(sum of eraser outputs, target_out), equal to the sum of per-eraser PRs"},
      {"quantiles", "linear interpolation between order statistics, position (n-1)q"},
      {"pooling", "per-(sample, position) values pooled before quantiles"},
      {"position0", "excluded unless include_pos0"},
      {"degenerate_reference", "positions with ||b||^2 < eps_b are excluded and counted"},
      {"dla",
       "final layernorm frozen at the run's per-position scale, component mean-centred, "
       "gamma folded into W_U; b_U and LN beta excluded"},
      {"logit_diff", "logit(token_a) - logit(token_b) for the run's top-2 tokens, ties to the lower id"},
      {"vcomp_patch", "value input of each eraser head = resid_pre - writer output (same run)"},
      {"head_input_patch", "query, key and value inputs of the head all taken from the donor residual"},
  };
}

json base_report(const std::string& command, const Model& model, const ExperimentOptions& opts) {
  return {{"format_version", kReportFormatVersion},
          {"command", command},
          {"config", options_to_json(opts)},
          {"seed", opts.seed},
          {"model", model_json(model)},
          {"conventions", conventions()},
          {"tables", json::object()}};
}

json summary_row_tail(const QuantileSummary& s) {
  return {s.q25, s.median, s.q75, s.mean, s.n};
}

std::vector<std::string> id_strings(const std::vector<ComponentId>& ids) {
  std::vector<std::string> out;
  for (const auto& c : ids) out.push_back(to_string(c));
  return out;
}

// Pooled samples per key, merged in sample order.
template <typename Key>
struct Pool {
  std::map<Key, std::vector<double>> values;
  std::map<Key, std::size_t> excluded;

  void add(const Key& k, const PositionRatios& r, bool include_pos0) {
    pool_ratios(r, include_pos0, values[k], &excluded[k]);
  }

  void merge(const Pool& other) {
    for (const auto& [k, v] : other.values) {
      auto& dst = values[k];
      dst.insert(dst.end(), v.begin(), v.end());
    }
    for (const auto& [k, n] : other.excluded) excluded[k] += n;
  }
};

std::optional<QuantileSummary> maybe_aggregate(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return aggregate(v);
}

void validate_options(const Model& model, const ExperimentOptions& opts) {
  validate(opts.component, model.config);
  if (opts.erasers) {
    for (const auto& e : *opts.erasers) validate(e, model.config);
  }
  for (int l : opts.layers) {
    if (l < 0 || l >= model.config.n_layers) {
      throw UsageError("layer " + std::to_string(l) + " out of range");
    }
  }
  if (opts.n == 0) throw UsageError("n must be positive");
  if (opts.len == 0) throw UsageError("len must be positive");
  if (opts.len > static_cast<std::size_t>(model.config.n_ctx)) {
    throw UsageError("len exceeds the model context length");
  }
}

std::vector<ComponentId> heads_after(const ModelConfig& cfg, const ComponentId& writer) {
  std::vector<ComponentId> out;
  for (int l = writer.write_layer() + 1; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h) out.push_back(ComponentId::attn_head(l, h));
  }
  return out;
}

// Erasers from the options, or the heads a scan over `samples` flags.
std::vector<ComponentId> resolve_erasers(const Model& model,
                                         const std::vector<std::vector<TokenId>>& samples,
                                         const ExperimentOptions& opts, json& report) {
  if (opts.erasers) {
    report["erasers_source"] = "given";
    return *opts.erasers;
  }
  const auto candidates = heads_after(model.config, opts.component);
  std::vector<ComponentId> heads;
  if (!candidates.empty()) {
    const auto scan = scan_erasers(model, samples, opts.component, candidates, opts);
    heads = scan.erasers;
  }
  report["erasers_source"] = "scan";
  return heads;
}

}  // namespace

json summary_json(const QuantileSummary& s) {
  return {{"q25", s.q25}, {"median", s.median}, {"q75", s.q75}, {"mean", s.mean}, {"n", s.n}};
}

json options_to_json(const ExperimentOptions& o) {
  json j = {{"n", o.n},
            {"len", o.len},
            {"seed", o.seed},
            {"include_pos0", o.include_pos0},
            {"threshold", o.threshold},
            {"eps_b", o.eps_b},
            {"patch_vcomp", o.patch_vcomp},
            {"component", to_string(o.component)},
            {"layers", o.layers},
            {"donors", o.donors},
            {"prepend_bos", o.prepend_bos}};
  j["erasers"] = o.erasers ? json(id_strings(*o.erasers)) : json(nullptr);
  return j;
}

ExperimentOptions options_from_json(const json& j) {
  ExperimentOptions o;
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  try {
    o.n = j.value("n", o.n);
    o.len = j.value("len", o.len);
    o.seed = j.value("seed", o.seed);
    o.include_pos0 = j.value("include_pos0", o.include_pos0);
    o.threshold = j.value("threshold", o.threshold);
    o.eps_b = j.value("eps_b", o.eps_b);
    o.patch_vcomp = j.value("patch_vcomp", o.patch_vcomp);
    if (j.contains("component")) o.component = parse_component(j.at("component").get<std::string>());
    o.layers = j.value("layers", o.layers);
    o.donors = j.value("donors", o.donors);
    o.prepend_bos = j.value("prepend_bos", o.prepend_bos);
    o.threads = j.value("threads", o.threads);
    if (j.contains("erasers") && !j.at("erasers").is_null()) {
      std::vector<ComponentId> erasers;
      for (const auto& e : j.at("erasers")) erasers.push_back(parse_component(e.get<std::string>()));
      o.erasers = std::move(erasers);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  return o;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<ComponentId> scan_candidates(const ModelConfig& cfg, const ComponentId& target,
                                         const std::vector<int>& layers) {
  std::vector<int> use = layers;
  if (use.empty()) {
    for (int l = target.write_layer() + 1; l < cfg.n_layers; ++l) use.push_back(l);
  }
  std::sort(use.begin(), use.end());
  use.erase(std::unique(use.begin(), use.end()), use.end());
  std::vector<ComponentId> out;
  for (int l : use) {
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto c = ComponentId::attn_head(l, h);
      if (c != target) out.push_back(c);
    }
    const auto m = ComponentId::mlp(l);
    if (m != target) out.push_back(m);
  }
  return out;
}

EraserScan scan_erasers(const Model& model, const std::vector<std::vector<TokenId>>& samples,
                        const ComponentId& target, const std::vector<ComponentId>& candidates,
                        const ExperimentOptions& opts) {
  // ratios[i][c] holds the per-position PR of candidate c in sample i.
  std::vector<std::vector<PositionRatios>> ratios(samples.size());
  parallel_for(samples.size(), opts.threads, [&](std::size_t i) {
    const auto cache = forward(model, samples[i], nullptr, {.compute_logits = false});
    auto m = component_projection_matrix(cache, target, candidates, opts.eps_b);
    for (const auto& c : candidates) ratios[i].push_back(std::move(m[c]));
  });

  EraserScan scan;
  Pool<ComponentId> pool;
  for (const auto& per_sample : ratios) {
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      pool.add(candidates[c], per_sample[c], opts.include_pos0);
    }
  }
  for (const auto& c : candidates) {
    scan.excluded[c] = pool.excluded[c];
    if (const auto s = maybe_aggregate(pool.values[c])) scan.summaries[c] = *s;
  }
  scan.erasers = identify_erasers(scan.summaries, opts.threshold);

  // PR is linear in its first argument, so PR(sum of eraser outputs, target)
  // is the per-position sum of the per-eraser ratios.
  if (!scan.erasers.empty()) {
    std::vector<double> summed;
    for (const auto& per_sample : ratios) {
      PositionRatios total(per_sample.front().size(), 0.0);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (std::find(scan.erasers.begin(), scan.erasers.end(), candidates[c]) ==
            scan.erasers.end()) {
          continue;
        }
        for (std::size_t t = 0; t < total.size(); ++t) {
          if (!total[t] || !per_sample[c][t]) {
            total[t] = std::nullopt;
          } else {
            *total[t] += *per_sample[c][t];
          }
        }
      }
      pool_ratios(total, opts.include_pos0, summed);
    }
    scan.summed = maybe_aggregate(summed);
  }
  return scan;
}

json run_trace_writer(const Model& model, const TokenCorpus& corpus,
                      const ExperimentOptions& opts) {
  validate_options(model, opts);
  validate(corpus, model.config.d_vocab);
  json report = base_report("trace-writer", model, opts);
  const auto samples = sample(corpus, opts.n, opts.len, opts.seed);

  std::vector<ComponentId> erasers;
  if (opts.patch_vcomp) {
    erasers = resolve_erasers(model, samples, opts, report);
    report["erasers"] = id_strings(erasers);
  }

  std::vector<Pool<ResidCheckpoint>> clean(samples.size()), patched(samples.size());
  parallel_for(samples.size(), opts.threads, [&](std::size_t i) {
    const auto cache = forward(model, samples[i], nullptr, {.compute_logits = false});
    for (const auto& [k, r] : resid_trace(cache, opts.component, opts.eps_b)) {
      clean[i].add(k, r, opts.include_pos0);
    }
    if (opts.patch_vcomp) {
      const auto p = zero_ablate_vcomposition(model, samples[i], opts.component, erasers,
                                              {.compute_logits = false});
      for (const auto& [k, r] : resid_trace(p, opts.component, opts.eps_b)) {
        patched[i].add(k, r, opts.include_pos0);
      }
    }
  });

  json trace = table({"run", "checkpoint", "q25", "median", "q75", "mean", "n", "excluded"});
  const auto emit = [&](const char* run, const std::vector<Pool<ResidCheckpoint>>& pools) {
    Pool<ResidCheckpoint> all;
    for (const auto& p : pools) all.merge(p);
    for (const auto& k : trace_checkpoints(model.config)) {
      const auto s = maybe_aggregate(all.values[k]);
      json row = {run, to_string(k)};
      if (s) {
        for (const auto& v : summary_row_tail(*s)) row.push_back(v);
      } else {
        row.insert(row.end(), {nullptr, nullptr, nullptr, nullptr, 0});
      }
      row.push_back(all.excluded[k]);
      trace["rows"].push_back(row);
    }
  };
  emit("clean", clean);
  if (opts.patch_vcomp) emit("patched", patched);
  report["tables"]["trace"] = trace;
  return report;
}

json run_scan_erasers(const Model& model, const TokenCorpus& corpus,
                      const ExperimentOptions& opts) {
  validate_options(model, opts);
  validate(corpus, model.config.d_vocab);
  json report = base_report("scan-erasers", model, opts);
  const auto samples = sample(corpus, opts.n, opts.len, opts.seed);
  const auto candidates = scan_candidates(model.config, opts.component, opts.layers);
  const auto scan = scan_erasers(model, samples, opts.component, candidates, opts);

  json components =
      table({"component", "q25", "median", "q75", "mean", "n", "excluded", "eraser"});
  for (const auto& c : candidates) {
    json row = {to_string(c)};
    const auto it = scan.summaries.find(c);
    if (it != scan.summaries.end()) {
      for (const auto& v : summary_row_tail(it->second)) row.push_back(v);
    } else {
      row.insert(row.end(), {nullptr, nullptr, nullptr, nullptr, 0});
    }
    row.push_back(scan.excluded.at(c));
    row.push_back(std::find(scan.erasers.begin(), scan.erasers.end(), c) != scan.erasers.end());
    components["rows"].push_back(row);
  }
  report["tables"]["components"] = components;
  report["erasers"] = id_strings(scan.erasers);
  report["summed_erasers"] = scan.summed ? summary_json(*scan.summed) : json(nullptr);
  return report;
}

json run_patch_vcomp(const Model& model, const TokenCorpus& corpus,
                     const ExperimentOptions& opts) {
  validate_options(model, opts);
  validate(corpus, model.config.d_vocab);
  json report = base_report("patch-vcomp", model, opts);
  const auto samples = sample(corpus, opts.n, opts.len, opts.seed);
  const auto erasers = resolve_erasers(model, samples, opts, report);
  report["erasers"] = id_strings(erasers);
  // Fails fast on a writer that is not upstream of every eraser.
  (void)vcomposition_ablation_plan(model.config, opts.component, erasers);

  struct Slot {
    Pool<ComponentId> heads_clean, heads_patched;
    Pool<ResidCheckpoint> trace_clean, trace_patched;
    bool identical = true;
  };
  std::vector<Slot> slots(samples.size());
  parallel_for(samples.size(), opts.threads, [&](std::size_t i) {
    auto& s = slots[i];
    const auto clean = forward(model, samples[i], nullptr, {.compute_logits = false});
    const auto patched = zero_ablate_vcomposition(model, samples[i], opts.component, erasers,
                                                  {.compute_logits = false});
    for (const auto& [c, r] : component_projection_matrix(clean, opts.component, erasers, opts.eps_b)) {
      s.heads_clean.add(c, r, opts.include_pos0);
    }
    for (const auto& [c, r] : component_projection_matrix(patched, opts.component, erasers, opts.eps_b)) {
      s.heads_patched.add(c, r, opts.include_pos0);
    }
    for (const auto& [k, r] : resid_trace(clean, opts.component, opts.eps_b)) {
      s.trace_clean.add(k, r, opts.include_pos0);
    }
    for (const auto& [k, r] : resid_trace(patched, opts.component, opts.eps_b)) {
      s.trace_patched.add(k, r, opts.include_pos0);
    }
    s.identical = clean.resid == patched.resid && clean.component_out == patched.component_out;
  });

  Pool<ComponentId> hc, hp;
  Pool<ResidCheckpoint> tc, tp;
  bool identical = true;
  for (const auto& s : slots) {
    hc.merge(s.heads_clean);
    hp.merge(s.heads_patched);
    tc.merge(s.trace_clean);
    tp.merge(s.trace_patched);
    identical = identical && s.identical;
  }

  const auto push_summary = [](json& row, const std::vector<double>& v) {
    if (const auto s = maybe_aggregate(v)) {
      for (const auto& x : summary_row_tail(*s)) row.push_back(x);
    } else {
      row.insert(row.end(), {nullptr, nullptr, nullptr, nullptr, 0});
    }
  };
  json heads = table({"component", "run", "q25", "median", "q75", "mean", "n"});
  for (const auto& e : erasers) {
    for (const auto& [run, pool] : {std::pair{"clean", &hc}, std::pair{"patched", &hp}}) {
      json row = {to_string(e), run};
      push_summary(row, pool->values[e]);
      heads["rows"].push_back(row);
    }
  }
  json trace = table({"run", "checkpoint", "q25", "median", "q75", "mean", "n"});
  for (const auto& [run, pool] : {std::pair{"clean", &tc}, std::pair{"patched", &tp}}) {
    for (const auto& k : trace_checkpoints(model.config)) {
      json row = {run, to_string(k)};
      push_summary(row, pool->values[k]);
      trace["rows"].push_back(row);
    }
  }
  report["tables"]["heads"] = heads;
  report["tables"]["trace"] = trace;
  report["clean_equals_patched"] = identical;
  return report;
}

json run_dla_correlate(const Model& model, const TokenCorpus& corpus,
                       const ExperimentOptions& opts) {
  validate_options(model, opts);
  validate(corpus, model.config.d_vocab);
  json report = base_report("dla-correlate", model, opts);
  const auto samples = sample(corpus, opts.n, opts.len, opts.seed);
  const auto erasers = resolve_erasers(model, samples, opts, report);
  report["erasers"] = id_strings(erasers);
  (void)vcomposition_ablation_plan(model.config, opts.component, erasers);

  struct Row {
    std::size_t pos;
    LogitDiffSpec spec;
    ErasureDla dla;
  };
  std::vector<std::vector<Row>> rows(samples.size());
  parallel_for(samples.size(), opts.threads, [&](std::size_t i) {
    const auto clean = forward(model, samples[i]);
    const auto patched = zero_ablate_vcomposition(model, samples[i], opts.component, erasers,
                                                  {.compute_logits = false});
    if (!(clean.output(opts.component) == patched.output(opts.component))) {
      throw NumericError("writer output differs between clean and patched runs");
    }
    for (std::size_t pos = opts.include_pos0 ? 0 : 1; pos < samples[i].size(); ++pos) {
      const auto spec = top2(clean, pos);
      rows[i].push_back(
          {pos, spec, erasure_isolated_dla(model, clean, patched, opts.component, erasers, spec)});
    }
  });

  json scatter =
      table({"sample", "position", "token_a", "token_b", "writer_dla", "erasure_dla"});
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& r : rows[i]) {
      scatter["rows"].push_back(
          {i, r.pos, r.spec.token_a, r.spec.token_b, r.dla.writer_dla, r.dla.erasure_dla});
      xs.push_back(r.dla.writer_dla);
      ys.push_back(r.dla.erasure_dla);
    }
  }
  report["tables"]["scatter"] = scatter;
  try {
    const auto fit = fit_correlation(xs, ys);
    report["fit"] = {{"pearson_r", fit.pearson_r},
                     {"slope", fit.slope},
                     {"intercept", fit.intercept},
                     {"n", fit.n}};
  } catch (const Error& e) {
    report["fit"] = nullptr;
    report["fit_error"] = e.what();
  }
  return report;
}

json run_adversarial(const Model& model, const Vocabulary& vocab, const TokenCorpus& corpus,
                     const ExperimentOptions& opts, const std::vector<PromptFixture>& fixtures) {
  validate(opts.component, model.config);
  if (!opts.component.is_head()) throw UsageError("adversarial target must be an attention head");
  validate(corpus, model.config.d_vocab);
  json report = base_report("adversarial", model, opts);
  const bool bos = opts.prepend_bos && vocab.bos().has_value();
  report["bos_prepended"] = bos;

  json summary = table({"fixture", "head", "role", "clean_dla", "patched_q25",
                        "patched_median", "patched_q75", "n_donors"});
  json fixture_rows = table({"fixture", "text", "top1", "top2", "expected_top1",
                             "expected_top2", "top2_match", "model_logit_diff",
                             "expected_logit_diff", "comparison_head", "top1_id", "top2_id"});
  for (std::size_t f = 0; f < fixtures.size(); ++f) {
    const auto& fx = fixtures[f];
    std::vector<TokenId> tokens;
    if (bos) tokens.push_back(*vocab.bos());
    const auto body = vocab.encode(fx.text);
    tokens.insert(tokens.end(), body.begin(), body.end());
    if (tokens.empty()) throw UsageError("fixture " + fx.name + " tokenizes to nothing");

    const auto clean = forward(model, tokens);
    const std::size_t pos = tokens.size() - 1;
    const auto spec = top2(clean, pos);
    const auto top1_text = vocab.text_of(spec.token_a);
    const auto top2_text = vocab.text_of(spec.token_b);

    // Comparison head: the other head with the largest clean DLA logit diff.
    std::optional<ComponentId> comparison;
    double best = 0.0;
    for (int l = 0; l < model.config.n_layers; ++l) {
      for (int h = 0; h < model.config.n_heads; ++h) {
        const auto c = ComponentId::attn_head(l, h);
        if (c == opts.component) continue;
        const double v = logit_diff(model, clean, c, spec);
        if (!comparison || v > best) {
          comparison = c;
          best = v;
        }
      }
    }

    fixture_rows["rows"].push_back(
        {fx.name, fx.text, top1_text, top2_text, fx.expected_top2.first, fx.expected_top2.second,
         top1_text == fx.expected_top2.first && top2_text == fx.expected_top2.second,
         model_logit_diff(clean, spec), fx.expected_logit_diff,
         comparison ? json(to_string(*comparison)) : json(nullptr), spec.token_a, spec.token_b});

    // Donor prompts share the fixture's length (and BOS, when used).
    const std::size_t body_len = tokens.size() - (bos ? 1 : 0);
    auto donors = sample_prefixes(corpus, opts.donors, body_len,
                                  opts.seed + static_cast<std::uint64_t>(f));
    if (bos) {
      for (auto& d : donors) d.insert(d.begin(), *vocab.bos());
    }

    std::vector<std::pair<ComponentId, const char*>> heads = {{opts.component, "target"}};
    if (comparison) heads.emplace_back(*comparison, "comparison");
    for (const auto& [head, role] : heads) {
      std::vector<double> patched(donors.size());
      parallel_for(donors.size(), opts.threads, [&](std::size_t d) {
        const auto cache =
            head_input_patch(model, tokens, donors[d], head, {.compute_logits = false});
        patched[d] = logit_diff(model, cache, head, spec);
      });
      json row = {fx.name, to_string(head), role, logit_diff(model, clean, head, spec)};
      if (const auto s = maybe_aggregate(patched)) {
        row.insert(row.end(), {s->q25, s->median, s->q75});
      } else {
        row.insert(row.end(), {nullptr, nullptr, nullptr});
      }
      row.push_back(donors.size());
      summary["rows"].push_back(row);
    }
  }
  report["tables"]["fixtures"] = fixture_rows;
  report["tables"]["head_dla"] = summary;
  return report;
}

json run_verify_reference(const Model& model, const json& fixtures, double tolerance) {
  ExperimentOptions opts;
  json report = base_report("verify-reference", model, opts);
  report["config"] = {{"tolerance", tolerance}};
  json rows = table({"fixture", "n_tokens", "max_abs_diff", "top2_match", "pass"});
  bool all_pass = true;
  try {
    for (const auto& fx : fixtures.at("fixtures")) {
      const auto tokens = fx.at("tokens").get<std::vector<TokenId>>();
      const auto ids = fx.at("top_k_ids").get<std::vector<TokenId>>();
      const auto ref = fx.at("top_k_logits").get<std::vector<double>>();
      if (ids.size() != ref.size() || ids.size() < 2) {
        throw DataError("reference fixture needs matching top_k_ids/top_k_logits of length >= 2");
      }
      const auto cache = forward(model, tokens);
      const std::size_t pos = tokens.size() - 1;
      double worst = 0.0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || ids[k] >= model.config.d_vocab) {
          throw DataError("reference fixture token id out of range");
        }
        worst = std::max(worst, std::abs(cache.logits(pos, ids[k]) - ref[k]));
      }
      const auto spec = top2(cache, pos);
      const bool match = spec.token_a == ids[0] && spec.token_b == ids[1];
      const bool pass = match && worst <= tolerance;
      all_pass = all_pass && pass;
      rows["rows"].push_back({fx.value("name", std::string()), tokens.size(), worst, match, pass});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed reference fixture file: ") + e.what());
  }
  report["tables"]["reference"] = rows;
  report["pass"] = all_pass;
  return report;
}

}  // namespace erasure
