#include "erasure/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "erasure/error.hpp"

namespace erasure {

namespace {

void check_vec(const std::vector<float>& v, std::size_t n, const std::string& name) {
  if (v.size() != n) {
    throw DataError("tensor " + name + " has length " + std::to_string(v.size()) +
                    ", expected " + std::to_string(n));
  }
  require_finite(v, name.c_str());
}

void check_mat(const Matrix& m, std::size_t r, std::size_t c, const std::string& name) {
  if (m.rows() != r || m.cols() != c) {
    throw DataError("tensor " + name + " has shape (" + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + "), expected (" + std::to_string(r) + "x" +
                    std::to_string(c) + ")");
  }
  require_finite(m.values(), name.c_str());
}

Matrix layer_norm_rows(const Matrix& x, const LayerNormWeights& ln, double eps) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto y = layer_norm(x.row(r), ln.gamma, ln.beta, eps);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

void apply_action(Matrix& target, const Edit& edit, const ActivationCache& cache) {
  const auto rows_in_scope = [&](auto&& fn) {
    if (!edit.positions) {
      for (std::size_t r = 0; r < target.rows(); ++r) fn(r);
      return;
    }
    for (std::size_t r : *edit.positions) {
      if (r >= target.rows()) {
        throw UsageError("edit at " + to_string(edit.point) + ": position " +
                         std::to_string(r) + " out of range for sequence length " +
                         std::to_string(target.rows()));
      }
      fn(r);
    }
  };

  if (const auto* sub = std::get_if<SubtractComponent>(&edit.action)) {
    const auto it = cache.component_out.find(sub->component);
    if (it == cache.component_out.end()) {
      throw UsageError("edit at " + to_string(edit.point) + " subtracts " +
                       to_string(sub->component) +
                       ", which has not been computed yet at that hook point");
    }
    const Matrix& src = it->second;
    rows_in_scope([&](std::size_t r) {
      auto dst = target.row(r);
      const auto s = src.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] -= s[c];
    });
  } else if (const auto* rep = std::get_if<ReplaceWith>(&edit.action)) {
    if (rep->tensor.rows() != target.rows() || rep->tensor.cols() != target.cols()) {
      throw UsageError("edit at " + to_string(edit.point) + ": replacement tensor shape (" +
                       std::to_string(rep->tensor.rows()) + "x" +
                       std::to_string(rep->tensor.cols()) + ") does not match (" +
                       std::to_string(target.rows()) + "x" + std::to_string(target.cols()) +
                       ")");
    }
    rows_in_scope([&](std::size_t r) {
      const auto s = rep->tensor.row(r);
      std::copy(s.begin(), s.end(), target.row(r).begin());
    });
  } else {
    rows_in_scope([&](std::size_t r) {
      auto dst = target.row(r);
      std::fill(dst.begin(), dst.end(), 0.0f);
    });
  }
}

class Hooks {
 public:
  explicit Hooks(const InterventionPlan* plan) : plan_(plan) {}

  // Applies every edit targeting `point`-like hooks matched by pred, in order.
  // Returns whether anything was applied.
  template <typename Pred>
  bool apply(Matrix& target, const ActivationCache& cache, Pred pred) const {
    if (plan_ == nullptr) return false;
    bool touched = false;
    for (const Edit& e : plan_->edits) {
      if (!pred(e.point)) continue;
      apply_action(target, e, cache);
      touched = true;
    }
    return touched;
  }

  bool touches_head_input(HookPoint::Kind kind, int layer, int head) const {
    if (plan_ == nullptr) return false;
    for (const Edit& e : plan_->edits) {
      if (e.point.kind == kind && e.point.layer == layer &&
          std::find(e.point.heads.begin(), e.point.heads.end(), head) != e.point.heads.end()) {
        return true;
      }
    }
    return false;
  }

  bool resid(Matrix& m, const ActivationCache& cache, const ResidCheckpoint& k) const {
    return apply(m, cache, [&](const HookPoint& p) {
      return p.kind == HookPoint::Kind::ResidAt && p.checkpoint == k;
    });
  }

  bool component(Matrix& m, const ActivationCache& cache, const ComponentId& c) const {
    return apply(m, cache, [&](const HookPoint& p) {
      return p.kind == HookPoint::Kind::ComponentOut && p.component == c;
    });
  }

  bool head_input(Matrix& m, const ActivationCache& cache, HookPoint::Kind kind, int layer,
                  int head) const {
    return apply(m, cache, [&](const HookPoint& p) {
      return p.kind == kind && p.layer == layer &&
             std::find(p.heads.begin(), p.heads.end(), head) != p.heads.end();
    });
  }

 private:
  const InterventionPlan* plan_;
};

HookPoint::Kind hook_kind(HeadInput which) {
  switch (which) {
    case HeadInput::Query: return HookPoint::Kind::QueryInput;
    case HeadInput::Key: return HookPoint::Kind::KeyInput;
    case HeadInput::Value: return HookPoint::Kind::ValueInput;
  }
  return HookPoint::Kind::ValueInput;
}

Matrix project(const Matrix& x, const Matrix& w, const std::vector<float>& b) {
  Matrix out = matmul(x, w);
  add_row_in_place(out, b);
  return out;
}

}  // namespace

std::string to_string(GeluVariant v) { return v == GeluVariant::Erf ? "erf" : "tanh"; }

GeluVariant parse_gelu_variant(std::string_view s) {
  if (s == "erf" || s == "gelu") return GeluVariant::Erf;
  if (s == "tanh" || s == "gelu_new") return GeluVariant::Tanh;
  throw DataError("unknown gelu variant '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_head <= 0 || d_mlp <= 0 ||
      d_vocab <= 0 || n_ctx <= 0) {
    throw DataError("model config: all dimensions must be positive");
  }
  if (n_heads * d_head != d_model) {
    throw DataError("model config: n_heads * d_head (" + std::to_string(n_heads * d_head) +
                    ") != d_model (" + std::to_string(d_model) + ")");
  }
  if (!(ln_eps > 0.0)) throw DataError("model config: ln_eps must be positive");
}

void Model::validate() const {
  config.validate();
  const auto& c = config;
  const auto& w = weights;
  const std::size_t dm = c.d_model, dh = c.d_head, dv = c.d_vocab, dmlp = c.d_mlp;
  check_mat(w.W_E, dv, dm, "embed.W_E");
  check_mat(w.W_pos, c.n_ctx, dm, "pos_embed.W_pos");
  if (w.blocks.size() != static_cast<std::size_t>(c.n_layers)) {
    throw DataError("expected " + std::to_string(c.n_layers) + " blocks, found " +
                    std::to_string(w.blocks.size()));
  }
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& b = w.blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    check_vec(b.ln1.gamma, dm, p + "ln1.w");
    check_vec(b.ln1.beta, dm, p + "ln1.b");
    check_vec(b.ln2.gamma, dm, p + "ln2.w");
    check_vec(b.ln2.beta, dm, p + "ln2.b");
    const auto heads = static_cast<std::size_t>(c.n_heads);
    for (const auto* set : {&b.W_Q, &b.W_K, &b.W_V, &b.W_O}) {
      if (set->size() != heads) throw DataError(p + "attn: wrong number of heads");
    }
    for (const auto* set : {&b.b_Q, &b.b_K, &b.b_V}) {
      if (set->size() != heads) throw DataError(p + "attn: wrong number of head biases");
    }
    for (std::size_t h = 0; h < heads; ++h) {
      check_mat(b.W_Q[h], dm, dh, p + "attn.W_Q");
      check_mat(b.W_K[h], dm, dh, p + "attn.W_K");
      check_mat(b.W_V[h], dm, dh, p + "attn.W_V");
      check_mat(b.W_O[h], dh, dm, p + "attn.W_O");
      check_vec(b.b_Q[h], dh, p + "attn.b_Q");
      check_vec(b.b_K[h], dh, p + "attn.b_K");
      check_vec(b.b_V[h], dh, p + "attn.b_V");
    }
    check_vec(b.b_O, dm, p + "attn.b_O");
    check_mat(b.W_in, dm, dmlp, p + "mlp.W_in");
    check_vec(b.b_in, dmlp, p + "mlp.b_in");
    check_mat(b.W_out, dmlp, dm, p + "mlp.W_out");
    check_vec(b.b_out, dm, p + "mlp.b_out");
  }
  check_vec(w.ln_final.gamma, dm, "ln_final.w");
  check_vec(w.ln_final.beta, dm, "ln_final.b");
  check_mat(w.W_U, dm, dv, "unembed.W_U");
  check_vec(w.b_U, dv, "unembed.b_U");
}

Weights zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t dm = cfg.d_model, dh = cfg.d_head, dv = cfg.d_vocab, dmlp = cfg.d_mlp;
  const auto ln = [&] { return LayerNormWeights{std::vector<float>(dm, 1.0f), std::vector<float>(dm, 0.0f)}; };
  Weights w;
  w.W_E = Matrix(dv, dm);
  w.W_pos = Matrix(cfg.n_ctx, dm);
  for (int l = 0; l < cfg.n_layers; ++l) {
    BlockWeights b;
    b.ln1 = ln();
    b.ln2 = ln();
    for (int h = 0; h < cfg.n_heads; ++h) {
      b.W_Q.emplace_back(dm, dh);
      b.W_K.emplace_back(dm, dh);
      b.W_V.emplace_back(dm, dh);
      b.W_O.emplace_back(dh, dm);
      b.b_Q.emplace_back(dh, 0.0f);
      b.b_K.emplace_back(dh, 0.0f);
      b.b_V.emplace_back(dh, 0.0f);
    }
    b.b_O.assign(dm, 0.0f);
    b.W_in = Matrix(dm, dmlp);
    b.b_in.assign(dmlp, 0.0f);
    b.W_out = Matrix(dmlp, dm);
    b.b_out.assign(dm, 0.0f);
    w.blocks.push_back(std::move(b));
  }
  w.ln_final = ln();
  w.W_U = Matrix(dm, dv);
  w.b_U.assign(dv, 0.0f);
  return w;
}

const Matrix& ActivationCache::resid_at(const ResidCheckpoint& c) const {
  const auto it = resid.find(c);
  if (it == resid.end()) throw UsageError("cache has no checkpoint " + to_string(c));
  return it->second;
}

const Matrix& ActivationCache::output(const ComponentId& c) const {
  const auto it = component_out.find(c);
  if (it == component_out.end()) throw UsageError("cache has no component " + to_string(c));
  return it->second;
}

const Matrix& component_output(const ActivationCache& cache, const ComponentId& c) {
  return cache.output(c);
}

ActivationCache forward(const Model& model, std::span<const TokenId> tokens,
                        const InterventionPlan* plan, ForwardOptions options) {
  const ModelConfig& cfg = model.config;
  const Weights& w = model.weights;
  if (tokens.empty()) throw UsageError("forward: empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(cfg.n_ctx)) {
    throw UsageError("forward: sequence length " + std::to_string(tokens.size()) +
                     " exceeds n_ctx " + std::to_string(cfg.n_ctx));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= cfg.d_vocab) {
      throw UsageError("forward: token id " + std::to_string(tokens[i]) + " at position " +
                       std::to_string(i) + " out of range for d_vocab " +
                       std::to_string(cfg.d_vocab));
    }
  }
  if (plan != nullptr) validate(*plan, cfg);

  const std::size_t seq = tokens.size();
  const std::size_t dm = cfg.d_model;
  const Hooks hooks(plan);

  ActivationCache cache;
  cache.tokens.assign(tokens.begin(), tokens.end());
  if (plan != nullptr) cache.plan = *plan;

  Matrix embed(seq, dm), pos(seq, dm);
  for (std::size_t t = 0; t < seq; ++t) {
    const auto e = w.W_E.row(static_cast<std::size_t>(tokens[t]));
    std::copy(e.begin(), e.end(), embed.row(t).begin());
    const auto p = w.W_pos.row(t);
    std::copy(p.begin(), p.end(), pos.row(t).begin());
  }
  hooks.component(embed, cache, ComponentId::embed());
  cache.component_out[ComponentId::embed()] = embed;
  hooks.component(pos, cache, ComponentId::pos_embed());
  cache.component_out[ComponentId::pos_embed()] = pos;

  Matrix resid = add(embed, pos);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
  constexpr float kMasked = -std::numeric_limits<float>::infinity();
  cache.attn_patterns.resize(cfg.n_layers);

  for (int l = 0; l < cfg.n_layers; ++l) {
    const BlockWeights& b = w.blocks[l];

    hooks.resid(resid, cache, ResidCheckpoint::pre(l));
    cache.resid[ResidCheckpoint::pre(l)] = resid;
    const Matrix normalized = layer_norm_rows(resid, b.ln1, cfg.ln_eps);

    // LN of a head's input. Unedited heads share `normalized`; edited ones get
    // the plan applied to a private copy of the pre-LN residual.
    std::array<Matrix, 3> edited_ln;
    const auto head_input = [&](HeadInput which, int h) -> const Matrix& {
      const auto kind = hook_kind(which);
      if (!hooks.touches_head_input(kind, l, h)) return normalized;
      Matrix edited = resid;
      hooks.head_input(edited, cache, kind, l, h);
      auto& slot = edited_ln[static_cast<std::size_t>(which)];
      slot = layer_norm_rows(edited, b.ln1, cfg.ln_eps);
      cache.edited_head_inputs[{l, h, which}] = std::move(edited);
      return slot;
    };

    cache.attn_patterns[l].resize(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const Matrix q = project(head_input(HeadInput::Query, h), b.W_Q[h], b.b_Q[h]);
      const Matrix k = project(head_input(HeadInput::Key, h), b.W_K[h], b.b_K[h]);
      const Matrix v = project(head_input(HeadInput::Value, h), b.W_V[h], b.b_V[h]);

      Matrix scores(seq, seq, kMasked);
      for (std::size_t i = 0; i < seq; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
          scores(i, j) = static_cast<float>(dot(q.row(i), k.row(j)) * scale);
        }
      }
      Matrix pattern = softmax_rows(scores);
      Matrix out = matmul(matmul(pattern, v), b.W_O[h]);
      const ComponentId id = ComponentId::attn_head(l, h);
      hooks.component(out, cache, id);
      cache.attn_patterns[l][h] = std::move(pattern);
      cache.component_out[id] = std::move(out);
    }
    Matrix bias(seq, dm);
    add_row_in_place(bias, b.b_O);
    hooks.component(bias, cache, ComponentId::attn_bias(l));
    cache.component_out[ComponentId::attn_bias(l)] = bias;

    for (int h = 0; h < cfg.n_heads; ++h) {
      add_in_place(resid, cache.component_out[ComponentId::attn_head(l, h)]);
    }
    add_in_place(resid, bias);
    hooks.resid(resid, cache, ResidCheckpoint::mid(l));
    cache.resid[ResidCheckpoint::mid(l)] = resid;

    Matrix hidden = project(layer_norm_rows(resid, b.ln2, cfg.ln_eps), b.W_in, b.b_in);
    for (float& x : hidden.values()) x = static_cast<float>(gelu(x, cfg.gelu_variant));
    Matrix mlp_out = project(hidden, b.W_out, b.b_out);
    hooks.component(mlp_out, cache, ComponentId::mlp(l));
    add_in_place(resid, mlp_out);
    cache.component_out[ComponentId::mlp(l)] = std::move(mlp_out);
    hooks.resid(resid, cache, ResidCheckpoint::post(l));
    cache.resid[ResidCheckpoint::post(l)] = resid;
  }

  cache.final_ln_scale.resize(seq);
  Matrix final_ln(seq, dm);
  for (std::size_t t = 0; t < seq; ++t) {
    cache.final_ln_scale[t] = layer_norm_scale(resid.row(t), cfg.ln_eps);
    const auto y = layer_norm(resid.row(t), w.ln_final.gamma, w.ln_final.beta, cfg.ln_eps);
    std::copy(y.begin(), y.end(), final_ln.row(t).begin());
  }
  require_finite(resid.values(), "final residual stream");
  if (options.compute_logits) cache.logits = project(final_ln, w.W_U, w.b_U);
  return cache;
}

int HookPoint::order() const {
  switch (kind) {
    case Kind::ValueInput:
    case Kind::QueryInput:
    case Kind::KeyInput:
      return ResidCheckpoint::mid(layer).order();
    case Kind::ResidAt:
      return checkpoint.order();
    case Kind::ComponentOut:
      switch (component.kind) {
        case ComponentId::Kind::Embed:
        case ComponentId::Kind::PosEmbed:
          return ResidCheckpoint::pre(0).order();
        case ComponentId::Kind::Mlp:
          return ResidCheckpoint::post(component.layer).order();
        default:
          return ResidCheckpoint::mid(component.layer).order();
      }
  }
  return 0;
}

std::optional<int> InterventionPlan::earliest_order() const {
  std::optional<int> best;
  for (const Edit& e : edits) {
    const int o = e.point.order();
    if (!best || o < *best) best = o;
  }
  return best;
}

void validate(const InterventionPlan& plan, const ModelConfig& cfg) {
  for (const Edit& e : plan.edits) {
    const HookPoint& p = e.point;
    if (p.is_head_input()) {
      if (p.layer < 0 || p.layer >= cfg.n_layers) {
        throw UsageError("hook " + to_string(p) + ": layer out of range");
      }
      if (p.heads.empty()) throw UsageError("hook " + to_string(p) + ": empty head set");
      for (int h : p.heads) {
        if (h < 0 || h >= cfg.n_heads) {
          throw UsageError("hook " + to_string(p) + ": head " + std::to_string(h) +
                           " out of range");
        }
      }
    } else if (p.kind == HookPoint::Kind::ResidAt) {
      validate(p.checkpoint, cfg);
    } else {
      validate(p.component, cfg);
    }
    if (const auto* sub = std::get_if<SubtractComponent>(&e.action)) {
      validate(sub->component, cfg);
    } else if (const auto* rep = std::get_if<ReplaceWith>(&e.action)) {
      if (rep->tensor.cols() != static_cast<std::size_t>(cfg.d_model)) {
        throw UsageError("hook " + to_string(p) + ": replacement tensor has " +
                         std::to_string(rep->tensor.cols()) + " columns, expected d_model");
      }
    }
  }
}

std::string to_string(const HookPoint& p) {
  const auto heads = [&] {
    std::string s = "[";
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(p.heads[i]);
    }
    return s + "]";
  };
  switch (p.kind) {
    case HookPoint::Kind::ValueInput: return "value_input(L" + std::to_string(p.layer) + heads() + ")";
    case HookPoint::Kind::QueryInput: return "query_input(L" + std::to_string(p.layer) + heads() + ")";
    case HookPoint::Kind::KeyInput: return "key_input(L" + std::to_string(p.layer) + heads() + ")";
    case HookPoint::Kind::ResidAt: return "resid_at(" + to_string(p.checkpoint) + ")";
    case HookPoint::Kind::ComponentOut: return "component_out(" + to_string(p.component) + ")";
  }
  return "?";
}

}  // namespace erasure
