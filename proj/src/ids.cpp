#include "erasure/ids.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "erasure/error.hpp"
#include "erasure/model.hpp"

namespace erasure {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  return out;
}

// Parses a non-negative decimal integer filling all of s.
bool parse_index(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && out >= 0;
}

}  // namespace

std::string to_string(const ComponentId& c) {
  switch (c.kind) {
    case ComponentId::Kind::Embed: return "EMB";
    case ComponentId::Kind::PosEmbed: return "POS";
    case ComponentId::Kind::Head:
      return "L" + std::to_string(c.layer) + "H" + std::to_string(c.head);
    case ComponentId::Kind::AttnBias: return "BIAS" + std::to_string(c.layer);
    case ComponentId::Kind::Mlp: return "MLP" + std::to_string(c.layer);
  }
  return "?";
}

ComponentId parse_component(std::string_view text) {
  const std::string s = upper(text);
  if (s == "EMB") return ComponentId::embed();
  if (s == "POS") return ComponentId::pos_embed();
  int layer = 0;
  if (s.rfind("MLP", 0) == 0 && parse_index(std::string_view(s).substr(3), layer)) {
    return ComponentId::mlp(layer);
  }
  if (s.rfind("BIAS", 0) == 0 && parse_index(std::string_view(s).substr(4), layer)) {
    return ComponentId::attn_bias(layer);
  }
  if (s.size() >= 4 && s[0] == 'L') {
    const auto h = s.find('H');
    int head = 0;
    if (h != std::string::npos &&
        parse_index(std::string_view(s).substr(1, h - 1), layer) &&
        parse_index(std::string_view(s).substr(h + 1), head)) {
      return ComponentId::attn_head(layer, head);
    }
  }
  throw UsageError("invalid component id '" + std::string(text) +
                   "' (expected L<l>H<h>, MLP<l>, BIAS<l>, EMB or POS)");
}

void validate(const ComponentId& c, const ModelConfig& cfg) {
  if (c.kind == ComponentId::Kind::Embed || c.kind == ComponentId::Kind::PosEmbed) return;
  if (c.layer < 0 || c.layer >= cfg.n_layers) {
    throw UsageError("component " + to_string(c) + ": layer out of range (model has " +
                     std::to_string(cfg.n_layers) + " layers)");
  }
  if (c.kind == ComponentId::Kind::Head && (c.head < 0 || c.head >= cfg.n_heads)) {
    throw UsageError("component " + to_string(c) + ": head out of range (model has " +
                     std::to_string(cfg.n_heads) + " heads per layer)");
  }
}

std::vector<ComponentId> all_components(const ModelConfig& cfg) {
  std::vector<ComponentId> out{ComponentId::embed(), ComponentId::pos_embed()};
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h) out.push_back(ComponentId::attn_head(l, h));
    out.push_back(ComponentId::attn_bias(l));
    out.push_back(ComponentId::mlp(l));
  }
  return out;
}

std::string to_string(const ResidCheckpoint& c) {
  switch (c.kind) {
    case ResidCheckpoint::Kind::PreAttn: return "resid_pre_" + std::to_string(c.layer);
    case ResidCheckpoint::Kind::Mid: return "resid_mid_" + std::to_string(c.layer);
    case ResidCheckpoint::Kind::Post: return "resid_post_" + std::to_string(c.layer);
  }
  return "?";
}

ResidCheckpoint parse_checkpoint(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  int layer = 0;
  const auto try_prefix = [&](std::string_view prefix) {
    return s.rfind(prefix, 0) == 0 &&
           parse_index(std::string_view(s).substr(prefix.size()), layer);
  };
  if (try_prefix("resid_pre_")) return ResidCheckpoint::pre(layer);
  if (try_prefix("resid_mid_")) return ResidCheckpoint::mid(layer);
  if (try_prefix("resid_post_")) return ResidCheckpoint::post(layer);
  throw UsageError("invalid residual checkpoint '" + std::string(text) + "'");
}

void validate(const ResidCheckpoint& c, const ModelConfig& cfg) {
  if (c.layer < 0 || c.layer >= cfg.n_layers) {
    throw UsageError("checkpoint " + to_string(c) + ": layer out of range");
  }
}

std::vector<ResidCheckpoint> trace_checkpoints(const ModelConfig& cfg) {
  std::vector<ResidCheckpoint> out{ResidCheckpoint::pre(0)};
  for (int l = 0; l < cfg.n_layers; ++l) {
    out.push_back(ResidCheckpoint::mid(l));
    out.push_back(ResidCheckpoint::post(l));
  }
  return out;
}

bool written_before(const ComponentId& c, const ResidCheckpoint& k) {
  switch (c.kind) {
    case ComponentId::Kind::Embed:
    case ComponentId::Kind::PosEmbed:
      return true;
    case ComponentId::Kind::Head:
    case ComponentId::Kind::AttnBias:
      return k.order() >= ResidCheckpoint::mid(c.layer).order();
    case ComponentId::Kind::Mlp:
      return k.order() >= ResidCheckpoint::post(c.layer).order();
  }
  return false;
}

}  // namespace erasure
