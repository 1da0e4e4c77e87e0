#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "erasure/error.hpp"
#include "erasure/model.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight interchange files are little-endian");

namespace erasure {

namespace {

using json = nlohmann::json;

struct RawTensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

std::string join_shape(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class TensorTable {
 public:
  explicit TensorTable(std::map<std::string, RawTensor> tensors)
      : tensors_(std::move(tensors)) {}

  const RawTensor& get(const std::string& name, std::vector<std::size_t> shape) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw DataError("weight file is missing tensor '" + name + "'");
    if (it->second.shape != shape) {
      throw DataError("tensor '" + name + "' has shape " + join_shape(it->second.shape) +
                      ", expected " + join_shape(shape));
    }
    return it->second;
  }

  const std::vector<std::size_t>& shape_of(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw DataError("weight file is missing tensor '" + name + "'");
    return it->second.shape;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }

  Matrix matrix(const std::string& name, std::size_t r, std::size_t c) const {
    return Matrix(r, c, get(name, {r, c}).data);
  }

  std::vector<float> vec(const std::string& name, std::size_t n) const {
    return get(name, {n}).data;
  }

  // Splits a [heads, r, c] tensor into per-head matrices.
  std::vector<Matrix> per_head(const std::string& name, std::size_t heads, std::size_t r,
                               std::size_t c) const {
    const auto& t = get(name, {heads, r, c});
    std::vector<Matrix> out;
    for (std::size_t h = 0; h < heads; ++h) {
      const auto* begin = t.data.data() + h * r * c;
      out.emplace_back(r, c, std::vector<float>(begin, begin + r * c));
    }
    return out;
  }

  std::vector<std::vector<float>> per_head_vec(const std::string& name, std::size_t heads,
                                               std::size_t n) const {
    const auto& t = get(name, {heads, n});
    std::vector<std::vector<float>> out;
    for (std::size_t h = 0; h < heads; ++h) {
      out.emplace_back(t.data.begin() + h * n, t.data.begin() + (h + 1) * n);
    }
    return out;
  }

 private:
  std::map<std::string, RawTensor> tensors_;
};

std::string metadata_string(const json& meta, const char* key) {
  if (!meta.contains(key)) return {};
  const auto& v = meta.at(key);
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

class TensorWriter {
 public:
  void add(const std::string& name, std::vector<std::size_t> shape,
           std::span<const float> data) {
    entries_.push_back({name, std::move(shape), std::vector<float>(data.begin(), data.end())});
  }

  void add(const std::string& name, const Matrix& m) {
    add(name, {m.rows(), m.cols()}, m.values());
  }

  void add_heads(const std::string& name, const std::vector<Matrix>& heads) {
    std::vector<float> flat;
    for (const auto& m : heads) flat.insert(flat.end(), m.values().begin(), m.values().end());
    add(name, {heads.size(), heads.front().rows(), heads.front().cols()}, flat);
  }

  void add_head_vecs(const std::string& name, const std::vector<std::vector<float>>& heads) {
    std::vector<float> flat;
    for (const auto& v : heads) flat.insert(flat.end(), v.begin(), v.end());
    add(name, {heads.size(), heads.front().size()}, flat);
  }

  void write(const std::filesystem::path& path, const json& metadata) const {
    json header = json::object();
    std::size_t offset = 0;
    for (const auto& e : entries_) {
      const std::size_t bytes = e.data.size() * sizeof(float);
      header[e.name] = {{"dtype", "F32"},
                        {"shape", e.shape},
                        {"data_offsets", {offset, offset + bytes}}};
      offset += bytes;
    }
    header["__metadata__"] = metadata;
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : entries_) {
      out.write(reinterpret_cast<const char*>(e.data.data()),
                static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
  }

 private:
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> data;
  };
  std::vector<Entry> entries_;
};

}  // namespace

Model load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  if (bytes.size() < 8) throw DataError("weight file '" + path.string() + "' is truncated");

  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data(), sizeof header_len);
  if (header_len > bytes.size() - 8) {
    throw DataError("weight file header length " + std::to_string(header_len) +
                    " exceeds file size");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw DataError(std::string("weight file header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw DataError("weight file header must be a JSON object");

  const std::size_t data_begin = 8 + header_len;
  const std::size_t data_size = bytes.size() - data_begin;
  std::map<std::string, RawTensor> tensors;
  json metadata = json::object();
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      metadata = entry;
      continue;
    }
    try {
      const auto dtype = entry.at("dtype").get<std::string>();
      if (dtype != "F32") throw DataError("tensor '" + name + "' has dtype " + dtype + ", expected F32");
      RawTensor t;
      t.shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offsets = entry.at("data_offsets").get<std::vector<std::size_t>>();
      if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data_size) {
        throw DataError("tensor '" + name + "' has invalid data offsets");
      }
      std::size_t count = 1;
      for (auto d : t.shape) count *= d;
      if ((offsets[1] - offsets[0]) != count * sizeof(float)) {
        throw DataError("tensor '" + name + "' byte range does not match shape " +
                        join_shape(t.shape));
      }
      t.data.resize(count);
      std::memcpy(t.data.data(), bytes.data() + data_begin + offsets[0], count * sizeof(float));
      require_finite(t.data, name.c_str());
      tensors.emplace(name, std::move(t));
    } catch (const json::exception& e) {
      throw DataError("malformed header entry for tensor '" + name + "': " + e.what());
    } catch (const NumericError& e) {
      throw DataError(std::string("weight file contains ") + e.what());
    }
  }

  const TensorTable table(std::move(tensors));
  Model model;
  ModelConfig& cfg = model.config;
  const auto& we = table.shape_of("embed.W_E");
  if (we.size() != 2) throw DataError("tensor 'embed.W_E' must be 2-D");
  cfg.d_vocab = static_cast<int>(we[0]);
  cfg.d_model = static_cast<int>(we[1]);
  const auto& wpos = table.shape_of("pos_embed.W_pos");
  if (wpos.size() != 2) throw DataError("tensor 'pos_embed.W_pos' must be 2-D");
  cfg.n_ctx = static_cast<int>(wpos[0]);
  int layers = 0;
  while (table.contains("blocks." + std::to_string(layers) + ".attn.W_Q")) ++layers;
  if (layers == 0) throw DataError("weight file is missing tensor 'blocks.0.attn.W_Q'");
  cfg.n_layers = layers;
  const auto& wq = table.shape_of("blocks.0.attn.W_Q");
  if (wq.size() != 3) throw DataError("tensor 'blocks.0.attn.W_Q' must be 3-D");
  cfg.n_heads = static_cast<int>(wq[0]);
  cfg.d_head = static_cast<int>(wq[2]);
  const auto& win = table.shape_of("blocks.0.mlp.W_in");
  if (win.size() != 2) throw DataError("tensor 'blocks.0.mlp.W_in' must be 2-D");
  cfg.d_mlp = static_cast<int>(win[1]);
  if (const auto eps = metadata_string(metadata, "ln_eps"); !eps.empty()) {
    try {
      cfg.ln_eps = std::stod(eps);
    } catch (const std::exception&) {
      throw DataError("metadata ln_eps '" + eps + "' is not a number");
    }
  }
  if (const auto g = metadata_string(metadata, "gelu_variant"); !g.empty()) {
    cfg.gelu_variant = parse_gelu_variant(g);
  }
  model.name = metadata_string(metadata, "model_name");
  cfg.validate();

  const std::size_t dm = cfg.d_model, dh = cfg.d_head, dv = cfg.d_vocab, dmlp = cfg.d_mlp,
                    nh = cfg.n_heads;
  Weights& w = model.weights;
  w.W_E = table.matrix("embed.W_E", dv, dm);
  w.W_pos = table.matrix("pos_embed.W_pos", cfg.n_ctx, dm);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    BlockWeights b;
    b.ln1 = {table.vec(p + "ln1.w", dm), table.vec(p + "ln1.b", dm)};
    b.ln2 = {table.vec(p + "ln2.w", dm), table.vec(p + "ln2.b", dm)};
    b.W_Q = table.per_head(p + "attn.W_Q", nh, dm, dh);
    b.W_K = table.per_head(p + "attn.W_K", nh, dm, dh);
    b.W_V = table.per_head(p + "attn.W_V", nh, dm, dh);
    b.W_O = table.per_head(p + "attn.W_O", nh, dh, dm);
    b.b_Q = table.per_head_vec(p + "attn.b_Q", nh, dh);
    b.b_K = table.per_head_vec(p + "attn.b_K", nh, dh);
    b.b_V = table.per_head_vec(p + "attn.b_V", nh, dh);
    b.b_O = table.vec(p + "attn.b_O", dm);
    b.W_in = table.matrix(p + "mlp.W_in", dm, dmlp);
    b.b_in = table.vec(p + "mlp.b_in", dmlp);
    b.W_out = table.matrix(p + "mlp.W_out", dmlp, dm);
    b.b_out = table.vec(p + "mlp.b_out", dm);
    w.blocks.push_back(std::move(b));
  }
  w.ln_final = {table.vec("ln_final.w", dm), table.vec("ln_final.b", dm)};
  w.W_U = table.matrix("unembed.W_U", dm, dv);
  w.b_U = table.vec("unembed.b_U", dv);
  model.validate();
  return model;
}

void save_weights(const std::filesystem::path& path, const Model& model) {
  model.validate();
  const Weights& w = model.weights;
  TensorWriter out;
  out.add("embed.W_E", w.W_E);
  out.add("pos_embed.W_pos", w.W_pos);
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    const BlockWeights& b = w.blocks[l];
    out.add(p + "ln1.w", {b.ln1.gamma.size()}, b.ln1.gamma);
    out.add(p + "ln1.b", {b.ln1.beta.size()}, b.ln1.beta);
    out.add_heads(p + "attn.W_Q", b.W_Q);
    out.add_heads(p + "attn.W_K", b.W_K);
    out.add_heads(p + "attn.W_V", b.W_V);
    out.add_heads(p + "attn.W_O", b.W_O);
    out.add_head_vecs(p + "attn.b_Q", b.b_Q);
    out.add_head_vecs(p + "attn.b_K", b.b_K);
    out.add_head_vecs(p + "attn.b_V", b.b_V);
    out.add(p + "attn.b_O", {b.b_O.size()}, b.b_O);
    out.add(p + "ln2.w", {b.ln2.gamma.size()}, b.ln2.gamma);
    out.add(p + "ln2.b", {b.ln2.beta.size()}, b.ln2.beta);
    out.add(p + "mlp.W_in", b.W_in);
    out.add(p + "mlp.b_in", {b.b_in.size()}, b.b_in);
    out.add(p + "mlp.W_out", b.W_out);
    out.add(p + "mlp.b_out", {b.b_out.size()}, b.b_out);
  }
  out.add("ln_final.w", {w.ln_final.gamma.size()}, w.ln_final.gamma);
  out.add("ln_final.b", {w.ln_final.beta.size()}, w.ln_final.beta);
  out.add("unembed.W_U", w.W_U);
  out.add("unembed.b_U", {w.b_U.size()}, w.b_U);

  std::ostringstream eps;
  eps.precision(17);
  eps << model.config.ln_eps;
  out.write(path, {{"model_name", model.name},
                   {"gelu_variant", to_string(model.config.gelu_variant)},
                   {"ln_eps", eps.str()},
                   {"n_layers", std::to_string(model.config.n_layers)},
                   {"d_model", std::to_string(model.config.d_model)}});
}

}  // namespace erasure
