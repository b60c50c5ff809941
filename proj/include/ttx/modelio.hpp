#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttx/model.hpp"

namespace ttx {

inline constexpr char kCheckpointMagic[8] = {'T', 'T', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr char kFeatureMagic[8] = {'T', 'T', 'F', 'E', 'A', 'T', '0', '1'};
inline constexpr int kFormatVersion = 1;
inline constexpr int64_t kMaxPayloadBytes = int64_t{1} << 31;

// ---------------------------------------------------------------------------
// Model construction

// Allocates a zero model with every tensor at its configured shape.
inline ModelWeights make_model(const EncoderConfig& cfg, int vocab_size) {
  cfg.validate();
  if (vocab_size < 1) throw ArgError("make_model: vocab_size must be >= 1");
  const int64_t d = cfg.d_model;
  ModelWeights m;
  m.cfg = cfg;
  m.vocab_size = vocab_size;
  m.input_proj.w = Tensor({d, cfg.input_dim});
  m.input_proj.b = Tensor({d});

  auto norm = [&](LayerNormParams& p) {
    p.gain = Tensor({d});
    p.bias = Tensor({d});
  };
  m.layers.resize(static_cast<size_t>(cfg.num_layers));
  for (LayerWeights& w : m.layers) {
    w.w_q.w = Tensor({d, d});
    w.w_k.w = Tensor({d, d});
    w.w_v.w = Tensor({d, d});
    w.w_attn_out.w = Tensor({d, d});
    w.relpos = Tensor({cfg.relpos_entries(), cfg.num_heads, cfg.d_head()});
    norm(w.norm_attn);
    norm(w.norm_ffn1);
    w.ffn1_a.w = Tensor({cfg.ffn_dim, d});
    w.ffn1_a.b = Tensor({cfg.ffn_dim});
    w.ffn1_b.w = Tensor({d, cfg.ffn_dim});
    w.ffn1_b.b = Tensor({d});
    if (cfg.arch == Arch::conformer) {
      norm(w.norm_ffn2);
      w.ffn2_a.w = Tensor({cfg.ffn_dim, d});
      w.ffn2_a.b = Tensor({cfg.ffn_dim});
      w.ffn2_b.w = Tensor({d, cfg.ffn_dim});
      w.ffn2_b.b = Tensor({d});
      norm(w.norm_conv);
      w.conv_point1.w = Tensor({2 * d, d});
      w.conv_point1.b = Tensor({2 * d});
      w.conv_depthwise = Tensor({cfg.conv_kernel, d});
      w.conv_point2.w = Tensor({d, d});
      w.conv_point2.b = Tensor({d});
      norm(w.norm_conv_inner);
      norm(w.norm_block_final);
    }
  }
  norm(m.final_norm);

  m.predictor.hidden = cfg.d_model;  // joint adds f and g directly
  m.predictor.embedding.w = Tensor({vocab_size + 1, d});
  m.predictor.lstm.resize(2);
  int64_t in = d;
  for (LstmLayerWeights& l : m.predictor.lstm) {
    l.w_x.w = Tensor({4 * d, in});
    l.w_x.b = Tensor({4 * d});
    l.w_h.w = Tensor({4 * d, d});
    in = d;
  }
  m.joint_out.w = Tensor({vocab_size + 1, d});
  m.joint_out.b = Tensor({vocab_size + 1});
  return m;
}

// Deterministic random initialization: uniform(-a, a) with a = 1/sqrt(fan_in)
// per matrix, relpos at a = 0.02, norm gains 1 / biases 0, LSTM forget-gate
// bias 1. Deterministic per (config, seed) within this implementation only;
// cross-implementation exchange goes through checkpoint files.
inline ModelWeights random_init(const EncoderConfig& cfg, int vocab_size, uint64_t seed) {
  ModelWeights m = make_model(cfg, vocab_size);
  std::mt19937_64 rng(seed);
  auto fill = [&](Tensor& t, float a) {
    std::uniform_real_distribution<float> dist(-a, a);
    for (float& v : t.data) v = dist(rng);
  };
  auto fill_fan_in = [&](Linear& l) {
    fill(l.w, 1.0f / std::sqrt(static_cast<float>(l.w.shape[1])));
  };
  auto norm_id = [&](LayerNormParams& p) {
    for (float& v : p.gain.data) v = 1.0f;
  };

  fill_fan_in(m.input_proj);
  for (LayerWeights& w : m.layers) {
    fill_fan_in(w.w_q);
    fill_fan_in(w.w_k);
    fill_fan_in(w.w_v);
    fill_fan_in(w.w_attn_out);
    fill(w.relpos, 0.02f);
    norm_id(w.norm_attn);
    norm_id(w.norm_ffn1);
    fill_fan_in(w.ffn1_a);
    fill_fan_in(w.ffn1_b);
    if (cfg.arch == Arch::conformer) {
      norm_id(w.norm_ffn2);
      fill_fan_in(w.ffn2_a);
      fill_fan_in(w.ffn2_b);
      norm_id(w.norm_conv);
      fill_fan_in(w.conv_point1);
      fill(w.conv_depthwise, 1.0f / std::sqrt(static_cast<float>(cfg.conv_kernel)));
      fill_fan_in(w.conv_point2);
      norm_id(w.norm_conv_inner);
      norm_id(w.norm_block_final);
    }
  }
  norm_id(m.final_norm);

  fill(m.predictor.embedding.w, 1.0f / std::sqrt(static_cast<float>(cfg.d_model)));
  const int64_t hid = cfg.d_model;
  for (LstmLayerWeights& l : m.predictor.lstm) {
    fill_fan_in(l.w_x);
    fill(l.w_h.w, 1.0f / std::sqrt(static_cast<float>(hid)));
    for (int64_t i = hid; i < 2 * hid; ++i) l.w_x.b.data[static_cast<size_t>(i)] = 1.0f;
  }
  fill_fan_in(m.joint_out);
  return m;
}

inline int64_t param_count(const ModelWeights& m) {
  int64_t n = 0;
  auto add = [&](const Tensor& t) { n += t.numel(); };
  auto add_lin = [&](const Linear& l) {
    n += l.quantized ? static_cast<int64_t>(l.q.data.size()) : l.w.numel();
    add(l.b);
  };
  auto add_norm = [&](const LayerNormParams& p) {
    add(p.gain);
    add(p.bias);
  };
  add_lin(m.input_proj);
  for (const LayerWeights& w : m.layers) {
    add_lin(w.w_q);
    add_lin(w.w_k);
    add_lin(w.w_v);
    add_lin(w.w_attn_out);
    add(w.relpos);
    add_norm(w.norm_attn);
    add_norm(w.norm_ffn1);
    add_lin(w.ffn1_a);
    add_lin(w.ffn1_b);
    if (m.cfg.arch == Arch::conformer) {
      add_norm(w.norm_ffn2);
      add_lin(w.ffn2_a);
      add_lin(w.ffn2_b);
      add_norm(w.norm_conv);
      add_lin(w.conv_point1);
      add(w.conv_depthwise);
      add_lin(w.conv_point2);
      add_norm(w.norm_conv_inner);
      add_norm(w.norm_block_final);
    }
  }
  add_norm(m.final_norm);
  n += m.predictor.embedding.quantized
           ? static_cast<int64_t>(m.predictor.embedding.q.data.size())
           : m.predictor.embedding.w.numel();
  for (const LstmLayerWeights& l : m.predictor.lstm) {
    add_lin(l.w_x);
    add_lin(l.w_h);
  }
  add_lin(m.joint_out);
  return n;
}

// ---------------------------------------------------------------------------
// Named tensor directory

struct TensorSlot {
  std::string name;
  Tensor* plain = nullptr;   // always-float tensor
  Linear* linear = nullptr;  // weight of a linear map (f32 or i8)
  Embedding* emb = nullptr;
};

inline std::vector<TensorSlot> tensor_slots(ModelWeights& m) {
  std::vector<TensorSlot> slots;
  auto plain = [&](const std::string& n, Tensor& t) { slots.push_back({n, &t, nullptr, nullptr}); };
  auto lin = [&](const std::string& n, Linear& l) {
    slots.push_back({n + ".w", nullptr, &l, nullptr});
    if (l.b.numel() > 0) plain(n + ".b", l.b);
  };
  auto norm = [&](const std::string& n, LayerNormParams& p) {
    plain(n + ".gain", p.gain);
    plain(n + ".bias", p.bias);
  };
  lin("input_proj", m.input_proj);
  for (size_t i = 0; i < m.layers.size(); ++i) {
    LayerWeights& w = m.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    lin(p + "w_q", w.w_q);
    lin(p + "w_k", w.w_k);
    lin(p + "w_v", w.w_v);
    lin(p + "w_attn_out", w.w_attn_out);
    plain(p + "relpos", w.relpos);
    norm(p + "norm_attn", w.norm_attn);
    norm(p + "norm_ffn1", w.norm_ffn1);
    lin(p + "ffn1_a", w.ffn1_a);
    lin(p + "ffn1_b", w.ffn1_b);
    if (m.cfg.arch == Arch::conformer) {
      norm(p + "norm_ffn2", w.norm_ffn2);
      lin(p + "ffn2_a", w.ffn2_a);
      lin(p + "ffn2_b", w.ffn2_b);
      norm(p + "norm_conv", w.norm_conv);
      lin(p + "conv_point1", w.conv_point1);
      plain(p + "conv_depthwise", w.conv_depthwise);
      lin(p + "conv_point2", w.conv_point2);
      norm(p + "norm_conv_inner", w.norm_conv_inner);
      norm(p + "norm_block_final", w.norm_block_final);
    }
  }
  norm("final_norm", m.final_norm);
  slots.push_back({"predictor.embedding", nullptr, nullptr, &m.predictor.embedding});
  for (size_t i = 0; i < m.predictor.lstm.size(); ++i) {
    const std::string p = "predictor.lstm." + std::to_string(i) + ".";
    lin(p + "w_x", m.predictor.lstm[i].w_x);
    lin(p + "w_h", m.predictor.lstm[i].w_h);
  }
  lin("joint_out", m.joint_out);
  return slots;
}

// ---------------------------------------------------------------------------
// Checkpoint files

inline nlohmann::json config_to_json(const EncoderConfig& cfg, int vocab_size) {
  return nlohmann::json{{"arch", arch_name(cfg.arch)},
                        {"num_layers", cfg.num_layers},
                        {"d_model", cfg.d_model},
                        {"num_heads", cfg.num_heads},
                        {"ffn_dim", cfg.ffn_dim},
                        {"input_dim", cfg.input_dim},
                        {"conv_kernel", cfg.conv_kernel},
                        {"relpos_left", cfg.relpos_left},
                        {"relpos_right", cfg.relpos_right},
                        {"vocab_size", vocab_size}};
}

inline std::pair<EncoderConfig, int> config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  cfg.arch = arch_from_name(j.at("arch").get<std::string>());
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.num_heads = j.at("num_heads").get<int>();
  cfg.ffn_dim = j.at("ffn_dim").get<int>();
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.conv_kernel = j.value("conv_kernel", 3);
  cfg.relpos_left = j.value("relpos_left", 16);
  cfg.relpos_right = j.value("relpos_right", 8);
  const int vocab = j.at("vocab_size").get<int>();
  cfg.validate();
  return {cfg, vocab};
}

inline void save_checkpoint(const ModelWeights& model, const std::string& path) {
  ModelWeights& m = const_cast<ModelWeights&>(model);  // slots are read-only here
  nlohmann::json dir = nlohmann::json::array();
  std::vector<std::pair<const void*, int64_t>> blobs;
  int64_t offset = 0;
  auto put = [&](const std::string& name, const std::string& dtype,
                 const std::vector<int64_t>& shape, const void* data, int64_t bytes) {
    dir.push_back({{"name", name},
                   {"dtype", dtype},
                   {"shape", shape},
                   {"offset", offset},
                   {"length", bytes}});
    blobs.emplace_back(data, bytes);
    offset += bytes;
  };
  for (const TensorSlot& s : tensor_slots(m)) {
    if (s.plain) {
      put(s.name, "f32", s.plain->shape, s.plain->data.data(),
          s.plain->numel() * static_cast<int64_t>(sizeof(float)));
    } else {
      const bool quant = s.linear ? s.linear->quantized : s.emb->quantized;
      if (quant) {
        const QuantTensor& q = s.linear ? s.linear->q : s.emb->q;
        put(s.name, "i8", q.shape, q.data.data(), static_cast<int64_t>(q.data.size()));
        put(s.name + ".scales", "f32", {q.rows()}, q.scales.data(),
            static_cast<int64_t>(q.scales.size() * sizeof(float)));
      } else {
        const Tensor& t = s.linear ? s.linear->w : s.emb->w;
        put(s.name, "f32", t.shape, t.data.data(),
            t.numel() * static_cast<int64_t>(sizeof(float)));
      }
    }
  }
  nlohmann::json manifest{{"format_version", kFormatVersion},
                          {"config", config_to_json(model.cfg, model.vocab_size)},
                          {"tensors", dir}};
  const std::string mtext = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 8);
  const uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& [data, bytes] : blobs)
    out.write(static_cast<const char*>(data), bytes);
  if (!out) throw FormatError(FormatError::Kind::io, "write failed: " + path);
}

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path);
  const std::streamoff size = in.tellg();
  in.seekg(0);
  std::vector<char> bytes(static_cast<size_t>(size));
  in.read(bytes.data(), size);
  if (!in) throw FormatError(FormatError::Kind::io, "read failed: " + path);
  return bytes;
}

inline ModelWeights load_checkpoint(const std::string& path) {
  using Kind = FormatError::Kind;
  const std::vector<char> bytes = read_file_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError(Kind::bad_magic, "not a checkpoint file: " + path);
  uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data() + 8, 8);
  if (mlen > bytes.size() - 16)
    throw FormatError(Kind::truncated, "manifest extends past end of file");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.data() + 16, bytes.data() + 16 + mlen);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(Kind::bad_manifest, std::string("manifest parse: ") + e.what());
  }

  EncoderConfig cfg;
  int vocab = 0;
  ModelWeights m;
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion)
      throw FormatError(Kind::bad_manifest, "unsupported format_version");
    std::tie(cfg, vocab) = config_from_json(manifest.at("config"));
    m = make_model(cfg, vocab);
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(Kind::bad_manifest, std::string("bad config: ") + e.what());
  }

  const char* blob = bytes.data() + 16 + mlen;
  const int64_t blob_size = static_cast<int64_t>(bytes.size()) - 16 - static_cast<int64_t>(mlen);

  struct Entry {
    std::string dtype;
    std::vector<int64_t> shape;
    int64_t offset = 0, length = 0;
  };
  std::map<std::string, Entry> entries;
  std::vector<std::pair<int64_t, int64_t>> extents;
  try {
    for (const auto& e : manifest.at("tensors")) {
      Entry ent;
      ent.dtype = e.at("dtype").get<std::string>();
      ent.shape = e.at("shape").get<std::vector<int64_t>>();
      ent.offset = e.at("offset").get<int64_t>();
      ent.length = e.at("length").get<int64_t>();
      if (!entries.emplace(e.at("name").get<std::string>(), ent).second)
        throw FormatError(Kind::bad_manifest, "duplicate tensor name");
      extents.emplace_back(ent.offset, ent.length);
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(Kind::bad_manifest, std::string("bad tensor directory: ") + e.what());
  }

  // The directory must tile the blob exactly, with no overlap or gaps.
  std::sort(extents.begin(), extents.end());
  int64_t cursor = 0;
  for (const auto& [off, len] : extents) {
    if (len < 0 || len > kMaxPayloadBytes)
      throw FormatError(Kind::too_large, "tensor payload exceeds size cap");
    if (off != cursor) throw FormatError(Kind::overlap, "tensor payloads overlap or leave gaps");
    cursor = off + len;
  }
  if (cursor != blob_size)
    throw FormatError(cursor > blob_size ? Kind::truncated : Kind::overlap,
                      "blob size does not match tensor directory");

  auto take = [&](const std::string& name) -> const Entry& {
    auto it = entries.find(name);
    if (it == entries.end())
      throw FormatError(Kind::bad_manifest, "missing tensor: " + name);
    return it->second;
  };
  auto check_payload = [&](const Entry& e, int64_t expect_bytes) {
    const int64_t n = Tensor::numel_of(e.shape);
    if (e.length != expect_bytes || (e.dtype == "f32" ? n * 4 : n) != e.length)
      throw FormatError(Kind::shape_mismatch, "tensor payload size mismatch");
  };
  auto load_f32 = [&](const Entry& e, Tensor& into) {
    if (e.dtype != "f32")
      throw FormatError(Kind::unknown_dtype, "expected f32 tensor, got " + e.dtype);
    if (e.shape != into.shape) throw FormatError(Kind::shape_mismatch, "tensor shape mismatch");
    check_payload(e, into.numel() * 4);
    std::memcpy(into.data.data(), blob + e.offset, static_cast<size_t>(e.length));
  };

  try {
  for (const TensorSlot& s : tensor_slots(m)) {
    if (s.plain) {
      load_f32(take(s.name), *s.plain);
      continue;
    }
    Tensor& w = s.linear ? s.linear->w : s.emb->w;
    const Entry& e = take(s.name);
    if (e.dtype == "f32") {
      load_f32(e, w);
    } else if (e.dtype == "i8") {
      if (e.shape != w.shape) throw FormatError(Kind::shape_mismatch, "tensor shape mismatch");
      check_payload(e, Tensor::numel_of(e.shape));
      QuantTensor q;
      q.shape = e.shape;
      q.data.resize(static_cast<size_t>(e.length));
      std::memcpy(q.data.data(), blob + e.offset, static_cast<size_t>(e.length));
      const Entry& se = take(s.name + ".scales");
      if (se.dtype != "f32" || se.shape != std::vector<int64_t>{q.rows()})
        throw FormatError(Kind::shape_mismatch, "bad scales tensor for " + s.name);
      q.scales.resize(static_cast<size_t>(q.rows()));
      std::memcpy(q.scales.data(), blob + se.offset, static_cast<size_t>(se.length));
      if (s.linear) {
        s.linear->q = std::move(q);
        s.linear->quantized = true;
        s.linear->w = Tensor();
      } else {
        s.emb->q = std::move(q);
        s.emb->quantized = true;
        s.emb->w = Tensor();
      }
    } else {
      throw FormatError(Kind::unknown_dtype, "unknown dtype: " + e.dtype);
    }
  }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    // e.g. negative or overflowing dims in a mangled manifest
    throw FormatError(Kind::bad_manifest, std::string("bad tensor entry: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Feature files

inline void write_features(const Tensor& x, const std::string& path) {
  if (x.rank() != 2) throw ShapeError("write_features: expected [T, D]");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path + " for writing");
  out.write(kFeatureMagic, 8);
  const uint32_t t = static_cast<uint32_t>(x.shape[0]);
  const uint32_t d = static_cast<uint32_t>(x.shape[1]);
  out.write(reinterpret_cast<const char*>(&t), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(x.data.data()),
            static_cast<std::streamsize>(x.data.size() * sizeof(float)));
  if (!out) throw FormatError(FormatError::Kind::io, "write failed: " + path);
}

inline Tensor read_features(const std::string& path) {
  using Kind = FormatError::Kind;
  const std::vector<char> bytes = read_file_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFeatureMagic, 8) != 0)
    throw FormatError(Kind::bad_magic, "not a feature file: " + path);
  uint32_t t = 0, d = 0;
  std::memcpy(&t, bytes.data() + 8, 4);
  std::memcpy(&d, bytes.data() + 12, 4);
  if (t > (uint32_t{1} << 30) || d > (uint32_t{1} << 30))
    throw FormatError(Kind::too_large, "feature dimensions exceed size cap");
  const int64_t payload = int64_t{4} * t * d;
  if (payload > kMaxPayloadBytes)
    throw FormatError(Kind::too_large, "feature payload exceeds size cap");
  if (static_cast<int64_t>(bytes.size()) - 16 != payload)
    throw FormatError(static_cast<int64_t>(bytes.size()) - 16 < payload ? Kind::truncated
                                                                        : Kind::shape_mismatch,
                      "feature payload size mismatch");
  Tensor x({static_cast<int64_t>(t), static_cast<int64_t>(d)});
  std::memcpy(x.data.data(), bytes.data() + 16, static_cast<size_t>(payload));
  return x;
}

// ---------------------------------------------------------------------------
// Frame stacking

// Output frame i concatenates input frames [i*stride, i*stride + window),
// zero-padded past the end of the input.
inline Tensor stack_frames(const Tensor& x, int window, int stride) {
  if (x.rank() != 2) throw ShapeError("stack_frames: expected [T, D]");
  if (window < 1 || stride < 1) throw ArgError("stack_frames: window/stride must be >= 1");
  const int64_t t = x.shape[0], d = x.shape[1];
  const int64_t out_t = (t + stride - 1) / stride;
  Tensor out({out_t, static_cast<int64_t>(window) * d});
  for (int64_t i = 0; i < out_t; ++i) {
    float* dst = out.row_ptr(i);
    for (int wnd = 0; wnd < window; ++wnd) {
      const int64_t src = i * stride + wnd;
      if (src < t)
        std::memcpy(dst + static_cast<int64_t>(wnd) * d, x.row_ptr(src),
                    sizeof(float) * static_cast<size_t>(d));
    }
  }
  return out;
}

}  // namespace ttx
