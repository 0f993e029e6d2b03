#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "uctrl/network.hpp"
#include "uctrl/trainer.hpp"

namespace uctrl::cli {

// UCTL checkpoint: magic "UCTL", version u32, config hash u64, iteration
// u64, array count u32, then per array a name header (u32 length + bytes),
// shape (u32 ndim + u32 dims) and little-endian f64 data. Arrays are written
// in a fixed order so save -> load -> save is byte-identical.

namespace detail {

struct NamedArray {
  std::string name;
  std::vector<uint32_t> shape;
  std::vector<double> values;
};

inline void put_u32(std::ostream& o, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& o, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& o, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(o, v);
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) {
  uint64_t v = get_u64(in);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline NamedArray from_matrix(const std::string& name, const Matrix& m) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
  a.values.assign(m.data(), m.data() + m.size());
  return a;
}

inline NamedArray from_vector(const std::string& name, const std::vector<double>& v) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<uint32_t>(v.size())};
  a.values = v;
  return a;
}

inline void append_network(std::vector<NamedArray>& arrays, const std::string& prefix,
                           const model::Network& net) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    arrays.push_back(from_matrix(prefix + "." + std::to_string(l) + ".w", net.layers[l].w));
    arrays.push_back(from_vector(prefix + "." + std::to_string(l) + ".b", net.layers[l].b));
  }
}

inline void append_adam(std::vector<NamedArray>& arrays, const std::string& prefix,
                        const model::AdamState& s) {
  for (size_t l = 0; l < s.m_w.size(); ++l) {
    arrays.push_back(from_matrix(prefix + ".m." + std::to_string(l) + ".w", s.m_w[l]));
    arrays.push_back(from_vector(prefix + ".m." + std::to_string(l) + ".b", s.m_b[l]));
    arrays.push_back(from_matrix(prefix + ".v." + std::to_string(l) + ".w", s.v_w[l]));
    arrays.push_back(from_vector(prefix + ".v." + std::to_string(l) + ".b", s.v_b[l]));
  }
  arrays.push_back(from_vector(prefix + ".t", {static_cast<double>(s.t)}));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, uint64_t config_hash,
                            const trainer::TrainState& st) {
  std::vector<detail::NamedArray> arrays;
  detail::append_network(arrays, "encoder", st.encoder);
  detail::append_network(arrays, "decoder", st.decoder);
  detail::append_adam(arrays, "opt.encoder", st.opt_encoder);
  detail::append_adam(arrays, "opt.decoder", st.opt_decoder);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path);
  f.write("UCTL", 4);
  detail::put_u32(f, 1u);
  detail::put_u64(f, config_hash);
  detail::put_u64(f, st.iteration);
  detail::put_u32(f, static_cast<uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    detail::put_u32(f, static_cast<uint32_t>(a.name.size()));
    f.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    detail::put_u32(f, static_cast<uint32_t>(a.shape.size()));
    for (uint32_t d : a.shape) detail::put_u32(f, d);
    for (double v : a.values) detail::put_f64(f, v);
  }
  if (!f) throw IoError("save_checkpoint: write failed " + path);
}

struct CheckpointData {
  uint64_t config_hash = 0;
  uint64_t iteration = 0;
  std::map<std::string, detail::NamedArray> arrays;
};

inline CheckpointData read_checkpoint_arrays(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "UCTL", 4) != 0)
    throw IoError("load_checkpoint: bad magic in " + path);
  uint32_t version = detail::get_u32(f);
  if (version != 1u)
    throw IoError("load_checkpoint: unsupported version " + std::to_string(version));
  CheckpointData out;
  out.config_hash = detail::get_u64(f);
  out.iteration = detail::get_u64(f);
  uint32_t count = detail::get_u32(f);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = detail::get_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    uint32_t ndim = detail::get_u32(f);
    detail::NamedArray a;
    a.name = name;
    size_t total = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      a.shape.push_back(detail::get_u32(f));
      total *= a.shape.back();
    }
    a.values.resize(total);
    for (size_t v = 0; v < total; ++v) a.values[v] = detail::get_f64(f);
    if (!f) throw IoError("load_checkpoint: truncated file " + path);
    out.arrays.emplace(name, std::move(a));
  }
  return out;
}

namespace detail {

inline void fill_matrix(const CheckpointData& cp, const std::string& name, Matrix& m) {
  auto it = cp.arrays.find(name);
  if (it == cp.arrays.end()) throw IoError("load_checkpoint: missing array " + name);
  const NamedArray& a = it->second;
  if (a.shape.size() != 2 || static_cast<int>(a.shape[0]) != m.rows() ||
      static_cast<int>(a.shape[1]) != m.cols())
    throw IoError("load_checkpoint: shape mismatch for " + name);
  std::copy(a.values.begin(), a.values.end(), m.data());
}

inline void fill_vector(const CheckpointData& cp, const std::string& name,
                        std::vector<double>& v) {
  auto it = cp.arrays.find(name);
  if (it == cp.arrays.end()) throw IoError("load_checkpoint: missing array " + name);
  const NamedArray& a = it->second;
  if (a.shape.size() != 1 || a.shape[0] != v.size())
    throw IoError("load_checkpoint: shape mismatch for " + name);
  v = a.values;
}

inline void fill_network(const CheckpointData& cp, const std::string& prefix,
                         model::Network& net) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    fill_matrix(cp, prefix + "." + std::to_string(l) + ".w", net.layers[l].w);
    fill_vector(cp, prefix + "." + std::to_string(l) + ".b", net.layers[l].b);
  }
}

inline void fill_adam(const CheckpointData& cp, const std::string& prefix, model::AdamState& s) {
  for (size_t l = 0; l < s.m_w.size(); ++l) {
    fill_matrix(cp, prefix + ".m." + std::to_string(l) + ".w", s.m_w[l]);
    fill_vector(cp, prefix + ".m." + std::to_string(l) + ".b", s.m_b[l]);
    fill_matrix(cp, prefix + ".v." + std::to_string(l) + ".w", s.v_w[l]);
    fill_vector(cp, prefix + ".v." + std::to_string(l) + ".b", s.v_b[l]);
  }
  std::vector<double> t(1, 0.0);
  fill_vector(cp, prefix + ".t", t);
  s.t = static_cast<int64_t>(t[0]);
}

}  // namespace detail

// Loads into a state whose networks were already shaped by the config. The
// hash check rejects a checkpoint from a different configuration unless
// `force` is set.
inline uint64_t load_checkpoint(const std::string& path, uint64_t expected_hash,
                                trainer::TrainState& st, bool force = false) {
  CheckpointData cp = read_checkpoint_arrays(path);
  if (!force && cp.config_hash != expected_hash)
    throw IoError("load_checkpoint: config hash mismatch for " + path +
                  " (use --force to override)");
  detail::fill_network(cp, "encoder", st.encoder);
  detail::fill_network(cp, "decoder", st.decoder);
  detail::fill_adam(cp, "opt.encoder", st.opt_encoder);
  detail::fill_adam(cp, "opt.decoder", st.opt_decoder);
  st.iteration = cp.iteration;
  st.telemetry.clear();
  return cp.config_hash;
}

}  // namespace uctrl::cli
