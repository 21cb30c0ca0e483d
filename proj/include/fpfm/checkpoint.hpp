#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fpfm/basis.hpp"
#include "fpfm/mlp.hpp"

namespace fpfm {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Binary model container. All integers and doubles little-endian; parameter
// payloads round-trip bit-exactly.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string method;
  std::size_t k = 0;  // basis size, 0 for single-net methods
  std::size_t n = 0;  // data dimension
  Activation activation = Activation::Tanh;
  std::vector<std::pair<std::string, Mlp>> nets;
  std::string config_snapshot;
  std::uint64_t root_seed = 0;
};

namespace detail {

inline constexpr char kMagic[5] = {'F', 'P', 'F', 'M', '1'};

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw CheckpointError("cannot open for writing: " + path);
  }
  void bytes(const void* p, std::size_t count) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(count));
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream in;
  std::string path;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw CheckpointError("cannot open: " + p);
  }
  void bytes(void* p, std::size_t count) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
      throw CheckpointError("truncated checkpoint file: " + path);
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t len = u64();
    if (len > (1ull << 32)) throw CheckpointError("corrupt string length in " + path);
    std::string s(len, '\0');
    if (len) bytes(s.data(), len);
    return s;
  }
};

inline void write_mlp(Writer& w, const Mlp& net) {
  w.u64(net.layer_dims.size());
  for (std::size_t d : net.layer_dims) w.u64(d);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (std::size_t i = 0; i < net.weights[l].size(); ++i) w.f64(net.weights[l].data()[i]);
    for (std::size_t i = 0; i < net.biases[l].size(); ++i) w.f64(net.biases[l].data()[i]);
  }
}

inline Mlp read_mlp(Reader& r, Activation act) {
  const std::uint64_t ndims = r.u64();
  if (ndims < 2 || ndims > 64) throw CheckpointError("corrupt layer count in " + r.path);
  Mlp net;
  net.activation = act;
  for (std::uint64_t i = 0; i < ndims; ++i)
    net.layer_dims.push_back(static_cast<std::size_t>(r.u64()));
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    DenseMatrix w(net.layer_dims[l], net.layer_dims[l + 1]);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = r.f64();
    DenseMatrix b(1, net.layer_dims[l + 1]);
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = r.f64();
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

}  // namespace detail

inline void checkpoint_save(const std::string& path, const Checkpoint& ckpt) {
  detail::Writer w(path);
  w.bytes(detail::kMagic, sizeof(detail::kMagic));
  w.u32(Checkpoint::kVersion);
  w.str(ckpt.method);
  w.u64(ckpt.k);
  w.u64(ckpt.n);
  w.str(activation_name(ckpt.activation));
  w.u64(ckpt.nets.size());
  for (const auto& [name, net] : ckpt.nets) {
    w.str(name);
    detail::write_mlp(w, net);
  }
  w.str(ckpt.config_snapshot);
  w.u64(ckpt.root_seed);
  w.out.flush();
  if (!w.out) throw CheckpointError("write failed: " + path);
}

inline Checkpoint checkpoint_load(const std::string& path) {
  detail::Reader r(path);
  char magic[sizeof(detail::kMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, detail::kMagic, sizeof(magic)) != 0)
    throw CheckpointError(path + " is not an FPFM checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version > Checkpoint::kVersion)
    throw CheckpointError(path + ": checkpoint version " + std::to_string(version) +
                          " is newer than supported version " +
                          std::to_string(Checkpoint::kVersion));
  Checkpoint ckpt;
  ckpt.method = r.str();
  ckpt.k = static_cast<std::size_t>(r.u64());
  ckpt.n = static_cast<std::size_t>(r.u64());
  ckpt.activation = activation_from_name(r.str());
  const std::uint64_t n_nets = r.u64();
  if (n_nets > 100000) throw CheckpointError("corrupt net count in " + path);
  for (std::uint64_t i = 0; i < n_nets; ++i) {
    std::string name = r.str();
    ckpt.nets.emplace_back(std::move(name), detail::read_mlp(r, ckpt.activation));
  }
  ckpt.config_snapshot = r.str();
  ckpt.root_seed = r.u64();
  return ckpt;
}

// Packing helpers between checkpoints and the model structs.

inline Checkpoint checkpoint_from_basis(const std::string& method, const BasisSet& basis,
                                        const std::string& config_snapshot,
                                        std::uint64_t root_seed) {
  Checkpoint ckpt;
  ckpt.method = method;
  ckpt.k = basis.k;
  ckpt.n = basis.n;
  ckpt.activation = basis.nets.front().activation;
  for (std::size_t i = 0; i < basis.k; ++i)
    ckpt.nets.emplace_back("basis" + std::to_string(i), basis.nets[i]);
  if (basis.mean_field) ckpt.nets.emplace_back("mean_field", *basis.mean_field);
  ckpt.config_snapshot = config_snapshot;
  ckpt.root_seed = root_seed;
  return ckpt;
}

inline BasisSet basis_from_checkpoint(const Checkpoint& ckpt) {
  BasisSet basis;
  basis.k = ckpt.k;
  basis.n = ckpt.n;
  for (const auto& [name, net] : ckpt.nets) {
    if (name == "mean_field")
      basis.mean_field = net;
    else
      basis.nets.push_back(net);
  }
  if (basis.nets.size() != basis.k)
    throw CheckpointError("checkpoint holds " + std::to_string(basis.nets.size()) +
                          " basis nets, header says " + std::to_string(basis.k));
  return basis;
}

inline Checkpoint checkpoint_from_mlp(const std::string& method, const Mlp& net, std::size_t n,
                                      const std::string& config_snapshot,
                                      std::uint64_t root_seed) {
  Checkpoint ckpt;
  ckpt.method = method;
  ckpt.k = 0;
  ckpt.n = n;
  ckpt.activation = net.activation;
  ckpt.nets.emplace_back("model", net);
  ckpt.config_snapshot = config_snapshot;
  ckpt.root_seed = root_seed;
  return ckpt;
}

inline const Mlp& mlp_from_checkpoint(const Checkpoint& ckpt) {
  for (const auto& [name, net] : ckpt.nets)
    if (name == "model") return net;
  throw CheckpointError("checkpoint carries no 'model' net");
}

}  // namespace fpfm
