#include "robustlab/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace robustlab {

namespace {

constexpr char kMagic[8] = {'R', 'O', 'B', 'S', 'T', 'L', 'A', 'B'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("container: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("container: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

void write_container(const std::string& path, const std::string& metadata_json,
                     const std::vector<NamedBlock>& blocks) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("container: cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(metadata_json.size()));
  os.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
  put_u32(os, static_cast<uint32_t>(blocks.size()));
  for (const NamedBlock& blk : blocks) {
    put_u32(os, static_cast<uint32_t>(blk.name.size()));
    os.write(blk.name.data(), static_cast<std::streamsize>(blk.name.size()));
    put_u32(os, static_cast<uint32_t>(blk.shape.size()));
    int64_t n = 1;
    for (int64_t e : blk.shape) {
      put_u64(os, static_cast<uint64_t>(e));
      n *= e;
    }
    if (n != static_cast<int64_t>(blk.data.size()))
      throw std::invalid_argument("container: block '" + blk.name + "' shape does not match data length");
    for (double v : blk.data) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("container: write failed for '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("container: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("container: bad magic in '" + path + "'");
  const uint32_t version = get_u32(is);
  if (version != kVersion) throw std::runtime_error("container: unsupported version " + std::to_string(version));
  Container c;
  const uint32_t meta_len = get_u32(is);
  c.metadata_json.resize(meta_len);
  is.read(c.metadata_json.data(), meta_len);
  const uint32_t nblocks = get_u32(is);
  c.blocks.resize(nblocks);
  for (NamedBlock& blk : c.blocks) {
    const uint32_t name_len = get_u32(is);
    blk.name.resize(name_len);
    is.read(blk.name.data(), name_len);
    const uint32_t ndim = get_u32(is);
    blk.shape.resize(ndim);
    int64_t n = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
      blk.shape[i] = static_cast<int64_t>(get_u64(is));
      n *= blk.shape[i];
    }
    blk.data.resize(static_cast<size_t>(n));
    for (double& v : blk.data) v = get_f64(is);
  }
  if (!is) throw std::runtime_error("container: truncated file '" + path + "'");
  return c;
}

const NamedBlock& Container::block(const std::string& name) const {
  for (const NamedBlock& b : blocks)
    if (b.name == name) return b;
  throw std::runtime_error("container: missing block '" + name + "'");
}

bool Container::has_block(const std::string& name) const {
  for (const NamedBlock& b : blocks)
    if (b.name == name) return true;
  return false;
}

// ---- classifier round trip ---------------------------------------------------

namespace {

NamedBlock tensor_block(const std::string& name, const Tensor& t) {
  NamedBlock b;
  b.name = name;
  b.shape = t.shape();
  b.data.assign(t.data().begin(), t.data().end());
  return b;
}

NamedBlock vec_block(const std::string& name, const std::vector<real_t>& v) {
  NamedBlock b;
  b.name = name;
  b.shape = {static_cast<int64_t>(v.size())};
  b.data.assign(v.begin(), v.end());
  return b;
}

}  // namespace

void save_classifier(const std::string& path, const Classifier& model) {
  nlohmann::json meta;
  meta["type"] = "classifier";
  meta["arch_kind"] = model.arch_kind;
  meta["input_shape"] = model.input_shape;
  meta["num_classes"] = model.num_classes;
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : model.layers) {
    nlohmann::json jl;
    switch (l.kind) {
      case Layer::Kind::Conv:
        jl = {{"kind", "conv"}, {"out_ch", l.out_ch}, {"kernel", l.kernel}, {"stride", l.stride}, {"pad", l.pad}};
        break;
      case Layer::Kind::Linear:
        jl = {{"kind", "linear"}, {"out", l.out}};
        break;
      case Layer::Kind::BatchNorm:
        jl = {{"kind", "batchnorm"}};
        break;
      case Layer::Kind::Relu:
        jl = {{"kind", "relu"}};
        break;
      case Layer::Kind::Flatten:
        jl = {{"kind", "flatten"}};
        break;
    }
    layers.push_back(jl);
  }
  meta["layers"] = layers;

  std::vector<NamedBlock> blocks;
  for (auto& [name, t] : model.named_params()) blocks.push_back(tensor_block(name, t));
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    if (l.kind == Layer::Kind::BatchNorm) {
      blocks.push_back(vec_block("bn" + std::to_string(i) + ".running_mean", l.running_mean));
      blocks.push_back(vec_block("bn" + std::to_string(i) + ".running_var", l.running_var));
    }
  }
  write_container(path, meta.dump(), blocks);
}

Classifier load_classifier(const std::string& path) {
  Container c = read_container(path);
  nlohmann::json meta = nlohmann::json::parse(c.metadata_json);
  if (meta.value("type", "") != "classifier")
    throw std::runtime_error("load_classifier: '" + path + "' is not a classifier container");

  Shape input_shape = meta.at("input_shape").get<Shape>();
  NetBuilder b(input_shape);
  for (const auto& jl : meta.at("layers")) {
    const std::string kind = jl.at("kind");
    if (kind == "conv")
      b.conv(jl.at("out_ch"), jl.at("kernel"), jl.at("stride"), jl.at("pad"));
    else if (kind == "linear")
      b.linear(jl.at("out"));
    else if (kind == "batchnorm")
      b.batchnorm();
    else if (kind == "relu")
      b.relu();
    else if (kind == "flatten")
      b.flatten();
    else
      throw std::runtime_error("load_classifier: unknown layer kind '" + kind + "'");
  }
  Classifier model = b.build(/*seed=*/0, meta.at("num_classes"));
  model.arch_kind = meta.at("arch_kind");

  for (auto& [name, t] : model.named_params()) {
    const NamedBlock& blk = c.block(name);
    if (blk.shape != t.shape()) throw std::runtime_error("load_classifier: shape mismatch for block '" + name + "'");
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = static_cast<real_t>(blk.data[static_cast<size_t>(i)]);
  }
  for (size_t i = 0; i < model.layers.size(); ++i) {
    Layer& l = model.layers[i];
    if (l.kind == Layer::Kind::BatchNorm) {
      const auto& rm = c.block("bn" + std::to_string(i) + ".running_mean").data;
      const auto& rv = c.block("bn" + std::to_string(i) + ".running_var").data;
      l.running_mean.assign(rm.begin(), rm.end());
      l.running_var.assign(rv.begin(), rv.end());
    }
  }
  return model;
}

}  // namespace robustlab
