#pragma once

#include <string>
#include <vector>

#include "robustlab/nn.hpp"
#include "robustlab/tensor.hpp"

namespace robustlab {

// Versioned binary container: 8-byte magic, u32 format version, UTF-8 metadata
// (length-prefixed), then named blocks of little-endian 64-bit floats with
// explicit shapes. Round-trips are bit-exact at 64-bit precision.
struct NamedBlock {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

void write_container(const std::string& path, const std::string& metadata_json,
                     const std::vector<NamedBlock>& blocks);

struct Container {
  std::string metadata_json;
  std::vector<NamedBlock> blocks;

  const NamedBlock& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
};

Container read_container(const std::string& path);

// model round trip
void save_classifier(const std::string& path, const Classifier& model);
Classifier load_classifier(const std::string& path);

}  // namespace robustlab
