#pragma once

#include <string>
#include <vector>

#include "bidrn/tensor.hpp"

namespace bidrn {

// Little-endian weight file: "BIDRNW01", then one record per parameter:
// u32 name length, name bytes, u32 rank, rank x u64 extents, f32 values.
struct CheckpointRecord {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::vector<float> values;
};

template <typename Real>
void save_checkpoint(const std::string& path,
                     const std::vector<Parameter<Real>*>& params);

std::vector<CheckpointRecord> read_checkpoint(const std::string& path);

// Copies every record into the parameter of the same name. Throws IoError on
// a missing name or a shape mismatch.
template <typename Real>
void load_checkpoint(const std::string& path,
                     const std::vector<Parameter<Real>*>& params);

}  // namespace bidrn
