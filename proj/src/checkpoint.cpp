#include "bidrn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "bidrn/errors.hpp"

namespace bidrn {
namespace {

constexpr char kMagic[8] = {'B', 'I', 'D', 'R', 'N', 'W', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::ifstream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

template <typename Real>
void save_checkpoint(const std::string& path,
                     const std::vector<Parameter<Real>*>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  for (const Parameter<Real>* p : params) {
    const Shape& s = p->value.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(out, 4);
    for (std::size_t e : {s.batch, s.channels, s.height, s.width}) {
      put<std::uint64_t>(out, e);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      put<float>(out, static_cast<float>(p->value[i]));
    }
  }
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("'" + path + "' is not a weight checkpoint (bad magic)");
  }
  std::vector<CheckpointRecord> records;
  std::uint32_t name_len = 0;
  while (get(in, name_len)) {
    CheckpointRecord r;
    r.name.resize(name_len);
    std::uint32_t rank = 0;
    if (!in.read(r.name.data(), name_len) || !get(in, rank) || rank > 8) {
      throw IoError("truncated checkpoint record in '" + path + "'");
    }
    std::uint64_t count = 1;
    r.extents.resize(rank);
    for (auto& e : r.extents) {
      if (!get(in, e)) throw IoError("truncated extents in '" + path + "'");
      count *= e;
    }
    r.values.resize(count);
    if (!in.read(reinterpret_cast<char*>(r.values.data()),
                 static_cast<std::streamsize>(count * sizeof(float)))) {
      throw IoError("truncated values for '" + r.name + "' in '" + path + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

template <typename Real>
void load_checkpoint(const std::string& path,
                     const std::vector<Parameter<Real>*>& params) {
  std::unordered_map<std::string, Parameter<Real>*> by_name;
  for (auto* p : params) by_name[p->name] = p;
  for (const auto& r : read_checkpoint(path)) {
    auto it = by_name.find(r.name);
    if (it == by_name.end()) throw IoError("checkpoint has unknown parameter " + r.name);
    Parameter<Real>& p = *it->second;
    if (r.values.size() != p.value.size()) {
      throw IoError("checkpoint size mismatch for " + r.name);
    }
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      p.value[i] = static_cast<Real>(r.values[i]);
    }
  }
}

template void save_checkpoint(const std::string&, const std::vector<Parameter<float>*>&);
template void save_checkpoint(const std::string&, const std::vector<Parameter<double>*>&);
template void load_checkpoint(const std::string&, const std::vector<Parameter<float>*>&);
template void load_checkpoint(const std::string&, const std::vector<Parameter<double>*>&);

}  // namespace bidrn
