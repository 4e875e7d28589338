#include "accnn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace accnn {

namespace {

constexpr char kMagic[6] = {'A', 'C', 'C', 'N', 'N', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f32(std::ostream& os, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4);
  std::vector<unsigned char> buf(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    buf[4 * i + 0] = static_cast<unsigned char>(bits & 0xff);
    buf[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
    buf[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
    buf[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_f32(std::istream& is, float* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 4);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i + 0]) |
                         (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                         (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                         (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
    std::memcpy(&data[i], &bits, 4);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u64(os, store.size());
  for (const auto& [name, t] : store) {
    write_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(os, t.rank());
    for (std::size_t e : t.shape()) write_u64(os, e);
    write_f32(os, t.values().data(), t.numel());
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParamStore<float> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, kMagic, 6) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  const std::uint64_t count = read_u64(is);
  ParamStore<float> store;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t name_len = read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t rank = read_u64(is);
    Shape shape(rank);
    for (std::uint64_t i = 0; i < rank; ++i) shape[i] = read_u64(is);
    Tensor<float> t(shape, false);
    read_f32(is, t.values().data(), t.numel());
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
    store.add(name, std::move(t));
  }
  return store;
}

void assign_from_checkpoint(ParamStore<float>& model, const ParamStore<float>& loaded) {
  std::ostringstream diff;
  for (const auto& [name, t] : model) {
    if (!loaded.has(name)) {
      diff << "  missing in checkpoint: " << name << " " << shape_str(t.shape()) << "\n";
    } else if (loaded.at(name).shape() != t.shape()) {
      diff << "  shape mismatch: " << name << " model " << shape_str(t.shape()) << " vs checkpoint "
           << shape_str(loaded.at(name).shape()) << "\n";
    }
  }
  for (const auto& [name, t] : loaded) {
    if (!model.has(name)) {
      diff << "  unexpected in checkpoint: " << name << " " << shape_str(t.shape()) << "\n";
    }
  }
  const std::string d = diff.str();
  if (!d.empty()) {
    throw std::runtime_error("checkpoint does not match model configuration:\n" + d);
  }
  for (auto& [name, t] : model) {
    const auto& src = loaded.at(name);
    std::copy(src.values().begin(), src.values().end(), t.values().begin());
  }
}

}  // namespace accnn
