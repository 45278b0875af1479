#include "ggt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

namespace ggt {

namespace {

constexpr char kMagic[4] = {'G', 'G', 'T', '1'};

struct Entry {
  std::string name;
  std::vector<int> shape;
  std::uint64_t offset = 0;  // bytes into the data section
  std::vector<float> data;
};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw std::runtime_error(path + ": truncated checkpoint");
  return v;
}
std::uint64_t get_u64(std::istream& in, const std::string& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) throw std::runtime_error(path + ": truncated checkpoint");
  return v;
}

void write_entries(const std::string& path, const std::vector<Entry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  std::uint64_t data_size = 0;
  for (const Entry& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) put_u32(out, static_cast<std::uint32_t>(d));
    put_u64(out, data_size);
    data_size += e.data.size() * 4;
  }
  put_u64(out, data_size);
  for (const Entry& e : entries) {
    out.write(reinterpret_cast<const char*>(e.data.data()), static_cast<std::streamsize>(e.data.size() * 4));
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::vector<Entry> read_entries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a GGT1 checkpoint");
  }
  const std::uint32_t count = get_u32(in, path);
  std::vector<Entry> entries(count);
  for (Entry& e : entries) {
    const std::uint32_t name_len = get_u32(in, path);
    if (name_len > 4096) throw std::runtime_error(path + ": corrupt manifest (name length)");
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len)) throw std::runtime_error(path + ": truncated checkpoint");
    const std::uint32_t rank = get_u32(in, path);
    if (rank > 8) throw std::runtime_error(path + ": corrupt manifest (rank)");
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = get_u32(in, path);
      if (d == 0 || d > (1u << 24)) throw std::runtime_error(path + ": corrupt manifest (extent)");
      e.shape.push_back(static_cast<int>(d));
      numel *= d;
    }
    e.offset = get_u64(in, path);
    e.data.resize(numel);
  }
  const std::uint64_t data_size = get_u64(in, path);
  const std::istream::pos_type data_start = in.tellg();
  for (Entry& e : entries) {
    if (e.offset + e.data.size() * 4 > data_size) {
      throw std::runtime_error(path + ": entry " + e.name + " extends past the data section");
    }
    in.seekg(data_start + static_cast<std::istream::off_type>(e.offset));
    if (!in.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(e.data.size() * 4))) {
      throw std::runtime_error(path + ": truncated data for " + e.name);
    }
  }
  return entries;
}

// The 64-bit seed rides along as four 16-bit chunks, each exactly
// representable in a float32.
std::vector<float> config_meta(const UNetConfig& c) {
  std::vector<float> v(8);
  v[0] = static_cast<float>(c.input_h);
  v[1] = static_cast<float>(c.input_w);
  v[2] = static_cast<float>(c.num_classes);
  v[3] = static_cast<float>(c.stages());
  for (int i = 0; i < 4; ++i) v[static_cast<std::size_t>(4 + i)] = static_cast<float>((c.seed >> (16 * i)) & 0xffff);
  return v;
}

}  // namespace

void save_checkpoint(const UNetModel<float>& model, const std::string& path) {
  std::vector<Entry> entries;
  Entry meta;
  meta.name = "meta/config";
  meta.data = config_meta(model.config);
  meta.shape = {static_cast<int>(meta.data.size())};
  entries.push_back(std::move(meta));

  Entry enc;
  enc.name = "meta/encoder_channels";
  for (int c : model.config.encoder_channels) enc.data.push_back(static_cast<float>(c));
  enc.shape = {static_cast<int>(enc.data.size())};
  entries.push_back(std::move(enc));

  const std::vector<std::string> names = model.param_names();
  const std::vector<const Tensor<float>*> params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Entry e;
    e.name = names[i];
    e.shape = params[i]->shape;
    e.data = params[i]->data;
    entries.push_back(std::move(e));
  }
  write_entries(path, entries);
}

UNetModel<float> load_checkpoint(const std::string& path) {
  std::vector<Entry> entries = read_entries(path);
  std::map<std::string, const Entry*> by_name;
  for (const Entry& e : entries) by_name[e.name] = &e;

  auto need = [&](const std::string& name) -> const Entry& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error(path + ": missing entry " + name);
    return *it->second;
  };

  const Entry& meta = need("meta/config");
  if (meta.data.size() != 8) throw std::runtime_error(path + ": malformed meta/config");
  UNetConfig config;
  config.input_h = static_cast<int>(meta.data[0]);
  config.input_w = static_cast<int>(meta.data[1]);
  config.num_classes = static_cast<int>(meta.data[2]);
  const int stages = static_cast<int>(meta.data[3]);
  config.seed = 0;
  for (int i = 0; i < 4; ++i) {
    config.seed |= static_cast<std::uint64_t>(static_cast<std::uint32_t>(meta.data[static_cast<std::size_t>(4 + i)]))
                   << (16 * i);
  }
  const Entry& enc = need("meta/encoder_channels");
  if (static_cast<int>(enc.data.size()) != stages) throw std::runtime_error(path + ": malformed encoder_channels");
  config.encoder_channels.clear();
  for (float c : enc.data) config.encoder_channels.push_back(static_cast<int>(c));

  UNetModel<float> model = build_unet<float>(config);
  const std::vector<std::string> names = model.param_names();
  std::vector<Tensor<float>*> params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Entry& e = need(names[i]);
    if (e.shape != params[i]->shape) {
      throw std::runtime_error(path + ": entry " + names[i] + " has shape " + shape_str(e.shape) + ", expected " +
                               shape_str(params[i]->shape));
    }
    params[i]->data = e.data;
  }
  model.tag = mix_seed(config.seed, 0x10adc4ec);
  model.revision = 0;
  return model;
}

}  // namespace ggt
