#pragma once

// Checkpoint container: magic "TPSDF1", a JSON header (dims, widths, seed,
// iteration, block table), then raw little-endian float32 parameter blocks
// in declaration order. Activation kinds are fixed by the format version.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "tpsdf/field.hpp"
#include "tpsdf/serialize.hpp"

namespace tpsdf {

inline constexpr char kCheckpointMagic[7] = "TPSDF1";  // 6 chars + NUL

template <typename T>
inline void save_checkpoint(const std::filesystem::path& path, const TriplaneField<T>& field) {
  auto& f = const_cast<TriplaneField<T>&>(field);
  auto blocks = param_blocks(f);

  json header;
  header["format"] = "TPSDF1";
  header["version"] = 1;
  header["plane_res"] = f.planes.res;
  header["plane_channels"] = f.planes.channels;
  header["latent_dim"] = f.latent_dim;
  json sdfh = json::array(), rgbh = json::array();
  for (size_t l = 1; l + 1 < f.sdf_mlp.widths.size(); ++l) sdfh.push_back(f.sdf_mlp.widths[l]);
  for (size_t l = 1; l + 1 < f.rgb_mlp.widths.size(); ++l) rgbh.push_back(f.rgb_mlp.widths[l]);
  header["sdf_hidden"] = sdfh;
  header["rgb_hidden"] = rgbh;
  header["seed"] = f.seed;
  header["iteration"] = f.iteration;
  json btab = json::array();
  for (const auto& b : blocks) btab.push_back({{"name", b.name}, {"size", b.size}});
  header["blocks"] = btab;
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(kCheckpointMagic, 6);
  out.put('\n');
  uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), std::streamsize(hs.size()));
  std::vector<float> tmp;
  for (const auto& b : blocks) {
    tmp.resize(size_t(b.size));
    for (int64_t i = 0; i < b.size; ++i) tmp[size_t(i)] = float(b.data[i]);
    out.write(reinterpret_cast<const char*>(tmp.data()), std::streamsize(4 * size_t(b.size)));
  }
  if (!out) throw std::runtime_error("short write: " + path.string());
}

template <typename T>
inline TriplaneField<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[7] = {};
  in.read(magic, 7);
  if (!in || std::memcmp(magic, kCheckpointMagic, 6) != 0 || magic[6] != '\n')
    throw std::runtime_error("not a TPSDF1 checkpoint: " + path.string());
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in || hlen == 0 || hlen > (1ull << 20))
    throw std::runtime_error("corrupt checkpoint header length: " + path.string());
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path.string());
  json header = json::parse(hs);
  require_keys(header, "checkpoint header",
               {"format", "version", "plane_res", "plane_channels", "latent_dim", "sdf_hidden",
                "rgb_hidden", "seed", "iteration", "blocks"},
               {"format", "version", "plane_res", "plane_channels", "latent_dim", "sdf_hidden",
                "rgb_hidden", "seed", "iteration", "blocks"});
  if (header["format"].get<std::string>() != "TPSDF1" || header["version"].get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version: " + path.string());

  FieldDims dims;
  dims.plane_res = header["plane_res"].get<int>();
  dims.plane_channels = header["plane_channels"].get<int>();
  dims.latent_dim = header["latent_dim"].get<int>();
  dims.sdf_hidden = header["sdf_hidden"].get<std::vector<int>>();
  dims.rgb_hidden = header["rgb_hidden"].get<std::vector<int>>();

  TriplaneField<T> f = init_field<T>(0, dims);
  f.seed = header["seed"].get<uint64_t>();
  f.iteration = header["iteration"].get<int64_t>();

  auto blocks = param_blocks(f);
  const json& btab = header["blocks"];
  if (!btab.is_array() || btab.size() != blocks.size())
    throw std::runtime_error("checkpoint block table mismatch: " + path.string());
  std::vector<float> tmp;
  for (size_t i = 0; i < blocks.size(); ++i) {
    const json& e = btab[i];
    if (e["name"].get<std::string>() != blocks[i].name ||
        e["size"].get<int64_t>() != blocks[i].size)
      throw std::runtime_error("checkpoint block '" + blocks[i].name + "' mismatch: " +
                               path.string());
    tmp.resize(size_t(blocks[i].size));
    in.read(reinterpret_cast<char*>(tmp.data()), std::streamsize(4 * tmp.size()));
    if (!in) throw std::runtime_error("truncated checkpoint payload: " + path.string());
    for (int64_t j = 0; j < blocks[i].size; ++j) blocks[i].data[j] = T(tmp[size_t(j)]);
  }
  in.peek();
  if (!in.eof()) throw std::runtime_error("trailing bytes after checkpoint payload: " + path.string());
  return f;
}

}  // namespace tpsdf
