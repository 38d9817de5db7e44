#include "fpt/backbone/weights_io.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace fpt::backbone {

namespace fs = std::filesystem;

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

void save_weights(const ParameterStore& store, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json tensors = nlohmann::json::array();
  std::ofstream blob(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(blob), ErrorKind::IoError, "cannot write " + (dir / "weights.bin").string());
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = store.at(i);
    tensors.push_back({{"name", store.names()[i]}, {"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}});
    for (float v : t.data) {
      const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(v));
      blob.write(reinterpret_cast<const char*>(&bits), 4);
    }
    offset += 4 * t.data.size();
  }
  blob.close();
  require(!blob.fail(), ErrorKind::IoError, "failed writing " + (dir / "weights.bin").string());

  std::ofstream manifest(dir / "manifest.json", std::ios::trunc);
  require(static_cast<bool>(manifest), ErrorKind::IoError, "cannot write " + (dir / "manifest.json").string());
  manifest << nlohmann::json{{"format_version", kWeightFormatVersion}, {"tensors", tensors}}.dump(2) << '\n';
  manifest.close();
  require(!manifest.fail(), ErrorKind::IoError, "failed writing " + (dir / "manifest.json").string());
}

ParameterStore load_weights(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const fs::path bpath = dir / "weights.bin";
  require(fs::exists(mpath), ErrorKind::MissingWeights, "no manifest.json in " + dir.string());
  require(fs::exists(bpath), ErrorKind::MissingWeights, "no weights.bin in " + dir.string());

  nlohmann::json manifest;
  try {
    std::ifstream in(mpath);
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, mpath.string() + ": " + e.what());
  }
  require(manifest.value("format_version", 0) == kWeightFormatVersion, ErrorKind::FormatError,
          "unsupported weight format_version in " + mpath.string());
  require(manifest.contains("tensors") && manifest["tensors"].is_array(), ErrorKind::FormatError,
          "manifest has no tensors array");

  std::ifstream blob(bpath, std::ios::binary);
  require(static_cast<bool>(blob), ErrorKind::IoError, "cannot read " + bpath.string());
  blob.seekg(0, std::ios::end);
  const auto blob_size = static_cast<std::uint64_t>(blob.tellg());

  ParameterStore store;
  try {
    for (const auto& jt : manifest["tensors"]) {
      const auto name = jt.at("name").get<std::string>();
      require(jt.value("dtype", "") == "f32", ErrorKind::FormatError, name + ": only f32 tensors are supported");
      auto shape = jt.at("shape").get<std::vector<std::size_t>>();
      const auto offset = jt.at("offset").get<std::uint64_t>();
      auto& t = store.add(name, shape);
      const std::uint64_t bytes = 4 * t.data.size();
      require(offset + bytes <= blob_size, ErrorKind::FormatError,
              name + ": extends past the end of weights.bin (" + std::to_string(offset + bytes) + " > " +
                  std::to_string(blob_size) + ")");
      blob.seekg(static_cast<std::streamoff>(offset));
      std::vector<std::uint32_t> raw(t.data.size());
      blob.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
      require(static_cast<bool>(blob), ErrorKind::IoError, "short read for " + name);
      for (std::size_t k = 0; k < raw.size(); ++k) {
        t.data[k] = std::bit_cast<float>(to_le(raw[k]));
        require(std::isfinite(t.data[k]), ErrorKind::FormatError, name + ": non-finite entry at " + std::to_string(k));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, mpath.string() + ": " + e.what());
  }
  return store;
}

ParameterStore load_weights(const fs::path& dir, const BackboneConfig& cfg) {
  const ParameterStore raw = load_weights(dir);
  check_layout(raw, cfg);
  ParameterStore out;
  for (const auto& spec : parameter_layout(cfg)) {
    auto& t = out.add(spec.name, spec.shape);
    t.data = raw.at(spec.name).data;
  }
  return out;
}

}  // namespace fpt::backbone
