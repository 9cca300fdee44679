#include "facenet/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "facenet/errors.hpp"

namespace facenet::train {

namespace {

constexpr char kMagic[8] = {'F', 'C', 'N', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IngestionError("truncated checkpoint: " + path.string());
  return v;
}

std::string get_string(std::istream& is, const std::filesystem::path& path) {
  const auto n = get<std::uint64_t>(is, path);
  if (n > (1ULL << 32)) throw IngestionError("corrupt checkpoint: " + path.string());
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw IngestionError("truncated checkpoint: " + path.string());
  return s;
}

}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IngestionError("cannot write checkpoint: " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put(os, kVersion);
    put_string(os, data.config_text);
    put(os, data.num_classes);
    put(os, data.epoch);
    put(os, data.step);
    put(os, data.adam_t);
    put<std::uint64_t>(os, data.tensors.size());
    for (const auto& [name, t] : data.tensors) {
      put_string(os, name);
      put<std::uint64_t>(os, t.shape().size());
      for (auto d : t.shape()) put<std::int64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.raw()),
               static_cast<std::streamsize>(static_cast<std::size_t>(t.numel()) * sizeof(double)));
    }
    os.flush();
    if (!os) throw IngestionError("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open checkpoint: " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kMagic)) {
    throw IngestionError("not a checkpoint: " + path.string());
  }
  if (get<std::uint32_t>(is, path) != kVersion) throw IngestionError("unsupported checkpoint version: " + path.string());
  CheckpointData data;
  data.config_text = get_string(is, path);
  data.num_classes = get<std::int64_t>(is, path);
  data.epoch = get<std::int64_t>(is, path);
  data.step = get<std::int64_t>(is, path);
  data.adam_t = get<std::int64_t>(is, path);
  const auto count = get<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = get_string(is, path);
    const auto rank = get<std::uint64_t>(is, path);
    if (rank > 8) throw IngestionError("corrupt checkpoint tensor " + name + ": " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = get<std::int64_t>(is, path);
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(static_cast<std::size_t>(t.numel()) * sizeof(double)))) {
      throw IngestionError("truncated checkpoint tensor " + name + ": " + path.string());
    }
    data.tensors.emplace_back(std::move(name), std::move(t));
  }
  return data;
}

}  // namespace facenet::train
