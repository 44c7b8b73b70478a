#include "mathrec/checkpoint.hpp"

#include <bit>
#include <fstream>

namespace mathrec {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'M', 'R', 'E', 'C', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint " + path.string());
  return v;
}

std::string get_string(std::istream& in, std::size_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("truncated checkpoint " + path.string());
  return s;
}

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, file.scalar_bytes);
    const std::string meta = file.meta.dump();
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint64_t>(out, file.tensors.size());
    for (const auto& t : file.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::int64_t>(out, t.rows);
      put<std::int64_t>(out, t.cols);
      put<std::uint8_t>(out, t.trainable ? 1 : 0);
      out.write(t.bytes.data(), static_cast<std::streamsize>(t.bytes.size()));
    }
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic))
    throw IoError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw CompatibilityError("checkpoint format version " + std::to_string(version) + " is not supported");
  CheckpointFile file;
  file.scalar_bytes = get<std::uint32_t>(in, path);
  if (file.scalar_bytes != 4 && file.scalar_bytes != 8) throw IoError("bad scalar width in " + path.string());
  const auto meta_len = get<std::uint64_t>(in, path);
  try {
    file.meta = nlohmann::json::parse(get_string(in, meta_len, path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint metadata: " + std::string(e.what()));
  }
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = get_string(in, get<std::uint32_t>(in, path), path);
    t.rows = get<std::int64_t>(in, path);
    t.cols = get<std::int64_t>(in, path);
    if (t.rows < 0 || t.cols < 0) throw IoError("negative tensor shape in " + path.string());
    t.trainable = get<std::uint8_t>(in, path) != 0;
    t.bytes.resize(static_cast<std::size_t>(t.rows * t.cols) * file.scalar_bytes);
    if (!t.bytes.empty() && !in.read(t.bytes.data(), static_cast<std::streamsize>(t.bytes.size())))
      throw IoError("truncated checkpoint " + path.string());
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace mathrec
