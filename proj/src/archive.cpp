#include "padens/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "padens/error.hpp"

namespace padens {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'D', 'N', 'S', 'A', 'R', 'C', 'H'};

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  template <class T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }

  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("truncated archive " + origin_);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kArchiveVersion);
  const std::string header = archive.metadata.dump();
  put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put<std::uint64_t>(out, archive.tensors.size());
  for (const auto& [name, tensor] : archive.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) put<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}), path.string());

  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(path.string() + " is not a padens archive");
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveVersion)
    throw CheckpointError("version mismatch in " + path.string() + ": file has " + std::to_string(version) +
                          ", expected " + std::to_string(kArchiveVersion));

  Archive archive;
  const auto header_len = r.get<std::uint64_t>();
  const char* header = r.take(header_len);
  try {
    archive.metadata = nlohmann::json::parse(header, header + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt metadata header in " + path.string() + ": " + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len), name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("corrupt tensor rank in " + path.string());
    nn::Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::int64_t>();
      if (d < 0 || d > (1LL << 31)) throw CheckpointError("corrupt tensor shape in " + path.string());
      shape.push_back(static_cast<int>(d));
      numel *= static_cast<std::size_t>(d);
      if (numel > r.remaining()) throw CheckpointError("truncated archive " + path.string());
    }
    const char* src = r.take(numel * sizeof(double));
    nn::Tensor t(shape);
    std::memcpy(t.data(), src, numel * sizeof(double));
    archive.tensors.push_back({std::move(name), std::move(t)});
  }
  if (!r.at_end()) throw CheckpointError("trailing bytes after tensor payload in " + path.string());
  return archive;
}

}  // namespace padens
