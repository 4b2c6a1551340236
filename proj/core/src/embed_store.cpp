#include "dense_eval/embed_store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "dense_eval/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "store payload is mapped as native float32; big-endian hosts unsupported");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

namespace dense_eval {

namespace {

constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8;

template <typename T>
void put_le(std::string& buf, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const std::byte* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(p[i])) << (8 * i);
  }
  return static_cast<T>(v);
}

std::string sys_error(const std::string& what, const std::filesystem::path& path) {
  return what + " '" + path.string() + "': " + std::strerror(errno);
}

}  // namespace

class MappedFile {
 public:
  explicit MappedFile(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) throw IoError(sys_error("cannot open", path));
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
      ::close(fd_);
      throw IoError(sys_error("cannot stat", path));
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
      void* addr = ::mmap(nullptr, size_, PROT_READ, MAP_SHARED, fd_, 0);
      if (addr == MAP_FAILED) {
        ::close(fd_);
        throw IoError(sys_error("cannot map", path));
      }
      data_ = static_cast<const std::byte*>(addr);
    }
  }

  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  ~MappedFile() {
    if (data_ != nullptr) ::munmap(const_cast<std::byte*>(data_), size_);
    if (fd_ >= 0) ::close(fd_);
  }

  const std::byte* data() const noexcept { return data_; }
  std::size_t size() const noexcept { return size_; }

 private:
  int fd_ = -1;
  const std::byte* data_ = nullptr;
  std::size_t size_ = 0;
};

EmbeddingStore::EmbeddingStore(EmbeddingStore&&) noexcept = default;
EmbeddingStore& EmbeddingStore::operator=(EmbeddingStore&&) noexcept = default;
EmbeddingStore::~EmbeddingStore() = default;

std::size_t EmbeddingStore::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? npos : it->second;
}

void EmbeddingStore::copy_row(std::size_t row, std::span<float> out) const {
  if (row >= count()) {
    throw std::out_of_range("row " + std::to_string(row) + " out of range");
  }
  if (out.size() != dim_) {
    throw std::invalid_argument("copy_row: output span has wrong length");
  }
  // Rows are not necessarily 4-byte aligned in the mapping.
  std::memcpy(out.data(), payload_ + row * std::size_t{dim_} * sizeof(float),
              std::size_t{dim_} * sizeof(float));
}

std::vector<float> EmbeddingStore::get_vector(std::string_view id) const {
  const std::size_t row = find(id);
  if (row == npos) throw LookupError(std::string(id));
  std::vector<float> out(dim_);
  copy_row(row, out);
  return out;
}

void EmbeddingStore::validate_payload() const {
  std::vector<float> row(dim_);
  for (std::size_t r = 0; r < count(); ++r) {
    copy_row(r, row);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!std::isfinite(row[c])) {
        throw DataError(path_.string() + ": non-finite value in row '" + ids_[r] +
                        "' column " + std::to_string(c));
      }
    }
  }
}

void write_store(std::span<const std::string> ids, std::span<const float> matrix,
                 std::uint32_t dim, const std::filesystem::path& path) {
  if (dim == 0) throw DataError("write_store: dim must be >= 1");
  if (matrix.size() != ids.size() * std::size_t{dim}) {
    throw DataError("write_store: matrix holds " + std::to_string(matrix.size()) +
                    " floats, expected " + std::to_string(ids.size()) + " x " +
                    std::to_string(dim));
  }

  std::unordered_set<std::string_view> seen;
  seen.reserve(ids.size());
  for (const auto& id : ids) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw DataError("write_store: id longer than 65535 bytes");
    }
    if (!seen.insert(id).second) throw DataError("write_store: duplicate id '" + id + "'");
  }
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    if (!std::isfinite(matrix[i])) {
      throw DataError("write_store: non-finite value in row '" + ids[i / dim] + "'");
    }
  }

  std::string header;
  header.reserve(kHeaderSize);
  header.append(kStoreMagic, 4);
  put_le<std::uint32_t>(header, kStoreVersion);
  put_le<std::uint32_t>(header, dim);
  put_le<std::uint64_t>(header, ids.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(sys_error("cannot create", path));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::string table;
  for (const auto& id : ids) {
    table.clear();
    put_le<std::uint16_t>(table, id.size());
    table += id;
    out.write(table.data(), static_cast<std::streamsize>(table.size()));
  }
  out.write(reinterpret_cast<const char*>(matrix.data()),
            static_cast<std::streamsize>(matrix.size_bytes()));
  out.flush();
  if (!out) throw IoError(sys_error("write failed for", path));
}

void write_store(std::span<const std::string> ids,
                 std::span<const std::vector<float>> vectors,
                 const std::filesystem::path& path) {
  if (ids.size() != vectors.size()) {
    throw DataError("write_store: " + std::to_string(ids.size()) + " ids but " +
                    std::to_string(vectors.size()) + " vectors");
  }
  if (vectors.empty()) {
    throw DataError("write_store: no vectors to infer dim from; use the flat overload");
  }
  const std::size_t dim = vectors.front().size();
  if (dim == 0 || dim > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError("write_store: invalid vector length " + std::to_string(dim));
  }
  std::vector<float> flat;
  flat.reserve(dim * vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim) {
      throw DataError("write_store: ragged vectors: row '" + ids[i] + "' has " +
                      std::to_string(vectors[i].size()) + " values, expected " +
                      std::to_string(dim));
    }
    flat.insert(flat.end(), vectors[i].begin(), vectors[i].end());
  }
  write_store(ids, flat, static_cast<std::uint32_t>(dim), path);
}

EmbeddingStore open_store(const std::filesystem::path& path) {
  EmbeddingStore store;
  store.path_ = path;
  store.file_ = std::make_unique<MappedFile>(path);
  const std::byte* data = store.file_->data();
  const std::size_t size = store.file_->size();
  const std::string name = path.string();

  if (size < kHeaderSize || std::memcmp(data, kStoreMagic, 4) != 0) {
    throw DataError(name + ": bad magic, not an embedding store");
  }
  const auto version = get_le<std::uint32_t>(data + 4);
  if (version != kStoreVersion) {
    throw DataError(name + ": unsupported store version " + std::to_string(version));
  }
  store.dim_ = get_le<std::uint32_t>(data + 8);
  const auto count = get_le<std::uint64_t>(data + 12);
  if (store.dim_ == 0) throw DataError(name + ": dim is zero");

  // Each id entry needs at least 2 bytes, which bounds a corrupt count.
  if (count > (size - kHeaderSize) / 2) {
    throw DataError(name + ": truncated id table (header declares " +
                    std::to_string(count) + " rows)");
  }

  std::size_t offset = kHeaderSize;
  store.ids_.reserve(count);
  store.index_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    if (size - offset < 2) throw DataError(name + ": truncated id table");
    const auto len = get_le<std::uint16_t>(data + offset);
    offset += 2;
    if (size - offset < len) throw DataError(name + ": truncated id table");
    std::string id(reinterpret_cast<const char*>(data + offset), len);
    offset += len;
    if (!store.index_.emplace(id, store.ids_.size()).second) {
      throw DataError(name + ": duplicate id '" + id + "' in id table");
    }
    store.ids_.push_back(std::move(id));
  }

  const std::size_t payload = size - offset;
  const std::size_t row_bytes = std::size_t{store.dim_} * sizeof(float);
  if (count != 0 && row_bytes > std::numeric_limits<std::size_t>::max() / count) {
    throw DataError(name + ": declared payload size overflows");
  }
  const std::size_t expected = static_cast<std::size_t>(count) * row_bytes;
  if (payload < expected) {
    throw DataError(name + ": truncated payload (" + std::to_string(payload) +
                    " bytes present, " + std::to_string(expected) + " declared)");
  }
  if (payload > expected) {
    throw DataError(name + ": " + std::to_string(payload - expected) +
                    " trailing bytes after payload");
  }
  store.payload_ = data + offset;
  return store;
}

}  // namespace dense_eval
