#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dense_eval {

// On-disk layout (little-endian, no padding):
//   "DNSE" | version u32 | dim u32 | count u64 |
//   count x (id_len u16, id bytes) | count*dim float32, row-major
inline constexpr char kStoreMagic[4] = {'D', 'N', 'S', 'E'};
inline constexpr std::uint32_t kStoreVersion = 1;

class MappedFile;

/// Read-only embedding matrix backed by a memory-mapped store file.
///
/// The id table is parsed on open; rows are read from the mapping on demand,
/// so opening a multi-million row store does not touch the payload. After
/// open the object is immutable and may be shared by concurrent readers.
class EmbeddingStore {
 public:
  EmbeddingStore(EmbeddingStore&&) noexcept;
  EmbeddingStore& operator=(EmbeddingStore&&) noexcept;
  ~EmbeddingStore();

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::filesystem::path& path() const noexcept { return path_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  /// Row index for `id`, or npos.
  std::size_t find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != npos; }

  /// Copies row `row` into `out` (which must hold dim() floats).
  void copy_row(std::size_t row, std::span<float> out) const;

  /// Returns a copy of the row for `id`; throws LookupError naming the id.
  std::vector<float> get_vector(std::string_view id) const;

  /// Scans the whole payload and throws DataError on the first non-finite
  /// value. open_store() does not do this so that opening stays lazy.
  void validate_payload() const;

 private:
  friend EmbeddingStore open_store(const std::filesystem::path& path);
  EmbeddingStore() = default;

  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::filesystem::path path_;
  std::uint32_t dim_ = 0;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t, StringHash, std::equal_to<>> index_;
  std::unique_ptr<MappedFile> file_;
  const std::byte* payload_ = nullptr;
};

/// Writes a store from a flat row-major matrix of ids.size() x dim floats.
/// Validates everything before creating the file.
void write_store(std::span<const std::string> ids, std::span<const float> matrix,
                 std::uint32_t dim, const std::filesystem::path& path);

/// Convenience overload for one vector per id; rows must all share one
/// length >= 1.
void write_store(std::span<const std::string> ids,
                 std::span<const std::vector<float>> vectors,
                 const std::filesystem::path& path);

EmbeddingStore open_store(const std::filesystem::path& path);

}  // namespace dense_eval
