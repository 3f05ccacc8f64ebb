#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mergelab {

// FNV-1a over arbitrary bytes. Not cryptographic; used for content digests
// in reports and for the sweep's checkpoint-unchanged check.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);

// 16-hex-digit digest of a file's bytes. Throws IoFailure.
std::string file_digest(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Non-empty lines of a text file, in order. Trailing '\r' stripped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view s, char delim);
std::string to_lower(std::string_view s);

// Shortest round-trip decimal formatting (std::to_chars).
std::string format_double(double v);

// Deterministic RNG helpers. std::mt19937_64's bit stream is portable;
// the standard distributions are not, so fixtures draw through these.
std::uint64_t rng_below(std::mt19937_64& rng, std::uint64_t n);
double rng_unit(std::mt19937_64& rng); // [0, 1)

// Runs fn(0..n-1) on up to `jobs` threads. jobs <= 1 runs inline.
// The first exception thrown by any task is rethrown after all joins.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// Scoped temporary directory (created under the system temp dir, removed
// on destruction). Used by tests and sweep scratch space.
class TempDir {
  public:
    explicit TempDir(std::string_view prefix = "mergelab");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

} // namespace mergelab
