#ifndef RDG_COMMON_HPP
#define RDG_COMMON_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace rdg {

namespace fs = std::filesystem;

// Error taxonomy. The CLI maps each category to a distinct exit code.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Writes `content` to `path` atomically (temp file + rename).
void write_file_atomic(const fs::path& path, const std::string& content);

std::string read_file(const fs::path& path);

// Derives a stream seed from a base seed and a stream tag, so independent
// RNG consumers (per domain, per stage) never share a sequence.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace rdg

#endif
