#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace guidemod::util {

/// All character offsets in this project count Unicode scalar values, not
/// bytes. Utf8Index maps scalar offsets of one UTF-8 string to byte offsets
/// so spans can be sliced and validated cheaply.
class Utf8Index {
public:
    // Throws std::invalid_argument on malformed UTF-8.
    explicit Utf8Index(std::string_view text);

    std::size_t code_points() const { return byte_of_.size() - 1; }

    // Byte offset of scalar offset cp, 0 <= cp <= code_points().
    std::size_t byte_offset(std::size_t cp) const;

    // Scalar offset of a byte offset; the byte must sit on a sequence
    // boundary.
    std::size_t scalar_at_byte(std::size_t byte) const;

    // Slice [begin, end) in scalar offsets; bounds-checked.
    std::string slice(std::size_t begin, std::size_t end) const;

private:
    std::string_view text_;
    std::vector<std::size_t> byte_of_;  // one entry per scalar plus sentinel
};

bool is_valid_utf8(std::string_view text);
std::size_t code_point_count(std::string_view text);  // throws on bad UTF-8

std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Fisher-Yates shuffle with index selection via modulo over mt19937_64
/// draws. Spelled out so the sequence is reproducible across standard
/// library implementations (std::shuffle is not pinned down).
void fisher_yates(std::vector<std::string>& items, std::mt19937_64& rng);

}  // namespace guidemod::util
