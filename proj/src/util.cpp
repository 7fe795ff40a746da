#include "guidemod/util.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace guidemod::util {

namespace {

// Returns the byte length of the UTF-8 sequence starting at s[i], or 0 if
// the sequence is malformed (bad lead byte, truncation, overlong form,
// surrogate, or out-of-range scalar).
std::size_t sequence_length(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return 1;
    std::size_t len = 0;
    std::uint32_t min_cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        min_cp = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        min_cp = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        min_cp = 0x10000;
    } else {
        return 0;
    }
    if (i + len > s.size()) return 0;
    std::uint32_t cp = b0 & (0xFFu >> (len + 1));
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (b & 0x3Fu);
    }
    if (cp < min_cp) return 0;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
    return len;
}

}  // namespace

Utf8Index::Utf8Index(std::string_view text) : text_(text) {
    byte_of_.reserve(text.size() + 1);
    std::size_t i = 0;
    while (i < text.size()) {
        byte_of_.push_back(i);
        const std::size_t len = sequence_length(text, i);
        if (len == 0) {
            throw std::invalid_argument("malformed UTF-8 at byte offset " + std::to_string(i));
        }
        i += len;
    }
    byte_of_.push_back(text.size());
}

std::size_t Utf8Index::byte_offset(std::size_t cp) const {
    if (cp >= byte_of_.size()) {
        throw std::out_of_range("code point offset " + std::to_string(cp) + " past end " +
                                std::to_string(code_points()));
    }
    return byte_of_[cp];
}

std::size_t Utf8Index::scalar_at_byte(std::size_t byte) const {
    const auto it = std::lower_bound(byte_of_.begin(), byte_of_.end(), byte);
    if (it == byte_of_.end() || *it != byte) {
        throw std::out_of_range("byte offset " + std::to_string(byte) +
                                " is not a sequence boundary");
    }
    return static_cast<std::size_t>(it - byte_of_.begin());
}

std::string Utf8Index::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > code_points()) {
        throw std::out_of_range("bad slice [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") of " + std::to_string(code_points()));
    }
    return std::string(text_.substr(byte_of_[begin], byte_of_[end] - byte_of_[begin]));
}

bool is_valid_utf8(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t len = sequence_length(text, i);
        if (len == 0) return false;
        i += len;
    }
    return true;
}

std::size_t code_point_count(std::string_view text) {
    return Utf8Index(text).code_points();
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw std::runtime_error("short write: " + path.string());
    }
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '\n') {
            std::string_view line = s.substr(start, i - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.emplace_back(line);
            start = i + 1;
        }
    }
    if (!s.empty() && s.back() == '\n') lines.pop_back();
    return lines;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    if (from.empty()) return s;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

void fisher_yates(std::vector<std::string>& items, std::mt19937_64& rng) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(items[i], items[j]);
    }
}

}  // namespace guidemod::util
