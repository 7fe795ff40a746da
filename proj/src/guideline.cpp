#include "guidemod/guideline.hpp"

#include <cctype>

#include "guidemod/util.hpp"

namespace guidemod::moderator {

std::string normalize_heading(const std::string& raw) {
    std::string s = util::trim(raw);
    // strip symmetric emphasis markers
    for (const std::string mark : {"**", "__", "*", "_"}) {
        while (s.size() > 2 * mark.size() && s.starts_with(mark) && s.ends_with(mark)) {
            s = util::trim(s.substr(mark.size(), s.size() - 2 * mark.size()));
        }
    }
    // strip a leading "4." / "#4." / "4)" enumerator
    std::size_t i = 0;
    if (i < s.size() && s[i] == '#') ++i;
    std::size_t digits = i;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
    if (digits > i && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) {
        s = util::trim(s.substr(digits + 1));
    }
    // collapse runs of whitespace
    std::string out;
    bool in_space = false;
    for (const char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(ch);
    }
    return out;
}

std::vector<std::string> section_headings(const std::string& text) {
    std::vector<std::string> headings;
    for (const auto& line : util::split_lines(text)) {
        std::size_t i = 0;
        while (i < line.size() && i < 3 && line[i] == ' ') ++i;
        std::size_t hashes = 0;
        while (i + hashes < line.size() && line[i + hashes] == '#') ++hashes;
        if (hashes < 1 || hashes > 6) continue;
        if (i + hashes >= line.size() || line[i + hashes] != ' ') continue;
        const std::string title = normalize_heading(line.substr(i + hashes + 1));
        if (!title.empty()) headings.push_back(title);
    }
    return headings;
}

Guideline Guideline::from_text(int version, std::string text) {
    Guideline g;
    g.version = version;
    g.section_index = section_headings(text);
    g.text = std::move(text);
    return g;
}

}  // namespace guidemod::moderator
