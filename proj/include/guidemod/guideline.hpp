#pragma once

#include <string>
#include <vector>

namespace guidemod::moderator {

/// Versioned guideline document. The section index is derived from the
/// text: ATX markdown headings (`#` .. `######`), normalized by stripping
/// emphasis markers and a leading `4.` / `#4.` style enumerator, so that
/// renumbering an inserted rule does not count as a rename.
struct Guideline {
    int version = 0;
    std::string text;
    std::vector<std::string> section_index;

    static Guideline from_text(int version, std::string text);
};

std::string normalize_heading(const std::string& raw);
std::vector<std::string> section_headings(const std::string& text);

}  // namespace guidemod::moderator
