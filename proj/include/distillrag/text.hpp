#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 aware string helpers shared by every module.
namespace distillrag::text {

std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view cps);
void append_utf8(std::string& out, char32_t cp);

/// Simple case folding: ASCII, Latin-1, Latin Extended-A pairs, Greek and
/// Cyrillic. CJK and other scripts have no case and pass through.
char32_t fold_case(char32_t cp) noexcept;
std::string fold_case(std::string_view s);

bool is_space(char32_t cp) noexcept;
std::string_view trim(std::string_view s) noexcept;
bool is_blank(std::string_view s) noexcept;

/// Case-fold + trim. Used for every key comparison in the system.
std::string normalize_key(std::string_view s);

std::size_t codepoint_length(std::string_view s);

/// Truncates to at most `budget` code points. When truncation happens the
/// result ends with `marker` and still fits inside the budget.
std::string truncate_codepoints(std::string_view s, std::size_t budget,
                                std::string_view marker = "…[truncated]");

/// 64-bit FNV-1a followed by a splitmix64 finalizer. Stable across platforms.
std::uint64_t stable_hash64(std::string_view data, std::uint64_t seed = 0) noexcept;

std::string hex64(std::uint64_t v);

/// Single-pass `{{name}}` substitution. Placeholders inside substituted values
/// are never expanded. Unknown placeholders are left verbatim.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string, std::less<>>& values);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split(std::string_view s, char sep);

bool icontains(std::string_view haystack, std::string_view needle);

}  // namespace distillrag::text
