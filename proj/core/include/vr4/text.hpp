#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

// String normalization and edit-distance helpers shared by the evidence
// matcher and the evaluation metrics. Distances operate on Unicode code
// points decoded from UTF-8; case folding is ASCII-only.
namespace vr4::text {

std::u32string decode_utf8(std::string_view s);

std::string to_lower_ascii(std::string_view s);
std::string trim(std::string_view s);

// Lowercase, trim and collapse internal whitespace runs to one space.
std::string normalize_answer(std::string_view s);

// Lowercase and drop ASCII punctuation, then split on whitespace.
std::vector<std::string> tokenize(std::string_view s);

using TokenSet = std::set<std::string>;

// Set form of tokenize(); empty tokens never appear.
TokenSet normalize_tokens(std::string_view s);

std::size_t edit_distance(std::u32string_view a, std::u32string_view b);

// edit_distance / max(|a|, |b|), 0 when both are empty.
double normalized_levenshtein(std::string_view a, std::string_view b);

} // namespace vr4::text
