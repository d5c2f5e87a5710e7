#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace padens {

// Competition class scheme: -1 no carcinoma, 0 benign, 1 malignant.
enum class Label : int { kNegative = -1, kBenign = 0, kMalignant = 1 };

inline constexpr int kNumClasses = 3;
inline constexpr std::array<Label, kNumClasses> kAllLabels{Label::kNegative, Label::kBenign, Label::kMalignant};

constexpr int label_value(Label l) { return static_cast<int>(l); }

// Fixed mapping -1 -> 0, 0 -> 1, 1 -> 2 used for score columns.
constexpr int class_index(Label l) { return static_cast<int>(l) + 1; }
Label label_from_index(int index);

std::optional<Label> label_from_value(int value);
// Parses "-1", "0" or "1" (surrounding whitespace allowed).
std::optional<Label> parse_label(std::string_view text);
std::string to_string(Label l);

}  // namespace padens
