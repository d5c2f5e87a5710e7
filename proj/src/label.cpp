#include "padens/label.hpp"

#include <charconv>

#include "padens/error.hpp"

namespace padens {

Label label_from_index(int index) {
  if (index < 0 || index >= kNumClasses) throw ValidationError("class index out of range: " + std::to_string(index));
  return static_cast<Label>(index - 1);
}

std::optional<Label> label_from_value(int value) {
  if (value < -1 || value > 1) return std::nullopt;
  return static_cast<Label>(value);
}

std::optional<Label> parse_label(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return label_from_value(value);
}

std::string to_string(Label l) { return std::to_string(label_value(l)); }

}  // namespace padens
