#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "ocrrestore/unicode.hpp"

namespace ocrrestore {

// The 29-letter Finnish alphabet "abcdefghijklmnopqrstuvwxyzäåö", in this
// order. All corpus text, lexicon entries and model vocabularies are
// restricted to these characters.
class Alphabet {
 public:
  static constexpr int kSize = 29;

  static const Alphabet& instance() {
    static const Alphabet alphabet;
    return alphabet;
  }

  bool contains(char32_t c) const { return index_of(c).has_value(); }

  // Position in the alphabet, if any.
  std::optional<int> index_of(char32_t c) const {
    if (c >= U'a' && c <= U'z') return static_cast<int>(c - U'a');
    if (c == U'ä') return 26;  // ä
    if (c == U'å') return 27;  // å
    if (c == U'ö') return 28;  // ö
    return std::nullopt;
  }

  char32_t letter(int index) const { return letters_[static_cast<std::size_t>(index)]; }

  const std::array<char32_t, kSize>& letters() const { return letters_; }

  bool all_in(const Word& word) const {
    for (char32_t c : word) {
      if (!contains(c)) return false;
    }
    return true;
  }

 private:
  Alphabet() {
    for (int i = 0; i < 26; ++i) letters_[static_cast<std::size_t>(i)] = U'a' + static_cast<char32_t>(i);
    letters_[26] = U'ä';
    letters_[27] = U'å';
    letters_[28] = U'ö';
  }

  std::array<char32_t, kSize> letters_;
};

}  // namespace ocrrestore
