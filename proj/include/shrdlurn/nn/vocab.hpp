#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace shrdlurn::nn {

class UnknownToken : public std::out_of_range {
 public:
  explicit UnknownToken(const std::string& word)
      : std::out_of_range("unknown token '" + word + "'"), word_(word) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

/// Utterance word ids. Ids are dense; words registered after freeze() are
/// "new words" and always come after the offline vocabulary.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::span<const std::string> words);

  /// Adds a word during vocabulary construction; returns its id.
  int add(const std::string& word);
  /// Appends a word after freezing; throws std::invalid_argument if present.
  int add_new_word(const std::string& word);
  void freeze() { frozen_ = true; base_size_ = size(); }

  std::optional<int> find(const std::string& word) const;
  /// Throws UnknownToken.
  int id(const std::string& word) const;
  std::vector<int> ids(std::span<const std::string> words) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& words() const { return words_; }

  int size() const { return static_cast<int>(words_.size()); }
  bool frozen() const { return frozen_; }
  /// Size of the offline vocabulary (all words when not frozen).
  int base_size() const { return frozen_ ? base_size_ : size(); }
  bool is_new(int id) const { return frozen_ && id >= base_size_; }
  std::vector<int> new_word_ids() const;

  static constexpr int kStateVocabularySize = 6;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  bool frozen_ = false;
  int base_size_ = 0;
};

}  // namespace shrdlurn::nn
