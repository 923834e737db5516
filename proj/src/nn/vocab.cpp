#include "shrdlurn/nn/vocab.hpp"

namespace shrdlurn::nn {

Vocabulary::Vocabulary(std::span<const std::string> words) {
  for (const auto& w : words) add(w);
}

int Vocabulary::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  if (frozen_) throw std::logic_error("vocabulary is frozen; use add_new_word");
  index_.emplace(word, size());
  words_.push_back(word);
  return size() - 1;
}

int Vocabulary::add_new_word(const std::string& word) {
  if (index_.count(word)) throw std::invalid_argument("word '" + word + "' already registered");
  if (!frozen_) freeze();
  index_.emplace(word, size());
  words_.push_back(word);
  return size() - 1;
}

std::optional<int> Vocabulary::find(const std::string& word) const {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  return std::nullopt;
}

int Vocabulary::id(const std::string& word) const {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  throw UnknownToken(word);
}

std::vector<int> Vocabulary::ids(std::span<const std::string> words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<int> Vocabulary::new_word_ids() const {
  std::vector<int> out;
  for (int i = base_size(); i < size(); ++i) out.push_back(i);
  return out;
}

}  // namespace shrdlurn::nn
