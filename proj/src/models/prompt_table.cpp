#include "latadv/models/prompt_table.hpp"

#include "latadv/error.hpp"
#include "latadv/hash.hpp"

namespace latadv {

std::string PromptTable::key(const std::string& prompt) { return sha256_hex(prompt); }

void PromptTable::add(const std::string& prompt, Tensor embedding) {
  if (prompt.empty()) throw ParameterError("the empty prompt is reserved for the null embedding");
  add_hashed(key(prompt), std::move(embedding));
}

void PromptTable::add_hashed(const std::string& key, Tensor embedding) {
  require_same_shape(embedding.shape(), shape_, "prompt embedding");
  entries_[key] = std::move(embedding);
}

bool PromptTable::contains(const std::string& prompt) const {
  return prompt.empty() || entries_.contains(key(prompt));
}

ConditionEmbedding PromptTable::lookup(const std::string& prompt) const {
  if (prompt.empty()) return null_embedding();
  auto it = entries_.find(key(prompt));
  if (it == entries_.end()) throw ParameterError("no embedding for prompt \"" + prompt + "\"");
  return {it->second, EmbeddingKind::text};
}

ConditionEmbedding PromptTable::null_embedding() const {
  return {Tensor(shape_), EmbeddingKind::null};
}

}  // namespace latadv
