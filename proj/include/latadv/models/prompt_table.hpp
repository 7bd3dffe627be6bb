#pragma once

#include <map>
#include <string>
#include <vector>

#include "latadv/types.hpp"

namespace latadv {

/// Fixed-length prompt embeddings keyed by the SHA-256 of the prompt text.
/// The empty prompt always maps to the zero vector (the null embedding).
class PromptTable {
 public:
  explicit PromptTable(Shape embedding_shape) : shape_(std::move(embedding_shape)) {}

  const Shape& embedding_shape() const { return shape_; }

  /// Throws InterfaceError on a shape mismatch and ParameterError for "".
  void add(const std::string& prompt, Tensor embedding);

  bool contains(const std::string& prompt) const;

  /// Throws ParameterError for prompts that were never added.
  ConditionEmbedding lookup(const std::string& prompt) const;
  ConditionEmbedding null_embedding() const;

  /// Entries ordered by key hash.
  const std::map<std::string, Tensor>& entries() const { return entries_; }
  /// Inserts by key hash directly (used when loading).
  void add_hashed(const std::string& key, Tensor embedding);

  static std::string key(const std::string& prompt);

 private:
  Shape shape_;
  std::map<std::string, Tensor> entries_;
};

}  // namespace latadv
