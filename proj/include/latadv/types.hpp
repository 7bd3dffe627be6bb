#pragma once

#include <string_view>

#include "latadv/tensor.hpp"

namespace latadv {

/// A latent at a given DDIM level (0 = clean slot, T = terminal noise).
struct LatentState {
  Tensor values;
  int level = 0;
};

enum class EmbeddingKind { text, null };

std::string_view to_string(EmbeddingKind kind);

struct ConditionEmbedding {
  Tensor values;
  EmbeddingKind kind = EmbeddingKind::text;
};

struct Capabilities {
  bool differentiable = false;
  bool concurrent_safe = false;
};

}  // namespace latadv
