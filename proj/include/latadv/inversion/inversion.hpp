#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "latadv/models/registry.hpp"
#include "latadv/types.hpp"

namespace latadv {

struct InversionConfig {
  int steps = 50;             // T
  int inner_iterations = 10;  // N_i
  double zeta = 0.01;         // null-embedding step size
  double guidance = 7.5;      // w
};

/// DDIM inversion at w = 1: {z_0*, ..., z_T*} with z_0* = z0 exactly.
std::vector<Tensor> pivot_trajectory(const DiffusionSchedule& schedule,
                                     const NoisePredictor& model, const Tensor& z0,
                                     const ConditionEmbedding& cond);

struct NullOptimization {
  /// nulls[k - 1] is the embedding used when leaving level k.
  std::vector<ConditionEmbedding> nulls;
  /// Running latents z̄_k for k = 0..T; running[T] = pivots[T].
  std::vector<Tensor> running;
  /// Alignment loss per level before the first and after the last update
  /// (index k - 1 for level k).
  std::vector<double> initial_losses;
  std::vector<double> final_losses;
  /// Loss before each update and after the last: N_i + 1 values per level.
  std::vector<std::vector<double>> loss_traces;
};

/// Per level k = T..1, plain gradient descent on
///   mean((z*_{k-1} - z_{k-1}(z̄_k, C, ∅_k))²)
/// over ∅_k, warm-started from ∅_{k+1} (∅_T from `null_init`), then advances
/// z̄_{k-1} with the optimised embedding. Noise predictions are taken at the
/// running latent z̄_k.
NullOptimization optimize_null_embeddings(const DiffusionSchedule& schedule,
                                          const NoisePredictor& model,
                                          const std::vector<Tensor>& pivots,
                                          const ConditionEmbedding& cond,
                                          const ConditionEmbedding& null_init,
                                          int inner_iterations, double zeta, double guidance);

struct InversionRecord {
  std::string image_id;
  std::string prompt;
  Tensor source;  // pixel-space image
  ScheduleParams schedule;  // schedule.steps is T
  int inner_iterations = 0;
  double zeta = 0.0;
  double guidance_w = 1.0;
  ConditionEmbedding text_embedding;
  std::vector<Tensor> pivots;  // levels 0..T
  std::vector<ConditionEmbedding> nulls;
  std::vector<double> initial_losses;
  std::vector<double> per_step_losses;
  std::vector<std::vector<double>> loss_traces;
  /// Pixel MSE between reconstruct(record) and source.
  double reconstruction_error = 0.0;

  int steps() const { return static_cast<int>(nulls.size()); }
  const Tensor& z_T() const { return pivots.back(); }
  DiffusionSchedule diffusion_schedule() const;
};

/// Embedding lookup, pivot trajectory, null optimisation and a self-check
/// reconstruction. Stored tensors are rounded to float32 so that the record
/// survives a save/load round trip bit-exactly.
InversionRecord map_image(const BackendDescriptor& backend, const Tensor& image,
                          const std::string& prompt, const InversionConfig& config,
                          std::string image_id = {});

/// Guided DDIM from a (possibly perturbed) terminal latent with the
/// record's embeddings, decoded to pixels, before boundary processing.
Tensor decode_from_terminal(const InversionRecord& record, const BackendDescriptor& backend,
                            const Tensor& z_T);

/// boundary_process(decode_from_terminal(record, backend, record.z_T())).
Tensor reconstruct(const InversionRecord& record, const BackendDescriptor& backend);

/// Directory layout: record.json, source.f32/json, text.f32/json,
/// pivot_<k>.f32/json, null_<k>.f32/json.
void save_record(const std::filesystem::path& dir, const InversionRecord& record);
InversionRecord load_record(const std::filesystem::path& dir);

}  // namespace latadv
