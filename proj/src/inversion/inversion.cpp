#include "latadv/inversion/inversion.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "latadv/boundary.hpp"
#include "latadv/diffusion.hpp"
#include "latadv/error.hpp"
#include "latadv/latent_io.hpp"

namespace latadv {

namespace {

Tensor decode(const BackendDescriptor& backend, const Tensor& latent) {
  return backend.codec ? backend.codec->decode(latent) : latent;
}

Tensor encode(const BackendDescriptor& backend, const Tensor& image) {
  return backend.codec ? backend.codec->encode(image) : image;
}

std::string level_name(const char* prefix, int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d", prefix, k);
  return buf;
}

}  // namespace

std::vector<Tensor> pivot_trajectory(const DiffusionSchedule& schedule,
                                     const NoisePredictor& model, const Tensor& z0,
                                     const ConditionEmbedding& cond) {
  require_same_shape(z0.shape(), model.latent_shape(), "pivot_trajectory");
  if (!z0.all_finite()) throw ParameterError("source latent is not finite");
  std::vector<Tensor> pivots{z0};
  LatentState z{z0, 0};
  while (z.level < schedule.num_steps()) {
    z = ddim_invert_step(schedule, model, z, cond);
    pivots.push_back(z.values);
  }
  return pivots;
}

NullOptimization optimize_null_embeddings(const DiffusionSchedule& schedule,
                                          const NoisePredictor& model,
                                          const std::vector<Tensor>& pivots,
                                          const ConditionEmbedding& cond,
                                          const ConditionEmbedding& null_init,
                                          int inner_iterations, double zeta, double guidance) {
  const int steps = schedule.num_steps();
  if (static_cast<int>(pivots.size()) != steps + 1) {
    throw ParameterError("expected " + std::to_string(steps + 1) + " pivots");
  }
  if (inner_iterations < 0) throw ParameterError("inner_iterations must be non-negative");
  if (inner_iterations > 0 && !model.capabilities().differentiable) {
    throw CapabilityError("null-embedding optimisation needs a differentiable noise predictor");
  }
  require_same_shape(null_init.values.shape(), model.embedding_shape(), "initial null embedding");

  NullOptimization out;
  out.nulls.resize(static_cast<std::size_t>(steps));
  out.running.resize(static_cast<std::size_t>(steps) + 1);
  out.initial_losses.resize(static_cast<std::size_t>(steps));
  out.final_losses.resize(static_cast<std::size_t>(steps));
  out.loss_traces.resize(static_cast<std::size_t>(steps));
  out.running[static_cast<std::size_t>(steps)] = pivots.back();

  ConditionEmbedding null = null_init;
  null.kind = EmbeddingKind::null;
  const double n = static_cast<double>(pivots.front().numel());
  for (int k = steps; k >= 1; --k) {
    const auto idx = static_cast<std::size_t>(k - 1);
    const Tensor& zbar = out.running[static_cast<std::size_t>(k)];
    const Tensor& target = pivots[idx];
    const int t = schedule.level_timestep(k);
    const auto c = ddim_coefficients(schedule, k, k - 1);
    // The conditional branch does not depend on the null embedding.
    const Tensor eps_cond = model.predict(zbar, t, cond);

    auto step_from = [&](const ConditionEmbedding& e) {
      Tensor eps = eps_cond;
      if (guidance != 1.0) {
        eps.vec() = guidance * eps_cond.vec() + (1.0 - guidance) * model.predict(zbar, t, e).vec();
      }
      Tensor z(zbar.shape());
      z.vec() = c.latent * zbar.vec() + c.noise * eps.vec();
      return z;
    };

    auto& trace = out.loss_traces[idx];
    for (int it = 0;; ++it) {
      const Tensor z = step_from(null);
      trace.push_back(mean_squared_error(z, target));
      if (!std::isfinite(trace.back())) {
        throw Error("null-embedding optimisation diverged at level " + std::to_string(k) +
                    "; zeta is too large for this model and schedule");
      }
      if (it == inner_iterations) break;
      if (guidance == 1.0) continue;  // the null branch is inactive
      Tensor residual(z.shape());
      residual.vec() = (2.0 / n) * (z.vec() - target.vec());
      const auto g = model.vjp(zbar, t, null, residual);
      null.values.vec() -= zeta * c.noise * (1.0 - guidance) * g.embedding.vec();
    }
    out.initial_losses[idx] = trace.front();
    out.final_losses[idx] = trace.back();
    out.nulls[idx] = null;
    out.running[idx] = step_from(null);
  }
  return out;
}

DiffusionSchedule InversionRecord::diffusion_schedule() const {
  ScheduleParams p = schedule;
  const int t = p.steps;
  p.steps = 1;
  return compute_schedule(p).with_steps(t);
}

Tensor decode_from_terminal(const InversionRecord& record, const BackendDescriptor& backend,
                            const Tensor& z_T) {
  const auto schedule = record.diffusion_schedule();
  const Tensor z0 = denoise_full(schedule, *backend.predictor, {z_T, record.steps()},
                                 record.text_embedding, record.nulls, record.guidance_w);
  return decode(backend, z0);
}

Tensor reconstruct(const InversionRecord& record, const BackendDescriptor& backend) {
  return boundary_process(decode_from_terminal(record, backend, record.z_T()));
}

InversionRecord map_image(const BackendDescriptor& backend, const Tensor& image,
                          const std::string& prompt, const InversionConfig& config,
                          std::string image_id) {
  if (!backend.predictor) throw CapabilityError("backend has no noise predictor");
  require_same_shape(image.shape(), backend.image_shape, "map_image input");
  for (double v : image.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("image values must lie in [0, 1]");
  }
  if (config.steps < 0) throw ParameterError("T must be non-negative");
  if (config.zeta <= 0.0) throw ParameterError("zeta must be positive");

  InversionRecord r;
  r.image_id = std::move(image_id);
  r.prompt = prompt;
  r.source = image;
  r.schedule = backend.schedule;
  r.schedule.steps = config.steps;
  r.inner_iterations = config.inner_iterations;
  r.zeta = config.zeta;
  r.guidance_w = config.guidance;
  r.text_embedding = backend.prompts->lookup(prompt);

  const auto schedule = r.diffusion_schedule();
  const auto& model = *backend.predictor;
  r.pivots = pivot_trajectory(schedule, model, encode(backend, image), r.text_embedding);
  auto opt = optimize_null_embeddings(schedule, model, r.pivots, r.text_embedding,
                                      backend.prompts->null_embedding(), config.inner_iterations,
                                      config.zeta, config.guidance);
  r.nulls = std::move(opt.nulls);
  r.initial_losses = std::move(opt.initial_losses);
  r.per_step_losses = std::move(opt.final_losses);
  r.loss_traces = std::move(opt.loss_traces);

  // pivots[0] is already the (float32) source; keep it untouched.
  for (std::size_t k = 1; k < r.pivots.size(); ++k) round_to_float32(r.pivots[k].values());
  for (auto& e : r.nulls) round_to_float32(e.values.values());
  r.reconstruction_error = mean_squared_error(reconstruct(r, backend), image);
  return r;
}

void save_record(const std::filesystem::path& dir, const InversionRecord& r) {
  std::filesystem::create_directories(dir);
  write_latent(dir / "source", r.source, 0);
  write_latent(dir / "text", r.text_embedding.values, 0);
  for (std::size_t k = 0; k < r.pivots.size(); ++k) {
    write_latent(dir / level_name("pivot", static_cast<int>(k)), r.pivots[k], static_cast<int>(k));
  }
  for (std::size_t k = 0; k < r.nulls.size(); ++k) {
    write_latent(dir / level_name("null", static_cast<int>(k + 1)), r.nulls[k].values,
                 static_cast<int>(k + 1));
  }
  nlohmann::json meta = {{"image_id", r.image_id},
                         {"prompt", r.prompt},
                         {"schedule", r.schedule},
                         {"T", r.steps()},
                         {"N_i", r.inner_iterations},
                         {"zeta", r.zeta},
                         {"w", r.guidance_w},
                         {"text_kind", to_string(r.text_embedding.kind)},
                         {"initial_losses", r.initial_losses},
                         {"per_step_losses", r.per_step_losses},
                         {"loss_traces", r.loss_traces},
                         {"reconstruction_error", r.reconstruction_error}};
  const auto path = dir / "record.json";
  std::ofstream out(path);
  if (!(out << meta.dump(1) << '\n')) throw IoError("cannot write " + path.string());
}

InversionRecord load_record(const std::filesystem::path& dir) {
  const auto path = dir / "record.json";
  std::ifstream in(path);
  if (!in) throw IoError("no inversion record at " + dir.string());
  try {
    const auto meta = nlohmann::json::parse(in);
    InversionRecord r;
    meta.at("image_id").get_to(r.image_id);
    meta.at("prompt").get_to(r.prompt);
    meta.at("schedule").get_to(r.schedule);
    const int steps = meta.at("T").get<int>();
    r.schedule.steps = steps;
    meta.at("N_i").get_to(r.inner_iterations);
    meta.at("zeta").get_to(r.zeta);
    meta.at("w").get_to(r.guidance_w);
    meta.at("initial_losses").get_to(r.initial_losses);
    meta.at("per_step_losses").get_to(r.per_step_losses);
    meta.at("loss_traces").get_to(r.loss_traces);
    meta.at("reconstruction_error").get_to(r.reconstruction_error);
    r.source = read_latent(dir / "source").values;
    r.text_embedding = {read_latent(dir / "text").values,
                        meta.at("text_kind").get<std::string>() == "null" ? EmbeddingKind::null
                                                                          : EmbeddingKind::text};
    for (int k = 0; k <= steps; ++k) r.pivots.push_back(read_latent(dir / level_name("pivot", k)).values);
    for (int k = 1; k <= steps; ++k) {
      r.nulls.push_back({read_latent(dir / level_name("null", k)).values, EmbeddingKind::null});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace latadv
