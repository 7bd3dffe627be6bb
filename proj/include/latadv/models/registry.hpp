#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "latadv/models/classifier.hpp"
#include "latadv/models/noise_predictor.hpp"
#include "latadv/models/prompt_table.hpp"
#include "latadv/schedule.hpp"

namespace latadv {

/// Optional differentiable map between image space and latent space.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual Tensor encode(const Tensor& image) const = 0;
  virtual Tensor decode(const Tensor& latent) const = 0;
  /// d<grad_image, decode(latent)>/d latent.
  virtual Tensor decode_vjp(const Tensor& latent, const Tensor& grad_image) const = 0;
};

/// Latents are the pixels themselves.
class IdentityCodec final : public LatentCodec {
 public:
  Tensor encode(const Tensor& image) const override { return image; }
  Tensor decode(const Tensor& latent) const override { return latent; }
  Tensor decode_vjp(const Tensor&, const Tensor& grad_image) const override { return grad_image; }
};

/// Everything needed to map and attack images with one text-to-image model.
struct BackendDescriptor {
  ScheduleParams schedule;
  std::shared_ptr<const NoisePredictor> predictor;
  std::shared_ptr<const PromptTable> prompts;
  /// Null means identity.
  std::shared_ptr<const LatentCodec> codec;
  Shape image_shape;
};

using BackendHandle = std::shared_ptr<const BackendDescriptor>;
using ClassifierHandle = std::shared_ptr<const Classifier>;

/// Name -> backend / classifier lookup. Resolution fails loudly with
/// RegistryError; registration rejects duplicates and incomplete descriptors.
class Registry {
 public:
  BackendHandle adapter_register(const std::string& name, BackendDescriptor descriptor);
  ClassifierHandle register_classifier(const std::string& name, ClassifierHandle classifier);

  BackendHandle backend(const std::string& name) const;
  ClassifierHandle classifier(const std::string& name) const;

  std::vector<std::string> backend_names() const;
  /// In registration order.
  const std::vector<std::string>& classifier_names() const { return classifier_order_; }

 private:
  std::map<std::string, BackendHandle> backends_;
  std::map<std::string, ClassifierHandle> classifiers_;
  std::vector<std::string> classifier_order_;
};

/// Throws CapabilityError naming `role` unless the classifier has gradients.
void require_differentiable(const Classifier& model, const std::string& role);
void require_differentiable(const NoisePredictor& model, const std::string& role);

}  // namespace latadv
