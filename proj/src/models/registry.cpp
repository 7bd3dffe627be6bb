#include "latadv/models/registry.hpp"

#include "latadv/error.hpp"

namespace latadv {

BackendHandle Registry::adapter_register(const std::string& name, BackendDescriptor descriptor) {
  if (name.empty()) throw RegistryError("backend name must not be empty");
  if (backends_.contains(name)) throw RegistryError("backend '" + name + "' already registered");
  if (!descriptor.predictor) throw RegistryError("backend '" + name + "' has no noise predictor");
  if (!descriptor.prompts) throw RegistryError("backend '" + name + "' has no prompt embeddings");
  if (descriptor.prompts->embedding_shape() != descriptor.predictor->embedding_shape()) {
    throw RegistryError("backend '" + name + "': prompt and predictor embedding shapes differ");
  }
  if (!descriptor.codec && descriptor.image_shape != descriptor.predictor->latent_shape()) {
    throw RegistryError("backend '" + name +
                        "': image and latent shapes differ but no codec was given");
  }
  auto handle = std::make_shared<const BackendDescriptor>(std::move(descriptor));
  backends_.emplace(name, handle);
  return handle;
}

ClassifierHandle Registry::register_classifier(const std::string& name,
                                               ClassifierHandle classifier) {
  if (name.empty()) throw RegistryError("classifier name must not be empty");
  if (!classifier) throw RegistryError("classifier '" + name + "' is null");
  if (classifiers_.contains(name)) {
    throw RegistryError("classifier '" + name + "' already registered");
  }
  classifiers_.emplace(name, classifier);
  classifier_order_.push_back(name);
  return classifier;
}

BackendHandle Registry::backend(const std::string& name) const {
  auto it = backends_.find(name);
  if (it == backends_.end()) throw RegistryError("unknown backend '" + name + "'");
  return it->second;
}

ClassifierHandle Registry::classifier(const std::string& name) const {
  auto it = classifiers_.find(name);
  if (it == classifiers_.end()) throw RegistryError("unknown classifier '" + name + "'");
  return it->second;
}

std::vector<std::string> Registry::backend_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : backends_) out.push_back(k);
  return out;
}

void require_differentiable(const Classifier& model, const std::string& role) {
  if (!model.capabilities().differentiable) {
    throw CapabilityError(role + " classifier does not provide gradients");
  }
}

void require_differentiable(const NoisePredictor& model, const std::string& role) {
  if (!model.capabilities().differentiable) {
    throw CapabilityError(role + " noise predictor does not provide gradients");
  }
}

}  // namespace latadv
