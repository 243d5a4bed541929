#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bt/transfer/nn.hpp"

namespace bt::transfer {

/// A classifier split into feature extractor and linear head.
struct BackboneHandle {
  std::string architecture;
  Sequential extractor;
  Linear head{1, 1};
  std::string pretrained_source = "none";
  int input_size = 16;  // square RGB input side, pixels

  std::size_t feature_dim() const { return extractor.out_size(); }
  std::size_t n_classes() const { return head.out_size(); }
  /// Throws ValidationError when the head does not fit the extractor.
  void validate() const;

  /// SHA-256 over layer descriptions and parameter bytes.
  std::string extractor_digest() const;
  std::string head_digest() const;

  /// Full forward pass on a [batch x 3*s*s] buffer, returns logits.
  std::vector<float> logits(const std::vector<float>& x, std::size_t batch);
};

/// Replaces the head with a fresh (feature_dim x n_classes) map drawn with
/// uniform fan-in scaling; extractor untouched. Deterministic in seed.
BackboneHandle reinit_classifier(const BackboneHandle& model, std::size_t n_classes, std::uint64_t seed);

/// Binary checkpoint ("BTMODEL1"): architecture, source, input size, layer
/// descriptions and float32 parameters.
void save_checkpoint(const BackboneHandle& model, const std::filesystem::path& path);
BackboneHandle load_checkpoint(const std::filesystem::path& path);

/// Rebuilds a parameter-free layer from its describe() line.
std::unique_ptr<Layer> make_layer(const std::string& description);

/// Architecture-specific fine-tuning defaults (Appendix-A style).
struct ArchitectureDefaults {
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
};

struct BackboneProvider {
  std::string name;
  bool in_repo = true;  // false: contract name, needs an external provider
  ArchitectureDefaults defaults;
  std::function<BackboneHandle(std::size_t n_classes, int input_size, std::uint64_t seed)> build;
};

/// Providers keyed by architecture name. Built-ins: tiny_cnn and mlp
/// (trainable here) and resnet18, resnet50, vit_b16, vit_l16 (contract only;
/// build() throws ConfigError).
class BackboneRegistry {
 public:
  BackboneRegistry();
  static const BackboneRegistry& builtin();

  void add(BackboneProvider provider);
  const BackboneProvider& lookup(const std::string& name) const;
  bool contains(const std::string& name) const { return providers_.count(name) != 0; }
  std::vector<std::string> names() const;

  BackboneHandle build(const std::string& name, std::size_t n_classes, int input_size,
                       std::uint64_t seed) const;

 private:
  std::map<std::string, BackboneProvider> providers_;
};

}  // namespace bt::transfer
