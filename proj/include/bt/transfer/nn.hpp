#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace bt::transfer {

/// A trainable tensor and its accumulated gradient.
struct Param {
  std::vector<float> value;
  std::vector<float> grad;

  explicit Param(std::size_t n = 0) : value(n, 0.0f), grad(n, 0.0f) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

/// One differentiable layer operating on a flat [batch x in_size] buffer.
///
/// forward() caches what backward() needs; backward() must follow the
/// forward() whose output gradient it receives.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t in_size() const = 0;
  virtual std::size_t out_size() const = 0;

  virtual std::vector<float> forward(const std::vector<float>& x, std::size_t batch) = 0;
  /// Accumulates parameter gradients; returns d loss / d input unless
  /// `need_input_grad` is false (then an empty vector).
  virtual std::vector<float> backward(const std::vector<float>& grad_out, bool need_input_grad) = 0;

  virtual std::vector<Param*> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual void reset(std::mt19937_64& /*rng*/) {}

  /// Architecture line used by checkpoints, e.g. "conv 3 8 16 16".
  virtual std::string describe() const = 0;
};

/// 3x3 convolution, padding 1, stride 1.
class Conv3x3 final : public Layer {
 public:
  Conv3x3(std::size_t in_channels, std::size_t out_channels, std::size_t height, std::size_t width);

  std::string kind() const override { return "conv3x3"; }
  std::size_t in_size() const override { return in_c_ * h_ * w_; }
  std::size_t out_size() const override { return out_c_ * h_ * w_; }
  std::vector<float> forward(const std::vector<float>& x, std::size_t batch) override;
  std::vector<float> backward(const std::vector<float>& grad_out, bool need_input_grad) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv3x3>(*this); }
  void reset(std::mt19937_64& rng) override;
  std::string describe() const override;

 private:
  std::size_t in_c_, out_c_, h_, w_;
  Param weight_;  // out_c x (in_c * 9)
  Param bias_;
  std::vector<float> cols_;  // batch x (in_c*9) x (h*w)
  std::size_t batch_ = 0;
};

class Relu final : public Layer {
 public:
  explicit Relu(std::size_t size) : size_(size) {}
  std::string kind() const override { return "relu"; }
  std::size_t in_size() const override { return size_; }
  std::size_t out_size() const override { return size_; }
  std::vector<float> forward(const std::vector<float>& x, std::size_t batch) override;
  std::vector<float> backward(const std::vector<float>& grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
  std::string describe() const override;

 private:
  std::size_t size_;
  std::vector<float> mask_;
};

/// 2x2 max pooling, stride 2 (odd trailing rows/cols dropped).
class MaxPool2 final : public Layer {
 public:
  MaxPool2(std::size_t channels, std::size_t height, std::size_t width);
  std::string kind() const override { return "maxpool2"; }
  std::size_t in_size() const override { return c_ * h_ * w_; }
  std::size_t out_size() const override { return c_ * (h_ / 2) * (w_ / 2); }
  std::vector<float> forward(const std::vector<float>& x, std::size_t batch) override;
  std::vector<float> backward(const std::vector<float>& grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }
  std::string describe() const override;

 private:
  std::size_t c_, h_, w_;
  std::vector<std::uint32_t> argmax_;
  std::size_t batch_ = 0;
};

class GlobalAvgPool final : public Layer {
 public:
  GlobalAvgPool(std::size_t channels, std::size_t height, std::size_t width);
  std::string kind() const override { return "gap"; }
  std::size_t in_size() const override { return c_ * hw_; }
  std::size_t out_size() const override { return c_; }
  std::vector<float> forward(const std::vector<float>& x, std::size_t batch) override;
  std::vector<float> backward(const std::vector<float>& grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
  std::string describe() const override;

 private:
  std::size_t c_, hw_, h_, w_;
  std::size_t batch_ = 0;
};

/// y = W x + b. Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
class Linear final : public Layer {
 public:
  Linear(std::size_t in, std::size_t out);
  std::string kind() const override { return "linear"; }
  std::size_t in_size() const override { return in_; }
  std::size_t out_size() const override { return out_; }
  std::vector<float> forward(const std::vector<float>& x, std::size_t batch) override;
  std::vector<float> backward(const std::vector<float>& grad_out, bool need_input_grad) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }
  void reset(std::mt19937_64& rng) override;
  std::string describe() const override;

  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

 private:
  std::size_t in_, out_;
  Param weight_;  // out x in
  Param bias_;
  std::vector<float> input_;
  std::size_t batch_ = 0;
};

/// Ordered stack of layers with deep-copy semantics.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void add(std::unique_ptr<Layer> layer);
  std::size_t in_size() const;
  std::size_t out_size() const;
  bool empty() const { return layers_.empty(); }

  std::vector<float> forward(const std::vector<float>& x, std::size_t batch);
  std::vector<float> backward(const std::vector<float>& grad_out, bool need_input_grad);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::size_t parameter_count() const;
  void reset(std::mt19937_64& rng);
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Softmax cross-entropy against (possibly soft) targets, mean over batch.
/// Returns the loss and writes d loss / d logits into `grad`.
double softmax_cross_entropy(const std::vector<float>& logits, const std::vector<float>& targets,
                             std::size_t batch, std::size_t classes, std::vector<float>& grad);

/// Row-wise softmax.
std::vector<float> softmax(const std::vector<float>& logits, std::size_t batch, std::size_t classes);

}  // namespace bt::transfer
