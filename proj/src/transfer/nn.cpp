#include "bt/transfer/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bt/core/errors.hpp"

namespace bt::transfer {

namespace {

void check_input(const Layer& layer, const std::vector<float>& x, std::size_t batch) {
  if (x.size() != layer.in_size() * batch) {
    throw ValidationError(layer.kind() + ": input has " + std::to_string(x.size()) +
                          " values, expected " + std::to_string(layer.in_size() * batch));
  }
}

void uniform_fill(std::vector<float>& v, float bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& x : v) x = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv3x3

Conv3x3::Conv3x3(std::size_t in_channels, std::size_t out_channels, std::size_t height,
                 std::size_t width)
    : in_c_(in_channels),
      out_c_(out_channels),
      h_(height),
      w_(width),
      weight_(out_channels * in_channels * 9),
      bias_(out_channels) {
  if (!in_c_ || !out_c_ || !h_ || !w_) throw ValidationError("conv3x3 dimensions must be positive");
}

void Conv3x3::reset(std::mt19937_64& rng) {
  uniform_fill(weight_.value, std::sqrt(6.0f / float(in_c_ * 9)), rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

std::string Conv3x3::describe() const {
  return "conv3x3 " + std::to_string(in_c_) + " " + std::to_string(out_c_) + " " +
         std::to_string(h_) + " " + std::to_string(w_);
}

std::vector<float> Conv3x3::forward(const std::vector<float>& x, std::size_t batch) {
  check_input(*this, x, batch);
  batch_ = batch;
  const std::size_t k_dim = in_c_ * 9;
  const std::size_t p_dim = h_ * w_;
  cols_.assign(batch * k_dim * p_dim, 0.0f);
  std::vector<float> out(batch * out_c_ * p_dim);

  for (std::size_t b = 0; b < batch; ++b) {
    const float* img = x.data() + b * in_size();
    float* cols = cols_.data() + b * k_dim * p_dim;
    for (std::size_t c = 0; c < in_c_; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          float* row = cols + ((c * 3 + ky) * 3 + kx) * p_dim;
          for (std::size_t y = 0; y < h_; ++y) {
            const long sy = long(y) + ky - 1;
            if (sy < 0 || sy >= long(h_)) continue;
            for (std::size_t xx = 0; xx < w_; ++xx) {
              const long sx = long(xx) + kx - 1;
              if (sx < 0 || sx >= long(w_)) continue;
              row[y * w_ + xx] = img[(c * h_ + sy) * w_ + sx];
            }
          }
        }
    float* o = out.data() + b * out_c_ * p_dim;
    for (std::size_t oc = 0; oc < out_c_; ++oc) {
      float* orow = o + oc * p_dim;
      std::fill(orow, orow + p_dim, bias_.value[oc]);
      const float* wrow = weight_.value.data() + oc * k_dim;
      for (std::size_t k = 0; k < k_dim; ++k) {
        const float wv = wrow[k];
        const float* crow = cols + k * p_dim;
        for (std::size_t p = 0; p < p_dim; ++p) orow[p] += wv * crow[p];
      }
    }
  }
  return out;
}

std::vector<float> Conv3x3::backward(const std::vector<float>& grad_out, bool need_input_grad) {
  const std::size_t k_dim = in_c_ * 9;
  const std::size_t p_dim = h_ * w_;
  std::vector<float> grad_in;
  if (need_input_grad) grad_in.assign(batch_ * in_size(), 0.0f);
  std::vector<float> dcols(k_dim * p_dim);

  for (std::size_t b = 0; b < batch_; ++b) {
    const float* g = grad_out.data() + b * out_c_ * p_dim;
    const float* cols = cols_.data() + b * k_dim * p_dim;
    for (std::size_t oc = 0; oc < out_c_; ++oc) {
      const float* grow = g + oc * p_dim;
      float* wg = weight_.grad.data() + oc * k_dim;
      float bsum = 0;
      for (std::size_t p = 0; p < p_dim; ++p) bsum += grow[p];
      bias_.grad[oc] += bsum;
      for (std::size_t k = 0; k < k_dim; ++k) {
        const float* crow = cols + k * p_dim;
        float s = 0;
        for (std::size_t p = 0; p < p_dim; ++p) s += grow[p] * crow[p];
        wg[k] += s;
      }
    }
    if (!need_input_grad) continue;
    std::fill(dcols.begin(), dcols.end(), 0.0f);
    for (std::size_t oc = 0; oc < out_c_; ++oc) {
      const float* grow = g + oc * p_dim;
      const float* wrow = weight_.value.data() + oc * k_dim;
      for (std::size_t k = 0; k < k_dim; ++k) {
        const float wv = wrow[k];
        float* drow = dcols.data() + k * p_dim;
        for (std::size_t p = 0; p < p_dim; ++p) drow[p] += wv * grow[p];
      }
    }
    float* gi = grad_in.data() + b * in_size();
    for (std::size_t c = 0; c < in_c_; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const float* row = dcols.data() + ((c * 3 + ky) * 3 + kx) * p_dim;
          for (std::size_t y = 0; y < h_; ++y) {
            const long sy = long(y) + ky - 1;
            if (sy < 0 || sy >= long(h_)) continue;
            for (std::size_t xx = 0; xx < w_; ++xx) {
              const long sx = long(xx) + kx - 1;
              if (sx < 0 || sx >= long(w_)) continue;
              gi[(c * h_ + sy) * w_ + sx] += row[y * w_ + xx];
            }
          }
        }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Relu

std::vector<float> Relu::forward(const std::vector<float>& x, std::size_t batch) {
  check_input(*this, x, batch);
  std::vector<float> out(x.size());
  mask_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = x[i] > 0.0f ? 1.0f : 0.0f;
    out[i] = x[i] * mask_[i];
  }
  return out;
}

std::vector<float> Relu::backward(const std::vector<float>& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  std::vector<float> g(grad_out.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask_[i];
  return g;
}

std::string Relu::describe() const { return "relu " + std::to_string(size_); }

// ---------------------------------------------------------------------------
// MaxPool2

MaxPool2::MaxPool2(std::size_t channels, std::size_t height, std::size_t width)
    : c_(channels), h_(height), w_(width) {
  if (h_ < 2 || w_ < 2) throw ValidationError("maxpool2 input must be at least 2x2");
}

std::vector<float> MaxPool2::forward(const std::vector<float>& x, std::size_t batch) {
  check_input(*this, x, batch);
  batch_ = batch;
  const std::size_t oh = h_ / 2, ow = w_ / 2;
  std::vector<float> out(batch * out_size());
  argmax_.resize(out.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < c_; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const std::size_t base = b * in_size() + c * h_ * w_;
          std::size_t best = base + (2 * y) * w_ + 2 * xx;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + (2 * y + dy) * w_ + 2 * xx + dx;
              if (x[idx] > x[best]) best = idx;
            }
          const std::size_t o = b * out_size() + (c * oh + y) * ow + xx;
          out[o] = x[best];
          argmax_[o] = static_cast<std::uint32_t>(best);
        }
  return out;
}

std::vector<float> MaxPool2::backward(const std::vector<float>& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  std::vector<float> g(batch_ * in_size(), 0.0f);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g[argmax_[o]] += grad_out[o];
  return g;
}

std::string MaxPool2::describe() const {
  return "maxpool2 " + std::to_string(c_) + " " + std::to_string(h_) + " " + std::to_string(w_);
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

GlobalAvgPool::GlobalAvgPool(std::size_t channels, std::size_t height, std::size_t width)
    : c_(channels), hw_(height * width), h_(height), w_(width) {}

std::vector<float> GlobalAvgPool::forward(const std::vector<float>& x, std::size_t batch) {
  check_input(*this, x, batch);
  batch_ = batch;
  std::vector<float> out(batch * c_, 0.0f);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < c_; ++c) {
      const float* p = x.data() + (b * c_ + c) * hw_;
      float s = 0;
      for (std::size_t i = 0; i < hw_; ++i) s += p[i];
      out[b * c_ + c] = s / float(hw_);
    }
  return out;
}

std::vector<float> GlobalAvgPool::backward(const std::vector<float>& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  std::vector<float> g(batch_ * c_ * hw_);
  for (std::size_t b = 0; b < batch_; ++b)
    for (std::size_t c = 0; c < c_; ++c) {
      const float v = grad_out[b * c_ + c] / float(hw_);
      std::fill_n(g.begin() + long((b * c_ + c) * hw_), hw_, v);
    }
  return g;
}

std::string GlobalAvgPool::describe() const {
  return "gap " + std::to_string(c_) + " " + std::to_string(h_) + " " + std::to_string(w_);
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::size_t in, std::size_t out) : in_(in), out_(out), weight_(in * out), bias_(out) {
  if (!in_ || !out_) throw ValidationError("linear dimensions must be positive");
}

void Linear::reset(std::mt19937_64& rng) {
  const float bound = 1.0f / std::sqrt(float(in_));
  uniform_fill(weight_.value, bound, rng);
  uniform_fill(bias_.value, bound, rng);
}

std::string Linear::describe() const {
  return "linear " + std::to_string(in_) + " " + std::to_string(out_);
}

std::vector<float> Linear::forward(const std::vector<float>& x, std::size_t batch) {
  check_input(*this, x, batch);
  batch_ = batch;
  input_ = x;
  std::vector<float> y(batch * out_);
  for (std::size_t b = 0; b < batch; ++b) {
    const float* xi = x.data() + b * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const float* w = weight_.value.data() + o * in_;
      float s = bias_.value[o];
      for (std::size_t i = 0; i < in_; ++i) s += w[i] * xi[i];
      y[b * out_ + o] = s;
    }
  }
  return y;
}

std::vector<float> Linear::backward(const std::vector<float>& grad_out, bool need_input_grad) {
  std::vector<float> gi;
  if (need_input_grad) gi.assign(batch_ * in_, 0.0f);
  for (std::size_t b = 0; b < batch_; ++b) {
    const float* xi = input_.data() + b * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const float g = grad_out[b * out_ + o];
      bias_.grad[o] += g;
      float* wg = weight_.grad.data() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) wg[i] += g * xi[i];
      if (need_input_grad) {
        const float* w = weight_.value.data() + o * in_;
        float* gb = gi.data() + b * in_;
        for (std::size_t i = 0; i < in_; ++i) gb[i] += g * w[i];
      }
    }
  }
  return gi;
}

// ---------------------------------------------------------------------------
// Sequential

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    layers_ = std::move(copy.layers_);
  }
  return *this;
}

void Sequential::add(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->out_size() != layer->in_size()) {
    throw ValidationError("layer " + layer->describe() + " does not fit after " +
                          layers_.back()->describe());
  }
  layers_.push_back(std::move(layer));
}

std::size_t Sequential::in_size() const { return layers_.empty() ? 0 : layers_.front()->in_size(); }
std::size_t Sequential::out_size() const { return layers_.empty() ? 0 : layers_.back()->out_size(); }

std::vector<float> Sequential::forward(const std::vector<float>& x, std::size_t batch) {
  std::vector<float> h = x;
  for (auto& l : layers_) h = l->forward(h, batch);
  return h;
}

std::vector<float> Sequential::backward(const std::vector<float>& grad_out, bool need_input_grad) {
  std::vector<float> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, i > 0 || need_input_grad);
  }
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

std::vector<const Param*> Sequential::params() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_)
    for (auto* p : const_cast<Layer&>(*l).params()) out.push_back(p);
  return out;
}

std::size_t Sequential::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->value.size();
  return n;
}

void Sequential::reset(std::mt19937_64& rng) {
  for (auto& l : layers_) l->reset(rng);
}

// ---------------------------------------------------------------------------

std::vector<float> softmax(const std::vector<float>& logits, std::size_t batch, std::size_t classes) {
  std::vector<float> p(logits.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const float* z = logits.data() + b * classes;
    float* out = p.data() + b * classes;
    const float m = *std::max_element(z, z + classes);
    double s = 0;
    for (std::size_t k = 0; k < classes; ++k) s += std::exp(double(z[k] - m));
    for (std::size_t k = 0; k < classes; ++k) out[k] = float(std::exp(double(z[k] - m)) / s);
  }
  return p;
}

double softmax_cross_entropy(const std::vector<float>& logits, const std::vector<float>& targets,
                             std::size_t batch, std::size_t classes, std::vector<float>& grad) {
  if (logits.size() != batch * classes || targets.size() != logits.size()) {
    throw ValidationError("cross-entropy shape mismatch");
  }
  grad.assign(logits.size(), 0.0f);
  double loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const float* z = logits.data() + b * classes;
    const float* t = targets.data() + b * classes;
    const float m = *std::max_element(z, z + classes);
    double s = 0;
    for (std::size_t k = 0; k < classes; ++k) s += std::exp(double(z[k] - m));
    const double log_s = std::log(s);
    for (std::size_t k = 0; k < classes; ++k) {
      const double log_p = double(z[k] - m) - log_s;
      loss -= double(t[k]) * log_p;
      grad[b * classes + k] = float((std::exp(log_p) - double(t[k])) / double(batch));
    }
  }
  return loss / double(batch);
}

}  // namespace bt::transfer
