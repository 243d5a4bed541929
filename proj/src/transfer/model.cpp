#include "bt/transfer/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "bt/core/errors.hpp"
#include "bt/core/hash.hpp"
#include "bt/core/rng.hpp"

namespace bt::transfer {

namespace {

void append_params(std::vector<std::uint8_t>& buf, const std::string& desc,
                   const std::vector<Param*>& params) {
  buf.insert(buf.end(), desc.begin(), desc.end());
  buf.push_back('\n');
  for (const Param* p : params) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p->value.data());
    buf.insert(buf.end(), bytes, bytes + p->value.size() * sizeof(float));
  }
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), std::streamsize(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void params(const std::vector<Param*>& ps) {
    u32(static_cast<std::uint32_t>(ps.size()));
    for (const Param* p : ps) {
      u32(static_cast<std::uint32_t>(p->value.size()));
      bytes(p->value.data(), p->value.size() * sizeof(float));
    }
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), std::streamsize(n));
    if (!in_) throw ParseError(path_.string(), 0, "truncated checkpoint");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::string str() {
    const auto n = u32();
    if (n > (1u << 20)) throw ParseError(path_.string(), 0, "implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void params(const std::vector<Param*>& ps) {
    if (u32() != ps.size()) throw ParseError(path_.string(), 0, "parameter count mismatch");
    for (Param* p : ps) {
      if (u32() != p->value.size()) throw ParseError(path_.string(), 0, "parameter size mismatch");
      bytes(p->value.data(), p->value.size() * sizeof(float));
    }
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

constexpr char kMagic[8] = {'B', 'T', 'M', 'O', 'D', 'E', 'L', '1'};

}  // namespace

void BackboneHandle::validate() const {
  if (extractor.empty()) throw ValidationError("backbone has no feature extractor");
  if (head.in_size() != extractor.out_size()) {
    throw ValidationError("head input width " + std::to_string(head.in_size()) +
                          " != extractor output width " + std::to_string(extractor.out_size()));
  }
  if (extractor.in_size() != std::size_t(3 * input_size * input_size)) {
    throw ValidationError("extractor input does not match a " + std::to_string(input_size) +
                          "px RGB image");
  }
}

std::string BackboneHandle::extractor_digest() const {
  std::vector<std::uint8_t> buf;
  for (const auto& layer : extractor.layers())
    append_params(buf, layer->describe(), const_cast<Layer&>(*layer).params());
  return sha256_hex(buf);
}

std::string BackboneHandle::head_digest() const {
  std::vector<std::uint8_t> buf;
  append_params(buf, head.describe(), const_cast<Linear&>(head).params());
  return sha256_hex(buf);
}

std::vector<float> BackboneHandle::logits(const std::vector<float>& x, std::size_t batch) {
  return head.forward(extractor.forward(x, batch), batch);
}

BackboneHandle reinit_classifier(const BackboneHandle& model, std::size_t n_classes,
                                 std::uint64_t seed) {
  if (n_classes == 0) throw ValidationError("classifier needs at least one class");
  BackboneHandle out = model;
  out.head = Linear(model.feature_dim(), n_classes);
  std::mt19937_64 rng(splitmix64(seed));
  out.head.reset(rng);
  return out;
}

std::unique_ptr<Layer> make_layer(const std::string& description) {
  std::istringstream in(description);
  std::string kind;
  in >> kind;
  std::vector<std::size_t> a;
  for (std::size_t v; in >> v;) a.push_back(v);
  auto need = [&](std::size_t n) {
    if (a.size() != n) throw ValidationError("bad layer description: " + description);
  };
  if (kind == "conv3x3") {
    need(4);
    return std::make_unique<Conv3x3>(a[0], a[1], a[2], a[3]);
  }
  if (kind == "relu") {
    need(1);
    return std::make_unique<Relu>(a[0]);
  }
  if (kind == "maxpool2") {
    need(3);
    return std::make_unique<MaxPool2>(a[0], a[1], a[2]);
  }
  if (kind == "gap") {
    need(3);
    return std::make_unique<GlobalAvgPool>(a[0], a[1], a[2]);
  }
  if (kind == "linear") {
    need(2);
    return std::make_unique<Linear>(a[0], a[1]);
  }
  throw ValidationError("unknown layer kind: " + kind);
}

void save_checkpoint(const BackboneHandle& model, const std::filesystem::path& path) {
  model.validate();
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.str(model.architecture);
  w.str(model.pretrained_source);
  w.u32(static_cast<std::uint32_t>(model.input_size));
  w.u32(static_cast<std::uint32_t>(model.extractor.layers().size()));
  for (const auto& layer : model.extractor.layers()) {
    w.str(layer->describe());
    w.params(const_cast<Layer&>(*layer).params());
  }
  w.str(model.head.describe());
  w.params(const_cast<Linear&>(model.head).params());
  w.finish();
}

BackboneHandle load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ParseError(path.string(), 0, "not a model checkpoint");
  }
  BackboneHandle m;
  m.architecture = r.str();
  m.pretrained_source = r.str();
  m.input_size = static_cast<int>(r.u32());
  const auto n_layers = r.u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    auto layer = make_layer(r.str());
    r.params(layer->params());
    m.extractor.add(std::move(layer));
  }
  const std::string head_desc = r.str();
  auto head = make_layer(head_desc);
  auto* linear = dynamic_cast<Linear*>(head.get());
  if (!linear) throw ParseError(path.string(), 0, "classifier head must be linear");
  r.params(linear->params());
  m.head = *linear;
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

namespace {

BackboneHandle build_tiny_cnn(std::size_t n_classes, int input_size, std::uint64_t seed) {
  if (input_size < 4 || input_size % 4 != 0) {
    throw ConfigError("tiny_cnn needs an input size divisible by 4");
  }
  const std::size_t s = std::size_t(input_size);
  BackboneHandle m;
  m.architecture = "tiny_cnn";
  m.input_size = input_size;
  m.extractor.add(std::make_unique<Conv3x3>(3, 8, s, s));
  m.extractor.add(std::make_unique<Relu>(8 * s * s));
  m.extractor.add(std::make_unique<MaxPool2>(8, s, s));
  m.extractor.add(std::make_unique<Conv3x3>(8, 16, s / 2, s / 2));
  m.extractor.add(std::make_unique<Relu>(16 * s * s / 4));
  m.extractor.add(std::make_unique<MaxPool2>(16, s / 2, s / 2));
  m.extractor.add(std::make_unique<Conv3x3>(16, 32, s / 4, s / 4));
  m.extractor.add(std::make_unique<Relu>(32 * s * s / 16));
  m.extractor.add(std::make_unique<GlobalAvgPool>(32, s / 4, s / 4));
  std::mt19937_64 rng(splitmix64(seed));
  m.extractor.reset(rng);
  return reinit_classifier(m, n_classes, derive_seed(seed, {1}));
}

BackboneHandle build_mlp(std::size_t n_classes, int input_size, std::uint64_t seed) {
  if (input_size < 1) throw ConfigError("mlp needs a positive input size");
  const std::size_t in = 3 * std::size_t(input_size) * std::size_t(input_size);
  BackboneHandle m;
  m.architecture = "mlp";
  m.input_size = input_size;
  m.extractor.add(std::make_unique<Linear>(in, 64));
  m.extractor.add(std::make_unique<Relu>(64));
  m.extractor.add(std::make_unique<Linear>(64, 64));
  m.extractor.add(std::make_unique<Relu>(64));
  std::mt19937_64 rng(splitmix64(seed));
  m.extractor.reset(rng);
  return reinit_classifier(m, n_classes, derive_seed(seed, {1}));
}

BackboneProvider external(const std::string& name, ArchitectureDefaults defaults) {
  return {name, false, defaults, [name](std::size_t, int, std::uint64_t) -> BackboneHandle {
            throw ConfigError("architecture '" + name +
                              "' requires an external provider; in-repo providers are tiny_cnn and mlp");
          }};
}

}  // namespace

BackboneRegistry::BackboneRegistry() {
  add({"tiny_cnn", true, {}, build_tiny_cnn});
  add({"mlp", true, {}, build_mlp});
  add(external("resnet18", {}));
  add(external("resnet50", {}));
  add(external("vit_b16", {0.0, 128}));
  add(external("vit_l16", {0.0, 128}));
}

const BackboneRegistry& BackboneRegistry::builtin() {
  static const BackboneRegistry registry;
  return registry;
}

void BackboneRegistry::add(BackboneProvider provider) {
  if (provider.name.empty() || !provider.build) throw ValidationError("incomplete backbone provider");
  auto name = provider.name;
  providers_.insert_or_assign(std::move(name), std::move(provider));
}

const BackboneProvider& BackboneRegistry::lookup(const std::string& name) const {
  auto it = providers_.find(name);
  if (it == providers_.end()) throw LookupError("unknown architecture: " + name);
  return it->second;
}

std::vector<std::string> BackboneRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : providers_) out.push_back(k);
  return out;
}

BackboneHandle BackboneRegistry::build(const std::string& name, std::size_t n_classes,
                                       int input_size, std::uint64_t seed) const {
  BackboneHandle m = lookup(name).build(n_classes, input_size, seed);
  m.validate();
  return m;
}

}  // namespace bt::transfer
