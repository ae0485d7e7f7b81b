#pragma once

#include <array>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "easecore/common.hpp"
#include "easecore/nn.hpp"
#include "easecore/rng.hpp"
#include "easecore/tensor.hpp"

namespace easecore {

// Families:
//   wide-resnet-small  preactivation residual net, one stride-2 stage per
//                      group. Desk defaults give ~0.28M params with a small
//                      fc head; set stem_stride=1, blocks_per_group=2,
//                      widths={16,64,128,256}, head_hidden=0 for a full
//                      WRN 16-4.
//   densenet-small     bottleneck dense blocks with 0.5-compression
//                      transitions, ~0.2M params at desk defaults. A
//                      DenseNet-BC 12-100 is layers_per_block=16,
//                      growth={12,12,12}, stem_stride=1, stem_pool=false.
//   plain-cnn          conv-pool-conv-pool-fc with no normalization, used
//                      for gradient checks and the small synthetic studies.
struct ArchitectureSpec {
  std::string family = "wide-resnet-small";
  int num_classes = 10;
  ImageShape input_shape{3, 32, 32};

  // wide-resnet-small
  int stem_stride = 2;
  int blocks_per_group = 1;
  std::array<int, 4> widths{16, 24, 48, 96};
  int head_hidden = 280;  // 0 selects a global-average-pool head

  // densenet-small
  int stem_channels = 24;
  int stem_pool_stride = 2;  // 1 disables the stem pool
  int layers_per_block = 2;
  std::array<int, 3> growth{12, 24, 40};
  int bottleneck_mult = 4;

  // plain-cnn
  std::array<int, 3> plain_widths{16, 32, 64};

  void validate() const {
    if (family != "wide-resnet-small" && family != "densenet-small" && family != "plain-cnn")
      throw ValidationError("architecture.family: unknown family '" + family + "'");
    if (num_classes < 2) throw ValidationError("architecture.num_classes: must be >= 2");
    if (input_shape.c < 1 || input_shape.h < 8 || input_shape.w < 8)
      throw ValidationError("architecture.input_shape: needs c >= 1 and spatial dims >= 8");
    if (family == "wide-resnet-small") {
      if (stem_stride != 1 && stem_stride != 2)
        throw ValidationError("architecture.stem_stride: must be 1 or 2");
      if (blocks_per_group < 1) throw ValidationError("architecture.blocks_per_group: must be >= 1");
      for (int w : widths)
        if (w < 1) throw ValidationError("architecture.widths: entries must be >= 1");
      if (head_hidden < 0) throw ValidationError("architecture.head_hidden: must be >= 0");
    } else if (family == "densenet-small") {
      if (stem_stride != 1 && stem_stride != 2)
        throw ValidationError("architecture.stem_stride: must be 1 or 2");
      if (stem_pool_stride != 1 && stem_pool_stride != 2)
        throw ValidationError("architecture.stem_pool_stride: must be 1 or 2");
      if (layers_per_block < 1)
        throw ValidationError("architecture.layers_per_block: must be >= 1");
      for (int g : growth)
        if (g < 1) throw ValidationError("architecture.growth: entries must be >= 1");
      if (bottleneck_mult < 1)
        throw ValidationError("architecture.bottleneck_mult: must be >= 1");
      if (stem_channels < 1) throw ValidationError("architecture.stem_channels: must be >= 1");
    } else {
      for (int w : plain_widths)
        if (w < 1) throw ValidationError("architecture.plain_widths: entries must be >= 1");
    }
  }

  std::string canonical() const {
    std::ostringstream os;
    os << "family=" << family << ";classes=" << num_classes << ";input=" << input_shape.c << "x"
       << input_shape.h << "x" << input_shape.w;
    if (family == "wide-resnet-small") {
      os << ";stem_stride=" << stem_stride << ";blocks=" << blocks_per_group << ";widths="
         << widths[0] << "," << widths[1] << "," << widths[2] << "," << widths[3]
         << ";head_hidden=" << head_hidden;
    } else if (family == "densenet-small") {
      os << ";stem_channels=" << stem_channels << ";stem_stride=" << stem_stride
         << ";stem_pool_stride=" << stem_pool_stride << ";layers=" << layers_per_block
         << ";growth=" << growth[0] << "," << growth[1] << "," << growth[2]
         << ";bottleneck=" << bottleneck_mult;
    } else {
      os << ";plain_widths=" << plain_widths[0] << "," << plain_widths[1] << ","
         << plain_widths[2];
    }
    return os.str();
  }

  std::string fingerprint() const { return "arch-" + fnv1a_hex(canonical()); }
};

// ---------------------------------------------------------------------------

template <typename S>
class Model {
 public:
  virtual ~Model() = default;
  // Returns logits, classes x batch.
  virtual const MatX<S>& forward(const Tensor4<S>& input, bool train) = 0;
  virtual void backward(const MatX<S>& dlogits) = 0;
  virtual void init(Rng& rng) = 0;

  const std::vector<Param<S>*>& params() { return state_.params; }
  const std::vector<Buffer<S>*>& buffers() { return state_.buffers; }

  void zero_grad() {
    for (Param<S>* p : state_.params) std::fill(p->g.begin(), p->g.end(), S(0));
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Param<S>* p : state_.params) n += p->size();
    return n;
  }

 protected:
  LayerState<S> state_;
  FeatureMap<S> input_fm_;
};

// ---------------------------------------------------------------------------

namespace detail {

// BN -> ReLU -> conv3x3(stride) -> BN -> ReLU -> conv3x3; the shortcut is the
// identity, or a 1x1 strided conv on the preactivation when dims change.
template <typename S>
struct PreactBlock {
  PreactBlock(const std::string& name, int cin, int cout, int stride)
      : bn1(name + ".bn1", cin),
        conv1(name + ".conv1", cin, cout, 3, stride, 1),
        bn2(name + ".bn2", cout),
        conv2(name + ".conv2", cout, cout, 3, 1, 1),
        projecting(stride != 1 || cin != cout) {
    if (projecting)
      proj = std::make_unique<Conv2d<S>>(name + ".proj", cin, cout, 1, stride, 0);
  }

  void init(Rng& rng) {
    bn1.init(rng);
    conv1.init(rng);
    bn2.init(rng);
    conv2.init(rng);
    if (proj) proj->init(rng);
  }
  void collect(LayerState<S>& st) {
    bn1.collect(st);
    conv1.collect(st);
    bn2.collect(st);
    conv2.collect(st);
    if (proj) proj->collect(st);
  }

  const FeatureMap<S>& forward(const FeatureMap<S>& x, bool train) {
    in_ = &x;
    const FeatureMap<S>& a = relu1.forward(bn1.forward(x, train));
    const FeatureMap<S>& h = conv2.forward(relu2.forward(bn2.forward(conv1.forward(a), train)));
    const FeatureMap<S>& skip = projecting ? proj->forward(a) : x;
    out.reset(h.n, h.c, h.h, h.w);
    out.m = h.m + skip.m;
    return out;
  }

  const FeatureMap<S>& backward(const FeatureMap<S>& dy) {
    din.reset(in_->n, in_->c, in_->h, in_->w);
    // Copy out of bn1's buffer before the skip path reuses it.
    din.m =
        bn1.backward(relu1.backward(conv1.backward(bn2.backward(relu2.backward(conv2.backward(dy)))))).m;
    if (projecting) {
      din.m += bn1.backward(relu1.backward(proj->backward(dy))).m;
    } else {
      din.m += dy.m;
    }
    return din;
  }

  BatchNorm2d<S> bn1;
  Conv2d<S> conv1;
  BatchNorm2d<S> bn2;
  Conv2d<S> conv2;
  ReLU<S> relu1, relu2;
  std::unique_ptr<Conv2d<S>> proj;
  bool projecting;
  const FeatureMap<S>* in_ = nullptr;
  FeatureMap<S> out, din;
};

}  // namespace detail

template <typename S>
class WideResnetSmall : public Model<S> {
 public:
  explicit WideResnetSmall(const ArchitectureSpec& spec)
      : spec_(spec), stem_("stem", spec.input_shape.c, spec.widths[0], 3, spec.stem_stride, 1) {
    spec_.validate();
    int c = spec.widths[0];
    int spatial = spec.input_shape.h / spec.stem_stride;
    // With a stride-1 stem the first group keeps full resolution, matching
    // the usual wide-resnet layout; the stride-2 desk stem downsamples in
    // every group instead.
    const int group1_stride = spec.stem_stride == 2 ? 2 : 1;
    for (int g = 0; g < 3; ++g) {
      const int cout = spec.widths[static_cast<std::size_t>(g) + 1];
      for (int b = 0; b < spec.blocks_per_group; ++b) {
        const int stride = b == 0 ? (g == 0 ? group1_stride : 2) : 1;
        std::ostringstream name;
        name << "group" << (g + 1) << ".block" << (b + 1);
        blocks_.push_back(std::make_unique<detail::PreactBlock<S>>(name.str(), c, cout, stride));
        c = cout;
        if (stride == 2) spatial = (spatial + 1) / 2;
      }
    }
    head_bn_ = std::make_unique<BatchNorm2d<S>>("head.bn", c);
    const int flat = c * spatial * spatial;
    if (spec.head_hidden > 0) {
      fc1_ = std::make_unique<Linear<S>>("head.fc1", flat, spec.head_hidden);
      fc2_ = std::make_unique<Linear<S>>("head.fc2", spec.head_hidden, spec.num_classes);
    } else {
      fc2_ = std::make_unique<Linear<S>>("head.fc", c, spec.num_classes);
    }
    stem_.collect(this->state_);
    for (auto& b : blocks_) b->collect(this->state_);
    head_bn_->collect(this->state_);
    if (fc1_) fc1_->collect(this->state_);
    fc2_->collect(this->state_);
  }

  void init(Rng& rng) override {
    stem_.init(rng);
    for (auto& b : blocks_) b->init(rng);
    head_bn_->init(rng);
    if (fc1_) fc1_->init(rng);
    fc2_->init(rng);
  }

  const MatX<S>& forward(const Tensor4<S>& input, bool train) override {
    to_feature_map(input, this->input_fm_);
    const FeatureMap<S>* h = &stem_.forward(this->input_fm_);
    for (auto& b : blocks_) h = &b->forward(*h, train);
    h = &head_relu_.forward(head_bn_->forward(*h, train));
    if (fc1_) {
      const MatX<S>& flat = flatten_.forward(*h);
      return fc2_->forward(head_relu2_.forward(fc1_->forward(flat)));
    }
    return fc2_->forward(gap_.forward(*h));
  }

  void backward(const MatX<S>& dlogits) override {
    const FeatureMap<S>* dh;
    if (fc1_) {
      dh = &flatten_.backward(fc1_->backward(head_relu2_.backward(fc2_->backward(dlogits))));
    } else {
      dh = &gap_.backward(fc2_->backward(dlogits));
    }
    const FeatureMap<S>* d = &head_bn_->backward(head_relu_.backward(*dh));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = &(*it)->backward(*d);
    stem_.backward(*d);
  }

 private:
  ArchitectureSpec spec_;
  Conv2d<S> stem_;
  std::vector<std::unique_ptr<detail::PreactBlock<S>>> blocks_;
  std::unique_ptr<BatchNorm2d<S>> head_bn_;
  ReLU<S> head_relu_;
  Flatten<S> flatten_;
  GlobalAvgPool<S> gap_;
  std::unique_ptr<Linear<S>> fc1_, fc2_;
  DenseReLU<S> head_relu2_;
};

// ---------------------------------------------------------------------------

namespace detail {

// BN -> ReLU -> conv1x1 (bottleneck) -> BN -> ReLU -> conv3x3 (growth).
template <typename S>
struct DenseLayer {
  DenseLayer(const std::string& name, int cin, int bottleneck, int growth)
      : bn1(name + ".bn1", cin),
        conv1(name + ".conv1", cin, bottleneck, 1, 1, 0),
        bn2(name + ".bn2", bottleneck),
        conv2(name + ".conv2", bottleneck, growth, 3, 1, 1) {}

  void init(Rng& rng) {
    bn1.init(rng);
    conv1.init(rng);
    bn2.init(rng);
    conv2.init(rng);
  }
  void collect(LayerState<S>& st) {
    bn1.collect(st);
    conv1.collect(st);
    bn2.collect(st);
    conv2.collect(st);
  }

  const FeatureMap<S>& forward(const FeatureMap<S>& x, bool train) {
    return conv2.forward(relu2.forward(bn2.forward(conv1.forward(relu1.forward(bn1.forward(x, train))), train)));
  }
  const FeatureMap<S>& backward(const FeatureMap<S>& dy) {
    return bn1.backward(relu1.backward(conv1.backward(bn2.backward(relu2.backward(conv2.backward(dy))))));
  }

  BatchNorm2d<S> bn1;
  Conv2d<S> conv1;
  BatchNorm2d<S> bn2;
  Conv2d<S> conv2;
  ReLU<S> relu1, relu2;
};

template <typename S>
struct DenseBlock {
  DenseBlock(const std::string& name, int cin, int num_layers, int bottleneck, int growth)
      : out_channels(cin + num_layers * growth), growth_(growth) {
    int c = cin;
    for (int i = 0; i < num_layers; ++i) {
      std::ostringstream ln;
      ln << name << ".layer" << (i + 1);
      layers.push_back(std::make_unique<DenseLayer<S>>(ln.str(), c, bottleneck, growth));
      c += growth;
    }
  }

  void init(Rng& rng) {
    for (auto& l : layers) l->init(rng);
  }
  void collect(LayerState<S>& st) {
    for (auto& l : layers) l->collect(st);
  }

  const FeatureMap<S>& forward(const FeatureMap<S>& x, bool train) {
    states.resize(layers.size() + 1);
    states[0].reset(x.n, x.c, x.h, x.w);
    states[0].m = x.m;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const FeatureMap<S>& y = layers[i]->forward(states[i], train);
      states[i + 1].reset(x.n, states[i].c + growth_, x.h, x.w);
      states[i + 1].m.topRows(states[i].c) = states[i].m;
      states[i + 1].m.bottomRows(growth_) = y.m;
    }
    return states.back();
  }

  const FeatureMap<S>& backward(const FeatureMap<S>& dy) {
    dstate_.reset(dy.n, dy.c, dy.h, dy.w);
    dstate_.m = dy.m;
    for (std::size_t i = layers.size(); i-- > 0;) {
      dtail_.reset(dy.n, growth_, dy.h, dy.w);
      dtail_.m = dstate_.m.bottomRows(growth_);
      const FeatureMap<S>& dthrough = layers[i]->backward(dtail_);
      dprev_.reset(dy.n, states[i].c, dy.h, dy.w);
      dprev_.m = dstate_.m.topRows(states[i].c) + dthrough.m;
      std::swap(dstate_.m, dprev_.m);
      dstate_.c = states[i].c;
    }
    return dstate_;
  }

  std::vector<std::unique_ptr<DenseLayer<S>>> layers;
  std::vector<FeatureMap<S>> states;
  int out_channels;

 private:
  int growth_;
  FeatureMap<S> dstate_, dprev_, dtail_;
};

// BN -> ReLU -> conv1x1 (0.5 compression) -> avgpool 2x2.
template <typename S>
struct Transition {
  Transition(const std::string& name, int cin)
      : out_channels(cin / 2),
        bn(name + ".bn", cin),
        conv(name + ".conv", cin, cin / 2, 1, 1, 0),
        pool(Pool2x2<S>::Kind::avg) {}

  void init(Rng& rng) {
    bn.init(rng);
    conv.init(rng);
  }
  void collect(LayerState<S>& st) {
    bn.collect(st);
    conv.collect(st);
  }
  const FeatureMap<S>& forward(const FeatureMap<S>& x, bool train) {
    return pool.forward(conv.forward(relu.forward(bn.forward(x, train))));
  }
  const FeatureMap<S>& backward(const FeatureMap<S>& dy) {
    return bn.backward(relu.backward(conv.backward(pool.backward(dy))));
  }

  int out_channels;
  BatchNorm2d<S> bn;
  Conv2d<S> conv;
  ReLU<S> relu;
  Pool2x2<S> pool;
};

}  // namespace detail

template <typename S>
class DensenetSmall : public Model<S> {
 public:
  explicit DensenetSmall(const ArchitectureSpec& spec)
      : spec_(spec),
        stem_("stem", spec.input_shape.c, spec.stem_channels, 3, spec.stem_stride, 1),
        stem_pool_(Pool2x2<S>::Kind::max) {
    spec_.validate();
    int c = spec.stem_channels;
    for (int b = 0; b < 3; ++b) {
      std::ostringstream name;
      name << "block" << (b + 1);
      const int g = spec.growth[static_cast<std::size_t>(b)];
      blocks_.push_back(std::make_unique<detail::DenseBlock<S>>(
          name.str(), c, spec.layers_per_block, spec.bottleneck_mult * g, g));
      c = blocks_.back()->out_channels;
      if (b < 2) {
        std::ostringstream tname;
        tname << "transition" << (b + 1);
        transitions_.push_back(std::make_unique<detail::Transition<S>>(tname.str(), c));
        c = transitions_.back()->out_channels;
      }
    }
    head_bn_ = std::make_unique<BatchNorm2d<S>>("head.bn", c);
    fc_ = std::make_unique<Linear<S>>("head.fc", c, spec.num_classes);
    stem_.collect(this->state_);
    for (int b = 0; b < 3; ++b) {
      blocks_[static_cast<std::size_t>(b)]->collect(this->state_);
      if (b < 2) transitions_[static_cast<std::size_t>(b)]->collect(this->state_);
    }
    head_bn_->collect(this->state_);
    fc_->collect(this->state_);
  }

  void init(Rng& rng) override {
    stem_.init(rng);
    for (auto& b : blocks_) b->init(rng);
    for (auto& t : transitions_) t->init(rng);
    head_bn_->init(rng);
    fc_->init(rng);
  }

  const MatX<S>& forward(const Tensor4<S>& input, bool train) override {
    to_feature_map(input, this->input_fm_);
    const FeatureMap<S>* h = &stem_.forward(this->input_fm_);
    if (spec_.stem_pool_stride == 2) h = &stem_pool_.forward(*h);
    for (int b = 0; b < 3; ++b) {
      h = &blocks_[static_cast<std::size_t>(b)]->forward(*h, train);
      if (b < 2) h = &transitions_[static_cast<std::size_t>(b)]->forward(*h, train);
    }
    h = &head_relu_.forward(head_bn_->forward(*h, train));
    return fc_->forward(gap_.forward(*h));
  }

  void backward(const MatX<S>& dlogits) override {
    const FeatureMap<S>* d = &gap_.backward(fc_->backward(dlogits));
    d = &head_bn_->backward(head_relu_.backward(*d));
    for (int b = 2; b >= 0; --b) {
      if (b < 2) d = &transitions_[static_cast<std::size_t>(b)]->backward(*d);
      d = &blocks_[static_cast<std::size_t>(b)]->backward(*d);
    }
    if (spec_.stem_pool_stride == 2) d = &stem_pool_.backward(*d);
    stem_.backward(*d);
  }

 private:
  ArchitectureSpec spec_;
  Conv2d<S> stem_;
  Pool2x2<S> stem_pool_;
  std::vector<std::unique_ptr<detail::DenseBlock<S>>> blocks_;
  std::vector<std::unique_ptr<detail::Transition<S>>> transitions_;
  std::unique_ptr<BatchNorm2d<S>> head_bn_;
  ReLU<S> head_relu_;
  GlobalAvgPool<S> gap_;
  std::unique_ptr<Linear<S>> fc_;
};

// ---------------------------------------------------------------------------

template <typename S>
class PlainCnn : public Model<S> {
 public:
  explicit PlainCnn(const ArchitectureSpec& spec)
      : spec_(spec),
        conv1_("conv1", spec.input_shape.c, spec.plain_widths[0], 3, 1, 1, true),
        conv2_("conv2", spec.plain_widths[0], spec.plain_widths[1], 3, 1, 1, true),
        pool1_(Pool2x2<S>::Kind::max),
        pool2_(Pool2x2<S>::Kind::max) {
    spec_.validate();
    const int h = spec.input_shape.h / 4, w = spec.input_shape.w / 4;
    const int flat = spec.plain_widths[1] * h * w;
    fc1_ = std::make_unique<Linear<S>>("fc1", flat, spec.plain_widths[2]);
    fc2_ = std::make_unique<Linear<S>>("fc2", spec.plain_widths[2], spec.num_classes);
    conv1_.collect(this->state_);
    conv2_.collect(this->state_);
    fc1_->collect(this->state_);
    fc2_->collect(this->state_);
  }

  void init(Rng& rng) override {
    conv1_.init(rng);
    conv2_.init(rng);
    fc1_->init(rng);
    fc2_->init(rng);
  }

  const MatX<S>& forward(const Tensor4<S>& input, bool) override {
    to_feature_map(input, this->input_fm_);
    const FeatureMap<S>& h1 = pool1_.forward(relu1_.forward(conv1_.forward(this->input_fm_)));
    const FeatureMap<S>& h2 = pool2_.forward(relu2_.forward(conv2_.forward(h1)));
    return fc2_->forward(relu3_.forward(fc1_->forward(flatten_.forward(h2))));
  }

  void backward(const MatX<S>& dlogits) override {
    const FeatureMap<S>& d2 = flatten_.backward(fc1_->backward(relu3_.backward(fc2_->backward(dlogits))));
    const FeatureMap<S>& d1 = conv2_.backward(relu2_.backward(pool2_.backward(d2)));
    conv1_.backward(relu1_.backward(pool1_.backward(d1)));
  }

 private:
  ArchitectureSpec spec_;
  Conv2d<S> conv1_, conv2_;
  ReLU<S> relu1_, relu2_;
  Pool2x2<S> pool1_, pool2_;
  Flatten<S> flatten_;
  std::unique_ptr<Linear<S>> fc1_, fc2_;
  DenseReLU<S> relu3_;
};

template <typename S>
std::unique_ptr<Model<S>> build_model(const ArchitectureSpec& spec) {
  spec.validate();
  if (spec.family == "wide-resnet-small") return std::make_unique<WideResnetSmall<S>>(spec);
  if (spec.family == "densenet-small") return std::make_unique<DensenetSmall<S>>(spec);
  return std::make_unique<PlainCnn<S>>(spec);
}

inline std::size_t param_count(const ArchitectureSpec& spec) {
  return build_model<float>(spec)->param_count();
}

}  // namespace easecore
