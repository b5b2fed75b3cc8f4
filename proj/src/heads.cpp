#include "bevodo/heads.hpp"

#include <stdexcept>

namespace bevodo {

namespace {
constexpr std::size_t kFinalDecoderChannels = 8;
}

void HeadNetConfig::validate() const {
  if (stages < 1) throw std::invalid_argument("HeadNetConfig: stages must be >= 1");
  if (input_channels == 0 || base_channels == 0) {
    throw std::invalid_argument("HeadNetConfig: channel counts must be positive");
  }
  if (descriptor_channels == 0 || descriptor_channels % (stages + 1) != 0) {
    throw std::invalid_argument("HeadNetConfig: descriptor_channels must be a positive multiple of stages+1");
  }
}

HeadNet::Conv HeadNet::make_conv(ParamStore& store, const std::string& name, std::size_t out,
                                 std::size_t in, std::size_t k, std::mt19937_64& rng,
                                 std::vector<std::string>* names) {
  Conv c;
  c.weight = store.add_uniform(name + ".weight", {out, in, k, k}, in * k * k, rng);
  c.bias = store.add_uniform(name + ".bias", {out}, in * k * k, rng);
  c.padding = k / 2;
  if (names) {
    names->push_back(name + ".weight");
    names->push_back(name + ".bias");
  }
  return c;
}

HeadNet::Decoder HeadNet::make_decoder(ParamStore& store, const std::string& name,
                                       std::mt19937_64& rng, std::vector<std::string>* names) {
  Decoder d;
  const std::size_t s = cfg_.stages, b = cfg_.base_channels;
  d.up.resize(s);
  std::size_t incoming = b << s;  // deepest encoder level
  for (std::size_t l = s; l-- > 0;) {
    const std::size_t out = l == 0 ? kFinalDecoderChannels : b << (l - 1);
    d.up[l] = make_conv(store, name + ".dec" + std::to_string(l), out, incoming + (b << l), 3, rng, names);
    incoming = out;
  }
  d.out = make_conv(store, name + ".out", 1, kFinalDecoderChannels, 1, rng, names);
  return d;
}

HeadNet::HeadNet(HeadNetConfig cfg, ParamStore& store, const std::string& prefix) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.init_seed);
  const std::size_t s = cfg_.stages, b = cfg_.base_channels;
  std::size_t in = cfg_.input_channels;
  for (std::size_t l = 0; l <= s; ++l) {
    const std::size_t ch = b << l;
    const std::string n = prefix + ".enc" + std::to_string(l);
    Conv a = make_conv(store, n + ".conv0", ch, in, 3, rng);
    Conv c = make_conv(store, n + ".conv1", ch, ch, 3, rng);
    encoder_.emplace_back(a, c);
    in = ch;
  }
  pos_ = make_decoder(store, prefix + ".pos", rng, nullptr);
  valid_ = make_decoder(store, prefix + ".valid", rng, &valid_names_);
  const std::size_t per_scale = cfg_.descriptor_channels / (s + 1);
  for (std::size_t l = 0; l <= s; ++l) {
    desc_.push_back(make_conv(store, prefix + ".desc" + std::to_string(l), per_scale, b << l, 1, rng));
  }
}

Tensor HeadNet::run_decoder(const Decoder& dec, const std::vector<Tensor>& levels) const {
  Tensor y = levels.back();
  for (std::size_t l = cfg_.stages; l-- > 0;) {
    y = upsample(y, 2, UpsampleMode::kBilinear);
    y = relu(dec.up[l](concat({y, levels[l]}, 0)));
  }
  return dec.out(y);
}

HeadOutputs HeadNet::forward(const Tensor& bev, bool need_validity) const {
  if (bev.ndim() != 3 || bev.dim(0) != cfg_.input_channels) {
    throw ShapeError("HeadNet: expected " + std::to_string(cfg_.input_channels) + "xHxW input, got " +
                     shape_str(bev.shape()));
  }
  const std::size_t factor = std::size_t{1} << cfg_.stages;
  if (bev.dim(1) % factor != 0 || bev.dim(2) % factor != 0) {
    throw ShapeError("HeadNet: grid " + shape_str(bev.shape()) + " not divisible by 2^" +
                     std::to_string(cfg_.stages));
  }
  std::vector<Tensor> levels;
  Tensor x = bev;
  for (std::size_t l = 0; l <= cfg_.stages; ++l) {
    if (l > 0) x = max_pool2d(x, 2);
    x = relu(encoder_[l].first(x));
    x = relu(encoder_[l].second(x));
    levels.push_back(x);
  }
  HeadOutputs out;
  out.w_pos = run_decoder(pos_, levels);
  if (need_validity) out.w_valid = sigmoid(run_decoder(valid_, levels));
  std::vector<Tensor> scales;
  for (std::size_t l = 0; l <= cfg_.stages; ++l) {
    Tensor d = desc_[l](levels[l]);
    if (l > 0) d = upsample(d, std::size_t{1} << l, UpsampleMode::kBilinear);
    scales.push_back(d);
  }
  out.d_key = concat(scales, 0);
  return out;
}

}  // namespace bevodo
