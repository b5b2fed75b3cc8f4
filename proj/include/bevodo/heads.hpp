#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bevodo/params.hpp"
#include "bevodo/tensor.hpp"

namespace bevodo {

struct HeadNetConfig {
  std::size_t input_channels = 8;
  std::size_t stages = 2;  // downsampling stages
  std::size_t base_channels = 16;
  std::size_t descriptor_channels = 24;  // split evenly over the stages+1 scales
  std::uint64_t init_seed = 1;

  /// Throws std::invalid_argument for inconsistent values.
  void validate() const;
};

struct HeadOutputs {
  Tensor w_pos;    // 1 x H x W, keypoint position logits
  Tensor w_valid;  // 1 x H x W in (0, 1); undefined when validity was not requested
  Tensor d_key;    // C_desc x H x W
};

/// UNet-style encoder with separate decoders for the position and validity
/// heads and a multi-scale descriptor head.
///
/// Encoder level l has base*2^l channels (two 3x3 conv + relu, 2x2 max-pool
/// between levels). Each decoder climbs back with bilinear 2x upsampling,
/// concatenation with the matching encoder level and a 3x3 conv + relu, ending
/// in 8 channels and a 1x1 conv to one channel. Descriptors are a 1x1
/// projection of every encoder level, upsampled to full resolution and
/// concatenated.
class HeadNet {
 public:
  HeadNet(HeadNetConfig cfg, ParamStore& store, const std::string& prefix = "heads");

  /// Throws ShapeError when H or W is not divisible by 2^stages or the channel
  /// count does not match the config.
  HeadOutputs forward(const Tensor& bev, bool need_validity = true) const;

  const HeadNetConfig& config() const { return cfg_; }
  /// Names of the parameters used only by the validity head.
  const std::vector<std::string>& validity_parameter_names() const { return valid_names_; }

 private:
  struct Conv {
    Tensor weight, bias;
    std::size_t padding = 0;
    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, 1, padding); }
  };
  struct Decoder {
    std::vector<Conv> up;  // index l: conv applied at level l
    Conv out;
  };

  Conv make_conv(ParamStore& store, const std::string& name, std::size_t out, std::size_t in,
                 std::size_t k, std::mt19937_64& rng, std::vector<std::string>* names = nullptr);
  Decoder make_decoder(ParamStore& store, const std::string& name, std::mt19937_64& rng,
                       std::vector<std::string>* names);
  Tensor run_decoder(const Decoder& dec, const std::vector<Tensor>& levels) const;

  HeadNetConfig cfg_;
  std::vector<std::pair<Conv, Conv>> encoder_;
  Decoder pos_;
  Decoder valid_;
  std::vector<Conv> desc_;
  std::vector<std::string> valid_names_;
};

}  // namespace bevodo
