#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "bevodo/geometry.hpp"
#include "bevodo/heads.hpp"
#include "bevodo/tensor.hpp"

namespace bevodo {

/// Keypoint pairs in continuous (row, col) cell coordinates.
struct MatchSet {
  Tensor p_candidate;  // N x 2, map 1
  Tensor p_match;      // N x 2, map 2
  Tensor pair_score;   // N
};

struct MaskSpec {
  std::size_t radius = 8;  // Chebyshev radius in cells
};

struct MatcherConfig {
  double tau = 0.01;
  MaskSpec mask{};
};

/// Soft-argmax of w_pos (1 x H x W) inside every block → N x 2, block n = bi * blocks_w + bj.
Tensor extract_keypoints(const Tensor& w_pos, const BlockSpec& blocks);

/// Bilinear sampling of a C x H x W map at N x 2 coordinates → N x C.
Tensor sample_at(const Tensor& map, const Tensor& coords);

/// Boolean window (N x H*W, row-major) of cells within `mask.radius` of each
/// center after rounding and clamping the center to the grid.
std::vector<bool> mask_window(const Tensor& centers, std::size_t height, std::size_t width, MaskSpec mask);

/// Masked temperature softmax of cosine similarities → N x (H*W).
/// desc1 is N x C and d_key2 is C x H x W, both already unit-normalized.
Tensor similarity(const Tensor& desc1, const Tensor& d_key2, const Tensor& centers, MaskSpec mask,
                  double tau);

/// Expected cell coordinate under each row of M (N x H*W) → N x 2.
Tensor soft_match(const Tensor& M, std::size_t height, std::size_t width);

/// score[n] = M̂[n] * v1[n] * v2[n]. M̂ samples row n of M (as an H x W map) at
/// p_match[n]; v1 and v2 sample the 1 x H x W validity maps at p_candidate and
/// p_match. An undefined validity map counts as all ones.
Tensor pair_scores(const Tensor& M, const Tensor& p_candidate, const Tensor& p_match, const Tensor& w_valid1,
                   const Tensor& w_valid2, std::size_t height, std::size_t width);

/// Full matching of frame 1 against frame 2. With use_validity false the
/// validity maps are ignored (v ≡ 1).
MatchSet match_frames(const HeadOutputs& frame1, const HeadOutputs& frame2, const BlockSpec& blocks,
                      const MatcherConfig& cfg, bool use_validity = true);

/// CSV with header block_id,cand_row,cand_col,match_row,match_col,score.
void write_match_csv(const std::filesystem::path& path, const MatchSet& matches);

}  // namespace bevodo
