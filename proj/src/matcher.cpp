#include "bevodo/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace bevodo {

namespace {

void require_map(const Tensor& t, std::size_t channels, const char* what) {
  if (t.ndim() != 3 || (channels != 0 && t.dim(0) != channels)) {
    throw ShapeError(std::string(what) + ": unexpected shape " + shape_str(t.shape()));
  }
}

void require_coords(const Tensor& t, const char* what) {
  if (t.ndim() != 2 || t.dim(1) != 2) {
    throw ShapeError(std::string(what) + ": coordinates must be N x 2, got " + shape_str(t.shape()));
  }
}

Tensor cell_coordinates(std::size_t height, std::size_t width) {
  std::vector<double> v(height * width * 2);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      v[(r * width + c) * 2] = static_cast<double>(r);
      v[(r * width + c) * 2 + 1] = static_cast<double>(c);
    }
  return Tensor::constant({height * width, 2}, std::move(v));
}

}  // namespace

Tensor extract_keypoints(const Tensor& w_pos, const BlockSpec& blocks) {
  require_map(w_pos, 1, "extract_keypoints");
  const std::size_t br = blocks.block_rows(), bc = blocks.block_cols();
  const std::size_t width = w_pos.dim(2);
  if (w_pos.dim(1) != blocks.blocks_h() * br || width != blocks.blocks_w() * bc) {
    throw ShapeError("extract_keypoints: w_pos " + shape_str(w_pos.shape()) + " does not match the block layout");
  }
  const std::size_t n = blocks.count(), k = br * bc;
  std::vector<std::size_t> idx(n * k);
  std::vector<double> local(k * 2), origin(n * 2);
  for (std::size_t bi = 0; bi < blocks.blocks_h(); ++bi)
    for (std::size_t bj = 0; bj < blocks.blocks_w(); ++bj) {
      const std::size_t b = bi * blocks.blocks_w() + bj;
      origin[b * 2] = static_cast<double>(bi * br);
      origin[b * 2 + 1] = static_cast<double>(bj * bc);
      for (std::size_t r = 0; r < br; ++r)
        for (std::size_t c = 0; c < bc; ++c) idx[b * k + r * bc + c] = (bi * br + r) * width + bj * bc + c;
    }
  for (std::size_t r = 0; r < br; ++r)
    for (std::size_t c = 0; c < bc; ++c) {
      local[(r * bc + c) * 2] = static_cast<double>(r);
      local[(r * bc + c) * 2 + 1] = static_cast<double>(c);
    }
  const Tensor probs = softmax_temperature(gather(w_pos, std::move(idx), {n, k}), 1.0, 1);
  return add(matmul(probs, Tensor::constant({k, 2}, std::move(local))),
             Tensor::constant({n, 2}, std::move(origin)));
}

Tensor sample_at(const Tensor& map, const Tensor& coords) { return bilinear_sample(map, coords); }

std::vector<bool> mask_window(const Tensor& centers, std::size_t height, std::size_t width, MaskSpec mask) {
  require_coords(centers, "mask_window");
  if (mask.radius < 1) throw std::invalid_argument("mask_window: radius must be >= 1");
  const std::size_t n = centers.dim(0);
  const long r = static_cast<long>(mask.radius);
  std::vector<bool> keep(n * height * width, false);
  for (std::size_t i = 0; i < n; ++i) {
    const double cr = centers.values()[i * 2], cc = centers.values()[i * 2 + 1];
    if (!std::isfinite(cr) || !std::isfinite(cc)) throw std::invalid_argument("mask_window: non-finite center");
    const long row = std::clamp(std::lround(cr), 0L, static_cast<long>(height) - 1);
    const long col = std::clamp(std::lround(cc), 0L, static_cast<long>(width) - 1);
    const long r0 = std::max(0L, row - r), r1 = std::min(static_cast<long>(height) - 1, row + r);
    const long c0 = std::max(0L, col - r), c1 = std::min(static_cast<long>(width) - 1, col + r);
    for (long y = r0; y <= r1; ++y)
      for (long x = c0; x <= c1; ++x) {
        keep[i * height * width + static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = true;
      }
  }
  return keep;
}

Tensor similarity(const Tensor& desc1, const Tensor& d_key2, const Tensor& centers, MaskSpec mask, double tau) {
  require_map(d_key2, 0, "similarity");
  if (desc1.ndim() != 2 || desc1.dim(1) != d_key2.dim(0)) {
    throw ShapeError("similarity: descriptors " + shape_str(desc1.shape()) + " vs map " +
                     shape_str(d_key2.shape()));
  }
  const std::size_t h = d_key2.dim(1), w = d_key2.dim(2);
  const Tensor logits = matmul(desc1, reshape(d_key2, {d_key2.dim(0), h * w}));
  const auto keep = mask_window(centers, h, w, mask);
  return softmax_temperature(logits, tau, 1, &keep);
}

Tensor soft_match(const Tensor& M, std::size_t height, std::size_t width) {
  if (M.ndim() != 2 || M.dim(1) != height * width) {
    throw ShapeError("soft_match: M " + shape_str(M.shape()) + " does not cover the grid");
  }
  return matmul(M, cell_coordinates(height, width));
}

Tensor pair_scores(const Tensor& M, const Tensor& p_candidate, const Tensor& p_match, const Tensor& w_valid1,
                   const Tensor& w_valid2, std::size_t height, std::size_t width) {
  require_coords(p_candidate, "pair_scores");
  require_coords(p_match, "pair_scores");
  const std::size_t n = p_match.dim(0);
  if (M.ndim() != 2 || M.dim(0) != n || M.dim(1) != height * width || p_candidate.dim(0) != n) {
    throw ShapeError("pair_scores: inconsistent shapes");
  }
  Tensor score = bilinear_sample_each(reshape(M, {n, height, width}), p_match);
  if (w_valid1.defined()) {
    require_map(w_valid1, 1, "pair_scores");
    score = mul(score, reshape(bilinear_sample(w_valid1, p_candidate), {n}));
  }
  if (w_valid2.defined()) {
    require_map(w_valid2, 1, "pair_scores");
    score = mul(score, reshape(bilinear_sample(w_valid2, p_match), {n}));
  }
  return score;
}

MatchSet match_frames(const HeadOutputs& frame1, const HeadOutputs& frame2, const BlockSpec& blocks,
                      const MatcherConfig& cfg, bool use_validity) {
  require_map(frame2.d_key, 0, "match_frames");
  const std::size_t c = frame2.d_key.dim(0), h = frame2.d_key.dim(1), w = frame2.d_key.dim(2);
  MatchSet out;
  out.p_candidate = extract_keypoints(frame1.w_pos, blocks);
  const Tensor desc1 = l2_normalize(sample_at(frame1.d_key, out.p_candidate), 1);
  const Tensor desc2 = reshape(l2_normalize(reshape(frame2.d_key, {c, h * w}), 0), {c, h, w});
  const Tensor M = similarity(desc1, desc2, out.p_candidate, cfg.mask, cfg.tau);
  out.p_match = soft_match(M, h, w);
  out.pair_score = use_validity ? pair_scores(M, out.p_candidate, out.p_match, frame1.w_valid, frame2.w_valid, h, w)
                                : pair_scores(M, out.p_candidate, out.p_match, Tensor(), Tensor(), h, w);
  return out;
}

void write_match_csv(const std::filesystem::path& path, const MatchSet& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_match_csv: cannot open " + path.string());
  os.precision(17);
  os << "block_id,cand_row,cand_col,match_row,match_col,score\n";
  const auto& pc = m.p_candidate.values();
  const auto& pm = m.p_match.values();
  const auto& s = m.pair_score.values();
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << i << ',' << pc[i * 2] << ',' << pc[i * 2 + 1] << ',' << pm[i * 2] << ',' << pm[i * 2 + 1] << ','
       << s[i] << '\n';
  }
}

}  // namespace bevodo
