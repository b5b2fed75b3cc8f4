#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bevodo/evalkit.hpp"

namespace bevodo {

/// x-y overlay of named trajectories as an SVG document.
std::string trajectory_svg(const std::vector<std::pair<std::string, Trajectory>>& tracks);

struct MatchRow {
  std::size_t block = 0;
  double cand_row = 0, cand_col = 0, match_row = 0, match_col = 0, score = 0;
};

/// Reads the matcher's CSV dump.
std::vector<MatchRow> read_match_csv(const std::filesystem::path& path);

/// Two grid panels side by side with a line per match. Only matches whose
/// score is at least `threshold` times the best score are drawn.
std::string match_svg(const std::vector<MatchRow>& rows, std::size_t grid_h, std::size_t grid_w,
                      double threshold = 0.1);

}  // namespace bevodo
