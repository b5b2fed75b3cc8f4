#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "bevodo/evalkit.hpp"

namespace bevodo {

class TumParseError : public std::runtime_error {
 public:
  TumParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// `timestamp tx ty tz qx qy qz qw` per line; '#' starts a comment.
Trajectory parse_tum(const std::string& text);
Trajectory read_tum(const std::string& path);
std::string format_tum(const Trajectory& t);
void write_tum(const std::string& path, const Trajectory& t);

/// Nearest-timestamp association; each gt pose is used at most once and
/// pairs further apart than max_dt seconds are dropped.
std::pair<Trajectory, Trajectory> associate(const Trajectory& est, const Trajectory& gt, double max_dt = 0.02);

}  // namespace bevodo
