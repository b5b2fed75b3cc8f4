#pragma once

#include <string>
#include <vector>

namespace bevodo {

struct AuditEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t entries = 0;
  std::size_t kinks_skipped = 0;
  bool passed = false;
};

struct AuditReport {
  std::vector<AuditEntry> entries;
  bool all_passed = false;
  double seconds = 0.0;
};

struct AuditConfig {
  unsigned seed = 1;
  std::size_t primitive_seeds = 3;
  double primitive_tolerance = 1e-6;
  double composite_tolerance = 1e-4;
  double composite_tau = 0.01;
  std::size_t composite_size = 16;  // grid cells per side
};

/// Gradient check of every registered primitive plus the composite
/// extract → match → solve → loss pipeline.
AuditReport run_gradcheck_audit(const AuditConfig& cfg = {});

std::string audit_csv(const AuditReport& r);

}  // namespace bevodo
