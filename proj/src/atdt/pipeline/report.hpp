#pragma once

#include <string>
#include <vector>

namespace atdt::pipeline {

// Collates run directories (as produced by run_experiment) into comparison
// tables (CSV + aligned text) and per-image qualitative strips. Missing or
// unreadable run directories are skipped and reported in the return value;
// they are warnings, not errors.
std::vector<std::string> write_report(const std::vector<std::string>& run_dirs,
                                      const std::string& out_dir);

}  // namespace atdt::pipeline
