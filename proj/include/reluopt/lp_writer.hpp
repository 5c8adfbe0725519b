#pragma once

#include <filesystem>
#include <string>

#include "reluopt/model.hpp"

namespace reluopt::opt {

/// CPLEX-style LP text. Variables keep insertion order, numbers use 17
/// significant digits, and identical models give byte-identical text.
std::string write_lp_text(const OptModel& model);

void write_lp_file(const OptModel& model, const std::filesystem::path& path);

}  // namespace reluopt::opt
