#pragma once

#include "fable/model.hpp"

#include <filesystem>
#include <iosfwd>

namespace fable {

inline constexpr const char* kModelFormatTag = "FABLE-MODEL-v1";

/// JSON document carrying every FableModel field plus U and the leading
/// spectrum. Doubles are written with round-trip precision, so a loaded
/// model is bit-identical to the saved one.
void write_model(std::ostream& out, const FableModel& model);
FableModel read_model(std::istream& in);

void save_model(const std::filesystem::path& path, const FableModel& model);
FableModel load_model(const std::filesystem::path& path);

}  // namespace fable
