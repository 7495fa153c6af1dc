#pragma once

// nlohmann/json conversions shared by the model serializer and the config
// parser. Internal to the library.

#include <string>

#include "json.hpp"
#include "netpod/sindy.hpp"

namespace netpod::detail {

nlohmann::ordered_json library_to_json(const LibrarySpec& spec);
/// Missing keys keep their defaults. Throws Error(config) naming `where`.
LibrarySpec library_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::ordered_json solver_to_json(const SolverOptions& options);
SolverOptions solver_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace netpod::detail
