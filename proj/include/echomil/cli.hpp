#pragma once

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace echomil {

/// Applies `key.path=value` overrides to a config tree. The value is parsed
/// as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Entry point of the `echomil` executable. Returns the process exit code;
/// failures print a one-line diagnostic to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace echomil
