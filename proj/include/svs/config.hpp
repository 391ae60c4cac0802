#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "svs/core.hpp"

/// Flat `key = value` config files. Keys are RunConfig field names, `#`
/// starts a comment, blank lines are ignored. Lists (eval_k) are comma
/// separated; booleans accept true/false/1/0; loss_mode is token_mean or
/// sequence_mean.
namespace svs::config {

/// Every accepted key, in RunConfig declaration order.
const std::vector<std::string>& keys();

/// Sets one field. Throws InvalidInput("<key>: …") on unknown keys or bad values.
void set(RunConfig& config, std::string_view key, std::string_view value);

/// Applies a file on top of `config`. Errors read "<source>:<line>: <key>: …".
void apply(RunConfig& config, std::istream& in, const std::string& source);
void apply_file(RunConfig& config, const std::string& path);

/// Current value of a key rendered as it would appear in a file.
std::string get(const RunConfig& config, std::string_view key);
std::string to_text(const RunConfig& config);

}  // namespace svs::config
