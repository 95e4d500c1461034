#pragma once

#include <string>
#include <vector>

#include "lomar/trainer.hpp"

namespace lomar {

/// Parses sectioned `key = value` text:
///
///     seed = 3
///     [sampler]
///     k = 5
///
/// Keys are addressed as `section.key` (top-level keys have no section).
/// Overrides are `section.key=value` strings and win over the file, which
/// wins over the built-in defaults. `sampler.n_views` follows the
/// window-size table unless set explicitly. Throws ConfigError naming the
/// key for unknown keys, malformed values and violated invariants.
TrainConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});

/// Complete config in the same text form; parse_config inverts it exactly.
std::string format_config(const TrainConfig& cfg);

/// Every recognized key, in output order.
std::vector<std::string> config_keys();

/// Throws ConfigError for the first violated invariant.
void validate_config(const TrainConfig& cfg);

}  // namespace lomar
