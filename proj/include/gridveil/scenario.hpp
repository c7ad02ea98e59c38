#pragma once

#include <string>
#include <vector>

#include "gridveil/netsim.hpp"

namespace gridveil::netsim {

// Strict scenario document parsing: schema-versioned, unknown keys rejected,
// all defaults applied. Diagnostics name the offending field.
Outcome<Scenario, NetsimError> scenario_from_json_text(const std::string& text);

// full document including every default, canonical field order
std::string scenario_to_json_text(const Scenario& s);

// dotted-path overrides ("link.base_ms=20", "seed=7"); values parse as JSON
// literals, falling back to strings. Precedence: flags over file over
// defaults.
Outcome<std::string, NetsimError> apply_overrides(const std::string& json_text,
                                                  const std::vector<std::string>& overrides);

// SHA-256 over the key-sorted canonical document
std::string scenario_config_hash(const Scenario& s);

}  // namespace gridveil::netsim
