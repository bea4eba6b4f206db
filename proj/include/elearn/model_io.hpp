#pragma once

#include <string>

#include "elearn/learners.hpp"
#include "elearn/scenario.hpp"

namespace elearn {

// Versioned JSON model file: method tag, arm count, basis degree, the
// standardizer, coefficients, lambda and solver diagnostics.  Doubles are
// written as shortest round-trip decimals, so save/load is bit-exact.
void save_model(const ITRFit& fit, const std::string& path);

// Throws DataError on unreadable files, unknown formats or shape
// mismatches; the loaded fit predicts but carries no nuisance models.
ITRFit load_model(const std::string& path);

// Scenario files round-trip every field; beta may be omitted, in which
// case it is redrawn from the seed.
void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);

}  // namespace elearn
