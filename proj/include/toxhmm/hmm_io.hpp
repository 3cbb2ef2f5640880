#pragma once

// JSON form of model parameters:
//   {"n_states", "n_symbols", "initial", "transition", "emission", "seed"}
// Matrices are arrays of rows. Doubles are written in shortest round-trip
// form, so parse(dump(p)) == p bit for bit.

#include <filesystem>
#include <json.hpp>
#include <string>

#include "toxhmm/hmm.hpp"

namespace toxhmm {

nlohmann::json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json to_json(const HmmParameters& p);
// Validates the result; throws InputError on schema or stochasticity errors.
HmmParameters parameters_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FitResult& r);

HmmParameters load_parameters(const std::filesystem::path& path);

}  // namespace toxhmm
