#include "toxhmm/hmm_io.hpp"

#include <fstream>

#include "toxhmm/error.hpp"

namespace toxhmm {

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("matrix must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows > 0 ? j.at(0).size() : 0;
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) throw InputError("ragged matrix");
    for (const auto& x : row) {
      if (!x.is_number()) throw InputError("matrix entry is not a number");
      data.push_back(x.get<double>());
    }
  }
  return Matrix(rows, cols, std::move(data));
}

nlohmann::json to_json(const HmmParameters& p) {
  return {
      {"n_states", p.n_states()},
      {"n_symbols", p.n_symbols()},
      {"initial", p.initial},
      {"transition", to_json(p.transition)},
      {"emission", to_json(p.emission)},
      {"seed", p.seed},
  };
}

HmmParameters parameters_from_json(const nlohmann::json& j) {
  HmmParameters p;
  try {
    p.initial = j.at("initial").get<std::vector<double>>();
    p.transition = matrix_from_json(j.at("transition"));
    p.emission = matrix_from_json(j.at("emission"));
    p.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("n_states") && j.at("n_states").get<std::size_t>() != p.n_states()) {
      throw InputError("n_states does not match the initial distribution");
    }
    if (j.contains("n_symbols") && j.at("n_symbols").get<std::size_t>() != p.n_symbols()) {
      throw InputError("n_symbols does not match the emission matrix");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad parameter document: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const FitResult& r) {
  return {
      {"params", to_json(r.params)},
      {"log_likelihood_trace", r.log_likelihood_trace},
      {"converged", r.converged},
      {"iterations", r.iterations},
      {"seed", r.seed},
      {"best_restart", r.best_restart},
      {"n_sequences", r.n_sequences},
  };
}

HmmParameters load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return parameters_from_json(j);
}

}  // namespace toxhmm
