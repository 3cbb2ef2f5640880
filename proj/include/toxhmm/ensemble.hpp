#pragma once

// Bootstrap fitting protocol: per group, draw sample_size sequences with
// replacement, fit on the first floor(train_fraction * sample_size), score the
// rest, repeat, aggregate.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "toxhmm/analytics.hpp"
#include "toxhmm/corpus.hpp"
#include "toxhmm/hmm.hpp"
#include "toxhmm/io.hpp"

namespace toxhmm {

struct EnsembleSpec {
  GroupBy grouping_key = GroupBy::kChannel;
  std::string attribute = "toxicity";
  double threshold = 0.6;
  std::size_t n_states = 2;
  std::size_t sample_size = 45000;
  double train_fraction = 0.8;
  std::size_t n_realizations = 100;
  std::uint64_t seed = 0;
  FitConfig fit;
  std::size_t workers = 1;

  std::size_t n_train() const;
  std::size_t n_test() const { return sample_size - n_train(); }
  // InputError unless 0 < train_fraction < 1, n_realizations >= 1 and both
  // splits are non-empty.
  void validate() const;
};

// mix_seed(mix_seed(seed, fnv1a64(group)), realization_index)
std::uint64_t realization_seed(std::uint64_t seed, std::string_view group, std::size_t realization_index);

struct Split {
  std::vector<Sequence> train;
  std::vector<Sequence> test;
};

// Draw indices with Rng::below from the realization seed; the first n_train
// draws go to train.
Split sample_realization(std::span<const Sequence> group, const EnsembleSpec& spec, std::size_t realization_index,
                         std::string_view group_id = {});

struct RealizationResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  HmmParameters params;  // canonicalized
  double train_ll = 0.0;  // mean per training sequence
  double test_ll = 0.0;   // mean per held-out sequence
  std::size_t iterations = 0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

// Fits one realization. Numerical failures are caught and recorded.
RealizationResult run_realization(std::span<const Sequence> group, const EnsembleSpec& spec,
                                  std::size_t realization_index, std::string_view group_id = {});

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // unbiased; 0 for a single value
  std::size_t n = 0;

  double sd() const;
  double se() const;
};

// Two-pass moments, summed in the given order.
Moments moments(std::span<const double> values);

struct EnsembleResult {
  std::string group;
  std::size_t n_states = 0;
  std::size_t group_size = 0;
  std::vector<RealizationResult> realizations;  // index order, failures included
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  std::size_t n_converged = 0;
  Matrix emission_mean, emission_var;
  Matrix transition_mean, transition_var;
  std::vector<double> initial_mean, initial_var;
  // over realizations with a defined ratio; needs at least 2 states
  Moments rr_x2, rr_x3;
  Moments train_ll, test_ll;
  std::size_t terminal_clean = 0;  // realizations with a clean terminal signature
};

// Folds successful realizations in index order. Parameters are
// canonicalized again first, so label-switched inputs aggregate correctly.
EnsembleResult aggregate(std::string group, std::span<const RealizationResult> realizations);

std::vector<EnsembleResult> run_ensemble(const EnsembleSpec& spec,
                                         const std::map<std::string, std::vector<Sequence>>& groups);

struct SelectionRow {
  std::size_t n_states = 0;
  Moments nll;  // held-out negative mean log-likelihood
  std::size_t n_failed = 0;
  // NLL(this row) - NLL(previous row), paired by realization over the
  // realizations where both fits succeeded; n = 0 on the first row
  Moments delta_prev;
};

// Same splits for every candidate state count.
std::vector<SelectionRow> select_n_states(std::span<const Sequence> group, const EnsembleSpec& spec,
                                          std::span<const std::size_t> state_range, std::string_view group_id = {});

nlohmann::json to_json(const EnsembleResult& r);
EnsembleResult ensemble_result_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EnsembleSpec& s);
// Workers are not serialized; the result leaves them at 1.
EnsembleSpec ensemble_spec_from_json(const nlohmann::json& j);

// group, cell, mean, variance, n. Cells: emission_Z<i>_X<j>, transition_Z<i>_Z<k>,
// initial_Z<i>, rr_x2, rr_x3, train_ll, test_ll (1-based labels).
Table ensemble_summary_table(std::span<const EnsembleResult> results);
// n_states, mean_nll, variance, sd, se, n, failed, delta_prev_mean, delta_prev_se
Table selection_table(std::span<const SelectionRow> rows);

}  // namespace toxhmm
