#include "toxhmm/ensemble.hpp"

#include <cmath>
#include <limits>

#include "toxhmm/error.hpp"
#include "toxhmm/hmm_io.hpp"
#include "toxhmm/parallel.hpp"
#include "toxhmm/rng.hpp"

namespace toxhmm {

using nlohmann::json;

std::size_t EnsembleSpec::n_train() const {
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(sample_size)));
}

void EnsembleSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InputError("train_fraction must lie in (0, 1)");
  if (sample_size < 1) throw InputError("sample_size must be at least 1");
  if (n_realizations < 1) throw InputError("n_realizations must be at least 1");
  if (n_states < 1) throw InputError("n_states must be at least 1");
  if (n_train() < 1 || n_test() < 1) {
    throw InputError("sample_size " + std::to_string(sample_size) + " with train_fraction " +
                     format_double(train_fraction) + " leaves an empty train or test split");
  }
}

std::uint64_t realization_seed(std::uint64_t seed, std::string_view group, std::size_t realization_index) {
  return mix_seed(mix_seed(seed, fnv1a64(group)), realization_index);
}

Split sample_realization(std::span<const Sequence> group, const EnsembleSpec& spec, std::size_t realization_index,
                         std::string_view group_id) {
  if (group.empty()) throw InputError("cannot sample from an empty group");
  spec.validate();
  Rng rng(realization_seed(spec.seed, group_id, realization_index));
  Split split;
  const std::size_t n_train = spec.n_train();
  split.train.reserve(n_train);
  split.test.reserve(spec.sample_size - n_train);
  for (std::size_t d = 0; d < spec.sample_size; ++d) {
    const Sequence& s = group[rng.below(group.size())];
    (d < n_train ? split.train : split.test).push_back(s);
  }
  return split;
}

RealizationResult run_realization(std::span<const Sequence> group, const EnsembleSpec& spec,
                                  std::size_t realization_index, std::string_view group_id) {
  RealizationResult r;
  r.index = realization_index;
  r.seed = realization_seed(spec.seed, group_id, realization_index);
  const Split split = sample_realization(group, spec, realization_index, group_id);
  try {
    FitConfig cfg = spec.fit;
    cfg.n_symbols = 3;
    const FitResult fit = baum_welch_fit(split.train, spec.n_states, cfg, mix_seed(r.seed, 1));
    r.params = fit.params;
    r.train_ll = fit.mean_log_likelihood();
    r.iterations = fit.iterations;
    r.converged = fit.converged;
    double total = 0.0;
    for (const auto& s : split.test) total += log_likelihood(fit.params, s);
    r.test_ll = total / static_cast<double>(split.test.size());
    if (!std::isfinite(r.test_ll) || !std::isfinite(r.train_ll)) {
      throw NumericalError("non-finite log-likelihood on the " +
                           std::string(std::isfinite(r.train_ll) ? "test" : "training") + " split");
    }
  } catch (const NumericalError& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

double Moments::sd() const { return std::sqrt(variance); }

double Moments::se() const { return n ? std::sqrt(variance / static_cast<double>(n)) : std::nan(""); }

Moments moments(std::span<const double> values) {
  Moments m;
  m.n = values.size();
  if (m.n == 0) {
    m.mean = std::nan("");
    return m;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.variance = ss / static_cast<double>(m.n - 1);
  }
  return m;
}

namespace {

// Element-wise moments of equally shaped arrays, in the given order.
void cellwise(const std::vector<std::span<const double>>& arrays, std::span<double> mean, std::span<double> var) {
  std::vector<double> column(arrays.size());
  for (std::size_t c = 0; c < mean.size(); ++c) {
    for (std::size_t k = 0; k < arrays.size(); ++k) column[k] = arrays[k][c];
    const Moments m = moments(column);
    mean[c] = m.mean;
    var[c] = m.variance;
  }
}

}  // namespace

EnsembleResult aggregate(std::string group, std::span<const RealizationResult> realizations) {
  EnsembleResult out;
  out.group = std::move(group);
  out.realizations.assign(realizations.begin(), realizations.end());
  std::vector<HmmParameters> ok;
  std::vector<double> rr2, rr3, train, test;
  for (auto& r : out.realizations) {
    if (r.failed) {
      ++out.n_failed;
      continue;
    }
    r.params = canonicalize_states(r.params);
    ok.push_back(r.params);
    out.n_converged += r.converged;
    train.push_back(r.train_ll);
    test.push_back(r.test_ll);
    if (r.params.n_states() >= 2) {
      const auto rr = relative_risk(r.params.emission, 0, 1);
      if (rr.x2_defined) rr2.push_back(rr.rr_x2);
      if (rr.x3_defined) rr3.push_back(rr.rr_x3);
      out.terminal_clean += identify_terminal_state(r.params.emission).clean;
    }
  }
  out.n_ok = ok.size();
  out.rr_x2 = moments(rr2);
  out.rr_x3 = moments(rr3);
  out.train_ll = moments(train);
  out.test_ll = moments(test);
  if (ok.empty()) return out;

  const std::size_t n = ok[0].n_states();
  const std::size_t j = ok[0].n_symbols();
  for (const auto& p : ok) {
    if (p.n_states() != n || p.n_symbols() != j) throw InputError("realizations disagree on model shape");
  }
  out.n_states = n;
  out.emission_mean = Matrix(n, j);
  out.emission_var = Matrix(n, j);
  out.transition_mean = Matrix(n, n);
  out.transition_var = Matrix(n, n);
  out.initial_mean.assign(n, 0.0);
  out.initial_var.assign(n, 0.0);
  std::vector<std::span<const double>> em, tr, in;
  for (const auto& p : ok) {
    em.push_back(p.emission.data());
    tr.push_back(p.transition.data());
    in.push_back(p.initial);
  }
  cellwise(em, out.emission_mean.data(), out.emission_var.data());
  cellwise(tr, out.transition_mean.data(), out.transition_var.data());
  cellwise(in, out.initial_mean, out.initial_var);
  return out;
}

namespace {

struct Task {
  std::size_t group;
  std::size_t realization;
};

std::vector<std::vector<RealizationResult>> run_tasks(
    const EnsembleSpec& spec, const std::vector<std::pair<std::string, std::span<const Sequence>>>& groups) {
  std::vector<Task> tasks;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t r = 0; r < spec.n_realizations; ++r) tasks.push_back({g, r});
  }
  std::vector<std::vector<RealizationResult>> results(groups.size(),
                                                      std::vector<RealizationResult>(spec.n_realizations));
  parallel_for(tasks.size(), spec.workers, [&](std::size_t t) {
    const Task task = tasks[t];
    const auto& [name, seqs] = groups[task.group];
    results[task.group][task.realization] = run_realization(seqs, spec, task.realization, name);
  });
  return results;
}

}  // namespace

std::vector<EnsembleResult> run_ensemble(const EnsembleSpec& spec,
                                         const std::map<std::string, std::vector<Sequence>>& groups) {
  spec.validate();
  std::vector<std::pair<std::string, std::span<const Sequence>>> list;
  for (const auto& [name, seqs] : groups) {
    if (seqs.empty()) throw InputError("group '" + name + "' is empty");
    list.emplace_back(name, seqs);
  }
  auto results = run_tasks(spec, list);
  std::vector<EnsembleResult> out;
  for (std::size_t g = 0; g < list.size(); ++g) {
    out.push_back(aggregate(list[g].first, results[g]));
    out.back().n_states = spec.n_states;
    out.back().group_size = list[g].second.size();
  }
  return out;
}

std::vector<SelectionRow> select_n_states(std::span<const Sequence> group, const EnsembleSpec& spec,
                                          std::span<const std::size_t> state_range, std::string_view group_id) {
  if (state_range.empty()) throw InputError("state range is empty");
  if (group.empty()) throw InputError("cannot select on an empty group");
  spec.validate();
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < state_range.size(); ++c) {
    if (state_range[c] < 1) throw InputError("state counts must be at least 1");
    for (std::size_t r = 0; r < spec.n_realizations; ++r) tasks.push_back({c, r});
  }
  std::vector<std::vector<RealizationResult>> results(state_range.size(),
                                                      std::vector<RealizationResult>(spec.n_realizations));
  parallel_for(tasks.size(), spec.workers, [&](std::size_t t) {
    EnsembleSpec s = spec;
    s.n_states = state_range[tasks[t].group];
    results[tasks[t].group][tasks[t].realization] = run_realization(group, s, tasks[t].realization, group_id);
  });
  std::vector<SelectionRow> rows;
  for (std::size_t c = 0; c < state_range.size(); ++c) {
    SelectionRow row;
    row.n_states = state_range[c];
    std::vector<double> nll;
    for (const auto& r : results[c]) {
      if (r.failed) {
        ++row.n_failed;
      } else {
        nll.push_back(-r.test_ll);
      }
    }
    row.nll = moments(nll);
    if (c > 0) {
      std::vector<double> delta;
      for (std::size_t r = 0; r < spec.n_realizations; ++r) {
        const auto& a = results[c][r];
        const auto& b = results[c - 1][r];
        if (!a.failed && !b.failed) delta.push_back(b.test_ll - a.test_ll);
      }
      row.delta_prev = moments(delta);
    }
    rows.push_back(row);
  }
  return rows;
}

namespace {

json moments_json(const Moments& m) {
  json j = {{"n", m.n}, {"variance", m.variance}};
  j["mean"] = m.n ? json(m.mean) : json(nullptr);
  j["sd"] = m.n ? json(m.sd()) : json(nullptr);
  j["se"] = m.n ? json(m.se()) : json(nullptr);
  return j;
}

}  // namespace

json to_json(const EnsembleResult& r) {
  json reals = json::array();
  for (const auto& x : r.realizations) {
    json item = {{"index", x.index},   {"seed", x.seed},           {"failed", x.failed},
                 {"iterations", x.iterations}, {"converged", x.converged}};
    if (x.failed) {
      item["error"] = x.error;
    } else {
      item["params"] = to_json(x.params);
      item["train_ll"] = x.train_ll;
      item["test_ll"] = x.test_ll;
    }
    reals.push_back(std::move(item));
  }
  json j = {{"group", r.group},
            {"n_states", r.n_states},
            {"group_size", r.group_size},
            {"n_ok", r.n_ok},
            {"n_failed", r.n_failed},
            {"n_converged", r.n_converged},
            {"terminal_clean", r.terminal_clean},
            {"rr_x2", moments_json(r.rr_x2)},
            {"rr_x3", moments_json(r.rr_x3)},
            {"train_ll", moments_json(r.train_ll)},
            {"test_ll", moments_json(r.test_ll)},
            {"realizations", reals}};
  if (r.n_ok) {
    j["emission_mean"] = to_json(r.emission_mean);
    j["emission_var"] = to_json(r.emission_var);
    j["transition_mean"] = to_json(r.transition_mean);
    j["transition_var"] = to_json(r.transition_var);
    j["initial_mean"] = r.initial_mean;
    j["initial_var"] = r.initial_var;
  }
  return j;
}

EnsembleResult ensemble_result_from_json(const json& j) {
  try {
    std::vector<RealizationResult> reals;
    for (const auto& item : j.at("realizations")) {
      RealizationResult x;
      x.index = item.at("index").get<std::size_t>();
      x.seed = item.at("seed").get<std::uint64_t>();
      x.failed = item.at("failed").get<bool>();
      x.iterations = item.at("iterations").get<std::size_t>();
      x.converged = item.at("converged").get<bool>();
      if (x.failed) {
        x.error = item.value("error", "");
      } else {
        x.params = parameters_from_json(item.at("params"));
        x.train_ll = item.at("train_ll").get<double>();
        x.test_ll = item.at("test_ll").get<double>();
      }
      reals.push_back(std::move(x));
    }
    EnsembleResult r = aggregate(j.at("group").get<std::string>(), reals);
    r.n_states = j.at("n_states").get<std::size_t>();
    r.group_size = j.at("group_size").get<std::size_t>();
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("ensemble result: ") + e.what());
  }
}

json to_json(const EnsembleSpec& s) {
  return {{"grouping_key", std::string(group_by_name(s.grouping_key))},
          {"attribute", s.attribute},
          {"threshold", s.threshold},
          {"n_states", s.n_states},
          {"sample_size", s.sample_size},
          {"train_fraction", s.train_fraction},
          {"n_realizations", s.n_realizations},
          {"seed", s.seed},
          {"max_iterations", s.fit.max_iterations},
          {"tolerance", s.fit.tolerance},
          {"n_restarts", s.fit.n_restarts},
          {"acceleration", s.fit.acceleration == Acceleration::kSquarem ? "squarem" : "none"}};
}

EnsembleSpec ensemble_spec_from_json(const json& j) {
  EnsembleSpec s;
  try {
    s.grouping_key = parse_group_by(j.at("grouping_key").get<std::string>());
    s.attribute = j.at("attribute").get<std::string>();
    s.threshold = j.at("threshold").get<double>();
    s.n_states = j.at("n_states").get<std::size_t>();
    s.sample_size = j.at("sample_size").get<std::size_t>();
    s.train_fraction = j.at("train_fraction").get<double>();
    s.n_realizations = j.at("n_realizations").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.fit.max_iterations = j.at("max_iterations").get<std::size_t>();
    s.fit.tolerance = j.at("tolerance").get<double>();
    s.fit.n_restarts = j.at("n_restarts").get<std::size_t>();
    const auto acc = j.at("acceleration").get<std::string>();
    if (acc == "squarem") {
      s.fit.acceleration = Acceleration::kSquarem;
    } else if (acc == "none") {
      s.fit.acceleration = Acceleration::kNone;
    } else {
      throw InputError("unknown acceleration: " + acc);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("ensemble spec: ") + e.what());
  }
  s.validate();
  return s;
}

Table ensemble_summary_table(std::span<const EnsembleResult> results) {
  Table t;
  t.header = {"group", "cell", "mean", "variance", "n"};
  for (const auto& r : results) {
    auto add = [&](const std::string& cell, double mean, double var, std::size_t n) {
      t.rows.push_back({r.group, cell, n ? format_double(mean) : "", n ? format_double(var) : "", std::to_string(n)});
    };
    if (r.n_ok) {
      const std::size_t n = r.emission_mean.rows();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t x = 0; x < r.emission_mean.cols(); ++x) {
          add("emission_Z" + std::to_string(i + 1) + "_X" + std::to_string(x + 1), r.emission_mean(i, x),
              r.emission_var(i, x), r.n_ok);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          add("transition_Z" + std::to_string(i + 1) + "_Z" + std::to_string(k + 1), r.transition_mean(i, k),
              r.transition_var(i, k), r.n_ok);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        add("initial_Z" + std::to_string(i + 1), r.initial_mean[i], r.initial_var[i], r.n_ok);
      }
    }
    add("rr_x2", r.rr_x2.mean, r.rr_x2.variance, r.rr_x2.n);
    add("rr_x3", r.rr_x3.mean, r.rr_x3.variance, r.rr_x3.n);
    add("train_ll", r.train_ll.mean, r.train_ll.variance, r.train_ll.n);
    add("test_ll", r.test_ll.mean, r.test_ll.variance, r.test_ll.n);
  }
  return t;
}

Table selection_table(std::span<const SelectionRow> rows) {
  Table t;
  t.header = {"n_states", "mean_nll", "variance", "sd", "se", "n", "failed", "delta_prev_mean", "delta_prev_se"};
  for (const auto& r : rows) {
    const bool any = r.nll.n > 0;
    t.rows.push_back({std::to_string(r.n_states), any ? format_double(r.nll.mean) : "",
                      any ? format_double(r.nll.variance) : "", any ? format_double(r.nll.sd()) : "",
                      any ? format_double(r.nll.se()) : "", std::to_string(r.nll.n), std::to_string(r.n_failed),
                      r.delta_prev.n ? format_double(r.delta_prev.mean) : "",
                      r.delta_prev.n ? format_double(r.delta_prev.se()) : ""});
  }
  return t;
}

}  // namespace toxhmm
