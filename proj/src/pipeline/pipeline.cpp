#include "toxhmm/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "toxhmm/error.hpp"
#include "toxhmm/hmm_io.hpp"
#include "toxhmm/io.hpp"
#include "toxhmm/parallel.hpp"
#include "toxhmm/rng.hpp"

namespace toxhmm {

using nlohmann::json;

namespace {

std::string cell(double v) { return format_double(v); }

std::string moment_cell(const Moments& m, double value) { return m.n ? format_double(value) : ""; }

std::string state_label(std::size_t i) { return "Z" + std::to_string(i + 1); }
std::string symbol_label(std::size_t j) { return "X" + std::to_string(j + 1); }

void add_ccdf(OutputFiles& out, const std::string& name, const std::vector<double>& values) {
  if (values.empty()) return;
  out[name] = ccdf_table(ccdf(values)).to_csv();
}

// Outputs for one set of conversations, file names suffixed with stem.
OutputFiles analyze_one(std::span<const Conversation> conversations, const AnalysisConfig& config,
                        const std::string& stem) {
  OutputFiles out;
  const auto comments = conversation_comments(conversations);
  if (comments.empty()) return out;
  out["fig2_daily_" + stem + ".csv"] = daily_series_table(daily_series(comments, config.attribute, config.threshold)).to_csv();
  const auto pairs = reply_pairs(conversations, config.attribute);
  if (!pairs.empty()) {
    const auto d = conditional_density(pairs, config.density);
    out["fig3_density_" + stem + ".csv"] = density_table(d).to_csv();
    out["fig3_density_" + stem + ".json"] = to_json(d).dump(2) + "\n";
  }
  const auto m = engagement_metrics(comments, conversations);
  add_ccdf(out, "figS1_ccdf_interevent_" + stem + ".csv", m.interevent_seconds);
  add_ccdf(out, "figS1_ccdf_conversation_length_" + stem + ".csv", m.conversation_lengths);
  add_ccdf(out, "figS1_ccdf_comments_per_author_" + stem + ".csv", m.comments_per_author);
  add_ccdf(out, "figS1_ccdf_comments_per_video_" + stem + ".csv", m.comments_per_video);
  return out;
}

Table rr_summary_table(std::span<const EnsembleResult> results, const std::string& key) {
  Table t;
  t.header = {key, "n_ok", "rr_x2_mean", "rr_x2_sd", "rr_x2_se", "rr_x2_n",
              "rr_x3_mean", "rr_x3_sd", "rr_x3_se", "rr_x3_n", "terminal_clean"};
  for (const auto& r : results) {
    t.rows.push_back({r.group, std::to_string(r.n_ok),
                      moment_cell(r.rr_x2, r.rr_x2.mean), moment_cell(r.rr_x2, r.rr_x2.sd()),
                      moment_cell(r.rr_x2, r.rr_x2.se()), std::to_string(r.rr_x2.n),
                      moment_cell(r.rr_x3, r.rr_x3.mean), moment_cell(r.rr_x3, r.rr_x3.sd()),
                      moment_cell(r.rr_x3, r.rr_x3.se()), std::to_string(r.rr_x3.n),
                      std::to_string(r.terminal_clean)});
  }
  return t;
}

json moments_doc(const Moments& m) {
  json j = {{"n", m.n}, {"variance", m.variance}};
  j["mean"] = m.n ? json(m.mean) : json(nullptr);
  return j;
}

Moments moments_from_doc(const json& j) {
  Moments m;
  m.n = j.at("n").get<std::size_t>();
  m.variance = j.at("variance").get<double>();
  m.mean = j.at("mean").is_null() ? std::nan("") : j.at("mean").get<double>();
  return m;
}

std::string manifest_group(const ChannelManifest& c, GroupBy by) {
  if (by == GroupBy::kChannel) return c.name;
  return c.label.value_or("unlabeled");
}

}  // namespace

std::string file_stem(std::string_view group) {
  std::string out;
  bool changed = group.empty();
  for (char c : group) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
    changed = changed || !ok;
  }
  if (changed) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(fnv1a64(group) >> 32));
    out += "_";
    out += buf;
  }
  return out;
}

std::vector<Comment> conversation_comments(std::span<const Conversation> conversations) {
  std::vector<Comment> out;
  for (const auto& c : conversations) {
    out.push_back(c.top);
    out.insert(out.end(), c.replies.begin(), c.replies.end());
  }
  return out;
}

OutputFiles stats_outputs(const BuildReport& report, const EncodedCorpus& encoded, const StatsConfig& config) {
  OutputFiles out;
  Table summary;
  summary.header = {"metric", "value"};
  auto row = [&](const std::string& k, std::size_t v) { summary.rows.push_back({k, std::to_string(v)}); };
  row("input_comments", report.input_comments);
  row("duplicate_copies", report.duplicates);
  row("top_level", report.top_level);
  row("attached_replies", report.attached_replies);
  row("orphan_replies", report.orphan_ids.size());
  row("replies_outside_window", report.outside_window);
  row("conversations", report.conversations.size());
  row("conversations_with_replies", report.conversations_with_replies());
  row("encoded_sequences", encoded.sequences.size());
  row("skipped_conversations", encoded.skipped.size());
  out["build_summary.csv"] = summary.to_csv();

  const auto comments = conversation_comments(report.conversations);
  out["table1_stats.csv"] = dataset_stats(comments, config).to_csv();
  out["tableS1_by_type.csv"] = dataset_stats_by_type(comments, config).to_csv();
  return out;
}

OutputFiles analysis_outputs(std::span<const Conversation> conversations, const AnalysisConfig& config) {
  std::map<std::string, std::vector<Conversation>> groups;
  for (const auto& c : conversations) groups[group_key(c, config.group_by)].push_back(c);

  std::vector<std::pair<std::string, std::span<const Conversation>>> tasks;
  tasks.emplace_back("all", conversations);
  for (const auto& [name, convs] : groups) tasks.emplace_back("group_" + file_stem(name), convs);

  std::vector<OutputFiles> results(tasks.size());
  parallel_for(tasks.size(), config.workers,
               [&](std::size_t i) { results[i] = analyze_one(tasks[i].second, config, tasks[i].first); });
  OutputFiles out;
  for (auto& r : results) out.merge(r);
  return out;
}

json ensemble_document(const EnsembleSpec& spec, std::span<const EnsembleResult> results) {
  json j;
  j["spec"] = to_json(spec);
  j["results"] = json::array();
  for (const auto& r : results) j["results"].push_back(to_json(r));
  return j;
}

EnsembleDocument parse_ensemble_document(const json& j) {
  EnsembleDocument d;
  try {
    d.spec = j.at("spec");
    for (const auto& r : j.at("results")) d.results.push_back(ensemble_result_from_json(r));
  } catch (const json::exception& e) {
    throw InputError(std::string("ensemble document: ") + e.what());
  }
  return d;
}

OutputFiles ensemble_outputs(std::span<const EnsembleResult> results, GroupBy group_by) {
  OutputFiles out;
  out["ensemble_summary.csv"] = ensemble_summary_table(results).to_csv();

  Table em;
  em.header = {"group", "quantity", "mean", "sd", "se", "n"};
  for (const auto& r : results) {
    if (r.n_ok > 0) {
      const double n = static_cast<double>(r.n_ok);
      for (std::size_t i = 0; i < r.emission_mean.rows(); ++i) {
        for (std::size_t k = 0; k < r.emission_mean.cols(); ++k) {
          const double sd = std::sqrt(r.emission_var(i, k));
          em.rows.push_back({r.group, "emission_" + state_label(i) + "_" + symbol_label(k),
                             cell(r.emission_mean(i, k)), cell(sd), cell(sd / std::sqrt(n)),
                             std::to_string(r.n_ok)});
        }
      }
    }
    for (const auto& [name, m] : {std::pair<std::string, const Moments*>{"rr_x2", &r.rr_x2}, {"rr_x3", &r.rr_x3}}) {
      em.rows.push_back({r.group, name, moment_cell(*m, m->mean), moment_cell(*m, m->sd()), moment_cell(*m, m->se()),
                         std::to_string(m->n)});
    }
  }
  out["fig5_emissions_rr.csv"] = em.to_csv();
  out["fig5_rr_summary.csv"] = rr_summary_table(results, "group").to_csv();
  if (group_by == GroupBy::kLabel) out["fig7_rr_by_label.csv"] = rr_summary_table(results, "label").to_csv();

  Table fits;
  fits.header = {"group", "n_states", "group_size", "realizations", "ok", "failed", "converged",
                 "train_ll_mean", "train_ll_sd", "test_ll_mean", "test_ll_sd", "terminal_clean"};
  for (const auto& r : results) {
    fits.rows.push_back({r.group, std::to_string(r.n_states), std::to_string(r.group_size),
                         std::to_string(r.realizations.size()), std::to_string(r.n_ok), std::to_string(r.n_failed),
                         std::to_string(r.n_converged), moment_cell(r.train_ll, r.train_ll.mean),
                         moment_cell(r.train_ll, r.train_ll.sd()), moment_cell(r.test_ll, r.test_ll.mean),
                         moment_cell(r.test_ll, r.test_ll.sd()), std::to_string(r.terminal_clean)});
  }
  out["tableS2_fits.csv"] = fits.to_csv();
  return out;
}

json selection_document(const SelectionByGroup& rows) {
  json groups = json::array();
  for (const auto& [g, rs] : rows) {
    json items = json::array();
    for (const auto& r : rs) {
      items.push_back({{"n_states", r.n_states}, {"nll", moments_doc(r.nll)}, {"n_failed", r.n_failed},
                       {"delta_prev", moments_doc(r.delta_prev)}});
    }
    groups.push_back({{"group", g}, {"rows", items}});
  }
  return {{"groups", groups}};
}

SelectionByGroup parse_selection_document(const json& j) {
  SelectionByGroup out;
  try {
    for (const auto& g : j.at("groups")) {
      auto& rows = out[g.at("group").get<std::string>()];
      for (const auto& item : g.at("rows")) {
        SelectionRow r;
        r.n_states = item.at("n_states").get<std::size_t>();
        r.nll = moments_from_doc(item.at("nll"));
        r.n_failed = item.at("n_failed").get<std::size_t>();
        r.delta_prev = moments_from_doc(item.at("delta_prev"));
        rows.push_back(r);
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("selection document: ") + e.what());
  }
  return out;
}

OutputFiles selection_outputs(const SelectionByGroup& rows) {
  Table t;
  t.header = {"group"};
  const auto inner_header = selection_table(std::span<const SelectionRow>{}).header;
  t.header.insert(t.header.end(), inner_header.begin(), inner_header.end());
  for (const auto& [g, rs] : rows) {
    for (auto& row : selection_table(rs).rows) {
      row.insert(row.begin(), g);
      t.rows.push_back(std::move(row));
    }
  }
  return {{"tableS2_selection.csv", t.to_csv()}};
}

OutputFiles planted_outputs(const Manifest& manifest, std::span<const EnsembleResult> results, GroupBy group_by) {
  Table t;
  t.header = {"group", "quantity", "planted", "mean", "sd", "se", "abs_error", "rel_error",
              "tolerance", "tolerance_kind", "within"};
  for (const auto& r : results) {
    if (r.n_ok == 0) continue;
    std::vector<const ChannelManifest*> matches;
    for (const auto& c : manifest.channels) {
      if (manifest_group(c, group_by) == r.group) matches.push_back(&c);
    }
    if (matches.empty()) continue;
    bool one_model = true;
    for (const auto* c : matches) one_model = one_model && c->planted == matches.front()->planted;
    const auto& planted = *matches.front();
    if (!one_model || planted.planted.n_states() != r.n_states) continue;

    auto add = [&](const std::string& q, double truth, double mean, double sd, double se, bool relative) {
      const double abs_error = std::abs(mean - truth);
      const double rel_error = truth != 0.0 ? abs_error / std::abs(truth) : std::nan("");
      const double tol = relative ? kPlantedRrTolerance : kPlantedEmissionTolerance;
      const bool within = relative ? rel_error <= tol : abs_error <= tol;
      t.rows.push_back({r.group, q, cell(truth), cell(mean), cell(sd), cell(se), cell(abs_error), cell(rel_error),
                        cell(tol), relative ? "relative" : "absolute", within ? "yes" : "no"});
    };
    const double n = static_cast<double>(r.n_ok);
    for (std::size_t i = 0; i < r.emission_mean.rows(); ++i) {
      for (std::size_t k = 0; k < r.emission_mean.cols(); ++k) {
        const double sd = std::sqrt(r.emission_var(i, k));
        add("emission_" + state_label(i) + "_" + symbol_label(k), planted.planted.emission(i, k),
            r.emission_mean(i, k), sd, sd / std::sqrt(n), false);
      }
    }
    if (planted.relative_risk) {
      const auto& rr = *planted.relative_risk;
      if (rr.x2_defined && r.rr_x2.n) add("rr_x2", rr.rr_x2, r.rr_x2.mean, r.rr_x2.sd(), r.rr_x2.se(), true);
      if (rr.x3_defined && r.rr_x3.n) add("rr_x3", rr.rr_x3, r.rr_x3.mean, r.rr_x3.sd(), r.rr_x3.se(), true);
    }
  }
  return {{"planted_comparison.csv", t.to_csv()}};
}

void write_outputs(const std::filesystem::path& dir, const OutputFiles& files) {
  for (const auto& [name, content] : files) atomic_write(dir / name, content);
}

}  // namespace toxhmm
