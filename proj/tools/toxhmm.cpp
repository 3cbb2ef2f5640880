// toxhmm: command line pipeline. Every subcommand reads its inputs, writes its
// outputs with temp file + rename, and logs one JSON object per line on stderr.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "toxhmm/analytics.hpp"
#include "toxhmm/corpus.hpp"
#include "toxhmm/ensemble.hpp"
#include "toxhmm/error.hpp"
#include "toxhmm/hmm.hpp"
#include "toxhmm/hmm_io.hpp"
#include "toxhmm/io.hpp"
#include "toxhmm/parallel.hpp"
#include "toxhmm/pipeline.hpp"
#include "toxhmm/rng.hpp"
#include "toxhmm/scoring.hpp"
#include "toxhmm/syngen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace toxhmm;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;
constexpr int kExitPartial = 3;

// Raised when outputs were written but some requested work did not complete.
class PartialFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

class Logger {
 public:
  void set_level(const std::string& name) {
    static const std::map<std::string, Level> levels = {
        {"debug", Level::kDebug}, {"info", Level::kInfo}, {"warn", Level::kWarn}, {"error", Level::kError}};
    level_ = levels.at(name);
  }

  void log(Level level, const std::string& event, json fields = json::object()) const {
    if (level < level_) return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    json line = {{"level", names[static_cast<int>(level)]}, {"event", event}, {"elapsed_s", elapsed()}};
    for (auto& [k, v] : fields.items()) line[k] = v;
    std::cerr << line.dump() << "\n";
  }
  void info(const std::string& event, json fields = json::object()) const { log(Level::kInfo, event, std::move(fields)); }
  void warn(const std::string& event, json fields = json::object()) const { log(Level::kWarn, event, std::move(fields)); }

 private:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  Level level_ = Level::kInfo;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Options {
  // paths
  std::string corpus;
  std::string labels;
  std::string encoded;
  std::string cache;
  std::string lexicon;
  std::string planted;
  std::string ensemble;
  std::string selection;
  std::string manifest;
  std::string out;
  // encoding and grouping
  std::string attribute = "toxicity";
  double threshold = 0.6;
  bool exclude_top = false;
  std::string group_by = "channel";
  bool strict = false;
  // fitting
  std::uint64_t seed = 0;
  std::size_t n_states = 2;
  std::size_t realizations = 100;
  std::size_t sample_size = 45000;
  double train_fraction = 0.8;
  std::size_t max_iterations = 500;
  double tolerance = 1e-6;
  std::size_t restarts = 5;
  std::string acceleration = "squarem";
  std::vector<std::size_t> states{1, 2, 3, 4, 5};
  // scoring
  std::string backend = "stub";
  std::string endpoint;
  std::vector<std::string> score_attributes{"toxicity", "insult"};
  double rate_limit = 10.0;
  int retries = 5;
  bool cache_bust = false;
  // runtime
  std::size_t workers = default_workers();
  std::string log_level = "info";
};

struct Context {
  Options opt;
  Logger log;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threshold_opt = nullptr;
};

fs::path require_path(const std::string& value, const std::string& flag) {
  if (value.empty()) throw InputError("missing required input: pass " + flag + " (or set it in the config file)");
  const fs::path p(value);
  if (!fs::exists(p)) throw InputError(flag + ": no such file: " + value);
  return p;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw InputError("missing output location: pass --out");
  return fs::path(o.out);
}

EncoderConfig encoder_config(const Options& o) {
  EncoderConfig c{o.attribute, o.threshold, !o.exclude_top};
  c.validate();
  return c;
}

FitConfig fit_config(const Options& o) {
  FitConfig f;
  f.max_iterations = o.max_iterations;
  f.tolerance = o.tolerance;
  f.n_restarts = o.restarts;
  f.acceleration = o.acceleration == "none" ? Acceleration::kNone : Acceleration::kSquarem;
  return f;
}

EnsembleSpec ensemble_spec(const Options& o) {
  EnsembleSpec s;
  s.grouping_key = parse_group_by(o.group_by);
  s.attribute = o.attribute;
  s.threshold = o.threshold;
  s.n_states = o.n_states;
  s.sample_size = o.sample_size;
  s.train_fraction = o.train_fraction;
  s.n_realizations = o.realizations;
  s.seed = o.seed;
  s.fit = fit_config(o);
  s.workers = o.workers;
  s.validate();
  return s;
}

std::vector<Comment> load_input_comments(const Context& ctx) {
  const auto path = require_path(ctx.opt.corpus, "--corpus");
  auto loaded = load_comments(path, ctx.opt.strict);
  for (const auto& e : loaded.errors) {
    ctx.log.warn("corpus.malformed_line", {{"line", e.line}, {"message", e.message}});
  }
  if (!ctx.opt.labels.empty()) {
    apply_video_labels(loaded.comments, load_video_labels(require_path(ctx.opt.labels, "--labels")));
  }
  ctx.log.info("corpus.loaded", {{"path", path.string()},
                                 {"comments", loaded.comments.size()},
                                 {"malformed_lines", loaded.errors.size()}});
  return std::move(loaded.comments);
}

BuildReport build_input(const Context& ctx) {
  auto report = build_conversations(load_input_comments(ctx));
  ctx.log.info("corpus.built", {{"conversations", report.conversations.size()},
                                {"top_level", report.top_level},
                                {"attached_replies", report.attached_replies},
                                {"orphans", report.orphan_ids.size()},
                                {"outside_window", report.outside_window},
                                {"duplicates", report.duplicates}});
  return report;
}

EncodedCorpus encode_report(const Context& ctx, const BuildReport& report, GroupBy by, const EncoderConfig& enc) {
  auto encoded = encode_all(report.conversations, enc, by);
  for (const auto& s : encoded.skipped) {
    ctx.log.warn("encode.skipped", {{"conversation", s.line}, {"message", s.message}});
  }
  ctx.log.info("corpus.encoded", {{"sequences", encoded.sequences.size()},
                                  {"skipped", encoded.skipped.size()},
                                  {"attribute", enc.attribute},
                                  {"threshold", enc.threshold}});
  return encoded;
}

// Grouped sequences from --encoded when given, otherwise from --corpus.
std::map<std::string, std::vector<Sequence>> input_groups(const Context& ctx) {
  EncodedCorpus encoded;
  if (!ctx.opt.encoded.empty()) {
    encoded = encoded_from_jsonl(read_file(require_path(ctx.opt.encoded, "--encoded")));
    if (ctx.opt.group_by != "channel") {
      ctx.log.warn("encode.group_by_ignored", {{"reason", "groups are taken from the encoded file"}});
    }
  } else {
    encoded = encode_report(ctx, build_input(ctx), parse_group_by(ctx.opt.group_by), encoder_config(ctx.opt));
  }
  auto groups = split_by_group(encoded);
  if (groups.empty()) throw InputError("no encoded sequences to fit");
  return groups;
}

std::string digest(const json& j) {
  std::ostringstream s;
  s << std::hex << fnv1a64(j.dump());
  return s.str();
}

// ---------------------------------------------------------------- subcommands

int cmd_score(Context& ctx) {
  const auto& o = ctx.opt;
  auto comments = load_input_comments(ctx);
  const auto out = require_out(o);
  const fs::path cache_path = o.cache.empty() ? fs::path(out.string() + ".cache.jsonl") : fs::path(o.cache);

  std::unique_ptr<ScoringBackend> backend;
  BatchOptions batch;
  batch.retries = o.retries;
  batch.cache_bust = o.cache_bust;
  batch.workers = o.workers;
  if (o.backend == "stub") {
    backend = std::make_unique<StubBackend>(o.lexicon.empty() ? default_lexicon()
                                                              : load_lexicon(require_path(o.lexicon, "--lexicon")));
    batch.rate_limit = 0.0;  // local, nothing to protect
  } else {
    const char* key = std::getenv("SCORING_API_KEY");
    if (key == nullptr || *key == '\0') throw InputError("remote backend needs SCORING_API_KEY in the environment");
    if (o.endpoint.empty()) throw InputError("remote backend needs --endpoint");
    RemoteConfig rc;
    rc.endpoint = o.endpoint;
    rc.api_key = key;
    backend = std::make_unique<RemoteBackend>(rc);
    batch.rate_limit = o.rate_limit;
  }

  ScoreCache cache(cache_path);
  if (cache.malformed_lines() > 0) ctx.log.warn("cache.malformed_lines", {{"count", cache.malformed_lines()}});
  const auto requests = requests_for(comments, o.score_attributes);
  const auto result = score_batch(requests, *backend, cache, batch);
  const std::size_t applied = apply_scores(comments, result.entries);
  atomic_write(out, comments_to_jsonl(comments));

  const double pct = result.lookups ? 100.0 * static_cast<double>(result.cache_hits) / static_cast<double>(result.lookups)
                                    : 100.0;
  ctx.log.info("score.done", {{"backend", backend->tag()},
                              {"requests", requests.size()},
                              {"lookups", result.lookups},
                              {"cache_hits", result.cache_hits},
                              {"backend_calls", result.backend_calls},
                              {"scores_applied", applied},
                              {"failures", result.failures.size()},
                              {"cache", cache_path.string()}});
  std::ostringstream msg;
  msg.setf(std::ios::fixed);
  msg.precision(1);
  msg << "scored " << comments.size() << " comments; cache hits " << result.cache_hits << "/" << result.lookups << " ("
      << pct << "%)";
  std::cout << msg.str() << "\n";
  for (const auto& f : result.failures) ctx.log.warn("score.failed", {{"comment", f.comment_id}, {"message", f.message}});
  if (!result.failures.empty()) {
    throw PartialFailure(std::to_string(result.failures.size()) +
                         " comments could not be scored; rerun to retry them (cached scores are kept)");
  }
  return 0;
}

int cmd_build(Context& ctx) {
  const auto report = build_input(ctx);
  const auto out = require_out(ctx.opt);
  const auto comments = conversation_comments(report.conversations);
  json summary = {{"input_comments", report.input_comments},
                  {"duplicates", report.duplicates},
                  {"top_level", report.top_level},
                  {"attached_replies", report.attached_replies},
                  {"outside_window", report.outside_window},
                  {"conversations", report.conversations.size()},
                  {"conversations_with_replies", report.conversations_with_replies()},
                  {"orphan_ids", report.orphan_ids}};
  write_outputs(out, {{"conversations.jsonl", comments_to_jsonl(comments)},
                      {"build_report.json", summary.dump(2) + "\n"}});
  return 0;
}

int cmd_encode(Context& ctx) {
  const auto report = build_input(ctx);
  const auto encoded = encode_report(ctx, report, parse_group_by(ctx.opt.group_by), encoder_config(ctx.opt));
  if (!ctx.opt.out.empty()) {
    atomic_write(ctx.opt.out, encoded_to_jsonl(encoded));
  } else {
    for (const auto& s : encoded.sequences) std::cout << json(s).dump() << "\n";
  }
  if (!encoded.skipped.empty()) {
    throw PartialFailure(std::to_string(encoded.skipped.size()) + " conversations lack scores for '" +
                         ctx.opt.attribute + "'; run score first");
  }
  return 0;
}

int cmd_stats(Context& ctx) {
  const auto report = build_input(ctx);
  const auto encoded = encode_report(ctx, report, parse_group_by(ctx.opt.group_by), encoder_config(ctx.opt));
  StatsConfig sc;
  sc.thresholds = {{"toxicity", ctx.opt.threshold}, {"insult", ctx.opt.threshold}};
  write_outputs(require_out(ctx.opt), stats_outputs(report, encoded, sc));
  return 0;
}

int cmd_fit(Context& ctx) {
  const auto groups = input_groups(ctx);
  const auto out = require_out(ctx.opt);
  const auto cfg = fit_config(ctx.opt);
  std::vector<std::pair<std::string, const std::vector<Sequence>*>> tasks;
  for (const auto& [g, seqs] : groups) tasks.emplace_back(g, &seqs);
  std::vector<FitResult> fits(tasks.size());
  parallel_for(tasks.size(), ctx.opt.workers, [&](std::size_t i) {
    fits[i] = baum_welch_fit(*tasks[i].second, ctx.opt.n_states, cfg, mix_seed(ctx.opt.seed, fnv1a64(tasks[i].first)));
  });

  json doc = {{"n_states", ctx.opt.n_states}, {"seed", ctx.opt.seed}, {"groups", json::array()}};
  Table t;
  t.header = {"group", "quantity", "value"};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& f = fits[i];
    const auto& g = tasks[i].first;
    json item = {{"group", g}, {"n_sequences", tasks[i].second->size()}, {"fit", to_json(f)}};
    for (std::size_t z = 0; z < f.params.emission.rows(); ++z) {
      for (std::size_t x = 0; x < f.params.emission.cols(); ++x) {
        t.rows.push_back({g, "emission_Z" + std::to_string(z + 1) + "_X" + std::to_string(x + 1),
                          format_double(f.params.emission(z, x))});
      }
    }
    if (f.params.n_states() >= 2) {
      const auto rr = relative_risk(f.params.emission, 0, 1);
      const auto term = identify_terminal_state(f.params.emission);
      item["relative_risk"] = {{"rr_x2", rr.rr_x2}, {"rr_x3", rr.rr_x3},
                               {"x2_defined", rr.x2_defined}, {"x3_defined", rr.x3_defined}};
      item["terminal_state"] = {{"state", term.state}, {"clean", term.clean},
                                {"other_end_probability", term.other_end_probability}};
      t.rows.push_back({g, "rr_x2", rr.x2_defined ? format_double(rr.rr_x2) : ""});
      t.rows.push_back({g, "rr_x3", rr.x3_defined ? format_double(rr.rr_x3) : ""});
    }
    t.rows.push_back({g, "mean_log_likelihood", format_double(f.mean_log_likelihood())});
    doc["groups"].push_back(std::move(item));
    ctx.log.info("fit.group", {{"group", g}, {"iterations", f.iterations}, {"converged", f.converged},
                               {"seed", f.seed}, {"mean_ll", f.mean_log_likelihood()}});
  }
  write_outputs(out, {{"fits.json", doc.dump(2) + "\n"}, {"fits.csv", t.to_csv()}});
  return 0;
}

int cmd_ensemble(Context& ctx) {
  const auto groups = input_groups(ctx);
  const auto spec = ensemble_spec(ctx.opt);
  const auto out = require_out(ctx.opt);
  const fs::path checkpoints = out / "checkpoints";
  const json spec_json = to_json(spec);
  ctx.log.info("ensemble.start", {{"spec", spec_json}, {"groups", groups.size()}, {"workers", spec.workers}});

  // A group is refitted only if its checkpoint is missing or was produced
  // from different inputs or settings.
  std::vector<EnsembleResult> results;
  std::map<std::string, std::vector<Sequence>> todo;
  std::map<std::string, std::string> digests;
  for (const auto& [g, seqs] : groups) {
    digests[g] = digest(json{{"spec", spec_json}, {"group", g}, {"sequences", seqs}});
    const fs::path cp = checkpoints / (file_stem(g) + ".json");
    if (fs::exists(cp)) {
      try {
        const auto j = json::parse(read_file(cp));
        if (j.at("digest").get<std::string>() == digests[g]) {
          results.push_back(ensemble_result_from_json(j.at("result")));
          ctx.log.info("ensemble.resumed", {{"group", g}, {"checkpoint", cp.string()}});
          continue;
        }
      } catch (const std::exception& e) {
        ctx.log.warn("ensemble.bad_checkpoint", {{"group", g}, {"message", e.what()}});
      }
    }
    todo[g] = seqs;
  }
  if (!todo.empty()) {
    for (auto& r : run_ensemble(spec, todo)) {
      atomic_write(checkpoints / (file_stem(r.group) + ".json"),
                   json{{"digest", digests[r.group]}, {"result", to_json(r)}}.dump() + "\n");
      ctx.log.info("ensemble.group", {{"group", r.group}, {"ok", r.n_ok}, {"failed", r.n_failed},
                                     {"converged", r.n_converged}, {"rr_x3_mean", r.rr_x3.n ? json(r.rr_x3.mean) : json(nullptr)}});
      results.push_back(std::move(r));
    }
  }
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.group < b.group; });
  OutputFiles files;
  files["ensemble.json"] = ensemble_document(spec, results).dump(2) + "\n";
  files["ensemble_summary.csv"] = ensemble_summary_table(results).to_csv();
  write_outputs(out, files);
  return 0;
}

int cmd_select(Context& ctx) {
  const auto groups = input_groups(ctx);
  const auto spec = ensemble_spec(ctx.opt);
  const auto out = require_out(ctx.opt);
  SelectionByGroup rows;
  for (const auto& [g, seqs] : groups) {
    rows[g] = select_n_states(seqs, spec, ctx.opt.states, g);
    for (const auto& r : rows[g]) {
      ctx.log.info("select.row", {{"group", g}, {"n_states", r.n_states},
                                  {"mean_nll", r.nll.n ? json(r.nll.mean) : json(nullptr)}, {"failed", r.n_failed}});
    }
  }
  auto files = selection_outputs(rows);
  files["selection.json"] = selection_document(rows).dump(2) + "\n";
  write_outputs(out, files);
  return 0;
}

AnalysisConfig analysis_config(const Options& o) {
  AnalysisConfig a;
  a.attribute = o.attribute;
  a.threshold = o.threshold;
  a.group_by = parse_group_by(o.group_by);
  a.workers = o.workers;
  return a;
}

int cmd_analyze(Context& ctx) {
  encoder_config(ctx.opt);  // validates attribute and threshold
  const auto report = build_input(ctx);
  write_outputs(require_out(ctx.opt), analysis_outputs(report.conversations, analysis_config(ctx.opt)));
  return 0;
}

int cmd_synth(Context& ctx) {
  auto spec = planted_spec_from_json(json::parse(read_file(require_path(ctx.opt.planted, "--planted"))));
  if (ctx.seed_opt->count() > 0) spec.seed = ctx.opt.seed;
  if (ctx.threshold_opt->count() > 0) spec.threshold = ctx.opt.threshold;
  const auto out = require_out(ctx.opt);
  const auto gen = generate_corpus(spec);
  write_outputs(out, {{"comments.jsonl", comments_to_jsonl(gen.comments)},
                      {"manifest.json", to_json(gen.manifest).dump(2) + "\n"},
                      {"planted_spec.json", to_json(spec).dump(2) + "\n"}});
  std::size_t rejected = 0;
  for (const auto& c : gen.manifest.channels) rejected += c.rejected_empty;
  ctx.log.info("synth.done", {{"seed", spec.seed},
                              {"conversations", gen.manifest.n_conversations},
                              {"comments", gen.manifest.n_comments},
                              {"rejected_empty", rejected}});
  return 0;
}

int cmd_report(Context& ctx) {
  auto& o = ctx.opt;
  const auto out = require_out(o);
  std::optional<EnsembleDocument> ens;
  if (!o.ensemble.empty()) {
    ens = parse_ensemble_document(json::parse(read_file(require_path(o.ensemble, "--ensemble"))));
    // analytics follow the settings the ensemble was fitted with
    const auto spec = ensemble_spec_from_json(ens->spec);
    if (spec.attribute != o.attribute || spec.threshold != o.threshold ||
        spec.grouping_key != parse_group_by(o.group_by)) {
      ctx.log.warn("report.settings_from_ensemble", {{"attribute", spec.attribute},
                                                     {"threshold", spec.threshold},
                                                     {"group_by", group_by_name(spec.grouping_key)}});
    }
    o.attribute = spec.attribute;
    o.threshold = spec.threshold;
    o.group_by = std::string(group_by_name(spec.grouping_key));
  }
  const auto report = build_input(ctx);
  const auto by = parse_group_by(o.group_by);
  const auto encoded = encode_report(ctx, report, by, encoder_config(o));

  StatsConfig sc;
  sc.thresholds = {{"toxicity", o.threshold}, {"insult", o.threshold}};
  OutputFiles files = stats_outputs(report, encoded, sc);
  files.merge(analysis_outputs(report.conversations, analysis_config(o)));
  json index = {{"attribute", o.attribute}, {"threshold", o.threshold}, {"group_by", o.group_by},
                {"conversations", report.conversations.size()}, {"encoded_sequences", encoded.sequences.size()}};
  if (ens) {
    files.merge(ensemble_outputs(ens->results, by));
    index["ensemble_spec"] = ens->spec;
  }
  if (!o.selection.empty()) {
    files.merge(selection_outputs(parse_selection_document(json::parse(read_file(require_path(o.selection, "--selection"))))));
  }
  if (!o.manifest.empty()) {
    const auto manifest = manifest_from_json(json::parse(read_file(require_path(o.manifest, "--manifest"))));
    if (!ens) throw InputError("--manifest needs --ensemble to compare against");
    files.merge(planted_outputs(manifest, ens->results, by));
    index["manifest_seed"] = manifest.seed;
  }
  json names = json::array();
  for (const auto& [name, content] : files) names.push_back(name);
  index["files"] = names;
  files["report.json"] = index.dump(2) + "\n";
  write_outputs(out, files);
  ctx.log.info("report.done", {{"files", files.size()}, {"out", out.string()}});
  return 0;
}

int run_subcommand(Context& ctx, const std::string& name) {
  static const std::map<std::string, int (*)(Context&)> table = {
      {"score", cmd_score}, {"build", cmd_build},       {"encode", cmd_encode},   {"stats", cmd_stats},
      {"fit", cmd_fit},     {"ensemble", cmd_ensemble}, {"select", cmd_select},   {"analyze", cmd_analyze},
      {"synth", cmd_synth}, {"report", cmd_report}};
  return table.at(name)(ctx);
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  Options& o = ctx.opt;
  CLI::App app{"toxhmm: toxicity-driven disengagement in threaded conversations"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "TOML config file; keys are the long flag names")->check(CLI::ExistingFile);

  const auto groups = std::string("inputs and outputs");
  app.add_option("--corpus", o.corpus, "comments JSONL")->group(groups);
  app.add_option("--labels", o.labels, "video labels CSV (video_id,label)")->group(groups);
  app.add_option("--encoded", o.encoded, "encoded sequences JSONL (fit, ensemble, select)")->group(groups);
  app.add_option("--cache", o.cache, "score cache JSONL (default: <out>.cache.jsonl)")->group(groups);
  app.add_option("--lexicon", o.lexicon, "stub backend lexicon JSON")->group(groups);
  app.add_option("--planted", o.planted, "planted model spec JSON (synth)")->group(groups);
  app.add_option("--ensemble", o.ensemble, "ensemble.json from the ensemble subcommand (report)")->group(groups);
  app.add_option("--selection", o.selection, "selection.json from the select subcommand (report)")->group(groups);
  app.add_option("--manifest", o.manifest, "manifest.json from synth (report)")->group(groups);
  app.add_option("--out", o.out, "output file (score, encode) or directory")->group(groups);

  const auto enc = std::string("encoding");
  app.add_option("--attribute", o.attribute, "score attribute to encode")
      ->check(CLI::IsMember({"toxicity", "insult"}))->group(enc);
  ctx.threshold_opt = app.add_option("--threshold", o.threshold, "score above this encodes as toxic")->group(enc);
  app.add_flag("--exclude-top", o.exclude_top, "leave the top-level comment out of sequences")->group(enc);
  app.add_option("--group-by", o.group_by, "grouping key")->check(CLI::IsMember({"channel", "label"}))->group(enc);
  app.add_flag("--strict", o.strict, "fail on the first malformed input line")->group(enc);

  const auto fit = std::string("fitting");
  ctx.seed_opt = app.add_option("--seed", o.seed, "master seed")->group(fit);
  app.add_option("--n-states", o.n_states, "hidden states")->check(CLI::PositiveNumber)->group(fit);
  app.add_option("--realizations", o.realizations, "bootstrap realizations per group")->check(CLI::PositiveNumber)->group(fit);
  app.add_option("--sample-size", o.sample_size, "sequences drawn per realization")->check(CLI::PositiveNumber)->group(fit);
  app.add_option("--train-fraction", o.train_fraction, "share of each draw used for training")->group(fit);
  app.add_option("--max-iterations", o.max_iterations, "EM iteration cap")->group(fit);
  app.add_option("--tolerance", o.tolerance, "EM stopping tolerance on the mean log-likelihood")->group(fit);
  app.add_option("--restarts", o.restarts, "random restarts per fit")->check(CLI::PositiveNumber)->group(fit);
  app.add_option("--acceleration", o.acceleration, "EM acceleration")
      ->check(CLI::IsMember({"squarem", "none"}))->group(fit);
  app.add_option("--states", o.states, "candidate state counts (select)")->delimiter(',')->group(fit);

  const auto sc = std::string("scoring");
  app.add_option("--backend", o.backend, "scoring backend")->check(CLI::IsMember({"stub", "remote"}))->group(sc);
  app.add_option("--endpoint", o.endpoint, "remote scoring URL")->group(sc);
  app.add_option("--score-attributes", o.score_attributes, "attributes requested when scoring")->delimiter(',')->group(sc);
  app.add_option("--rate-limit", o.rate_limit, "remote requests per second")->group(sc);
  app.add_option("--retries", o.retries, "retries after a transient failure")->group(sc);
  app.add_flag("--cache-bust", o.cache_bust, "ignore cached scores and rescore")->group(sc);

  app.add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--log-level", o.log_level, "stderr log level")->check(CLI::IsMember({"debug", "info", "warn", "error"}));

  app.add_subcommand("score", "score comments with the stub or remote backend (--corpus, --out file)");
  app.add_subcommand("build", "reconstruct conversations (--corpus, --out dir)");
  app.add_subcommand("encode", "encode conversations as symbol sequences (--corpus, --out file or stdout)");
  app.add_subcommand("stats", "descriptive tables (--corpus, --out dir)");
  app.add_subcommand("fit", "one Baum-Welch fit per group (--corpus or --encoded, --out dir)");
  app.add_subcommand("ensemble", "bootstrap realization ensemble per group (--corpus or --encoded, --out dir)");
  app.add_subcommand("select", "held-out likelihood across state counts (--corpus or --encoded, --out dir)");
  app.add_subcommand("analyze", "daily series, conditional densities, CCDFs (--corpus, --out dir)");
  app.add_subcommand("synth", "synthetic corpus from a planted model (--planted, --out dir)");
  app.add_subcommand("report", "collate tables into one directory (--corpus, --ensemble, --out dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    ctx.log.set_level(o.log_level);
    ctx.log.info("start", {{"subcommand", name}, {"seed", o.seed}, {"workers", o.workers}});
    const int code = run_subcommand(ctx, name);
    ctx.log.info("done", {{"subcommand", name}});
    return code;
  } catch (const PartialFailure& e) {
    ctx.log.log(Level::kError, "partial", {{"message", e.what()}});
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
