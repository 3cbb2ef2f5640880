#include "toxhmm/syngen.hpp"

#include <cmath>
#include <set>

#include "toxhmm/error.hpp"
#include "toxhmm/hmm_io.hpp"
#include "toxhmm/rng.hpp"

namespace toxhmm {

namespace {

constexpr std::int64_t kDay = 86400;

const std::string kDefaultChannel = "synthetic";

void check_hmm(const HmmParameters& p, const std::string& where) {
  try {
    p.validate();
  } catch (const InputError& e) {
    throw InputError(where + ": " + e.what());
  }
  if (p.n_symbols() != 3) throw InputError(where + ": planted model needs exactly 3 symbols");
}

std::vector<ChannelSpec> effective_channels(const PlantedSpec& s) {
  if (!s.channels.empty()) return s.channels;
  ChannelSpec c;
  c.name = kDefaultChannel;
  return {c};
}

std::string padded(std::size_t v, int width) {
  std::string d = std::to_string(v);
  if (static_cast<int>(d.size()) < width) d.insert(0, static_cast<std::size_t>(width) - d.size(), '0');
  return d;
}

nlohmann::json rr_json(const RelativeRisk& rr) {
  nlohmann::json j;
  j["rr_x2"] = rr.rr_x2;
  j["rr_x3"] = rr.rr_x3;
  j["x2_defined"] = rr.x2_defined;
  j["x3_defined"] = rr.x3_defined;
  return j;
}

// Strictly increasing reply offsets in [1, window - 1].
std::vector<std::int64_t> reply_offsets(std::size_t n, Rng& rng) {
  std::vector<std::int64_t> out;
  out.reserve(n);
  const std::int64_t budget = kConversationWindowSeconds - 1;
  std::int64_t prev = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto remaining = static_cast<std::int64_t>(n - r);
    const std::int64_t max_step = (budget - prev) / remaining;
    prev += 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_step)));
    out.push_back(prev);
  }
  return out;
}

}  // namespace

void PlantedSpec::validate() const {
  check_hmm(hmm, "hmm");
  if (max_length < 2) throw InputError("max_length must be at least 2");
  if (max_length >= static_cast<std::size_t>(kConversationWindowSeconds)) {
    throw InputError("max_length too large for distinct reply timestamps");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("threshold must be in (0, 1)");
  if (attributes.empty()) throw InputError("at least one attribute is required");
  if (day_range == 0) throw InputError("day_range must be positive");
  if (videos_per_channel == 0) throw InputError("videos_per_channel must be positive");
  if (authors_per_channel == 0) throw InputError("authors_per_channel must be positive");
  if (start_time <= 0) throw InputError("start_time must be positive");
  std::set<std::string> names;
  for (const auto& c : channels) {
    if (c.name.empty()) throw InputError("channel name must not be empty");
    if (!names.insert(c.name).second) throw InputError("duplicate channel: " + c.name);
    if (c.hmm) check_hmm(*c.hmm, "channel " + c.name);
  }
}

double draw_score(int symbol, double threshold, Rng& rng) {
  if (symbol == kSymbolToxic) {
    double s = threshold + (1.0 - threshold) * (1.0 - rng.uniform());
    if (!(s > threshold)) s = std::nextafter(threshold, 2.0);
    return std::min(s, 1.0);
  }
  double s = threshold * rng.uniform();
  if (!(s < threshold)) s = std::nextafter(threshold, 0.0);
  return s;
}

GeneratedCorpus generate_corpus(const PlantedSpec& spec) {
  spec.validate();
  GeneratedCorpus out;
  Manifest& m = out.manifest;
  m.seed = spec.seed;
  m.threshold = spec.threshold;
  m.attributes = spec.attributes;

  for (const auto& ch : effective_channels(spec)) {
    const HmmParameters& hmm = ch.hmm ? *ch.hmm : spec.hmm;
    const std::size_t n_conv = ch.n_conversations.value_or(spec.n_conversations);
    Rng rng(mix_seed(spec.seed, fnv1a64(ch.name)));

    ChannelManifest cm;
    cm.name = ch.name;
    cm.label = ch.label;
    cm.planted = canonicalize_states(hmm);
    if (cm.planted.n_states() >= 2) cm.relative_risk = relative_risk(cm.planted.emission, 0, 1);
    cm.n_conversations = n_conv;

    for (std::size_t k = 0; k < n_conv; ++k) {
      Sequence seq = sample(hmm, rng, spec.max_length, kSymbolEnd);
      while (seq.front() == kSymbolEnd) {
        ++cm.rejected_empty;
        seq = sample(hmm, rng, spec.max_length, kSymbolEnd);
      }
      if (seq.back() != kSymbolEnd) {
        seq.push_back(kSymbolEnd);
        ++cm.truncated;
      }
      const std::size_t n_comments = seq.size() - 1;

      const std::string conv_id = ch.name + "-c" + padded(k, 6);
      const std::string video = ch.name + "-v" + padded(rng.below(spec.videos_per_channel), 3);
      const std::int64_t top_ts = spec.start_time +
                                  static_cast<std::int64_t>(rng.below(spec.day_range)) * kDay +
                                  static_cast<std::int64_t>(rng.below(kDay));
      const auto offsets = reply_offsets(n_comments - 1, rng);

      for (std::size_t t = 0; t < n_comments; ++t) {
        Comment c;
        c.id = t == 0 ? conv_id : conv_id + "-r" + padded(t, 3);
        c.video_id = video;
        c.channel = ch.name;
        if (t > 0) c.parent_id = conv_id;
        c.author_id = ch.name + "-u" + padded(rng.below(spec.authors_per_channel), 4);
        c.timestamp = t == 0 ? top_ts : top_ts + offsets[t - 1];
        c.text = seq[t] == kSymbolToxic ? "synthetic toxic comment" : "synthetic benign comment";
        for (const auto& a : spec.attributes) c.scores[a] = draw_score(seq[t], spec.threshold, rng);
        c.label = ch.label;
        ++m.per_day_counts[utc_date(c.timestamp)];
        out.comments.push_back(std::move(c));
      }
      for (int s : seq) ++cm.symbol_counts[static_cast<std::size_t>(s)];
      cm.n_comments += n_comments;
      m.sequences.push_back({conv_id, ch.name, std::move(seq)});
    }
    m.n_conversations += cm.n_conversations;
    m.n_comments += cm.n_comments;
    m.channels.push_back(std::move(cm));
  }
  return out;
}

PlantedSpec planted_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("planted spec must be a JSON object");
  PlantedSpec s;
  try {
    s.hmm = parameters_from_json(j.at("hmm"));
    s.n_conversations = j.value("n_conversations", s.n_conversations);
    s.max_length = j.value("max_length", s.max_length);
    s.threshold = j.value("threshold", s.threshold);
    if (j.contains("attributes")) s.attributes = j.at("attributes").get<std::vector<std::string>>();
    s.start_time = j.value("start_time", s.start_time);
    s.day_range = j.value("day_range", s.day_range);
    s.videos_per_channel = j.value("videos_per_channel", s.videos_per_channel);
    s.authors_per_channel = j.value("authors_per_channel", s.authors_per_channel);
    s.seed = j.value("seed", s.seed);
    if (j.contains("channels")) {
      for (const auto& cj : j.at("channels")) {
        ChannelSpec c;
        c.name = cj.at("name").get<std::string>();
        if (cj.contains("label") && !cj.at("label").is_null()) c.label = cj.at("label").get<std::string>();
        if (cj.contains("hmm")) c.hmm = parameters_from_json(cj.at("hmm"));
        if (cj.contains("n_conversations")) c.n_conversations = cj.at("n_conversations").get<std::size_t>();
        s.channels.push_back(std::move(c));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("planted spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const PlantedSpec& s) {
  nlohmann::json j;
  j["hmm"] = to_json(s.hmm);
  j["n_conversations"] = s.n_conversations;
  j["max_length"] = s.max_length;
  j["threshold"] = s.threshold;
  j["attributes"] = s.attributes;
  j["start_time"] = s.start_time;
  j["day_range"] = s.day_range;
  j["videos_per_channel"] = s.videos_per_channel;
  j["authors_per_channel"] = s.authors_per_channel;
  j["seed"] = s.seed;
  j["channels"] = nlohmann::json::array();
  for (const auto& c : s.channels) {
    nlohmann::json cj;
    cj["name"] = c.name;
    if (c.label) cj["label"] = *c.label;
    if (c.hmm) cj["hmm"] = to_json(*c.hmm);
    if (c.n_conversations) cj["n_conversations"] = *c.n_conversations;
    j["channels"].push_back(std::move(cj));
  }
  return j;
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["threshold"] = m.threshold;
  j["attributes"] = m.attributes;
  j["n_conversations"] = m.n_conversations;
  j["n_comments"] = m.n_comments;
  j["channels"] = nlohmann::json::array();
  for (const auto& c : m.channels) {
    nlohmann::json cj;
    cj["name"] = c.name;
    cj["label"] = c.label ? nlohmann::json(*c.label) : nlohmann::json(nullptr);
    cj["planted"] = to_json(c.planted);
    cj["relative_risk"] = c.relative_risk ? rr_json(*c.relative_risk) : nlohmann::json(nullptr);
    cj["n_conversations"] = c.n_conversations;
    cj["n_comments"] = c.n_comments;
    cj["rejected_empty"] = c.rejected_empty;
    cj["truncated"] = c.truncated;
    cj["symbol_counts"] = c.symbol_counts;
    j["channels"].push_back(std::move(cj));
  }
  j["per_day_counts"] = m.per_day_counts;
  j["sequences"] = nlohmann::json::array();
  for (const auto& s : m.sequences) {
    j["sequences"].push_back({{"id", s.id}, {"channel", s.channel}, {"symbols", s.symbols}});
  }
  return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.threshold = j.at("threshold").get<double>();
    m.attributes = j.at("attributes").get<std::vector<std::string>>();
    m.n_conversations = j.at("n_conversations").get<std::size_t>();
    m.n_comments = j.at("n_comments").get<std::size_t>();
    for (const auto& cj : j.at("channels")) {
      ChannelManifest c;
      c.name = cj.at("name").get<std::string>();
      if (!cj.at("label").is_null()) c.label = cj.at("label").get<std::string>();
      c.planted = parameters_from_json(cj.at("planted"));
      if (!cj.at("relative_risk").is_null()) {
        const auto& r = cj.at("relative_risk");
        c.relative_risk = RelativeRisk{r.at("rr_x2").get<double>(), r.at("rr_x3").get<double>(),
                                       r.at("x2_defined").get<bool>(), r.at("x3_defined").get<bool>()};
      }
      c.n_conversations = cj.at("n_conversations").get<std::size_t>();
      c.n_comments = cj.at("n_comments").get<std::size_t>();
      c.rejected_empty = cj.at("rejected_empty").get<std::size_t>();
      c.truncated = cj.at("truncated").get<std::size_t>();
      c.symbol_counts = cj.at("symbol_counts").get<std::array<std::size_t, 3>>();
      m.channels.push_back(std::move(c));
    }
    m.per_day_counts = j.at("per_day_counts").get<std::map<std::string, std::size_t>>();
    for (const auto& sj : j.at("sequences")) {
      m.sequences.push_back(
          {sj.at("id").get<std::string>(), sj.at("channel").get<std::string>(), sj.at("symbols").get<Sequence>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  return m;
}

}  // namespace toxhmm
