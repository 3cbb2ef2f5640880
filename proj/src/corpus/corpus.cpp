#include "toxhmm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "toxhmm/error.hpp"

namespace toxhmm {

using nlohmann::json;

namespace {

const std::string& required_string(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw InputError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw InputError(std::string("field '") + key + "' must be a string");
  return it->get_ref<const std::string&>();
}

}  // namespace

Comment comment_from_json(const json& j) {
  if (!j.is_object()) throw InputError("comment must be a JSON object");
  Comment c;
  c.id = required_string(j, "id");
  if (c.id.empty()) throw InputError("field 'id' is empty");
  c.video_id = required_string(j, "video_id");
  c.channel = required_string(j, "channel");
  c.author_id = required_string(j, "author_id");
  c.text = required_string(j, "text");

  if (const auto it = j.find("parent_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw InputError("field 'parent_id' must be a string or null");
    if (!it->get_ref<const std::string&>().empty()) c.parent_id = it->get<std::string>();
  }

  const auto ts = j.find("timestamp");
  if (ts == j.end()) throw InputError("missing field 'timestamp'");
  if (!ts->is_number_integer()) throw InputError("field 'timestamp' must be an integer");
  c.timestamp = ts->get<std::int64_t>();
  if (c.timestamp <= 0) throw InputError("field 'timestamp' must be positive");

  if (const auto it = j.find("scores"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw InputError("field 'scores' must be an object");
    for (const auto& [attr, v] : it->items()) {
      if (!v.is_number()) throw InputError("score '" + attr + "' is not a number");
      const double s = v.get<double>();
      if (!(s >= 0.0 && s <= 1.0)) throw InputError("score '" + attr + "' outside [0,1]");
      c.scores.emplace(attr, s);
    }
  }

  if (const auto it = j.find("label"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw InputError("field 'label' must be a string");
    c.label = it->get<std::string>();
  }
  return c;
}

json to_json(const Comment& c) {
  json j = {{"id", c.id},
            {"video_id", c.video_id},
            {"channel", c.channel},
            {"author_id", c.author_id},
            {"timestamp", c.timestamp},
            {"text", c.text},
            {"scores", c.scores}};
  j["parent_id"] = c.parent_id ? json(*c.parent_id) : json(nullptr);
  if (c.label) j["label"] = *c.label;
  return j;
}

std::string to_jsonl_line(const Comment& c) { return to_json(c).dump(); }

LoadResult parse_comments(std::string_view jsonl, bool strict) {
  LoadResult out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      out.comments.push_back(comment_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      std::string msg = e.what();
      if (strict) throw InputError("line " + std::to_string(line_no) + ": " + msg);
      out.errors.push_back({line_no, std::move(msg)});
    }
  }
  return out;
}

LoadResult load_comments(const std::filesystem::path& path, bool strict) {
  return parse_comments(read_file(path), strict);
}

std::string comments_to_jsonl(std::span<const Comment> comments) {
  std::string out;
  for (const auto& c : comments) {
    out += to_jsonl_line(c);
    out += '\n';
  }
  return out;
}

std::map<std::string, std::string> load_video_labels(const std::filesystem::path& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "video_id" || rows[0][1] != "label") {
    throw InputError(path.string() + ": expected header 'video_id,label'");
  }
  std::map<std::string, std::string> labels;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 2) {
      throw InputError(path.string() + ": row " + std::to_string(r + 1) + " has fewer than 2 columns");
    }
    labels[rows[r][0]] = rows[r][1];
  }
  return labels;
}

void apply_video_labels(std::vector<Comment>& comments,
                        const std::map<std::string, std::string>& labels) {
  for (auto& c : comments) {
    if (const auto it = labels.find(c.video_id); it != labels.end()) c.label = it->second;
  }
}

std::size_t BuildReport::conversations_with_replies() const {
  return static_cast<std::size_t>(std::count_if(conversations.begin(), conversations.end(),
                                                [](const Conversation& c) { return !c.replies.empty(); }));
}

BuildReport build_conversations(std::vector<Comment> comments) {
  BuildReport report;
  report.input_comments = comments.size();

  std::sort(comments.begin(), comments.end(), [](const Comment& a, const Comment& b) {
    return (a <=> b) < 0;
  });
  {
    std::vector<Comment> unique;
    unique.reserve(comments.size());
    for (auto& c : comments) {
      if (!unique.empty() && unique.back().id == c.id) {
        ++report.duplicates;
        continue;
      }
      unique.push_back(std::move(c));
    }
    comments.swap(unique);
  }

  std::unordered_map<std::string, std::size_t> top_index;
  for (const auto& c : comments) {
    if (c.is_top_level()) {
      top_index.emplace(c.id, report.conversations.size());
      report.conversations.push_back({c, {}});
    }
  }
  report.top_level = report.conversations.size();

  for (auto& c : comments) {
    if (c.is_top_level()) continue;
    const auto it = top_index.find(*c.parent_id);
    if (it == top_index.end()) {
      report.orphan_ids.push_back(c.id);
      continue;
    }
    Conversation& conv = report.conversations[it->second];
    if (c.timestamp < conv.top.timestamp ||
        c.timestamp - conv.top.timestamp > kConversationWindowSeconds) {
      ++report.outside_window;
      continue;
    }
    conv.replies.push_back(std::move(c));
    ++report.attached_replies;
  }

  for (auto& conv : report.conversations) {
    std::sort(conv.replies.begin(), conv.replies.end(), [](const Comment& a, const Comment& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
    });
  }
  std::sort(report.conversations.begin(), report.conversations.end(),
            [](const Conversation& a, const Conversation& b) {
              if (a.top.video_id != b.top.video_id) return a.top.video_id < b.top.video_id;
              if (a.top.timestamp != b.top.timestamp) return a.top.timestamp < b.top.timestamp;
              return a.top.id < b.top.id;
            });
  return report;
}

void EncoderConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("threshold must lie strictly inside (0, 1)");
  if (attribute.empty()) throw InputError("attribute must be non-empty");
}

Sequence encode(const Conversation& conversation, const EncoderConfig& config) {
  config.validate();
  Sequence seq;
  seq.reserve(conversation.size() + 1);
  std::vector<std::string> missing;
  auto add = [&](const Comment& c) {
    const auto it = c.scores.find(config.attribute);
    if (it == c.scores.end()) {
      missing.push_back(c.id);
      return;
    }
    seq.push_back(it->second > config.threshold ? kSymbolToxic : kSymbolBenign);
  };
  if (config.include_top) add(conversation.top);
  for (const auto& r : conversation.replies) add(r);
  if (!missing.empty()) {
    std::string msg = "missing score '" + config.attribute + "' for comment";
    msg += missing.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (i) msg += ", ";
      msg += missing[i];
    }
    throw InputError(msg);
  }
  seq.push_back(kSymbolEnd);
  return seq;
}

GroupBy parse_group_by(std::string_view s) {
  if (s == "channel") return GroupBy::kChannel;
  if (s == "label") return GroupBy::kLabel;
  throw InputError("group-by must be 'channel' or 'label', got '" + std::string(s) + "'");
}

std::string_view group_by_name(GroupBy g) { return g == GroupBy::kChannel ? "channel" : "label"; }

std::string group_key(const Conversation& conversation, GroupBy by) {
  if (by == GroupBy::kChannel) return conversation.top.channel;
  return conversation.top.label.value_or("unlabeled");
}

EncodedCorpus encode_all(std::span<const Conversation> conversations, const EncoderConfig& config,
                         GroupBy by) {
  config.validate();
  EncodedCorpus out;
  for (std::size_t i = 0; i < conversations.size(); ++i) {
    try {
      out.sequences.push_back(encode(conversations[i], config));
    } catch (const InputError& e) {
      out.skipped.push_back({i + 1, e.what()});
      continue;
    }
    out.conversation_ids.push_back(conversations[i].top.id);
    out.groups.push_back(group_key(conversations[i], by));
  }
  return out;
}

std::string encoded_to_jsonl(const EncodedCorpus& corpus) {
  std::string out;
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
    json j = {{"id", corpus.conversation_ids[i]}, {"group", corpus.groups[i]}, {"symbols", corpus.sequences[i]}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

EncodedCorpus encoded_from_jsonl(std::string_view text) {
  EncodedCorpus out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const json j = json::parse(line);
      Sequence s = j.at("symbols").get<Sequence>();
      if (s.empty()) throw InputError("empty symbol list");
      for (int x : s) {
        if (x < 0 || x > 2) throw InputError("symbol outside {0,1,2}");
      }
      out.conversation_ids.push_back(j.at("id").get<std::string>());
      out.groups.push_back(j.at("group").get<std::string>());
      out.sequences.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw InputError("encoded line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, std::vector<Sequence>> split_by_group(const EncodedCorpus& corpus) {
  std::map<std::string, std::vector<Sequence>> groups;
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
    groups[corpus.groups[i]].push_back(corpus.sequences[i]);
  }
  return groups;
}

namespace {

struct AttributeTally {
  std::size_t scored = 0;
  std::size_t above = 0;
  double sum = 0.0;

  void add(const Comment& c, const std::string& attr, double threshold) {
    const auto it = c.scores.find(attr);
    if (it == c.scores.end()) return;
    ++scored;
    sum += it->second;
    if (it->second > threshold) ++above;
  }
  double prevalence() const {
    return scored ? static_cast<double>(above) / static_cast<double>(scored) : std::nan("");
  }
  double mean() const { return scored ? sum / static_cast<double>(scored) : std::nan(""); }
};

double threshold_for(const StatsConfig& config, const std::string& attr) {
  const auto it = config.thresholds.find(attr);
  return it == config.thresholds.end() ? 0.6 : it->second;
}

struct ChannelTally {
  std::set<std::string> videos;
  std::size_t comments = 0;
  std::size_t top_level = 0;
  AttributeTally toxicity;
  AttributeTally insult;
};

}  // namespace

Table dataset_stats(std::span<const Comment> comments, const StatsConfig& config) {
  const double tox = threshold_for(config, "toxicity");
  const double ins = threshold_for(config, "insult");
  std::map<std::string, ChannelTally> per_channel;
  ChannelTally all;
  for (const auto& c : comments) {
    for (ChannelTally* t : {&per_channel[c.channel], &all}) {
      t->videos.insert(c.video_id);
      ++t->comments;
      if (c.is_top_level()) ++t->top_level;
      t->toxicity.add(c, "toxicity", tox);
      t->insult.add(c, "insult", ins);
    }
  }
  Table table;
  table.header = {"channel", "videos", "conversations", "comments", "top_level", "replies",
                  "toxicity_prevalence", "insult_prevalence"};
  auto row = [&table](const std::string& name, const ChannelTally& t) {
    table.rows.push_back({name, std::to_string(t.videos.size()), std::to_string(t.top_level),
                          std::to_string(t.comments), std::to_string(t.top_level),
                          std::to_string(t.comments - t.top_level), format_double(t.toxicity.prevalence()),
                          format_double(t.insult.prevalence())});
  };
  for (const auto& [name, t] : per_channel) row(name, t);
  row("ALL", all);
  return table;
}

Table dataset_stats_by_type(std::span<const Comment> comments, const StatsConfig& config) {
  const double tox = threshold_for(config, "toxicity");
  const double ins = threshold_for(config, "insult");
  struct Tally {
    std::size_t comments = 0;
    AttributeTally toxicity, insult;
  } top, reply, all;
  for (const auto& c : comments) {
    for (Tally* t : {c.is_top_level() ? &top : &reply, &all}) {
      ++t->comments;
      t->toxicity.add(c, "toxicity", tox);
      t->insult.add(c, "insult", ins);
    }
  }
  Table table;
  table.header = {"type", "comments", "toxicity_mean", "toxicity_prevalence", "insult_mean",
                  "insult_prevalence"};
  for (const auto& [name, t] : {std::pair<const char*, const Tally&>{"top_level", top},
                                {"reply", reply},
                                {"all", all}}) {
    table.rows.push_back({name, std::to_string(t.comments), format_double(t.toxicity.mean()),
                          format_double(t.toxicity.prevalence()), format_double(t.insult.mean()),
                          format_double(t.insult.prevalence())});
  }
  return table;
}

}  // namespace toxhmm
