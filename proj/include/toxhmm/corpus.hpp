#pragma once

// Scored comments, conversation reconstruction and sequence encoding.
//
// JSONL schema, one object per line:
//   {"id": str, "video_id": str, "channel": str, "parent_id": str|null,
//    "author_id": str, "timestamp": int (UTC seconds), "text": str,
//    "scores": {attribute: number in [0,1]}, "label": str (optional)}
// parent_id absent, null or "" marks a top-level comment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "toxhmm/hmm.hpp"
#include "toxhmm/io.hpp"

namespace toxhmm {

inline constexpr std::int64_t kConversationWindowSeconds = 10 * 24 * 3600;

struct Comment {
  std::string id;
  std::string video_id;
  std::string channel;
  std::optional<std::string> parent_id;
  std::string author_id;
  std::int64_t timestamp = 0;
  std::string text;
  std::map<std::string, double> scores;
  std::optional<std::string> label;

  bool is_top_level() const noexcept { return !parent_id.has_value(); }

  friend bool operator==(const Comment&, const Comment&) = default;
  friend auto operator<=>(const Comment&, const Comment&) = default;
};

// Throws InputError naming the offending field.
Comment comment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Comment& c);
// One compact JSON object, no trailing newline. Keys are sorted.
std::string to_jsonl_line(const Comment& c);

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  std::vector<Comment> comments;
  std::vector<LineError> errors;
};

// Blank lines are ignored. In strict mode the first malformed line throws
// InputError; otherwise it is recorded and skipped.
LoadResult load_comments(const std::filesystem::path& path, bool strict = false);
LoadResult parse_comments(std::string_view jsonl, bool strict = false);

std::string comments_to_jsonl(std::span<const Comment> comments);

// video_id -> label, from a two-column CSV with header "video_id,label".
std::map<std::string, std::string> load_video_labels(const std::filesystem::path& path);
// Fills the label of every comment whose video appears in the map.
void apply_video_labels(std::vector<Comment>& comments,
                        const std::map<std::string, std::string>& labels);

struct Conversation {
  Comment top;
  std::vector<Comment> replies;  // ascending (timestamp, id)

  std::size_t size() const noexcept { return 1 + replies.size(); }
};

struct BuildReport {
  std::vector<Conversation> conversations;  // sorted by (video_id, top timestamp, top id)
  std::size_t input_comments = 0;
  std::size_t top_level = 0;
  std::size_t attached_replies = 0;
  // replies whose parent is absent from the input, or is itself a reply
  std::vector<std::string> orphan_ids;
  // replies outside [top, top + 10 days]
  std::size_t outside_window = 0;
  // extra copies of an id already seen; one copy per id is kept
  std::size_t duplicates = 0;

  std::size_t conversations_with_replies() const;
};

// One conversation per top-level comment. Deterministic and independent of
// input order: duplicates are resolved by keeping the smallest copy under the
// total order on Comment.
BuildReport build_conversations(std::vector<Comment> comments);

struct EncoderConfig {
  std::string attribute = "toxicity";
  double threshold = 0.6;
  bool include_top = true;

  void validate() const;  // threshold strictly inside (0, 1)
};

inline constexpr int kSymbolEnd = 0;
inline constexpr int kSymbolBenign = 1;
inline constexpr int kSymbolToxic = 2;

// score > threshold -> 2, else 1, then a trailing 0. Throws InputError listing
// every comment id without a score for the attribute.
Sequence encode(const Conversation& conversation, const EncoderConfig& config);

enum class GroupBy { kChannel, kLabel };
GroupBy parse_group_by(std::string_view s);
std::string_view group_by_name(GroupBy g);

// Group key of a conversation, taken from its top comment. Conversations
// without a label fall in the group "unlabeled".
std::string group_key(const Conversation& conversation, GroupBy by);

struct EncodedCorpus {
  std::vector<Sequence> sequences;
  std::vector<std::string> conversation_ids;  // top comment ids
  std::vector<std::string> groups;
  std::vector<LineError> skipped;  // conversations that could not be encoded
};

// Encodes every conversation; those with missing scores are skipped and
// recorded (line = conversation index + 1).
EncodedCorpus encode_all(std::span<const Conversation> conversations, const EncoderConfig& config,
                         GroupBy by = GroupBy::kChannel);

// Writes/reads the encoded form: one JSON object per line,
// {"id", "group", "symbols"}.
std::string encoded_to_jsonl(const EncodedCorpus& corpus);
EncodedCorpus encoded_from_jsonl(std::string_view text);

// Group name -> sequences, groups in lexicographic order.
std::map<std::string, std::vector<Sequence>> split_by_group(const EncodedCorpus& corpus);

struct StatsConfig {
  std::map<std::string, double> thresholds{{"toxicity", 0.6}, {"insult", 0.6}};
};

// Per channel plus a final "ALL" row. Columns:
//   channel, videos, conversations, comments, top_level, replies,
//   toxicity_prevalence, insult_prevalence
// Prevalence is the fraction of comments carrying the attribute whose score
// exceeds the threshold; empty when no comment carries it.
Table dataset_stats(std::span<const Comment> comments, const StatsConfig& config = {});

// Rows for top-level comments, replies and all comments. Columns:
//   type, comments, toxicity_mean, toxicity_prevalence, insult_mean, insult_prevalence
Table dataset_stats_by_type(std::span<const Comment> comments, const StatsConfig& config = {});

}  // namespace toxhmm
