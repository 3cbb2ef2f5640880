#pragma once

// Per-comment attribute scores from a remote HTTP service or a local lexicon
// stub, behind an append-only cache.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "toxhmm/corpus.hpp"

namespace toxhmm {

// Credentials were refused; no further requests are made.
class AuthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScoreRequest {
  std::string comment_id;
  std::string text;
  std::vector<std::string> attributes;

  void validate() const;  // InputError on blank text or empty attribute list
};

struct ScoreCacheEntry {
  std::string comment_id;
  std::string attribute;
  double score = 0.0;
  std::string backend_tag;
  std::int64_t retrieved_at = 0;

  friend bool operator==(const ScoreCacheEntry&, const ScoreCacheEntry&) = default;
};

// attribute -> lowercase tokens
using Lexicon = std::map<std::string, std::set<std::string>>;

const Lexicon& default_lexicon();
// JSON object {attribute: [token, ...]}.
Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon lexicon_from_json(std::string_view text);

// Lowercased maximal runs of ASCII alphanumerics; bytes >= 0x80 are kept
// inside tokens so UTF-8 words are not split.
std::vector<std::string> tokenize(std::string_view text);

// min(1, 0.25 k), k = number of tokens found in the attribute's lexicon.
// Throws InputError for an attribute the lexicon does not know.
double stub_score(std::string_view text, std::string_view attribute, const Lexicon& lexicon = default_lexicon());

struct BackendReply {
  enum class Status { kOk, kRejected, kTransient, kAuthFailed };
  Status status = Status::kOk;
  std::map<std::string, double> scores;
  std::string message;
};

class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;
  virtual std::string tag() const = 0;
  // Must be safe to call from several threads.
  virtual BackendReply score(const ScoreRequest& request) = 0;
};

class StubBackend : public ScoringBackend {
 public:
  explicit StubBackend(Lexicon lexicon = default_lexicon(), std::string tag = "stub-v1");
  std::string tag() const override { return tag_; }
  BackendReply score(const ScoreRequest& request) override;

 private:
  Lexicon lexicon_;
  std::string tag_;
};

struct RemoteConfig {
  std::string endpoint;  // http[s]://host[:port]/path
  std::string api_key;   // sent as a bearer token
  std::string tag = "remote";
  std::chrono::seconds timeout{30};
};

// POST {"text", "attributes"} -> {"attribute": score}.
//   401, 403           -> kAuthFailed
//   429, 5xx, network  -> kTransient
//   other non-2xx, malformed body, missing or out-of-range score -> kRejected
class RemoteBackend : public ScoringBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  ~RemoteBackend() override;
  std::string tag() const override { return config_.tag; }
  BackendReply score(const ScoreRequest& request) override;

 private:
  struct Url {
    std::string scheme_host_port;
    std::string path;
  };
  RemoteConfig config_;
  Url url_;
};

// The nth acquisition returns no earlier than start + (n - 1) / rate, where
// start is the first acquisition. Safe under concurrent use.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;
  // rate <= 0 disables limiting
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  std::mutex mutex_;
  Clock::duration interval_{};
  std::optional<Clock::time_point> next_;
};

// Append-only JSONL store of ScoreCacheEntry. On load, a later record for the
// same key replaces an earlier one (that is how a cache bust is persisted).
class ScoreCache {
 public:
  ScoreCache() = default;  // in memory only
  explicit ScoreCache(std::filesystem::path path);

  std::optional<ScoreCacheEntry> find(const std::string& comment_id, const std::string& attribute,
                                      const std::string& backend_tag) const;
  // Serialized; each entry becomes one line, flushed before returning.
  void append(std::span<const ScoreCacheEntry> entries);

  std::size_t size() const;
  std::size_t malformed_lines() const { return malformed_; }

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::map<Key, ScoreCacheEntry> entries_;
  std::size_t malformed_ = 0;
};

std::string to_jsonl_line(const ScoreCacheEntry& e);

struct ScoreFailure {
  std::string comment_id;
  std::string message;
};

struct BatchOptions {
  double rate_limit = 10.0;  // requests per second
  int retries = 5;           // extra attempts after a transient failure
  double backoff_seconds = 0.5;  // first retry delay, doubled per attempt
  bool cache_bust = false;
  std::size_t workers = 1;
  std::function<std::int64_t()> clock;           // UTC seconds; defaults to the system clock
  std::function<void(double seconds)> sleep;     // defaults to sleeping the thread
};

struct BatchResult {
  // one entry per (request, attribute) that has a score, in request order
  std::vector<ScoreCacheEntry> entries;
  std::vector<ScoreFailure> failures;
  std::size_t cache_hits = 0;   // (request, attribute) pairs served from cache
  std::size_t lookups = 0;      // (request, attribute) pairs asked for
  std::size_t backend_calls = 0;
};

// Requests are served from the cache where possible; the rest go to the
// backend, rate limited, with exponential backoff on transient failures.
// New entries are appended to the cache in request order. Throws AuthError
// on an authentication failure.
BatchResult score_batch(std::span<const ScoreRequest> requests, ScoringBackend& backend, ScoreCache& cache,
                        const BatchOptions& options = {});

// Requests for every comment, one per comment.
std::vector<ScoreRequest> requests_for(std::span<const Comment> comments,
                                       const std::vector<std::string>& attributes);

// Writes cached scores into the comments' score maps; returns how many
// (comment, attribute) scores were set.
std::size_t apply_scores(std::vector<Comment>& comments, std::span<const ScoreCacheEntry> entries);

}  // namespace toxhmm
