#include "toxhmm/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "toxhmm/error.hpp"
#include "toxhmm/io.hpp"

namespace toxhmm {

using nlohmann::json;

namespace {
#include "lexicon.inc"
}  // namespace

void ScoreRequest::validate() const {
  if (text.find_first_not_of(" \t\r\n\f\v") == std::string::npos) {
    throw InputError("comment " + comment_id + ": text is empty");
  }
  if (attributes.empty()) throw InputError("comment " + comment_id + ": no attributes requested");
}

Lexicon lexicon_from_json(std::string_view text) {
  Lexicon lex;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("lexicon: ") + e.what());
  }
  if (!j.is_object()) throw InputError("lexicon must be a JSON object");
  for (const auto& [attr, words] : j.items()) {
    if (!words.is_array()) throw InputError("lexicon entry '" + attr + "' must be an array");
    auto& set = lex[attr];
    for (const auto& w : words) {
      if (!w.is_string()) throw InputError("lexicon entry '" + attr + "' holds a non-string");
      for (auto& tok : tokenize(w.get<std::string>())) set.insert(std::move(tok));
    }
  }
  return lex;
}

const Lexicon& default_lexicon() {
  static const Lexicon lex = lexicon_from_json(kBundledLexicon);
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) { return lexicon_from_json(read_file(path)); }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (word) {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double stub_score(std::string_view text, std::string_view attribute, const Lexicon& lexicon) {
  const auto it = lexicon.find(std::string(attribute));
  if (it == lexicon.end()) throw InputError("unknown attribute '" + std::string(attribute) + "'");
  std::size_t k = 0;
  for (const auto& tok : tokenize(text)) k += it->second.count(tok);
  return std::min(1.0, 0.25 * static_cast<double>(k));
}

StubBackend::StubBackend(Lexicon lexicon, std::string tag) : lexicon_(std::move(lexicon)), tag_(std::move(tag)) {}

BackendReply StubBackend::score(const ScoreRequest& request) {
  BackendReply reply;
  try {
    for (const auto& attr : request.attributes) reply.scores[attr] = stub_score(request.text, attr, lexicon_);
  } catch (const InputError& e) {
    reply.status = BackendReply::Status::kRejected;
    reply.scores.clear();
    reply.message = e.what();
  }
  return reply;
}

RateLimiter::RateLimiter(double requests_per_second) {
  if (requests_per_second > 0.0) {
    interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / requests_per_second));
  }
}

void RateLimiter::acquire() {
  if (interval_ == Clock::duration::zero()) return;
  Clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = Clock::now();
    slot = next_ ? std::max(*next_, now) : now;
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

std::string to_jsonl_line(const ScoreCacheEntry& e) {
  const json j = {{"comment_id", e.comment_id},
                  {"attribute", e.attribute},
                  {"score", e.score},
                  {"backend_tag", e.backend_tag},
                  {"retrieved_at", e.retrieved_at}};
  return j.dump();
}

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  const std::string text = read_file(*path_);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const json j = json::parse(line);
      ScoreCacheEntry e{j.at("comment_id").get<std::string>(), j.at("attribute").get<std::string>(),
                        j.at("score").get<double>(), j.at("backend_tag").get<std::string>(),
                        j.at("retrieved_at").get<std::int64_t>()};
      if (!(e.score >= 0.0 && e.score <= 1.0)) throw InputError("score outside [0,1]");
      Key key{e.comment_id, e.attribute, e.backend_tag};
      entries_[std::move(key)] = std::move(e);
    } catch (const std::exception&) {
      // a torn final line from an interrupted run, or foreign content
      ++malformed_;
    }
  }
}

std::optional<ScoreCacheEntry> ScoreCache::find(const std::string& comment_id, const std::string& attribute,
                                                const std::string& backend_tag) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(Key{comment_id, attribute, backend_tag});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::append(std::span<const ScoreCacheEntry> entries) {
  if (entries.empty()) return;
  std::lock_guard lock(mutex_);
  if (path_) {
    if (!path_->parent_path().empty()) std::filesystem::create_directories(path_->parent_path());
    std::ofstream out(*path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to cache " + path_->string());
    for (const auto& e : entries) out << to_jsonl_line(e) << '\n';
    out.flush();
    if (!out) throw IoError("cache write failed: " + path_->string());
  }
  for (const auto& e : entries) entries_[Key{e.comment_id, e.attribute, e.backend_tag}] = e;
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

BatchResult score_batch(std::span<const ScoreRequest> requests, ScoringBackend& backend, ScoreCache& cache,
                        const BatchOptions& options) {
  const std::string tag = backend.tag();
  const auto clock = options.clock ? options.clock : [] {
    return static_cast<std::int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
            .count());
  };
  const auto sleep = options.sleep ? options.sleep : [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };

  struct Slot {
    std::vector<std::optional<ScoreCacheEntry>> per_attribute;  // parallel to request.attributes
    ScoreRequest pending;  // attributes still to fetch
    std::optional<std::string> failure;
    bool done = false;
  };
  std::vector<Slot> slots(requests.size());
  BatchResult result;
  std::vector<std::size_t> work;

  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& req = requests[i];
    Slot& slot = slots[i];
    slot.per_attribute.resize(req.attributes.size());
    result.lookups += req.attributes.size();
    try {
      req.validate();
    } catch (const InputError& e) {
      slot.failure = e.what();
      slot.done = true;
      continue;
    }
    slot.pending.comment_id = req.comment_id;
    slot.pending.text = req.text;
    for (std::size_t a = 0; a < req.attributes.size(); ++a) {
      if (!options.cache_bust) {
        if (auto hit = cache.find(req.comment_id, req.attributes[a], tag)) {
          slot.per_attribute[a] = std::move(hit);
          ++result.cache_hits;
          continue;
        }
      }
      slot.pending.attributes.push_back(req.attributes[a]);
    }
    if (slot.pending.attributes.empty()) {
      slot.done = true;
    } else {
      work.push_back(i);
    }
  }

  RateLimiter limiter(options.rate_limit);
  std::atomic<std::size_t> next_task{0};
  std::atomic<std::size_t> calls{0};
  std::atomic<bool> abort{false};
  std::mutex commit_mutex;
  std::size_t committed = 0;
  std::string auth_message;
  std::optional<std::string> commit_error;

  // Writes finished slots to the cache strictly in request order.
  auto commit_ready = [&] {
    while (committed < slots.size() && slots[committed].done) {
      const Slot& s = slots[committed];
      std::vector<ScoreCacheEntry> fresh;
      for (std::size_t a = 0; a < s.per_attribute.size(); ++a) {
        const auto& e = s.per_attribute[a];
        if (e && std::find(s.pending.attributes.begin(), s.pending.attributes.end(), e->attribute) !=
                     s.pending.attributes.end()) {
          fresh.push_back(*e);
        }
      }
      cache.append(fresh);
      ++committed;
    }
  };

  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const std::size_t t = next_task.fetch_add(1);
      if (t >= work.size()) return;
      const std::size_t i = work[t];
      Slot& slot = slots[i];
      const auto& req = requests[i];
      BackendReply reply;
      for (int attempt = 0;; ++attempt) {
        limiter.acquire();
        ++calls;
        reply = backend.score(slot.pending);
        if (reply.status != BackendReply::Status::kTransient) break;
        if (attempt >= options.retries) {
          reply.status = BackendReply::Status::kRejected;
          reply.message = "gave up after " + std::to_string(attempt + 1) + " attempts: " + reply.message;
          break;
        }
        sleep(options.backoff_seconds * std::ldexp(1.0, attempt));
      }
      std::lock_guard lock(commit_mutex);
      if (reply.status == BackendReply::Status::kAuthFailed) {
        if (!abort.exchange(true)) auth_message = reply.message;
        return;
      }
      if (reply.status == BackendReply::Status::kOk) {
        const std::int64_t now = clock();
        for (std::size_t a = 0; a < req.attributes.size(); ++a) {
          if (slot.per_attribute[a]) continue;
          const auto it = reply.scores.find(req.attributes[a]);
          if (it == reply.scores.end() || !(it->second >= 0.0 && it->second <= 1.0)) {
            slot.failure = "backend returned no valid score for '" + req.attributes[a] + "'";
            continue;
          }
          slot.per_attribute[a] = ScoreCacheEntry{req.comment_id, req.attributes[a], it->second, tag, now};
        }
      } else {
        slot.failure = reply.message.empty() ? "rejected" : reply.message;
      }
      slot.done = true;
      try {
        commit_ready();
      } catch (const std::exception& e) {
        commit_error = e.what();
        abort = true;
        return;
      }
    }
  };

  {
    std::lock_guard lock(commit_mutex);
    commit_ready();
  }
  const std::size_t n_workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(work.size(), 1));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  result.backend_calls = calls.load();
  if (commit_error) throw IoError(*commit_error);
  if (abort.load()) throw AuthError("authentication failed: " + auth_message);

  for (std::size_t i = 0; i < slots.size(); ++i) {
    for (const auto& e : slots[i].per_attribute) {
      if (e) result.entries.push_back(*e);
    }
    if (slots[i].failure) result.failures.push_back({requests[i].comment_id, *slots[i].failure});
  }
  return result;
}

std::vector<ScoreRequest> requests_for(std::span<const Comment> comments,
                                       const std::vector<std::string>& attributes) {
  std::vector<ScoreRequest> out;
  out.reserve(comments.size());
  for (const auto& c : comments) out.push_back({c.id, c.text, attributes});
  return out;
}

std::size_t apply_scores(std::vector<Comment>& comments, std::span<const ScoreCacheEntry> entries) {
  std::map<std::string, std::vector<const ScoreCacheEntry*>> by_id;
  for (const auto& e : entries) by_id[e.comment_id].push_back(&e);
  std::size_t set = 0;
  for (auto& c : comments) {
    const auto it = by_id.find(c.id);
    if (it == by_id.end()) continue;
    for (const auto* e : it->second) {
      c.scores[e->attribute] = e->score;
      ++set;
    }
  }
  return set;
}

}  // namespace toxhmm
