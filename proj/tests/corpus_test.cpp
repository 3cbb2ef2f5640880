#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "toxhmm/corpus.hpp"
#include "toxhmm/error.hpp"
#include "toxhmm/rng.hpp"

using namespace toxhmm;

namespace {

constexpr std::int64_t kDay = 24 * 3600;

Comment make_comment(std::string id, std::optional<std::string> parent, std::int64_t ts,
                     double tox, std::string video = "v1", std::string channel = "A") {
  Comment c;
  c.id = std::move(id);
  c.video_id = std::move(video);
  c.channel = std::move(channel);
  c.parent_id = std::move(parent);
  c.author_id = "u";
  c.timestamp = ts;
  c.text = "t";
  c.scores = {{"toxicity", tox}, {"insult", tox}};
  return c;
}

// Fixture built by hand-rolled rules; the counts it returns are known by
// construction, not by running the library.
struct Fixture {
  std::vector<Comment> comments;
  std::map<std::string, std::size_t> per_channel;
  std::size_t toxic_above = 0;
  std::size_t insult_above = 0;
  std::size_t top_level = 0;
  std::vector<std::pair<std::string, Sequence>> expected_sequences;  // keyed by top id
};

Fixture make_fixture() {
  Fixture f;
  Rng rng(31337);
  const char* channels[] = {"ABC", "CNN", "Fox", "MSNBC", "NYPost", "OAN"};
  std::size_t made = 0;
  int conv = 0;
  while (made < 1000) {
    const std::string ch = channels[rng.below(6)];
    const std::string video = ch + "-v" + std::to_string(rng.below(20));
    const std::string top_id = "c" + std::to_string(conv++);
    const std::int64_t t0 = 1600000000 + static_cast<std::int64_t>(rng.below(400)) * kDay;
    const std::size_t replies = std::min<std::size_t>(rng.below(6), 999 - made);
    Sequence symbols;
    auto emit = [&](Comment c) {
      const double tox = c.scores["toxicity"];
      symbols.push_back(tox > 0.6 ? 2 : 1);
      f.toxic_above += tox > 0.6;
      f.insult_above += c.scores["insult"] > 0.6;
      ++f.per_channel[ch];
      f.comments.push_back(std::move(c));
      ++made;
    };
    auto draw_score = [&] { return std::round(rng.uniform() * 100.0) / 100.0; };
    Comment top = make_comment(top_id, std::nullopt, t0, draw_score(), video, ch);
    top.scores["insult"] = draw_score();
    emit(top);
    ++f.top_level;
    // strictly increasing offsets inside the window
    std::int64_t offset = 0;
    for (std::size_t r = 0; r < replies; ++r) {
      offset += 1 + static_cast<std::int64_t>(rng.below(kDay));
      Comment c = make_comment(top_id + "-r" + std::to_string(r), top_id, t0 + offset, draw_score(), video, ch);
      c.scores["insult"] = draw_score();
      emit(c);
    }
    symbols.push_back(0);
    f.expected_sequences.emplace_back(top_id, symbols);
  }
  return f;
}

// Quadratic reference grouping: for every top comment, scan all comments.
std::map<std::string, std::vector<std::string>> reference_grouping(const std::vector<Comment>& all) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& top : all) {
    if (top.parent_id) continue;
    std::vector<const Comment*> kids;
    for (const auto& c : all) {
      if (c.parent_id && *c.parent_id == top.id && c.timestamp >= top.timestamp &&
          c.timestamp <= top.timestamp + 10 * kDay) {
        kids.push_back(&c);
      }
    }
    std::sort(kids.begin(), kids.end(), [](const Comment* a, const Comment* b) {
      return std::make_pair(a->timestamp, a->id) < std::make_pair(b->timestamp, b->id);
    });
    auto& ids = out[top.id];
    for (auto* k : kids) ids.push_back(k->id);
  }
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("toxhmm_corpus_test_" + name);
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("load_comments: empty file gives an empty list") {
  const auto p = temp_path("empty.jsonl");
  atomic_write(p, "");
  const auto r = load_comments(p);
  CHECK(r.comments.empty());
  CHECK(r.errors.empty());
  std::filesystem::remove(p);
}

TEST_CASE("load_comments: one well-formed line") {
  const std::string line =
      R"({"id":"x1","video_id":"v9","channel":"CNN","parent_id":null,"author_id":"a7",)"
      R"("timestamp":1650000000,"text":"hello there","scores":{"toxicity":0.25,"insult":0.5}})";
  const auto r = parse_comments(line + "\n");
  REQUIRE(r.comments.size() == 1);
  const auto& c = r.comments[0];
  CHECK(c.id == "x1");
  CHECK(c.video_id == "v9");
  CHECK(c.channel == "CNN");
  CHECK(c.is_top_level());
  CHECK(c.author_id == "a7");
  CHECK(c.timestamp == 1650000000);
  CHECK(c.text == "hello there");
  CHECK(c.scores.at("toxicity") == 0.25);
  CHECK(c.scores.at("insult") == 0.5);
  CHECK(!c.label);
}

TEST_CASE("load_comments: malformed lines are reported or fatal") {
  const std::string good =
      R"({"id":"a","video_id":"v","channel":"c","author_id":"u","timestamp":5,"text":"","scores":{}})";
  const std::string text = good + "\n{not json\n\n" +
                           R"({"id":"b","video_id":"v","channel":"c","author_id":"u","timestamp":-1,"text":""})" +
                           "\n" + R"({"id":"c","video_id":"v","channel":"c","author_id":"u","timestamp":9,"text":"","scores":{"toxicity":1.5}})" +
                           "\n";
  const auto lenient = parse_comments(text);
  CHECK(lenient.comments.size() == 1);
  REQUIRE(lenient.errors.size() == 3);
  CHECK(lenient.errors[0].line == 2);
  CHECK(lenient.errors[1].line == 4);
  CHECK(lenient.errors[2].line == 5);
  CHECK_THROWS_AS(parse_comments(text, true), InputError);
  CHECK_THROWS_AS(load_comments("/nonexistent/file.jsonl"), IoError);
}

TEST_CASE("comment JSON round trip") {
  auto c = make_comment("r1", "t1", 1700000000, 0.123456789012345);
  c.label = "politics";
  c.text = "quote \" and unicode \xc3\xa9";
  const auto back = parse_comments(comments_to_jsonl(std::vector<Comment>{c}), true);
  REQUIRE(back.comments.size() == 1);
  CHECK(back.comments[0] == c);
}

TEST_CASE("fixture of 1000 comments: counts match the generator") {
  const auto f = make_fixture();
  const auto p = temp_path("fixture.jsonl");
  atomic_write(p, comments_to_jsonl(f.comments));
  const auto loaded = load_comments(p, true);
  std::filesystem::remove(p);
  REQUIRE(loaded.comments.size() == 1000);
  std::map<std::string, std::size_t> per_channel;
  for (const auto& c : loaded.comments) ++per_channel[c.channel];
  CHECK(per_channel == f.per_channel);
}

TEST_CASE("build_conversations: window boundary") {
  std::vector<Comment> cs = {make_comment("t", std::nullopt, 1000, 0.1),
                             make_comment("r1", "t", 1000 + kDay, 0.1),
                             make_comment("r2", "t", 1000 + 11 * kDay, 0.1)};
  const auto r = build_conversations(cs);
  REQUIRE(r.conversations.size() == 1);
  CHECK(r.conversations[0].size() == 2);
  CHECK(r.outside_window == 1);
}

TEST_CASE("build_conversations: exactly ten days is inside") {
  std::vector<Comment> cs = {make_comment("t", std::nullopt, 1000, 0.1),
                             make_comment("r", "t", 1000 + 10 * kDay, 0.1),
                             make_comment("late", "t", 1000 + 10 * kDay + 1, 0.1)};
  const auto r = build_conversations(cs);
  CHECK(r.conversations[0].size() == 2);
}

TEST_CASE("build_conversations: equal timestamps ordered by id") {
  std::vector<Comment> cs = {make_comment("t", std::nullopt, 1000, 0.1), make_comment("zz", "t", 2000, 0.9),
                             make_comment("aa", "t", 2000, 0.1)};
  const auto r = build_conversations(cs);
  REQUIRE(r.conversations[0].replies.size() == 2);
  CHECK(r.conversations[0].replies[0].id == "aa");
  CHECK(r.conversations[0].replies[1].id == "zz");
}

TEST_CASE("build_conversations: orphans and bookkeeping") {
  std::vector<Comment> cs = {make_comment("t", std::nullopt, 1000, 0.1),
                             make_comment("r1", "t", 1500, 0.1),
                             make_comment("lost", "missing", 1500, 0.1),
                             make_comment("nested", "r1", 1600, 0.1),
                             make_comment("before", "t", 900, 0.1),
                             make_comment("r1", "t", 1500, 0.1)};
  const auto r = build_conversations(cs);
  CHECK(r.orphan_ids == std::vector<std::string>{"lost", "nested"});
  CHECK(r.duplicates == 1);
  CHECK(r.outside_window == 1);
  CHECK(r.top_level + r.attached_replies + r.orphan_ids.size() + r.outside_window + r.duplicates ==
        r.input_comments);
}

TEST_CASE("build_conversations matches the quadratic reference on the fixture") {
  auto f = make_fixture();
  // perturb: late replies, orphans and equal timestamps
  f.comments.push_back(make_comment("late", "c0", f.comments[0].timestamp + 20 * kDay, 0.3));
  f.comments.push_back(make_comment("orph", "nope", 1600000000, 0.3));
  f.comments.push_back(make_comment("tie-b", "c1", f.comments[0].timestamp, 0.3));
  const auto ref = reference_grouping(f.comments);
  const auto r = build_conversations(f.comments);
  REQUIRE(r.conversations.size() == ref.size());
  std::map<std::size_t, std::size_t> hist, ref_hist;
  for (const auto& conv : r.conversations) {
    std::vector<std::string> ids;
    for (const auto& c : conv.replies) ids.push_back(c.id);
    CHECK(ids == ref.at(conv.top.id));
    ++hist[conv.size()];
  }
  for (const auto& [id, kids] : ref) ++ref_hist[kids.size() + 1];
  CHECK(hist == ref_hist);
  CHECK(r.top_level + r.attached_replies + r.orphan_ids.size() + r.outside_window + r.duplicates ==
        r.input_comments);
}

TEST_CASE("build_conversations is invariant to input order") {
  auto f = make_fixture();
  f.comments.push_back(f.comments[17]);  // a duplicate
  const auto a = build_conversations(f.comments);
  Rng rng(5);
  for (std::size_t i = f.comments.size(); i > 1; --i) std::swap(f.comments[i - 1], f.comments[rng.below(i)]);
  const auto b = build_conversations(f.comments);
  REQUIRE(a.conversations.size() == b.conversations.size());
  for (std::size_t i = 0; i < a.conversations.size(); ++i) {
    CHECK(a.conversations[i].top == b.conversations[i].top);
    CHECK(a.conversations[i].replies == b.conversations[i].replies);
  }
  CHECK(a.duplicates == 1);
  CHECK(b.duplicates == 1);
}

TEST_CASE("encode: worked example and strict threshold") {
  const auto r = build_conversations({make_comment("t", std::nullopt, 100, 0.7), make_comment("r", "t", 200, 0.3)});
  EncoderConfig cfg;
  CHECK(encode(r.conversations[0], cfg) == Sequence{2, 1, 0});
  const auto b = build_conversations({make_comment("t", std::nullopt, 100, 0.6)});
  CHECK(encode(b.conversations[0], cfg) == Sequence{1, 0});
  cfg.include_top = false;
  CHECK(encode(r.conversations[0], cfg) == Sequence{1, 0});
}

TEST_CASE("encode: missing scores list every offending id") {
  auto top = make_comment("t", std::nullopt, 100, 0.7);
  auto r1 = make_comment("r1", "t", 200, 0.2);
  auto r2 = make_comment("r2", "t", 300, 0.2);
  r1.scores.erase("toxicity");
  r2.scores.erase("toxicity");
  const auto b = build_conversations({top, r1, r2});
  try {
    encode(b.conversations[0], EncoderConfig{});
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("r1") != std::string::npos);
    CHECK(msg.find("r2") != std::string::npos);
  }
  EncoderConfig bad;
  bad.threshold = 1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("encode: fixture sequences and symbol frequencies match the generator") {
  const auto f = make_fixture();
  const auto r = build_conversations(f.comments);
  const auto enc = encode_all(r.conversations, EncoderConfig{});
  CHECK(enc.skipped.empty());
  std::map<std::string, Sequence> got;
  std::array<std::size_t, 3> freq{}, ref_freq{};
  for (std::size_t i = 0; i < enc.sequences.size(); ++i) {
    const auto& s = enc.sequences[i];
    got[enc.conversation_ids[i]] = s;
    // length = comments + 1, exactly one zero at the end
    CHECK(std::count(s.begin(), s.end(), 0) == 1);
    CHECK(s.back() == 0);
    for (int x : s) ++freq[x];
  }
  for (const auto& [id, s] : f.expected_sequences) {
    CHECK(got.at(id) == s);
    for (int x : s) ++ref_freq[x];
  }
  CHECK(freq == ref_freq);
  CHECK(ref_freq[2] == f.toxic_above);
}

TEST_CASE("encoded corpus JSONL round trip and grouping") {
  const auto f = make_fixture();
  const auto r = build_conversations(f.comments);
  const auto enc = encode_all(r.conversations, EncoderConfig{});
  const auto back = encoded_from_jsonl(encoded_to_jsonl(enc));
  CHECK(back.sequences == enc.sequences);
  CHECK(back.groups == enc.groups);
  CHECK(back.conversation_ids == enc.conversation_ids);
  const auto groups = split_by_group(enc);
  CHECK(groups.size() == 6);
  std::size_t total = 0;
  for (const auto& [g, seqs] : groups) total += seqs.size();
  CHECK(total == enc.sequences.size());
}

TEST_CASE("video labels map onto comments") {
  const auto p = temp_path("labels.csv");
  atomic_write(p, "video_id,label\nv1,sports\n\"v,2\",news\n");
  const auto labels = load_video_labels(p);
  std::filesystem::remove(p);
  CHECK(labels.at("v,2") == "news");
  std::vector<Comment> cs = {make_comment("t", std::nullopt, 5, 0.1, "v1"), make_comment("u", std::nullopt, 5, 0.1, "v3")};
  apply_video_labels(cs, labels);
  CHECK(cs[0].label == "sports");
  CHECK(!cs[1].label);
  const auto r = build_conversations(cs);
  CHECK(group_key(r.conversations[0], GroupBy::kLabel) == "sports");
  CHECK(group_key(r.conversations[1], GroupBy::kLabel) == "unlabeled");
}

TEST_CASE("dataset_stats: all-zero scores give zero prevalence") {
  std::vector<Comment> cs = {make_comment("t", std::nullopt, 5, 0.0, "v1", "A"),
                             make_comment("r", "t", 6, 0.0, "v1", "A"),
                             make_comment("s", std::nullopt, 5, 0.0, "v2", "B")};
  const auto table = dataset_stats(cs);
  CHECK(table.header == std::vector<std::string>{"channel", "videos", "conversations", "comments", "top_level",
                                                 "replies", "toxicity_prevalence", "insult_prevalence"});
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0] == std::vector<std::string>{"A", "1", "1", "2", "1", "1", "0", "0"});
  CHECK(table.rows[2][0] == "ALL");
  CHECK(table.rows[2][6] == "0");
}

TEST_CASE("dataset_stats: fixture prevalence equals the generator's fraction exactly") {
  const auto f = make_fixture();
  const auto table = dataset_stats(f.comments);
  const auto& all = table.rows.back();
  CHECK(all[0] == "ALL");
  CHECK(all[3] == "1000");
  CHECK(all[4] == std::to_string(f.top_level));
  CHECK(all[6] == format_double(static_cast<double>(f.toxic_above) / 1000.0));
  CHECK(all[7] == format_double(static_cast<double>(f.insult_above) / 1000.0));
  const auto by_type = dataset_stats_by_type(f.comments);
  CHECK(by_type.rows.size() == 3);
  CHECK(by_type.rows[2][1] == "1000");
}

TEST_CASE("csv helpers round trip") {
  Table t;
  t.header = {"a", "b"};
  t.rows = {{"x,y", "say \"hi\""}, {"", "2"}};
  const auto rows = parse_csv(t.to_csv());
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "x,y");
  CHECK(rows[1][1] == "say \"hi\"");
  CHECK(rows[2][0].empty());
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::nan("")).empty());
}

}  // TEST_SUITE
