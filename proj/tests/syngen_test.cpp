#include <doctest.h>

#include <map>

#include "toxhmm/error.hpp"
#include "toxhmm/syngen.hpp"

using namespace toxhmm;

namespace {

HmmParameters planted(double top_toxic) {
  HmmParameters p;
  p.initial = {0.5, 0.5};
  p.transition = Matrix(2, 2, {0.9, 0.1, 0.1, 0.9});
  p.emission = Matrix(2, 3, {0.10, 0.90 - top_toxic, top_toxic, 0.00, 0.85, 0.15});
  return p;
}

PlantedSpec two_channels() {
  PlantedSpec s;
  s.hmm = planted(0.30);
  s.n_conversations = 300;
  s.max_length = 40;
  s.seed = 11;
  ChannelSpec a;
  a.name = "alpha";
  a.label = "news";
  ChannelSpec b;
  b.name = "beta";
  b.label = "gaming";
  b.hmm = planted(0.18);
  b.n_conversations = 150;
  s.channels = {a, b};
  return s;
}

}  // namespace

TEST_SUITE("syngen") {

TEST_CASE("draw_score lands on the requested side of the threshold") {
  Rng rng(1);
  for (double thr : {0.6, 0.5, 1e-9, 1.0 - 1e-12}) {
    for (int i = 0; i < 2000; ++i) {
      const double hi = draw_score(kSymbolToxic, thr, rng);
      const double lo = draw_score(kSymbolBenign, thr, rng);
      CHECK(hi > thr);
      CHECK(hi <= 1.0);
      CHECK(lo < thr);
      CHECK(lo >= 0.0);
    }
  }
}

TEST_CASE("round trip: corpus building and encoding reproduce the sampled sequences") {
  const auto spec = two_channels();
  const auto gen = generate_corpus(spec);
  const auto report = build_conversations(gen.comments);
  CHECK(report.orphan_ids.empty());
  CHECK(report.outside_window == 0);
  CHECK(report.duplicates == 0);
  CHECK(report.conversations.size() == gen.manifest.sequences.size());

  const auto encoded = encode_all(report.conversations, EncoderConfig{"toxicity", spec.threshold, true});
  CHECK(encoded.skipped.empty());
  std::map<std::string, Sequence> by_id;
  for (std::size_t i = 0; i < encoded.sequences.size(); ++i) by_id[encoded.conversation_ids[i]] = encoded.sequences[i];
  for (const auto& s : gen.manifest.sequences) {
    REQUIRE(by_id.count(s.id) == 1);
    CHECK(by_id[s.id] == s.symbols);
  }
  // the second attribute carries the same symbols
  const auto insult = encode_all(report.conversations, EncoderConfig{"insult", spec.threshold, true});
  CHECK(insult.sequences == encoded.sequences);
}

TEST_CASE("manifest relative risk equals relative_risk on the planted emission") {
  const auto gen = generate_corpus(two_channels());
  REQUIRE(gen.manifest.channels.size() == 2);
  const auto& a = gen.manifest.channels[0];
  const auto& b = gen.manifest.channels[1];
  REQUIRE(a.relative_risk.has_value());
  const auto rr = relative_risk(canonicalize_states(planted(0.30)).emission, 0, 1);
  CHECK(a.relative_risk->rr_x3 == rr.rr_x3);
  CHECK(a.relative_risk->rr_x2 == rr.rr_x2);
  CHECK(b.relative_risk->rr_x3 == relative_risk(planted(0.18).emission, 0, 1).rr_x3);
  CHECK(a.n_conversations == 300);
  CHECK(b.n_conversations == 150);
  CHECK(gen.manifest.n_comments == gen.comments.size());
  std::size_t per_day = 0;
  for (const auto& [day, n] : gen.manifest.per_day_counts) per_day += n;
  CHECK(per_day == gen.comments.size());
  for (const auto& c : gen.comments) {
    CHECK(c.label == (c.channel == "alpha" ? std::optional<std::string>("news") : std::optional<std::string>("gaming")));
  }
}

TEST_CASE("sequences are well formed") {
  const auto spec = two_channels();
  const auto gen = generate_corpus(spec);
  std::size_t truncated = 0;
  for (const auto& c : gen.manifest.channels) truncated += c.truncated;
  for (const auto& s : gen.manifest.sequences) {
    REQUIRE(s.symbols.size() >= 2);
    CHECK(s.symbols.front() != kSymbolEnd);
    CHECK(s.symbols.back() == kSymbolEnd);
    CHECK(s.symbols.size() <= spec.max_length + 1);
    for (std::size_t t = 0; t + 1 < s.symbols.size(); ++t) CHECK(s.symbols[t] != kSymbolEnd);
  }
  // with max_length 40 and a sticky non-ending state some draws hit the cap
  CHECK(truncated > 0);
}

TEST_CASE("generation is deterministic and channels use independent streams") {
  auto spec = two_channels();
  const auto a = generate_corpus(spec);
  const auto b = generate_corpus(spec);
  CHECK(a.comments == b.comments);
  CHECK(to_json(a.manifest).dump() == to_json(b.manifest).dump());

  auto only_alpha = spec;
  only_alpha.channels.pop_back();
  const auto c = generate_corpus(only_alpha);
  std::vector<Comment> alpha;
  for (const auto& cm : a.comments) {
    if (cm.channel == "alpha") alpha.push_back(cm);
  }
  CHECK(c.comments == alpha);

  spec.seed = 12;
  CHECK(generate_corpus(spec).comments != a.comments);
}

TEST_CASE("manifest and spec JSON round trip") {
  const auto spec = two_channels();
  const auto gen = generate_corpus(spec);
  const auto j = to_json(gen.manifest);
  CHECK(to_json(manifest_from_json(nlohmann::json::parse(j.dump()))).dump() == j.dump());
  const auto back = planted_spec_from_json(nlohmann::json::parse(to_json(spec).dump()));
  CHECK(generate_corpus(back).comments == gen.comments);
}

TEST_CASE("spec validation") {
  auto spec = two_channels();
  spec.channels[1].name = "alpha";
  CHECK_THROWS_AS(generate_corpus(spec), InputError);
  spec = two_channels();
  spec.hmm.emission = Matrix(2, 2, {0.5, 0.5, 0.5, 0.5});
  CHECK_THROWS_AS(generate_corpus(spec), InputError);
  spec = two_channels();
  spec.threshold = 1.0;
  CHECK_THROWS_AS(generate_corpus(spec), InputError);
  spec = two_channels();
  spec.max_length = 1;
  CHECK_THROWS_AS(generate_corpus(spec), InputError);
  CHECK_THROWS_AS(planted_spec_from_json(nlohmann::json::array()), InputError);
}

TEST_CASE("zero conversations: empty corpus, zero counts") {
  auto spec = two_channels();
  spec.n_conversations = 0;
  spec.channels[1].n_conversations = 0;
  const auto gen = generate_corpus(spec);
  CHECK(gen.comments.empty());
  CHECK(gen.manifest.n_comments == 0);
  CHECK(gen.manifest.n_conversations == 0);
  CHECK(gen.manifest.per_day_counts.empty());
  for (const auto& c : gen.manifest.channels) {
    CHECK(c.symbol_counts == std::array<std::size_t, 3>{0, 0, 0});
    CHECK(c.rejected_empty == 0);
  }
}

TEST_CASE("deterministic emitter: every conversation encodes to [1,0]") {
  // state 0 always emits 1 then moves to state 1, which always ends
  PlantedSpec s;
  s.hmm.initial = {1.0, 0.0};
  s.hmm.transition = Matrix(2, 2, {0.0, 1.0, 0.0, 1.0});
  s.hmm.emission = Matrix(2, 3, {0.0, 1.0, 0.0, 1.0, 0.0, 0.0});
  s.n_conversations = 50;
  const auto gen = generate_corpus(s);
  CHECK(gen.comments.size() == 50);
  const auto report = build_conversations(gen.comments);
  const auto encoded = encode_all(report.conversations, EncoderConfig{});
  REQUIRE(encoded.sequences.size() == 50);
  for (const auto& seq : encoded.sequences) CHECK(seq == Sequence{1, 0});
}

TEST_CASE("default channel") {
  PlantedSpec s;
  s.hmm = planted(0.3);
  s.n_conversations = 20;
  const auto gen = generate_corpus(s);
  REQUIRE(gen.manifest.channels.size() == 1);
  CHECK(gen.manifest.channels[0].name == "synthetic");
  CHECK(!gen.comments.front().label.has_value());
}

}  // TEST_SUITE
