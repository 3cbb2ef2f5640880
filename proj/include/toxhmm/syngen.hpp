#pragma once

// Synthetic scored corpora from planted HMMs.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "toxhmm/analytics.hpp"
#include "toxhmm/corpus.hpp"
#include "toxhmm/hmm.hpp"

namespace toxhmm {

struct ChannelSpec {
  std::string name;
  std::optional<std::string> label;
  std::optional<HmmParameters> hmm;              // overrides PlantedSpec::hmm
  std::optional<std::size_t> n_conversations;    // overrides PlantedSpec::n_conversations
};

struct PlantedSpec {
  HmmParameters hmm;  // 3 symbols
  std::size_t n_conversations = 1000;  // per channel
  std::size_t max_length = 200;        // comments per conversation before a forced end
  std::vector<ChannelSpec> channels;   // empty: one channel called "synthetic"
  double threshold = 0.6;
  std::vector<std::string> attributes{"toxicity", "insult"};
  std::int64_t start_time = 1577836800;  // 2020-01-01T00:00:00Z
  std::size_t day_range = 120;           // top comments fall on one of this many days
  std::size_t videos_per_channel = 20;
  std::size_t authors_per_channel = 300;
  std::uint64_t seed = 0;

  void validate() const;
};

PlantedSpec planted_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PlantedSpec& s);

struct ChannelManifest {
  std::string name;
  std::optional<std::string> label;
  HmmParameters planted;  // canonicalized
  std::optional<RelativeRisk> relative_risk;  // of the canonical emission, states 0 and 1
  std::size_t n_conversations = 0;
  std::size_t n_comments = 0;
  std::size_t rejected_empty = 0;  // draws whose first symbol was the end symbol
  std::size_t truncated = 0;       // draws cut at max_length, end symbol appended
  std::array<std::size_t, 3> symbol_counts{};
};

struct GeneratedSequence {
  std::string id;  // top comment id
  std::string channel;
  Sequence symbols;
};

struct Manifest {
  std::uint64_t seed = 0;
  double threshold = 0.6;
  std::vector<std::string> attributes;
  std::vector<ChannelManifest> channels;
  std::size_t n_conversations = 0;
  std::size_t n_comments = 0;
  std::map<std::string, std::size_t> per_day_counts;  // UTC date -> comments
  std::vector<GeneratedSequence> sequences;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

struct GeneratedCorpus {
  std::vector<Comment> comments;
  Manifest manifest;
};

// Each channel draws from its own stream, mix_seed(seed, fnv1a64(name)), so
// adding a channel leaves the others unchanged. Draws that start with the
// end symbol would be conversations without a top comment; they are
// rejected and counted.
GeneratedCorpus generate_corpus(const PlantedSpec& spec);

// Score on the given side of the threshold: symbol 2 in (t, 1], otherwise [0, t).
double draw_score(int symbol, double threshold, Rng& rng);

}  // namespace toxhmm
