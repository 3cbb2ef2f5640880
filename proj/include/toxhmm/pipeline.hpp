#pragma once

// Table and document builders shared by the command line subcommands. Every
// builder returns file name -> content; nothing here touches the disk except
// write_outputs.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "toxhmm/analytics.hpp"
#include "toxhmm/corpus.hpp"
#include "toxhmm/ensemble.hpp"
#include "toxhmm/syngen.hpp"

namespace toxhmm {

using OutputFiles = std::map<std::string, std::string>;

// Relative tolerance for planted vs recovered relative risks, and absolute
// tolerance for emission cells, used by planted_outputs.
inline constexpr double kPlantedRrTolerance = 0.10;
inline constexpr double kPlantedEmissionTolerance = 0.03;

// Group name made safe for a file name. Names that had to be changed get a
// hash suffix so distinct groups never collide.
std::string file_stem(std::string_view group);

// Top-level comments and attached replies, in conversation order.
std::vector<Comment> conversation_comments(std::span<const Conversation> conversations);

// build_summary.csv (raw and filtered counts), table1_stats.csv, tableS1_by_type.csv
OutputFiles stats_outputs(const BuildReport& report, const EncodedCorpus& encoded, const StatsConfig& config = {});

struct AnalysisConfig {
  std::string attribute = "toxicity";
  double threshold = 0.6;
  GroupBy group_by = GroupBy::kChannel;
  DensityOptions density;
  std::size_t workers = 1;
};

// fig2_daily_*.csv, fig3_density_*.{csv,json}, figS1_ccdf_*.csv, for all
// comments and per group. Groups are processed in parallel.
OutputFiles analysis_outputs(std::span<const Conversation> conversations, const AnalysisConfig& config);

// Serialized ensemble run: {"spec", "results"}.
nlohmann::json ensemble_document(const EnsembleSpec& spec, std::span<const EnsembleResult> results);
struct EnsembleDocument {
  nlohmann::json spec;
  std::vector<EnsembleResult> results;
};
EnsembleDocument parse_ensemble_document(const nlohmann::json& j);

// tableS2_fits.csv, fig5_emissions_rr.csv, fig5_rr_summary.csv, ensemble_summary.csv,
// and fig7_rr_by_label.csv when the groups are labels.
OutputFiles ensemble_outputs(std::span<const EnsembleResult> results, GroupBy group_by);

using SelectionByGroup = std::map<std::string, std::vector<SelectionRow>>;
nlohmann::json selection_document(const SelectionByGroup& rows);
SelectionByGroup parse_selection_document(const nlohmann::json& j);
// tableS2_selection.csv
OutputFiles selection_outputs(const SelectionByGroup& rows);

// planted_comparison.csv: recovered relative risks and emissions against
// the manifest, for every group that maps to exactly one planted model.
OutputFiles planted_outputs(const Manifest& manifest, std::span<const EnsembleResult> results, GroupBy group_by);

// Each file written with atomic_write under dir.
void write_outputs(const std::filesystem::path& dir, const OutputFiles& files);

}  // namespace toxhmm
