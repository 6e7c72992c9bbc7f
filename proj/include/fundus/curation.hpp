#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fundus/imaging.hpp"
#include "fundus/manifest.hpp"

namespace fundus {

/**
 * A manifest from one source corpus, labelled in that corpus' own
 * vocabulary. Source label sets need not contain NORMAL/OTHER, so they are
 * kept as plain names rather than a LabelCatalog.
 */
struct SourceManifest {
    std::string name;
    std::vector<std::string> label_names;
    std::vector<SampleRecord> samples;
};

/// Reads `id,filepath,<source labels...>`; label columns come from the header.
SourceManifest load_source_manifest(const std::filesystem::path& path, std::string name);

/// (source, source_label) -> target acronym.
class LabelMap {
public:
    void add(const std::string& source, const std::string& source_label, const std::string& target);
    const std::string* find(const std::string& source, const std::string& source_label) const;

    /// Target acronyms in first-appearance order.
    const std::vector<std::string>& targets() const noexcept { return targets_; }

private:
    std::map<std::pair<std::string, std::string>, std::string> entries_;
    std::vector<std::string> targets_;
};

/// CSV `source,source_label,target_label` with a header row.
LabelMap load_label_map(const std::filesystem::path& path);

/**
 * Concatenates source manifests onto one target catalog.
 *
 * Sample ids become `<source>_<id>`. A sample's target bit j is set iff any
 * of its positive source labels maps to j. Throws UnmappedLabel when a source
 * label column has no entry in the map (or maps to an unknown acronym).
 */
DatasetManifest merge(const std::vector<SourceManifest>& sources, const LabelCatalog& target,
                      const LabelMap& label_map);

struct FoldReport {
    std::vector<std::string> dropped_labels;
    std::size_t moved_samples = 0;
};

struct FoldResult {
    DatasetManifest manifest;
    FoldReport report;
};

/**
 * Removes every label other than NORMAL/OTHER whose positive count is below
 * min_count. Samples that carried a removed label gain the OTHER bit;
 * moved_samples counts them.
 */
FoldResult fold_rare_labels(const DatasetManifest& m, std::size_t min_count);

std::string fold_report_json(const FoldReport& report);

struct DropFraction {
    double fraction = 0.10;
};
struct ScoreThreshold {
    double threshold = 0.058;
};
using QualityFilterMode = std::variant<DropFraction, ScoreThreshold>;

/// DropFraction removes the floor(f*N) lowest scores (ties: id ascending);
/// ScoreThreshold removes scores strictly below t. Throws MissingScore.
DatasetManifest quality_filter(const DatasetManifest& m, const std::map<std::string, double>& scores,
                               const QualityFilterMode& mode);

struct QualityEntry {
    std::string id;
    QualityScore quality;
};

/// Quality report CSV `id,score,degenerate_flag`, rows sorted by descending
/// score (ties: id ascending). Scores use shortest round-trip form.
void write_quality_report(std::ostream& out, std::vector<QualityEntry> entries);
std::map<std::string, double> load_quality_scores(const std::filesystem::path& path);

struct SplitResult {
    DatasetManifest train;
    DatasetManifest validation;
};

/**
 * Iterative stratified train/validation split.
 *
 * Labels are visited in ascending order of positive count; each still
 * unassigned positive of the current label goes to the split with the larger
 * remaining quota for that label (ties: larger remaining total quota, then a
 * seeded coin). Samples without positives are assigned last by total quota.
 * Both outputs preserve input order.
 */
SplitResult split(const DatasetManifest& m, double val_fraction, std::uint64_t seed);

}  // namespace fundus
