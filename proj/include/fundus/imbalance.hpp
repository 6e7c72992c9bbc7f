#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fundus/manifest.hpp"

namespace fundus {

struct ImbalanceReport {
    std::vector<std::string> labels;  // acronyms, aligned with per_label_ir
    std::vector<double> per_label_ir;
    double mean_ir = 1.0;
    double cvir = 0.0;
};

/**
 * IRLbl(j) = max_k count(k) / count(j), meanIR = mean of IRLbl and
 * CVIR = popstd(IRLbl) / meanIR, all over the given counts.
 * Throws ZeroCountLabel if any count is zero.
 */
ImbalanceReport imbalance_from_counts(const std::vector<std::size_t>& counts,
                                      std::vector<std::string> names = {});

/// Report over the manifest's label counts restricted to include_labels
/// (catalog indices). An empty selection means every label.
ImbalanceReport imbalance_report(const DatasetManifest& m, const std::vector<std::size_t>& include_labels = {});

std::string imbalance_report_json(const ImbalanceReport& r);

/// A powerset class key: the exact label bit pattern of a sample.
using Labelset = LabelVector;

/// Groups sample indices by exact label pattern; indices ascend within a group.
std::map<Labelset, std::vector<std::size_t>> lp_transform(const DatasetManifest& m);

/// Resampling budget: floor(|m| * percentage / 100).
std::size_t resample_budget(std::size_t n, double percentage);

/**
 * Label powerset random oversampling.
 *
 * Each round recomputes the mean group size and gives one clone to every
 * group whose size + 1 does not exceed that mean, largest deficit first,
 * until the budget runs out or no group qualifies. Clones are uniform picks
 * from the group's original members; their ids get a `-rN` suffix.
 */
DatasetManifest lp_ros(const DatasetManifest& m, double percentage, std::uint64_t seed);

/// Mirror of lp_ros: removes from groups whose size - 1 stays at or above
/// the current mean, largest excess first.
DatasetManifest lp_rus(const DatasetManifest& m, double percentage, std::uint64_t seed);

/**
 * Multi-label random oversampling driven by IRLbl.
 *
 * Each pass recomputes IRLbl/meanIR over labels with nonzero count; every
 * label with IRLbl > meanIR receives one clone of a random original sample
 * carrying it, in label order, until the budget is spent or no label
 * qualifies.
 */
DatasetManifest ml_ros(const DatasetManifest& m, double percentage, std::uint64_t seed);

/// Multi-label random undersampling: each pass removes one sample per label
/// with IRLbl < meanIR, drawn from samples whose positive labels are all such
/// majority labels.
DatasetManifest ml_rus(const DatasetManifest& m, double percentage, std::uint64_t seed);

}  // namespace fundus
