#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fundus/manifest.hpp"

namespace fundus {

struct PrecisionRecallF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Predictions are p >= threshold. Any 0/0 ratio is reported as 0.
PrecisionRecallF1 binary_prf(std::span<const std::uint8_t> y, std::span<const double> p, double threshold = 0.5);

/**
 * Non-interpolated average precision.
 *
 * Scores are ranked descending with ties broken by ascending index; AP is
 * the mean of precision@k over the ranks k that hold a positive.
 * Throws NoPositives, LengthMismatch.
 */
double average_precision(std::span<const std::uint8_t> y, std::span<const double> p);

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half. Throws SingleClass, LengthMismatch.
double auc(std::span<const std::uint8_t> y, std::span<const double> p);

struct Composite {
    double ml_score = 0.0;
    double model_score = 0.0;
};

/// ml_score = (ml_map + ml_auc) / 2; model_score = (ml_score + bin_auc) / 2.
Composite composite_scores(double ml_map, double ml_auc, double bin_auc);

struct LabelMetrics {
    std::string acronym;
    std::size_t positives = 0;
    PrecisionRecallF1 prf;
    std::optional<double> ap;   // empty when the label has no positives
    std::optional<double> auc;  // empty when the label is single-class
};

struct MetricReport {
    std::vector<LabelMetrics> per_label;
    double ml_f1 = 0.0;
    double ml_map = 0.0;
    double ml_auc = 0.0;
    double ml_score = 0.0;
    double bin_auc = 0.0;
    double bin_f1 = 0.0;
    double model_score = 0.0;
    /// Acronyms whose AP or AUC was undefined and excluded from the means.
    std::vector<std::string> undefined;
    bool bin_auc_defined = true;
};

/**
 * RIADD-style report. Predictions are aligned to the manifest by id.
 * ML_* average over every label except NORMAL; Bin_* come from NORMAL.
 * Labels with undefined AP/AUC are left out of the affected mean and listed
 * in `undefined`.
 */
MetricReport riadd_report(const DatasetManifest& m, const PredictionMatrix& p, double threshold = 0.5);

std::string metric_report_json(const MetricReport& r);

/// Aligned text table: summary row with ML/Bin columns, then per-label rows.
std::string metric_report_table(const MetricReport& r);

}  // namespace fundus
