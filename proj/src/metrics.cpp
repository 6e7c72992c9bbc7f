#include "fundus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fundus/error.hpp"

namespace fundus {

namespace {

constexpr std::string_view kModule = "metrics";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(kModule, code, detail); }

void check_lengths(std::span<const std::uint8_t> y, std::span<const double> p) {
    if (y.size() != p.size())
        fail(ErrorCode::LengthMismatch, std::to_string(y.size()) + " labels vs " + std::to_string(p.size()) + " scores");
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

PrecisionRecallF1 binary_prf(std::span<const std::uint8_t> y, std::span<const double> p, double threshold) {
    check_lengths(y, p);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const bool pred = p[i] >= threshold;
        if (pred && y[i]) ++tp;
        else if (pred) ++fp;
        else if (y[i]) ++fn;
    }
    PrecisionRecallF1 r;
    r.precision = ratio(double(tp), double(tp + fp));
    r.recall = ratio(double(tp), double(tp + fn));
    r.f1 = ratio(2.0 * double(tp), double(2 * tp + fp + fn));
    return r;
}

double average_precision(std::span<const std::uint8_t> y, std::span<const double> p) {
    check_lengths(y, p);
    const auto positives = static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](auto v) { return v != 0; }));
    if (positives == 0) fail(ErrorCode::NoPositives, "average precision needs at least one positive");
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < order.size(); ++k)
        if (y[order[k]]) {
            ++hits;
            sum += double(hits) / double(k + 1);
        }
    return sum / double(positives);
}

double auc(std::span<const std::uint8_t> y, std::span<const double> p) {
    check_lengths(y, p);
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

    // Twice the Mann-Whitney U, kept in integers so the result is the exact
    // ratio (2*wins + ties) / (2*P*N).
    std::uint64_t twice_u = 0, neg_below = 0, pos_total = 0, neg_total = 0;
    for (std::size_t k = 0; k < order.size();) {
        std::size_t e = k;
        std::uint64_t pos = 0, neg = 0;
        while (e < order.size() && p[order[e]] == p[order[k]]) {
            if (y[order[e]]) ++pos;
            else ++neg;
            ++e;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        pos_total += pos;
        neg_total += neg;
        k = e;
    }
    if (pos_total == 0 || neg_total == 0) fail(ErrorCode::SingleClass, "AUC needs both classes");
    return double(twice_u) / double(2 * pos_total * neg_total);
}

Composite composite_scores(double ml_map, double ml_auc, double bin_auc) {
    Composite c;
    c.ml_score = (ml_map + ml_auc) / 2.0;
    c.model_score = (c.ml_score + bin_auc) / 2.0;
    return c;
}

// ---------------------------------------------------------------------------

MetricReport riadd_report(const DatasetManifest& m, const PredictionMatrix& p, double threshold) {
    const auto& cat = m.catalog();
    if (p.cols() != cat.size()) fail(ErrorCode::DimMismatch, "prediction width != catalog size");
    std::vector<std::size_t> row_of(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto r = p.find(m[i].id);
        if (!r) fail(ErrorCode::LengthMismatch, "no prediction for sample '" + m[i].id + "'");
        row_of[i] = *r;
    }

    MetricReport report;
    double sum_f1 = 0.0, sum_ap = 0.0, sum_auc = 0.0;
    std::size_t n_f1 = 0, n_ap = 0, n_auc = 0;
    std::vector<std::uint8_t> y(m.size());
    std::vector<double> s(m.size());
    for (std::size_t j = 0; j < cat.size(); ++j) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            y[i] = m[i].labels[j];
            s[i] = p.at(row_of[i], j);
        }
        LabelMetrics lm;
        lm.acronym = cat.acronym(j);
        lm.positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
        lm.prf = binary_prf(y, s, threshold);
        if (lm.positives > 0) lm.ap = average_precision(y, s);
        if (lm.positives > 0 && lm.positives < y.size()) lm.auc = auc(y, s);
        if (!lm.ap || !lm.auc) report.undefined.push_back(lm.acronym);

        if (j == cat.normal_index()) {
            report.bin_f1 = lm.prf.f1;
            report.bin_auc_defined = lm.auc.has_value();
            report.bin_auc = lm.auc.value_or(0.0);
        } else {
            sum_f1 += lm.prf.f1;
            ++n_f1;
            if (lm.ap) sum_ap += *lm.ap, ++n_ap;
            if (lm.auc) sum_auc += *lm.auc, ++n_auc;
        }
        report.per_label.push_back(std::move(lm));
    }
    report.ml_f1 = ratio(sum_f1, double(n_f1));
    report.ml_map = ratio(sum_ap, double(n_ap));
    report.ml_auc = ratio(sum_auc, double(n_auc));
    const auto c = composite_scores(report.ml_map, report.ml_auc, report.bin_auc);
    report.ml_score = c.ml_score;
    report.model_score = c.model_score;
    return report;
}

std::string metric_report_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["ml_f1"] = r.ml_f1;
    j["ml_map"] = r.ml_map;
    j["ml_auc"] = r.ml_auc;
    j["ml_score"] = r.ml_score;
    j["bin_auc"] = r.bin_auc;
    j["bin_f1"] = r.bin_f1;
    j["model_score"] = r.model_score;
    j["bin_auc_defined"] = r.bin_auc_defined;
    j["undefined_labels"] = r.undefined;
    auto& labels = j["per_label"] = nlohmann::ordered_json::array();
    for (const auto& lm : r.per_label) {
        nlohmann::ordered_json e;
        e["label"] = lm.acronym;
        e["positives"] = lm.positives;
        e["precision"] = lm.prf.precision;
        e["recall"] = lm.prf.recall;
        e["f1"] = lm.prf.f1;
        e["ap"] = lm.ap ? nlohmann::ordered_json(*lm.ap) : nlohmann::ordered_json(nullptr);
        e["auc"] = lm.auc ? nlohmann::ordered_json(*lm.auc) : nlohmann::ordered_json(nullptr);
        labels.push_back(std::move(e));
    }
    return j.dump(2);
}

std::string metric_report_table(const MetricReport& r) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-8s %-8s %-8s %-8s %-8s %-8s %-8s\n", "ML_F1", "ML_mAP", "ML_AUC", "ML_Score",
                  "Bin_AUC", "Bin_F1", "Model_Score");
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-8.3f %-8.3f %-8.3f %-8.3f %-8.3f %-8.3f %-8.3f\n", r.ml_f1, r.ml_map, r.ml_auc,
                  r.ml_score, r.bin_auc, r.bin_f1, r.model_score);
    out << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%-8s %9s %9s %9s %9s %9s %9s\n", "Label", "Positives", "Precision", "Recall", "F1",
                  "AP", "AUC");
    out << buf;
    auto opt = [](const std::optional<double>& v) {
        char b[32];
        if (v) std::snprintf(b, sizeof(b), "%.3f", *v);
        else std::snprintf(b, sizeof(b), "n/a");
        return std::string(b);
    };
    for (const auto& lm : r.per_label) {
        std::snprintf(buf, sizeof(buf), "%-8s %9zu %9.3f %9.3f %9.3f %9s %9s\n", lm.acronym.c_str(), lm.positives,
                      lm.prf.precision, lm.prf.recall, lm.prf.f1, opt(lm.ap).c_str(), opt(lm.auc).c_str());
        out << buf;
    }
    return out.str();
}

}  // namespace fundus
