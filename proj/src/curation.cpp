#include "fundus/curation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "fundus/error.hpp"
#include "fundus/rng.hpp"

namespace fundus {

namespace {

constexpr std::string_view kModule = "curation";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(kModule, code, detail); }

}  // namespace

SourceManifest load_source_manifest(const std::filesystem::path& path, std::string name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "row 0: empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "id" || header[1] != "filepath")
        fail(ErrorCode::MissingColumn, "row 0: header must start with id,filepath");
    SourceManifest src{std::move(name), {header.begin() + 2, header.end()}, {}};
    std::unordered_set<std::string> ids;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) fail(ErrorCode::MalformedRow, "row " + std::to_string(row));
        SampleRecord rec{cells[0], cells[1], LabelVector(src.label_names.size(), 0)};
        if (!is_valid_id(rec.id)) fail(ErrorCode::InvalidId, "row " + std::to_string(row) + ": '" + rec.id + "'");
        if (!ids.insert(rec.id).second)
            fail(ErrorCode::DuplicateId, "row " + std::to_string(row) + ": '" + rec.id + "'");
        for (std::size_t j = 0; j < src.label_names.size(); ++j) {
            if (cells[2 + j] == "1") rec.labels[j] = 1;
            else if (cells[2 + j] != "0")
                fail(ErrorCode::NonBinaryCell, "row " + std::to_string(row) + ": column " + src.label_names[j]);
        }
        src.samples.push_back(std::move(rec));
    }
    return src;
}

// ---------------------------------------------------------------------------

void LabelMap::add(const std::string& source, const std::string& source_label, const std::string& target) {
    entries_[{source, source_label}] = target;
    if (std::find(targets_.begin(), targets_.end(), target) == targets_.end()) targets_.push_back(target);
}

const std::string* LabelMap::find(const std::string& source, const std::string& source_label) const {
    auto it = entries_.find({source, source_label});
    return it == entries_.end() ? nullptr : &it->second;
}

LabelMap load_label_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "row 0: empty label map");
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"source", "source_label", "target_label"})
        fail(ErrorCode::MissingColumn, "row 0: header must be source,source_label,target_label");
    LabelMap map;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 3) fail(ErrorCode::MalformedRow, "row " + std::to_string(row));
        map.add(cells[0], cells[1], cells[2]);
    }
    return map;
}

DatasetManifest merge(const std::vector<SourceManifest>& sources, const LabelCatalog& target,
                      const LabelMap& label_map) {
    std::vector<SampleRecord> out;
    for (const auto& src : sources) {
        std::vector<std::size_t> column_target(src.label_names.size());
        for (std::size_t j = 0; j < src.label_names.size(); ++j) {
            const std::string* t = label_map.find(src.name, src.label_names[j]);
            if (!t) fail(ErrorCode::UnmappedLabel, src.name + "/" + src.label_names[j]);
            const auto idx = target.index_of(*t);
            if (!idx) fail(ErrorCode::UnmappedLabel, src.name + "/" + src.label_names[j] + " -> unknown '" + *t + "'");
            column_target[j] = *idx;
        }
        for (const auto& s : src.samples) {
            SampleRecord rec{src.name + "_" + s.id, s.image_path, LabelVector(target.size(), 0)};
            for (std::size_t j = 0; j < s.labels.size(); ++j)
                if (s.labels[j]) rec.labels[column_target[j]] = 1;
            out.push_back(std::move(rec));
        }
    }
    return DatasetManifest(target, std::move(out));
}

// ---------------------------------------------------------------------------

FoldResult fold_rare_labels(const DatasetManifest& m, std::size_t min_count) {
    if (min_count < 1) fail(ErrorCode::InvalidArgument, "min_count must be >= 1");
    const auto& cat = m.catalog();
    const auto counts = label_counts(m);

    std::vector<std::size_t> kept;
    std::vector<bool> dropped(cat.size(), false);
    FoldReport report;
    for (std::size_t j = 0; j < cat.size(); ++j) {
        const bool protected_label = j == cat.normal_index() || j == cat.other_index();
        if (!protected_label && counts[j] < min_count) {
            dropped[j] = true;
            report.dropped_labels.push_back(cat.acronym(j));
        } else {
            kept.push_back(j);
        }
    }
    if (report.dropped_labels.empty()) return {m, report};

    std::vector<LabelInfo> rows;
    std::size_t normal = 0, other = 0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        if (kept[k] == cat.normal_index()) normal = k;
        if (kept[k] == cat.other_index()) other = k;
        rows.push_back(cat.labels()[kept[k]]);
    }
    LabelCatalog folded(std::move(rows), normal, other);

    std::vector<SampleRecord> samples;
    samples.reserve(m.size());
    for (const auto& s : m.samples()) {
        SampleRecord rec{s.id, s.image_path, LabelVector(kept.size(), 0)};
        for (std::size_t k = 0; k < kept.size(); ++k) rec.labels[k] = s.labels[kept[k]];
        bool moved = false;
        for (std::size_t j = 0; j < cat.size(); ++j) moved = moved || (dropped[j] && s.labels[j]);
        if (moved) {
            rec.labels[other] = 1;
            ++report.moved_samples;
        }
        samples.push_back(std::move(rec));
    }
    return {DatasetManifest(std::move(folded), std::move(samples), m.split_tag()), report};
}

std::string fold_report_json(const FoldReport& report) {
    nlohmann::json j;
    j["dropped_labels"] = report.dropped_labels;
    j["moved_samples"] = report.moved_samples;
    return j.dump(2);
}

// ---------------------------------------------------------------------------

DatasetManifest quality_filter(const DatasetManifest& m, const std::map<std::string, double>& scores,
                               const QualityFilterMode& mode) {
    std::vector<double> score(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        auto it = scores.find(m[i].id);
        if (it == scores.end()) fail(ErrorCode::MissingScore, "no score for '" + m[i].id + "'");
        score[i] = it->second;
    }

    std::vector<bool> drop(m.size(), false);
    if (const auto* frac = std::get_if<DropFraction>(&mode)) {
        if (frac->fraction < 0.0 || frac->fraction > 1.0) fail(ErrorCode::InvalidArgument, "drop fraction outside [0,1]");
        const auto n_drop = static_cast<std::size_t>(std::floor(frac->fraction * static_cast<double>(m.size())));
        std::vector<std::size_t> order(m.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (score[a] != score[b]) return score[a] < score[b];
            return m[a].id < m[b].id;
        });
        for (std::size_t k = 0; k < n_drop; ++k) drop[order[k]] = true;
    } else {
        const double t = std::get<ScoreThreshold>(mode).threshold;
        for (std::size_t i = 0; i < m.size(); ++i) drop[i] = score[i] < t;
    }

    std::vector<SampleRecord> kept;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!drop[i]) kept.push_back(m[i]);
    return DatasetManifest(m.catalog(), std::move(kept), m.split_tag());
}

// ---------------------------------------------------------------------------

SplitResult split(const DatasetManifest& m, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail(ErrorCode::InvalidArgument, "val_fraction must be in (0,1)");
    const std::size_t n = m.size(), L = m.catalog().size();
    Rng rng(seed);

    // Index 0 = train, 1 = validation.
    const double frac[2] = {1.0 - val_fraction, val_fraction};
    double want_total[2] = {frac[0] * double(n), frac[1] * double(n)};
    const auto counts = label_counts(m);
    std::vector<double> want_label[2];
    for (int s = 0; s < 2; ++s) {
        want_label[s].resize(L);
        for (std::size_t j = 0; j < L; ++j) want_label[s][j] = frac[s] * double(counts[j]);
    }

    std::vector<int> assignment(n, -1);
    std::vector<std::size_t> remaining = counts;

    auto assign = [&](std::size_t i, int s) {
        assignment[i] = s;
        want_total[s] -= 1.0;
        for (std::size_t j = 0; j < L; ++j)
            if (m[i].labels[j]) {
                want_label[s][j] -= 1.0;
                --remaining[j];
            }
    };

    while (true) {
        std::size_t label = L;
        for (std::size_t j = 0; j < L; ++j)
            if (remaining[j] > 0 && (label == L || remaining[j] < remaining[label])) label = j;
        if (label == L) break;

        std::vector<std::size_t> pending;
        for (std::size_t i = 0; i < n; ++i)
            if (assignment[i] < 0 && m[i].labels[label]) pending.push_back(i);
        rng.shuffle(pending.begin(), pending.end());

        for (std::size_t i : pending) {
            int s;
            if (want_label[0][label] != want_label[1][label]) s = want_label[0][label] > want_label[1][label] ? 0 : 1;
            else if (want_total[0] != want_total[1]) s = want_total[0] > want_total[1] ? 0 : 1;
            else s = static_cast<int>(rng.index(2));
            assign(i, s);
        }
    }

    std::vector<std::size_t> unlabelled;
    for (std::size_t i = 0; i < n; ++i)
        if (assignment[i] < 0) unlabelled.push_back(i);
    rng.shuffle(unlabelled.begin(), unlabelled.end());
    for (std::size_t i : unlabelled) {
        int s;
        if (want_total[0] != want_total[1]) s = want_total[0] > want_total[1] ? 0 : 1;
        else s = static_cast<int>(rng.index(2));
        assign(i, s);
    }

    std::vector<SampleRecord> parts[2];
    for (std::size_t i = 0; i < n; ++i) parts[assignment[i]].push_back(m[i]);
    return {DatasetManifest(m.catalog(), std::move(parts[0]), "train"),
            DatasetManifest(m.catalog(), std::move(parts[1]), "validation")};
}

void write_quality_report(std::ostream& out, std::vector<QualityEntry> entries) {
    std::sort(entries.begin(), entries.end(), [](const QualityEntry& a, const QualityEntry& b) {
        if (a.quality.score != b.quality.score) return a.quality.score > b.quality.score;
        return a.id < b.id;
    });
    out << "id,score,degenerate_flag\n";
    char buf[64];
    for (const auto& e : entries) {
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), e.quality.score);
        if (ec != std::errc()) fail(ErrorCode::IoError, "cannot format score");
        out << e.id << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << ','
            << (e.quality.degenerate ? 1 : 0) << '\n';
    }
}

std::map<std::string, double> load_quality_scores(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "row 0: empty quality report");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "id" || header[1] != "score")
        fail(ErrorCode::MissingColumn, "row 0: header must start with id,score");
    std::map<std::string, double> scores;
    for (std::size_t row = 1; std::getline(in, line); ++row) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) fail(ErrorCode::MalformedRow, "row " + std::to_string(row));
        double v = 0;
        const auto& c = cells[1];
        auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
        if (ec != std::errc() || ptr != c.data() + c.size() || !std::isfinite(v))
            fail(ErrorCode::MalformedRow, "row " + std::to_string(row) + ": score '" + c + "'");
        if (!scores.emplace(cells[0], v).second)
            fail(ErrorCode::DuplicateId, "row " + std::to_string(row) + ": '" + cells[0] + "'");
    }
    return scores;
}

}  // namespace fundus
