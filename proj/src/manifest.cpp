#include "fundus/manifest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "fundus/error.hpp"

namespace fundus {

namespace {

constexpr std::string_view kModule = "manifest";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(kModule, code, detail); }

std::string row_tag(std::size_t row) { return "row " + std::to_string(row); }

const std::vector<LabelInfo>& default_rows() {
    static const std::vector<LabelInfo> rows = {
        {"DR", "Diabetic Retinopathy"},
        {"NORMAL", "Normal Retina"},
        {"MH", "Media Haze"},
        {"ODC", "Optic Disc Cupping"},
        {"TSLN", "Tessellation"},
        {"ARMD", "Age-Related Macular Degeneration"},
        {"DN", "Drusen"},
        {"MYA", "Myopia"},
        {"BRVO", "Branch Retinal Vein Occlusion"},
        {"ODP", "Optic Disc Pallor"},
        {"CRVO", "Central Retinal Vein Oclussion"},
        {"CNV", "Choroidal Neovascularization"},
        {"RS", "Retinitis"},
        {"ODE", "Optic Disc Edema"},
        {"LS", "Laser Scars"},
        {"CSR", "Central Serous Retinopathy"},
        {"HTR", "Hypertensive Retinopathy"},
        {"ASR", "Arteriosclerotic Retinopathy"},
        {"CRS", "Chorioretinitis"},
        {"OTHER", "Other Diseases"},
    };
    return rows;
}

std::string format_probability(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) fail(ErrorCode::IoError, "cannot format probability");
    return std::string(buf, end);
}

std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

LabelCatalog::LabelCatalog(std::vector<LabelInfo> labels, std::size_t normal_index,
                           std::size_t other_index)
    : labels_(std::move(labels)), normal_(normal_index), other_(other_index) {
    if (normal_ >= labels_.size() || other_ >= labels_.size())
        fail(ErrorCode::InvalidCatalog, "NORMAL/OTHER index out of range");
    if (normal_ == other_) fail(ErrorCode::InvalidCatalog, "NORMAL and OTHER must differ");
    std::unordered_set<std::string> seen;
    for (const auto& l : labels_) {
        if (l.acronym.empty()) fail(ErrorCode::InvalidCatalog, "empty acronym");
        if (l.acronym.find(',') != std::string::npos)
            fail(ErrorCode::InvalidCatalog, "acronym contains a comma: " + l.acronym);
        if (!seen.insert(l.acronym).second)
            fail(ErrorCode::InvalidCatalog, "duplicate acronym " + l.acronym);
    }
}

LabelCatalog LabelCatalog::from_acronyms(const std::vector<std::string>& acronyms) {
    std::vector<LabelInfo> rows;
    std::optional<std::size_t> normal, other;
    for (std::size_t i = 0; i < acronyms.size(); ++i) {
        LabelInfo info{acronyms[i], acronyms[i]};
        for (const auto& known : default_rows())
            if (known.acronym == acronyms[i]) info.full_name = known.full_name;
        if (acronyms[i] == "NORMAL") normal = i;
        if (acronyms[i] == "OTHER") other = i;
        rows.push_back(std::move(info));
    }
    if (!normal || !other) fail(ErrorCode::InvalidCatalog, "catalog needs NORMAL and OTHER labels");
    return LabelCatalog(std::move(rows), *normal, *other);
}

LabelCatalog load_label_catalog(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "row 0: empty catalog");
    const auto header = split_csv_line(line);
    if (header.size() != 2 || header[0] != "acronym" || header[1] != "full_name")
        fail(ErrorCode::MissingColumn, "row 0: header must be acronym,full_name");
    std::vector<LabelInfo> rows;
    std::optional<std::size_t> normal, other;
    for (std::size_t row = 1; std::getline(in, line); ++row) {
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 2) fail(ErrorCode::MalformedRow, row_tag(row));
        if (cells[0] == "NORMAL") normal = rows.size();
        if (cells[0] == "OTHER") other = rows.size();
        rows.push_back({std::move(cells[0]), std::move(cells[1])});
    }
    if (!normal || !other) fail(ErrorCode::InvalidCatalog, "catalog needs NORMAL and OTHER labels");
    return LabelCatalog(std::move(rows), *normal, *other);
}

LabelCatalog LabelCatalog::default_catalog() { return LabelCatalog(default_rows(), 1, 19); }

std::vector<std::string> LabelCatalog::acronyms() const {
    std::vector<std::string> out;
    out.reserve(labels_.size());
    for (const auto& l : labels_) out.push_back(l.acronym);
    return out;
}

std::optional<std::size_t> LabelCatalog::index_of(std::string_view acronym) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i].acronym == acronym) return i;
    return std::nullopt;
}

// ---------------------------------------------------------------------------

bool is_valid_id(std::string_view id) {
    if (id.empty()) return false;
    for (char c : id) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                        c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

DatasetManifest::DatasetManifest(LabelCatalog catalog, std::vector<SampleRecord> samples,
                                 std::optional<std::string> split_tag)
    : catalog_(std::move(catalog)), samples_(std::move(samples)), split_tag_(std::move(split_tag)) {
    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const auto& s = samples_[i];
        if (!is_valid_id(s.id)) fail(ErrorCode::InvalidId, "sample " + std::to_string(i) + " id '" + s.id + "'");
        if (!ids.insert(s.id).second)
            fail(ErrorCode::DuplicateId, "sample " + std::to_string(i) + " id '" + s.id + "'");
        if (s.labels.size() != catalog_.size())
            fail(ErrorCode::DimMismatch, "sample '" + s.id + "' label width " + std::to_string(s.labels.size()) +
                                             " != catalog " + std::to_string(catalog_.size()));
        for (auto b : s.labels)
            if (b > 1) fail(ErrorCode::NonBinaryCell, "sample '" + s.id + "'");
    }
}

std::optional<std::size_t> DatasetManifest::find(std::string_view id) const {
    for (std::size_t i = 0; i < samples_.size(); ++i)
        if (samples_[i].id == id) return i;
    return std::nullopt;
}

std::size_t DatasetManifest::degenerate_count() const {
    std::size_t n = 0;
    for (const auto& s : samples_) {
        bool any = false;
        for (auto b : s.labels) any = any || b != 0;
        if (!any) ++n;
    }
    return n;
}

DatasetManifest DatasetManifest::with_split_tag(std::optional<std::string> tag) const {
    DatasetManifest copy = *this;
    copy.split_tag_ = std::move(tag);
    return copy;
}

std::vector<std::size_t> label_counts(const DatasetManifest& m) {
    std::vector<std::size_t> counts(m.catalog().size(), 0);
    for (const auto& s : m.samples())
        for (std::size_t j = 0; j < counts.size(); ++j) counts[j] += s.labels[j];
    return counts;
}

// ---------------------------------------------------------------------------

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.emplace_back(line.substr(start));
            break;
        }
        cells.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

DatasetManifest read_manifest_csv(std::istream& in, const LabelCatalog& catalog) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "row 0: empty file, no header");
    const auto header = split_csv_line(line);
    const std::size_t width = 2 + catalog.size();
    if (header.size() < 2 || header[0] != "id" || header[1] != "filepath")
        fail(ErrorCode::MissingColumn, "row 0: header must start with id,filepath");
    for (std::size_t j = 0; j < catalog.size(); ++j) {
        if (header.size() <= 2 + j)
            fail(ErrorCode::MissingColumn, "row 0: missing label column " + catalog.acronym(j));
        if (header[2 + j] != catalog.acronym(j))
            fail(ErrorCode::MissingColumn, "row 0: column " + std::to_string(2 + j) + " is '" + header[2 + j] +
                                               "', expected " + catalog.acronym(j));
    }
    if (header.size() != width) fail(ErrorCode::MissingColumn, "row 0: unexpected extra columns");

    std::vector<SampleRecord> samples;
    std::unordered_set<std::string> ids;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != width)
            fail(ErrorCode::MalformedRow, row_tag(row) + ": expected " + std::to_string(width) + " cells");
        SampleRecord rec{cells[0], cells[1], LabelVector(catalog.size(), 0)};
        if (!is_valid_id(rec.id)) fail(ErrorCode::InvalidId, row_tag(row) + ": id '" + rec.id + "'");
        if (!ids.insert(rec.id).second) fail(ErrorCode::DuplicateId, row_tag(row) + ": id '" + rec.id + "'");
        for (std::size_t j = 0; j < catalog.size(); ++j) {
            const auto& cell = cells[2 + j];
            if (cell == "1") rec.labels[j] = 1;
            else if (cell != "0")
                fail(ErrorCode::NonBinaryCell, row_tag(row) + ": column " + catalog.acronym(j) + " = '" + cell + "'");
        }
        samples.push_back(std::move(rec));
    }
    return DatasetManifest(catalog, std::move(samples));
}

void write_manifest_csv(std::ostream& out, const DatasetManifest& m) {
    out << "id,filepath";
    for (const auto& l : m.catalog().labels()) out << ',' << l.acronym;
    out << '\n';
    for (const auto& s : m.samples()) {
        out << s.id << ',' << s.image_path;
        for (auto b : s.labels) out << ',' << (b ? '1' : '0');
        out << '\n';
    }
}

DatasetManifest load_manifest(const std::filesystem::path& path, const LabelCatalog& catalog) {
    auto in = open_for_read(path);
    return read_manifest_csv(in, catalog);
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_manifest_csv(out, m);
    if (!out) fail(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<std::string> read_manifest_header(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "row 0: empty file, no header");
    auto cells = split_csv_line(line);
    if (cells.size() < 2) fail(ErrorCode::MissingColumn, "row 0: header too short");
    std::size_t skip = 1;
    if (cells[0] == "id" && cells[1] == "filepath") skip = 2;
    return {cells.begin() + static_cast<std::ptrdiff_t>(skip), cells.end()};
}

// ---------------------------------------------------------------------------

PredictionMatrix::PredictionMatrix(std::vector<std::string> ids, std::size_t n_labels, std::vector<double> probs)
    : ids_(std::move(ids)), n_labels_(n_labels), probs_(std::move(probs)) {
    if (probs_.size() != ids_.size() * n_labels_)
        fail(ErrorCode::DimMismatch, "probability buffer does not match ids x labels");
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        const double v = probs_[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            fail(ErrorCode::OutOfRangeProbability,
                 "sample '" + ids_[i / n_labels_] + "' column " + std::to_string(i % n_labels_));
    }
}

std::optional<std::size_t> PredictionMatrix::find(std::string_view id) const {
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (ids_[i] == id) return i;
    return std::nullopt;
}

PredictionMatrix read_predictions_csv(std::istream& in, const LabelCatalog& catalog) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "row 0: empty file, no header");
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "id") fail(ErrorCode::MissingColumn, "row 0: header must start with id");
    for (std::size_t j = 0; j < catalog.size(); ++j) {
        if (header.size() <= 1 + j || header[1 + j] != catalog.acronym(j))
            fail(ErrorCode::MissingColumn, "row 0: expected column " + catalog.acronym(j));
    }
    if (header.size() != catalog.size() + 1) fail(ErrorCode::MissingColumn, "row 0: unexpected extra columns");

    std::vector<std::string> ids;
    std::vector<double> probs;
    std::unordered_set<std::string> seen;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != catalog.size() + 1)
            fail(ErrorCode::MalformedRow, row_tag(row) + ": wrong cell count");
        if (!seen.insert(cells[0]).second) fail(ErrorCode::DuplicateId, row_tag(row) + ": id '" + cells[0] + "'");
        for (std::size_t j = 0; j < catalog.size(); ++j) {
            const auto& cell = cells[1 + j];
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size())
                fail(ErrorCode::MalformedRow, row_tag(row) + ": not a number '" + cell + "'");
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                fail(ErrorCode::OutOfRangeProbability, row_tag(row) + ": column " + catalog.acronym(j) + " = " + cell);
            probs.push_back(v);
        }
        ids.push_back(std::move(cells[0]));
    }
    return PredictionMatrix(std::move(ids), catalog.size(), std::move(probs));
}

void write_predictions_csv(std::ostream& out, const PredictionMatrix& p, const LabelCatalog& catalog) {
    if (p.cols() != catalog.size()) fail(ErrorCode::DimMismatch, "prediction width != catalog size");
    out << "id";
    for (const auto& l : catalog.labels()) out << ',' << l.acronym;
    out << '\n';
    for (std::size_t i = 0; i < p.rows(); ++i) {
        out << p.ids()[i];
        for (double v : p.row(i)) out << ',' << format_probability(v);
        out << '\n';
    }
}

PredictionMatrix load_predictions(const std::filesystem::path& path, const LabelCatalog& catalog) {
    auto in = open_for_read(path);
    return read_predictions_csv(in, catalog);
}

void save_predictions(const PredictionMatrix& p, const LabelCatalog& catalog, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_predictions_csv(out, p, catalog);
    if (!out) fail(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace fundus
