#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fundus {

/// One row of a label catalog.
struct LabelInfo {
    std::string acronym;
    std::string full_name;

    bool operator==(const LabelInfo&) const = default;
};

/**
 * Ordered set of label names with a designated NORMAL and OTHER label.
 *
 * Acronyms are unique and non-empty; NORMAL and OTHER are distinct valid
 * indices. Construction validates and throws Error(InvalidCatalog).
 */
class LabelCatalog {
public:
    LabelCatalog(std::vector<LabelInfo> labels, std::size_t normal_index, std::size_t other_index);

    /// Builds a catalog from acronyms, locating NORMAL and OTHER by name.
    /// Full names are filled from the default catalog where known.
    static LabelCatalog from_acronyms(const std::vector<std::string>& acronyms);

    /// The 20-label retinal disease catalog in its canonical order.
    static LabelCatalog default_catalog();

    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<LabelInfo>& labels() const noexcept { return labels_; }
    const std::string& acronym(std::size_t i) const { return labels_.at(i).acronym; }
    std::vector<std::string> acronyms() const;
    std::optional<std::size_t> index_of(std::string_view acronym) const;
    std::size_t normal_index() const noexcept { return normal_; }
    std::size_t other_index() const noexcept { return other_; }

    bool operator==(const LabelCatalog&) const = default;

private:
    std::vector<LabelInfo> labels_;
    std::size_t normal_;
    std::size_t other_;
};

// Catalog CSV: acronym,full_name with a header row; NORMAL and OTHER required.
LabelCatalog load_label_catalog(const std::filesystem::path& path);

/// Binary label vector; one byte per label, each 0 or 1.
using LabelVector = std::vector<std::uint8_t>;

struct SampleRecord {
    std::string id;
    std::string image_path;
    LabelVector labels;

    bool operator==(const SampleRecord&) const = default;
};

/// Ids are restricted to [A-Za-z0-9_-] so the CSV form never needs quoting.
bool is_valid_id(std::string_view id);

/**
 * An ordered list of labelled samples over a catalog.
 *
 * Immutable after construction. The constructor enforces unique ids and
 * label vectors of catalog width; records with no positive label are kept
 * and counted by degenerate_count().
 */
class DatasetManifest {
public:
    explicit DatasetManifest(LabelCatalog catalog,
                             std::vector<SampleRecord> samples = {},
                             std::optional<std::string> split_tag = std::nullopt);

    const LabelCatalog& catalog() const noexcept { return catalog_; }
    const std::vector<SampleRecord>& samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const SampleRecord& operator[](std::size_t i) const { return samples_[i]; }
    const std::optional<std::string>& split_tag() const noexcept { return split_tag_; }
    std::optional<std::size_t> find(std::string_view id) const;

    /// Number of records whose label vector is all zero.
    std::size_t degenerate_count() const;

    DatasetManifest with_split_tag(std::optional<std::string> tag) const;

    bool operator==(const DatasetManifest&) const = default;

private:
    LabelCatalog catalog_;
    std::vector<SampleRecord> samples_;
    std::optional<std::string> split_tag_;
};

std::vector<std::size_t> label_counts(const DatasetManifest& m);

// Manifest CSV: id,filepath,<acronyms...>; LF line endings, no quoting.
DatasetManifest read_manifest_csv(std::istream& in, const LabelCatalog& catalog);
void write_manifest_csv(std::ostream& out, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path, const LabelCatalog& catalog);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Reads only the header of a manifest CSV and returns its label acronyms.
std::vector<std::string> read_manifest_header(const std::filesystem::path& path);

/**
 * Per-sample probabilities aligned to a manifest by id.
 *
 * Row-major |ids| x n_labels; every entry finite and in [0, 1]
 * (Error(OutOfRangeProbability) otherwise).
 */
class PredictionMatrix {
public:
    PredictionMatrix(std::vector<std::string> ids, std::size_t n_labels, std::vector<double> probs);

    std::size_t rows() const noexcept { return ids_.size(); }
    std::size_t cols() const noexcept { return n_labels_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    double at(std::size_t row, std::size_t col) const { return probs_[row * n_labels_ + col]; }
    std::span<const double> row(std::size_t r) const {
        return {probs_.data() + r * n_labels_, n_labels_};
    }
    const std::vector<double>& values() const noexcept { return probs_; }
    std::optional<std::size_t> find(std::string_view id) const;

    bool operator==(const PredictionMatrix&) const = default;

private:
    std::vector<std::string> ids_;
    std::size_t n_labels_;
    std::vector<double> probs_;
};

// Prediction CSV: id,<acronyms...>; values written in shortest round-trip form.
PredictionMatrix read_predictions_csv(std::istream& in, const LabelCatalog& catalog);
void write_predictions_csv(std::ostream& out, const PredictionMatrix& p, const LabelCatalog& catalog);
PredictionMatrix load_predictions(const std::filesystem::path& path, const LabelCatalog& catalog);
void save_predictions(const PredictionMatrix& p, const LabelCatalog& catalog,
                      const std::filesystem::path& path);

/// Splits one CSV line on commas; a trailing '\r' is stripped.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace fundus
