#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fundus/curation.hpp"
#include "fundus/manifest.hpp"
#include "fundus/rng.hpp"

namespace fundus::testing {

/// Per-label totals of the 20-label default catalog, in catalog order.
const std::vector<std::size_t>& table2_totals();

/// Per-label validation counts published alongside the totals.
const std::vector<std::size_t>& table2_validation();

/**
 * 2208 samples over the default catalog whose per-label counts equal
 * table2_totals(): 493 NORMAL-only samples, then disease positives dealt
 * out so that 589 samples carry two labels.
 */
DatasetManifest table2_manifest();

/// Three synthetic source corpora sized 143 / 388 / 1920 plus everything
/// needed to assemble them into the default catalog.
struct ThreeSourceFixture {
    std::vector<SourceManifest> sources;
    LabelMap label_map;
    LabelCatalog target;  // 52 disease labels + NORMAL + OTHER
    std::map<std::string, double> scores;  // keyed by merged id
};

ThreeSourceFixture three_source_fixture(std::uint64_t seed = 7);

/// Writes the fixture as source CSVs, label map and score file into `dir`.
/// Returns the --source arguments (`name=path`).
std::vector<std::string> write_three_source_fixture(const ThreeSourceFixture& fx, const std::filesystem::path& dir);

/// Catalog with `n` disease labels L0.. plus NORMAL and OTHER at the end.
LabelCatalog small_catalog(std::size_t n_disease);

/// Random multi-label manifest; each bit is set with probability `density`.
DatasetManifest random_manifest(Rng& rng, std::size_t n, std::size_t n_labels, double density);

/// Manifest whose samples each carry exactly one label, with the given
/// per-label counts over small_catalog(counts.size() - 2).
DatasetManifest single_label_manifest(const std::vector<std::size_t>& counts);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace fundus::testing
