#include "doctest.h"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "fundus/curation.hpp"
#include "fundus/error.hpp"

using namespace fundus;
using fundus::testing::small_catalog;

namespace {

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

LabelVector bits(std::size_t n, std::initializer_list<std::size_t> on) {
    LabelVector v(n, 0);
    for (auto j : on) v[j] = 1;
    return v;
}

}  // namespace

TEST_CASE("merge concatenates with namespaced ids and remapped bits") {
    const auto target = LabelCatalog::from_acronyms({"DR", "MH", "NORMAL", "OTHER"});
    SourceManifest a{"ARIA", {"dr", "healthy"}, {{"1", "a/1.png", {1, 0}}, {"2", "a/2.png", {0, 1}}}};
    SourceManifest b{"STARE", {"mac", "RARE_X"}, {{"1", "s/1.png", {1, 1}}, {"9", "s/9.png", {0, 1}}}};
    LabelMap map;
    map.add("ARIA", "dr", "DR");
    map.add("ARIA", "healthy", "NORMAL");
    map.add("STARE", "mac", "MH");
    map.add("STARE", "RARE_X", "OTHER");
    const auto m = merge({a, b}, target, map);
    REQUIRE(m.size() == 4);
    CHECK(m[0].id == "ARIA_1");
    CHECK(m[0].labels == bits(4, {0}));
    CHECK(m[1].labels == bits(4, {2}));
    CHECK(m[2].id == "STARE_1");
    CHECK(m[2].labels == bits(4, {1, 3}));
    CHECK(m[3].labels == bits(4, {3}));  // RARE_X -> OTHER
    CHECK(m[3].image_path == "s/9.png");
}

TEST_CASE("merge: unmapped or unknown target label") {
    const auto target = LabelCatalog::from_acronyms({"DR", "NORMAL", "OTHER"});
    SourceManifest a{"A", {"dr", "mystery"}, {{"1", "", {1, 0}}}};
    LabelMap map;
    map.add("A", "dr", "DR");
    CHECK(code_of([&] { merge({a}, target, map); }) == ErrorCode::UnmappedLabel);
    map.add("A", "mystery", "NOT_IN_CATALOG");
    CHECK(code_of([&] { merge({a}, target, map); }) == ErrorCode::UnmappedLabel);
}

TEST_CASE("label map and source manifest files") {
    const auto dir = fundus::testing::temp_dir("curation");
    {
        std::ofstream out(dir / "map.csv");
        out << "source,source_label,target_label\nA,x,DR\nA,y,OTHER\nB,z,DR\n";
        std::ofstream src(dir / "a.csv");
        src << "id,filepath,x,y\n1,p1.png,1,0\n2,p2.png,0,1\n";
    }
    const auto map = load_label_map(dir / "map.csv");
    REQUIRE(map.find("A", "y") != nullptr);
    CHECK(*map.find("A", "y") == "OTHER");
    CHECK(map.find("B", "y") == nullptr);
    CHECK(map.targets() == std::vector<std::string>{"DR", "OTHER"});
    const auto s = load_source_manifest(dir / "a.csv", "A");
    CHECK(s.label_names == std::vector<std::string>{"x", "y"});
    CHECK(s.samples.size() == 2);
    CHECK(s.samples[1].labels == LabelVector{0, 1});
    std::filesystem::remove_all(dir);
}

TEST_CASE("fold: direct threshold") {
    const auto cat = LabelCatalog::from_acronyms({"A", "B", "NORMAL", "OTHER"});
    std::vector<SampleRecord> s;
    for (int i = 0; i < 31; ++i) s.push_back({"a" + std::to_string(i), "", bits(4, {0})});
    for (int i = 0; i < 29; ++i) s.push_back({"b" + std::to_string(i), "", bits(4, {1})});
    s.push_back({"n", "", bits(4, {2})});
    const DatasetManifest m(cat, s);
    const auto r = fold_rare_labels(m, 30);
    CHECK(r.manifest.catalog().acronyms() == std::vector<std::string>{"A", "NORMAL", "OTHER"});
    CHECK(r.report.dropped_labels == std::vector<std::string>{"B"});
    CHECK(r.report.moved_samples == 29);
    CHECK(r.manifest.size() == m.size());
    const auto c = label_counts(r.manifest);
    CHECK(c == std::vector<std::size_t>{31, 1, 29});
    CHECK(r.manifest.degenerate_count() == 0);
    CHECK(fold_report_json(r.report).find("\"moved_samples\"") != std::string::npos);
}

TEST_CASE("fold: NORMAL and OTHER are never dropped; identity when nothing is rare") {
    const auto cat = LabelCatalog::from_acronyms({"A", "NORMAL", "OTHER"});
    std::vector<SampleRecord> s;
    for (int i = 0; i < 40; ++i) s.push_back({"a" + std::to_string(i), "", bits(3, {0})});
    s.push_back({"n", "", bits(3, {1})});
    const DatasetManifest m(cat, s);
    const auto r = fold_rare_labels(m, 30);
    CHECK(r.manifest == m);
    CHECK(r.report.dropped_labels.empty());
    CHECK(r.report.moved_samples == 0);
}

TEST_CASE("fold: fixpoint and sample count invariant over random manifests") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = fundus::testing::random_manifest(rng, 20 + rng.index(200), 3 + rng.index(10), 0.1 + 0.3 * rng.uniform01());
        const std::size_t k = 1 + rng.index(40);
        const auto once = fold_rare_labels(m, k);
        CHECK(once.manifest.size() == m.size());
        const auto twice = fold_rare_labels(once.manifest, k);
        CHECK(twice.manifest == once.manifest);
        CHECK(twice.report.dropped_labels.empty());
        const auto& cat = once.manifest.catalog();
        const auto c = label_counts(once.manifest);
        for (std::size_t j = 0; j < cat.size(); ++j)
            if (j != cat.normal_index() && j != cat.other_index()) CHECK(c[j] >= k);
    }
}

TEST_CASE("quality filter modes") {
    const auto cat = small_catalog(1);
    std::vector<SampleRecord> s;
    std::map<std::string, double> scores;
    for (int i = 1; i <= 10; ++i) {
        s.push_back({"s" + std::to_string(i), "", bits(3, {0})});
        scores["s" + std::to_string(i)] = i;
    }
    const DatasetManifest m(cat, s);
    const auto f = quality_filter(m, scores, DropFraction{0.10});
    CHECK(f.size() == 9);
    CHECK_FALSE(f.find("s1").has_value());

    CHECK(quality_filter(m, scores, DropFraction{0.0}) == m);
    CHECK(quality_filter(m, scores, ScoreThreshold{-std::numeric_limits<double>::infinity()}) == m);
    CHECK(quality_filter(m, scores, ScoreThreshold{0.058}) == m);
    CHECK(quality_filter(m, scores, ScoreThreshold{3.0}).size() == 8);

    auto missing = scores;
    missing.erase("s4");
    CHECK(code_of([&] { quality_filter(m, missing, DropFraction{}); }) == ErrorCode::MissingScore);
}

TEST_CASE("quality filter ties break by id") {
    const auto cat = small_catalog(1);
    const DatasetManifest m(cat, {{"c", "", bits(3, {0})}, {"a", "", bits(3, {0})}, {"b", "", bits(3, {0})}});
    const std::map<std::string, double> scores{{"a", 1.0}, {"b", 1.0}, {"c", 1.0}};
    const auto f = quality_filter(m, scores, DropFraction{0.5});  // floor(1.5) = 1
    CHECK(f.size() == 2);
    CHECK_FALSE(f.find("a").has_value());
    CHECK(f[0].id == "c");  // order preserved
}

TEST_CASE("split: single label 8/2 and determinism") {
    const auto cat = small_catalog(1);
    std::vector<SampleRecord> s;
    for (int i = 0; i < 10; ++i) s.push_back({"s" + std::to_string(i), "", bits(3, {0})});
    const DatasetManifest m(cat, s);
    const auto r = split(m, 0.2, 1);
    CHECK(r.train.size() == 8);
    CHECK(r.validation.size() == 2);
    CHECK(r.train.split_tag() == std::optional<std::string>("train"));
    CHECK(r.validation.split_tag() == std::optional<std::string>("validation"));
    const auto again = split(m, 0.2, 1);
    CHECK(again.train == r.train);
    CHECK(again.validation == r.validation);
}

TEST_CASE("split partitions the manifest") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = fundus::testing::random_manifest(rng, 5 + rng.index(150), 3 + rng.index(6), 0.3);
        const auto r = split(m, 0.1 + 0.5 * rng.uniform01(), rng.next());
        CHECK(r.train.size() + r.validation.size() == m.size());
        std::set<std::string> ids;
        for (const auto& x : r.train.samples()) ids.insert(x.id);
        for (const auto& x : r.validation.samples()) CHECK(ids.insert(x.id).second);
        for (const auto& x : m.samples()) CHECK(ids.count(x.id) == 1);
    }
}

TEST_CASE("split of the per-label totals reproduces the validation column within one") {
    const auto m = fundus::testing::table2_manifest();
    const auto& expected = fundus::testing::table2_validation();
    for (std::uint64_t seed : {0u, 1u, 42u}) {
        const auto r = split(m, 0.2, seed);
        const auto c = label_counts(r.validation);
        for (std::size_t j = 0; j < c.size(); ++j) {
            INFO("label " << m.catalog().acronym(j) << " seed " << seed);
            CHECK(std::abs(double(c[j]) - double(expected[j])) <= 1.0);
        }
    }
}

TEST_CASE("three-source assembly lands in the expected size band") {
    const auto fx = fundus::testing::three_source_fixture();
    std::size_t total = 0;
    for (const auto& s : fx.sources) total += s.samples.size();
    CHECK(total == 2451);
    const auto merged = merge(fx.sources, fx.target, fx.label_map);
    CHECK(merged.catalog().size() == 54);
    const auto folded = fold_rare_labels(merged, 30);
    CHECK(folded.manifest.catalog() == LabelCatalog::default_catalog());
    const auto filtered = quality_filter(folded.manifest, fx.scores, DropFraction{0.10});
    CHECK(filtered.size() >= 2157);
    CHECK(filtered.size() <= 2254);
}

TEST_CASE("quality report: descending order, ties by id, round trip") {
    std::ostringstream out;
    write_quality_report(out, {{"b", {0.2, false}}, {"a", {0.2, false}}, {"z", {0.0, true}}, {"c", {0.5, false}}});
    CHECK(out.str() == "id,score,degenerate_flag\nc,0.5,0\na,0.2,0\nb,0.2,0\nz,0,1\n");
    const auto dir = fundus::testing::temp_dir("quality_report");
    {
        std::ofstream f(dir / "q.csv");
        f << out.str();
    }
    const auto scores = load_quality_scores(dir / "q.csv");
    CHECK(scores.size() == 4);
    CHECK(scores.at("c") == 0.5);
    CHECK(scores.at("z") == 0.0);
    {
        std::ofstream f(dir / "dup.csv");
        f << "id,score,degenerate_flag\na,0.1,0\na,0.2,0\n";
    }
    CHECK_THROWS_AS(load_quality_scores(dir / "dup.csv"), Error);
}
