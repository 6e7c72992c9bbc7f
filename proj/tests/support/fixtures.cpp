#include "fixtures.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace fundus::testing {

const std::vector<std::size_t>& table2_totals() {
    static const std::vector<std::size_t> v = {495, 493, 169, 263, 156, 158, 162, 89, 79, 62,
                                               55,  60,  58,  57,  46,  36,  35,  33, 30, 261};
    return v;
}

const std::vector<std::size_t>& table2_validation() {
    static const std::vector<std::size_t> v = {99, 98, 34, 52, 31, 32, 32, 18, 16, 12,
                                               11, 12, 11, 11, 9,  7,  7,  7,  6,  52};
    return v;
}

namespace {

// Deals positive "tokens" (one per label occurrence) onto samples so that no
// sample receives the same label twice. The first pass gives every sample one
// token; leftovers wrap around.
void deal_tokens(std::vector<SampleRecord>& samples, std::size_t first, const std::vector<std::size_t>& token_labels) {
    const std::size_t n = samples.size() - first;
    if (token_labels.size() < n) throw std::logic_error("not enough positives to label every sample");
    std::size_t cursor = 0;
    for (std::size_t t = 0; t < token_labels.size(); ++t) {
        const std::size_t label = token_labels[t];
        std::size_t tries = 0;
        while (samples[first + cursor % n].labels[label]) {
            ++cursor;
            if (++tries > n) throw std::logic_error("label has more positives than samples");
        }
        samples[first + cursor % n].labels[label] = 1;
        ++cursor;
    }
}

}  // namespace

DatasetManifest table2_manifest() {
    const auto cat = LabelCatalog::default_catalog();
    const auto& totals = table2_totals();
    std::vector<SampleRecord> samples;
    for (std::size_t i = 0; i < totals[cat.normal_index()]; ++i) {
        SampleRecord s{"n" + std::to_string(i), "img/n" + std::to_string(i) + ".png", LabelVector(cat.size(), 0)};
        s.labels[cat.normal_index()] = 1;
        samples.push_back(std::move(s));
    }
    const std::size_t first = samples.size();
    for (std::size_t i = 0; i < 2208 - first; ++i)
        samples.push_back({"d" + std::to_string(i), "img/d" + std::to_string(i) + ".png", LabelVector(cat.size(), 0)});
    std::vector<std::size_t> tokens;
    for (std::size_t j = 0; j < cat.size(); ++j)
        if (j != cat.normal_index()) tokens.insert(tokens.end(), totals[j], j);
    deal_tokens(samples, first, tokens);
    return DatasetManifest(cat, std::move(samples));
}

LabelCatalog small_catalog(std::size_t n_disease) {
    std::vector<LabelInfo> rows;
    for (std::size_t j = 0; j < n_disease; ++j) rows.push_back({"L" + std::to_string(j), "Label " + std::to_string(j)});
    rows.push_back({"NORMAL", "Normal Retina"});
    rows.push_back({"OTHER", "Other Diseases"});
    return LabelCatalog(std::move(rows), n_disease, n_disease + 1);
}

DatasetManifest random_manifest(Rng& rng, std::size_t n, std::size_t n_labels, double density) {
    const auto cat = small_catalog(n_labels >= 2 ? n_labels - 2 : 0);
    std::vector<SampleRecord> samples;
    for (std::size_t i = 0; i < n; ++i) {
        SampleRecord s{"s" + std::to_string(i), "img/s" + std::to_string(i) + ".png", LabelVector(cat.size(), 0)};
        for (auto& b : s.labels) b = rng.bernoulli(density) ? 1 : 0;
        samples.push_back(std::move(s));
    }
    return DatasetManifest(cat, std::move(samples));
}

DatasetManifest single_label_manifest(const std::vector<std::size_t>& counts) {
    const auto cat = small_catalog(counts.size() - 2);
    std::vector<SampleRecord> samples;
    std::size_t k = 0;
    for (std::size_t j = 0; j < counts.size(); ++j)
        for (std::size_t c = 0; c < counts[j]; ++c, ++k) {
            SampleRecord s{"s" + std::to_string(k), "img/s" + std::to_string(k) + ".png", LabelVector(cat.size(), 0)};
            s.labels[j] = 1;
            samples.push_back(std::move(s));
        }
    return DatasetManifest(cat, std::move(samples));
}

// ---------------------------------------------------------------------------

ThreeSourceFixture three_source_fixture(std::uint64_t seed) {
    const auto base = LabelCatalog::default_catalog();
    const auto& totals = table2_totals();
    constexpr std::size_t kRare = 34;
    constexpr std::size_t kTotal = 2451;
    constexpr std::size_t kNormal = 547;

    // Target catalog: default order, with the rare labels just before OTHER.
    std::vector<LabelInfo> rows;
    std::vector<std::size_t> counts;
    for (std::size_t j = 0; j < base.size(); ++j) {
        if (j == base.other_index()) {
            for (std::size_t r = 0; r < kRare; ++r) {
                rows.push_back({"RARE" + std::to_string(r), "Rare condition " + std::to_string(r)});
                counts.push_back(1 + (r * 7) % 29);  // 1..29, all below the fold threshold
            }
        }
        rows.push_back(base.labels()[j]);
        if (j == base.normal_index()) counts.push_back(kNormal);
        else if (j == base.other_index()) counts.push_back(200);
        else counts.push_back(static_cast<std::size_t>(std::lround(double(totals[j]) * 1.11)));
    }
    const std::size_t normal = base.normal_index();
    const std::size_t other = rows.size() - 1;
    LabelCatalog target(rows, normal, other);

    std::vector<SampleRecord> all;
    for (std::size_t i = 0; i < kNormal; ++i) {
        SampleRecord s{"x" + std::to_string(i), "", LabelVector(target.size(), 0)};
        s.labels[normal] = 1;
        all.push_back(std::move(s));
    }
    const std::size_t first = all.size();
    for (std::size_t i = first; i < kTotal; ++i) all.push_back({"x" + std::to_string(i), "", LabelVector(target.size(), 0)});
    std::vector<std::size_t> tokens;
    for (std::size_t j = 0; j < target.size(); ++j)
        if (j != normal) tokens.insert(tokens.end(), counts[j], j);
    deal_tokens(all, first, tokens);

    Rng rng(seed);
    rng.shuffle(all.begin(), all.end());

    ThreeSourceFixture fx{{}, {}, target, {}};
    const std::vector<std::pair<std::string, std::size_t>> layout = {{"ARIA", 143}, {"STARE", 388}, {"RFMID", 1920}};
    std::size_t offset = 0;
    for (const auto& [name, size] : layout) {
        std::set<std::size_t> used;
        for (std::size_t i = offset; i < offset + size; ++i)
            for (std::size_t j = 0; j < target.size(); ++j)
                if (all[i].labels[j]) used.insert(j);
        SourceManifest src{name, {}, {}};
        std::vector<std::size_t> cols(used.begin(), used.end());
        for (std::size_t j : cols) {
            const std::string source_label = "src_" + target.acronym(j);
            src.label_names.push_back(source_label);
            fx.label_map.add(name, source_label, target.acronym(j));
        }
        for (std::size_t i = offset; i < offset + size; ++i) {
            const std::string local = "img" + std::to_string(i - offset);
            SampleRecord rec{local, name + "/" + local + ".png", LabelVector(cols.size(), 0)};
            for (std::size_t c = 0; c < cols.size(); ++c) rec.labels[c] = all[i].labels[cols[c]];
            src.samples.push_back(std::move(rec));
            fx.scores[name + "_" + local] = rng.uniform(0.03, 0.25);
        }
        fx.sources.push_back(std::move(src));
        offset += size;
    }
    return fx;
}

std::vector<std::string> write_three_source_fixture(const ThreeSourceFixture& fx, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> args;
    for (const auto& src : fx.sources) {
        const auto path = dir / (src.name + ".csv");
        std::ofstream out(path, std::ios::binary);
        out << "id,filepath";
        for (const auto& l : src.label_names) out << ',' << l;
        out << '\n';
        for (const auto& s : src.samples) {
            out << s.id << ',' << s.image_path;
            for (auto b : s.labels) out << ',' << int(b);
            out << '\n';
        }
        args.push_back(src.name + "=" + path.string());
    }
    {
        std::ofstream out(dir / "label_map.csv", std::ios::binary);
        out << "source,source_label,target_label\n";
        for (const auto& src : fx.sources)
            for (const auto& l : src.label_names) out << src.name << ',' << l << ',' << *fx.label_map.find(src.name, l) << '\n';
    }
    {
        std::ofstream out(dir / "labels.csv", std::ios::binary);
        out << "acronym,full_name\n";
        for (const auto& l : fx.target.labels()) out << l.acronym << ',' << l.full_name << '\n';
    }
    {
        std::ofstream out(dir / "scores.csv", std::ios::binary);
        out << "id,score,degenerate_flag\n";
        char buf[64];
        for (const auto& [id, score] : fx.scores) {
            std::snprintf(buf, sizeof(buf), "%.17g", score);
            out << id << ',' << buf << ",0\n";
        }
    }
    return args;
}

std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("fundus_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fundus::testing
