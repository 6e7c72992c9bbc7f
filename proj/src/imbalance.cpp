#include "fundus/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "fundus/error.hpp"
#include "fundus/rng.hpp"

namespace fundus {

namespace {

constexpr std::string_view kModule = "imbalance";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(kModule, code, detail); }

/// Generates `<id>-r<k>` ids that collide with nothing seen so far.
class CloneNamer {
public:
    explicit CloneNamer(const DatasetManifest& m) {
        for (const auto& s : m.samples()) taken_.insert(s.id);
    }

    std::string next(const std::string& base) {
        std::size_t& k = counters_[base];
        std::string id;
        do {
            id = base + "-r" + std::to_string(++k);
        } while (!taken_.insert(id).second);
        return id;
    }

private:
    std::unordered_set<std::string> taken_;
    std::unordered_map<std::string, std::size_t> counters_;
};

struct LabelIr {
    std::vector<double> ir;  // 0 for labels with zero count
    double mean = 0.0;
};

LabelIr current_ir(const std::vector<std::size_t>& counts) {
    LabelIr out{std::vector<double>(counts.size(), 0.0), 0.0};
    const std::size_t maxc = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    std::size_t active = 0;
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (counts[j] > 0) {
            out.ir[j] = double(maxc) / double(counts[j]);
            out.mean += out.ir[j];
            ++active;
        }
    if (active > 0) out.mean /= double(active);
    return out;
}

void add_counts(std::vector<std::size_t>& counts, const LabelVector& labels, bool add) {
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (labels[j]) counts[j] = add ? counts[j] + 1 : counts[j] - 1;
}

}  // namespace

ImbalanceReport imbalance_from_counts(const std::vector<std::size_t>& counts, std::vector<std::string> names) {
    if (counts.empty()) fail(ErrorCode::InvalidArgument, "no labels selected");
    if (names.empty())
        for (std::size_t j = 0; j < counts.size(); ++j) names.push_back(std::to_string(j));
    if (names.size() != counts.size()) fail(ErrorCode::LengthMismatch, "names and counts differ in length");
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (counts[j] == 0) fail(ErrorCode::ZeroCountLabel, "label " + names[j] + " has no positives");

    ImbalanceReport r;
    r.labels = std::move(names);
    const double maxc = double(*std::max_element(counts.begin(), counts.end()));
    for (auto c : counts) r.per_label_ir.push_back(maxc / double(c));
    const double n = double(counts.size());
    r.mean_ir = std::accumulate(r.per_label_ir.begin(), r.per_label_ir.end(), 0.0) / n;
    double var = 0.0;
    for (double v : r.per_label_ir) var += (v - r.mean_ir) * (v - r.mean_ir);
    r.cvir = std::sqrt(var / n) / r.mean_ir;
    return r;
}

ImbalanceReport imbalance_report(const DatasetManifest& m, const std::vector<std::size_t>& include_labels) {
    const auto all = label_counts(m);
    std::vector<std::size_t> idx = include_labels;
    if (idx.empty()) {
        idx.resize(all.size());
        std::iota(idx.begin(), idx.end(), 0);
    }
    std::vector<std::size_t> counts;
    std::vector<std::string> names;
    for (auto j : idx) {
        if (j >= all.size()) fail(ErrorCode::InvalidArgument, "label index out of range");
        counts.push_back(all[j]);
        names.push_back(m.catalog().acronym(j));
    }
    return imbalance_from_counts(counts, std::move(names));
}

std::string imbalance_report_json(const ImbalanceReport& r) {
    nlohmann::ordered_json j;
    j["labels"] = r.labels;
    j["per_label_ir"] = r.per_label_ir;
    j["mean_ir"] = r.mean_ir;
    j["cvir"] = r.cvir;
    return j.dump(2);
}

// ---------------------------------------------------------------------------

std::map<Labelset, std::vector<std::size_t>> lp_transform(const DatasetManifest& m) {
    std::map<Labelset, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < m.size(); ++i) groups[m[i].labels].push_back(i);
    return groups;
}

std::size_t resample_budget(std::size_t n, double percentage) {
    if (!(percentage >= 0.0) || !std::isfinite(percentage))
        fail(ErrorCode::InvalidArgument, "percentage must be >= 0");
    return static_cast<std::size_t>(std::floor(double(n) * percentage / 100.0));
}

DatasetManifest lp_ros(const DatasetManifest& m, double percentage, std::uint64_t seed) {
    std::size_t budget = resample_budget(m.size(), percentage);
    if (budget == 0 || m.empty()) return m;
    Rng rng(seed);
    CloneNamer namer(m);

    std::vector<std::vector<std::size_t>> members;
    for (auto& [key, idx] : lp_transform(m)) members.push_back(idx);
    const std::size_t G = members.size();
    std::vector<std::size_t> size(G);
    for (std::size_t g = 0; g < G; ++g) size[g] = members[g].size();
    std::size_t total = m.size();

    std::vector<SampleRecord> out = m.samples();
    while (budget > 0) {
        const double mean = double(total) / double(G);
        std::vector<std::size_t> below;
        for (std::size_t g = 0; g < G; ++g)
            if (double(size[g]) + 1.0 <= mean) below.push_back(g);
        if (below.empty()) break;
        std::stable_sort(below.begin(), below.end(), [&](std::size_t a, std::size_t b) { return size[a] < size[b]; });
        for (std::size_t g : below) {
            if (budget == 0) break;
            const auto& src = m[members[g][rng.index(members[g].size())]];
            out.push_back({namer.next(src.id), src.image_path, src.labels});
            ++size[g];
            ++total;
            --budget;
        }
    }
    return DatasetManifest(m.catalog(), std::move(out), m.split_tag());
}

DatasetManifest lp_rus(const DatasetManifest& m, double percentage, std::uint64_t seed) {
    std::size_t budget = resample_budget(m.size(), percentage);
    if (budget == 0 || m.empty()) return m;
    Rng rng(seed);

    std::vector<std::vector<std::size_t>> members;
    for (auto& [key, idx] : lp_transform(m)) members.push_back(idx);
    const std::size_t G = members.size();
    std::size_t total = m.size();
    std::vector<bool> removed(m.size(), false);

    while (budget > 0) {
        const double mean = double(total) / double(G);
        std::vector<std::size_t> above;
        for (std::size_t g = 0; g < G; ++g)
            if (double(members[g].size()) - 1.0 >= mean) above.push_back(g);
        if (above.empty()) break;
        std::stable_sort(above.begin(), above.end(),
                         [&](std::size_t a, std::size_t b) { return members[a].size() > members[b].size(); });
        for (std::size_t g : above) {
            if (budget == 0) break;
            auto& group = members[g];
            const std::size_t k = rng.index(group.size());
            removed[group[k]] = true;
            group.erase(group.begin() + static_cast<std::ptrdiff_t>(k));
            --total;
            --budget;
        }
    }

    std::vector<SampleRecord> out;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!removed[i]) out.push_back(m[i]);
    return DatasetManifest(m.catalog(), std::move(out), m.split_tag());
}

DatasetManifest ml_ros(const DatasetManifest& m, double percentage, std::uint64_t seed) {
    std::size_t budget = resample_budget(m.size(), percentage);
    if (budget == 0 || m.empty()) return m;
    Rng rng(seed);
    CloneNamer namer(m);
    const std::size_t L = m.catalog().size();

    std::vector<std::vector<std::size_t>> bags(L);
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < L; ++j)
            if (m[i].labels[j]) bags[j].push_back(i);

    auto counts = label_counts(m);
    std::vector<SampleRecord> out = m.samples();
    while (budget > 0) {
        const LabelIr ir = current_ir(counts);
        std::vector<std::size_t> minority;
        for (std::size_t j = 0; j < L; ++j)
            if (counts[j] > 0 && ir.ir[j] > ir.mean) minority.push_back(j);
        if (minority.empty()) break;
        for (std::size_t j : minority) {
            if (budget == 0) break;
            const auto& src = m[bags[j][rng.index(bags[j].size())]];
            out.push_back({namer.next(src.id), src.image_path, src.labels});
            add_counts(counts, src.labels, true);
            --budget;
        }
    }
    return DatasetManifest(m.catalog(), std::move(out), m.split_tag());
}

DatasetManifest ml_rus(const DatasetManifest& m, double percentage, std::uint64_t seed) {
    std::size_t budget = resample_budget(m.size(), percentage);
    if (budget == 0 || m.empty()) return m;
    Rng rng(seed);
    const std::size_t L = m.catalog().size();

    auto counts = label_counts(m);
    std::vector<bool> removed(m.size(), false);
    while (budget > 0) {
        const LabelIr ir = current_ir(counts);
        std::vector<bool> majority(L, false);
        for (std::size_t j = 0; j < L; ++j) majority[j] = counts[j] > 0 && ir.ir[j] < ir.mean;

        std::vector<bool> eligible(m.size(), false);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (removed[i]) continue;
            bool any = false, all_major = true;
            for (std::size_t j = 0; j < L; ++j)
                if (m[i].labels[j]) {
                    any = true;
                    all_major = all_major && majority[j];
                }
            eligible[i] = any && all_major;
        }

        bool progress = false;
        for (std::size_t j = 0; j < L && budget > 0; ++j) {
            if (!majority[j]) continue;
            std::vector<std::size_t> pool;
            for (std::size_t i = 0; i < m.size(); ++i)
                if (eligible[i] && m[i].labels[j]) pool.push_back(i);
            if (pool.empty()) continue;
            const std::size_t victim = pool[rng.index(pool.size())];
            removed[victim] = true;
            eligible[victim] = false;
            add_counts(counts, m[victim].labels, false);
            --budget;
            progress = true;
        }
        if (!progress) break;
    }

    std::vector<SampleRecord> out;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!removed[i]) out.push_back(m[i]);
    return DatasetManifest(m.catalog(), std::move(out), m.split_tag());
}

}  // namespace fundus
