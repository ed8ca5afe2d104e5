#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "shenet/errors.hpp"
#include "shenet/kmedoids.hpp"
#include "shenet/metrics.hpp"
#include "shenet/types.hpp"

namespace shenet {

enum class EntryOrigin { kInitialCluster, kOnlineAddition, kMergedCluster };

inline const char* to_string(EntryOrigin o) {
    switch (o) {
        case EntryOrigin::kInitialCluster: return "initial_cluster";
        case EntryOrigin::kOnlineAddition: return "online_addition";
        default: return "merged_cluster";
    }
}

inline EntryOrigin origin_from_string(const std::string& s) {
    if (s == "initial_cluster") return EntryOrigin::kInitialCluster;
    if (s == "online_addition") return EntryOrigin::kOnlineAddition;
    if (s == "merged_cluster") return EntryOrigin::kMergedCluster;
    throw FormatError("bank: unknown entry origin '" + s + "'");
}

/// One representative past-future pair.
struct BankEntry {
    Path past;
    Path future;
    EntryOrigin origin{EntryOrigin::kInitialCluster};

    friend bool operator==(const BankEntry&, const BankEntry&) = default;
};

/// The group trajectory bank: clustered representatives, searched by cosine
/// similarity of flattened past segments, grown online when predictions get
/// a trajectory badly wrong.
struct TrajectoryBank {
    int t_pas{0};
    int t_fut{0};
    double theta{std::numeric_limits<double>::infinity()};
    std::int64_t beta{std::numeric_limits<std::int64_t>::max()};
    std::int64_t n_added{0};
    std::vector<BankEntry> entries;
    std::vector<BankEntry> pending;  // the additions since the last merge
    bool frozen{false};

    friend bool operator==(const TrajectoryBank&, const TrajectoryBank&) = default;
};

struct SearchResult {
    std::size_t index{0};
    double score{0};
    Path candidate_future;
};

enum class UpdateOutcome { kUnchanged, kAdded, kAddedAndMerged };

/// Clusters the full flattened trajectories with K-medoids and stores the
/// element-wise average of each cluster as an entry. theta defaults to +inf
/// (never add) and beta to "never merge"; set both before online updates.
/// When `clustering` is non-null it receives the raw K-medoids result.
inline TrajectoryBank init_bank(const std::vector<Trajectory>& trainset, std::size_t k,
                                int max_iter, std::uint64_t seed,
                                KMedoidsResult* clustering = nullptr) {
    if (trainset.empty()) throw ConfigError("init_bank: empty trainset");
    if (k < 1 || k > trainset.size())
        throw ConfigError("init_bank: k = " + std::to_string(k) + " outside [1, " +
                          std::to_string(trainset.size()) + "]");
    const int t_pas = trainset[0].t_pas;
    const int t_fut = trainset[0].t_fut;
    std::vector<std::vector<double>> flat;
    flat.reserve(trainset.size());
    for (const auto& traj : trainset) {
        if (traj.t_pas != t_pas || traj.t_fut != t_fut)
            throw DataError("init_bank: trajectories disagree on t_pas/t_fut");
        flat.push_back(flatten(traj.full()));
    }
    const KMedoidsResult clusters = kmedoids(flat, k, max_iter, seed);
    if (clustering) *clustering = clusters;

    TrajectoryBank bank;
    bank.t_pas = t_pas;
    bank.t_fut = t_fut;
    for (const auto& avg : cluster_averages(flat, clusters)) {
        BankEntry entry;
        entry.origin = EntryOrigin::kInitialCluster;
        entry.past.resize(static_cast<std::size_t>(t_pas));
        entry.future.resize(static_cast<std::size_t>(t_fut));
        for (int i = 0; i < t_pas; ++i)
            entry.past[i] = {avg[2 * i], avg[2 * i + 1]};
        for (int i = 0; i < t_fut; ++i)
            entry.future[i] = {avg[2 * (t_pas + i)], avg[2 * (t_pas + i) + 1]};
        bank.entries.push_back(std::move(entry));
    }
    return bank;
}

namespace detail {

inline std::vector<double> search_key(const Path& past, bool translate_to_origin) {
    Path p = past;
    if (translate_to_origin && !p.empty()) {
        const Vec2 origin = p.front();
        for (auto& q : p) q = q - origin;
    }
    return flatten(p);
}

/// Cosine scores for every entry; unusable (zero-norm) entries get NaN.
inline std::vector<double> all_scores(const TrajectoryBank& bank, const Path& past,
                                      bool translate_to_origin) {
    if (bank.entries.empty()) throw StateError("search: bank not initialized");
    if (past.size() != static_cast<std::size_t>(bank.t_pas))
        throw DataError("search: query has " + std::to_string(past.size()) +
                        " steps, bank expects " + std::to_string(bank.t_pas));
    const std::vector<double> q = search_key(past, translate_to_origin);
    const double qn = std::sqrt(std::inner_product(q.begin(), q.end(), q.begin(), 0.0));
    if (qn == 0.0) throw SimilarityError("search: query has zero norm");
    std::vector<double> scores(bank.entries.size(),
                               std::numeric_limits<double>::quiet_NaN());
    bool any = false;
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        const std::vector<double> e = search_key(bank.entries[i].past, translate_to_origin);
        double dot = 0.0, en2 = 0.0;
        for (std::size_t j = 0; j < e.size(); ++j) {
            dot += q[j] * e[j];
            en2 += e[j] * e[j];
        }
        if (en2 == 0.0) continue;  // cosine undefined for this entry
        scores[i] = dot / (qn * std::sqrt(en2));
        any = true;
    }
    if (!any) throw SimilarityError("search: every bank entry has zero norm");
    return scores;
}

}  // namespace detail

/// Highest-cosine entry for the query past; ties go to the lowest index.
inline SearchResult search(const TrajectoryBank& bank, const Path& past,
                           bool translate_to_origin = false) {
    const auto scores = detail::all_scores(bank, past, translate_to_origin);
    std::size_t best = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) continue;
        if (best == scores.size() || scores[i] > scores[best]) best = i;
    }
    return {best, scores[best], bank.entries[best].future};
}

/// The min(k, usable entries) best-scoring entries in descending score order;
/// equal scores keep ascending index order.
inline std::vector<SearchResult> topk_search(const TrajectoryBank& bank, const Path& past,
                                             std::size_t k, bool translate_to_origin = false) {
    if (k < 1) throw ConfigError("topk_search: k must be >= 1");
    const auto scores = detail::all_scores(bank, past, translate_to_origin);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!std::isnan(scores[i])) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    if (idx.size() > k) idx.resize(k);
    std::vector<SearchResult> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back({i, scores[i], bank.entries[i].future});
    return out;
}

/// Adds the trajectory when the prediction missed it by more than theta
/// (ADE), and compacts the pending additions into k_recluster averaged
/// entries once beta additions piled up. Entries made by init_bank are never
/// touched; only pending additions are merged.
inline UpdateOutcome maybe_update(TrajectoryBank& bank, const Trajectory& traj,
                                  const Path& predicted_future, int k_recluster,
                                  std::uint64_t seed) {
    if (bank.frozen) throw StateError("maybe_update: bank is frozen");
    if (k_recluster < 1) throw ConfigError("maybe_update: k_recluster must be >= 1");
    if (traj.t_pas != bank.t_pas || traj.t_fut != bank.t_fut)
        throw DataError("maybe_update: trajectory shape does not match bank");
    const Path gt = traj.future();
    require_same_shape(predicted_future, gt, "maybe_update");

    const double d = ade(predicted_future, gt);
    if (d <= bank.theta) return UpdateOutcome::kUnchanged;

    BankEntry added;
    added.past = traj.past();
    added.future = gt;
    added.origin = EntryOrigin::kOnlineAddition;
    bank.entries.push_back(added);
    bank.pending.push_back(std::move(added));
    ++bank.n_added;
    if (bank.n_added < bank.beta) return UpdateOutcome::kAdded;

    // Merge: cluster the pending raw additions and replace them (they are the
    // trailing n_added entries) with the cluster averages.
    std::vector<std::vector<double>> flat;
    flat.reserve(bank.pending.size());
    for (const auto& e : bank.pending) {
        Path full = e.past;
        full.insert(full.end(), e.future.begin(), e.future.end());
        flat.push_back(flatten(full));
    }
    const auto k_eff =
        std::min<std::size_t>(static_cast<std::size_t>(k_recluster), flat.size());
    const KMedoidsResult clusters = kmedoids(flat, k_eff, 100, seed);
    bank.entries.resize(bank.entries.size() - bank.pending.size());
    for (const auto& avg : cluster_averages(flat, clusters)) {
        BankEntry merged;
        merged.origin = EntryOrigin::kMergedCluster;
        merged.past.resize(static_cast<std::size_t>(bank.t_pas));
        merged.future.resize(static_cast<std::size_t>(bank.t_fut));
        for (int i = 0; i < bank.t_pas; ++i)
            merged.past[i] = {avg[2 * i], avg[2 * i + 1]};
        for (int i = 0; i < bank.t_fut; ++i)
            merged.future[i] = {avg[2 * (bank.t_pas + i)], avg[2 * (bank.t_pas + i) + 1]};
        bank.entries.push_back(std::move(merged));
    }
    bank.pending.clear();
    bank.n_added = 0;
    return UpdateOutcome::kAddedAndMerged;
}

/// Marks the bank read-only. Idempotent; searches are unaffected.
inline TrajectoryBank& freeze(TrajectoryBank& bank) {
    bank.frozen = true;
    return bank;
}

namespace detail {

inline nlohmann::json path_to_json(const Path& p) {
    auto arr = nlohmann::json::array();
    for (const auto& q : p) {
        arr.push_back(q.x);
        arr.push_back(q.y);
    }
    return arr;
}

inline Path path_from_json(const nlohmann::json& arr, int expect_len, const char* what) {
    if (!arr.is_array() || arr.size() != static_cast<std::size_t>(2 * expect_len))
        throw FormatError(std::string("bank file: ") + what + " has wrong length");
    Path p(static_cast<std::size_t>(expect_len));
    for (int i = 0; i < expect_len; ++i) {
        if (!arr[2 * i].is_number() || !arr[2 * i + 1].is_number())
            throw FormatError(std::string("bank file: ") + what + " holds a non-number");
        p[i] = {arr[2 * i].get<double>(), arr[2 * i + 1].get<double>()};
    }
    return p;
}

}  // namespace detail

inline constexpr int kBankFileVersion = 1;

inline void save_bank(const TrajectoryBank& bank, const std::string& path) {
    nlohmann::json j;
    j["version"] = kBankFileVersion;
    j["t_pas"] = bank.t_pas;
    j["t_fut"] = bank.t_fut;
    if (std::isinf(bank.theta))
        j["theta"] = "inf";
    else
        j["theta"] = bank.theta;
    if (bank.beta == std::numeric_limits<std::int64_t>::max())
        j["beta"] = "inf";
    else
        j["beta"] = bank.beta;
    j["n_added"] = bank.n_added;
    j["frozen"] = bank.frozen;
    auto entries = nlohmann::json::array();
    for (const auto& e : bank.entries)
        entries.push_back({{"past", detail::path_to_json(e.past)},
                           {"future", detail::path_to_json(e.future)},
                           {"origin", to_string(e.origin)}});
    j["entries"] = std::move(entries);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_bank: cannot open '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw DataError("save_bank: write failed for '" + path + "'");
}

/// Inverse of save_bank. The pending list is reconstructed from the trailing
/// n_added entries, which by construction are the unmerged additions.
inline TrajectoryBank load_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_bank: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_bank: invalid JSON in '" + path + "': " + e.what());
    }
    TrajectoryBank bank;
    try {
        if (j.at("version").get<int>() != kBankFileVersion)
            throw FormatError("load_bank: unsupported version in '" + path + "'");
        bank.t_pas = j.at("t_pas").get<int>();
        bank.t_fut = j.at("t_fut").get<int>();
        bank.theta = j.at("theta").is_string()
                         ? std::numeric_limits<double>::infinity()
                         : j.at("theta").get<double>();
        bank.beta = j.at("beta").is_string() ? std::numeric_limits<std::int64_t>::max()
                                             : j.at("beta").get<std::int64_t>();
        bank.n_added = j.at("n_added").get<std::int64_t>();
        bank.frozen = j.at("frozen").get<bool>();
        for (const auto& e : j.at("entries")) {
            BankEntry entry;
            entry.past = detail::path_from_json(e.at("past"), bank.t_pas, "past");
            entry.future = detail::path_from_json(e.at("future"), bank.t_fut, "future");
            entry.origin = origin_from_string(e.at("origin").get<std::string>());
            bank.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_bank: missing or mistyped field in '" + path +
                          "': " + e.what());
    }
    if (bank.t_pas < 1 || bank.t_fut < 1 || bank.entries.empty() || bank.n_added < 0 ||
        bank.n_added > static_cast<std::int64_t>(bank.entries.size()))
        throw FormatError("load_bank: inconsistent fields in '" + path + "'");
    bank.pending.assign(bank.entries.end() - bank.n_added, bank.entries.end());
    return bank;
}

}  // namespace shenet
