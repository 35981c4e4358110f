#include "kbqa/metrics.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kbqa/text.hpp"

namespace kbqa {

static std::set<std::string> normalized_set(const std::vector<std::string>& xs) {
    std::set<std::string> out;
    for (const auto& x : xs) out.insert(normalize_label(x));
    return out;
}

F1Score answer_f1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
    auto p = normalized_set(predicted);
    auto g = normalized_set(gold);
    F1Score s;
    if (p.empty() && g.empty()) {
        s.precision = s.recall = s.f1 = 1;
        return s;
    }
    if (p.empty() || g.empty()) return s;
    std::size_t hit = 0;
    for (const auto& x : p)
        if (g.count(x)) ++hit;
    s.precision = static_cast<double>(hit) / static_cast<double>(p.size());
    s.recall = static_cast<double>(hit) / static_cast<double>(g.size());
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0;
    return s;
}

double hits_at_1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold,
                 Rng& rng) {
    auto p = normalized_set(predicted);
    if (p.empty()) return 0;
    auto g = normalized_set(gold);
    std::vector<std::string> ordered(p.begin(), p.end());
    const std::string& drawn = ordered[uniform_index(rng, ordered.size())];
    return g.count(drawn) ? 1.0 : 0.0;
}

double best_f1_in_top_k(const std::vector<double>& candidate_f1, std::size_t k) {
    double best = 0;
    for (std::size_t i = 0; i < candidate_f1.size() && i < k; ++i) best = std::max(best, candidate_f1[i]);
    return best;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["n_examples"] = n_examples;
    j["f1"] = f1;
    j["hits1"] = hits1;
    nlohmann::json tk = nlohmann::json::object();
    for (std::size_t i = 0; i < topk_ks.size(); ++i)
        tk["top" + std::to_string(topk_ks[i])] = topk_f1[i];
    j["best_f1_in_topk"] = tk;
    return j.dump(2);
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    os << "examples: " << n_examples << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "F1:      %.4f\n", f1);
    os << buf;
    std::snprintf(buf, sizeof buf, "Hits@1:  %.4f\n", hits1);
    os << buf;
    for (std::size_t i = 0; i < topk_ks.size(); ++i) {
        std::snprintf(buf, sizeof buf, "F1@top%-2zu %.4f\n", topk_ks[i], topk_f1[i]);
        os << buf;
    }
    return os.str();
}

}  // namespace kbqa
