#pragma once

#include <string>
#include <vector>

#include "kbqa/rng.hpp"

namespace kbqa {

// Set F1 between predicted and gold answer strings under exact
// normalized-label match. Both empty -> 1; one side empty -> 0.
struct F1Score {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

F1Score answer_f1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold);

// Draws one answer uniformly from the predicted set with the given generator
// and checks membership in gold (normalized match). Empty prediction -> 0.
double hits_at_1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold,
                 Rng& rng);

// Highest F1 among the first k entries of per-candidate F1 scores
// (candidates ranked by model preference). Empty list -> 0.
double best_f1_in_top_k(const std::vector<double>& candidate_f1, std::size_t k);

struct MetricsReport {
    std::size_t n_examples = 0;
    double f1 = 0;       // mean top-1 F1
    double hits1 = 0;    // mean Hits@1
    std::vector<std::size_t> topk_ks;  // {1,2,5,10}
    std::vector<double> topk_f1;       // mean best-F1-in-top-k, same order

    std::string to_json() const;
    std::string to_table() const;
};

}  // namespace kbqa
