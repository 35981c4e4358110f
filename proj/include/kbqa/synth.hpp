#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kbqa/dataset.hpp"
#include "kbqa/kb.hpp"

namespace kbqa {

// Sizes for one generated domain pair. Both domains share the world topology
// (people belong to organizations, organizations use venues, attributes on
// each) and the question templates; all content labels are disjoint.
struct SynthConfig {
    int n_source = 200;  // source QA pairs (question + gold program)
    int n_target = 100;  // target QA pairs (question + answers only)
    int persons = 30;    // entities per domain, by class
    int orgs = 8;
    int venues = 6;
    double second_membership = 0.3;  // chance a person joins a second org
    std::uint64_t seed = 1;
};

struct SynthOutput {
    KnowledgeBase kb_source;
    KnowledgeBase kb_target;
    Dataset source;       // programs + answers
    Dataset target;       // answers + literal spans, no programs
    Dataset target_gold;  // hidden programs behind `target`, for debugging only
};

SynthOutput generate_synthetic_domains(const SynthConfig& cfg);

}  // namespace kbqa
