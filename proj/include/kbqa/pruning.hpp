#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbqa/kb.hpp"
#include "kbqa/program.hpp"

namespace kbqa {

struct PoolEvent {
    enum class Kind { Narrow, Fallback };
    Kind kind = Kind::Narrow;
    ArgCategory category = ArgCategory::Empty;
    int step = -1;  // token position, -1 when unknown
    std::size_t before = 0;
    std::size_t after = 0;
};

struct PruneError : std::runtime_error {
    explicit PruneError(const std::string& msg) : std::runtime_error(msg) {}
};

// Candidate pools for argument parsing; updated per argument choice so that
// later arguments must respect the ontology constraints of earlier ones.
// P^E is never narrowed, only P^C and P^R are.
struct CandidatePools {
    std::vector<EntityId> entities;     // sorted
    std::vector<RelationId> relations;  // sorted
    std::vector<ConceptId> concepts;    // sorted
    std::vector<PoolEvent> events;
};

CandidatePools init_pools(const KnowledgeBase& kb);

// Pool selected by the token's argument category; nullptr for Empty/LiteralText.
const std::vector<std::uint32_t>* active_pool(const CandidatePools& pools, Fn f);

// Category update rules, applied once the argument id is chosen:
//   Entity e:   P^C <- C(e),  P^R <- union over c in P^C of D^-(c)
//   Relation r: P^C <- R(r)
//   Concept c:  P^R <- D^-(c)
// The chosen id must be a member of the active pool.
void update_pools(CandidatePools& pools, const KnowledgeBase& kb, Fn f, std::uint32_t arg_id,
                  int step = -1);

// Resets the named pool to its full category set; precondition: it is empty.
void fallback(CandidatePools& pools, const KnowledgeBase& kb, ArgCategory category, int step = -1);

// Ensures the active pool for f is non-empty, applying fallback when needed.
// Returns the pool (nullptr for categories without one).
const std::vector<std::uint32_t>* ensure_active_pool(CandidatePools& pools, const KnowledgeBase& kb,
                                                     Fn f, int step = -1);

// Search-space measurement: product of active-pool sizes over the sketch's
// pool-taking tokens, replaying the update rules along the given argument
// choices (one id per pool-taking token, in order). The unpruned variant uses
// full category sizes; the skip-entity variants exclude Entity-category steps.
struct SearchSpace {
    double pruned = 1;
    double unpruned = 1;
    double pruned_skip_entity = 1;
    double unpruned_skip_entity = 1;
};

SearchSpace search_space_size(const Sketch& sketch, const KnowledgeBase& kb,
                              const std::vector<std::uint32_t>& choices);

}  // namespace kbqa
