#include "kbqa/pruning.hpp"

#include <algorithm>

namespace kbqa {

namespace {

std::vector<std::uint32_t> iota_ids(std::size_t n) {
    std::vector<std::uint32_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint32_t>(i);
    return v;
}

bool member(const std::vector<std::uint32_t>& pool, std::uint32_t id) {
    return std::binary_search(pool.begin(), pool.end(), id);
}

void log_narrow(CandidatePools& pools, ArgCategory cat, int step, std::size_t before, std::size_t after) {
    pools.events.push_back({PoolEvent::Kind::Narrow, cat, step, before, after});
}

}  // namespace

CandidatePools init_pools(const KnowledgeBase& kb) {
    CandidatePools p;
    p.entities = iota_ids(kb.n_entities());
    p.relations = iota_ids(kb.n_relations());
    p.concepts = iota_ids(kb.n_concepts());
    return p;
}

const std::vector<std::uint32_t>* active_pool(const CandidatePools& pools, Fn f) {
    switch (fn_info(f).category) {
        case ArgCategory::Entity: return &pools.entities;
        case ArgCategory::Relation: return &pools.relations;
        case ArgCategory::Concept: return &pools.concepts;
        default: return nullptr;
    }
}

void update_pools(CandidatePools& pools, const KnowledgeBase& kb, Fn f, std::uint32_t arg_id,
                  int step) {
    ArgCategory cat = fn_info(f).category;
    const auto* pool = active_pool(pools, f);
    if (!pool) return;  // Empty / LiteralText tokens leave pools untouched
    if (!member(*pool, arg_id))
        throw PruneError(std::string(fn_info(f).name) + " argument id " + std::to_string(arg_id) +
                         " is outside its active pool");
    if (cat == ArgCategory::Entity) {
        std::size_t before_c = pools.concepts.size();
        pools.concepts = kb.type_of(arg_id);  // already sorted
        log_narrow(pools, ArgCategory::Concept, step, before_c, pools.concepts.size());
        std::size_t before_r = pools.relations.size();
        std::vector<RelationId> rels;
        for (ConceptId c : pools.concepts) {
            auto dr = kb.relations_with_domain(c);
            rels.insert(rels.end(), dr.begin(), dr.end());
        }
        std::sort(rels.begin(), rels.end());
        rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
        pools.relations = std::move(rels);
        log_narrow(pools, ArgCategory::Relation, step, before_r, pools.relations.size());
    } else if (cat == ArgCategory::Relation) {
        std::size_t before_c = pools.concepts.size();
        pools.concepts = kb.range_of(arg_id);
        log_narrow(pools, ArgCategory::Concept, step, before_c, pools.concepts.size());
    } else if (cat == ArgCategory::Concept) {
        std::size_t before_r = pools.relations.size();
        pools.relations = kb.relations_with_domain(arg_id);
        log_narrow(pools, ArgCategory::Relation, step, before_r, pools.relations.size());
    }
}

void fallback(CandidatePools& pools, const KnowledgeBase& kb, ArgCategory category, int step) {
    std::vector<std::uint32_t>* pool = nullptr;
    std::size_t full = 0;
    switch (category) {
        case ArgCategory::Entity: pool = &pools.entities; full = kb.n_entities(); break;
        case ArgCategory::Relation: pool = &pools.relations; full = kb.n_relations(); break;
        case ArgCategory::Concept: pool = &pools.concepts; full = kb.n_concepts(); break;
        default: throw PruneError("fallback: category has no pool");
    }
    if (!pool->empty()) throw PruneError("fallback: pool is not empty");
    *pool = iota_ids(full);
    pools.events.push_back({PoolEvent::Kind::Fallback, category, step, 0, pool->size()});
}

const std::vector<std::uint32_t>* ensure_active_pool(CandidatePools& pools, const KnowledgeBase& kb,
                                                     Fn f, int step) {
    const auto* pool = active_pool(pools, f);
    if (!pool || !pool->empty()) return pool;
    fallback(pools, kb, fn_info(f).category, step);
    return active_pool(pools, f);
}

SearchSpace search_space_size(const Sketch& sketch, const KnowledgeBase& kb,
                              const std::vector<std::uint32_t>& choices) {
    CandidatePools pools = init_pools(kb);
    SearchSpace s;
    std::size_t next_choice = 0;
    for (std::size_t i = 0; i < sketch.size(); ++i) {
        Fn f = sketch[i];
        if (f == Fn::End) break;
        ArgCategory cat = fn_info(f).category;
        const auto* pool = ensure_active_pool(pools, kb, f, static_cast<int>(i));
        if (!pool) continue;
        std::size_t full = cat == ArgCategory::Entity     ? kb.n_entities()
                           : cat == ArgCategory::Relation ? kb.n_relations()
                                                          : kb.n_concepts();
        s.pruned *= static_cast<double>(pool->size());
        s.unpruned *= static_cast<double>(full);
        if (cat != ArgCategory::Entity) {
            s.pruned_skip_entity *= static_cast<double>(pool->size());
            s.unpruned_skip_entity *= static_cast<double>(full);
        }
        if (next_choice >= choices.size())
            throw PruneError("argument-choice trace shorter than the sketch's pool steps");
        update_pools(pools, kb, f, choices[next_choice], static_cast<int>(i));
        ++next_choice;
    }
    if (next_choice != choices.size())
        throw PruneError("argument-choice trace longer than the sketch's pool steps");
    return s;
}

}  // namespace kbqa
