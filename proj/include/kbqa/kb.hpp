#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbqa/literal.hpp"

namespace kbqa {

using EntityId = std::uint32_t;
using ConceptId = std::uint32_t;
using RelationId = std::uint32_t;

struct QualifiedValue {
    std::string key;
    Literal value;
    bool operator==(const QualifiedValue&) const = default;
};

struct AttributeFact {
    std::string key;
    Literal value;
    std::vector<QualifiedValue> qualifiers;
    bool operator==(const AttributeFact&) const = default;
};

struct Triple {
    EntityId head = 0;
    RelationId rel = 0;
    EntityId tail = 0;
    std::vector<QualifiedValue> qualifiers;
    bool operator==(const Triple&) const = default;
};

struct KbError : std::runtime_error {
    explicit KbError(const std::string& msg) : std::runtime_error(msg) {}
};

// In-memory knowledge base: entities, concepts and general relations with
// their instanceOf / subClassOf / relational triple stores plus the ontology
// view (relation domain and range, entity types). Immutable once finalized;
// concurrent readers are fine.
class KnowledgeBase {
public:
    // raw stores
    std::vector<std::string> entity_labels;
    std::vector<std::string> concept_labels;
    std::vector<std::string> relation_labels;
    std::vector<std::vector<ConceptId>> entity_types;     // instanceOf, sorted
    std::vector<std::vector<ConceptId>> concept_parents;  // subClassOf, sorted
    std::vector<std::vector<AttributeFact>> entity_attrs;
    std::vector<Triple> triples;
    std::vector<std::vector<ConceptId>> relation_domain;  // sorted
    std::vector<std::vector<ConceptId>> relation_range;   // sorted

    size_t n_entities() const { return entity_labels.size(); }
    size_t n_concepts() const { return concept_labels.size(); }
    size_t n_relations() const { return relation_labels.size(); }

    // Validates invariants (acyclic subClassOf, in-range ids), dedupes
    // triples and builds the lookup indexes. Must be called after the raw
    // stores are filled and before any query below.
    void finalize();

    // ontology operators
    const std::vector<ConceptId>& type_of(EntityId e) const;          // C(e), direct only
    const std::vector<ConceptId>& range_of(RelationId r) const;       // R(r)
    const std::vector<ConceptId>& domain_of(RelationId r) const;
    std::vector<RelationId> relations_with_domain(ConceptId c) const;  // D^-(c)
    std::vector<ConceptId> concept_with_descendants(ConceptId c) const;
    std::vector<EntityId> instances_of(ConceptId c) const;  // subClassOf closure

    // label lookup (normalized, may be one-to-many)
    std::vector<EntityId> resolve_entity(std::string_view label) const;
    std::vector<ConceptId> resolve_concept(std::string_view label) const;
    std::vector<RelationId> resolve_relation(std::string_view label) const;

    const std::vector<std::uint32_t>& triples_out(EntityId e) const { return out_by_entity_.at(e); }
    const std::vector<std::uint32_t>& triples_in(EntityId e) const { return in_by_entity_.at(e); }
    const std::vector<EntityId>& direct_instances(ConceptId c) const { return direct_instances_.at(c); }
    const std::vector<ConceptId>& children_of(ConceptId c) const { return concept_children_.at(c); }

    bool operator==(const KnowledgeBase& other) const;

private:
    void check_ids() const;
    void check_acyclic() const;
    void dedupe_triples();
    void build_indexes();

    std::unordered_map<std::string, std::vector<EntityId>> entity_by_label_;
    std::unordered_map<std::string, std::vector<ConceptId>> concept_by_label_;
    std::unordered_map<std::string, std::vector<RelationId>> relation_by_label_;
    std::vector<std::vector<std::uint32_t>> out_by_entity_;
    std::vector<std::vector<std::uint32_t>> in_by_entity_;
    std::vector<std::vector<EntityId>> direct_instances_;
    std::vector<std::vector<ConceptId>> concept_children_;
    std::vector<std::vector<RelationId>> relations_by_domain_;
    bool finalized_ = false;
};

KnowledgeBase load_kb(const std::string& path);
KnowledgeBase load_kb_from_string(const std::string& json_text);
std::string serialize_kb(const KnowledgeBase& kb);
void save_kb(const KnowledgeBase& kb, const std::string& path);

}  // namespace kbqa
