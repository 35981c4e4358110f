#include "kbqa/kb.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kbqa/text.hpp"

namespace kbqa {

using json = nlohmann::json;

namespace {

template <typename T>
void sort_unique(std::vector<T>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

void KnowledgeBase::finalize() {
    if (entity_types.size() != n_entities() || entity_attrs.size() != n_entities())
        throw KbError("entity store size mismatch");
    if (concept_parents.size() != n_concepts())
        throw KbError("concept store size mismatch");
    if (relation_domain.size() != n_relations() || relation_range.size() != n_relations())
        throw KbError("relation store size mismatch");
    for (auto& t : entity_types) sort_unique(t);
    for (auto& p : concept_parents) sort_unique(p);
    for (auto& d : relation_domain) sort_unique(d);
    for (auto& r : relation_range) sort_unique(r);
    check_ids();
    check_acyclic();
    dedupe_triples();
    build_indexes();
    finalized_ = true;
}

void KnowledgeBase::check_ids() const {
    auto entity_ok = [&](EntityId e) { return e < n_entities(); };
    auto concept_ok = [&](ConceptId c) { return c < n_concepts(); };
    auto relation_ok = [&](RelationId r) { return r < n_relations(); };
    for (size_t e = 0; e < entity_types.size(); ++e)
        for (ConceptId c : entity_types[e])
            if (!concept_ok(c))
                throw KbError("dangling concept id in instanceOf of entity '" + entity_labels[e] + "'");
    for (size_t c = 0; c < concept_parents.size(); ++c)
        for (ConceptId p : concept_parents[c])
            if (!concept_ok(p))
                throw KbError("dangling concept id in subClassOf of '" + concept_labels[c] + "'");
    for (const Triple& t : triples) {
        if (!entity_ok(t.head) || !entity_ok(t.tail))
            throw KbError("dangling entity id in triple");
        if (!relation_ok(t.rel))
            throw KbError("dangling relation id in triple");
    }
    for (size_t r = 0; r < relation_domain.size(); ++r) {
        for (ConceptId c : relation_domain[r])
            if (!concept_ok(c))
                throw KbError("dangling concept id in domain of '" + relation_labels[r] + "'");
        for (ConceptId c : relation_range[r])
            if (!concept_ok(c))
                throw KbError("dangling concept id in range of '" + relation_labels[r] + "'");
    }
    for (const auto& label : entity_labels)
        if (is_blank(label)) throw KbError("empty entity label");
    for (const auto& label : concept_labels)
        if (is_blank(label)) throw KbError("empty concept label");
    for (const auto& label : relation_labels)
        if (is_blank(label)) throw KbError("empty relation label");
}

void KnowledgeBase::check_acyclic() const {
    // Kahn over the subClassOf edges child -> parent.
    std::vector<int> out_deg(n_concepts(), 0);
    std::vector<std::vector<ConceptId>> rev(n_concepts());
    for (ConceptId c = 0; c < n_concepts(); ++c) {
        out_deg[c] = static_cast<int>(concept_parents[c].size());
        for (ConceptId p : concept_parents[c]) rev[p].push_back(c);
    }
    std::vector<ConceptId> queue;
    for (ConceptId c = 0; c < n_concepts(); ++c)
        if (out_deg[c] == 0) queue.push_back(c);
    size_t seen = 0;
    while (!queue.empty()) {
        ConceptId p = queue.back();
        queue.pop_back();
        ++seen;
        for (ConceptId child : rev[p])
            if (--out_deg[child] == 0) queue.push_back(child);
    }
    if (seen != n_concepts()) {
        for (ConceptId c = 0; c < n_concepts(); ++c)
            if (out_deg[c] > 0)
                throw KbError("cycle in subClassOf involving concept '" + concept_labels[c] + "'");
    }
}

void KnowledgeBase::dedupe_triples() {
    std::map<std::tuple<EntityId, RelationId, EntityId>, size_t> seen;
    std::vector<Triple> out;
    out.reserve(triples.size());
    for (Triple& t : triples) {
        auto key = std::make_tuple(t.head, t.rel, t.tail);
        auto it = seen.find(key);
        if (it == seen.end()) {
            seen.emplace(key, out.size());
            out.push_back(std::move(t));
        } else {
            // merge qualifiers of exact duplicates
            auto& quals = out[it->second].qualifiers;
            for (auto& q : t.qualifiers)
                if (std::find(quals.begin(), quals.end(), q) == quals.end()) quals.push_back(q);
        }
    }
    triples = std::move(out);
}

void KnowledgeBase::build_indexes() {
    entity_by_label_.clear();
    concept_by_label_.clear();
    relation_by_label_.clear();
    for (EntityId e = 0; e < n_entities(); ++e)
        entity_by_label_[normalize_label(entity_labels[e])].push_back(e);
    for (ConceptId c = 0; c < n_concepts(); ++c)
        concept_by_label_[normalize_label(concept_labels[c])].push_back(c);
    for (RelationId r = 0; r < n_relations(); ++r)
        relation_by_label_[normalize_label(relation_labels[r])].push_back(r);

    out_by_entity_.assign(n_entities(), {});
    in_by_entity_.assign(n_entities(), {});
    for (std::uint32_t i = 0; i < triples.size(); ++i) {
        out_by_entity_[triples[i].head].push_back(i);
        in_by_entity_[triples[i].tail].push_back(i);
    }
    direct_instances_.assign(n_concepts(), {});
    for (EntityId e = 0; e < n_entities(); ++e)
        for (ConceptId c : entity_types[e]) direct_instances_[c].push_back(e);
    concept_children_.assign(n_concepts(), {});
    for (ConceptId c = 0; c < n_concepts(); ++c)
        for (ConceptId p : concept_parents[c]) concept_children_[p].push_back(c);
    relations_by_domain_.assign(n_concepts(), {});
    for (RelationId r = 0; r < n_relations(); ++r)
        for (ConceptId c : relation_domain[r]) relations_by_domain_[c].push_back(r);
}

const std::vector<ConceptId>& KnowledgeBase::type_of(EntityId e) const {
    if (e >= n_entities()) throw KbError("unknown entity id");
    return entity_types[e];
}

const std::vector<ConceptId>& KnowledgeBase::range_of(RelationId r) const {
    if (r >= n_relations()) throw KbError("unknown relation id");
    return relation_range[r];
}

const std::vector<ConceptId>& KnowledgeBase::domain_of(RelationId r) const {
    if (r >= n_relations()) throw KbError("unknown relation id");
    return relation_domain[r];
}

std::vector<RelationId> KnowledgeBase::relations_with_domain(ConceptId c) const {
    if (c >= n_concepts()) throw KbError("unknown concept id");
    return relations_by_domain_[c];
}

std::vector<ConceptId> KnowledgeBase::concept_with_descendants(ConceptId c) const {
    if (c >= n_concepts()) throw KbError("unknown concept id");
    std::vector<ConceptId> closure;
    std::vector<char> seen(n_concepts(), 0);
    std::vector<ConceptId> stack = {c};
    seen[c] = 1;
    while (!stack.empty()) {
        ConceptId cur = stack.back();
        stack.pop_back();
        closure.push_back(cur);
        for (ConceptId child : concept_children_[cur])
            if (!seen[child]) {
                seen[child] = 1;
                stack.push_back(child);
            }
    }
    sort_unique(closure);
    return closure;
}

std::vector<EntityId> KnowledgeBase::instances_of(ConceptId c) const {
    std::vector<EntityId> out;
    for (ConceptId cc : concept_with_descendants(c))
        out.insert(out.end(), direct_instances_[cc].begin(), direct_instances_[cc].end());
    sort_unique(out);
    return out;
}

namespace {

template <typename Id>
std::vector<Id> lookup(const std::unordered_map<std::string, std::vector<Id>>& index,
                       std::string_view label) {
    auto it = index.find(normalize_label(label));
    if (it == index.end()) return {};
    return it->second;
}

}  // namespace

std::vector<EntityId> KnowledgeBase::resolve_entity(std::string_view label) const {
    return lookup(entity_by_label_, label);
}

std::vector<ConceptId> KnowledgeBase::resolve_concept(std::string_view label) const {
    return lookup(concept_by_label_, label);
}

std::vector<RelationId> KnowledgeBase::resolve_relation(std::string_view label) const {
    return lookup(relation_by_label_, label);
}

bool KnowledgeBase::operator==(const KnowledgeBase& other) const {
    return entity_labels == other.entity_labels && concept_labels == other.concept_labels &&
           relation_labels == other.relation_labels && entity_types == other.entity_types &&
           concept_parents == other.concept_parents && entity_attrs == other.entity_attrs &&
           triples == other.triples && relation_domain == other.relation_domain &&
           relation_range == other.relation_range;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

json literal_to_json(const Literal& l) {
    switch (l.kind) {
        case LiteralKind::String: return {{"type", "string"}, {"value", l.text}};
        case LiteralKind::Quantity: return {{"type", "quantity"}, {"value", l.number}, {"unit", l.unit}};
        case LiteralKind::Year: return {{"type", "year"}, {"value", l.year}};
        case LiteralKind::Date: return {{"type", "date"}, {"value", l.date.to_string()}};
    }
    return {};
}

Literal literal_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("type"))
        throw KbError("malformed literal in " + where);
    std::string type = j.at("type").get<std::string>();
    if (type == "string") return Literal::str(j.at("value").get<std::string>());
    if (type == "quantity") {
        double v = j.at("value").get<double>();
        if (!std::isfinite(v)) throw KbError("non-finite quantity in " + where);
        return Literal::quantity(v, j.value("unit", std::string()));
    }
    if (type == "year") return Literal::of_year(j.at("value").get<int>());
    if (type == "date") {
        auto d = CalendarDate::parse(j.at("value").get<std::string>());
        if (!d) throw KbError("bad date in " + where);
        return Literal::of_date(*d);
    }
    throw KbError("unknown literal type '" + type + "' in " + where);
}

json qualifiers_to_json(const std::vector<QualifiedValue>& qs) {
    json arr = json::array();
    for (const auto& q : qs) arr.push_back({{"key", q.key}, {"value", literal_to_json(q.value)}});
    return arr;
}

std::vector<QualifiedValue> qualifiers_from_json(const json& j, const std::string& where) {
    std::vector<QualifiedValue> out;
    if (j.is_null()) return out;
    for (const auto& q : j)
        out.push_back({q.at("key").get<std::string>(), literal_from_json(q.at("value"), where)});
    return out;
}

template <typename Id>
Id resolve_id(const std::unordered_map<std::string, Id>& ids, const json& ref,
              const std::string& where) {
    std::string key = ref.is_string() ? ref.get<std::string>() : ref.dump();
    auto it = ids.find(key);
    if (it == ids.end()) throw KbError("dangling id reference '" + key + "' in " + where);
    return it->second;
}

}  // namespace

KnowledgeBase load_kb_from_string(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw KbError(std::string("KB parse error: ") + e.what());
    }
    KnowledgeBase kb;
    std::unordered_map<std::string, EntityId> entity_ids;
    std::unordered_map<std::string, ConceptId> concept_ids;
    std::unordered_map<std::string, RelationId> relation_ids;

    try {
        for (const auto& c : j.value("concepts", json::array())) {
            std::string id = c.at("id").get<std::string>();
            if (!concept_ids.emplace(id, static_cast<ConceptId>(kb.concept_labels.size())).second)
                throw KbError("duplicate concept id '" + id + "'");
            kb.concept_labels.push_back(c.at("label").get<std::string>());
        }
        for (const auto& r : j.value("relations", json::array())) {
            std::string id = r.at("id").get<std::string>();
            if (!relation_ids.emplace(id, static_cast<RelationId>(kb.relation_labels.size())).second)
                throw KbError("duplicate relation id '" + id + "'");
            kb.relation_labels.push_back(r.at("label").get<std::string>());
        }
        for (const auto& e : j.value("entities", json::array())) {
            std::string id = e.at("id").get<std::string>();
            if (!entity_ids.emplace(id, static_cast<EntityId>(kb.entity_labels.size())).second)
                throw KbError("duplicate entity id '" + id + "'");
            kb.entity_labels.push_back(e.at("label").get<std::string>());
        }

        kb.entity_types.resize(kb.entity_labels.size());
        kb.entity_attrs.resize(kb.entity_labels.size());
        kb.concept_parents.resize(kb.concept_labels.size());
        kb.relation_domain.resize(kb.relation_labels.size());
        kb.relation_range.resize(kb.relation_labels.size());

        size_t ei = 0;
        for (const auto& e : j.value("entities", json::array())) {
            std::string where = "entity '" + kb.entity_labels[ei] + "'";
            for (const auto& c : e.value("instanceOf", json::array()))
                kb.entity_types[ei].push_back(resolve_id(concept_ids, c, where));
            for (const auto& a : e.value("attributes", json::array())) {
                AttributeFact fact;
                fact.key = a.at("key").get<std::string>();
                fact.value = literal_from_json(a.at("value"), where);
                fact.qualifiers = qualifiers_from_json(a.value("qualifiers", json()), where);
                kb.entity_attrs[ei].push_back(std::move(fact));
            }
            ++ei;
        }
        size_t ri = 0;
        for (const auto& r : j.value("relations", json::array())) {
            std::string where = "relation '" + kb.relation_labels[ri] + "'";
            for (const auto& c : r.value("domain", json::array()))
                kb.relation_domain[ri].push_back(resolve_id(concept_ids, c, where));
            for (const auto& c : r.value("range", json::array()))
                kb.relation_range[ri].push_back(resolve_id(concept_ids, c, where));
            ++ri;
        }
        for (const auto& pair : j.value("subClassOf", json::array())) {
            if (!pair.is_array() || pair.size() != 2)
                throw KbError("subClassOf entries must be [child, parent] pairs");
            ConceptId child = resolve_id(concept_ids, pair[0], "subClassOf");
            ConceptId parent = resolve_id(concept_ids, pair[1], "subClassOf");
            kb.concept_parents[child].push_back(parent);
        }
        for (const auto& t : j.value("triples", json::array())) {
            Triple tr;
            tr.head = resolve_id(entity_ids, t.at("head"), "triple");
            tr.rel = resolve_id(relation_ids, t.at("relation"), "triple");
            tr.tail = resolve_id(entity_ids, t.at("tail"), "triple");
            tr.qualifiers = qualifiers_from_json(t.value("qualifiers", json()), "triple");
            kb.triples.push_back(std::move(tr));
        }
    } catch (const json::exception& e) {
        throw KbError(std::string("KB field error: ") + e.what());
    }

    kb.finalize();
    return kb;
}

KnowledgeBase load_kb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw KbError("cannot open KB file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_kb_from_string(ss.str());
}

std::string serialize_kb(const KnowledgeBase& kb) {
    json j;
    j["concepts"] = json::array();
    for (ConceptId c = 0; c < kb.n_concepts(); ++c)
        j["concepts"].push_back({{"id", "c" + std::to_string(c)}, {"label", kb.concept_labels[c]}});
    j["relations"] = json::array();
    for (RelationId r = 0; r < kb.n_relations(); ++r) {
        json domain = json::array(), range = json::array();
        for (ConceptId c : kb.relation_domain[r]) domain.push_back("c" + std::to_string(c));
        for (ConceptId c : kb.relation_range[r]) range.push_back("c" + std::to_string(c));
        j["relations"].push_back({{"id", "r" + std::to_string(r)},
                                  {"label", kb.relation_labels[r]},
                                  {"domain", domain},
                                  {"range", range}});
    }
    j["entities"] = json::array();
    for (EntityId e = 0; e < kb.n_entities(); ++e) {
        json types = json::array();
        for (ConceptId c : kb.entity_types[e]) types.push_back("c" + std::to_string(c));
        json attrs = json::array();
        for (const auto& a : kb.entity_attrs[e])
            attrs.push_back({{"key", a.key},
                             {"value", literal_to_json(a.value)},
                             {"qualifiers", qualifiers_to_json(a.qualifiers)}});
        j["entities"].push_back({{"id", "e" + std::to_string(e)},
                                 {"label", kb.entity_labels[e]},
                                 {"instanceOf", types},
                                 {"attributes", attrs}});
    }
    j["subClassOf"] = json::array();
    for (ConceptId c = 0; c < kb.n_concepts(); ++c)
        for (ConceptId p : kb.concept_parents[c])
            j["subClassOf"].push_back({"c" + std::to_string(c), "c" + std::to_string(p)});
    j["triples"] = json::array();
    for (const Triple& t : kb.triples)
        j["triples"].push_back({{"head", "e" + std::to_string(t.head)},
                                {"relation", "r" + std::to_string(t.rel)},
                                {"tail", "e" + std::to_string(t.tail)},
                                {"qualifiers", qualifiers_to_json(t.qualifiers)}});
    return j.dump(2);
}

void save_kb(const KnowledgeBase& kb, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw KbError("cannot write KB file: " + path);
    out << serialize_kb(kb) << "\n";
}

}  // namespace kbqa
