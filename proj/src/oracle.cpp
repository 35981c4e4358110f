#include <algorithm>

#include "kbqa/executor.hpp"
#include "kbqa/text.hpp"

// Reference executor: every step is a comprehension over the raw stores
// (label scans, fixpoint closures, full triple scans), written apart from the
// indexed implementation so the two only share the language definition.

namespace kbqa {

namespace {

struct OErr {
    static ExecError at(ExecErrorKind k, int pos, const std::string& m) { return ExecError(k, pos, m); }
};

bool o_str_cmp(const std::string& a, CompareOp op, const std::string& b) {
    switch (op) {
        case CompareOp::Eq: return a == b;
        case CompareOp::Ne: return a != b;
        case CompareOp::Lt: return a < b;
        case CompareOp::Gt: return a > b;
    }
    return false;
}

bool o_num_cmp(double a, CompareOp op, double b) {
    switch (op) {
        case CompareOp::Eq: return a == b;
        case CompareOp::Ne: return a != b;
        case CompareOp::Lt: return a < b;
        case CompareOp::Gt: return a > b;
    }
    return false;
}

int o_date_key(const CalendarDate& d) { return (d.year * 16 + d.month) * 32 + d.day; }

// Reimplemented comparison semantics (kept apart from compare_literals).
bool o_cmp(const Literal& stored, CompareOp op, const Literal& query) {
    if (query.kind == LiteralKind::String)
        return stored.kind == LiteralKind::String &&
               o_str_cmp(normalize_label(stored.text), op, normalize_label(query.text));
    if (query.kind == LiteralKind::Quantity)
        return stored.kind == LiteralKind::Quantity &&
               normalize_label(stored.unit) == normalize_label(query.unit) &&
               o_num_cmp(stored.number, op, query.number);
    if (query.kind == LiteralKind::Year) {
        if (stored.kind == LiteralKind::Year) return o_num_cmp(stored.year, op, query.year);
        if (stored.kind == LiteralKind::Date) return o_num_cmp(stored.date.year, op, query.year);
        return false;
    }
    return stored.kind == LiteralKind::Date &&
           o_num_cmp(o_date_key(stored.date), op, o_date_key(query.date));
}

std::vector<EntityId> o_entities_matching(const KnowledgeBase& kb, const std::string& label) {
    std::string n = normalize_label(label);
    std::vector<EntityId> out;
    for (EntityId e = 0; e < kb.n_entities(); ++e)
        if (normalize_label(kb.entity_labels[e]) == n) out.push_back(e);
    return out;
}

std::vector<ConceptId> o_concepts_matching(const KnowledgeBase& kb, const std::string& label) {
    std::string n = normalize_label(label);
    std::vector<ConceptId> out;
    for (ConceptId c = 0; c < kb.n_concepts(); ++c)
        if (normalize_label(kb.concept_labels[c]) == n) out.push_back(c);
    return out;
}

std::vector<RelationId> o_relations_matching(const KnowledgeBase& kb, const std::string& label) {
    std::string n = normalize_label(label);
    std::vector<RelationId> out;
    for (RelationId r = 0; r < kb.n_relations(); ++r)
        if (normalize_label(kb.relation_labels[r]) == n) out.push_back(r);
    return out;
}

// Downward subClassOf closure by fixpoint over the raw parent lists.
std::vector<bool> o_closure(const KnowledgeBase& kb, const std::vector<ConceptId>& roots) {
    std::vector<bool> in(kb.n_concepts(), false);
    for (ConceptId c : roots) in[c] = true;
    bool changed = true;
    while (changed) {
        changed = false;
        for (ConceptId c = 0; c < kb.n_concepts(); ++c) {
            if (in[c]) continue;
            for (ConceptId p : kb.concept_parents[c])
                if (in[p]) {
                    in[c] = true;
                    changed = true;
                    break;
                }
        }
    }
    return in;
}

std::vector<bool> o_member_mask(const KnowledgeBase& kb, const std::vector<EntityId>& es) {
    std::vector<bool> m(kb.n_entities(), false);
    for (EntityId e : es) m[e] = true;
    return m;
}

std::vector<EntityId> o_set(const KnowledgeBase& kb, const RuntimeValue& v, Fn f, int pos) {
    if (v.kind != ValueKind::Entities && v.kind != ValueKind::EntitiesWithFacts)
        throw OErr::at(ExecErrorKind::TypeMismatch, pos,
                       std::string(fn_info(f).name) + " needs an entity set");
    auto mask = o_member_mask(kb, v.entities);
    std::vector<EntityId> out;
    for (EntityId e = 0; e < kb.n_entities(); ++e)
        if (mask[e]) out.push_back(e);
    return out;
}

RuntimeValue o_entity_value(std::vector<EntityId> es) {
    RuntimeValue v;
    v.kind = ValueKind::Entities;
    std::sort(es.begin(), es.end());
    es.erase(std::unique(es.begin(), es.end()), es.end());
    v.entities = std::move(es);
    return v;
}

RuntimeValue o_pair_value(std::vector<std::pair<EntityId, FactRef>> ps) {
    std::sort(ps.begin(), ps.end());
    ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
    RuntimeValue v;
    v.kind = ValueKind::EntitiesWithFacts;
    for (auto& [e, fr] : ps) {
        v.entities.push_back(e);
        v.facts.push_back(fr);
    }
    return v;
}

RuntimeValue o_values(std::vector<Literal> vals) {
    std::sort(vals.begin(), vals.end(), [](const Literal& a, const Literal& b) {
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.render() < b.render();
    });
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    RuntimeValue v;
    v.kind = ValueKind::Values;
    v.values = std::move(vals);
    return v;
}

RuntimeValue o_strings(std::vector<std::string> ss) {
    std::sort(ss.begin(), ss.end());
    ss.erase(std::unique(ss.begin(), ss.end()), ss.end());
    RuntimeValue v;
    v.kind = ValueKind::Strings;
    v.strings = std::move(ss);
    return v;
}

std::vector<std::string> o_parts(const std::string& arg, size_t n, Fn f, int pos) {
    auto parts = split_literal_parts(arg);
    if (parts.size() != n)
        throw OErr::at(ExecErrorKind::BadArgument, pos,
                       std::string(fn_info(f).name) + ": want " + std::to_string(n) + " parts");
    return parts;
}

CompareOp o_op(const std::string& s, int pos) {
    auto op = parse_compare_op(s);
    if (!op) throw OErr::at(ExecErrorKind::BadArgument, pos, "bad operator '" + s + "'");
    return *op;
}

Literal o_typed(LiteralKind k, const std::string& s, int pos) {
    std::optional<Literal> lit;
    if (k == LiteralKind::Quantity) lit = parse_quantity(s);
    else if (k == LiteralKind::Year) lit = parse_year(s);
    else if (k == LiteralKind::Date) lit = parse_date(s);
    else lit = Literal::str(s);
    if (!lit) throw OErr::at(ExecErrorKind::BadArgument, pos, "bad literal '" + s + "'");
    return *lit;
}

const std::vector<QualifiedValue>& o_quals(const KnowledgeBase& kb, const FactRef& fr) {
    return fr.kind == FactRef::Kind::Attribute ? kb.entity_attrs[fr.entity][fr.index].qualifiers
                                               : kb.triples[fr.index].qualifiers;
}

bool o_select_wants_max(const std::string& op, int pos) {
    std::string n = normalize_label(op);
    if (n == "greater" || n == "largest" || n == "longest" || n == "biggest") return true;
    if (n == "less" || n == "smallest" || n == "shortest") return false;
    throw OErr::at(ExecErrorKind::BadArgument, pos, "bad selection operator '" + op + "'");
}

bool o_lit_less(const Literal& a, const Literal& b) {
    if (a.kind == LiteralKind::Quantity) return a.number < b.number;
    if (a.kind == LiteralKind::Year) return a.year < b.year;
    if (a.kind == LiteralKind::Date) return o_date_key(a.date) < o_date_key(b.date);
    return normalize_label(a.text) < normalize_label(b.text);
}

RuntimeValue o_select(const KnowledgeBase& kb, const std::vector<EntityId>& es,
                      const std::string& key, bool want_max) {
    std::string nkey = normalize_label(key);
    bool have_frame = false;
    LiteralKind fk = LiteralKind::String;
    std::string funit;
    for (EntityId e : es) {
        if (have_frame) break;
        for (const auto& a : kb.entity_attrs[e])
            if (normalize_label(a.key) == nkey) {
                have_frame = true;
                fk = a.value.kind;
                funit = normalize_label(a.value.unit);
                break;
            }
    }
    if (!have_frame) return o_strings({});
    bool have_best = false;
    EntityId best = 0;
    Literal best_val;
    for (EntityId e : es)
        for (const auto& a : kb.entity_attrs[e]) {
            if (normalize_label(a.key) != nkey || a.value.kind != fk) continue;
            if (fk == LiteralKind::Quantity && normalize_label(a.value.unit) != funit) continue;
            bool better = !have_best ||
                          (want_max ? o_lit_less(best_val, a.value) : o_lit_less(a.value, best_val));
            if (better) {
                have_best = true;
                best = e;
                best_val = a.value;
            }
            break;
        }
    if (!have_best) return o_strings({});
    return o_strings({kb.entity_labels[best]});
}

std::vector<std::string> o_render(const RuntimeValue& v, const KnowledgeBase& kb) {
    std::vector<std::string> out;
    if (v.kind == ValueKind::Entities || v.kind == ValueKind::EntitiesWithFacts) {
        auto mask = o_member_mask(kb, v.entities);
        for (EntityId e = 0; e < kb.n_entities(); ++e)
            if (mask[e]) out.push_back(kb.entity_labels[e]);
    } else if (v.kind == ValueKind::Values) {
        for (const auto& x : v.values) out.push_back(x.render());
    } else if (v.kind == ValueKind::Strings) {
        out = v.strings;
    } else if (v.kind == ValueKind::Number) {
        return {std::to_string(v.number)};
    } else {
        return {v.boolean ? std::string("yes") : std::string("no")};
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

RuntimeValue o_step(Fn f, const std::string& arg, RuntimeValue* in, const KnowledgeBase& kb, int pos) {
    switch (f) {
        case Fn::FindAll: {
            std::vector<EntityId> all;
            for (EntityId e = 0; e < kb.n_entities(); ++e) all.push_back(e);
            return o_entity_value(std::move(all));
        }
        case Fn::Find: {
            auto es = o_entities_matching(kb, arg);
            if (es.empty()) throw OErr::at(ExecErrorKind::UnresolvableLabel, pos, "no entity '" + arg + "'");
            return o_entity_value(std::move(es));
        }
        case Fn::FilterConcept: {
            auto cs = o_concepts_matching(kb, arg);
            if (cs.empty()) throw OErr::at(ExecErrorKind::UnresolvableLabel, pos, "no concept '" + arg + "'");
            auto closure = o_closure(kb, cs);
            auto mask = o_member_mask(kb, o_set(kb, in[0], f, pos));
            std::vector<EntityId> kept;
            for (EntityId e = 0; e < kb.n_entities(); ++e) {
                if (!mask[e]) continue;
                bool member = false;
                for (ConceptId c : kb.entity_types[e]) member = member || closure[c];
                if (member) kept.push_back(e);
            }
            return o_entity_value(std::move(kept));
        }
        case Fn::FilterStr:
        case Fn::FilterNum:
        case Fn::FilterYear:
        case Fn::FilterDate: {
            bool is_str = f == Fn::FilterStr;
            auto p = o_parts(arg, is_str ? 2 : 3, f, pos);
            LiteralKind k = f == Fn::FilterNum    ? LiteralKind::Quantity
                            : f == Fn::FilterYear ? LiteralKind::Year
                            : f == Fn::FilterDate ? LiteralKind::Date
                                                  : LiteralKind::String;
            Literal q = o_typed(k, p[1], pos);
            CompareOp op = is_str ? CompareOp::Eq : o_op(p[2], pos);
            std::string nkey = normalize_label(p[0]);
            std::vector<std::pair<EntityId, FactRef>> ps;
            for (EntityId e : o_set(kb, in[0], f, pos))
                for (std::uint32_t ai = 0; ai < kb.entity_attrs[e].size(); ++ai) {
                    const auto& a = kb.entity_attrs[e][ai];
                    if (normalize_label(a.key) == nkey && o_cmp(a.value, op, q))
                        ps.push_back({e, FactRef{FactRef::Kind::Attribute, e, ai}});
                }
            return o_pair_value(std::move(ps));
        }
        case Fn::QFilterStr:
        case Fn::QFilterNum:
        case Fn::QFilterYear:
        case Fn::QFilterDate: {
            bool is_str = f == Fn::QFilterStr;
            auto p = o_parts(arg, is_str ? 2 : 3, f, pos);
            LiteralKind k = f == Fn::QFilterNum    ? LiteralKind::Quantity
                            : f == Fn::QFilterYear ? LiteralKind::Year
                            : f == Fn::QFilterDate ? LiteralKind::Date
                                                   : LiteralKind::String;
            Literal q = o_typed(k, p[1], pos);
            CompareOp op = is_str ? CompareOp::Eq : o_op(p[2], pos);
            std::string nq = normalize_label(p[0]);
            if (in[0].kind != ValueKind::EntitiesWithFacts)
                throw OErr::at(ExecErrorKind::TypeMismatch, pos, "qualifier filter needs facts");
            std::vector<std::pair<EntityId, FactRef>> ps;
            for (size_t i = 0; i < in[0].entities.size(); ++i) {
                bool hit = false;
                for (const auto& ql : o_quals(kb, in[0].facts[i]))
                    hit = hit || (normalize_label(ql.key) == nq && o_cmp(ql.value, op, q));
                if (hit) ps.push_back({in[0].entities[i], in[0].facts[i]});
            }
            return o_pair_value(std::move(ps));
        }
        case Fn::Relate: {
            RelateArg ra = parse_relate_arg(arg);
            auto rels = o_relations_matching(kb, ra.relation_label);
            if (rels.empty())
                throw OErr::at(ExecErrorKind::UnresolvableLabel, pos, "no relation '" + ra.relation_label + "'");
            auto mask = o_member_mask(kb, o_set(kb, in[0], f, pos));
            std::vector<std::pair<EntityId, FactRef>> ps;
            for (std::uint32_t ti = 0; ti < kb.triples.size(); ++ti) {
                const Triple& t = kb.triples[ti];
                bool rel_hit = false;
                for (RelationId r : rels) rel_hit = rel_hit || r == t.rel;
                if (!rel_hit) continue;
                if (ra.forward && mask[t.head])
                    ps.push_back({t.tail, FactRef{FactRef::Kind::Relation, t.tail, ti}});
                if (!ra.forward && mask[t.tail])
                    ps.push_back({t.head, FactRef{FactRef::Kind::Relation, t.head, ti}});
            }
            return o_pair_value(std::move(ps));
        }
        case Fn::And:
        case Fn::Or: {
            auto ma = o_member_mask(kb, o_set(kb, in[0], f, pos));
            auto mb = o_member_mask(kb, o_set(kb, in[1], f, pos));
            std::vector<EntityId> out;
            for (EntityId e = 0; e < kb.n_entities(); ++e) {
                bool keep = f == Fn::And ? (ma[e] && mb[e]) : (ma[e] || mb[e]);
                if (keep) out.push_back(e);
            }
            return o_entity_value(std::move(out));
        }
        case Fn::QueryName: {
            std::vector<std::string> names;
            for (EntityId e : o_set(kb, in[0], f, pos)) names.push_back(kb.entity_labels[e]);
            return o_strings(std::move(names));
        }
        case Fn::Count: {
            RuntimeValue v;
            v.kind = ValueKind::Number;
            v.number = static_cast<long long>(o_set(kb, in[0], f, pos).size());
            return v;
        }
        case Fn::QueryAttr: {
            auto p = o_parts(arg, 1, f, pos);
            std::string nkey = normalize_label(p[0]);
            std::vector<Literal> vals;
            for (EntityId e : o_set(kb, in[0], f, pos))
                for (const auto& a : kb.entity_attrs[e])
                    if (normalize_label(a.key) == nkey) vals.push_back(a.value);
            return o_values(std::move(vals));
        }
        case Fn::QueryAttrUnderCondition: {
            auto p = o_parts(arg, 3, f, pos);
            std::string nkey = normalize_label(p[0]);
            std::string nqkey = normalize_label(p[1]);
            Literal qv = parse_literal_guess(p[2]);
            std::vector<Literal> vals;
            for (EntityId e : o_set(kb, in[0], f, pos))
                for (const auto& a : kb.entity_attrs[e]) {
                    if (normalize_label(a.key) != nkey) continue;
                    bool cond = false;
                    for (const auto& ql : a.qualifiers)
                        cond = cond || (normalize_label(ql.key) == nqkey && o_cmp(ql.value, CompareOp::Eq, qv));
                    if (cond) vals.push_back(a.value);
                }
            return o_values(std::move(vals));
        }
        case Fn::QueryRelation: {
            if (!is_blank(arg) && o_relations_matching(kb, arg).empty())
                throw OErr::at(ExecErrorKind::UnresolvableLabel, pos, "no relation '" + arg + "'");
            auto ma = o_member_mask(kb, o_set(kb, in[0], f, pos));
            auto mb = o_member_mask(kb, o_set(kb, in[1], f, pos));
            std::vector<std::string> preds;
            for (const Triple& t : kb.triples)
                if (ma[t.head] && mb[t.tail]) preds.push_back(kb.relation_labels[t.rel]);
            return o_strings(std::move(preds));
        }
        case Fn::SelectBetween: {
            auto p = o_parts(arg, 2, f, pos);
            bool want_max = o_select_wants_max(p[1], pos);
            auto ma = o_member_mask(kb, o_set(kb, in[0], f, pos));
            auto mb = o_member_mask(kb, o_set(kb, in[1], f, pos));
            std::vector<EntityId> both;
            for (EntityId e = 0; e < kb.n_entities(); ++e)
                if (ma[e] || mb[e]) both.push_back(e);
            return o_select(kb, both, p[0], want_max);
        }
        case Fn::SelectAmong: {
            auto p = o_parts(arg, 2, f, pos);
            return o_select(kb, o_set(kb, in[0], f, pos), p[0], o_select_wants_max(p[1], pos));
        }
        case Fn::VerifyStr:
        case Fn::VerifyNum:
        case Fn::VerifyYear:
        case Fn::VerifyDate: {
            if (in[0].kind != ValueKind::Values)
                throw OErr::at(ExecErrorKind::TypeMismatch, pos, "verify needs attribute values");
            RuntimeValue v;
            v.kind = ValueKind::Boolean;
            v.boolean = false;
            if (f == Fn::VerifyStr) {
                auto p = o_parts(arg, 1, f, pos);
                std::string want = normalize_label(p[0]);
                for (const auto& x : in[0].values)
                    v.boolean = v.boolean || normalize_label(x.render()) == want;
            } else {
                auto p = o_parts(arg, 2, f, pos);
                LiteralKind k = f == Fn::VerifyNum    ? LiteralKind::Quantity
                                : f == Fn::VerifyYear ? LiteralKind::Year
                                                      : LiteralKind::Date;
                Literal q = o_typed(k, p[0], pos);
                CompareOp op = o_op(p[1], pos);
                for (const auto& x : in[0].values) v.boolean = v.boolean || o_cmp(x, op, q);
            }
            return v;
        }
        case Fn::QueryAttrQualifier: {
            auto p = o_parts(arg, 3, f, pos);
            std::string nkey = normalize_label(p[0]);
            Literal want = parse_literal_guess(p[1]);
            std::string nqkey = normalize_label(p[2]);
            std::vector<Literal> vals;
            for (EntityId e : o_set(kb, in[0], f, pos))
                for (const auto& a : kb.entity_attrs[e]) {
                    if (normalize_label(a.key) != nkey) continue;
                    if (!o_cmp(a.value, CompareOp::Eq, want)) continue;
                    for (const auto& ql : a.qualifiers)
                        if (normalize_label(ql.key) == nqkey) vals.push_back(ql.value);
                }
            return o_values(std::move(vals));
        }
        case Fn::QueryRelationQualifier: {
            auto p = o_parts(arg, 2, f, pos);
            auto rels = o_relations_matching(kb, p[0]);
            std::string nqkey = normalize_label(p[1]);
            auto ma = o_member_mask(kb, o_set(kb, in[0], f, pos));
            auto mb = o_member_mask(kb, o_set(kb, in[1], f, pos));
            std::vector<Literal> vals;
            for (const Triple& t : kb.triples) {
                bool rel_hit = false;
                for (RelationId r : rels) rel_hit = rel_hit || r == t.rel;
                if (!rel_hit || !ma[t.head] || !mb[t.tail]) continue;
                for (const auto& ql : t.qualifiers)
                    if (normalize_label(ql.key) == nqkey) vals.push_back(ql.value);
            }
            return o_values(std::move(vals));
        }
        case Fn::Start:
        case Fn::End:
            break;
    }
    throw OErr::at(ExecErrorKind::BadArgument, pos, "unreachable");
}

}  // namespace

ExecutionResult brute_force_oracle(const Program& program, const KnowledgeBase& kb) {
    std::vector<RuntimeValue> stack;
    ExecutionResult res;
    bool ended = false;
    for (size_t i = 0; i < program.tokens.size(); ++i) {
        Fn f = program.tokens[i];
        int pos = static_cast<int>(i);
        if (ended) throw OErr::at(ExecErrorKind::TokenAfterEnd, pos, "token after <END>");
        if (f == Fn::Start) throw OErr::at(ExecErrorKind::StartToken, pos, "<START> inside program");
        if (f == Fn::End) {
            if (stack.size() != 1)
                throw OErr::at(ExecErrorKind::Leftover, pos,
                               "stack holds " + std::to_string(stack.size()) + " values at <END>");
            ended = true;
            continue;
        }
        const FnInfo& info = fn_info(f);
        if (stack.size() < static_cast<size_t>(info.arity))
            throw OErr::at(ExecErrorKind::StackUnderflow, pos,
                           std::string(info.name) + " underflows at position " + std::to_string(pos));
        static const std::string kNoArg;
        const std::string& arg = i < program.args.size() ? program.args[i] : kNoArg;
        RuntimeValue* in = stack.data() + (stack.size() - info.arity);
        RuntimeValue out = o_step(f, arg, in, kb, pos);
        stack.resize(stack.size() - info.arity);
        stack.push_back(std::move(out));
        res.trace.push_back({f, arg, std::string()});
    }
    if (!ended)
        throw OErr::at(ExecErrorKind::MissingEnd, static_cast<int>(program.tokens.size()),
                       "program does not end with <END>");
    res.value = std::move(stack.back());
    res.answers = o_render(res.value, kb);
    return res;
}

}  // namespace kbqa
