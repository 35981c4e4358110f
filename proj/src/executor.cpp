#include "kbqa/executor.hpp"

#include <algorithm>
#include <utility>

#include "kbqa/text.hpp"

namespace kbqa {

bool is_stack_error(ExecErrorKind k) {
    switch (k) {
        case ExecErrorKind::StackUnderflow:
        case ExecErrorKind::Leftover:
        case ExecErrorKind::MissingEnd:
        case ExecErrorKind::StartToken:
        case ExecErrorKind::TokenAfterEnd:
            return true;
        default:
            return false;
    }
}

const char* exec_error_kind_name(ExecErrorKind k) {
    switch (k) {
        case ExecErrorKind::StackUnderflow: return "stack-underflow";
        case ExecErrorKind::Leftover: return "leftover-values";
        case ExecErrorKind::MissingEnd: return "missing-end";
        case ExecErrorKind::StartToken: return "start-token";
        case ExecErrorKind::TokenAfterEnd: return "token-after-end";
        case ExecErrorKind::TypeMismatch: return "type-mismatch";
        case ExecErrorKind::UnresolvableLabel: return "unresolvable-label";
        case ExecErrorKind::BadArgument: return "bad-argument";
    }
    return "?";
}

namespace {

using Pair = std::pair<EntityId, FactRef>;

RuntimeValue make_entities(std::vector<EntityId> es) {
    std::sort(es.begin(), es.end());
    es.erase(std::unique(es.begin(), es.end()), es.end());
    RuntimeValue v;
    v.kind = ValueKind::Entities;
    v.entities = std::move(es);
    return v;
}

RuntimeValue make_pairs(std::vector<Pair> ps) {
    std::sort(ps.begin(), ps.end());
    ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
    RuntimeValue v;
    v.kind = ValueKind::EntitiesWithFacts;
    v.entities.reserve(ps.size());
    v.facts.reserve(ps.size());
    for (auto& [e, f] : ps) {
        v.entities.push_back(e);
        v.facts.push_back(f);
    }
    return v;
}

RuntimeValue make_values(std::vector<Literal> vals) {
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

RuntimeValue make_strings(std::vector<std::string> ss) {
    std::sort(ss.begin(), ss.end());
    ss.erase(std::unique(ss.begin(), ss.end()), ss.end());
    RuntimeValue v;
    v.kind = ValueKind::Strings;
    v.strings = std::move(ss);
    return v;
}

const char* kind_name(ValueKind k) {
    switch (k) {
        case ValueKind::Entities: return "Entities";
        case ValueKind::EntitiesWithFacts: return "EntitiesWithFacts";
        case ValueKind::Values: return "Values";
        case ValueKind::Strings: return "Strings";
        case ValueKind::Number: return "Number";
        case ValueKind::Boolean: return "Boolean";
    }
    return "?";
}

std::vector<EntityId> as_entity_set(const RuntimeValue& v, Fn f, int pos) {
    if (v.kind == ValueKind::Entities) return v.entities;
    if (v.kind == ValueKind::EntitiesWithFacts) {
        std::vector<EntityId> es = v.entities;
        std::sort(es.begin(), es.end());
        es.erase(std::unique(es.begin(), es.end()), es.end());
        return es;
    }
    throw ExecError(ExecErrorKind::TypeMismatch, pos,
                    std::string(fn_info(f).name) + " needs an entity set, got " + kind_name(v.kind));
}

std::vector<std::string> parts_or_throw(const std::string& arg, size_t n, Fn f, int pos) {
    auto parts = split_literal_parts(arg);
    if (parts.size() != n)
        throw ExecError(ExecErrorKind::BadArgument, pos,
                        std::string(fn_info(f).name) + " wants " + std::to_string(n) +
                            " argument part(s), got " + std::to_string(parts.size()) + " in '" + arg + "'");
    return parts;
}

CompareOp op_or_throw(const std::string& s, int pos) {
    auto op = parse_compare_op(s);
    if (!op) throw ExecError(ExecErrorKind::BadArgument, pos, "bad comparison operator '" + s + "'");
    return *op;
}

Literal typed_or_throw(LiteralKind want, const std::string& s, int pos) {
    std::optional<Literal> lit;
    switch (want) {
        case LiteralKind::Quantity: lit = parse_quantity(s); break;
        case LiteralKind::Year: lit = parse_year(s); break;
        case LiteralKind::Date: lit = parse_date(s); break;
        case LiteralKind::String: lit = Literal::str(s); break;
    }
    if (!lit)
        throw ExecError(ExecErrorKind::BadArgument, pos, "cannot parse '" + s + "' as the typed literal");
    return *lit;
}

std::vector<EntityId> resolve_entity_or_throw(const KnowledgeBase& kb, const std::string& label, int pos) {
    auto ids = kb.resolve_entity(label);
    if (ids.empty())
        throw ExecError(ExecErrorKind::UnresolvableLabel, pos, "no entity labeled '" + label + "'");
    return ids;
}

std::vector<ConceptId> resolve_concept_or_throw(const KnowledgeBase& kb, const std::string& label, int pos) {
    auto ids = kb.resolve_concept(label);
    if (ids.empty())
        throw ExecError(ExecErrorKind::UnresolvableLabel, pos, "no concept labeled '" + label + "'");
    return ids;
}

std::vector<RelationId> resolve_relation_or_throw(const KnowledgeBase& kb, const std::string& label, int pos) {
    auto ids = kb.resolve_relation(label);
    if (ids.empty())
        throw ExecError(ExecErrorKind::UnresolvableLabel, pos, "no relation labeled '" + label + "'");
    return ids;
}

const std::vector<QualifiedValue>& fact_qualifiers(const KnowledgeBase& kb, const FactRef& f) {
    if (f.kind == FactRef::Kind::Attribute) return kb.entity_attrs[f.entity][f.index].qualifiers;
    return kb.triples[f.index].qualifiers;
}

template <class Pred>
RuntimeValue filter_attr(const KnowledgeBase& kb, const std::vector<EntityId>& es,
                         const std::string& key, Pred&& pred) {
    std::string nkey = normalize_label(key);
    std::vector<Pair> out;
    for (EntityId e : es) {
        const auto& attrs = kb.entity_attrs[e];
        for (std::uint32_t ai = 0; ai < attrs.size(); ++ai)
            if (normalize_label(attrs[ai].key) == nkey && pred(attrs[ai].value))
                out.push_back({e, FactRef{FactRef::Kind::Attribute, e, ai}});
    }
    return make_pairs(std::move(out));
}

template <class Pred>
RuntimeValue qfilter(const KnowledgeBase& kb, const RuntimeValue& in, const std::string& qkey,
                     Pred&& pred, Fn f, int pos) {
    if (in.kind != ValueKind::EntitiesWithFacts)
        throw ExecError(ExecErrorKind::TypeMismatch, pos,
                        std::string(fn_info(f).name) + " needs (Entities, Facts), got " + kind_name(in.kind));
    std::string nq = normalize_label(qkey);
    std::vector<Pair> out;
    for (size_t i = 0; i < in.entities.size(); ++i) {
        for (const auto& q : fact_qualifiers(kb, in.facts[i]))
            if (normalize_label(q.key) == nq && pred(q.value)) {
                out.push_back({in.entities[i], in.facts[i]});
                break;
            }
    }
    return make_pairs(std::move(out));
}

RuntimeValue relate(const KnowledgeBase& kb, const std::vector<EntityId>& es,
                    const std::vector<RelationId>& rels, bool forward) {
    std::vector<Pair> out;
    for (EntityId e : es) {
        const auto& tl = forward ? kb.triples_out(e) : kb.triples_in(e);
        for (std::uint32_t ti : tl) {
            const Triple& t = kb.triples[ti];
            if (std::find(rels.begin(), rels.end(), t.rel) == rels.end()) continue;
            EntityId produced = forward ? t.tail : t.head;
            out.push_back({produced, FactRef{FactRef::Kind::Relation, produced, ti}});
        }
    }
    return make_pairs(std::move(out));
}

// Comparison frame for Select*: (kind, unit) of the first key-matching value
// found scanning entities in id order; entities whose value falls outside the
// frame are excluded rather than erroring.
struct SelectFrame {
    bool found = false;
    LiteralKind kind = LiteralKind::String;
    std::string unit;
};

bool literal_before(const Literal& a, const Literal& b) {
    switch (a.kind) {
        case LiteralKind::Quantity: return a.number < b.number;
        case LiteralKind::Year: return a.year < b.year;
        case LiteralKind::Date: return a.date < b.date;
        case LiteralKind::String: return normalize_label(a.text) < normalize_label(b.text);
    }
    return false;
}

RuntimeValue select_extremum(const KnowledgeBase& kb, const std::vector<EntityId>& es,
                             const std::string& key, bool want_max) {
    std::string nkey = normalize_label(key);
    SelectFrame frame;
    for (EntityId e : es) {
        for (const auto& a : kb.entity_attrs[e])
            if (normalize_label(a.key) == nkey) {
                frame.found = true;
                frame.kind = a.value.kind;
                frame.unit = normalize_label(a.value.unit);
                break;
            }
        if (frame.found) break;
    }
    if (!frame.found) return make_strings({});
    bool have_best = false;
    EntityId best = 0;
    Literal best_val;
    for (EntityId e : es) {
        for (const auto& a : kb.entity_attrs[e]) {
            if (normalize_label(a.key) != nkey || a.value.kind != frame.kind) continue;
            if (frame.kind == LiteralKind::Quantity && normalize_label(a.value.unit) != frame.unit)
                continue;
            // strict comparison keeps the earlier (smaller-id) entity on ties
            if (!have_best || (want_max ? literal_before(best_val, a.value)
                                        : literal_before(a.value, best_val))) {
                have_best = true;
                best = e;
                best_val = a.value;
            }
            break;  // first comparable fact per entity
        }
    }
    if (!have_best) return make_strings({});
    return make_strings({kb.entity_labels[best]});
}

bool select_wants_max(const std::string& op, int pos) {
    std::string n = normalize_label(op);
    if (n == "greater" || n == "largest" || n == "longest" || n == "biggest") return true;
    if (n == "less" || n == "smallest" || n == "shortest") return false;
    throw ExecError(ExecErrorKind::BadArgument, pos, "bad selection operator '" + op + "'");
}

std::string summarize(const RuntimeValue& v, const KnowledgeBase& kb) {
    auto answers = render_answers(v, kb);
    std::string s = kind_name(v.kind);
    s += '(' + std::to_string(answers.size()) + ')';
    for (size_t i = 0; i < answers.size() && i < 3; ++i) s += (i ? ", " : ": ") + answers[i];
    if (answers.size() > 3) s += ", …";
    return s;
}

RuntimeValue eval_step(Fn f, const std::string& arg, RuntimeValue* in, size_t n_in,
                       const KnowledgeBase& kb, int pos) {
    switch (f) {
        case Fn::FindAll: {
            std::vector<EntityId> all(kb.n_entities());
            for (EntityId e = 0; e < all.size(); ++e) all[e] = e;
            return make_entities(std::move(all));
        }
        case Fn::Find:
            return make_entities(resolve_entity_or_throw(kb, arg, pos));
        case Fn::FilterConcept: {
            auto cs = resolve_concept_or_throw(kb, arg, pos);  // argument errors first, like the other filters
            auto es = as_entity_set(in[0], f, pos);
            std::vector<EntityId> members;
            for (ConceptId c : cs) {
                auto inst = kb.instances_of(c);
                members.insert(members.end(), inst.begin(), inst.end());
            }
            std::sort(members.begin(), members.end());
            members.erase(std::unique(members.begin(), members.end()), members.end());
            std::vector<EntityId> kept;
            std::set_intersection(es.begin(), es.end(), members.begin(), members.end(),
                                  std::back_inserter(kept));
            return make_entities(std::move(kept));
        }
        case Fn::FilterStr: {
            auto p = parts_or_throw(arg, 2, f, pos);
            Literal q = Literal::str(p[1]);
            return filter_attr(kb, as_entity_set(in[0], f, pos), p[0],
                               [&](const Literal& v) { return compare_literals(v, CompareOp::Eq, q); });
        }
        case Fn::FilterNum:
        case Fn::FilterYear:
        case Fn::FilterDate: {
            auto p = parts_or_throw(arg, 3, f, pos);
            LiteralKind k = f == Fn::FilterNum    ? LiteralKind::Quantity
                            : f == Fn::FilterYear ? LiteralKind::Year
                                                  : LiteralKind::Date;
            Literal q = typed_or_throw(k, p[1], pos);
            CompareOp op = op_or_throw(p[2], pos);
            return filter_attr(kb, as_entity_set(in[0], f, pos), p[0],
                               [&](const Literal& v) { return compare_literals(v, op, q); });
        }
        case Fn::QFilterStr: {
            auto p = parts_or_throw(arg, 2, f, pos);
            Literal q = Literal::str(p[1]);
            return qfilter(kb, in[0], p[0],
                           [&](const Literal& v) { return compare_literals(v, CompareOp::Eq, q); }, f, pos);
        }
        case Fn::QFilterNum:
        case Fn::QFilterYear:
        case Fn::QFilterDate: {
            auto p = parts_or_throw(arg, 3, f, pos);
            LiteralKind k = f == Fn::QFilterNum    ? LiteralKind::Quantity
                            : f == Fn::QFilterYear ? LiteralKind::Year
                                                   : LiteralKind::Date;
            Literal q = typed_or_throw(k, p[1], pos);
            CompareOp op = op_or_throw(p[2], pos);
            return qfilter(kb, in[0], p[0],
                           [&](const Literal& v) { return compare_literals(v, op, q); }, f, pos);
        }
        case Fn::Relate: {
            RelateArg ra = parse_relate_arg(arg);
            auto rels = resolve_relation_or_throw(kb, ra.relation_label, pos);
            return relate(kb, as_entity_set(in[0], f, pos), rels, ra.forward);
        }
        case Fn::And:
        case Fn::Or: {
            auto a = as_entity_set(in[0], f, pos);
            auto b = as_entity_set(in[1], f, pos);
            std::vector<EntityId> out;
            if (f == Fn::And)
                std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
            else
                std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
            return make_entities(std::move(out));
        }
        case Fn::QueryName: {
            std::vector<std::string> names;
            for (EntityId e : as_entity_set(in[0], f, pos)) names.push_back(kb.entity_labels[e]);
            return make_strings(std::move(names));
        }
        case Fn::Count: {
            RuntimeValue v;
            v.kind = ValueKind::Number;
            v.number = static_cast<long long>(as_entity_set(in[0], f, pos).size());
            return v;
        }
        case Fn::QueryAttr: {
            auto p = parts_or_throw(arg, 1, f, pos);
            std::string nkey = normalize_label(p[0]);
            std::vector<Literal> vals;
            for (EntityId e : as_entity_set(in[0], f, pos))
                for (const auto& a : kb.entity_attrs[e])
                    if (normalize_label(a.key) == nkey) vals.push_back(a.value);
            return make_values(std::move(vals));
        }
        case Fn::QueryAttrUnderCondition: {
            auto p = parts_or_throw(arg, 3, f, pos);
            std::string nkey = normalize_label(p[0]);
            std::string nqkey = normalize_label(p[1]);
            Literal qv = parse_literal_guess(p[2]);
            std::vector<Literal> vals;
            for (EntityId e : as_entity_set(in[0], f, pos))
                for (const auto& a : kb.entity_attrs[e]) {
                    if (normalize_label(a.key) != nkey) continue;
                    for (const auto& q : a.qualifiers)
                        if (normalize_label(q.key) == nqkey &&
                            compare_literals(q.value, CompareOp::Eq, qv)) {
                            vals.push_back(a.value);
                            break;
                        }
                }
            return make_values(std::move(vals));
        }
        case Fn::QueryRelation: {
            // category Relation for parser symmetry; semantics need no argument
            if (!is_blank(arg)) resolve_relation_or_throw(kb, arg, pos);
            auto a = as_entity_set(in[0], f, pos);
            auto b = as_entity_set(in[1], f, pos);
            std::vector<std::string> preds;
            for (EntityId e : a)
                for (std::uint32_t ti : kb.triples_out(e))
                    if (std::binary_search(b.begin(), b.end(), kb.triples[ti].tail))
                        preds.push_back(kb.relation_labels[kb.triples[ti].rel]);
            return make_strings(std::move(preds));
        }
        case Fn::SelectBetween: {
            auto p = parts_or_throw(arg, 2, f, pos);
            bool want_max = select_wants_max(p[1], pos);
            auto a = as_entity_set(in[0], f, pos);
            auto b = as_entity_set(in[1], f, pos);
            std::vector<EntityId> both;
            std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
            return select_extremum(kb, both, p[0], want_max);
        }
        case Fn::SelectAmong: {
            auto p = parts_or_throw(arg, 2, f, pos);
            bool want_max = select_wants_max(p[1], pos);
            return select_extremum(kb, as_entity_set(in[0], f, pos), p[0], want_max);
        }
        case Fn::VerifyStr:
        case Fn::VerifyNum:
        case Fn::VerifyYear:
        case Fn::VerifyDate: {
            if (in[0].kind != ValueKind::Values)
                throw ExecError(ExecErrorKind::TypeMismatch, pos,
                                std::string(fn_info(f).name) + " needs attribute values, got " +
                                    kind_name(in[0].kind));
            RuntimeValue v;
            v.kind = ValueKind::Boolean;
            if (f == Fn::VerifyStr) {
                auto p = parts_or_throw(arg, 1, f, pos);
                std::string want = normalize_label(p[0]);
                v.boolean = std::any_of(in[0].values.begin(), in[0].values.end(),
                                        [&](const Literal& x) { return normalize_label(x.render()) == want; });
            } else {
                auto p = parts_or_throw(arg, 2, f, pos);
                LiteralKind k = f == Fn::VerifyNum    ? LiteralKind::Quantity
                                : f == Fn::VerifyYear ? LiteralKind::Year
                                                      : LiteralKind::Date;
                Literal q = typed_or_throw(k, p[0], pos);
                CompareOp op = op_or_throw(p[1], pos);
                v.boolean = std::any_of(in[0].values.begin(), in[0].values.end(),
                                        [&](const Literal& x) { return compare_literals(x, op, q); });
            }
            return v;
        }
        case Fn::QueryAttrQualifier: {
            auto p = parts_or_throw(arg, 3, f, pos);
            std::string nkey = normalize_label(p[0]);
            Literal want = parse_literal_guess(p[1]);
            std::string nqkey = normalize_label(p[2]);
            std::vector<Literal> vals;
            for (EntityId e : as_entity_set(in[0], f, pos))
                for (const auto& a : kb.entity_attrs[e]) {
                    if (normalize_label(a.key) != nkey) continue;
                    if (!compare_literals(a.value, CompareOp::Eq, want)) continue;
                    for (const auto& q : a.qualifiers)
                        if (normalize_label(q.key) == nqkey) vals.push_back(q.value);
                }
            return make_values(std::move(vals));
        }
        case Fn::QueryRelationQualifier: {
            auto p = parts_or_throw(arg, 2, f, pos);
            auto rels = kb.resolve_relation(p[0]);  // free-text predicate: no match -> empty
            std::string nqkey = normalize_label(p[1]);
            auto a = as_entity_set(in[0], f, pos);
            auto b = as_entity_set(in[1], f, pos);
            std::vector<Literal> vals;
            for (EntityId e : a)
                for (std::uint32_t ti : kb.triples_out(e)) {
                    const Triple& t = kb.triples[ti];
                    if (std::find(rels.begin(), rels.end(), t.rel) == rels.end()) continue;
                    if (!std::binary_search(b.begin(), b.end(), t.tail)) continue;
                    for (const auto& q : t.qualifiers)
                        if (normalize_label(q.key) == nqkey) vals.push_back(q.value);
                }
            return make_values(std::move(vals));
        }
        case Fn::Start:
        case Fn::End:
            break;  // handled by the driver loop
    }
    (void)n_in;
    throw ExecError(ExecErrorKind::BadArgument, pos, "unreachable function dispatch");
}

}  // namespace

std::vector<std::string> render_answers(const RuntimeValue& v, const KnowledgeBase& kb) {
    std::vector<std::string> out;
    switch (v.kind) {
        case ValueKind::Entities:
        case ValueKind::EntitiesWithFacts: {
            std::vector<EntityId> es = v.entities;
            std::sort(es.begin(), es.end());
            es.erase(std::unique(es.begin(), es.end()), es.end());
            for (EntityId e : es) out.push_back(kb.entity_labels[e]);
            break;
        }
        case ValueKind::Values:
            for (const auto& x : v.values) out.push_back(x.render());
            break;
        case ValueKind::Strings:
            out = v.strings;
            break;
        case ValueKind::Number:
            out.push_back(std::to_string(v.number));
            return out;
        case ValueKind::Boolean:
            out.push_back(v.boolean ? "yes" : "no");
            return out;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

ExecutionResult execute(const Program& program, const KnowledgeBase& kb) {
    std::vector<RuntimeValue> stack;
    ExecutionResult res;
    bool ended = false;
    for (size_t i = 0; i < program.tokens.size(); ++i) {
        Fn f = program.tokens[i];
        int pos = static_cast<int>(i);
        if (ended)
            throw ExecError(ExecErrorKind::TokenAfterEnd, pos,
                            "token after <END> at position " + std::to_string(pos));
        if (f == Fn::Start)
            throw ExecError(ExecErrorKind::StartToken, pos,
                            "<START> inside program at position " + std::to_string(pos));
        if (f == Fn::End) {
            if (stack.size() != 1)
                throw ExecError(ExecErrorKind::Leftover, pos,
                                "stack holds " + std::to_string(stack.size()) + " values at <END>, want 1");
            ended = true;
            continue;
        }
        const FnInfo& info = fn_info(f);
        if (stack.size() < static_cast<size_t>(info.arity))
            throw ExecError(ExecErrorKind::StackUnderflow, pos,
                            std::string(info.name) + " at position " + std::to_string(pos) + " pops " +
                                std::to_string(info.arity) + " but stack holds " +
                                std::to_string(stack.size()));
        static const std::string kNoArg;
        const std::string& arg = i < program.args.size() ? program.args[i] : kNoArg;
        RuntimeValue* in = stack.data() + (stack.size() - info.arity);
        RuntimeValue out = eval_step(f, arg, in, info.arity, kb, pos);
        stack.resize(stack.size() - info.arity);
        stack.push_back(std::move(out));
        res.trace.push_back({f, arg, summarize(stack.back(), kb)});
    }
    if (!ended)
        throw ExecError(ExecErrorKind::MissingEnd, static_cast<int>(program.tokens.size()),
                        "program does not end with <END>");
    res.value = std::move(stack.back());
    res.answers = render_answers(res.value, kb);
    return res;
}

}  // namespace kbqa
