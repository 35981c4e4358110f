#include "kbqa/synth.hpp"

#include <algorithm>
#include <set>

#include "kbqa/executor.hpp"
#include "kbqa/rng.hpp"

namespace kbqa {
namespace {

// Content vocabulary for one domain. Labels across the two banks are fully
// disjoint; only the question-template scaffold words are shared.
struct WordBank {
    std::string person_parent;
    std::vector<std::string> person_types;  // direct instanceOf, 2 subtypes
    std::string org_type;
    std::string venue_type;
    std::string rel_p2o;  // person -> org
    std::string rel_o2v;  // org -> venue
    std::string rel_o2p;  // org -> person
    std::string str_key;  // string attribute on orgs
    std::vector<std::string> str_values;
    std::string num_key_person;  // quantity attribute on persons
    std::string year_key_org;    // year attribute on orgs
    std::string num_key_venue;   // quantity attribute on venues
    std::vector<std::string> first_names, last_names;
    std::vector<std::string> org_adjs, org_nouns;
    std::vector<std::string> venue_names;
};

WordBank source_bank() {
    WordBank b;
    b.person_parent = "performer";
    b.person_types = {"vocalist", "guitarist"};
    b.org_type = "ensemble";
    b.venue_type = "concert hall";
    b.rel_p2o = "perform with";
    b.rel_o2v = "rehearse at";
    b.rel_o2p = "feature";
    b.str_key = "style";
    b.str_values = {"jazz", "blues", "folk", "swing"};
    b.num_key_person = "albums recorded";
    b.year_key_org = "year formed";
    b.num_key_venue = "seating capacity";
    b.first_names = {"mara", "elio", "nina", "tove", "ruben", "isla",
                     "dario", "wren", "alba", "cosmo", "petra", "lior"};
    b.last_names = {"kestrel", "vance", "solano", "harrow", "quill",
                    "bellweather", "ashgrove", "finch", "moreau", "tern"};
    b.org_adjs = {"velvet", "midnight", "golden", "silver", "crimson", "wandering"};
    b.org_nouns = {"quartet", "orchestra", "troupe", "collective"};
    b.venue_names = {"amber rotunda", "ivory loft",   "cedar auditorium",
                     "marble terrace", "willow stage", "opal chamber"};
    return b;
}

WordBank target_bank() {
    WordBank b;
    b.person_parent = "athlete";
    b.person_types = {"striker", "goalkeeper"};
    b.org_type = "club";
    b.venue_type = "stadium";
    b.rel_p2o = "play for";
    b.rel_o2v = "train at";
    b.rel_o2p = "field";
    b.str_key = "league";
    b.str_values = {"premier", "continental", "regional", "national"};
    b.num_key_person = "goals scored";
    b.year_key_org = "year established";
    b.num_key_venue = "crowd limit";
    b.first_names = {"dax", "juno", "kai", "rex", "zara", "bo",
                     "silas", "uma", "jett", "colt", "mirela", "ade"};
    b.last_names = {"marlow", "draven", "okafor", "stone", "vega",
                    "ramsay", "holt", "iversen", "castillo", "brink"};
    b.org_adjs = {"northern", "rapid", "royal", "coastal", "iron", "thunder"};
    b.org_nouns = {"rovers", "rangers", "wanderers", "athletic"};
    b.venue_names = {"granite bowl", "summit grounds", "lakeside park",
                     "falcon field",  "victory dome",  "harbor pitch"};
    return b;
}

// Concept / entity layout of one generated domain.
struct World {
    KnowledgeBase kb;
    WordBank bank;
    ConceptId parent = 0, org_c = 0, venue_c = 0;
    std::vector<ConceptId> person_types;
    RelationId p2o = 0, o2v = 0, o2p = 0;
    std::vector<EntityId> persons, orgs, venues;
};

std::vector<long long> distinct_values(Rng& rng, std::size_t n, long long lo, long long step) {
    std::vector<long long> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = lo + static_cast<long long>(i) * step;
    std::shuffle(vals.begin(), vals.end(), rng);
    return vals;
}

World build_world(const SynthConfig& cfg, const WordBank& bank, Rng& rng) {
    World w;
    w.bank = bank;
    KnowledgeBase& kb = w.kb;

    auto add_concept = [&](const std::string& label) {
        kb.concept_labels.push_back(label);
        kb.concept_parents.emplace_back();
        return static_cast<ConceptId>(kb.concept_labels.size() - 1);
    };
    w.parent = add_concept(bank.person_parent);
    for (const auto& t : bank.person_types) {
        ConceptId c = add_concept(t);
        kb.concept_parents[c].push_back(w.parent);
        w.person_types.push_back(c);
    }
    w.org_c = add_concept(bank.org_type);
    w.venue_c = add_concept(bank.venue_type);

    auto add_relation = [&](const std::string& label) {
        kb.relation_labels.push_back(label);
        kb.relation_domain.emplace_back();
        kb.relation_range.emplace_back();
        return static_cast<RelationId>(kb.relation_labels.size() - 1);
    };
    w.p2o = add_relation(bank.rel_p2o);
    w.o2v = add_relation(bank.rel_o2v);
    w.o2p = add_relation(bank.rel_o2p);

    auto add_entity = [&](const std::string& label, ConceptId type) {
        kb.entity_labels.push_back(label);
        kb.entity_types.push_back({type});
        kb.entity_attrs.emplace_back();
        return static_cast<EntityId>(kb.entity_labels.size() - 1);
    };

    // persons: unique "first last" names, one direct subtype each
    std::vector<std::pair<std::size_t, std::size_t>> name_pairs;
    for (std::size_t i = 0; i < bank.first_names.size(); ++i)
        for (std::size_t j = 0; j < bank.last_names.size(); ++j) name_pairs.emplace_back(i, j);
    std::shuffle(name_pairs.begin(), name_pairs.end(), rng);
    if (static_cast<std::size_t>(cfg.persons) > name_pairs.size())
        throw DataError("persons exceeds the name bank size");
    auto person_vals = distinct_values(rng, static_cast<std::size_t>(cfg.persons), 3, 2);
    for (int i = 0; i < cfg.persons; ++i) {
        auto [f, l] = name_pairs[static_cast<std::size_t>(i)];
        ConceptId type = w.person_types[uniform_index(rng, w.person_types.size())];
        EntityId e = add_entity(bank.first_names[f] + " " + bank.last_names[l], type);
        kb.entity_attrs[e].push_back(
            {bank.num_key_person,
             Literal::quantity(static_cast<double>(person_vals[static_cast<std::size_t>(i)]), ""), {}});
        w.persons.push_back(e);
    }

    // orgs: "adj noun" names, a style/league string and a year attribute
    std::vector<std::pair<std::size_t, std::size_t>> org_pairs;
    for (std::size_t i = 0; i < bank.org_adjs.size(); ++i)
        for (std::size_t j = 0; j < bank.org_nouns.size(); ++j) org_pairs.emplace_back(i, j);
    std::shuffle(org_pairs.begin(), org_pairs.end(), rng);
    if (static_cast<std::size_t>(cfg.orgs) > org_pairs.size())
        throw DataError("orgs exceeds the name bank size");
    auto org_years = distinct_values(rng, static_cast<std::size_t>(cfg.orgs), 1950, 1);
    for (int i = 0; i < cfg.orgs; ++i) {
        auto [a, n] = org_pairs[static_cast<std::size_t>(i)];
        EntityId e = add_entity(bank.org_adjs[a] + " " + bank.org_nouns[n], w.org_c);
        kb.entity_attrs[e].push_back(
            {bank.str_key, Literal::str(bank.str_values[uniform_index(rng, bank.str_values.size())]), {}});
        kb.entity_attrs[e].push_back(
            {bank.year_key_org, Literal::of_year(static_cast<int>(org_years[static_cast<std::size_t>(i)])), {}});
        w.orgs.push_back(e);
    }

    if (static_cast<std::size_t>(cfg.venues) > bank.venue_names.size())
        throw DataError("venues exceeds the name bank size");
    auto venue_vals = distinct_values(rng, static_cast<std::size_t>(cfg.venues), 200, 75);
    for (int i = 0; i < cfg.venues; ++i) {
        EntityId e = add_entity(bank.venue_names[static_cast<std::size_t>(i)], w.venue_c);
        kb.entity_attrs[e].push_back(
            {bank.num_key_venue,
             Literal::quantity(static_cast<double>(venue_vals[static_cast<std::size_t>(i)]), ""), {}});
        w.venues.push_back(e);
    }

    // triples: each person joins >=1 org (mirrored org->person), each org uses one venue
    auto add_triple = [&](EntityId h, RelationId r, EntityId t) { kb.triples.push_back({h, r, t, {}}); };
    for (EntityId p : w.persons) {
        EntityId org = w.orgs[uniform_index(rng, w.orgs.size())];
        add_triple(p, w.p2o, org);
        add_triple(org, w.o2p, p);
        if (uniform(rng, 0, 1) < cfg.second_membership) {
            EntityId org2 = w.orgs[uniform_index(rng, w.orgs.size())];
            if (org2 != org) {
                add_triple(p, w.p2o, org2);
                add_triple(org2, w.o2p, p);
            }
        }
    }
    for (EntityId o : w.orgs) add_triple(o, w.o2v, w.venues[uniform_index(rng, w.venues.size())]);

    // dom/ran derived from the triples' direct types, keeping gold arguments
    // inside their pruned pools by construction
    for (const Triple& t : kb.triples) {
        auto& dom = kb.relation_domain[t.rel];
        auto& ran = kb.relation_range[t.rel];
        for (ConceptId c : kb.entity_types[t.head])
            if (std::find(dom.begin(), dom.end(), c) == dom.end()) dom.push_back(c);
        for (ConceptId c : kb.entity_types[t.tail])
            if (std::find(ran.begin(), ran.end(), c) == ran.end()) ran.push_back(c);
    }

    kb.finalize();
    return w;
}

struct Drafted {
    std::string question;
    Program program;
};

Program make_program(std::vector<std::pair<Fn, std::string>> steps) {
    Program p;
    for (auto& [fn, arg] : steps) {
        p.tokens.push_back(fn);
        p.args.push_back(std::move(arg));
    }
    p.tokens.push_back(Fn::End);
    p.args.emplace_back();
    return p;
}

std::string lit(const std::string& a, const std::string& b) {
    return join_literal_parts({a, b});
}

// One question per call; anchors sampled from the world's actual graph so
// execution is non-empty by construction.
Drafted draft_question(const World& w, Rng& rng) {
    const KnowledgeBase& kb = w.kb;
    const WordBank& b = w.bank;
    auto elabel = [&](EntityId e) { return kb.entity_labels[e]; };
    auto pick = [&](const std::vector<EntityId>& xs) { return xs[uniform_index(rng, xs.size())]; };

    // org of a person / venue of an org, following an existing triple
    auto hop = [&](EntityId head, RelationId r) {
        std::vector<EntityId> tails;
        for (auto ti : kb.triples_out(head))
            if (kb.triples[ti].rel == r) tails.push_back(kb.triples[ti].tail);
        return tails[uniform_index(rng, tails.size())];
    };
    auto str_value_of = [&](EntityId e) {
        for (const auto& f : kb.entity_attrs[e])
            if (f.key == b.str_key) return f.value.text;
        throw DataError("org without a " + b.str_key + " attribute");
    };

    double roll = uniform(rng, 0, 1);
    Drafted d;
    if (roll < 0.45) {  // composition
        int variant = uniform_int(rng, 0, 3);
        if (variant == 0) {  // person -> org
            EntityId p = pick(w.persons);
            d.question = "which " + b.org_type + " does " + elabel(p) + " " + b.rel_p2o;
            d.program = make_program({{Fn::Find, elabel(p)},
                                      {Fn::Relate, b.rel_p2o},
                                      {Fn::FilterConcept, b.org_type},
                                      {Fn::QueryName, ""}});
        } else if (variant == 1) {  // org -> venue
            EntityId o = pick(w.orgs);
            d.question = "which " + b.venue_type + " does " + elabel(o) + " " + b.rel_o2v;
            d.program = make_program({{Fn::Find, elabel(o)},
                                      {Fn::Relate, b.rel_o2v},
                                      {Fn::FilterConcept, b.venue_type},
                                      {Fn::QueryName, ""}});
        } else if (variant == 2) {  // person -> org -> venue
            EntityId p = pick(w.persons);
            d.question = "which " + b.venue_type + " does the " + b.org_type + " that " +
                         elabel(p) + " " + b.rel_p2o + " " + b.rel_o2v;
            d.program = make_program({{Fn::Find, elabel(p)},
                                      {Fn::Relate, b.rel_p2o},
                                      {Fn::FilterConcept, b.org_type},
                                      {Fn::Relate, b.rel_o2v},
                                      {Fn::FilterConcept, b.venue_type},
                                      {Fn::QueryName, ""}});
        } else {  // attribute query
            int which = uniform_int(rng, 0, 2);
            EntityId e = which == 0 ? pick(w.persons) : which == 1 ? pick(w.orgs) : pick(w.venues);
            const std::string& key =
                which == 0 ? b.num_key_person : which == 1 ? b.year_key_org : b.num_key_venue;
            d.question = "what is the " + key + " of " + elabel(e);
            d.program = make_program({{Fn::Find, elabel(e)}, {Fn::QueryAttr, key}});
        }
    } else if (roll < 0.85) {  // conjunction
        EntityId p = pick(w.persons);
        EntityId org = hop(p, w.p2o);
        std::string v = str_value_of(org);
        d.question = "which " + b.org_type + " with " + b.str_key + " " + v + " does " +
                     elabel(p) + " " + b.rel_p2o;
        d.program = make_program({{Fn::FindAll, ""},
                                  {Fn::FilterStr, lit(b.str_key, v)},
                                  {Fn::Find, elabel(p)},
                                  {Fn::Relate, b.rel_p2o},
                                  {Fn::And, ""},
                                  {Fn::FilterConcept, b.org_type},
                                  {Fn::QueryName, ""}});
    } else if (roll < 0.93) {  // counting
        if (uniform_int(rng, 0, 1) == 0) {
            EntityId org = pick(w.orgs);
            std::string v = str_value_of(org);
            d.question = "how many " + b.org_type + " have " + b.str_key + " " + v;
            d.program = make_program({{Fn::FindAll, ""},
                                      {Fn::FilterStr, lit(b.str_key, v)},
                                      {Fn::FilterConcept, b.org_type},
                                      {Fn::Count, ""}});
        } else {
            EntityId org = pick(w.orgs);
            EntityId member = hop(org, w.o2p);
            const std::string& type = kb.concept_labels[kb.entity_types[member][0]];
            d.question = "how many " + type + " does " + elabel(org) + " " + b.rel_o2p;
            d.program = make_program({{Fn::Find, elabel(org)},
                                      {Fn::Relate, b.rel_o2p},
                                      {Fn::FilterConcept, type},
                                      {Fn::Count, ""}});
        }
    } else {  // comparison
        if (uniform_int(rng, 0, 1) == 0) {
            EntityId a = pick(w.persons), c = pick(w.persons);
            while (c == a) c = pick(w.persons);
            bool more = uniform_int(rng, 0, 1) == 0;
            const char* op = more ? "greater" : "less";
            d.question = std::string("who has the ") + op + " " + b.num_key_person + " " +
                         elabel(a) + " or " + elabel(c);
            d.program = make_program({{Fn::Find, elabel(a)},
                                      {Fn::Find, elabel(c)},
                                      {Fn::SelectBetween, lit(b.num_key_person, op)}});
        } else {
            bool largest = uniform_int(rng, 0, 1) == 0;
            const char* op = largest ? "largest" : "smallest";
            d.question = std::string("which ") + b.venue_type + " has the " + op + " " + b.num_key_venue;
            d.program = make_program({{Fn::FindAll, ""},
                                      {Fn::FilterConcept, b.venue_type},
                                      {Fn::SelectAmong, lit(b.num_key_venue, op)}});
        }
    }
    return d;
}

Dataset draft_dataset(const World& w, int n, Rng& rng, bool keep_program) {
    Dataset out;
    std::set<std::string> seen;
    int duplicates_allowed = 0;
    while (static_cast<int>(out.size()) < n) {
        Drafted d;
        bool fresh = false;
        for (int attempt = 0; attempt < 50; ++attempt) {
            d = draft_question(w, rng);
            if (!seen.count(d.question)) {
                fresh = true;
                break;
            }
        }
        if (!fresh && ++duplicates_allowed > n) throw DataError("question space exhausted");
        seen.insert(d.question);
        ExecutionResult res = execute(d.program, w.kb);
        if (res.answers.empty()) continue;  // generator contract: non-empty answers
        Example ex;
        ex.question = d.question;
        ex.answers = res.answers;
        ex.literal_spans = literal_spans_of(d.program);
        if (keep_program) ex.program = d.program;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

SynthOutput generate_synthetic_domains(const SynthConfig& cfg) {
    if (cfg.n_source <= 0 || cfg.n_target <= 0 || cfg.persons <= 0 || cfg.orgs <= 0 ||
        cfg.venues <= 0)
        throw DataError("synthetic sizes must be positive");
    Rng rng(cfg.seed);
    SynthOutput out;
    World ws = build_world(cfg, source_bank(), rng);
    World wt = build_world(cfg, target_bank(), rng);
    out.source = draft_dataset(ws, cfg.n_source, rng, /*keep_program=*/true);
    out.target_gold = draft_dataset(wt, cfg.n_target, rng, /*keep_program=*/true);
    out.target = out.target_gold;
    for (Example& ex : out.target) ex.program.reset();
    out.kb_source = std::move(ws.kb);
    out.kb_target = std::move(wt.kb);
    return out;
}

}  // namespace kbqa
