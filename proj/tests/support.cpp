#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kbqa/literal.hpp"

namespace fs = std::filesystem;

namespace kbqa::test {

KnowledgeBase make_fixture() {
    KnowledgeBase kb;
    kb.concept_labels = {"sports team", "sports facility", "sports team owner", "human",
                         "organization"};
    kb.concept_parents = {{4}, {}, {}, {}, {}};
    kb.relation_labels = {"arena stadium", "teams owned"};
    kb.relation_domain = {{0}, {2}};
    kb.relation_range = {{1}, {0}};
    kb.entity_labels = {"FC Barcelona", "Camp Nou", "Steve Bisciotti", "Baltimore Ravens"};
    kb.entity_types = {{0}, {1}, {2, 3}, {0}};
    kb.entity_attrs.resize(4);
    kb.triples.push_back(Triple{0, 0, 1, {}});
    kb.triples.push_back(Triple{2, 1, 3, {}});
    kb.finalize();
    return kb;
}

KnowledgeBase random_kb(Rng& rng, std::size_t max_entities) {
    static const char* kKind[] = {"creature", "place", "tool", "plant", "event", "band"};
    static const char* kAdj[] = {"red", "tall", "old", "grey", "quiet", "round"};
    static const char* kNoun[] = {"fox", "mill", "oak", "stone", "river", "bell"};
    static const char* kLink[] = {"near", "holds", "made", "faces", "follows"};
    static const char* kKey[] = {"size", "mass", "rank", "opened", "born"};
    static const char* kStrVal[] = {"red", "blue", "green", "worn"};
    static const char* kUnit[] = {"", "m", "kg"};
    static const char* kQKey[] = {"since", "until", "grade"};

    KnowledgeBase kb;
    int n_c = uniform_int(rng, 1, 6);
    for (int c = 0; c < n_c; ++c) {
        kb.concept_labels.emplace_back(kKind[c]);
        std::vector<ConceptId> ps;
        if (c > 0 && uniform(rng, 0, 1) < 0.4)
            ps.push_back(static_cast<ConceptId>(uniform_index(rng, static_cast<std::size_t>(c))));
        kb.concept_parents.push_back(std::move(ps));
    }
    auto concept_subset = [&]() {
        std::vector<ConceptId> s;
        for (int c = 0; c < n_c; ++c)
            if (uniform(rng, 0, 1) < 0.35) s.push_back(static_cast<ConceptId>(c));
        return s;
    };
    int n_r = uniform_int(rng, 1, 5);
    for (int r = 0; r < n_r; ++r) {
        kb.relation_labels.emplace_back(kLink[r]);
        kb.relation_domain.push_back(concept_subset());
        kb.relation_range.push_back(concept_subset());
    }
    auto rand_literal = [&]() -> Literal {
        switch (uniform_index(rng, 4)) {
            case 0: return Literal::str(kStrVal[uniform_index(rng, 4)]);
            case 1:
                return Literal::quantity(static_cast<double>(uniform_int(rng, -3, 9)),
                                         kUnit[uniform_index(rng, 3)]);
            case 2: return Literal::of_year(uniform_int(rng, 1990, 2005));
            default:
                return Literal::of_date(
                    CalendarDate{2020, uniform_int(rng, 1, 3), uniform_int(rng, 1, 5)});
        }
    };
    auto rand_qualifiers = [&]() {
        std::vector<QualifiedValue> qs;
        int n = uniform_int(rng, 0, 2);
        for (int i = 0; i < n; ++i)
            qs.push_back(QualifiedValue{kQKey[uniform_index(rng, 3)], rand_literal()});
        return qs;
    };
    std::size_t n_e = static_cast<std::size_t>(
        uniform_int(rng, 2, static_cast<int>(std::max<std::size_t>(2, max_entities))));
    for (std::size_t e = 0; e < n_e; ++e) {
        std::string label;
        if (e > 0 && uniform(rng, 0, 1) < 0.1) {
            label = kb.entity_labels[uniform_index(rng, e)];  // duplicate label on purpose
        } else {
            label = std::string(kAdj[uniform_index(rng, 6)]) + " " + kNoun[uniform_index(rng, 6)] +
                    " " + std::to_string(e);
        }
        kb.entity_labels.push_back(std::move(label));
        std::vector<ConceptId> types;
        int n_t = uniform_int(rng, 0, 2);
        for (int i = 0; i < n_t; ++i)
            types.push_back(static_cast<ConceptId>(uniform_index(rng, static_cast<std::size_t>(n_c))));
        kb.entity_types.push_back(std::move(types));
        std::vector<AttributeFact> attrs;
        int n_a = uniform_int(rng, 0, 3);
        for (int i = 0; i < n_a; ++i)
            attrs.push_back(
                AttributeFact{kKey[uniform_index(rng, 5)], rand_literal(), rand_qualifiers()});
        kb.entity_attrs.push_back(std::move(attrs));
    }
    int n_t = uniform_int(rng, 0, static_cast<int>(3 * n_e));
    for (int i = 0; i < n_t; ++i) {
        Triple t;
        t.head = static_cast<EntityId>(uniform_index(rng, n_e));
        t.rel = static_cast<RelationId>(uniform_index(rng, static_cast<std::size_t>(n_r)));
        t.tail = static_cast<EntityId>(uniform_index(rng, n_e));
        t.qualifiers = rand_qualifiers();
        kb.triples.push_back(std::move(t));
    }
    kb.finalize();
    return kb;
}

namespace {

const std::string& pick(Rng& rng, const std::vector<std::string>& bag) {
    return bag[uniform_index(rng, bag.size())];
}

struct ArgBags {
    std::vector<std::string> entities, concepts, relations, keys, qkeys;
    std::vector<std::string> strs, nums, years, dates, any;
    std::vector<std::string> ops = {"=", "!=", "<", ">"};
    std::vector<std::string> sels = {"greater", "less", "largest", "smallest"};

    explicit ArgBags(const KnowledgeBase& kb) {
        entities = kb.entity_labels;
        entities.push_back("nobody in particular");
        concepts = kb.concept_labels;
        concepts.push_back("phantom kind");
        for (const auto& r : kb.relation_labels) {
            relations.push_back(r);
            relations.push_back(r + " forward");
            relations.push_back(r + " backward");
        }
        relations.push_back("missing link");
        auto add_value = [&](const Literal& v) {
            switch (v.kind) {
                case LiteralKind::String: strs.push_back(v.text); break;
                case LiteralKind::Quantity: nums.push_back(v.render()); break;
                case LiteralKind::Year: years.push_back(v.render()); break;
                case LiteralKind::Date: dates.push_back(v.render()); break;
            }
        };
        for (const auto& attrs : kb.entity_attrs)
            for (const auto& a : attrs) {
                keys.push_back(a.key);
                add_value(a.value);
                for (const auto& q : a.qualifiers) {
                    qkeys.push_back(q.key);
                    add_value(q.value);
                }
            }
        for (const auto& t : kb.triples)
            for (const auto& q : t.qualifiers) {
                qkeys.push_back(q.key);
                add_value(q.value);
            }
        keys.push_back("absent key");
        qkeys.push_back("absent qualifier");
        strs.insert(strs.end(), {"unknown", "red"});
        nums.insert(nums.end(), {"2", "-1 m"});
        years.push_back("2001");
        dates.push_back("2020-01-02");
        for (const auto* bag : {&strs, &nums, &years, &dates})
            any.insert(any.end(), bag->begin(), bag->end());
    }
};

std::string argument_for(Rng& rng, Fn f, const ArgBags& b) {
    auto join = [](std::initializer_list<std::string> parts) {
        return join_literal_parts(std::vector<std::string>(parts));
    };
    switch (fn_info(f).category) {
        case ArgCategory::Entity: return pick(rng, b.entities);
        case ArgCategory::Concept: return pick(rng, b.concepts);
        case ArgCategory::Relation:
            if (f == Fn::QueryRelation && uniform(rng, 0, 1) < 0.7) return "";
            return pick(rng, b.relations);
        case ArgCategory::Empty: return "";
        case ArgCategory::LiteralText: break;
    }
    switch (f) {
        case Fn::FilterStr:
        case Fn::QFilterStr: return join({pick(rng, b.keys), pick(rng, b.strs)});
        case Fn::FilterNum:
        case Fn::QFilterNum:
            return join({pick(rng, b.keys), pick(rng, b.nums), pick(rng, b.ops)});
        case Fn::FilterYear:
        case Fn::QFilterYear:
            return join({pick(rng, b.keys), pick(rng, b.years), pick(rng, b.ops)});
        case Fn::FilterDate:
        case Fn::QFilterDate:
            return join({pick(rng, b.keys), pick(rng, b.dates), pick(rng, b.ops)});
        case Fn::QueryAttr: return pick(rng, b.keys);
        case Fn::QueryAttrUnderCondition:
            return join({pick(rng, b.keys), pick(rng, b.qkeys), pick(rng, b.any)});
        case Fn::SelectBetween:
        case Fn::SelectAmong: return join({pick(rng, b.keys), pick(rng, b.sels)});
        case Fn::VerifyStr: return pick(rng, b.strs);
        case Fn::VerifyNum: return join({pick(rng, b.nums), pick(rng, b.ops)});
        case Fn::VerifyYear: return join({pick(rng, b.years), pick(rng, b.ops)});
        case Fn::VerifyDate: return join({pick(rng, b.dates), pick(rng, b.ops)});
        case Fn::QueryAttrQualifier:
            return join({pick(rng, b.keys), pick(rng, b.any), pick(rng, b.qkeys)});
        case Fn::QueryRelationQualifier:
            return join({parse_relate_arg(pick(rng, b.relations)).relation_label,
                         pick(rng, b.qkeys)});
        default: return "";
    }
}

}  // namespace

Program random_program(Rng& rng, const KnowledgeBase& kb, int max_fns) {
    ArgBags bags(kb);
    Program p;
    StackSim sim;
    int remaining = max_fns + 1;  // End included
    while (true) {
        std::vector<Fn> allowed;
        for (int i = 0; i < kNumFn; ++i) {
            Fn f = fn_at(i);
            if (f == Fn::Start) continue;
            if (token_allowed(sim, f, remaining)) allowed.push_back(f);
        }
        Fn f = allowed[uniform_index(rng, allowed.size())];
        bool can_end = std::find(allowed.begin(), allowed.end(), Fn::End) != allowed.end();
        if (can_end && uniform(rng, 0, 1) < 0.3) f = Fn::End;
        p.tokens.push_back(f);
        if (f == Fn::End) {
            p.args.emplace_back();
            break;
        }
        std::string arg = argument_for(rng, f, bags);
        if (uniform(rng, 0, 1) < 0.03) arg = "#junk#";  // exercise the error paths
        p.args.push_back(std::move(arg));
        sim.apply(f);
        --remaining;
    }
    return p;
}

KnowledgeBase partitioned_kb(std::size_t n_blocks, std::size_t relations_per_block,
                             std::size_t ents_per_block) {
    KnowledgeBase kb;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        kb.concept_labels.push_back("kind " + std::to_string(b));
        kb.concept_parents.push_back({});
    }
    for (std::size_t b = 0; b < n_blocks; ++b)
        for (std::size_t r = 0; r < relations_per_block; ++r) {
            kb.relation_labels.push_back("link " + std::to_string(b) + "." + std::to_string(r));
            kb.relation_domain.push_back({static_cast<ConceptId>(b)});
            kb.relation_range.push_back({static_cast<ConceptId>(b)});
        }
    for (std::size_t b = 0; b < n_blocks; ++b)
        for (std::size_t e = 0; e < ents_per_block; ++e) {
            kb.entity_labels.push_back("item " + std::to_string(b) + "." + std::to_string(e));
            kb.entity_types.push_back({static_cast<ConceptId>(b)});
            kb.entity_attrs.push_back({});
        }
    for (std::size_t b = 0; b < n_blocks; ++b) {
        EntityId base = static_cast<EntityId>(b * ents_per_block);
        for (std::size_t e = 0; e < ents_per_block; ++e) {
            RelationId rel = static_cast<RelationId>(b * relations_per_block + e % relations_per_block);
            EntityId head = base + static_cast<EntityId>(e);
            EntityId tail = base + static_cast<EntityId>((e + 1) % ents_per_block);
            kb.triples.push_back(Triple{head, rel, tail, {}});
        }
    }
    kb.finalize();
    return kb;
}

std::string kbqa_binary() {
    if (const char* env = std::getenv("KBQA_BIN")) return env;
#ifdef KBQA_BIN_PATH
    return KBQA_BIN_PATH;
#else
    throw std::runtime_error("KBQA_BIN not set");
#endif
}

std::string data_dir() {
#ifdef KBQA_DATA_DIR
    return KBQA_DATA_DIR;
#else
    throw std::runtime_error("KBQA_DATA_DIR not set");
#endif
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'')
            q += "'\\''";
        else
            q.push_back(c);
    }
    q.push_back('\'');
    return q;
}

}  // namespace

CmdResult run_cmd(const std::vector<std::string>& args) { return run_cmd_env({}, args); }

CmdResult run_cmd_env(const std::vector<std::string>& env, const std::vector<std::string>& args) {
    static int counter = 0;
    fs::path base = fs::temp_directory_path();
    std::string tag = std::to_string(::getpid()) + "." + std::to_string(counter++);
    fs::path out_path = base / ("kbqa-cmd-out." + tag);
    fs::path err_path = base / ("kbqa-cmd-err." + tag);
    std::string cmd = "env";
    for (const auto& e : env) cmd += " " + shell_quote(e);
    cmd += " " + shell_quote(kbqa_binary());
    for (const auto& a : args) cmd += " " + shell_quote(a);
    cmd += " > " + shell_quote(out_path.string()) + " 2> " + shell_quote(err_path.string());
    int status = std::system(cmd.c_str());
    if (status == -1) throw std::runtime_error("cannot spawn: " + cmd);
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
    r.out = read_file(out_path.string());
    r.err = read_file(err_path.string());
    fs::remove(out_path);
    fs::remove(err_path);
    return r;
}

TempDir::TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "kbqa-test-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (::mkdtemp(buf.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path = buf.data();
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
}

std::string TempDir::file(const std::string& name) const {
    return (fs::path(path) / name).string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

}  // namespace kbqa::test
