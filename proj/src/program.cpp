#include "kbqa/program.hpp"

#include <array>
#include <cctype>
#include <unordered_map>

#include "json.hpp"
#include "kbqa/text.hpp"

namespace kbqa {

namespace {

// Indexed by Fn value.
const std::array<FnInfo, kNumFn> kFnTable = {{
    {"FindAll", 0, ArgCategory::Empty, ValueKind::Entities},
    {"Find", 0, ArgCategory::Entity, ValueKind::Entities},
    {"FilterConcept", 1, ArgCategory::Concept, ValueKind::Entities},
    {"FilterStr", 1, ArgCategory::LiteralText, ValueKind::EntitiesWithFacts},
    {"FilterNum", 1, ArgCategory::LiteralText, ValueKind::EntitiesWithFacts},
    {"FilterYear", 1, ArgCategory::LiteralText, ValueKind::EntitiesWithFacts},
    {"FilterDate", 1, ArgCategory::LiteralText, ValueKind::EntitiesWithFacts},
    {"QFilterStr", 1, ArgCategory::LiteralText, ValueKind::EntitiesWithFacts},
    {"QFilterNum", 1, ArgCategory::LiteralText, ValueKind::EntitiesWithFacts},
    {"QFilterYear", 1, ArgCategory::LiteralText, ValueKind::EntitiesWithFacts},
    {"QFilterDate", 1, ArgCategory::LiteralText, ValueKind::EntitiesWithFacts},
    {"Relate", 1, ArgCategory::Relation, ValueKind::EntitiesWithFacts},
    {"And", 2, ArgCategory::Empty, ValueKind::Entities},
    {"Or", 2, ArgCategory::Empty, ValueKind::Entities},
    {"QueryName", 1, ArgCategory::Empty, ValueKind::Strings},
    {"Count", 1, ArgCategory::Empty, ValueKind::Number},
    {"QueryAttr", 1, ArgCategory::LiteralText, ValueKind::Values},
    {"QueryAttrUnderCondition", 1, ArgCategory::LiteralText, ValueKind::Values},
    {"QueryRelation", 2, ArgCategory::Relation, ValueKind::Strings},
    {"SelectBetween", 2, ArgCategory::LiteralText, ValueKind::Strings},
    {"SelectAmong", 1, ArgCategory::LiteralText, ValueKind::Strings},
    {"VerifyStr", 1, ArgCategory::LiteralText, ValueKind::Boolean},
    {"VerifyNum", 1, ArgCategory::LiteralText, ValueKind::Boolean},
    {"VerifyYear", 1, ArgCategory::LiteralText, ValueKind::Boolean},
    {"VerifyDate", 1, ArgCategory::LiteralText, ValueKind::Boolean},
    {"QueryAttrQualifier", 1, ArgCategory::LiteralText, ValueKind::Values},
    {"QueryRelationQualifier", 2, ArgCategory::LiteralText, ValueKind::Values},
    {"<START>", 0, ArgCategory::Empty, ValueKind::Entities},
    {"<END>", 0, ArgCategory::Empty, ValueKind::Entities},
}};

const std::unordered_map<std::string_view, Fn>& name_table() {
    static const auto* table = [] {
        auto* m = new std::unordered_map<std::string_view, Fn>;
        for (int i = 0; i < kNumFn; ++i) m->emplace(kFnTable[i].name, fn_at(i));
        return m;
    }();
    return *table;
}

}  // namespace

const FnInfo& fn_info(Fn f) { return kFnTable[fn_index(f)]; }

std::optional<Fn> fn_from_name(std::string_view name) {
    auto it = name_table().find(name);
    if (it == name_table().end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> split_literal_parts(std::string_view arg) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        size_t pos = arg.find(kLiteralSeparator, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(trim(arg.substr(start)));
            break;
        }
        parts.emplace_back(trim(arg.substr(start, pos - start)));
        start = pos + 1;
    }
    return parts;
}

std::string join_literal_parts(const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += kLiteralSeparator;
        out += parts[i];
    }
    return out;
}

RelateArg parse_relate_arg(std::string_view arg) {
    RelateArg out;
    std::string s = trim(arg);
    auto ends_with_word = [&](std::string_view word) {
        if (s.size() < word.size()) return false;
        if (s.compare(s.size() - word.size(), word.size(), word) != 0) return false;
        // a lone direction word is a label: every Relate needs a predicate
        return s.size() > word.size() && std::isspace(static_cast<unsigned char>(s[s.size() - word.size() - 1]));
    };
    if (ends_with_word("backward")) {
        out.forward = false;
        s = trim(std::string_view(s).substr(0, s.size() - 8));
    } else if (ends_with_word("forward")) {
        out.forward = true;
        s = trim(std::string_view(s).substr(0, s.size() - 7));
    }
    out.relation_label = s;
    return out;
}

ValidateResult validate(const Sketch& sketch) {
    ValidateResult r;
    if (sketch.empty()) {
        r.violation = ValidateResult::Violation::Empty;
        r.message = "empty sketch";
        return r;
    }
    int depth = 0;
    for (size_t i = 0; i < sketch.size(); ++i) {
        Fn f = sketch[i];
        if (f == Fn::Start) {
            r.violation = ValidateResult::Violation::StartToken;
            r.position = static_cast<int>(i);
            r.message = "<START> inside sketch at position " + std::to_string(i);
            return r;
        }
        if (f == Fn::End) {
            if (i + 1 != sketch.size()) {
                r.violation = ValidateResult::Violation::TokenAfterEnd;
                r.position = static_cast<int>(i + 1);
                r.message = "token after <END> at position " + std::to_string(i + 1);
                return r;
            }
            if (depth != 1) {
                r.violation = ValidateResult::Violation::Leftover;
                r.position = static_cast<int>(i);
                r.message = "stack holds " + std::to_string(depth) + " values at <END>, want 1";
                return r;
            }
            return r;
        }
        const FnInfo& info = fn_info(f);
        if (depth < info.arity) {
            r.violation = ValidateResult::Violation::Underflow;
            r.position = static_cast<int>(i);
            r.message = std::string(info.name) + " at position " + std::to_string(i) + " pops " +
                        std::to_string(info.arity) + " but stack holds " + std::to_string(depth);
            return r;
        }
        depth += 1 - info.arity;
    }
    r.violation = ValidateResult::Violation::MissingEnd;
    r.position = static_cast<int>(sketch.size());
    r.message = "sketch does not end with <END>";
    return r;
}

void StackSim::apply(Fn f) {
    if (f == Fn::Start || f == Fn::End) return;
    const FnInfo& info = fn_info(f);
    if (depth < info.arity) {
        underflow = true;
        return;
    }
    depth += 1 - info.arity;
}

bool token_allowed(const StackSim& sim, Fn next, int remaining) {
    if (sim.underflow || remaining <= 0) return false;
    if (next == Fn::Start) return false;
    if (next == Fn::End) return sim.depth == 1;
    const FnInfo& info = fn_info(next);
    if (sim.depth < info.arity) return false;
    // After emitting `next` the stack holds depth+1-arity values; each later
    // token reduces it by at most 1, and one slot must be kept for <END>.
    int after = sim.depth + 1 - info.arity;
    return after - 1 <= remaining - 2;
}

Program parse_program_text(std::string_view text) {
    Program p;
    size_t start = 0;
    std::string s{trim(text)};
    if (s.empty()) throw ProgramParseError("empty program text");
    while (start < s.size()) {
        size_t semi = s.find(';', start);
        std::string step = trim(std::string_view(s).substr(
            start, semi == std::string::npos ? std::string::npos : semi - start));
        if (!step.empty()) {
            size_t open = step.find('(');
            if (open == std::string::npos || step.back() != ')')
                throw ProgramParseError("malformed step '" + step + "': want Name(arg)");
            std::string name = trim(std::string_view(step).substr(0, open));
            std::string arg = trim(std::string_view(step).substr(open + 1, step.size() - open - 2));
            auto fn = fn_from_name(name);
            if (!fn) throw ProgramParseError("unknown function '" + name + "'");
            if (*fn == Fn::Start) throw ProgramParseError("<START> may not appear in program text");
            p.tokens.push_back(*fn);
            p.args.push_back(arg);
        }
        if (semi == std::string::npos) break;
        start = semi + 1;
    }
    if (p.tokens.empty()) throw ProgramParseError("empty program text");
    if (p.tokens.back() != Fn::End) {
        p.tokens.push_back(Fn::End);
        p.args.emplace_back();
    }
    return p;
}

std::string serialize_program(const Program& p) {
    std::string out;
    for (size_t i = 0; i < p.tokens.size(); ++i) {
        if (p.tokens[i] == Fn::End) break;
        if (!out.empty()) out += ';';
        out += fn_info(p.tokens[i]).name;
        out += '(';
        out += p.args[i];
        out += ')';
    }
    return out;
}

Program program_from_json_text(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ProgramParseError(std::string("bad program json: ") + e.what());
    }
    if (!j.is_array()) throw ProgramParseError("program json must be an array");
    Program p;
    for (const auto& step : j) {
        if (!step.is_object() || !step.contains("function"))
            throw ProgramParseError("program step must be an object with 'function'");
        std::string name = step.at("function").get<std::string>();
        auto fn = fn_from_name(name);
        if (!fn) throw ProgramParseError("unknown function '" + name + "'");
        if (*fn == Fn::Start) throw ProgramParseError("<START> may not appear in a program");
        p.tokens.push_back(*fn);
        p.args.push_back(step.value("argument", std::string{}));
    }
    if (p.tokens.empty()) throw ProgramParseError("empty program");
    if (p.tokens.back() != Fn::End) {
        p.tokens.push_back(Fn::End);
        p.args.emplace_back();
    }
    return p;
}

std::string program_to_json_text(const Program& p) {
    nlohmann::json j = nlohmann::json::array();
    for (size_t i = 0; i < p.tokens.size(); ++i) {
        if (p.tokens[i] == Fn::End) break;
        j.push_back({{"function", fn_info(p.tokens[i]).name}, {"argument", p.args[i]}});
    }
    return j.dump();
}

}  // namespace kbqa
