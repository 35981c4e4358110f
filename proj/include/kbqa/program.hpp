#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kbqa {

// The 27 KB functions plus the Start/End control tokens.
enum class Fn : std::uint8_t {
    FindAll,
    Find,
    FilterConcept,
    FilterStr,
    FilterNum,
    FilterYear,
    FilterDate,
    QFilterStr,
    QFilterNum,
    QFilterYear,
    QFilterDate,
    Relate,
    And,
    Or,
    QueryName,
    Count,
    QueryAttr,
    QueryAttrUnderCondition,
    QueryRelation,
    SelectBetween,
    SelectAmong,
    VerifyStr,
    VerifyNum,
    VerifyYear,
    VerifyDate,
    QueryAttrQualifier,
    QueryRelationQualifier,
    Start,
    End,
};

constexpr int kNumFn = 29;        // full decoder vocabulary, Start/End included
constexpr int kNumKbFn = 27;      // executable functions
inline int fn_index(Fn f) { return static_cast<int>(f); }
inline Fn fn_at(int i) { return static_cast<Fn>(i); }

enum class ArgCategory { Entity, Concept, Relation, Empty, LiteralText };

enum class ValueKind { Entities, EntitiesWithFacts, Values, Strings, Number, Boolean };

struct FnInfo {
    const char* name;
    int arity;          // functional inputs popped from the stack
    ArgCategory category;
    ValueKind output;
};

const FnInfo& fn_info(Fn f);
std::optional<Fn> fn_from_name(std::string_view name);

// Program sketch: function tokens terminated by End (Start never appears).
using Sketch = std::vector<Fn>;

// Sketch plus one textual argument per token ("" for Empty-category tokens).
// Functions with several textual inputs carry them joined by '|'.
struct Program {
    Sketch tokens;
    std::vector<std::string> args;

    bool operator==(const Program&) const = default;
};

constexpr char kLiteralSeparator = '|';
std::vector<std::string> split_literal_parts(std::string_view arg);
std::string join_literal_parts(const std::vector<std::string>& parts);

struct RelateArg {
    std::string relation_label;
    bool forward = true;
};
// Trailing " forward" / " backward" selects the direction; absent means forward.
RelateArg parse_relate_arg(std::string_view arg);

struct ValidateResult {
    enum class Violation { None, Underflow, Leftover, MissingEnd, TokenAfterEnd, StartToken, Empty };
    Violation violation = Violation::None;
    int position = -1;
    std::string message;

    bool ok() const { return violation == Violation::None; }
};

// Simulates the value stack: each token pops its arity and pushes one value;
// a valid sketch never underflows and leaves exactly one value at End.
ValidateResult validate(const Sketch& sketch);

// Incremental stack simulation for decode-time masking.
struct StackSim {
    int depth = 0;
    bool underflow = false;

    void apply(Fn f);
};

// Whether `next` can extend a partial sketch without dooming validity.
// `remaining` counts the tokens that may still be emitted, `next` included.
bool token_allowed(const StackSim& sim, Fn next, int remaining);

struct ProgramParseError : std::runtime_error {
    explicit ProgramParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Textual syntax: `Find(FC Barcelona);Relate(arena stadium forward);...`
// (the End token is implicit in the text form).
Program parse_program_text(std::string_view text);
std::string serialize_program(const Program& p);

// JSON array form: [{"function": ..., "argument": ...}, ...]
Program program_from_json_text(const std::string& json_text);
std::string program_to_json_text(const Program& p);

}  // namespace kbqa
