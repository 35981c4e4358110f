#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbqa/kb.hpp"
#include "kbqa/program.hpp"

namespace kbqa {

// Handle to the KB fact that produced an entity in an (Entities, Facts) pair.
struct FactRef {
    enum class Kind : std::uint8_t { Attribute, Relation };
    Kind kind = Kind::Attribute;
    EntityId entity = 0;       // attribute owner / produced triple endpoint
    std::uint32_t index = 0;   // attr index within the entity, or global triple index
    auto operator<=>(const FactRef&) const = default;
};

struct RuntimeValue {
    ValueKind kind = ValueKind::Entities;
    std::vector<EntityId> entities;    // Entities: sorted unique; WithFacts: parallel to facts
    std::vector<FactRef> facts;
    std::vector<Literal> values;       // sorted by (kind, render), deduped
    std::vector<std::string> strings;  // sorted unique
    long long number = 0;
    bool boolean = false;
};

enum class ExecErrorKind {
    StackUnderflow,
    Leftover,
    MissingEnd,
    StartToken,
    TokenAfterEnd,
    TypeMismatch,
    UnresolvableLabel,
    BadArgument,
};

// Violations that mirror validate(); label/type/argument errors do not.
bool is_stack_error(ExecErrorKind k);
const char* exec_error_kind_name(ExecErrorKind k);

struct ExecError : std::runtime_error {
    ExecErrorKind kind;
    int position;  // token index, -1 when not tied to a step

    ExecError(ExecErrorKind k, int pos, const std::string& msg)
        : std::runtime_error(msg), kind(k), position(pos) {}
};

struct TraceStep {
    Fn fn = Fn::End;
    std::string arg;
    std::string summary;
};

struct ExecutionResult {
    RuntimeValue value;
    std::vector<std::string> answers;  // rendered, sorted, deduped
    std::vector<TraceStep> trace;
};

// Deterministic rendering of a runtime value as an answer set:
// entity sets -> sorted labels, values -> sorted rendered literals,
// number -> its decimal string, boolean -> yes/no.
std::vector<std::string> render_answers(const RuntimeValue& v, const KnowledgeBase& kb);

// Evaluate the program on its value stack per the function semantics.
// Performs its own structural checks, so invalid token sequences raise
// stack errors exactly where validate() reports them.
ExecutionResult execute(const Program& program, const KnowledgeBase& kb);

// Same contract as execute, implemented by naive full scans over the raw
// stores (no indexes, no shared filter/comparison code); the reference
// implementation the fast path is tested against.
ExecutionResult brute_force_oracle(const Program& program, const KnowledgeBase& kb);

}  // namespace kbqa
