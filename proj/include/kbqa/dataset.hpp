#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbqa/program.hpp"

namespace kbqa {

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// One QA example. Source-domain data carries gold programs; target-domain
// data carries answers only. literal_spans are the textual argument values
// in program order, available to the argument filler at inference.
struct Example {
    std::string question;
    std::optional<Program> program;
    std::optional<std::vector<std::string>> answers;
    std::vector<std::string> literal_spans;
};

using Dataset = std::vector<Example>;

std::string example_to_json(const Example& ex);
Example example_from_json(const std::string& line);

// JSONL: one example per line; blank lines skipped.
Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& data);

// Textual spans a program's LiteralText arguments consume, in token order.
std::vector<std::string> literal_spans_of(const Program& prog);

}  // namespace kbqa
