#include "kbqa/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "kbqa/text.hpp"

namespace kbqa {

using nlohmann::json;

std::string example_to_json(const Example& ex) {
    json j;
    j["question"] = ex.question;
    if (ex.program) {
        json prog = json::array();
        const Program& p = *ex.program;
        for (std::size_t i = 0; i < p.tokens.size(); ++i) {
            if (p.tokens[i] == Fn::End) break;
            prog.push_back({{"function", fn_info(p.tokens[i]).name}, {"argument", p.args[i]}});
        }
        j["program"] = prog;
    } else {
        j["program"] = nullptr;
    }
    if (ex.answers)
        j["answers"] = *ex.answers;
    else
        j["answers"] = nullptr;
    if (!ex.literal_spans.empty()) j["literal_spans"] = ex.literal_spans;
    return j.dump();
}

Example example_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(std::string("bad example json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("question") || !j.at("question").is_string())
        throw DataError("example must be an object with a string 'question'");
    Example ex;
    ex.question = j.at("question").get<std::string>();
    if (j.contains("program") && !j.at("program").is_null()) {
        try {
            ex.program = program_from_json_text(j.at("program").dump());
        } catch (const ProgramParseError& e) {
            throw DataError(e.what());
        }
    }
    if (j.contains("answers") && !j.at("answers").is_null()) {
        if (!j.at("answers").is_array()) throw DataError("'answers' must be an array or null");
        ex.answers = j.at("answers").get<std::vector<std::string>>();
    }
    if (j.contains("literal_spans") && !j.at("literal_spans").is_null()) {
        if (!j.at("literal_spans").is_array()) throw DataError("'literal_spans' must be an array");
        ex.literal_spans = j.at("literal_spans").get<std::vector<std::string>>();
    }
    if (ex.literal_spans.empty() && ex.program) ex.literal_spans = literal_spans_of(*ex.program);
    return ex;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    Dataset data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        try {
            data.push_back(example_from_json(line));
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open dataset file for writing: " + path);
    for (const auto& ex : data) out << example_to_json(ex) << "\n";
}

std::vector<std::string> literal_spans_of(const Program& prog) {
    std::vector<std::string> spans;
    for (std::size_t i = 0; i < prog.tokens.size(); ++i)
        if (fn_info(prog.tokens[i]).category == ArgCategory::LiteralText)
            spans.push_back(prog.args[i]);
    return spans;
}

}  // namespace kbqa
