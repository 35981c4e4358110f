#pragma once

#include <string>
#include <vector>

#include "kbqa/dataset.hpp"
#include "kbqa/kb.hpp"
#include "kbqa/program.hpp"
#include "kbqa/rng.hpp"

namespace kbqa::test {

// Four-entity sports KB shared by the executor/pruning example tests.
// Mirrors data/fixture.json; a test cross-checks the two stay identical.
KnowledgeBase make_fixture();

// Small randomized KB (<= max_entities entities) with attribute facts,
// qualifiers, duplicate labels, multi-typed entities, and stray triples.
KnowledgeBase random_kb(Rng& rng, std::size_t max_entities = 12);

// Stack-valid program whose arguments are drawn from the KB's labels,
// attribute keys, and rendered values, with occasional junk mixed in.
Program random_program(Rng& rng, const KnowledgeBase& kb, int max_fns = 8);

// KB split into n_blocks islands: one concept, dedicated relations, and
// ents_per_block entities per island, so typed pools stay tiny.
KnowledgeBase partitioned_kb(std::size_t n_blocks, std::size_t relations_per_block,
                             std::size_t ents_per_block);

std::string kbqa_binary();
std::string data_dir();

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs the CLI binary with the given arguments; captures both streams.
CmdResult run_cmd(const std::vector<std::string>& args);
// Same, with extra environment assignments ("NAME=value") for the child.
CmdResult run_cmd_env(const std::vector<std::string>& env, const std::vector<std::string>& args);

struct TempDir {
    std::string path;
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::string file(const std::string& name) const;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace kbqa::test
