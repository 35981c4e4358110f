#pragma once

#include <map>
#include <string>
#include <vector>

#include "kbqa/encoder.hpp"
#include "kbqa/kb.hpp"
#include "kbqa/model.hpp"
#include "kbqa/pruning.hpp"
#include "kbqa/sketch_parser.hpp"

namespace kbqa {

// Pooled label encodings, cached by label text. Rows are pure functions of
// the label (and parameters), so reuse across pools/steps/examples is exact;
// the cache must be cleared whenever parameters change.
class CandidateCache {
public:
    const Vec& pooled(const ParameterStore& store, const Vocabulary& vocab, const std::string& label);
    // Accumulates loss gradient at a label's pooled vector.
    void add_grad(const std::string& label, const Vec& dxbar);
    // Runs encoder_backward for every label that received gradient.
    void flush_backward(ParameterStore& store);
    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }

private:
    struct Entry {
        EncoderCache cache;
        Vec dxbar;
    };
    std::map<std::string, Entry> entries_;
};

struct CandidateEncoding {
    std::vector<std::uint32_t> ids;  // ascending pool order
    std::vector<std::string> labels;
    Mat P;  // |pool| x d_hat, row i encodes labels[i]
};

const std::string& category_label(const KnowledgeBase& kb, ArgCategory cat, std::uint32_t id);

CandidateEncoding encode_candidates(const ParameterStore& store, const Vocabulary& vocab,
                                    const KnowledgeBase& kb, ArgCategory cat,
                                    const std::vector<std::uint32_t>& pool_ids,
                                    CandidateCache& cache);

// Eq-style dot-product scores: softmax over P . g.
Vec score_arguments(const Mat& P, const Vec& g);

// Entities whose label shares at least one word token with the question.
std::vector<EntityId> linked_entities(const KnowledgeBase& kb, const std::string& question);

struct FillOptions {
    int topk = 3;               // assignment beam width
    bool use_ontology = true;   // pool updates per argument choice
    bool entity_linking = false;
    std::string question;       // needed when entity_linking is on
    std::vector<std::string> literal_spans;  // consumed by LiteralText steps in order
};

struct FilledProgram {
    Program program;
    double logprob = 0;
};

// Replays the decoder over the sketch to get each step's fused vector, then
// beam-searches argument assignments against the (optionally pruned) pools.
// Results sorted by log-probability, at most topk.
std::vector<FilledProgram> fill_arguments(const ParameterStore& store, const ModelConfig& cfg,
                                          const Vocabulary& vocab, const EncoderCache& enc,
                                          const Sketch& sketch, const KnowledgeBase& kb,
                                          const FillOptions& opts, CandidateCache& cache);

}  // namespace kbqa
