#pragma once

#include <string>
#include <vector>

#include "kbqa/argument_parser.hpp"
#include "kbqa/dataset.hpp"
#include "kbqa/kb.hpp"
#include "kbqa/metrics.hpp"
#include "kbqa/model.hpp"

namespace kbqa {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 16;
    int beam = 5;  // sketch beam B
    int topk = 3;  // argument assignments per sketch
    double lr_encoder = 1e-3;
    double lr_other = 1e-3;
    double weight_decay = 1e-5;
    std::uint64_t seed = 1;
    std::string strategy = "hard-em";  // or "reinforce"
    bool no_pretrain = false;          // ablation switches
    bool no_pretrain_args = false;
    bool no_finetune = false;
    bool no_ontology = false;
    bool reinforce_baseline = true;  // EMA reward baseline (decay 0.99)

    void validate() const;  // throws ConfigError
};

// Vocabulary = question tokens plus every KB label's tokens; parameters
// freshly initialized from cfg.init_seed.
ModelBundle init_model(const ModelConfig& cfg, const Dataset& data, const KnowledgeBase& kb);

// Extends the vocabulary with a new domain's tokens and grows the embedding
// rows (seeded); returns the number of added tokens.
int extend_model(ModelBundle& m, const Dataset& data, const KnowledgeBase& kb, std::uint64_t seed);

struct PretrainEpoch {
    double sketch_loss = 0;
    double arg_loss = 0;
    double total() const { return sketch_loss + arg_loss; }
};

struct FinetuneEpoch {
    double mean_f1 = 0;  // selected-candidate F1 (hard-em) or sampled reward (reinforce)
    int skipped = 0;     // hard-em examples with all-zero-F1 beams
    double baseline = 0; // reinforce EMA baseline after the epoch
};

// Supervised training on question-program pairs: sketch NLL plus per-step
// argument cross-entropy over the pruned pools replayed along the gold
// program (argument term off under no_pretrain_args).
std::vector<PretrainEpoch> pretrain(ModelBundle& m, const Dataset& source,
                                    const KnowledgeBase& kb, const TrainConfig& cfg);

// Mean per-example pretraining loss without any update.
PretrainEpoch pretrain_loss(const ModelBundle& m, const Dataset& source, const KnowledgeBase& kb,
                            const TrainConfig& cfg);

// Weak supervision from answers: beam-decode sketches, fill arguments,
// execute, supervise toward the highest-F1 candidate (ties to higher
// log-probability); zero-F1 examples are skipped and counted.
std::vector<FinetuneEpoch> finetune_hard_em(ModelBundle& m, const Dataset& target,
                                            const KnowledgeBase& kb, const TrainConfig& cfg);

// Policy gradient: sample a program from the factorized policy, reward its
// execution F1, subtract the moving-average baseline when enabled.
std::vector<FinetuneEpoch> finetune_reinforce(ModelBundle& m, const Dataset& target,
                                              const KnowledgeBase& kb, const TrainConfig& cfg);

struct ProgramCandidate {
    Program program;
    double logprob = 0;
};

// Top candidate programs for a question: beam sketches x argument fills,
// ranked by summed log-probability.
std::vector<ProgramCandidate> decode_candidates(const ModelBundle& m, const KnowledgeBase& kb,
                                                const std::string& question,
                                                const std::vector<std::string>& literal_spans,
                                                const TrainConfig& cfg, CandidateCache& cache);

// F1 / Hits@1 / best-F1-in-top-k (k in {1,2,5,10}) over a dataset with answers.
MetricsReport evaluate(const ModelBundle& m, const Dataset& data, const KnowledgeBase& kb,
                       const TrainConfig& cfg);

}  // namespace kbqa
