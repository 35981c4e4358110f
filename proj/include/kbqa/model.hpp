#pragma once

#include <string>

#include "kbqa/encoder.hpp"
#include "kbqa/nn.hpp"
#include "kbqa/vocab.hpp"

namespace kbqa {

struct ModelConfig {
    int d = 64;      // decoder hidden size
    int d_hat = 64;  // encoder / candidate vector size
    int max_len = 24;
    std::uint64_t init_seed = 1;

    bool needs_adapter() const { return d != d_hat; }
};

// Registers every parameter: encoder (embedding, directions, projection),
// decoder start affine h0 = A x_bar + b, function-token embedding, decoder
// cell, optional key adapter (when d != d_hat), and the two-layer output MLP.
void init_model_params(ParameterStore& store, const ModelConfig& cfg, int vocab_size);

// Appends freshly initialized rows for new vocabulary entries (domain
// transfer); existing rows are untouched.
void grow_embeddings(ParameterStore& store, const ModelConfig& cfg, int new_vocab_size,
                     std::uint64_t seed);

// Model bundle on disk: <dir>/params.bin + <dir>/vocab.json + <dir>/model.json
struct ModelBundle {
    ModelConfig cfg;
    Vocabulary vocab;
    ParameterStore params;
};

void save_model(const ModelBundle& m, const std::string& dir);
ModelBundle load_model(const std::string& dir);

}  // namespace kbqa
