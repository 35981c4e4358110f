#pragma once

#include <string>
#include <vector>

#include "kbqa/nn.hpp"
#include "kbqa/vocab.hpp"

namespace kbqa {

// Question/label encoder: embedding + bidirectional gated-recurrent pass,
// directions concatenated and projected back to d_hat. Produces one vector
// per token (rows of X) plus their mean as the pooled text embedding.
struct EncoderCache {
    std::vector<int> ids;
    std::vector<GruCache> fw, bw;  // per-position cell caches
    std::vector<Vec> hf, hb;
    std::vector<Vec> concat;  // [hf_t; hb_t]
    Mat X;                    // T x d_hat
    Vec xbar;                 // column mean of X
};

// Registers emb (vocab x d_hat), both direction cells and the output projection.
void encoder_init(ParameterStore& store, int vocab_size, int d_hat, Rng& rng);

int encoder_dim(const ParameterStore& store);  // d_hat

void encoder_forward(const ParameterStore& store, const std::vector<int>& ids, EncoderCache& cache);

// dX may be empty (no per-token gradient); dxbar likewise sized 0.
void encoder_backward(ParameterStore& store, const EncoderCache& cache, const Mat& dX,
                      const Vec& dxbar);

// vocab-encode + forward; throws NnError when the text has no tokens.
void encode_text(const ParameterStore& store, const Vocabulary& vocab, const std::string& text,
                 EncoderCache& cache);

}  // namespace kbqa
