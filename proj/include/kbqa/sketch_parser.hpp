#pragma once

#include <vector>

#include "kbqa/encoder.hpp"
#include "kbqa/model.hpp"
#include "kbqa/program.hpp"

namespace kbqa {

// One decoder step: h_t = cell(h_{t-1}, fnemb[prev]); key = adapter(h_t);
// (alpha, c_t) = attention over the encoder vectors; g_t = key + c_t;
// logits = W2 relu(W1 g_t + b1) + b2. With d == d_hat the adapter is the
// identity and g_t = h_t + c_t exactly.
struct DecodeStepCache {
    int prev_token = 0;
    GruCache cell;
    Vec h;        // d
    Vec key;      // d_hat
    AttentionCache att;
    Vec g;        // d_hat
    Vec mlp_pre;  // d_hat, before the rectifier
    Vec logits;   // kNumFn
};

Vec decoder_h0(const ParameterStore& store, const Vec& xbar);
void decoder_h0_backward(ParameterStore& store, const Vec& xbar, const Vec& dh0, Vec& dxbar);

void decode_step_forward(const ParameterStore& store, const ModelConfig& cfg, const Mat& X,
                         int prev_token, const Vec& h_prev, DecodeStepCache& cache);

// dlogits: loss gradient at the logits (may be size 0); dg_extra: extra
// gradient entering g_t from argument scoring (may be size 0); dh_next:
// gradient reaching h_t from the following step. Accumulates parameter
// gradients, the encoder-memory gradient dX, and returns dh_prev.
void decode_step_backward(ParameterStore& store, const ModelConfig& cfg, const Mat& X,
                          const DecodeStepCache& cache, const Vec& dlogits, const Vec& dg_extra,
                          const Vec& dh_next, Vec& dh_prev, Mat& dX);

struct DecodeOutcome {
    Sketch sketch;
    double logprob = 0;
    bool truncated = false;
};

// Argmax chain from START until <END> or the length bound, masking tokens
// that would make the sketch structurally invalid; ties break to the lowest
// token index.
DecodeOutcome greedy_decode(const ParameterStore& store, const ModelConfig& cfg,
                            const EncoderCache& enc);

// Length-bounded beam over sketch tokens with stack-validity masking.
// Completed hypotheses compete by total log-probability; at most B results,
// sorted by score descending (deterministic tie order).
std::vector<DecodeOutcome> beam_decode(const ParameterStore& store, const ModelConfig& cfg,
                                       const EncoderCache& enc, int beam);

struct SketchTrainCache {
    Vec h0;
    std::vector<DecodeStepCache> steps;  // step t predicts gold[t]
    double loss = 0;
};

// Teacher-forced negative log-likelihood of the gold sketch (END included).
double sketch_nll(const ParameterStore& store, const ModelConfig& cfg, const EncoderCache& enc,
                  const Sketch& gold, SketchTrainCache* cache);

// Backward for a loss expressed per step as dlogits (cross-entropy terms) and
// dg_extra (argument-scoring terms); either vector entry may be size 0.
// Accumulates parameter grads plus the encoder gradients dX / dxbar.
void sketch_train_backward(ParameterStore& store, const ModelConfig& cfg, const EncoderCache& enc,
                           const SketchTrainCache& cache, const std::vector<Vec>& dlogits,
                           const std::vector<Vec>& dg_extra, Mat& dX, Vec& dxbar);

}  // namespace kbqa
