#include "kbqa/sketch_parser.hpp"

#include <algorithm>

namespace kbqa {

Vec decoder_h0(const ParameterStore& store, const Vec& xbar) {
    return store.at("dec.h0.W").value * xbar + store.at("dec.h0.b").value.col(0);
}

void decoder_h0_backward(ParameterStore& store, const Vec& xbar, const Vec& dh0, Vec& dxbar) {
    store.at("dec.h0.W").grad += dh0 * xbar.transpose();
    store.at("dec.h0.b").grad.col(0) += dh0;
    dxbar += store.at("dec.h0.W").value.transpose() * dh0;
}

void decode_step_forward(const ParameterStore& store, const ModelConfig& cfg, const Mat& X,
                         int prev_token, const Vec& h_prev, DecodeStepCache& cache) {
    cache.prev_token = prev_token;
    Vec inp = store.at("dec.fnemb").value.row(prev_token).transpose();
    cache.h = gru_forward(store, "dec.cell", inp, h_prev, &cache.cell);
    if (cfg.needs_adapter())
        cache.key = store.at("dec.adapt.W").value * cache.h + store.at("dec.adapt.b").value.col(0);
    else
        cache.key = cache.h;
    attention_forward(X, cache.key, &cache.att);
    cache.g = cache.key + cache.att.context;
    cache.mlp_pre = store.at("dec.mlp.W1").value * cache.g + store.at("dec.mlp.b1").value.col(0);
    Vec hidden = cache.mlp_pre.cwiseMax(0.0);
    cache.logits = store.at("dec.mlp.W2").value * hidden + store.at("dec.mlp.b2").value.col(0);
    check_finite(cache.logits, "decoder logits");
}

void decode_step_backward(ParameterStore& store, const ModelConfig& cfg, const Mat& X,
                          const DecodeStepCache& cache, const Vec& dlogits, const Vec& dg_extra,
                          const Vec& dh_next, Vec& dh_prev, Mat& dX) {
    Vec dg = Vec::Zero(cache.g.size());
    if (dlogits.size()) {
        Vec hidden = cache.mlp_pre.cwiseMax(0.0);
        store.at("dec.mlp.W2").grad += dlogits * hidden.transpose();
        store.at("dec.mlp.b2").grad.col(0) += dlogits;
        Vec dhidden = store.at("dec.mlp.W2").value.transpose() * dlogits;
        Vec dpre = (cache.mlp_pre.array() > 0.0).select(dhidden, 0.0);
        store.at("dec.mlp.W1").grad += dpre * cache.g.transpose();
        store.at("dec.mlp.b1").grad.col(0) += dpre;
        dg += store.at("dec.mlp.W1").value.transpose() * dpre;
    }
    if (dg_extra.size()) dg += dg_extra;

    Vec dkey = dg;
    attention_backward(X, cache.att, dg, dX, dkey);  // dcontext = dg; adds score path into dkey

    Vec dh = Vec::Zero(cache.h.size());
    if (cfg.needs_adapter()) {
        store.at("dec.adapt.W").grad += dkey * cache.h.transpose();
        store.at("dec.adapt.b").grad.col(0) += dkey;
        dh = store.at("dec.adapt.W").value.transpose() * dkey;
    } else {
        dh = dkey;
    }
    if (dh_next.size()) dh += dh_next;

    Vec dinp = Vec::Zero(cache.cell.x.size());
    gru_backward(store, "dec.cell", cache.cell, dh, dinp, dh_prev);
    store.at("dec.fnemb").grad.row(cache.prev_token) += dinp.transpose();
}

namespace {

// Highest-logit token among structurally valid continuations; -1 if none.
int masked_argmax(const Vec& logits, const StackSim& sim, int remaining) {
    int best = -1;
    for (int i = 0; i < kNumFn; ++i) {
        if (!token_allowed(sim, fn_at(i), remaining)) continue;
        if (best < 0 || logits(i) > logits(best)) best = i;
    }
    return best;
}

}  // namespace

DecodeOutcome greedy_decode(const ParameterStore& store, const ModelConfig& cfg,
                            const EncoderCache& enc) {
    DecodeOutcome out;
    Vec h = decoder_h0(store, enc.xbar);
    int prev = fn_index(Fn::Start);
    StackSim sim;
    for (int step = 0; step < cfg.max_len; ++step) {
        DecodeStepCache cache;
        decode_step_forward(store, cfg, enc.X, prev, h, cache);
        Vec lsm = log_softmax(cache.logits);
        int remaining = cfg.max_len - step;
        int pick = masked_argmax(cache.logits, sim, remaining);
        if (pick < 0) {  // should not happen; fall back to the raw argmax
            lsm.maxCoeff(&pick);
            out.truncated = true;
        }
        out.sketch.push_back(fn_at(pick));
        out.logprob += lsm(pick);
        if (fn_at(pick) == Fn::End) return out;
        sim.apply(fn_at(pick));
        h = cache.h;
        prev = pick;
    }
    out.truncated = true;
    return out;
}

namespace {

struct BeamHyp {
    Sketch tokens;
    double logprob = 0;
    Vec h;
    int prev = 0;
    StackSim sim;
};

}  // namespace

std::vector<DecodeOutcome> beam_decode(const ParameterStore& store, const ModelConfig& cfg,
                                       const EncoderCache& enc, int beam) {
    if (beam < 1) beam = 1;
    std::vector<BeamHyp> live(1);
    live[0].h = decoder_h0(store, enc.xbar);
    live[0].prev = fn_index(Fn::Start);
    std::vector<DecodeOutcome> done;

    for (int step = 0; step < cfg.max_len && !live.empty(); ++step) {
        int remaining = cfg.max_len - step;
        struct Ext {
            std::size_t hyp;
            int token;
            double score;
        };
        std::vector<Ext> exts;
        std::vector<DecodeStepCache> caches(live.size());
        for (std::size_t hi = 0; hi < live.size(); ++hi) {
            decode_step_forward(store, cfg, enc.X, live[hi].prev, live[hi].h, caches[hi]);
            Vec lsm = log_softmax(caches[hi].logits);
            for (int i = 0; i < kNumFn; ++i)
                if (token_allowed(live[hi].sim, fn_at(i), remaining))
                    exts.push_back({hi, i, live[hi].logprob + lsm(i)});
        }
        std::stable_sort(exts.begin(), exts.end(),
                         [](const Ext& a, const Ext& b) { return a.score > b.score; });
        std::vector<BeamHyp> next;
        for (const Ext& e : exts) {
            if (static_cast<int>(next.size()) + 0 >= beam) break;
            BeamHyp h = live[e.hyp];
            h.tokens.push_back(fn_at(e.token));
            h.logprob = e.score;
            if (fn_at(e.token) == Fn::End) {
                done.push_back({h.tokens, h.logprob, false});
                continue;
            }
            h.sim.apply(fn_at(e.token));
            h.h = caches[e.hyp].h;
            h.prev = e.token;
            next.push_back(std::move(h));
        }
        live = std::move(next);
    }

    std::stable_sort(done.begin(), done.end(),
                     [](const DecodeOutcome& a, const DecodeOutcome& b) { return a.logprob > b.logprob; });
    if (static_cast<int>(done.size()) > beam) done.resize(beam);
    if (done.empty()) done.push_back(greedy_decode(store, cfg, enc));
    return done;
}

double sketch_nll(const ParameterStore& store, const ModelConfig& cfg, const EncoderCache& enc,
                  const Sketch& gold, SketchTrainCache* cache) {
    double loss = 0;
    Vec h = decoder_h0(store, enc.xbar);
    if (cache) {
        cache->h0 = h;
        cache->steps.assign(gold.size(), {});
    }
    int prev = fn_index(Fn::Start);
    for (std::size_t t = 0; t < gold.size(); ++t) {
        DecodeStepCache local;
        DecodeStepCache& c = cache ? cache->steps[t] : local;
        decode_step_forward(store, cfg, enc.X, prev, h, c);
        loss += softmax_xent(c.logits, fn_index(gold[t]), nullptr);
        h = c.h;
        prev = fn_index(gold[t]);
    }
    if (cache) cache->loss = loss;
    return loss;
}

void sketch_train_backward(ParameterStore& store, const ModelConfig& cfg, const EncoderCache& enc,
                           const SketchTrainCache& cache, const std::vector<Vec>& dlogits,
                           const std::vector<Vec>& dg_extra, Mat& dX, Vec& dxbar) {
    const std::size_t T = cache.steps.size();
    if (dX.size() == 0) dX = Mat::Zero(enc.X.rows(), enc.X.cols());
    static const Vec kNone;
    Vec dh_next;  // empty for the last step
    for (std::size_t t = T; t-- > 0;) {
        Vec dh_prev = Vec::Zero(cache.steps[t].h.size());
        const Vec& dl = t < dlogits.size() ? dlogits[t] : kNone;
        const Vec& dge = t < dg_extra.size() ? dg_extra[t] : kNone;
        decode_step_backward(store, cfg, enc.X, cache.steps[t], dl, dge, dh_next, dh_prev, dX);
        dh_next = dh_prev;
    }
    if (dxbar.size() == 0) dxbar = Vec::Zero(enc.xbar.size());
    if (dh_next.size()) decoder_h0_backward(store, enc.xbar, dh_next, dxbar);
}

}  // namespace kbqa
