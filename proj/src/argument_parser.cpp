#include "kbqa/argument_parser.hpp"

#include <algorithm>
#include <set>

#include "kbqa/text.hpp"

namespace kbqa {

const Vec& CandidateCache::pooled(const ParameterStore& store, const Vocabulary& vocab,
                                  const std::string& label) {
    auto it = entries_.find(label);
    if (it == entries_.end()) {
        Entry e;
        encode_text(store, vocab, label, e.cache);
        it = entries_.emplace(label, std::move(e)).first;
    }
    return it->second.cache.xbar;
}

void CandidateCache::add_grad(const std::string& label, const Vec& dxbar) {
    Entry& e = entries_.at(label);
    if (e.dxbar.size() == 0) e.dxbar = Vec::Zero(dxbar.size());
    e.dxbar += dxbar;
}

void CandidateCache::flush_backward(ParameterStore& store) {
    for (auto& [label, e] : entries_) {
        if (e.dxbar.size() == 0) continue;
        encoder_backward(store, e.cache, Mat(), e.dxbar);
        e.dxbar.resize(0);
    }
}

const std::string& category_label(const KnowledgeBase& kb, ArgCategory cat, std::uint32_t id) {
    switch (cat) {
        case ArgCategory::Entity: return kb.entity_labels[id];
        case ArgCategory::Concept: return kb.concept_labels[id];
        case ArgCategory::Relation: return kb.relation_labels[id];
        default: throw PruneError("category has no labels");
    }
}

CandidateEncoding encode_candidates(const ParameterStore& store, const Vocabulary& vocab,
                                    const KnowledgeBase& kb, ArgCategory cat,
                                    const std::vector<std::uint32_t>& pool_ids,
                                    CandidateCache& cache) {
    if (pool_ids.empty()) throw PruneError("cannot encode an empty candidate pool");
    CandidateEncoding enc;
    enc.ids = pool_ids;
    enc.labels.reserve(pool_ids.size());
    int d = encoder_dim(store);
    enc.P = Mat::Zero(static_cast<Eigen::Index>(pool_ids.size()), d);
    for (std::size_t i = 0; i < pool_ids.size(); ++i) {
        const std::string& label = category_label(kb, cat, pool_ids[i]);
        enc.labels.push_back(label);
        enc.P.row(static_cast<Eigen::Index>(i)) = cache.pooled(store, vocab, label).transpose();
    }
    return enc;
}

Vec score_arguments(const Mat& P, const Vec& g) { return softmax(P * g); }

std::vector<EntityId> linked_entities(const KnowledgeBase& kb, const std::string& question) {
    std::set<std::string> qtokens;
    for (const auto& t : tokenize(question)) qtokens.insert(t);
    std::vector<EntityId> out;
    for (EntityId e = 0; e < kb.n_entities(); ++e) {
        for (const auto& t : tokenize(kb.entity_labels[e]))
            if (qtokens.count(t)) {
                out.push_back(e);
                break;
            }
    }
    return out;
}

std::vector<FilledProgram> fill_arguments(const ParameterStore& store, const ModelConfig& cfg,
                                          const Vocabulary& vocab, const EncoderCache& enc,
                                          const Sketch& sketch, const KnowledgeBase& kb,
                                          const FillOptions& opts, CandidateCache& cache) {
    // fused vectors g_t depend only on the sketch, not on argument choices
    std::vector<Vec> g_per_step;
    {
        Vec h = decoder_h0(store, enc.xbar);
        int prev = fn_index(Fn::Start);
        for (Fn f : sketch) {
            DecodeStepCache c;
            decode_step_forward(store, cfg, enc.X, prev, h, c);
            g_per_step.push_back(c.g);
            h = c.h;
            prev = fn_index(f);
        }
    }

    std::vector<EntityId> linked;
    if (opts.entity_linking) linked = linked_entities(kb, opts.question);

    struct Hyp {
        CandidatePools pools;
        std::vector<std::string> args;
        double logprob = 0;
    };
    std::vector<Hyp> hyps(1);
    hyps[0].pools = init_pools(kb);
    CandidatePools full_pools;  // shared pools for the no-ontology ablation
    if (!opts.use_ontology) full_pools = init_pools(kb);

    std::size_t next_span = 0;
    for (std::size_t t = 0; t < sketch.size(); ++t) {
        Fn f = sketch[t];
        if (f == Fn::End) {
            for (auto& h : hyps) h.args.emplace_back();
            continue;
        }
        ArgCategory cat = fn_info(f).category;
        if (cat == ArgCategory::Empty) {
            for (auto& h : hyps) h.args.emplace_back();
            continue;
        }
        if (cat == ArgCategory::LiteralText) {
            std::string span =
                next_span < opts.literal_spans.size() ? opts.literal_spans[next_span] : std::string{};
            ++next_span;
            for (auto& h : hyps) h.args.push_back(span);
            continue;
        }
        std::vector<Hyp> expanded;
        for (auto& h : hyps) {
            const std::vector<std::uint32_t>* pool =
                opts.use_ontology ? ensure_active_pool(h.pools, kb, f, static_cast<int>(t))
                                  : active_pool(full_pools, f);
            std::vector<std::uint32_t> ids = *pool;
            if (cat == ArgCategory::Entity && opts.entity_linking && !linked.empty()) {
                std::vector<std::uint32_t> restricted;
                std::set_intersection(ids.begin(), ids.end(), linked.begin(), linked.end(),
                                      std::back_inserter(restricted));
                if (!restricted.empty()) ids = std::move(restricted);
            }
            auto cand = encode_candidates(store, vocab, kb, cat, ids, cache);
            Vec logp = log_softmax(cand.P * g_per_step[t]);
            // top-k candidate indices, score desc, pool order on ties
            std::vector<int> order(ids.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return logp(a) > logp(b); });
            int take = std::min<int>(opts.topk, static_cast<int>(order.size()));
            for (int k = 0; k < take; ++k) {
                Hyp nh = h;
                int ci = order[k];
                nh.args.push_back(cand.labels[ci]);
                nh.logprob += logp(ci);
                if (opts.use_ontology)
                    update_pools(nh.pools, kb, f, cand.ids[ci], static_cast<int>(t));
                expanded.push_back(std::move(nh));
            }
        }
        std::stable_sort(expanded.begin(), expanded.end(),
                         [](const Hyp& a, const Hyp& b) { return a.logprob > b.logprob; });
        if (static_cast<int>(expanded.size()) > opts.topk) expanded.resize(opts.topk);
        hyps = std::move(expanded);
    }

    std::vector<FilledProgram> out;
    for (auto& h : hyps) {
        FilledProgram fp;
        fp.program.tokens = sketch;
        fp.program.args = std::move(h.args);
        fp.logprob = h.logprob;
        out.push_back(std::move(fp));
    }
    return out;
}

}  // namespace kbqa
