#include "kbqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "kbqa/executor.hpp"
#include "kbqa/sketch_parser.hpp"

namespace kbqa {

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (beam <= 0) throw ConfigError("beam must be positive");
    if (topk <= 0) throw ConfigError("topk must be positive");
    if (lr_encoder <= 0 || lr_other <= 0) throw ConfigError("learning rates must be positive");
    if (weight_decay < 0) throw ConfigError("weight decay must be non-negative");
    if (strategy != "hard-em" && strategy != "reinforce")
        throw ConfigError("strategy must be 'hard-em' or 'reinforce'");
}

namespace {

std::vector<std::string> domain_texts(const Dataset& data, const KnowledgeBase& kb) {
    std::vector<std::string> texts;
    texts.reserve(data.size() + kb.n_entities() + kb.n_concepts() + kb.n_relations());
    for (const auto& ex : data) texts.push_back(ex.question);
    for (const auto& l : kb.entity_labels) texts.push_back(l);
    for (const auto& l : kb.concept_labels) texts.push_back(l);
    for (const auto& l : kb.relation_labels) texts.push_back(l);
    return texts;
}

bool pool_category(ArgCategory cat) {
    return cat == ArgCategory::Entity || cat == ArgCategory::Concept || cat == ArgCategory::Relation;
}

// Position of the gold argument inside the active pool, -1 when absent.
int gold_pool_index(const KnowledgeBase& kb, Fn f, const std::string& arg,
                    const std::vector<std::uint32_t>& pool) {
    std::vector<std::uint32_t> resolved;
    switch (fn_info(f).category) {
        case ArgCategory::Entity: resolved = kb.resolve_entity(arg); break;
        case ArgCategory::Concept: resolved = kb.resolve_concept(arg); break;
        case ArgCategory::Relation:
            resolved = kb.resolve_relation(parse_relate_arg(arg).relation_label);
            break;
        default: return -1;
    }
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (std::find(resolved.begin(), resolved.end(), pool[i]) != resolved.end())
            return static_cast<int>(i);
    return -1;
}

struct SupervisedLoss {
    double sketch = 0;
    double args = 0;
};

// Teacher-forced loss of one (question, program) pair: sketch NLL plus
// argument cross-entropy over pools replayed along the program. When `grads`
// is set, accumulates all gradients (scaled) there.
SupervisedLoss supervised_example(const ParameterStore& params, ParameterStore* grads,
                                  const ModelConfig& mc, const Vocabulary& vocab,
                                  const KnowledgeBase& kb, const std::string& question,
                                  const Program& prog, bool train_args, bool use_ontology,
                                  double scale, CandidateCache& cache, const std::string& tag) {
    EncoderCache enc;
    encode_text(params, vocab, question, enc);
    const Sketch& gold = prog.tokens;

    SketchTrainCache sc;
    SupervisedLoss loss;
    loss.sketch = sketch_nll(params, mc, enc, gold, &sc);

    std::vector<Vec> dlogits(gold.size()), dg_extra(gold.size());
    CandidatePools pools = init_pools(kb);
    CandidatePools full_pools;
    if (!use_ontology) full_pools = init_pools(kb);

    for (std::size_t t = 0; t < gold.size(); ++t) {
        Fn f = gold[t];
        if (grads) {
            Vec dl;
            softmax_xent(sc.steps[t].logits, fn_index(f), &dl);
            dlogits[t] = dl * scale;
        }
        if (!pool_category(fn_info(f).category)) continue;
        const std::vector<std::uint32_t>* pool =
            use_ontology ? ensure_active_pool(pools, kb, f, static_cast<int>(t))
                         : active_pool(full_pools, f);
        int gi = gold_pool_index(kb, f, prog.args[t], *pool);
        if (gi < 0)
            throw DataError(tag + ": argument '" + prog.args[t] + "' of " + fn_info(f).name +
                            " does not resolve into its candidate pool");
        if (train_args) {  // ablated term stays out of the reported objective too
            auto ce = encode_candidates(params, vocab, kb, fn_info(f).category, *pool, cache);
            Vec alogits = ce.P * sc.steps[t].g;
            Vec dal;
            loss.args += softmax_xent(alogits, gi, &dal);
            if (grads) {
                dal *= scale;
                dg_extra[t] = ce.P.transpose() * dal;
                for (std::size_t i = 0; i < ce.labels.size(); ++i)
                    cache.add_grad(ce.labels[i],
                                   Vec(dal(static_cast<Eigen::Index>(i)) * sc.steps[t].g));
            }
        }
        if (use_ontology) update_pools(pools, kb, f, (*pool)[static_cast<std::size_t>(gi)],
                                       static_cast<int>(t));
    }

    if (grads) {
        Mat dX = Mat::Zero(enc.X.rows(), enc.X.cols());
        Vec dxbar = Vec::Zero(enc.xbar.size());
        sketch_train_backward(*grads, mc, enc, sc, dlogits, dg_extra, dX, dxbar);
        encoder_backward(*grads, enc, dX, dxbar);
    }
    return loss;
}

AdamW make_optimizer(const TrainConfig& cfg) {
    AdamW opt;
    opt.weight_decay = cfg.weight_decay;
    opt.group_lr[kGroupEncoder] = cfg.lr_encoder;
    opt.group_lr[kGroupOther] = cfg.lr_other;
    return opt;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

int sample_index(Rng& rng, const Vec& probs) {
    double u = uniform(rng, 0.0, 1.0);
    double acc = 0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        acc += probs(i);
        if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
}

bool entity_linking_active(const KnowledgeBase& kb) { return kb.n_entities() > 1000; }

std::vector<std::string> safe_execute(const Program& prog, const KnowledgeBase& kb) {
    try {
        return execute(prog, kb).answers;
    } catch (const ExecError&) {
        return {};
    }
}

}  // namespace

ModelBundle init_model(const ModelConfig& cfg, const Dataset& data, const KnowledgeBase& kb) {
    ModelBundle m;
    m.cfg = cfg;
    m.vocab.extend(domain_texts(data, kb));
    init_model_params(m.params, cfg, m.vocab.size());
    return m;
}

int extend_model(ModelBundle& m, const Dataset& data, const KnowledgeBase& kb, std::uint64_t seed) {
    int added = m.vocab.extend(domain_texts(data, kb));
    if (added > 0) grow_embeddings(m.params, m.cfg, m.vocab.size(), seed);
    return added;
}

std::vector<PretrainEpoch> pretrain(ModelBundle& m, const Dataset& source, const KnowledgeBase& kb,
                                    const TrainConfig& cfg) {
    cfg.validate();
    if (source.empty()) throw DataError("pretrain: empty dataset");
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (!source[i].program)
            throw DataError("pretrain: example " + std::to_string(i) + " has no program");
        auto v = validate(source[i].program->tokens);
        if (!v.ok())
            throw DataError("pretrain: example " + std::to_string(i) + ": " + v.message);
    }

    AdamW opt = make_optimizer(cfg);
    Rng rng(cfg.seed);
    CandidateCache cache;
    bool train_args = !cfg.no_pretrain_args;
    std::vector<PretrainEpoch> history;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto order = shuffled_indices(source.size(), rng);
        PretrainEpoch rec;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const Example& ex = source[order[k]];
                auto l = supervised_example(m.params, &m.params, m.cfg, m.vocab, kb, ex.question,
                                            *ex.program, train_args, !cfg.no_ontology, scale, cache,
                                            "pretrain example " + std::to_string(order[k]));
                rec.sketch_loss += l.sketch;
                rec.arg_loss += l.args;
            }
            cache.flush_backward(m.params);
            opt.step(m.params);
            cache.clear();
        }
        rec.sketch_loss /= static_cast<double>(source.size());
        rec.arg_loss /= static_cast<double>(source.size());
        history.push_back(rec);
    }
    return history;
}

PretrainEpoch pretrain_loss(const ModelBundle& m, const Dataset& source, const KnowledgeBase& kb,
                            const TrainConfig& cfg) {
    if (source.empty()) throw DataError("pretrain_loss: empty dataset");
    CandidateCache cache;
    PretrainEpoch rec;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Example& ex = source[i];
        if (!ex.program) throw DataError("pretrain_loss: example " + std::to_string(i) + " has no program");
        auto l = supervised_example(m.params, nullptr, m.cfg, m.vocab, kb, ex.question, *ex.program,
                                    !cfg.no_pretrain_args, !cfg.no_ontology, 0, cache,
                                    "pretrain example " + std::to_string(i));
        rec.sketch_loss += l.sketch;
        rec.arg_loss += l.args;
    }
    rec.sketch_loss /= static_cast<double>(source.size());
    rec.arg_loss /= static_cast<double>(source.size());
    return rec;
}

std::vector<FinetuneEpoch> finetune_hard_em(ModelBundle& m, const Dataset& target,
                                            const KnowledgeBase& kb, const TrainConfig& cfg) {
    cfg.validate();
    if (target.empty()) throw DataError("finetune: empty dataset");
    for (std::size_t i = 0; i < target.size(); ++i)
        if (!target[i].answers)
            throw DataError("finetune: example " + std::to_string(i) + " has no answers");

    bool linking = entity_linking_active(kb);
    if (linking) std::fprintf(stderr, "[finetune] entity-linking heuristic active (%zu entities)\n",
                              kb.n_entities());

    AdamW opt = make_optimizer(cfg);
    Rng rng(cfg.seed);
    CandidateCache cache;
    std::vector<FinetuneEpoch> history;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto order = shuffled_indices(target.size(), rng);
        FinetuneEpoch rec;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::pair<std::size_t, Program>> selected;
            for (std::size_t k = start; k < end; ++k) {
                const Example& ex = target[order[k]];
                EncoderCache enc;
                encode_text(m.params, m.vocab, ex.question, enc);
                auto beams = beam_decode(m.params, m.cfg, enc, cfg.beam);
                FillOptions opts;
                opts.topk = cfg.topk;
                opts.use_ontology = !cfg.no_ontology;
                opts.entity_linking = linking;
                opts.question = ex.question;
                opts.literal_spans = ex.literal_spans;
                double best_f1 = -1, best_lp = 0;
                Program best_prog;
                for (const auto& b : beams) {
                    if (b.truncated) continue;
                    for (auto& fp : fill_arguments(m.params, m.cfg, m.vocab, enc, b.sketch, kb,
                                                   opts, cache)) {
                        double lp = b.logprob + fp.logprob;
                        double f1 = answer_f1(safe_execute(fp.program, kb), *ex.answers).f1;
                        if (f1 > best_f1 || (f1 == best_f1 && lp > best_lp)) {
                            best_f1 = f1;
                            best_lp = lp;
                            best_prog = std::move(fp.program);
                        }
                    }
                }
                if (best_f1 > 0) {
                    rec.mean_f1 += best_f1;
                    selected.emplace_back(order[k], std::move(best_prog));
                } else {
                    ++rec.skipped;
                }
            }
            if (!selected.empty()) {
                double scale = 1.0 / static_cast<double>(selected.size());
                for (auto& [idx, prog] : selected)
                    supervised_example(m.params, &m.params, m.cfg, m.vocab, kb,
                                       target[idx].question, prog, true, !cfg.no_ontology, scale,
                                       cache, "hard-em example " + std::to_string(idx));
                cache.flush_backward(m.params);
                opt.step(m.params);
            }
            cache.clear();
        }
        rec.mean_f1 /= static_cast<double>(target.size());
        history.push_back(rec);
    }
    return history;
}

std::vector<FinetuneEpoch> finetune_reinforce(ModelBundle& m, const Dataset& target,
                                              const KnowledgeBase& kb, const TrainConfig& cfg) {
    cfg.validate();
    if (target.empty()) throw DataError("finetune: empty dataset");
    for (std::size_t i = 0; i < target.size(); ++i)
        if (!target[i].answers)
            throw DataError("finetune: example " + std::to_string(i) + " has no answers");

    AdamW opt = make_optimizer(cfg);
    Rng rng(cfg.seed);
    CandidateCache cache;
    double baseline = 0;
    std::vector<FinetuneEpoch> history;

    struct ArgStep {
        std::size_t t = 0;
        Mat P;
        std::vector<std::string> labels;
        Vec probs;
        int chosen = 0;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto order = shuffled_indices(target.size(), rng);
        FinetuneEpoch rec;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            double scale = 1.0 / static_cast<double>(end - start);
            bool any_grad = false;
            for (std::size_t k = start; k < end; ++k) {
                const Example& ex = target[order[k]];
                EncoderCache enc;
                encode_text(m.params, m.vocab, ex.question, enc);

                // sample one program from the factorized policy
                SketchTrainCache sc;
                sc.h0 = decoder_h0(m.params, enc.xbar);
                Vec h = sc.h0;
                int prev = fn_index(Fn::Start);
                CandidatePools pools = init_pools(kb);
                CandidatePools full_pools;
                if (cfg.no_ontology) full_pools = init_pools(kb);
                StackSim sim;
                Program prog;
                std::vector<Vec> step_probs;  // masked distribution per step
                std::vector<int> sampled;
                std::vector<ArgStep> arg_steps;
                std::size_t next_span = 0;
                bool ended = false;
                for (int t = 0; t < m.cfg.max_len && !ended; ++t) {
                    DecodeStepCache c;
                    decode_step_forward(m.params, m.cfg, enc.X, prev, h, c);
                    int remaining = m.cfg.max_len - t;
                    std::vector<int> allowed;
                    for (int fi = 0; fi < kNumFn; ++fi)
                        if (token_allowed(sim, fn_at(fi), remaining)) allowed.push_back(fi);
                    if (allowed.empty()) break;
                    Vec sub(static_cast<Eigen::Index>(allowed.size()));
                    for (std::size_t j = 0; j < allowed.size(); ++j)
                        sub(static_cast<Eigen::Index>(j)) = c.logits(allowed[j]);
                    Vec subp = softmax(sub);
                    int j = sample_index(rng, subp);
                    int fi = allowed[static_cast<std::size_t>(j)];
                    Vec p = Vec::Zero(kNumFn);
                    for (std::size_t jj = 0; jj < allowed.size(); ++jj)
                        p(allowed[jj]) = subp(static_cast<Eigen::Index>(jj));
                    Fn f = fn_at(fi);

                    std::string arg;
                    ArgCategory cat = fn_info(f).category;
                    if (cat == ArgCategory::LiteralText) {
                        if (next_span < ex.literal_spans.size()) arg = ex.literal_spans[next_span];
                        ++next_span;
                    } else if (pool_category(cat)) {
                        const std::vector<std::uint32_t>* pool =
                            !cfg.no_ontology ? ensure_active_pool(pools, kb, f, t)
                                             : active_pool(full_pools, f);
                        auto ce = encode_candidates(m.params, m.vocab, kb, cat, *pool, cache);
                        Vec ap = softmax(ce.P * c.g);
                        int ci = sample_index(rng, ap);
                        arg = ce.labels[static_cast<std::size_t>(ci)];
                        if (!cfg.no_ontology)
                            update_pools(pools, kb, f, ce.ids[static_cast<std::size_t>(ci)], t);
                        arg_steps.push_back({static_cast<std::size_t>(sc.steps.size()),
                                             std::move(ce.P), std::move(ce.labels), std::move(ap), ci});
                    }

                    prog.tokens.push_back(f);
                    prog.args.push_back(arg);
                    sim.apply(f);
                    sc.steps.push_back(std::move(c));
                    step_probs.push_back(std::move(p));
                    sampled.push_back(fi);
                    h = sc.steps.back().h;
                    prev = fi;
                    if (f == Fn::End) ended = true;
                }

                double reward = 0;
                if (ended) reward = answer_f1(safe_execute(prog, kb), *ex.answers).f1;
                rec.mean_f1 += reward;
                double adv = reward - (cfg.reinforce_baseline ? baseline : 0.0);
                if (cfg.reinforce_baseline) baseline = 0.99 * baseline + 0.01 * reward;

                if (adv != 0 && !sc.steps.empty()) {
                    any_grad = true;
                    double s = adv * scale;
                    std::vector<Vec> dlogits(sc.steps.size()), dg_extra(sc.steps.size());
                    for (std::size_t st = 0; st < sc.steps.size(); ++st) {
                        Vec dl = step_probs[st];
                        dl(sampled[st]) -= 1.0;
                        dlogits[st] = dl * s;
                    }
                    for (const auto& as : arg_steps) {
                        Vec da = as.probs;
                        da(as.chosen) -= 1.0;
                        da *= s;
                        dg_extra[as.t] = as.P.transpose() * da;
                        for (std::size_t i = 0; i < as.labels.size(); ++i)
                            cache.add_grad(as.labels[i],
                                           Vec(da(static_cast<Eigen::Index>(i)) * sc.steps[as.t].g));
                    }
                    Mat dX = Mat::Zero(enc.X.rows(), enc.X.cols());
                    Vec dxbar = Vec::Zero(enc.xbar.size());
                    sketch_train_backward(m.params, m.cfg, enc, sc, dlogits, dg_extra, dX, dxbar);
                    encoder_backward(m.params, enc, dX, dxbar);
                }
            }
            if (any_grad) {
                cache.flush_backward(m.params);
                opt.step(m.params);
            }
            cache.clear();
        }
        rec.mean_f1 /= static_cast<double>(target.size());
        rec.baseline = baseline;
        history.push_back(rec);
    }
    return history;
}

std::vector<ProgramCandidate> decode_candidates(const ModelBundle& m, const KnowledgeBase& kb,
                                                const std::string& question,
                                                const std::vector<std::string>& literal_spans,
                                                const TrainConfig& cfg, CandidateCache& cache) {
    EncoderCache enc;
    encode_text(m.params, m.vocab, question, enc);
    auto beams = beam_decode(m.params, m.cfg, enc, cfg.beam);
    FillOptions opts;
    opts.topk = cfg.topk;
    opts.use_ontology = !cfg.no_ontology;
    opts.entity_linking = entity_linking_active(kb);
    opts.question = question;
    opts.literal_spans = literal_spans;
    std::vector<ProgramCandidate> out;
    for (const auto& b : beams) {
        if (b.truncated) continue;
        for (auto& fp : fill_arguments(m.params, m.cfg, m.vocab, enc, b.sketch, kb, opts, cache))
            out.push_back({std::move(fp.program), b.logprob + fp.logprob});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ProgramCandidate& a, const ProgramCandidate& b) {
                         return a.logprob > b.logprob;
                     });
    return out;
}

MetricsReport evaluate(const ModelBundle& m, const Dataset& data, const KnowledgeBase& kb,
                       const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DataError("evaluate: empty dataset");
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!data[i].answers)
            throw DataError("evaluate: example " + std::to_string(i) + " has no answers");
    if (entity_linking_active(kb))
        std::fprintf(stderr, "[evaluate] entity-linking heuristic active (%zu entities)\n",
                     kb.n_entities());

    Rng rng(cfg.seed);
    CandidateCache cache;  // parameters frozen: label encodings valid across examples
    MetricsReport rep;
    rep.topk_ks = {1, 2, 5, 10};
    rep.topk_f1.assign(rep.topk_ks.size(), 0.0);
    rep.n_examples = data.size();

    for (const Example& ex : data) {
        auto cands = decode_candidates(m, kb, ex.question, ex.literal_spans, cfg, cache);
        std::vector<double> f1s;
        std::vector<std::string> top1;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            auto ans = safe_execute(cands[i].program, kb);
            if (i == 0) top1 = ans;
            f1s.push_back(answer_f1(ans, *ex.answers).f1);
        }
        rep.f1 += f1s.empty() ? 0.0 : f1s[0];
        rep.hits1 += hits_at_1(top1, *ex.answers, rng);
        for (std::size_t i = 0; i < rep.topk_ks.size(); ++i)
            rep.topk_f1[i] += best_f1_in_top_k(f1s, rep.topk_ks[i]);
    }
    rep.f1 /= static_cast<double>(data.size());
    rep.hits1 /= static_cast<double>(data.size());
    for (auto& v : rep.topk_f1) v /= static_cast<double>(data.size());
    return rep;
}

}  // namespace kbqa
