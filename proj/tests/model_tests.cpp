#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "kbqa/argument_parser.hpp"
#include "kbqa/encoder.hpp"
#include "kbqa/model.hpp"
#include "kbqa/nn.hpp"
#include "kbqa/pruning.hpp"
#include "kbqa/sketch_parser.hpp"
#include "kbqa/vocab.hpp"
#include "support.hpp"

using namespace kbqa;
using namespace kbqa::test;

TEST_CASE("softmax machinery") {
    Vec logits(3);
    logits << 1.0, 2.0, 3.0;
    Vec p = softmax(logits);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p(2) > p(1));
    Vec shifted = softmax(logits.array() + 100.0);
    CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);

    Vec huge(2);
    huge << 1000.0, -1000.0;
    Vec ph = softmax(huge);
    CHECK(std::isfinite(ph(0)));
    CHECK(std::abs(ph(0) - 1.0) < 1e-12);

    Vec lsm = log_softmax(logits);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(lsm(i) - std::log(p(i))) < 1e-12);

    Vec dl;
    double loss = softmax_xent(logits, 1, &dl);
    CHECK(std::abs(loss + lsm(1)) < 1e-12);
    CHECK(std::abs(dl(1) - (p(1) - 1.0)) < 1e-12);
    CHECK(std::abs(dl(0) - p(0)) < 1e-12);
    CHECK(std::abs(dl.sum()) < 1e-12);
}

TEST_CASE("optimizer updates and decoupled decay") {
    ParameterStore store;
    Rng rng(1);
    Param& w = store.add("w", 2, 2, kGroupOther);
    fill_uniform(w.value, -1, 1, rng);
    Mat before = w.value;

    AdamW opt;
    opt.group_lr[kGroupEncoder] = 1e-2;
    opt.group_lr[kGroupOther] = 1e-2;
    opt.weight_decay = 0.1;

    // zero gradient: only the decoupled decay moves the value
    opt.step(store);
    CHECK((w.value - before * (1.0 - 1e-2 * 0.1)).cwiseAbs().maxCoeff() < 1e-12);

    // gradients are zeroed by the step
    w.grad.setOnes();
    Mat at_step = w.value;
    opt.step(store);
    CHECK(w.grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK((w.value - at_step).cwiseAbs().maxCoeff() > 0.0);

    // a zero learning rate freezes the group entirely
    ParameterStore frozen;
    Param& f = frozen.add("f", 2, 2, kGroupEncoder);
    fill_uniform(f.value, -1, 1, rng);
    Mat fv = f.value;
    f.grad.setOnes();
    AdamW opt2;
    opt2.group_lr[kGroupEncoder] = 0.0;
    opt2.weight_decay = 0.1;
    opt2.step(frozen);
    CHECK((f.value - fv).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parameter store is ordered and checkpoints are bit exact") {
    ParameterStore store;
    Rng rng(5);
    store.add("zeta", 3, 2, kGroupOther);
    store.add("alpha", 2, 2, kGroupEncoder);
    store.add("mid", 1, 4, kGroupOther);
    for (auto& [name, p] : store.items()) fill_gaussian(p.value, 0, 1, rng);

    std::vector<std::string> names;
    for (const auto& [name, p] : store.items()) names.push_back(name);
    CHECK(std::is_sorted(names.begin(), names.end()));

    TempDir tmp;
    save_params(store, tmp.file("p.bin"));
    ParameterStore back;
    load_params(back, tmp.file("p.bin"));
    REQUIRE(back.size() == store.size());
    for (const auto& [name, p] : store.items()) {
        REQUIRE(back.has(name));
        CHECK(back.at(name).group == p.group);
        CHECK((back.at(name).value - p.value).cwiseAbs().maxCoeff() == 0.0);
    }
}

namespace {

// Central finite difference at selected entries of every tensor.
template <typename LossFn>
void check_gradients(const ParameterStore& params, const ParameterStore& grads, LossFn loss,
                     double eps = 1e-6, double tol = 2e-4) {
    for (const auto& [name, p] : params.items()) {
        const Mat& g = grads.at(name).grad;
        std::vector<std::pair<Eigen::Index, Eigen::Index>> picks;
        Eigen::Index n = p.value.size();
        for (Eigen::Index k = 0; k < n; k += std::max<Eigen::Index>(1, n / 4))
            picks.emplace_back(k % p.value.rows(), k / p.value.rows());
        picks.emplace_back(p.value.rows() - 1, p.value.cols() - 1);
        for (auto [r, c] : picks) {
            ParameterStore pert = params;
            pert.at(name).value(r, c) += eps;
            double up = loss(pert);
            pert.at(name).value(r, c) -= 2 * eps;
            double down = loss(pert);
            double numeric = (up - down) / (2 * eps);
            double analytic = g(r, c);
            double err = std::abs(numeric - analytic) /
                         std::max(1.0, std::max(std::abs(numeric), std::abs(analytic)));
            INFO("tensor ", name, " entry (", r, ",", c, "): numeric ", numeric, " analytic ",
                 analytic);
            CHECK(err < tol);
        }
    }
}

}  // namespace

TEST_CASE("gru gradients match finite differences") {
    Rng rng(3);
    ParameterStore params;
    gru_init(params, "cell", 4, 3, kGroupOther, rng);
    Vec x(4), h(3), dout(3);
    for (int i = 0; i < 4; ++i) x(i) = gaussian(rng, 0, 1);
    for (int i = 0; i < 3; ++i) h(i) = gaussian(rng, 0, 1);
    for (int i = 0; i < 3; ++i) dout(i) = gaussian(rng, 0, 1);

    auto loss = [&](const ParameterStore& ps) {
        GruCache c;
        return gru_forward(ps, "cell", x, h, &c).dot(dout);
    };

    ParameterStore grads = params;
    grads.zero_grad();
    GruCache c;
    gru_forward(params, "cell", x, h, &c);
    Vec dx = Vec::Zero(4), dh = Vec::Zero(3);
    gru_backward(grads, "cell", c, dout, dx, dh);
    check_gradients(params, grads, loss);

    // input gradients too
    double eps = 1e-6;
    for (int i = 0; i < 4; ++i) {
        Vec xp = x;
        xp(i) += eps;
        GruCache cu;
        double up = gru_forward(params, "cell", xp, h, &cu).dot(dout);
        xp(i) -= 2 * eps;
        double down = gru_forward(params, "cell", xp, h, &cu).dot(dout);
        CHECK(std::abs((up - down) / (2 * eps) - dx(i)) < 1e-5);
    }
}

TEST_CASE("attention gradients match finite differences") {
    Rng rng(4);
    Mat mem(5, 3);
    Vec key(3), dctx(3);
    for (int i = 0; i < mem.size(); ++i) mem(i / 3, i % 3) = gaussian(rng, 0, 1);
    for (int i = 0; i < 3; ++i) key(i) = gaussian(rng, 0, 1);
    for (int i = 0; i < 3; ++i) dctx(i) = gaussian(rng, 0, 1);

    AttentionCache cache;
    attention_forward(mem, key, &cache);
    CHECK(std::abs(cache.alpha.sum() - 1.0) < 1e-12);
    Mat dmem = Mat::Zero(5, 3);
    Vec dkey = Vec::Zero(3);
    attention_backward(mem, cache, dctx, dmem, dkey);

    double eps = 1e-6;
    for (int i = 0; i < 3; ++i) {
        Vec kp = key;
        kp(i) += eps;
        AttentionCache cu;
        attention_forward(mem, kp, &cu);
        double up = cu.context.dot(dctx);
        kp(i) -= 2 * eps;
        attention_forward(mem, kp, &cu);
        double down = cu.context.dot(dctx);
        CHECK(std::abs((up - down) / (2 * eps) - dkey(i)) < 1e-5);
    }
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 3; ++c) {
            Mat mp = mem;
            mp(r, c) += eps;
            AttentionCache cu;
            attention_forward(mp, key, &cu);
            double up = cu.context.dot(dctx);
            mp(r, c) -= 2 * eps;
            attention_forward(mp, key, &cu);
            double down = cu.context.dot(dctx);
            CHECK(std::abs((up - down) / (2 * eps) - dmem(r, c)) < 1e-5);
        }
}

TEST_CASE("vocabulary reserves control slots and grows canonically") {
    Vocabulary v = build_vocab({"the red fox", "the tall mill"});
    CHECK(v.id("<pad>") == Vocabulary::kPad);
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.id("never seen") == Vocabulary::kUnk);
    // appended tokens are sorted
    std::vector<std::string> words;
    for (int i = 2; i < v.size(); ++i) words.push_back(v.token(i));
    CHECK(std::is_sorted(words.begin(), words.end()));

    Vocabulary v2 = build_vocab({"the tall mill", "the red fox"});
    CHECK(v2 == v);  // canonical regardless of corpus order

    int before = v.size();
    int old_fox = v.id("fox");
    int added = v.extend({"a new word arrives"});
    CHECK(added > 0);
    CHECK(v.size() == before + added);
    CHECK(v.id("fox") == old_fox);  // old indices stable

    Vocabulary back = Vocabulary::deserialize(v.serialize());
    CHECK(back == v);
}

TEST_CASE("encoder output shape, pooling and determinism") {
    Rng rng(6);
    Vocabulary vocab = build_vocab({"who owns the red fox", "where is the tall mill"});
    ParameterStore params;
    encoder_init(params, vocab.size(), 5, rng);
    CHECK(encoder_dim(params) == 5);

    EncoderCache cache;
    encode_text(params, vocab, "who owns the mill", cache);
    CHECK(cache.X.rows() == 4);
    CHECK(cache.X.cols() == 5);
    Vec mean = cache.X.colwise().mean();
    CHECK((mean - cache.xbar).cwiseAbs().maxCoeff() < 1e-12);

    EncoderCache again;
    encode_text(params, vocab, "who owns the mill", again);
    CHECK((again.X - cache.X).cwiseAbs().maxCoeff() == 0.0);

    EncoderCache empty;
    CHECK_THROWS_AS(encode_text(params, vocab, "?!", empty), NnError);

    // every parameter registered by the encoder belongs to the encoder group
    for (const auto& [name, p] : params.items()) CHECK(p.group == kGroupEncoder);
}

TEST_CASE("encoder gradients match finite differences") {
    Rng rng(7);
    Vocabulary vocab = build_vocab({"red fox runs", "tall mill turns"});
    ParameterStore params;
    encoder_init(params, vocab.size(), 4, rng);

    Mat dX(3, 4);
    Vec dxbar(4);
    for (int i = 0; i < dX.size(); ++i) dX(i / 4, i % 4) = gaussian(rng, 0, 1);
    for (int i = 0; i < 4; ++i) dxbar(i) = gaussian(rng, 0, 1);

    auto loss = [&](const ParameterStore& ps) {
        EncoderCache c;
        encode_text(ps, vocab, "fox turns red", c);
        return (c.X.array() * dX.array()).sum() + c.xbar.dot(dxbar);
    };

    ParameterStore grads = params;
    grads.zero_grad();
    EncoderCache c;
    encode_text(grads, vocab, "fox turns red", c);
    encoder_backward(grads, c, dX, dxbar);
    check_gradients(params, grads, loss);
}

namespace {

struct TinyModel {
    ModelConfig cfg;
    Vocabulary vocab;
    ParameterStore params;

    TinyModel(int d, int d_hat, std::uint64_t seed) {
        cfg.d = d;
        cfg.d_hat = d_hat;
        cfg.max_len = 10;
        cfg.init_seed = seed;
        vocab = build_vocab({"who owns the team", "where does the club play",
                             "fc barcelona camp nou steve bisciotti baltimore ravens",
                             "sports facility organization human owner arena stadium teams owned"});
        init_model_params(params, cfg, vocab.size());
    }
};

}  // namespace

TEST_CASE("sketch nll factorizes over decoding steps") {
    for (auto [d, dh] : {std::pair{5, 5}, std::pair{6, 4}}) {
        TinyModel m(d, dh, 11);
        EncoderCache enc;
        encode_text(m.params, m.vocab, "who owns the club", enc);

        Sketch gold = {Fn::Find, Fn::Relate, Fn::FilterConcept, Fn::End};
        SketchTrainCache cache;
        double nll = sketch_nll(m.params, m.cfg, enc, gold, &cache);
        CHECK(nll > 0);
        REQUIRE(cache.steps.size() == gold.size());

        // the per-step chain of full-softmax probabilities reproduces the loss
        double sum = 0;
        for (std::size_t t = 0; t < gold.size(); ++t)
            sum -= log_softmax(cache.steps[t].logits)(fn_index(gold[t]));
        CHECK(std::abs(sum - nll) < 1e-9);

        // and a beam that lands on the same sketch reports the same mass
        auto beams = beam_decode(m.params, m.cfg, enc, 16);
        for (const auto& b : beams) {
            if (b.truncated) continue;
            SketchTrainCache c2;
            double n2 = sketch_nll(m.params, m.cfg, enc, b.sketch, &c2);
            CHECK(std::abs(std::exp(-n2) - std::exp(b.logprob)) < 1e-9);
        }
    }
}

TEST_CASE("greedy decode equals width-one beam and respects the mask") {
    TinyModel m(5, 4, 13);
    EncoderCache enc;
    encode_text(m.params, m.vocab, "where does the club play", enc);

    DecodeOutcome greedy = greedy_decode(m.params, m.cfg, enc);
    auto beam1 = beam_decode(m.params, m.cfg, enc, 1);
    if (!greedy.truncated && !beam1.empty()) {
        CHECK(beam1[0].sketch == greedy.sketch);
        CHECK(std::abs(beam1[0].logprob - greedy.logprob) < 1e-12);
    }

    auto beams = beam_decode(m.params, m.cfg, enc, 8);
    REQUIRE(!beams.empty());
    for (std::size_t i = 0; i + 1 < beams.size(); ++i)
        CHECK(beams[i].logprob >= beams[i + 1].logprob);
    std::set<Sketch> seen;
    for (const auto& b : beams) {
        CHECK(validate(b.sketch).ok());
        CHECK(b.logprob <= 1e-12);
        CHECK(seen.insert(b.sketch).second);  // no duplicate hypotheses
    }
}

TEST_CASE("model bundle round trip and embedding growth") {
    TinyModel m(5, 4, 17);
    TempDir tmp;
    save_model({m.cfg, m.vocab, m.params}, tmp.file("model"));
    ModelBundle back = load_model(tmp.file("model"));
    CHECK(back.cfg.d == 5);
    CHECK(back.cfg.d_hat == 4);
    CHECK(back.vocab == m.vocab);
    REQUIRE(back.params.size() == m.params.size());
    for (const auto& [name, p] : m.params.items())
        CHECK((back.params.at(name).value - p.value).cwiseAbs().maxCoeff() == 0.0);

    // growing for new vocabulary keeps the old rows bit-identical
    Mat emb_before = m.params.at("emb").value;
    int old_size = m.vocab.size();
    int added = m.vocab.extend({"an entirely fresh domain phrase"});
    REQUIRE(added > 0);
    grow_embeddings(m.params, m.cfg, m.vocab.size(), 99);
    const Mat& emb_after = m.params.at("emb").value;
    REQUIRE(emb_after.rows() == old_size + added);
    CHECK((emb_after.topRows(old_size) - emb_before).cwiseAbs().maxCoeff() == 0.0);

    // growth is deterministic in the seed
    ModelBundle twin = load_model(tmp.file("model"));
    grow_embeddings(twin.params, twin.cfg, m.vocab.size(), 99);
    CHECK((twin.params.at("emb").value - emb_after).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("candidate encodings are cached pure functions of the label") {
    TinyModel m(5, 4, 19);
    KnowledgeBase kb = make_fixture();
    m.vocab.extend(kb.entity_labels);
    m.vocab.extend(kb.concept_labels);
    m.vocab.extend(kb.relation_labels);
    ParameterStore fresh;
    init_model_params(fresh, m.cfg, m.vocab.size());

    CandidateCache cache;
    std::vector<std::uint32_t> pool = {0, 1, 2, 3};
    CandidateEncoding ce =
        encode_candidates(fresh, m.vocab, kb, ArgCategory::Entity, pool, cache);
    REQUIRE(ce.P.rows() == 4);
    CHECK(ce.P.cols() == 4);
    CHECK(ce.labels[0] == "FC Barcelona");
    CHECK(cache.size() == 4);

    // second call reuses the cache and is bit-identical
    CandidateEncoding ce2 =
        encode_candidates(fresh, m.vocab, kb, ArgCategory::Entity, pool, cache);
    CHECK(cache.size() == 4);
    CHECK((ce2.P - ce.P).cwiseAbs().maxCoeff() == 0.0);

    // rows equal the pooled encodings of the labels
    for (int i = 0; i < 4; ++i) {
        EncoderCache ec;
        encode_text(fresh, m.vocab, kb.entity_labels[i], ec);
        CHECK((ce.P.row(i).transpose() - ec.xbar).cwiseAbs().maxCoeff() < 1e-12);
    }

    CHECK_THROWS_AS(encode_candidates(fresh, m.vocab, kb, ArgCategory::Entity, {}, cache),
                    PruneError);
    CHECK(category_label(kb, ArgCategory::Concept, 0) == "sports team");
    CHECK(category_label(kb, ArgCategory::Relation, 1) == "teams owned");
    CHECK_THROWS_AS(category_label(kb, ArgCategory::Empty, 0), PruneError);
}

TEST_CASE("argument scores form a softmax and favor nothing among clones") {
    TinyModel m(4, 4, 23);
    Rng rng(1);
    Mat P(3, 4);
    Vec g(4);
    for (int i = 0; i < P.size(); ++i) P(i / 4, i % 4) = gaussian(rng, 0, 1);
    for (int i = 0; i < 4; ++i) g(i) = gaussian(rng, 0, 1);

    Vec probs = score_arguments(P, g);
    CHECK(probs.size() == 3);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-12);
    Vec manual = softmax(P * g);
    CHECK((probs - manual).cwiseAbs().maxCoeff() < 1e-12);

    P.row(2) = P.row(0);  // identical candidates score identically
    probs = score_arguments(P, g);
    CHECK(std::abs(probs(0) - probs(2)) < 1e-12);

    Mat single = P.topRows(1);
    CHECK(std::abs(score_arguments(single, g)(0) - 1.0) < 1e-12);
}

TEST_CASE("entity linking keys on shared word tokens") {
    KnowledgeBase kb = make_fixture();
    auto hits = linked_entities(kb, "Where does FC Barcelona play?");
    REQUIRE(hits.size() == 1);
    CHECK(kb.entity_labels[hits[0]] == "FC Barcelona");
    CHECK(linked_entities(kb, "nothing matches here").empty());
    auto two = linked_entities(kb, "did Steve Bisciotti visit Camp Nou");
    CHECK(two.size() == 2);
}

namespace {

struct FillFixture {
    TinyModel m{5, 4, 29};
    KnowledgeBase kb = make_fixture();
    EncoderCache enc;
    Sketch sketch = {Fn::Find, Fn::Relate, Fn::FilterConcept, Fn::End};

    FillFixture() {
        m.vocab.extend(kb.entity_labels);
        m.vocab.extend(kb.concept_labels);
        m.vocab.extend(kb.relation_labels);
        ParameterStore fresh;
        init_model_params(fresh, m.cfg, m.vocab.size());
        m.params = std::move(fresh);
        encode_text(m.params, m.vocab, "who plays at the arena", enc);
    }
};

// Independent enumeration of every ontology-consistent assignment with its
// exact log-probability, for cross-checking the beam.
void enumerate_assignments(const FillFixture& f, const std::vector<Vec>& gs, CandidatePools pools,
                           std::size_t t, double logprob, Program partial,
                           std::vector<std::pair<Program, double>>& out, CandidateCache& cache) {
    if (t == f.sketch.size()) return;
    Fn fn = f.sketch[t];
    if (fn == Fn::End) {
        partial.tokens.push_back(fn);
        partial.args.emplace_back();
        out.emplace_back(std::move(partial), logprob);
        return;
    }
    const auto* pool = ensure_active_pool(pools, f.kb, fn, static_cast<int>(t));
    REQUIRE(pool != nullptr);
    CandidateEncoding ce = encode_candidates(f.m.params, f.m.vocab, f.kb, fn_info(fn).category,
                                             *pool, cache);
    Vec lsm = log_softmax(ce.P * gs[t]);
    for (int i = 0; i < lsm.size(); ++i) {
        CandidatePools next = pools;
        update_pools(next, f.kb, fn, ce.ids[i], static_cast<int>(t));
        Program ext = partial;
        ext.tokens.push_back(fn);
        ext.args.push_back(ce.labels[i]);
        enumerate_assignments(f, gs, std::move(next), t + 1, logprob + lsm(i), std::move(ext), out,
                              cache);
    }
}

}  // namespace

TEST_CASE("argument fill matches exhaustive enumeration") {
    FillFixture f;

    // teacher-forced replay to recover each step's fused vector
    Vec h = decoder_h0(f.m.params, f.enc.xbar);
    int prev = fn_index(Fn::Start);
    std::vector<Vec> gs;
    for (Fn fn : f.sketch) {
        DecodeStepCache c;
        decode_step_forward(f.m.params, f.m.cfg, f.enc.X, prev, h, c);
        gs.push_back(c.g);
        h = c.h;
        prev = fn_index(fn);
    }

    std::vector<std::pair<Program, double>> expected;
    CandidateCache ecache;
    enumerate_assignments(f, gs, init_pools(f.kb), 0, 0.0, {}, expected, ecache);
    std::stable_sort(expected.begin(), expected.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    // per start entity the pruned pools admit 1/2/1/1 chains (the venue's
    // empty relation pool falls back to both relations), 5 assignments total
    REQUIRE(expected.size() == 5);

    FillOptions opts;
    opts.topk = 16;  // wider than the whole assignment space: the beam is exhaustive
    CandidateCache cache;
    auto got = fill_arguments(f.m.params, f.m.cfg, f.m.vocab, f.enc, f.sketch, f.kb, opts, cache);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].program == expected[i].first);
        CHECK(std::abs(got[i].logprob - expected[i].second) < 1e-9);
    }
    for (std::size_t i = 0; i + 1 < got.size(); ++i)
        CHECK(got[i].logprob >= got[i + 1].logprob);

    // every produced program is ontology-consistent and executes
    for (const auto& fp : got) {
        CandidatePools pools = init_pools(f.kb);
        for (std::size_t t = 0; t < fp.program.tokens.size(); ++t) {
            Fn fn = fp.program.tokens[t];
            const auto* pool = ensure_active_pool(pools, f.kb, fn, static_cast<int>(t));
            if (!pool) continue;
            std::uint32_t id = 0;
            switch (fn_info(fn).category) {
                case ArgCategory::Entity: id = f.kb.resolve_entity(fp.program.args[t]).at(0); break;
                case ArgCategory::Relation:
                    id = f.kb.resolve_relation(parse_relate_arg(fp.program.args[t]).relation_label)
                             .at(0);
                    break;
                case ArgCategory::Concept: id = f.kb.resolve_concept(fp.program.args[t]).at(0); break;
                default: continue;
            }
            CHECK(std::binary_search(pool->begin(), pool->end(), id));
            update_pools(pools, f.kb, fn, id, static_cast<int>(t));
        }
    }

    // a second run from a fresh cache is bit-identical
    CandidateCache cache2;
    auto again = fill_arguments(f.m.params, f.m.cfg, f.m.vocab, f.enc, f.sketch, f.kb, opts, cache2);
    REQUIRE(again.size() == got.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(again[i].program == got[i].program);
        CHECK(again[i].logprob == got[i].logprob);
    }
}

TEST_CASE("disabling the ontology leaves every pool full") {
    FillFixture f;
    FillOptions opts;
    opts.topk = 1000;
    opts.use_ontology = false;
    CandidateCache cache;
    auto got = fill_arguments(f.m.params, f.m.cfg, f.m.vocab, f.enc, f.sketch, f.kb, opts, cache);
    CHECK(got.size() == 4u * 2u * 5u);  // the raw cross product survives

    opts.use_ontology = true;
    CandidateCache cache2;
    auto pruned = fill_arguments(f.m.params, f.m.cfg, f.m.vocab, f.enc, f.sketch, f.kb, opts, cache2);
    CHECK(pruned.size() == 5);
}

TEST_CASE("literal spans are consumed in token order") {
    FillFixture f;
    Sketch sketch = {Fn::FindAll, Fn::FilterStr, Fn::FilterConcept, Fn::End};
    FillOptions opts;
    opts.topk = 3;
    opts.literal_spans = {"style|jazz"};
    CandidateCache cache;
    auto got = fill_arguments(f.m.params, f.m.cfg, f.m.vocab, f.enc, sketch, f.kb, opts, cache);
    REQUIRE(!got.empty());
    for (const auto& fp : got) {
        CHECK(fp.program.args[0] == "");            // FindAll takes no argument
        CHECK(fp.program.args[1] == "style|jazz");  // the span lands on FilterStr
    }

    // with no spans left the argument stays empty rather than failing
    FillOptions bare;
    bare.topk = 2;
    CandidateCache cache2;
    auto none = fill_arguments(f.m.params, f.m.cfg, f.m.vocab, f.enc, sketch, f.kb, bare, cache2);
    REQUIRE(!none.empty());
    CHECK(none[0].program.args[1] == "");
}

TEST_CASE("entity linking restricts the entity pool when it can") {
    FillFixture f;
    Sketch sketch = {Fn::Find, Fn::End};
    FillOptions opts;
    opts.topk = 10;
    opts.entity_linking = true;
    opts.question = "where does fc barcelona play";
    CandidateCache cache;
    auto got = fill_arguments(f.m.params, f.m.cfg, f.m.vocab, f.enc, sketch, f.kb, opts, cache);
    REQUIRE(got.size() == 1);  // only the linked entity survives
    CHECK(got[0].program.args[0] == "FC Barcelona");

    // nothing linked: the full pool is kept instead
    opts.question = "no overlap with any label";
    CandidateCache cache2;
    auto all = fill_arguments(f.m.params, f.m.cfg, f.m.vocab, f.enc, sketch, f.kb, opts, cache2);
    CHECK(all.size() == 4);
}

TEST_CASE("candidate cache gradient accumulation equals direct backprop") {
    TinyModel m(4, 4, 31);
    Rng rng(2);
    Vec d1(4), d2(4);
    for (int i = 0; i < 4; ++i) d1(i) = gaussian(rng, 0, 1);
    for (int i = 0; i < 4; ++i) d2(i) = gaussian(rng, 0, 1);

    // via the cache, two gradient deposits on the same label
    ParameterStore via_cache = m.params;
    via_cache.zero_grad();
    CandidateCache cache;
    cache.pooled(via_cache, m.vocab, "the team");
    cache.add_grad("the team", d1);
    cache.add_grad("the team", d2);
    cache.flush_backward(via_cache);

    // direct: one encoder backward with the summed gradient
    ParameterStore direct = m.params;
    direct.zero_grad();
    EncoderCache ec;
    encode_text(direct, m.vocab, "the team", ec);
    encoder_backward(direct, ec, Mat(), Vec(d1 + d2));

    for (const auto& [name, p] : via_cache.items()) {
        CHECK((p.grad - direct.at(name).grad).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("full training-path gradients match finite differences") {
    KnowledgeBase kb = make_fixture();
    std::string question = "who owns the baltimore ravens";
    Program gold = parse_program_text(
        "Find(Steve Bisciotti);Relate(teams owned);FilterConcept(sports team)");

    for (auto [d, dh] : {std::pair{5, 5}, std::pair{6, 4}}) {
        // resample the initialization until no rectifier input sits on its kink
        std::uint64_t seed = 41;
        ModelConfig cfg;
        cfg.d = d;
        cfg.d_hat = dh;
        cfg.max_len = 10;
        Vocabulary vocab = build_vocab({question});
        vocab.extend(kb.entity_labels);
        vocab.extend(kb.concept_labels);
        vocab.extend(kb.relation_labels);

        ParameterStore params;
        for (;; ++seed) {
            REQUIRE(seed < 41 + 20000);  // a kink-free init must exist well before this
            cfg.init_seed = seed;
            ParameterStore trial;
            init_model_params(trial, cfg, vocab.size());
            EncoderCache enc;
            encode_text(trial, vocab, question, enc);
            SketchTrainCache sc;
            sketch_nll(trial, cfg, enc, gold.tokens, &sc);
            double closest = 1.0;
            for (const auto& st : sc.steps) closest = std::min(closest, st.mlp_pre.cwiseAbs().minCoeff());
            // pre-activations scale like the (small) init, so demand clearance only
            // well above the finite-difference step, not an absolute margin
            if (closest > 1e-5) {
                params = std::move(trial);
                break;
            }
        }

        // loss = sketch nll + argument cross-entropy along the gold assignment
        auto loss_of = [&](const ParameterStore& ps) {
            EncoderCache enc;
            encode_text(ps, vocab, question, enc);
            SketchTrainCache sc;
            double loss = sketch_nll(ps, cfg, enc, gold.tokens, &sc);
            CandidateCache cc;
            CandidatePools pools = init_pools(kb);
            for (std::size_t t = 0; t < gold.tokens.size(); ++t) {
                Fn fn = gold.tokens[t];
                const auto* pool = ensure_active_pool(pools, kb, fn, static_cast<int>(t));
                if (!pool) continue;
                ArgCategory cat = fn_info(fn).category;
                std::uint32_t gid = cat == ArgCategory::Entity
                                        ? kb.resolve_entity(gold.args[t]).at(0)
                                        : cat == ArgCategory::Relation
                                              ? kb.resolve_relation(
                                                    parse_relate_arg(gold.args[t]).relation_label)
                                                    .at(0)
                                              : kb.resolve_concept(gold.args[t]).at(0);
                CandidateEncoding ce = encode_candidates(ps, vocab, kb, cat, *pool, cc);
                int gi = -1;
                for (std::size_t i = 0; i < ce.ids.size(); ++i)
                    if (ce.ids[i] == gid) gi = static_cast<int>(i);
                REQUIRE(gi >= 0);
                loss += softmax_xent(ce.P * sc.steps[t].g, gi, nullptr);
                update_pools(pools, kb, fn, gid, static_cast<int>(t));
            }
            return loss;
        };

        // analytic gradients through the same path
        ParameterStore grads = params;
        grads.zero_grad();
        {
            EncoderCache enc;
            encode_text(grads, vocab, question, enc);
            SketchTrainCache sc;
            sketch_nll(grads, cfg, enc, gold.tokens, &sc);
            CandidateCache cc;
            CandidatePools pools = init_pools(kb);
            std::vector<Vec> dlogits(gold.tokens.size());
            std::vector<Vec> dg_extra(gold.tokens.size());
            for (std::size_t t = 0; t < gold.tokens.size(); ++t) {
                softmax_xent(sc.steps[t].logits, fn_index(gold.tokens[t]), &dlogits[t]);
                Fn fn = gold.tokens[t];
                const auto* pool = ensure_active_pool(pools, kb, fn, static_cast<int>(t));
                if (!pool) continue;
                ArgCategory cat = fn_info(fn).category;
                std::uint32_t gid = cat == ArgCategory::Entity
                                        ? kb.resolve_entity(gold.args[t]).at(0)
                                        : cat == ArgCategory::Relation
                                              ? kb.resolve_relation(
                                                    parse_relate_arg(gold.args[t]).relation_label)
                                                    .at(0)
                                              : kb.resolve_concept(gold.args[t]).at(0);
                CandidateEncoding ce = encode_candidates(grads, vocab, kb, cat, *pool, cc);
                int gi = -1;
                for (std::size_t i = 0; i < ce.ids.size(); ++i)
                    if (ce.ids[i] == gid) gi = static_cast<int>(i);
                REQUIRE(gi >= 0);
                Vec dal;
                softmax_xent(ce.P * sc.steps[t].g, gi, &dal);
                dg_extra[t] = ce.P.transpose() * dal;
                for (int i = 0; i < dal.size(); ++i)
                    cc.add_grad(ce.labels[i], Vec(dal(i) * sc.steps[t].g));
                update_pools(pools, kb, fn, gid, static_cast<int>(t));
            }
            Mat dX = Mat::Zero(enc.X.rows(), enc.X.cols());
            Vec dxbar = Vec::Zero(enc.xbar.size());
            sketch_train_backward(grads, cfg, enc, sc, dlogits, dg_extra, dX, dxbar);
            encoder_backward(grads, enc, dX, dxbar);
            cc.flush_backward(grads);
        }
        check_gradients(params, grads, loss_of);
    }
}
