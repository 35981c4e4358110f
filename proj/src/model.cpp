#include "kbqa/model.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "kbqa/program.hpp"

namespace kbqa {

void init_model_params(ParameterStore& store, const ModelConfig& cfg, int vocab_size) {
    Rng rng(cfg.init_seed);
    encoder_init(store, vocab_size, cfg.d_hat, rng);

    auto& h0w = store.add("dec.h0.W", cfg.d, cfg.d_hat, kGroupOther);
    fill_uniform(h0w.value, -0.08, 0.08, rng);
    store.add("dec.h0.b", cfg.d, 1, kGroupOther);

    auto& fnemb = store.add("dec.fnemb", kNumFn, cfg.d, kGroupOther);
    fill_gaussian(fnemb.value, 0.0, 0.02, rng);

    gru_init(store, "dec.cell", cfg.d, cfg.d, kGroupOther, rng);

    if (cfg.needs_adapter()) {
        auto& aw = store.add("dec.adapt.W", cfg.d_hat, cfg.d, kGroupOther);
        fill_uniform(aw.value, -0.08, 0.08, rng);
        store.add("dec.adapt.b", cfg.d_hat, 1, kGroupOther);
    }

    auto& w1 = store.add("dec.mlp.W1", cfg.d_hat, cfg.d_hat, kGroupOther);
    fill_uniform(w1.value, -0.08, 0.08, rng);
    store.add("dec.mlp.b1", cfg.d_hat, 1, kGroupOther);
    auto& w2 = store.add("dec.mlp.W2", kNumFn, cfg.d_hat, kGroupOther);
    fill_uniform(w2.value, -0.08, 0.08, rng);
    store.add("dec.mlp.b2", kNumFn, 1, kGroupOther);
}

void grow_embeddings(ParameterStore& store, const ModelConfig& cfg, int new_vocab_size,
                     std::uint64_t seed) {
    Param& emb = store.at("emb");
    int old_rows = static_cast<int>(emb.value.rows());
    if (new_vocab_size <= old_rows) return;
    Rng rng(seed);
    Mat fresh(new_vocab_size - old_rows, cfg.d_hat);
    fill_gaussian(fresh, 0.0, 0.02, rng);
    Mat grown(new_vocab_size, cfg.d_hat);
    grown << emb.value, fresh;
    emb.value = std::move(grown);
    emb.grad = Mat::Zero(new_vocab_size, cfg.d_hat);
    emb.m = Mat::Zero(new_vocab_size, cfg.d_hat);
    emb.v = Mat::Zero(new_vocab_size, cfg.d_hat);
}

void save_model(const ModelBundle& m, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_params(m.params, dir + "/params.bin");
    std::ofstream vs(dir + "/vocab.json", std::ios::binary);
    vs << m.vocab.serialize() << '\n';
    nlohmann::json j{{"d", m.cfg.d},
                     {"d_hat", m.cfg.d_hat},
                     {"max_len", m.cfg.max_len},
                     {"init_seed", m.cfg.init_seed}};
    std::ofstream cs(dir + "/model.json", std::ios::binary);
    cs << j.dump(2) << '\n';
    if (!vs || !cs) throw NnError("cannot write model bundle to '" + dir + "'");
}

ModelBundle load_model(const std::string& dir) {
    ModelBundle m;
    std::ifstream cs(dir + "/model.json", std::ios::binary);
    if (!cs) throw NnError("cannot open '" + dir + "/model.json'");
    std::stringstream cbuf;
    cbuf << cs.rdbuf();
    auto j = nlohmann::json::parse(cbuf.str());
    m.cfg.d = j.at("d").get<int>();
    m.cfg.d_hat = j.at("d_hat").get<int>();
    m.cfg.max_len = j.at("max_len").get<int>();
    m.cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
    std::ifstream vs(dir + "/vocab.json", std::ios::binary);
    if (!vs) throw NnError("cannot open '" + dir + "/vocab.json'");
    std::stringstream vbuf;
    vbuf << vs.rdbuf();
    m.vocab = Vocabulary::deserialize(vbuf.str());
    load_params(m.params, dir + "/params.bin");
    return m;
}

}  // namespace kbqa
