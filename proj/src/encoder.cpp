#include "kbqa/encoder.hpp"

namespace kbqa {

void encoder_init(ParameterStore& store, int vocab_size, int d_hat, Rng& rng) {
    auto& emb = store.add("emb", vocab_size, d_hat, kGroupEncoder);
    fill_gaussian(emb.value, 0.0, 0.02, rng);
    gru_init(store, "enc.f", d_hat, d_hat, kGroupEncoder, rng);
    gru_init(store, "enc.b", d_hat, d_hat, kGroupEncoder, rng);
    auto& W = store.add("enc.proj.W", d_hat, 2 * d_hat, kGroupEncoder);
    fill_uniform(W.value, -0.08, 0.08, rng);
    store.add("enc.proj.b", d_hat, 1, kGroupEncoder);
}

int encoder_dim(const ParameterStore& store) {
    return static_cast<int>(store.at("emb").value.cols());
}

void encoder_forward(const ParameterStore& store, const std::vector<int>& ids, EncoderCache& cache) {
    if (ids.empty()) throw NnError("encoder: text has no tokens");
    const Mat& emb = store.at("emb").value;
    const Mat& W = store.at("enc.proj.W").value;
    const Mat& b = store.at("enc.proj.b").value;
    const int T = static_cast<int>(ids.size());
    const int d = static_cast<int>(emb.cols());

    cache.ids = ids;
    cache.fw.assign(T, {});
    cache.bw.assign(T, {});
    cache.hf.assign(T, {});
    cache.hb.assign(T, {});
    cache.concat.assign(T, {});
    cache.X = Mat::Zero(T, d);

    Vec h = Vec::Zero(d);
    for (int t = 0; t < T; ++t) {
        if (ids[t] < 0 || ids[t] >= emb.rows()) throw NnError("encoder: token id out of range");
        h = gru_forward(store, "enc.f", emb.row(ids[t]).transpose(), h, &cache.fw[t]);
        cache.hf[t] = h;
    }
    h = Vec::Zero(d);
    for (int t = T - 1; t >= 0; --t) {
        h = gru_forward(store, "enc.b", emb.row(ids[t]).transpose(), h, &cache.bw[t]);
        cache.hb[t] = h;
    }
    for (int t = 0; t < T; ++t) {
        Vec cat(2 * d);
        cat << cache.hf[t], cache.hb[t];
        cache.concat[t] = cat;
        cache.X.row(t) = (W * cat + b.col(0)).transpose();
    }
    cache.xbar = cache.X.colwise().mean().transpose();
    check_finite(cache.X, "encoder outputs");
}

void encoder_backward(ParameterStore& store, const EncoderCache& cache, const Mat& dX,
                      const Vec& dxbar) {
    const Mat& W = store.at("enc.proj.W").value;
    const int T = static_cast<int>(cache.ids.size());
    const int d = static_cast<int>(W.rows());

    Mat dXtotal = dX.size() ? dX : Mat::Zero(T, d);
    if (dxbar.size()) dXtotal.rowwise() += (dxbar / static_cast<double>(T)).transpose();

    std::vector<Vec> dhf(T, Vec::Zero(d)), dhb(T, Vec::Zero(d));
    auto& dW = store.at("enc.proj.W").grad;
    auto& db = store.at("enc.proj.b").grad;
    for (int t = 0; t < T; ++t) {
        Vec drow = dXtotal.row(t).transpose();
        dW += drow * cache.concat[t].transpose();
        db.col(0) += drow;
        Vec dcat = W.transpose() * drow;
        dhf[t] = dcat.head(d);
        dhb[t] = dcat.tail(d);
    }

    auto& demb = store.at("emb").grad;
    Vec carry = Vec::Zero(d);
    for (int t = T - 1; t >= 0; --t) {
        Vec dout = carry + dhf[t];
        Vec dx = Vec::Zero(d), dh_prev = Vec::Zero(d);
        gru_backward(store, "enc.f", cache.fw[t], dout, dx, dh_prev);
        demb.row(cache.ids[t]) += dx.transpose();
        carry = dh_prev;
    }
    carry = Vec::Zero(d);
    for (int t = 0; t < T; ++t) {
        Vec dout = carry + dhb[t];
        Vec dx = Vec::Zero(d), dh_prev = Vec::Zero(d);
        gru_backward(store, "enc.b", cache.bw[t], dout, dx, dh_prev);
        demb.row(cache.ids[t]) += dx.transpose();
        carry = dh_prev;
    }
}

void encode_text(const ParameterStore& store, const Vocabulary& vocab, const std::string& text,
                 EncoderCache& cache) {
    encoder_forward(store, vocab.encode(text), cache);
}

}  // namespace kbqa
