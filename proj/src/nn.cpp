#include "kbqa/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace kbqa {

void check_finite(const Mat& m, const char* what) {
    if (!m.allFinite()) throw NnError(std::string("non-finite values in ") + what);
}

Param& ParameterStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols, int group) {
    if (params_.count(name)) throw NnError("duplicate parameter '" + name + "'");
    Param& p = params_[name];
    p.value = Mat::Zero(rows, cols);
    p.grad = Mat::Zero(rows, cols);
    p.m = Mat::Zero(rows, cols);
    p.v = Mat::Zero(rows, cols);
    p.group = group;
    return p;
}

Param& ParameterStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw NnError("no parameter '" + name + "'");
    return it->second;
}

const Param& ParameterStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw NnError("no parameter '" + name + "'");
    return it->second;
}

void ParameterStore::zero_grad() {
    for (auto& [name, p] : params_) p.grad.setZero();
}

double ParameterStore::grad_norm() const {
    double s = 0;
    for (const auto& [name, p] : params_) s += p.grad.squaredNorm();
    return std::sqrt(s);
}

void AdamW::step(ParameterStore& store) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, p] : store.items()) {
        double lr = group_lr[p.group];
        p.m = beta1 * p.m + (1.0 - beta1) * p.grad;
        p.v = beta2 * p.v + (1.0 - beta2) * p.grad.cwiseProduct(p.grad);
        Mat mhat = p.m / bc1;
        Mat vhat = p.v / bc2;
        p.value -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
        p.value -= lr * weight_decay * p.value;  // decoupled decay
        check_finite(p.value, name.c_str());
        p.grad.setZero();
    }
}

namespace {

inline Vec sigmoid(const Vec& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

}  // namespace

void gru_init(ParameterStore& store, const std::string& prefix, Eigen::Index d_in,
              Eigen::Index d_hidden, int group, Rng& rng) {
    const char* gates[] = {"z", "r", "n"};
    for (const char* g : gates) {
        auto& W = store.add(prefix + ".W" + g, d_hidden, d_in, group);
        auto& U = store.add(prefix + ".U" + g, d_hidden, d_hidden, group);
        store.add(prefix + ".b" + g, d_hidden, 1, group);
        fill_uniform(W.value, -0.08, 0.08, rng);
        fill_uniform(U.value, -0.08, 0.08, rng);
    }
}

Vec gru_forward(const ParameterStore& store, const std::string& prefix, const Vec& x, const Vec& h,
                GruCache* cache) {
    const Mat& Wz = store.at(prefix + ".Wz").value;
    const Mat& Uz = store.at(prefix + ".Uz").value;
    const Mat& bz = store.at(prefix + ".bz").value;
    const Mat& Wr = store.at(prefix + ".Wr").value;
    const Mat& Ur = store.at(prefix + ".Ur").value;
    const Mat& br = store.at(prefix + ".br").value;
    const Mat& Wn = store.at(prefix + ".Wn").value;
    const Mat& Un = store.at(prefix + ".Un").value;
    const Mat& bn = store.at(prefix + ".bn").value;
    if (x.size() != Wz.cols() || h.size() != Uz.cols())
        throw NnError(prefix + ": input/hidden size mismatch");
    Vec z = sigmoid(Wz * x + Uz * h + bz.col(0));
    Vec r = sigmoid(Wr * x + Ur * h + br.col(0));
    Vec rh = r.cwiseProduct(h);
    Vec n = (Wn * x + Un * rh + bn.col(0)).array().tanh().matrix();
    Vec out = z.cwiseProduct(h) + (Vec::Ones(z.size()) - z).cwiseProduct(n);
    check_finite(out, "gru output");
    if (cache) {
        cache->x = x;
        cache->h = h;
        cache->z = z;
        cache->r = r;
        cache->n = n;
        cache->rh = rh;
        cache->out = out;
    }
    return out;
}

void gru_backward(ParameterStore& store, const std::string& prefix, const GruCache& c,
                  const Vec& dout, Vec& dx, Vec& dh) {
    const Mat& Wz = store.at(prefix + ".Wz").value;
    const Mat& Wr = store.at(prefix + ".Wr").value;
    const Mat& Wn = store.at(prefix + ".Wn").value;
    const Mat& Uz = store.at(prefix + ".Uz").value;
    const Mat& Ur = store.at(prefix + ".Ur").value;
    const Mat& Un = store.at(prefix + ".Un").value;

    Vec ones = Vec::Ones(c.z.size());
    Vec dz = dout.cwiseProduct(c.h - c.n);
    Vec dn = dout.cwiseProduct(ones - c.z);
    Vec dh_local = dout.cwiseProduct(c.z);

    Vec dn_pre = dn.cwiseProduct(ones - c.n.cwiseProduct(c.n));
    Vec drh = Un.transpose() * dn_pre;
    Vec dr = drh.cwiseProduct(c.h);
    dh_local += drh.cwiseProduct(c.r);

    Vec dz_pre = dz.cwiseProduct(c.z).cwiseProduct(ones - c.z);
    Vec dr_pre = dr.cwiseProduct(c.r).cwiseProduct(ones - c.r);

    store.at(prefix + ".Wz").grad += dz_pre * c.x.transpose();
    store.at(prefix + ".Uz").grad += dz_pre * c.h.transpose();
    store.at(prefix + ".bz").grad.col(0) += dz_pre;
    store.at(prefix + ".Wr").grad += dr_pre * c.x.transpose();
    store.at(prefix + ".Ur").grad += dr_pre * c.h.transpose();
    store.at(prefix + ".br").grad.col(0) += dr_pre;
    store.at(prefix + ".Wn").grad += dn_pre * c.x.transpose();
    store.at(prefix + ".Un").grad += dn_pre * c.rh.transpose();
    store.at(prefix + ".bn").grad.col(0) += dn_pre;

    dx += Wz.transpose() * dz_pre + Wr.transpose() * dr_pre + Wn.transpose() * dn_pre;
    dh += dh_local + Uz.transpose() * dz_pre + Ur.transpose() * dr_pre;
}

void attention_forward(const Mat& memories, const Vec& key, AttentionCache* cache) {
    if (memories.cols() != key.size()) throw NnError("attention: key size mismatch");
    Vec scores = memories * key;
    Vec alpha = softmax(scores);
    Vec context = memories.transpose() * alpha;
    check_finite(context, "attention context");
    if (cache) {
        cache->key = key;
        cache->alpha = alpha;
        cache->context = context;
    }
}

void attention_backward(const Mat& memories, const AttentionCache& c, const Vec& dcontext,
                        Mat& dmemories, Vec& dkey) {
    Vec dalpha = memories * dcontext;
    double dot = c.alpha.dot(dalpha);
    Vec dscores = c.alpha.cwiseProduct(dalpha - Vec::Constant(dalpha.size(), dot));
    dmemories += dscores * c.key.transpose() + c.alpha * dcontext.transpose();
    dkey += memories.transpose() * dscores;
}

Vec softmax(const Vec& logits) {
    double mx = logits.maxCoeff();
    Vec e = (logits.array() - mx).exp().matrix();
    return e / e.sum();
}

Vec log_softmax(const Vec& logits) {
    double mx = logits.maxCoeff();
    double lse = std::log((logits.array() - mx).exp().sum()) + mx;
    return (logits.array() - lse).matrix();
}

double softmax_xent(const Vec& logits, int gold, Vec* dlogits) {
    if (gold < 0 || gold >= logits.size()) throw NnError("softmax_xent: gold index out of range");
    Vec lsm = log_softmax(logits);
    if (dlogits) {
        *dlogits = lsm.array().exp().matrix();
        (*dlogits)(gold) -= 1.0;
    }
    return -lsm(gold);
}

void fill_uniform(Mat& m, double lo, double hi, Rng& rng) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uniform(rng, lo, hi);
}

void fill_gaussian(Mat& m, double mean, double sd, Rng& rng) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = gaussian(rng, mean, sd);
}

namespace {

constexpr char kMagic[4] = {'K', 'B', 'Q', 'C'};
constexpr std::uint8_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void get(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_params(const ParameterStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw NnError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    put(os, kVersion);
    put(os, static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, p] : store.items()) {
        put(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put(os, static_cast<std::uint32_t>(p.value.rows()));
        put(os, static_cast<std::uint32_t>(p.value.cols()));
        put(os, static_cast<std::int32_t>(p.group));
        for (Eigen::Index i = 0; i < p.value.rows(); ++i)
            for (Eigen::Index j = 0; j < p.value.cols(); ++j) put(os, p.value(i, j));
    }
    if (!os) throw NnError("write failure on '" + path + "'");
}

void load_params(ParameterStore& store, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw NnError("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw NnError("'" + path + "' is not a parameter checkpoint");
    std::uint8_t version = 0;
    get(is, version);
    if (version != kVersion)
        throw NnError("unsupported checkpoint version " + std::to_string(version));
    std::uint32_t count = 0;
    get(is, count);
    store = ParameterStore{};
    for (std::uint32_t k = 0; k < count; ++k) {
        std::uint16_t name_len = 0;
        get(is, name_len);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        std::uint32_t rows = 0, cols = 0;
        std::int32_t group = 0;
        get(is, rows);
        get(is, cols);
        get(is, group);
        Param& p = store.add(name, rows, cols, group);
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < cols; ++j) get(is, p.value(i, j));
        if (!is) throw NnError("truncated checkpoint '" + path + "'");
    }
}

}  // namespace kbqa
