#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbqa/rng.hpp"

namespace kbqa {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct NnError : std::runtime_error {
    explicit NnError(const std::string& msg) : std::runtime_error(msg) {}
};

void check_finite(const Mat& m, const char* what);

// Learning-rate groups: encoder-side parameters vs everything else, mirroring
// the two-rate schedule of the original training setup.
constexpr int kGroupEncoder = 0;
constexpr int kGroupOther = 1;
constexpr int kNumGroups = 2;

struct Param {
    Mat value;
    Mat grad;
    Mat m, v;  // optimizer moments
    int group = kGroupOther;
};

// Named f64 parameter tensors with gradients and optimizer state. Ordered by
// name so every iteration (updates, checkpoints) is deterministic.
class ParameterStore {
public:
    Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, int group);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    std::size_t size() const { return params_.size(); }

    void zero_grad();
    double grad_norm() const;

    std::map<std::string, Param>& items() { return params_; }
    const std::map<std::string, Param>& items() const { return params_; }

private:
    std::map<std::string, Param> params_;
};

// Adaptive-moment optimizer with decoupled weight decay and per-group rates.
struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
    double group_lr[kNumGroups] = {1e-3, 1e-3};
    long long t = 0;

    // One update from the accumulated gradients; zeroes them afterwards.
    void step(ParameterStore& store);
};

// ---- gated recurrent cell ----
// z = sigmoid(Wz x + Uz h + bz); r = sigmoid(Wr x + Ur h + br)
// n = tanh(Wn x + Un (r.h) + bn); h' = z.h + (1-z).n

struct GruCache {
    Vec x, h;       // inputs
    Vec z, r, n;    // gate activations
    Vec rh;         // r.h
    Vec out;        // h'
};

// Registers Wz/Uz/bz, Wr/Ur/br, Wn/Un/bn under `prefix`.
void gru_init(ParameterStore& store, const std::string& prefix, Eigen::Index d_in,
              Eigen::Index d_hidden, int group, Rng& rng);
Vec gru_forward(const ParameterStore& store, const std::string& prefix, const Vec& x, const Vec& h,
                GruCache* cache);
// Accumulates parameter gradients; adds input gradients into dx and dh.
void gru_backward(ParameterStore& store, const std::string& prefix, const GruCache& cache,
                  const Vec& dout, Vec& dx, Vec& dh);

// ---- attention ----
// scores_i = memories.row(i) . key; alpha = softmax(scores); context = sum_i alpha_i memories.row(i)

struct AttentionCache {
    Vec key;
    Vec alpha;
    Vec context;
};

void attention_forward(const Mat& memories, const Vec& key, AttentionCache* cache);
// dmemories accumulates (same shape as memories); dkey accumulates.
void attention_backward(const Mat& memories, const AttentionCache& cache, const Vec& dcontext,
                        Mat& dmemories, Vec& dkey);

// ---- softmax machinery ----

Vec softmax(const Vec& logits);
Vec log_softmax(const Vec& logits);
// loss = -log softmax(logits)[gold]; dlogits = softmax - onehot(gold)
double softmax_xent(const Vec& logits, int gold, Vec* dlogits);

// ---- initializers ----

void fill_uniform(Mat& m, double lo, double hi, Rng& rng);
void fill_gaussian(Mat& m, double mean, double sd, Rng& rng);

// ---- checkpoints ----
// Binary container: magic, format-version byte, then per parameter its name,
// shape, group and row-major f64 payload. Round-trips bit-exactly.

void save_params(const ParameterStore& store, const std::string& path);
void load_params(ParameterStore& store, const std::string& path);  // replaces contents

}  // namespace kbqa
