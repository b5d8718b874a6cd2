#pragma once

#include <span>
#include <vector>

#include "sqlgan/common.hpp"

namespace sqlgan {

// Scales every gradient by clip_norm / g when the global L2 norm g exceeds
// clip_norm. Returns the post-clip norm. Throws RuntimeAbort on a non-finite
// gradient entry.
double clip_gradients(std::span<const TensorRef> grads, double clip_norm);

// Post-clip norms of every step, for the clipping invariant in tests.
struct ClipMonitor {
    std::size_t steps = 0;
    double max_post_norm = 0.0;
    std::size_t violations = 0;
    double limit = 0.0;

    void record(double post_norm, double clip_norm);
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are allocated lazily on the first
// step and keyed by position, so params and grads must keep the same layout.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::span<const TensorRef> params, std::span<const TensorRef> grads);

    const AdamConfig& config() const { return cfg_; }
    std::size_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

// Clip, record, then Adam step. The common path for every parameter update.
void clipped_step(Adam& opt, std::span<const TensorRef> params, std::span<const TensorRef> grads, double clip_norm,
                  ClipMonitor* monitor);

}  // namespace sqlgan
