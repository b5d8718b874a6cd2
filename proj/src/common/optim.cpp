#include "sqlgan/optim.hpp"

#include <algorithm>
#include <cmath>

namespace sqlgan {

double clip_gradients(std::span<const TensorRef> grads, double clip_norm) {
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
    for (const auto& g : grads) {
        for (double v : g.values()) {
            if (!std::isfinite(v)) throw RuntimeAbort("non-finite gradient in " + g.name);
        }
    }
    const double norm = global_norm(grads);
    if (norm <= clip_norm) return norm;
    const double scale = clip_norm / norm;
    for (const auto& g : grads) {
        for (double& v : g.values()) v *= scale;
    }
    return global_norm(grads);
}

void ClipMonitor::record(double post_norm, double clip_norm) {
    ++steps;
    max_post_norm = std::max(max_post_norm, post_norm);
    limit = clip_norm;
    if (post_norm > clip_norm + 1e-6) ++violations;
}

void Adam::step(std::span<const TensorRef> params, std::span<const TensorRef> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam::step: params/grads layout mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.values().size(), 0.0);
            v_.emplace_back(p.values().size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("Adam::step: tensor count changed");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].values();
        auto g = grads[k].values();
        if (p.size() != g.size() || p.size() != m_[k].size()) {
            throw std::invalid_argument("Adam::step: size mismatch in " + params[k].name);
        }
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            p[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
        }
    }
}

void clipped_step(Adam& opt, std::span<const TensorRef> params, std::span<const TensorRef> grads, double clip_norm,
                  ClipMonitor* monitor) {
    const double post = clip_gradients(grads, clip_norm);
    if (monitor) monitor->record(post, clip_norm);
    opt.step(params, grads);
}

}  // namespace sqlgan
