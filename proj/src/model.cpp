#include "lnl/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace lnl::nn {

namespace {
constexpr double kLogEps = 1e-12;
}

ModelParams init(int d, int h, int c, Rng& rng) {
    if (d < 1 || h < 1 || c < 1) throw std::invalid_argument("init: dimensions must be >= 1");
    ModelParams p;
    p.d = d;
    p.h = h;
    p.c = c;
    p.w1 = Matrix(h, d);
    p.b1.assign(h, 0.0);
    p.w2 = Matrix(c, h);
    p.b2.assign(c, 0.0);

    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& w : p.w1.data) w = (2.0 * rng.uniform() - 1.0) * s1;
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (double& w : p.w2.data) w = (2.0 * rng.uniform() - 1.0) * s2;
    return p;
}

ForwardResult forward(const ModelParams& p, const double* x) {
    for (int j = 0; j < p.d; ++j) {
        if (!std::isfinite(x[j])) throw std::invalid_argument("forward: non-finite input");
    }

    ForwardResult r;
    r.z.resize(p.h);
    for (int i = 0; i < p.h; ++i) {
        double acc = p.b1[i];
        const double* wrow = p.w1.row(i);
        for (int j = 0; j < p.d; ++j) acc += wrow[j] * x[j];
        r.z[i] = acc > 0.0 ? acc : 0.0;
    }

    r.logits.resize(p.c);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < p.c; ++i) {
        double acc = p.b2[i];
        const double* wrow = p.w2.row(i);
        for (int j = 0; j < p.h; ++j) acc += wrow[j] * r.z[j];
        r.logits[i] = acc;
        max_logit = std::max(max_logit, acc);
    }

    r.probs.resize(p.c);
    double denom = 0.0;
    for (int i = 0; i < p.c; ++i) {
        r.probs[i] = std::exp(r.logits[i] - max_logit);
        denom += r.probs[i];
    }
    for (int i = 0; i < p.c; ++i) r.probs[i] /= denom;
    return r;
}

double soft_cross_entropy(const std::vector<double>& probs, const std::vector<double>& target) {
    if (probs.size() != target.size() || probs.empty())
        throw std::invalid_argument("soft_cross_entropy: length mismatch");
    double tsum = 0.0, psum = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        if (target[i] < 0.0 || probs[i] < 0.0)
            throw std::invalid_argument("soft_cross_entropy: negative probability");
        tsum += target[i];
        psum += probs[i];
    }
    if (std::abs(tsum - 1.0) > 1e-6 || std::abs(psum - 1.0) > 1e-6)
        throw std::invalid_argument("soft_cross_entropy: inputs must sum to 1");

    double loss = 0.0;
    for (size_t i = 0; i < target.size(); ++i) loss -= target[i] * std::log(probs[i] + kLogEps);
    // the epsilon inside the log can leave a -1e-12 residue on saturated
    // predictions; the result is defined to be nonnegative
    return loss < 0.0 ? 0.0 : loss;
}

Grads backward(const ModelParams& p, const std::vector<TrainSample>& batch) {
    double weight_sum = 0.0;
    for (const auto& s : batch) {
        if (s.weight < 0.0) throw std::invalid_argument("backward: negative sample weight");
        weight_sum += s.weight;
    }
    if (batch.empty() || weight_sum <= 0.0)
        throw std::invalid_argument("backward: empty effective batch");

    Grads g;
    g.w1 = Matrix(p.h, p.d);
    g.b1.assign(p.h, 0.0);
    g.w2 = Matrix(p.c, p.h);
    g.b2.assign(p.c, 0.0);

    std::vector<double> dlogits(p.c);
    std::vector<double> dz(p.h);

    for (const auto& s : batch) {
        if (s.weight == 0.0) continue;
        ForwardResult r = forward(p, s.x);
        const double scale = s.weight / weight_sum;

        // d loss / d logit = probs - target for softmax cross-entropy
        for (int i = 0; i < p.c; ++i) dlogits[i] = scale * (r.probs[i] - s.target[i]);

        for (int i = 0; i < p.c; ++i) {
            double* grow = g.w2.row(i);
            const double dl = dlogits[i];
            for (int j = 0; j < p.h; ++j) grow[j] += dl * r.z[j];
            g.b2[i] += dl;
        }

        for (int j = 0; j < p.h; ++j) {
            if (r.z[j] > 0.0) {
                double acc = 0.0;
                for (int i = 0; i < p.c; ++i) acc += p.w2(i, j) * dlogits[i];
                dz[j] = acc;
            } else {
                dz[j] = 0.0;  // rectifier gate
            }
        }

        for (int j = 0; j < p.h; ++j) {
            if (dz[j] == 0.0) continue;
            double* grow = g.w1.row(j);
            const double dj = dz[j];
            for (int k = 0; k < p.d; ++k) grow[k] += dj * s.x[k];
            g.b1[j] += dj;
        }
    }
    return g;
}

void sgd_step(ModelParams& p, const Grads& g, OptState& opt) {
    if (!opt.initialized) {
        opt.velocity.w1 = Matrix(p.h, p.d);
        opt.velocity.b1.assign(p.h, 0.0);
        opt.velocity.w2 = Matrix(p.c, p.h);
        opt.velocity.b2.assign(p.c, 0.0);
        opt.initialized = true;
    }
    if (!g.w1.same_shape(p.w1) || !g.w2.same_shape(p.w2))
        throw std::invalid_argument("sgd_step: gradient shape mismatch");

    auto update = [&](std::vector<double>& v, std::vector<double>& param, const std::vector<double>& grad) {
        for (size_t i = 0; i < param.size(); ++i) {
            v[i] = opt.momentum * v[i] + grad[i];
            param[i] -= opt.learning_rate * v[i];
        }
    };
    update(opt.velocity.w1.data, p.w1.data, g.w1.data);
    update(opt.velocity.b1, p.b1, g.b1);
    update(opt.velocity.w2.data, p.w2.data, g.w2.data);
    update(opt.velocity.b2, p.b2, g.b2);
}

void save_checkpoint(const ModelParams& p, const std::string& path) {
    nlohmann::json j;
    j["d"] = p.d;
    j["h"] = p.h;
    j["c"] = p.c;
    j["w1"] = p.w1.data;
    j["b1"] = p.b1;
    j["w2"] = p.w2.data;
    j["b2"] = p.b2;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << j.dump() << "\n";
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    ModelParams p;
    p.d = j.at("d").get<int>();
    p.h = j.at("h").get<int>();
    p.c = j.at("c").get<int>();
    p.w1 = Matrix(p.h, p.d);
    p.w1.data = j.at("w1").get<std::vector<double>>();
    p.b1 = j.at("b1").get<std::vector<double>>();
    p.w2 = Matrix(p.c, p.h);
    p.w2.data = j.at("w2").get<std::vector<double>>();
    p.b2 = j.at("b2").get<std::vector<double>>();
    if (p.w1.data.size() != static_cast<size_t>(p.h) * p.d ||
        p.w2.data.size() != static_cast<size_t>(p.c) * p.h ||
        p.b1.size() != static_cast<size_t>(p.h) || p.b2.size() != static_cast<size_t>(p.c))
        throw std::runtime_error("checkpoint shape header mismatch: " + path);
    return p;
}

}  // namespace lnl::nn
