#include "hsiband/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hsiband/errors.hpp"
#include "hsiband/random.hpp"

using json = nlohmann::json;

namespace hsiband {

namespace {

inline std::size_t idx4(const ActShape& s, int y, int x, int t, int c) {
    return ((static_cast<std::size_t>(y) * s.w + x) * s.d + t) * s.f + c;
}

bool is_weighted(LayerKind k) {
    return k == LayerKind::SpectralConv || k == LayerKind::SpatialConv ||
           k == LayerKind::Dense;
}

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::SpectralConv: return "spectral_conv";
        case LayerKind::SpatialConv: return "spatial_conv";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

LayerKind kind_from_name(const std::string& s) {
    if (s == "spectral_conv") return LayerKind::SpectralConv;
    if (s == "spatial_conv") return LayerKind::SpatialConv;
    if (s == "dense") return LayerKind::Dense;
    if (s == "relu") return LayerKind::Relu;
    if (s == "flatten") return LayerKind::Flatten;
    if (s == "softmax") return LayerKind::Softmax;
    throw DataError("unknown layer kind: " + s);
}

const char* rule_name(LrpRule r) {
    switch (r) {
        case LrpRule::Zero: return "lrp0";
        case LrpRule::Epsilon: return "epsilon";
        case LrpRule::Gamma: return "gamma";
    }
    return "?";
}

LrpRule rule_from_name(const std::string& s) {
    if (s == "lrp0") return LrpRule::Zero;
    if (s == "epsilon") return LrpRule::Epsilon;
    if (s == "gamma") return LrpRule::Gamma;
    throw DataError("unknown lrp rule: " + s);
}

// Weight tensor element counts.
std::size_t weight_count(const LayerSpec& l, const ActShape& in) {
    switch (l.kind) {
        case LayerKind::SpectralConv:
            return static_cast<std::size_t>(l.channels) * in.f * l.kernel;
        case LayerKind::SpatialConv:
            return static_cast<std::size_t>(l.channels) * in.f * l.kernel * l.kernel;
        case LayerKind::Dense:
            return static_cast<std::size_t>(l.units) * in.n;
        default:
            return 0;
    }
}

std::size_t bias_count(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::SpectralConv:
        case LayerKind::SpatialConv:
            return static_cast<std::size_t>(l.channels);
        case LayerKind::Dense:
            return static_cast<std::size_t>(l.units);
        default:
            return 0;
    }
}

void softmax_inplace(std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (auto& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (auto& x : v) x /= sum;
}

}  // namespace

std::vector<ActShape> shape_chain(const NetworkSpec& spec) {
    if (spec.patch_height < 1 || spec.patch_width < 1 || spec.bands < 1)
        throw ConfigError("invalid input dimensions");
    if (spec.class_count < 2) throw ConfigError("class_count must be >= 2");
    if (spec.layers.empty()) throw ConfigError("network needs at least one layer");
    if (spec.layers.back().kind != LayerKind::Softmax)
        throw ConfigError("last layer must be softmax");
    for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i)
        if (spec.layers[i].kind == LayerKind::Softmax)
            throw ConfigError("softmax must be the last layer");

    std::vector<ActShape> shapes;
    ActShape cur;
    cur.h = spec.patch_height;
    cur.w = spec.patch_width;
    cur.d = spec.bands;
    cur.f = 1;
    cur.flat = false;
    cur.n = cur.h * cur.w * cur.d * cur.f;
    shapes.push_back(cur);

    for (const auto& l : spec.layers) {
        ActShape next = cur;
        switch (l.kind) {
            case LayerKind::SpectralConv: {
                if (cur.flat) throw ConfigError("spectral_conv after flatten");
                if (l.kernel < 1 || l.kernel > cur.d)
                    throw ConfigError("spectral_conv kernel " + std::to_string(l.kernel) +
                                      " exceeds spectral depth " + std::to_string(cur.d));
                if (l.stride < 1) throw ConfigError("stride must be >= 1");
                if (l.channels < 1) throw ConfigError("channels must be >= 1");
                next.d = (cur.d - l.kernel) / l.stride + 1;
                next.f = l.channels;
                break;
            }
            case LayerKind::SpatialConv: {
                if (cur.flat) throw ConfigError("spatial_conv after flatten");
                if (l.kernel < 1 || l.kernel > cur.h || l.kernel > cur.w)
                    throw ConfigError("spatial_conv kernel exceeds spatial extent");
                if (l.channels < 1) throw ConfigError("channels must be >= 1");
                next.h = cur.h - l.kernel + 1;
                next.w = cur.w - l.kernel + 1;
                next.f = l.channels;
                break;
            }
            case LayerKind::Dense: {
                if (l.units < 1) throw ConfigError("dense units must be >= 1");
                next.flat = true;
                next.h = next.w = next.d = next.f = 0;
                next.n = l.units;
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::Flatten:
                next.flat = true;
                next.h = next.w = next.d = next.f = 0;
                next.n = cur.n;
                break;
            case LayerKind::Softmax:
                if (cur.n != spec.class_count)
                    throw ConfigError("softmax input width " + std::to_string(cur.n) +
                                      " != class count " +
                                      std::to_string(spec.class_count));
                break;
        }
        if (!next.flat) next.n = next.h * next.w * next.d * next.f;
        shapes.push_back(next);
        cur = next;
    }
    if (shapes.back().n != spec.class_count)
        throw ConfigError("final layer must output class_count values");
    return shapes;
}

Network init_network(const NetworkSpec& spec) {
    const auto shapes = shape_chain(spec);
    Network net;
    net.spec = spec;
    net.standardizer.mean.assign(spec.bands, 0.0);
    net.standardizer.stddev.assign(spec.bands, 1.0);
    net.weights.resize(spec.layers.size());
    auto rng = make_rng(spec.seed, 0x11f0);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (!is_weighted(l.kind)) continue;
        const auto& in = shapes[i];
        std::size_t fan_in = 0;
        switch (l.kind) {
            case LayerKind::SpectralConv: fan_in = std::size_t(in.f) * l.kernel; break;
            case LayerKind::SpatialConv:
                fan_in = std::size_t(in.f) * l.kernel * l.kernel;
                break;
            case LayerKind::Dense: fan_in = std::size_t(in.n); break;
            default: break;
        }
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
        auto& lw = net.weights[i];
        lw.w.resize(weight_count(l, in));
        lw.b.assign(bias_count(l), 0.0f);
        for (auto& w : lw.w) w = static_cast<float>(dist(rng));
    }
    return net;
}

std::vector<double> standardize_input(const Network& net, const Patch& patch) {
    const auto& spec = net.spec;
    if (patch.height != spec.patch_height || patch.width != spec.patch_width ||
        patch.bands != spec.bands)
        throw DataError("patch dimensions do not match network spec");
    if (static_cast<int>(net.standardizer.mean.size()) != spec.bands)
        throw DataError("standardizer band count mismatch");
    std::vector<double> out(patch.values.size());
    std::size_t i = 0;
    for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x)
            for (int band = 0; band < patch.bands; ++band, ++i)
                out[i] = (patch.at(y, x, band) - net.standardizer.mean[band]) /
                         std::max(net.standardizer.stddev[band], 1e-8);
    return out;
}

namespace {

struct ForwardPass {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[i+1] = layer i out
};

ForwardPass run_layers(const Network& net, const std::vector<ActShape>& shapes,
                       const std::vector<double>& input) {
    if (input.size() != shapes[0].size())
        throw DataError("input size does not match network spec");
    ForwardPass fp;
    fp.acts.resize(net.spec.layers.size() + 1);
    fp.acts[0] = input;
    for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
        const auto& l = net.spec.layers[li];
        const auto& in_s = shapes[li];
        const auto& out_s = shapes[li + 1];
        const auto& a = fp.acts[li];
        auto& out = fp.acts[li + 1];
        out.assign(out_s.size(), 0.0);
        const auto& lw = net.weights[li];
        switch (l.kind) {
            case LayerKind::SpectralConv: {
                for (int y = 0; y < out_s.h; ++y)
                    for (int x = 0; x < out_s.w; ++x)
                        for (int t = 0; t < out_s.d; ++t)
                            for (int o = 0; o < out_s.f; ++o) {
                                double z = lw.b[o];
                                for (int c = 0; c < in_s.f; ++c)
                                    for (int j = 0; j < l.kernel; ++j)
                                        z += a[idx4(in_s, y, x, t * l.stride + j, c)] *
                                             lw.w[(std::size_t(o) * in_s.f + c) *
                                                      l.kernel +
                                                  j];
                                out[idx4(out_s, y, x, t, o)] = z;
                            }
                break;
            }
            case LayerKind::SpatialConv: {
                for (int y = 0; y < out_s.h; ++y)
                    for (int x = 0; x < out_s.w; ++x)
                        for (int t = 0; t < out_s.d; ++t)
                            for (int o = 0; o < out_s.f; ++o) {
                                double z = lw.b[o];
                                for (int c = 0; c < in_s.f; ++c)
                                    for (int u = 0; u < l.kernel; ++u)
                                        for (int v = 0; v < l.kernel; ++v)
                                            z += a[idx4(in_s, y + u, x + v, t, c)] *
                                                 lw.w[((std::size_t(o) * in_s.f + c) *
                                                           l.kernel +
                                                       u) *
                                                          l.kernel +
                                                      v];
                                out[idx4(out_s, y, x, t, o)] = z;
                            }
                break;
            }
            case LayerKind::Dense: {
                for (int o = 0; o < out_s.n; ++o) {
                    double z = lw.b[o];
                    const std::size_t row = std::size_t(o) * in_s.n;
                    for (int i = 0; i < in_s.n; ++i) z += a[i] * lw.w[row + i];
                    out[o] = z;
                }
                break;
            }
            case LayerKind::Relu:
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], 0.0);
                break;
            case LayerKind::Flatten:
                out = a;
                break;
            case LayerKind::Softmax:
                out = a;
                softmax_inplace(out);
                break;
        }
    }
    for (double v : fp.acts.back())
        if (!std::isfinite(v)) throw NumericalError("non-finite activation in forward");
    return fp;
}

}  // namespace

ForwardResult forward_standardized(const Network& net, const std::vector<double>& input,
                                   bool want_trace) {
    const auto shapes = shape_chain(net.spec);
    auto fp = run_layers(net, shapes, input);
    ForwardResult res;
    res.logits = fp.acts[fp.acts.size() - 2];
    res.confidence = fp.acts.back();
    if (want_trace) {
        ActivationTrace trace;
        trace.activations = std::move(fp.acts);
        res.trace = std::move(trace);
    }
    return res;
}

ForwardResult forward(const Network& net, const Patch& patch, bool want_trace) {
    return forward_standardized(net, standardize_input(net, patch), want_trace);
}

int predict(const Network& net, const Patch& patch) {
    const auto res = forward(net, patch, false);
    int best = 0;
    for (std::size_t k = 1; k < res.confidence.size(); ++k)
        if (res.confidence[k] > res.confidence[best]) best = static_cast<int>(k);
    return best + 1;
}

namespace {

struct GradBuf {
    std::vector<double> w, b;
};

// Backward through one layer: fills input deltas and accumulates weight grads.
void layer_backward(const LayerSpec& l, const LayerWeights& lw, const ActShape& in_s,
                    const ActShape& out_s, const std::vector<double>& in_act,
                    const std::vector<double>& out_act,
                    const std::vector<double>& d_out, std::vector<double>& d_in,
                    GradBuf* grads) {
    d_in.assign(in_s.size(), 0.0);
    switch (l.kind) {
        case LayerKind::SpectralConv: {
            for (int y = 0; y < out_s.h; ++y)
                for (int x = 0; x < out_s.w; ++x)
                    for (int t = 0; t < out_s.d; ++t)
                        for (int o = 0; o < out_s.f; ++o) {
                            const double g = d_out[idx4(out_s, y, x, t, o)];
                            if (g == 0.0) continue;
                            if (grads) grads->b[o] += g;
                            for (int c = 0; c < in_s.f; ++c)
                                for (int j = 0; j < l.kernel; ++j) {
                                    const std::size_t wi =
                                        (std::size_t(o) * in_s.f + c) * l.kernel + j;
                                    const std::size_t ii =
                                        idx4(in_s, y, x, t * l.stride + j, c);
                                    if (grads) grads->w[wi] += g * in_act[ii];
                                    d_in[ii] += g * lw.w[wi];
                                }
                        }
            break;
        }
        case LayerKind::SpatialConv: {
            for (int y = 0; y < out_s.h; ++y)
                for (int x = 0; x < out_s.w; ++x)
                    for (int t = 0; t < out_s.d; ++t)
                        for (int o = 0; o < out_s.f; ++o) {
                            const double g = d_out[idx4(out_s, y, x, t, o)];
                            if (g == 0.0) continue;
                            if (grads) grads->b[o] += g;
                            for (int c = 0; c < in_s.f; ++c)
                                for (int u = 0; u < l.kernel; ++u)
                                    for (int v = 0; v < l.kernel; ++v) {
                                        const std::size_t wi =
                                            ((std::size_t(o) * in_s.f + c) * l.kernel +
                                             u) *
                                                l.kernel +
                                            v;
                                        const std::size_t ii =
                                            idx4(in_s, y + u, x + v, t, c);
                                        if (grads) grads->w[wi] += g * in_act[ii];
                                        d_in[ii] += g * lw.w[wi];
                                    }
                        }
            break;
        }
        case LayerKind::Dense: {
            for (int o = 0; o < out_s.n; ++o) {
                const double g = d_out[o];
                if (g == 0.0) continue;
                if (grads) grads->b[o] += g;
                const std::size_t row = std::size_t(o) * in_s.n;
                for (int i = 0; i < in_s.n; ++i) {
                    if (grads) grads->w[row + i] += g * in_act[i];
                    d_in[i] += g * lw.w[row + i];
                }
            }
            break;
        }
        case LayerKind::Relu:
            for (std::size_t i = 0; i < d_out.size(); ++i)
                d_in[i] = in_act[i] > 0.0 ? d_out[i] : 0.0;
            break;
        case LayerKind::Flatten:
            d_in = d_out;
            break;
        case LayerKind::Softmax:
            // Folded into the cross-entropy delta; never reached in training.
            d_in = d_out;
            break;
    }
    (void)out_act;
}

}  // namespace

TrainResult train(const Network& net, const PatchSet& train_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw DataError("training set is empty");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(cfg.learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (cfg.optimizer != "adam" && cfg.optimizer != "sgd_momentum")
        throw ConfigError("unknown optimizer: " + cfg.optimizer);
    const int c = net.spec.class_count;
    for (const auto& p : train_set.patches)
        if (p.label < 1 || p.label > c)
            throw DataError("patch label out of range: " + std::to_string(p.label));

    const auto shapes = shape_chain(net.spec);
    TrainResult result;
    result.network = net;
    Network& model = result.network;

    const std::size_t n_layers = model.spec.layers.size();
    std::vector<GradBuf> grads(n_layers), m1(n_layers), m2(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        grads[i].w.assign(model.weights[i].w.size(), 0.0);
        grads[i].b.assign(model.weights[i].b.size(), 0.0);
        m1[i] = grads[i];
        m2[i] = grads[i];
    }

    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long adam_t = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    double best_loss = std::numeric_limits<double>::infinity();
    int stall = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = make_rng(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t batch_end =
                std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            const double inv_batch = 1.0 / double(batch_end - pos);
            for (auto& g : grads) {
                std::fill(g.w.begin(), g.w.end(), 0.0);
                std::fill(g.b.begin(), g.b.end(), 0.0);
            }
            for (std::size_t bi = pos; bi < batch_end; ++bi) {
                const Patch& p = train_set.patches[order[bi]];
                const auto input = standardize_input(model, p);
                const auto fp = run_layers(model, shapes, input);
                const auto& probs = fp.acts.back();
                const int target = p.label - 1;
                const double prob_t = std::max(probs[target], 1e-300);
                loss_sum += -std::log(prob_t);
                int best = 0;
                for (int k = 1; k < c; ++k)
                    if (probs[k] > probs[best]) best = k;
                if (best == target) ++correct;

                // Softmax + cross-entropy delta at the logits.
                std::vector<double> delta(probs);
                delta[target] -= 1.0;
                for (auto& d : delta) d *= inv_batch;

                std::vector<double> d_in;
                for (std::size_t li = n_layers - 1; li-- > 0;) {
                    // Start below the softmax layer (index n_layers-1).
                    layer_backward(model.spec.layers[li], model.weights[li], shapes[li],
                                   shapes[li + 1], fp.acts[li], fp.acts[li + 1], delta,
                                   d_in, &grads[li]);
                    delta.swap(d_in);
                }
            }

            if (cfg.optimizer == "adam") {
                ++adam_t;
                const double bc1 = 1.0 - std::pow(beta1, double(adam_t));
                const double bc2 = 1.0 - std::pow(beta2, double(adam_t));
                for (std::size_t li = 0; li < n_layers; ++li) {
                    auto update = [&](std::vector<float>& w, std::vector<double>& g,
                                      std::vector<double>& m, std::vector<double>& v) {
                        for (std::size_t i = 0; i < w.size(); ++i) {
                            m[i] = beta1 * m[i] + (1 - beta1) * g[i];
                            v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
                            const double step = cfg.learning_rate * (m[i] / bc1) /
                                                (std::sqrt(v[i] / bc2) + adam_eps);
                            w[i] = static_cast<float>(double(w[i]) - step);
                        }
                    };
                    update(model.weights[li].w, grads[li].w, m1[li].w, m2[li].w);
                    update(model.weights[li].b, grads[li].b, m1[li].b, m2[li].b);
                }
            } else {  // sgd_momentum
                const double mu = 0.9;
                for (std::size_t li = 0; li < n_layers; ++li) {
                    auto update = [&](std::vector<float>& w, std::vector<double>& g,
                                      std::vector<double>& vel) {
                        for (std::size_t i = 0; i < w.size(); ++i) {
                            vel[i] = mu * vel[i] - cfg.learning_rate * g[i];
                            w[i] = static_cast<float>(double(w[i]) + vel[i]);
                        }
                    };
                    update(model.weights[li].w, grads[li].w, m1[li].w);
                    update(model.weights[li].b, grads[li].b, m1[li].b);
                }
            }
            pos = batch_end;
        }

        EpochStats stats;
        stats.loss = loss_sum / double(order.size());
        stats.train_accuracy = 100.0 * double(correct) / double(order.size());
        if (!std::isfinite(stats.loss))
            throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                                 " (non-finite loss)");
        result.history.push_back(stats);

        if (cfg.early_stop_patience > 0) {
            if (stats.loss < best_loss - 1e-9) {
                best_loss = stats.loss;
                stall = 0;
            } else if (++stall >= cfg.early_stop_patience) {
                break;
            }
        }
    }
    return result;
}

double loss_and_gradients(const Network& net, const Patch& patch, int target_class,
                          std::vector<std::vector<double>>* weight_grads,
                          std::vector<std::vector<double>>* bias_grads) {
    if (target_class < 1 || target_class > net.spec.class_count)
        throw ConfigError("target class out of range");
    const auto shapes = shape_chain(net.spec);
    const auto input = standardize_input(net, patch);
    const auto fp = run_layers(net, shapes, input);
    const auto& probs = fp.acts.back();
    const int target = target_class - 1;
    const double loss = -std::log(std::max(probs[target], 1e-300));

    const std::size_t n_layers = net.spec.layers.size();
    std::vector<GradBuf> grads(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        grads[i].w.assign(net.weights[i].w.size(), 0.0);
        grads[i].b.assign(net.weights[i].b.size(), 0.0);
    }
    std::vector<double> delta(probs);
    delta[target] -= 1.0;
    std::vector<double> d_in;
    for (std::size_t li = n_layers - 1; li-- > 0;) {
        layer_backward(net.spec.layers[li], net.weights[li], shapes[li], shapes[li + 1],
                       fp.acts[li], fp.acts[li + 1], delta, d_in, &grads[li]);
        delta.swap(d_in);
    }
    if (weight_grads) {
        weight_grads->clear();
        for (auto& g : grads) weight_grads->push_back(g.w);
    }
    if (bias_grads) {
        bias_grads->clear();
        for (auto& g : grads) bias_grads->push_back(g.b);
    }
    return loss;
}

double evaluate_accuracy(const Network& net, const PatchSet& test_set) {
    if (test_set.empty()) throw DataError("test set is empty");
    std::size_t correct = 0;
    for (const auto& p : test_set.patches)
        if (predict(net, p) == p.label) ++correct;
    return 100.0 * double(correct) / double(test_set.size());
}

NetworkSpec rebuild_for_bands(const NetworkSpec& spec, int reduced_bands) {
    if (reduced_bands < 1) throw ConfigError("band count must be >= 1");
    NetworkSpec out = spec;
    out.bands = reduced_bands;
    int depth = reduced_bands;
    for (auto& l : out.layers) {
        if (l.kind == LayerKind::SpectralConv) {
            l.kernel = std::min(l.kernel, depth);
            l.stride = std::clamp(l.stride, 1, std::max(1, depth - l.kernel + 1));
            depth = (depth - l.kernel) / l.stride + 1;
        } else if (l.kind == LayerKind::Flatten || l.kind == LayerKind::Dense) {
            break;
        }
    }
    shape_chain(out);  // validate
    return out;
}

namespace {

json spec_to_json(const NetworkSpec& spec) {
    json layers = json::array();
    for (const auto& l : spec.layers) {
        json jl{{"kind", kind_name(l.kind)}};
        if (l.kind == LayerKind::SpectralConv || l.kind == LayerKind::SpatialConv) {
            jl["kernel"] = l.kernel;
            jl["stride"] = l.stride;
            jl["channels"] = l.channels;
        }
        if (l.kind == LayerKind::Dense) jl["units"] = l.units;
        if (is_weighted(l.kind)) jl["lrp_rule"] = rule_name(l.lrp_rule);
        layers.push_back(jl);
    }
    return json{{"patch_height", spec.patch_height}, {"patch_width", spec.patch_width},
                {"bands", spec.bands},               {"class_count", spec.class_count},
                {"seed", spec.seed},                 {"layers", layers}};
}

NetworkSpec spec_from_json(const json& j) {
    NetworkSpec spec;
    spec.patch_height = j.at("patch_height").get<int>();
    spec.patch_width = j.at("patch_width").get<int>();
    spec.bands = j.at("bands").get<int>();
    spec.class_count = j.at("class_count").get<int>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jl : j.at("layers")) {
        LayerSpec l;
        l.kind = kind_from_name(jl.at("kind").get<std::string>());
        if (jl.contains("kernel")) l.kernel = jl["kernel"].get<int>();
        if (jl.contains("stride")) l.stride = jl["stride"].get<int>();
        if (jl.contains("channels")) l.channels = jl["channels"].get<int>();
        if (jl.contains("units")) l.units = jl["units"].get<int>();
        if (jl.contains("lrp_rule"))
            l.lrp_rule = rule_from_name(jl["lrp_rule"].get<std::string>());
        spec.layers.push_back(l);
    }
    return spec;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

}  // namespace

void save_model(const Network& net, const std::string& manifest_path,
                const std::string& bin_path) {
    const auto shapes = shape_chain(net.spec);
    std::vector<float> blob;
    json tensors = json::array();
    for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
        const auto& lw = net.weights[li];
        if (lw.w.empty() && lw.b.empty()) continue;
        auto add = [&](const std::string& name, const std::vector<float>& v) {
            tensors.push_back(json{{"name", name},
                                   {"count", v.size()},
                                   {"offset", blob.size() * sizeof(float)},
                                   {"bytes", v.size() * sizeof(float)}});
            blob.insert(blob.end(), v.begin(), v.end());
        };
        const std::string base =
            "layer" + std::to_string(li) + "." + kind_name(net.spec.layers[li].kind);
        add(base + ".w", lw.w);
        add(base + ".b", lw.b);
    }
    const std::uint64_t checksum = fnv1a64(blob.data(), blob.size() * sizeof(float));
    json manifest{{"spec", spec_to_json(net.spec)},
                  {"standardizer",
                   json{{"mean", net.standardizer.mean},
                        {"stddev", net.standardizer.stddev}}},
                  {"tensors", tensors},
                  {"checksum_fnv1a64", hex64(checksum)}};
    {
        std::ofstream out(manifest_path, std::ios::trunc);
        if (!out) throw DataError("cannot write " + manifest_path);
        out << manifest.dump(2) << "\n";
    }
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + bin_path);
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

Network load_model(const std::string& manifest_path, const std::string& bin_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open " + manifest_path);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError(std::string("bad model manifest: ") + e.what());
    }
    Network net;
    try {
        net.spec = spec_from_json(manifest.at("spec"));
        net.standardizer.mean =
            manifest.at("standardizer").at("mean").get<std::vector<double>>();
        net.standardizer.stddev =
            manifest.at("standardizer").at("stddev").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bad model manifest: ") + e.what());
    }
    const auto shapes = shape_chain(net.spec);

    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot open " + bin_path);
    bin.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(bin.tellg());
    bin.seekg(0, std::ios::beg);
    std::vector<float> blob(bytes / sizeof(float));
    bin.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(bytes));
    if (!bin) throw DataError("short read: " + bin_path);

    const std::uint64_t checksum = fnv1a64(blob.data(), blob.size() * sizeof(float));
    if (hex64(checksum) != manifest.at("checksum_fnv1a64").get<std::string>())
        throw DataError("model checksum mismatch");

    net.weights.resize(net.spec.layers.size());
    std::size_t ti = 0;
    const auto& tensors = manifest.at("tensors");
    for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
        const auto& l = net.spec.layers[li];
        if (!is_weighted(l.kind)) continue;
        const std::size_t wc = weight_count(l, shapes[li]);
        const std::size_t bc = bias_count(l);
        for (auto* dst : {&net.weights[li].w, &net.weights[li].b}) {
            if (ti >= tensors.size()) throw DataError("model manifest tensor underrun");
            const auto& t = tensors[ti++];
            const std::size_t count = t.at("count").get<std::size_t>();
            const std::size_t offset = t.at("offset").get<std::size_t>() / sizeof(float);
            const std::size_t expect = (dst == &net.weights[li].w) ? wc : bc;
            if (count != expect) throw DataError("tensor shape mismatch in manifest");
            if (offset + count > blob.size()) throw DataError("tensor out of bounds");
            dst->assign(blob.begin() + offset, blob.begin() + offset + count);
        }
    }
    if (ti != tensors.size()) throw DataError("model manifest tensor overrun");
    return net;
}

NetworkSpec preset_spec(const std::string& name, int patch_height, int patch_width,
                        int bands, int class_count, std::uint64_t seed) {
    NetworkSpec spec;
    spec.patch_height = patch_height;
    spec.patch_width = patch_width;
    spec.bands = bands;
    spec.class_count = class_count;
    spec.seed = seed;

    const int sq = std::min({3, patch_height, patch_width});
    int depth = bands;
    auto spectral = [&](int kernel, int stride, int channels, LrpRule rule) {
        LayerSpec l;
        l.kind = LayerKind::SpectralConv;
        l.kernel = std::min(kernel, depth);
        l.stride = std::clamp(stride, 1, std::max(1, depth - l.kernel + 1));
        l.channels = channels;
        l.lrp_rule = rule;
        depth = (depth - l.kernel) / l.stride + 1;
        spec.layers.push_back(l);
        spec.layers.push_back({LayerKind::Relu});
    };
    auto spatial = [&](int channels, LrpRule rule) {
        LayerSpec l;
        l.kind = LayerKind::SpatialConv;
        l.kernel = sq;
        l.channels = channels;
        l.lrp_rule = rule;
        spec.layers.push_back(l);
        spec.layers.push_back({LayerKind::Relu});
    };
    auto dense = [&](int units) {
        LayerSpec l;
        l.kind = LayerKind::Dense;
        l.units = units;
        l.lrp_rule = LrpRule::Zero;
        spec.layers.push_back(l);
    };

    if (name == "shallow") {
        spectral(7, 2, 8, LrpRule::Gamma);
        spatial(16, LrpRule::Epsilon);
        spec.layers.push_back({LayerKind::Flatten});
        dense(class_count);
    } else if (name == "deep") {
        spectral(7, 2, 8, LrpRule::Gamma);
        spectral(5, 2, 16, LrpRule::Epsilon);
        spectral(3, 1, 16, LrpRule::Epsilon);
        spatial(32, LrpRule::Epsilon);
        spec.layers.push_back({LayerKind::Flatten});
        dense(64);
        spec.layers.push_back({LayerKind::Relu});
        dense(class_count);
    } else {
        throw ConfigError("unknown model preset: " + name);
    }
    spec.layers.push_back({LayerKind::Softmax});
    shape_chain(spec);  // validate
    return spec;
}

// Relevance propagation through one layer under the z-rule with an optional
// gamma weight transform and epsilon stabilizer. Bias joins the denominator
// and absorbs its share.
std::vector<double> lrp_layer_backward(const LayerSpec& l, const LayerWeights& lw,
                                       const ActShape& in_s, const ActShape& out_s,
                                       const std::vector<double>& in_act,
                                       const std::vector<double>& out_rel, LrpRule rule,
                                       double eps, double gamma) {
    auto rho = [&](double w) {
        return rule == LrpRule::Gamma ? w + gamma * std::max(w, 0.0) : w;
    };
    const double stab = rule == LrpRule::Zero ? 0.0 : eps;
    std::vector<double> in_rel(in_s.size(), 0.0);

    auto bias_of = [&](std::size_t oi) -> double {
        if (lw.b.empty()) return 0.0;
        if (l.kind == LayerKind::Dense) return lw.b[oi];
        return lw.b[oi % out_s.f];
    };

    auto propagate = [&](auto&& for_each_input) {
        // for_each_input(out_index, fn(in_index, weight)) iterates the
        // receptive field of one output unit.
        std::vector<double> factor(out_s.size(), 0.0);
        for (std::size_t oi = 0; oi < out_s.size(); ++oi) {
            if (out_rel[oi] == 0.0) continue;
            double z = 0.0;
            for_each_input(oi, [&](std::size_t ii, double w) { z += in_act[ii] * rho(w); });
            z += rho(bias_of(oi));
            double denom = z;
            if (stab > 0.0) denom += stab * (denom >= 0.0 ? 1.0 : -1.0);
            if (denom == 0.0) continue;
            factor[oi] = out_rel[oi] / denom;
        }
        for (std::size_t oi = 0; oi < out_s.size(); ++oi) {
            if (factor[oi] == 0.0) continue;
            for_each_input(oi, [&](std::size_t ii, double w) {
                in_rel[ii] += in_act[ii] * rho(w) * factor[oi];
            });
        }
    };

    switch (l.kind) {
        case LayerKind::SpectralConv: {
            propagate([&](std::size_t oi, auto&& fn) {
                const int o = static_cast<int>(oi % out_s.f);
                std::size_t rest = oi / out_s.f;
                const int t = static_cast<int>(rest % out_s.d);
                rest /= out_s.d;
                const int x = static_cast<int>(rest % out_s.w);
                const int y = static_cast<int>(rest / out_s.w);
                for (int c = 0; c < in_s.f; ++c)
                    for (int j = 0; j < l.kernel; ++j)
                        fn(idx4(in_s, y, x, t * l.stride + j, c),
                           double(lw.w[(std::size_t(o) * in_s.f + c) * l.kernel + j]));
            });
            break;
        }
        case LayerKind::SpatialConv: {
            propagate([&](std::size_t oi, auto&& fn) {
                const int o = static_cast<int>(oi % out_s.f);
                std::size_t rest = oi / out_s.f;
                const int t = static_cast<int>(rest % out_s.d);
                rest /= out_s.d;
                const int x = static_cast<int>(rest % out_s.w);
                const int y = static_cast<int>(rest / out_s.w);
                for (int c = 0; c < in_s.f; ++c)
                    for (int u = 0; u < l.kernel; ++u)
                        for (int v = 0; v < l.kernel; ++v)
                            fn(idx4(in_s, y + u, x + v, t, c),
                               double(lw.w[((std::size_t(o) * in_s.f + c) * l.kernel + u) *
                                               l.kernel +
                                           v]));
            });
            break;
        }
        case LayerKind::Dense: {
            propagate([&](std::size_t oi, auto&& fn) {
                const std::size_t row = oi * in_s.n;
                for (int i = 0; i < in_s.n; ++i) fn(std::size_t(i), double(lw.w[row + i]));
            });
            break;
        }
        case LayerKind::Relu:
        case LayerKind::Flatten:
            in_rel = out_rel;
            break;
        case LayerKind::Softmax:
            throw ConfigError("lrp does not propagate through softmax");
    }
    return in_rel;
}

}  // namespace hsiband
