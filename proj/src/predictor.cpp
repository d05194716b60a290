#include "pcseg/predictor.hpp"

#include <cstring>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace pcseg {

// ---------------------------------------------------------------------------
// Descriptor
// ---------------------------------------------------------------------------

void NetDescriptor::validate() const {
    if (version != 1) throw Error("InvalidDescriptor", "unsupported descriptor version");
    if (frontend != "none") {
        throw Error("InvalidDescriptor", "frontend '" + frontend + "' is reserved, not implemented");
    }
    if (input_size < 4 || in_channels < 1 || n_v < 1 || fc_hidden < 0) {
        throw Error("InvalidDescriptor", "input_size/in_channels/n_v/fc_hidden out of range");
    }
    if (conv_channels.size() > 8) throw Error("InvalidDescriptor", "too many conv blocks");
    for (int c : conv_channels) {
        if (c < 1) throw Error("InvalidDescriptor", "conv channels must be >= 1");
    }
    if ((input_size >> blocks()) << blocks() != input_size || spatial_out() < 1) {
        throw Error("InvalidDescriptor", "input_size must be divisible by 2^blocks");
    }
    if (head != "softplus" && head != "linear") {
        throw Error("InvalidDescriptor", "head must be 'softplus' or 'linear'");
    }
    if (radius_scale < 0.0) throw Error("InvalidDescriptor", "radius_scale must be >= 0");
}

std::string NetDescriptor::to_json() const {
    nlohmann::json j;
    j["input_size"] = input_size;
    j["in_channels"] = in_channels;
    j["conv_channels"] = conv_channels;
    j["fc_hidden"] = fc_hidden;
    j["n_v"] = n_v;
    j["head"] = head;
    j["radius_scale"] = radius_scale;
    j["input_standardize"] = input_standardize;
    j["frontend"] = frontend;
    j["version"] = version;
    return j.dump();
}

NetDescriptor NetDescriptor::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("InvalidDescriptor", std::string("descriptor JSON: ") + e.what());
    }
    NetDescriptor d;
    try {
        d.input_size = j.at("input_size").get<int>();
        d.in_channels = j.at("in_channels").get<int>();
        d.conv_channels = j.at("conv_channels").get<std::vector<int>>();
        d.fc_hidden = j.at("fc_hidden").get<int>();
        d.n_v = j.at("n_v").get<int>();
        d.head = j.at("head").get<std::string>();
        d.radius_scale = j.at("radius_scale").get<double>();
        d.input_standardize = j.at("input_standardize").get<bool>();
        d.frontend = j.at("frontend").get<std::string>();
        d.version = j.at("version").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("InvalidDescriptor", std::string("descriptor JSON: ") + e.what());
    }
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------
// Parameters and initialization
// ---------------------------------------------------------------------------

template <typename T>
std::vector<std::span<T>> Regressor<T>::params() {
    std::vector<std::span<T>> out;
    for (Conv& c : convs) {
        out.emplace_back(c.w);
        out.emplace_back(c.b);
    }
    if (desc.fc_hidden > 0) {
        out.emplace_back(fc1_w);
        out.emplace_back(fc1_b);
    }
    out.emplace_back(fc2_w);
    out.emplace_back(fc2_b);
    return out;
}

template <typename T>
std::vector<std::span<const T>> Regressor<T>::params() const {
    std::vector<std::span<const T>> out;
    for (const Conv& c : convs) {
        out.emplace_back(c.w);
        out.emplace_back(c.b);
    }
    if (desc.fc_hidden > 0) {
        out.emplace_back(fc1_w);
        out.emplace_back(fc1_b);
    }
    out.emplace_back(fc2_w);
    out.emplace_back(fc2_b);
    return out;
}

template <typename T>
std::size_t Regressor<T>::param_count() const {
    std::size_t n = 0;
    for (std::span<const T> p : params()) n += p.size();
    return n;
}

template <typename T>
Regressor<T> init_regressor(const NetDescriptor& desc, std::uint64_t seed) {
    desc.validate();
    Regressor<T> net;
    net.desc = desc;
    Rng rng(seed);
    auto fill_gauss = [&rng](std::vector<T>& v, std::size_t n) {
        v.resize(n);
        for (T& x : v) x = static_cast<T>(rng.gaussian(0.0, 0.01));
    };
    int in_c = desc.in_channels;
    for (int out_c : desc.conv_channels) {
        typename Regressor<T>::Conv conv;
        conv.in_c = in_c;
        conv.out_c = out_c;
        fill_gauss(conv.w, static_cast<std::size_t>(out_c) * in_c * 9);
        conv.b.assign(out_c, T(1));
        net.convs.push_back(std::move(conv));
        in_c = out_c;
    }
    const int flat = desc.flat_dim();
    if (desc.fc_hidden > 0) {
        fill_gauss(net.fc1_w, static_cast<std::size_t>(desc.fc_hidden) * flat);
        net.fc1_b.assign(desc.fc_hidden, T(1));
        fill_gauss(net.fc2_w, static_cast<std::size_t>(desc.output_dim()) * desc.fc_hidden);
    } else {
        fill_gauss(net.fc2_w, static_cast<std::size_t>(desc.output_dim()) * flat);
    }
    net.fc2_b.assign(desc.output_dim(), T(1));
    return net;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void head_apply(const NetDescriptor& desc, const std::vector<T>& z, T* out) {
    if (desc.head == "linear") {
        std::copy(z.begin(), z.end(), out);
        return;
    }
    const T scale = static_cast<T>(desc.scale());
    const T cap = static_cast<T>(desc.r_max() * (1.0 - 1e-6));
    const T lo = static_cast<T>(kRadiusFloor);
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::clamp(scale * detail::softplus(z[i]), lo, cap);
    }
}

// Projected subgradient through the radius clamp: at a saturated bound the
// derivative passes only when the step points back into the interior, so
// saturated outputs stay recoverable.
template <typename T>
T head_chain(const NetDescriptor& desc, T z, T d_out) {
    if (desc.head == "linear") return d_out;
    const T scale = static_cast<T>(desc.scale());
    const T raw = scale * detail::softplus(z);
    const T cap = static_cast<T>(desc.r_max() * (1.0 - 1e-6));
    if (raw >= cap && d_out < T(0)) return T(0);
    if (raw <= static_cast<T>(kRadiusFloor) && d_out > T(0)) return T(0);
    return d_out * scale * detail::sigmoid(z);
}

template <typename T>
void fc_forward(const std::vector<T>& w, const std::vector<T>& b, const T* in, std::size_t in_n,
                T* out, std::size_t out_n) {
    for (std::size_t j = 0; j < out_n; ++j) {
        const T* row = w.data() + j * in_n;
        T acc = b[j];
        for (std::size_t i = 0; i < in_n; ++i) acc += row[i] * in[i];
        out[j] = acc;
    }
}

template <typename T>
void sample_forward(const Regressor<T>& net, const T* input_chw,
                    typename ForwardCache<T>::Sample* s, T* out_row) {
    const NetDescriptor& d = net.desc;
    const int blocks = d.blocks();
    s->acts.resize(blocks + 1);
    s->conv_out.resize(blocks);
    s->argmax.resize(blocks);

    int h = d.input_size, w = d.input_size, c = d.in_channels;
    s->acts[0].assign(input_chw, input_chw + static_cast<std::size_t>(h) * w * c);
    std::vector<T> relu_buf;
    for (int k = 0; k < blocks; ++k) {
        const auto& conv = net.convs[k];
        s->conv_out[k].resize(static_cast<std::size_t>(conv.out_c) * h * w);
        detail::conv3x3_forward(s->acts[k].data(), h, w, c, conv.out_c, conv.w.data(),
                                conv.b.data(), s->conv_out[k].data());
        relu_buf.resize(s->conv_out[k].size());
        for (std::size_t i = 0; i < relu_buf.size(); ++i) {
            relu_buf[i] = std::max(T(0), s->conv_out[k][i]);
        }
        const int oh = h / 2, ow = w / 2;
        s->acts[k + 1].resize(static_cast<std::size_t>(conv.out_c) * oh * ow);
        s->argmax[k].resize(s->acts[k + 1].size());
        detail::maxpool2_forward(relu_buf.data(), h, w, conv.out_c, s->acts[k + 1].data(),
                                 s->argmax[k].data());
        h = oh;
        w = ow;
        c = conv.out_c;
    }

    const std::vector<T>& flat = s->acts[blocks];
    const int out_dim = d.output_dim();
    s->z.resize(out_dim);
    if (d.fc_hidden > 0) {
        s->h1_pre.resize(d.fc_hidden);
        fc_forward(net.fc1_w, net.fc1_b, flat.data(), flat.size(), s->h1_pre.data(), d.fc_hidden);
        s->h1.resize(d.fc_hidden);
        for (int i = 0; i < d.fc_hidden; ++i) s->h1[i] = std::max(T(0), s->h1_pre[i]);
        fc_forward(net.fc2_w, net.fc2_b, s->h1.data(), s->h1.size(), s->z.data(), out_dim);
    } else {
        fc_forward(net.fc2_w, net.fc2_b, flat.data(), flat.size(), s->z.data(), out_dim);
    }
    head_apply(d, s->z, out_row);
}

template <typename T>
void sample_backward(const Regressor<T>& net, const typename ForwardCache<T>::Sample& s,
                     const T* d_out_row, ParamGrads<T>* grads) {
    const NetDescriptor& d = net.desc;
    const int blocks = d.blocks();
    const int out_dim = d.output_dim();

    std::vector<T> dz(out_dim);
    for (int j = 0; j < out_dim; ++j) dz[j] = head_chain(d, s.z[j], d_out_row[j]);

    // Gradient buffer order mirrors params(): conv (w, b) per block, fc1, fc2.
    const int fc1_slot = 2 * blocks;
    const int fc2_slot = d.fc_hidden > 0 ? fc1_slot + 2 : fc1_slot;

    std::vector<T> dflat;
    const std::vector<T>& flat = s.acts[blocks];
    if (d.fc_hidden > 0) {
        std::vector<T>& dw2 = grads->buffers[fc2_slot];
        std::vector<T>& db2 = grads->buffers[fc2_slot + 1];
        std::vector<T> dh1(d.fc_hidden, T(0));
        for (int j = 0; j < out_dim; ++j) {
            const T g = dz[j];
            db2[j] += g;
            T* dw_row = dw2.data() + static_cast<std::size_t>(j) * d.fc_hidden;
            const T* w_row = net.fc2_w.data() + static_cast<std::size_t>(j) * d.fc_hidden;
            for (int k = 0; k < d.fc_hidden; ++k) {
                dw_row[k] += g * s.h1[k];
                dh1[k] += g * w_row[k];
            }
        }
        for (int k = 0; k < d.fc_hidden; ++k) {
            if (s.h1_pre[k] <= T(0)) dh1[k] = T(0);
        }
        std::vector<T>& dw1 = grads->buffers[fc1_slot];
        std::vector<T>& db1 = grads->buffers[fc1_slot + 1];
        dflat.assign(flat.size(), T(0));
        for (int k = 0; k < d.fc_hidden; ++k) {
            const T g = dh1[k];
            if (g == T(0)) continue;
            db1[k] += g;
            T* dw_row = dw1.data() + static_cast<std::size_t>(k) * flat.size();
            const T* w_row = net.fc1_w.data() + static_cast<std::size_t>(k) * flat.size();
            for (std::size_t i = 0; i < flat.size(); ++i) {
                dw_row[i] += g * flat[i];
                dflat[i] += g * w_row[i];
            }
        }
    } else {
        std::vector<T>& dw2 = grads->buffers[fc2_slot];
        std::vector<T>& db2 = grads->buffers[fc2_slot + 1];
        dflat.assign(flat.size(), T(0));
        for (int j = 0; j < out_dim; ++j) {
            const T g = dz[j];
            db2[j] += g;
            T* dw_row = dw2.data() + static_cast<std::size_t>(j) * flat.size();
            const T* w_row = net.fc2_w.data() + static_cast<std::size_t>(j) * flat.size();
            for (std::size_t i = 0; i < flat.size(); ++i) {
                dw_row[i] += g * flat[i];
                dflat[i] += g * w_row[i];
            }
        }
    }

    // Conv stack, last block first.
    std::vector<T> d_pool = std::move(dflat);
    std::vector<T> d_conv;
    for (int k = blocks - 1; k >= 0; --k) {
        const auto& conv = net.convs[k];
        const std::size_t in_plane = s.acts[k].size() / conv.in_c;
        const int h = static_cast<int>(std::lround(std::sqrt(static_cast<double>(in_plane))));
        const int w = h;
        const int oh = h / 2, ow = w / 2;

        // Unpool through the argmax routing, then the ReLU mask.
        d_conv.assign(s.conv_out[k].size(), T(0));
        for (int c = 0; c < conv.out_c; ++c) {
            const T* dp = d_pool.data() + static_cast<std::size_t>(c) * oh * ow;
            const std::uint8_t* arg = s.argmax[k].data() + static_cast<std::size_t>(c) * oh * ow;
            T* dc = d_conv.data() + static_cast<std::size_t>(c) * h * w;
            for (int y = 0; y < oh; ++y) {
                for (int x = 0; x < ow; ++x) {
                    const std::uint8_t a = arg[y * ow + x];
                    const int yy = 2 * y + (a >> 1);
                    const int xx = 2 * x + (a & 1);
                    dc[yy * w + xx] += dp[y * ow + x];
                }
            }
        }
        for (std::size_t i = 0; i < d_conv.size(); ++i) {
            if (s.conv_out[k][i] <= T(0)) d_conv[i] = T(0);
        }

        std::vector<T> d_in(s.acts[k].size());
        detail::conv3x3_backward(s.acts[k].data(), d_conv.data(), h, w, conv.in_c, conv.out_c,
                                 conv.w.data(), d_in.data(), grads->buffers[2 * k].data(),
                                 grads->buffers[2 * k + 1].data());
        d_pool = std::move(d_in);
    }
}

template <typename T>
ParamGrads<T> zero_grads(const Regressor<T>& net) {
    ParamGrads<T> g;
    for (std::span<const T> p : net.params()) g.buffers.emplace_back(p.size(), T(0));
    return g;
}

template <typename Fn>
void run_group(int lo, int hi, int threads, const Fn& fn) {
    if (threads <= 1 || hi - lo <= 1) {
        for (int i = lo; i < hi; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t stride = threads;
    for (int t = 0; t < threads && lo + t < hi; ++t) {
        pool.emplace_back([=, &fn]() {
            for (int i = lo + t; i < hi; i += static_cast<int>(stride)) fn(i);
        });
    }
    for (std::thread& th : pool) th.join();
}

}  // namespace

template <typename T>
Tensor<T> forward(const Regressor<T>& net, const Tensor<T>& batch, ForwardCache<T>* cache,
                  int threads) {
    const NetDescriptor& d = net.desc;
    if (batch.shape.size() != 4 || batch.shape[1] != d.input_size ||
        batch.shape[2] != d.input_size || batch.shape[3] != d.in_channels) {
        throw Error("ShapeMismatch", "forward expects a [B, S, S, C] batch matching the descriptor");
    }
    const int b = batch.shape[0];
    Tensor<T> out({b, d.output_dim()});
    cache->stamp = net.stamp;
    cache->batch = b;
    cache->samples.assign(b, {});

    const std::size_t plane = static_cast<std::size_t>(d.input_size) * d.input_size;
    run_group(0, b, threads, [&](int i) {
        // BHWC -> CHW
        std::vector<T> chw(plane * d.in_channels);
        const T* src = batch.data.data() + static_cast<std::size_t>(i) * plane * d.in_channels;
        for (int c = 0; c < d.in_channels; ++c) {
            for (std::size_t p = 0; p < plane; ++p) {
                chw[c * plane + p] = src[p * d.in_channels + c];
            }
        }
        sample_forward(net, chw.data(), &cache->samples[i],
                       out.data.data() + static_cast<std::size_t>(i) * d.output_dim());
    });
    return out;
}

template <typename T>
ParamGrads<T> backward(const Regressor<T>& net, const ForwardCache<T>& cache,
                       const Tensor<T>& d_radii, int threads) {
    if (cache.stamp != net.stamp) {
        throw Error("StaleCache", "forward cache predates the latest parameter update");
    }
    if (d_radii.shape.size() != 2 || d_radii.shape[0] != cache.batch ||
        d_radii.shape[1] != net.desc.output_dim()) {
        throw Error("ShapeMismatch", "d_radii must be [B, 2*n_v] matching the cached forward");
    }
    ParamGrads<T> total = zero_grads(net);
    const int out_dim = net.desc.output_dim();
    const int group = std::max(1, threads);
    // Per-sample scratch buffers merged in sample order: results are
    // bit-identical for every thread count (and immune to FMA contraction
    // differences between accumulation paths).
    std::vector<ParamGrads<T>> scratch(group);
    for (int g = 0; g < group; ++g) scratch[g] = zero_grads(net);
    for (int lo = 0; lo < cache.batch; lo += group) {
        const int hi = std::min(cache.batch, lo + group);
        run_group(lo, hi, threads, [&](int i) {
            ParamGrads<T>& mine = scratch[i - lo];
            for (std::vector<T>& buf : mine.buffers) std::fill(buf.begin(), buf.end(), T(0));
            sample_backward(net, cache.samples[i],
                            d_radii.data.data() + static_cast<std::size_t>(i) * out_dim, &mine);
        });
        for (int i = lo; i < hi; ++i) {
            for (std::size_t p = 0; p < total.buffers.size(); ++p) {
                const std::vector<T>& src = scratch[i - lo].buffers[p];
                std::vector<T>& dst = total.buffers[p];
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

template <typename T>
OptimizerState<T> OptimizerState<T>::for_net(const Regressor<T>& net, OptimizerKind kind,
                                             double lr) {
    OptimizerState<T> opt;
    opt.kind = kind;
    opt.lr = lr;
    for (std::span<const T> p : net.params()) {
        opt.m.emplace_back(p.size(), T(0));
        if (kind == OptimizerKind::Adam) opt.v.emplace_back(p.size(), T(0));
    }
    return opt;
}

template <typename T>
void step(Regressor<T>* net, OptimizerState<T>* opt, const ParamGrads<T>& grads) {
    auto params = net->params();
    if (grads.buffers.size() != params.size() || opt->m.size() != params.size()) {
        throw Error("ShapeMismatch", "optimizer/gradient buffers do not match the parameters");
    }
    opt->step_count += 1;
    if (opt->kind == OptimizerKind::Adam) {
        const double mu = opt->adam_mu, nu = opt->adam_nu;
        const double bc1 = 1.0 - std::pow(mu, static_cast<double>(opt->step_count));
        const double bc2 = 1.0 - std::pow(nu, static_cast<double>(opt->step_count));
        for (std::size_t p = 0; p < params.size(); ++p) {
            if (grads.buffers[p].size() != params[p].size()) {
                throw Error("ShapeMismatch", "gradient buffer size mismatch");
            }
            T* w = params[p].data();
            const T* g = grads.buffers[p].data();
            T* m = opt->m[p].data();
            T* v = opt->v[p].data();
            for (std::size_t i = 0; i < params[p].size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = mu * m[i] + (1.0 - mu) * gi;
                const double vi = nu * v[i] + (1.0 - nu) * gi * gi;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double update = opt->lr * (mi / bc1) / (std::sqrt(vi / bc2) + opt->adam_eps);
                w[i] = static_cast<T>(w[i] - update);
            }
        }
    } else {
        const double mom = opt->sgd_momentum, wd = opt->sgd_weight_decay;
        for (std::size_t p = 0; p < params.size(); ++p) {
            if (grads.buffers[p].size() != params[p].size()) {
                throw Error("ShapeMismatch", "gradient buffer size mismatch");
            }
            T* w = params[p].data();
            const T* g = grads.buffers[p].data();
            T* vel = opt->m[p].data();
            for (std::size_t i = 0; i < params[p].size(); ++i) {
                const double vi =
                    mom * vel[i] - opt->lr * (static_cast<double>(g[i]) + wd * w[i]);
                vel[i] = static_cast<T>(vi);
                w[i] = static_cast<T>(w[i] + vi);
            }
        }
    }
    net->stamp += 1;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'P', 'C', 'S', 'G'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

void save_checkpoint(const RegressorState& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + path);
    out.write(kMagic, 4);
    const std::string desc = net.desc.to_json();
    const std::uint32_t version = kFormatVersion;
    const std::uint32_t len = static_cast<std::uint32_t>(desc.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(desc.data(), len);
    for (std::span<const float> p : net.params()) {
        out.write(reinterpret_cast<const char*>(p.data()),
                  static_cast<std::streamsize>(p.size() * sizeof(float)));
    }
}

RegressorState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw Error("BadMagic", path + " is not a PCSG checkpoint");
    }
    std::uint32_t version = 0, len = 0;
    if (!in.read(reinterpret_cast<char*>(&version), 4)) {
        throw Error("TruncatedFile", path + ": missing format version");
    }
    if (version != kFormatVersion) {
        throw Error("VersionMismatch", path + ": checkpoint format version " +
                                           std::to_string(version) + ", expected " +
                                           std::to_string(kFormatVersion));
    }
    if (!in.read(reinterpret_cast<char*>(&len), 4)) {
        throw Error("TruncatedFile", path + ": missing descriptor length");
    }
    std::string desc_text(len, '\0');
    if (!in.read(desc_text.data(), len)) {
        throw Error("TruncatedFile", path + ": descriptor block short");
    }
    RegressorState net = init_regressor<float>(NetDescriptor::from_json(desc_text), 0);
    for (std::span<float> p : net.params()) {
        if (!in.read(reinterpret_cast<char*>(p.data()),
                     static_cast<std::streamsize>(p.size() * sizeof(float)))) {
            throw Error("TruncatedFile", path + ": parameter data short");
        }
    }
    return net;
}

// ---------------------------------------------------------------------------

template struct Regressor<float>;
template struct Regressor<double>;
template struct OptimizerState<float>;
template struct OptimizerState<double>;

template Regressor<float> init_regressor<float>(const NetDescriptor&, std::uint64_t);
template Regressor<double> init_regressor<double>(const NetDescriptor&, std::uint64_t);
template Tensor<float> forward<float>(const Regressor<float>&, const Tensor<float>&,
                                      ForwardCache<float>*, int);
template Tensor<double> forward<double>(const Regressor<double>&, const Tensor<double>&,
                                        ForwardCache<double>*, int);
template ParamGrads<float> backward<float>(const Regressor<float>&, const ForwardCache<float>&,
                                           const Tensor<float>&, int);
template ParamGrads<double> backward<double>(const Regressor<double>&,
                                             const ForwardCache<double>&, const Tensor<double>&,
                                             int);
template void step<float>(Regressor<float>*, OptimizerState<float>*, const ParamGrads<float>&);
template void step<double>(Regressor<double>*, OptimizerState<double>*,
                           const ParamGrads<double>&);
template void standardize_image<float>(std::span<float>);
template void standardize_image<double>(std::span<double>);

}  // namespace pcseg
