#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pcseg/gradcheck.hpp"
#include "pcseg/predictor.hpp"
#include "pcseg/rng.hpp"

using namespace pcseg;
namespace fs = std::filesystem;

namespace {

NetDescriptor tiny_descriptor() {
    NetDescriptor d;
    d.input_size = 8;
    d.in_channels = 3;
    d.conv_channels = {2, 2};
    d.fc_hidden = 8;
    d.n_v = 4;
    d.input_standardize = false;
    return d;
}

template <typename T>
Tensor<T> random_batch(int b, const NetDescriptor& d, std::uint64_t seed) {
    Tensor<T> batch({b, d.input_size, d.input_size, d.in_channels});
    Rng rng(seed);
    for (T& v : batch.data) v = static_cast<T>(rng.uniform());
    return batch;
}

}  // namespace

TEST_CASE("descriptor validation and JSON round trip") {
    NetDescriptor d = tiny_descriptor();
    d.validate();
    const NetDescriptor back = NetDescriptor::from_json(d.to_json());
    CHECK(back.input_size == d.input_size);
    CHECK(back.conv_channels == d.conv_channels);
    CHECK(back.n_v == d.n_v);
    CHECK(back.head == "softplus");
    CHECK(back.input_standardize == false);

    NetDescriptor bad = d;
    bad.input_size = 10;  // not divisible by 2^blocks
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("InvalidDescriptor"), Error);
    NetDescriptor odd = d;
    odd.head = "tanh";
    CHECK_THROWS_WITH_AS(odd.validate(), doctest::Contains("InvalidDescriptor"), Error);
    NetDescriptor fe = d;
    fe.frontend = "wavelet";
    CHECK_THROWS_WITH_AS(fe.validate(), doctest::Contains("InvalidDescriptor"), Error);
}

TEST_CASE("initialization: seed determinism, unit biases, weight statistics") {
    NetDescriptor d;
    d.input_size = 16;
    d.conv_channels = {4};
    d.fc_hidden = 320;
    d.n_v = 64;

    const auto a = init_regressor<float>(d, 9);
    const auto b = init_regressor<float>(d, 9);
    const auto c = init_regressor<float>(d, 10);
    CHECK(a.fc1_w == b.fc1_w);
    CHECK(a.convs[0].w == b.convs[0].w);
    CHECK(a.fc1_w != c.fc1_w);

    for (float v : a.convs[0].b) CHECK(v == 1.0f);
    for (float v : a.fc1_b) CHECK(v == 1.0f);
    for (float v : a.fc2_b) CHECK(v == 1.0f);

    // CLT bound on the weight sample mean over ~1e5 draws (biases excluded).
    double sum = 0.0;
    std::size_t n = 0;
    auto tally = [&](const std::vector<float>& w) {
        for (float v : w) {
            sum += v;
            ++n;
        }
    };
    for (const auto& conv : a.convs) tally(conv.w);
    tally(a.fc1_w);
    tally(a.fc2_w);
    REQUIRE(n > 100000);
    CHECK(std::abs(sum / static_cast<double>(n)) < 3.0 * 0.01 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("forward: determinism, output range, batch independence") {
    const NetDescriptor d = tiny_descriptor();
    const auto net = init_regressor<float>(d, 3);

    SUBCASE("zero image gives identical rows") {
        Tensor<float> zeros({3, 8, 8, 3});
        ForwardCache<float> cache;
        const Tensor<float> out = forward(net, zeros, &cache);
        for (int j = 0; j < d.output_dim(); ++j) {
            CHECK(out.data[j] == out.data[d.output_dim() + j]);
            CHECK(out.data[j] == out.data[2 * d.output_dim() + j]);
        }
    }
    SUBCASE("radii bounded in (0, r_max)") {
        Tensor<float> batch = random_batch<float>(4, d, 5);
        for (float& v : batch.data) v = static_cast<float>(v * 200.0 - 100.0);  // extreme inputs
        ForwardCache<float> cache;
        const Tensor<float> out = forward(net, batch, &cache);
        for (float r : out.data) {
            CHECK(r > 0.0f);
            CHECK(r < static_cast<float>(d.r_max()));
        }
    }
    SUBCASE("a batch of two equals two batches of one") {
        const Tensor<float> batch = random_batch<float>(2, d, 7);
        ForwardCache<float> cache;
        const Tensor<float> both = forward(net, batch, &cache);
        const std::size_t per = static_cast<std::size_t>(8) * 8 * 3;
        for (int i = 0; i < 2; ++i) {
            Tensor<float> one({1, 8, 8, 3});
            std::copy(batch.data.begin() + i * per, batch.data.begin() + (i + 1) * per,
                      one.data.begin());
            ForwardCache<float> c1;
            const Tensor<float> row = forward(net, one, &c1);
            for (int j = 0; j < d.output_dim(); ++j) {
                CHECK(row.data[j] == both.data[i * d.output_dim() + j]);
            }
        }
    }
    SUBCASE("threaded forward is bit-identical") {
        const Tensor<float> batch = random_batch<float>(5, d, 11);
        ForwardCache<float> c1, c2;
        const Tensor<float> serial = forward(net, batch, &c1, 1);
        const Tensor<float> threaded = forward(net, batch, &c2, 3);
        CHECK(serial.data == threaded.data);
    }
    SUBCASE("shape mismatch is rejected") {
        Tensor<float> wrong({1, 8, 8, 1});
        ForwardCache<float> cache;
        CHECK_THROWS_WITH_AS(forward(net, wrong, &cache), doctest::Contains("ShapeMismatch"),
                             Error);
    }
}

TEST_CASE("backward: zero cotangent, threading, stale cache") {
    const NetDescriptor d = tiny_descriptor();
    auto net = init_regressor<float>(d, 13);
    const Tensor<float> batch = random_batch<float>(3, d, 17);
    ForwardCache<float> cache;
    forward(net, batch, &cache);

    SUBCASE("zero d_radii gives zero parameter grads") {
        Tensor<float> zero({3, d.output_dim()});
        const ParamGrads<float> g = backward(net, cache, zero);
        for (const auto& buf : g.buffers) {
            for (float v : buf) CHECK(v == 0.0f);
        }
    }
    SUBCASE("thread-count invariance") {
        Tensor<float> dr({3, d.output_dim()});
        Rng rng(19);
        for (float& v : dr.data) v = static_cast<float>(rng.uniform(-1, 1));
        const ParamGrads<float> g1 = backward(net, cache, dr, 1);
        const ParamGrads<float> g3 = backward(net, cache, dr, 3);
        for (std::size_t p = 0; p < g1.buffers.size(); ++p) CHECK(g1.buffers[p] == g3.buffers[p]);
    }
    SUBCASE("stale cache raises after a step") {
        Tensor<float> dr({3, d.output_dim()});
        auto opt = OptimizerState<float>::for_net(net, OptimizerKind::Sgd, 0.01);
        const ParamGrads<float> g = backward(net, cache, dr);
        step(&net, &opt, g);
        CHECK_THROWS_WITH_AS(backward(net, cache, dr), doctest::Contains("StaleCache"), Error);
    }
}

TEST_CASE("single-layer linear descriptor reproduces the least-squares gradient") {
    NetDescriptor d;
    d.input_size = 4;
    d.in_channels = 1;
    d.conv_channels = {};
    d.fc_hidden = 0;
    d.n_v = 2;
    d.head = "linear";
    d.input_standardize = false;

    auto net = init_regressor<double>(d, 23);
    Tensor<double> batch({1, 4, 4, 1});
    Rng rng(29);
    for (double& v : batch.data) v = rng.uniform();
    ForwardCache<double> cache;
    const Tensor<double> out = forward(net, batch, &cache);

    // L = |out - t|^2: closed-form dW = 2 (out - t) x^T, db = 2 (out - t).
    std::vector<double> target(d.output_dim());
    for (double& t : target) t = rng.uniform(0.0, 4.0);
    Tensor<double> d_out({1, d.output_dim()});
    for (int j = 0; j < d.output_dim(); ++j) d_out.data[j] = 2.0 * (out.data[j] - target[j]);
    const ParamGrads<double> g = backward(net, cache, d_out);

    for (int j = 0; j < d.output_dim(); ++j) {
        CHECK(g.buffers[1][j] == doctest::Approx(2.0 * (out.data[j] - target[j])).epsilon(1e-12));
        for (int i = 0; i < 16; ++i) {
            CHECK(g.buffers[0][j * 16 + i] ==
                  doctest::Approx(2.0 * (out.data[j] - target[j]) * batch.data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("f32 directional derivative agrees with a finite difference") {
    const NetDescriptor d = tiny_descriptor();
    auto net = init_regressor<float>(d, 31);
    const Tensor<float> batch = random_batch<float>(2, d, 37);
    ForwardCache<float> cache;
    const Tensor<float> out = forward(net, batch, &cache);

    Rng rng(41);
    std::vector<float> combine(out.data.size());
    for (float& c : combine) c = static_cast<float>(rng.uniform(-1, 1));
    Tensor<float> d_out({2, d.output_dim()});
    std::copy(combine.begin(), combine.end(), d_out.data.begin());
    const ParamGrads<float> grads = backward(net, cache, d_out);

    auto objective = [&](Regressor<float>& n) {
        ForwardCache<float> c;
        const Tensor<float> o = forward(n, batch, &c);
        double acc = 0.0;
        for (std::size_t i = 0; i < o.data.size(); ++i) acc += combine[i] * o.data[i];
        return acc;
    };

    // Random unit direction over all parameters.
    auto params = net.params();
    std::vector<std::vector<float>> direction;
    double norm2 = 0.0;
    for (auto p : params) {
        direction.emplace_back(p.size());
        for (float& v : direction.back()) {
            v = static_cast<float>(rng.uniform(-1, 1));
            norm2 += static_cast<double>(v) * v;
        }
    }
    const double inv_norm = 1.0 / std::sqrt(norm2);
    double analytic = 0.0;
    for (std::size_t s = 0; s < params.size(); ++s) {
        for (std::size_t i = 0; i < params[s].size(); ++i) {
            analytic += static_cast<double>(grads.buffers[s][i]) * direction[s][i] * inv_norm;
        }
    }
    const double h = 1e-2;
    auto shift = [&](double scale) {
        for (std::size_t s = 0; s < params.size(); ++s) {
            for (std::size_t i = 0; i < params[s].size(); ++i) {
                params[s][i] += static_cast<float>(scale * inv_norm * direction[s][i]);
            }
        }
    };
    std::vector<std::vector<float>> saved;
    for (auto p : params) saved.emplace_back(p.begin(), p.end());
    shift(h);
    const double up = objective(net);
    for (std::size_t s = 0; s < params.size(); ++s) {
        std::copy(saved[s].begin(), saved[s].end(), params[s].begin());
    }
    shift(-h);
    const double dn = objective(net);
    for (std::size_t s = 0; s < params.size(); ++s) {
        std::copy(saved[s].begin(), saved[s].end(), params[s].begin());
    }
    const double numeric = (up - dn) / (2 * h);
    CHECK(std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-6) < 1e-3);
}

TEST_CASE("full-model f64 gradient check meets 1e-6") {
    const ModelGradCheckResult r = gradcheck_model(2024, 100, 1e-6);
    CHECK(r.checked == 100);
    CHECK(r.passed == 100);
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("optimizer updates match their closed forms") {
    const NetDescriptor d = tiny_descriptor();

    SUBCASE("SGD with zero grads applies only weight decay") {
        auto net = init_regressor<float>(d, 43);
        const auto before = net.fc2_w;
        auto opt = OptimizerState<float>::for_net(net, OptimizerKind::Sgd, 0.01);
        ParamGrads<float> zeros;
        for (std::span<const float> p : net.params()) zeros.buffers.emplace_back(p.size(), 0.0f);
        step(&net, &opt, zeros);
        for (std::size_t i = 0; i < before.size(); ++i) {
            const float expect = before[i] * (1.0f - 0.01f * 5e-4f);
            CHECK(net.fc2_w[i] == doctest::Approx(expect).epsilon(1e-6));
        }
    }
    SUBCASE("first Adam step is sign-scaled") {
        auto net = init_regressor<float>(d, 47);
        const auto before = net.fc2_b;
        auto opt = OptimizerState<float>::for_net(net, OptimizerKind::Adam, 0.01);
        ParamGrads<float> grads;
        Rng rng(53);
        for (std::span<const float> p : net.params()) {
            grads.buffers.emplace_back(p.size(), 0.0f);
        }
        for (float& g : grads.buffers.back()) g = static_cast<float>(rng.uniform(-2, 2));
        step(&net, &opt, grads);
        const auto& g = grads.buffers.back();
        for (std::size_t i = 0; i < before.size(); ++i) {
            const double expect = before[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
            CHECK(net.fc2_b[i] == doctest::Approx(expect).epsilon(1e-5));
        }
    }
    SUBCASE("two identical runs stay identical") {
        auto net1 = init_regressor<float>(d, 59);
        auto net2 = init_regressor<float>(d, 59);
        auto opt1 = OptimizerState<float>::for_net(net1, OptimizerKind::Adam, 0.01);
        auto opt2 = OptimizerState<float>::for_net(net2, OptimizerKind::Adam, 0.01);
        const Tensor<float> batch = random_batch<float>(2, d, 61);
        for (int it = 0; it < 5; ++it) {
            for (auto [net, opt] : {std::pair{&net1, &opt1}, std::pair{&net2, &opt2}}) {
                ForwardCache<float> cache;
                const Tensor<float> out = forward(*net, batch, &cache);
                Tensor<float> dr({2, d.output_dim()});
                for (std::size_t i = 0; i < dr.data.size(); ++i) {
                    dr.data[i] = out.data[i] > 10.0f ? 1.0f : -1.0f;
                }
                const ParamGrads<float> g = backward(*net, cache, dr);
                step(net, opt, g);
            }
        }
        CHECK(net1.fc2_w == net2.fc2_w);
        CHECK(net1.convs[0].w == net2.convs[0].w);
    }
}

TEST_CASE("checkpoint round trip and corruption errors") {
    const NetDescriptor d = tiny_descriptor();
    const auto net = init_regressor<float>(d, 67);
    const fs::path path = fs::temp_directory_path() / "pcseg_test.ckpt";
    save_checkpoint(net, path.string());

    const RegressorState back = load_checkpoint(path.string());
    CHECK(back.desc.to_json() == net.desc.to_json());
    CHECK(back.fc1_w == net.fc1_w);
    CHECK(back.fc2_b == net.fc2_b);
    CHECK(back.convs[1].w == net.convs[1].w);

    SUBCASE("bad magic") {
        const fs::path bad = fs::temp_directory_path() / "pcseg_bad.ckpt";
        std::ofstream out(bad, std::ios::binary);
        out << "NOPE" << std::string(64, '\0');
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()), doctest::Contains("BadMagic"), Error);
    }
    SUBCASE("truncated tail") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        in.close();
        const fs::path cut = fs::temp_directory_path() / "pcseg_cut.ckpt";
        std::ofstream out(cut, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(cut.string()), doctest::Contains("TruncatedFile"),
                             Error);
    }
    SUBCASE("version mismatch") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        in.close();
        bytes[4] = 9;  // format version field
        const fs::path wrong = fs::temp_directory_path() / "pcseg_ver.ckpt";
        std::ofstream out(wrong, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(wrong.string()),
                             doctest::Contains("VersionMismatch"), Error);
    }
}

TEST_CASE("segment-loss gradcheck passes for all three backends") {
    for (const char* backend : {"jm-exact", "jm-paper", "mse"}) {
        GradCheckConfig cfg;
        cfg.backend = backend;
        cfg.trials = 300;
        cfg.seed = 7;
        const GradCheckResult r = gradcheck_loss(cfg);
        INFO(backend, " max_rel_err=", r.max_rel_err);
        CHECK(r.ok());
    }
}
