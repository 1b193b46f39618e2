#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "model_fixtures.hpp"
#include "signspeak/models.hpp"

using namespace signspeak;
using namespace signspeak::testing;

namespace {

// published sizes of the seven benchmark families
const std::map<std::string, std::size_t> kExpectedCounts = {
    {"dense_lstm", 63140},         {"dense_gru", 50788},
    {"stacked_lstm", 63908},       {"stacked_gru", 51172},
    {"dense_stacked_lstm", 96164}, {"dense_stacked_gru", 75556},
    {"encoder", 67524},
};

const std::map<std::string, std::size_t> kPublishedK = {
    {"dense_lstm", 63},         {"dense_gru", 51},  {"stacked_lstm", 64},
    {"stacked_gru", 51},        {"dense_stacked_lstm", 96},
    {"dense_stacked_gru", 76},  {"encoder", 67},
};

}  // namespace

TEST_CASE("parameter counts match the pinned sizes") {
    for (const auto& [name, expect] : kExpectedCounts) {
        CAPTURE(name);
        CHECK(count_parameters(config_for_name(name)) == expect);
        // each exact count sits within 1K of its published thousand-label
        const long long diff = static_cast<long long>(expect) -
                               static_cast<long long>(kPublishedK.at(name)) * 1000;
        CHECK(std::llabs(diff) < 1000);
    }
}

TEST_CASE("build produces the declared number of scalars") {
    for (const auto& name : model_names()) {
        CAPTURE(name);
        auto params = build<float>(config_for_name(name), 1);
        CHECK(params.scalar_count() == count_parameters(config_for_name(name)));
        for (const auto& [pname, t] : params.entries) {
            CAPTURE(pname);
            CHECK(t.requires_grad());
            CHECK(t.all_finite());
        }
    }
}

TEST_CASE("build is deterministic in the seed") {
    auto cfg = config_for_name("stacked_gru");
    auto a = build<float>(cfg, 42);
    auto b = build<float>(cfg, 42);
    auto c = build<float>(cfg, 43);
    REQUIRE(a.entries.size() == b.entries.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].second.values() == b.entries[i].second.values());
        if (a.entries[i].second.values() != c.entries[i].second.values()) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("unknown model name is rejected with the valid list") {
    try {
        config_for_name("bilstm");
        FAIL("expected ModelError");
    } catch (const ModelError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bilstm") != std::string::npos);
        CHECK(msg.find("stacked_gru") != std::string::npos);
    }
    for (const auto& name : model_names())
        CHECK(name_for_config(config_for_name(name)) == name);
}

TEST_CASE("LSTM cell step with zero weights matches hand computation") {
    // all-zero parameters: every gate is sigmoid(0)=0.5, candidate tanh(0)=0,
    // so c = 0.5*c_prev and h = 0.5*tanh(c)
    ModelParams<double> p;
    for (const char* g : {"i", "f", "g", "o"}) {
        p.add(std::string("l.") + g + ".wx", Tensor<double>::zeros({2, 3}));
        p.add(std::string("l.") + g + ".wh", Tensor<double>::zeros({3, 3}));
        p.add(std::string("l.") + g + ".b", Tensor<double>::zeros({3}));
    }
    auto x = Tensor<double>::from_values({1, 2}, {0.4, -0.9});
    auto h0 = Tensor<double>::zeros({1, 3});
    auto c0 = Tensor<double>::full({1, 3}, 1.0);
    auto [h, c] = lstm_cell_step(p, "l", x, h0, c0);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(c.values()[j] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(h.values()[j] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-12));
    }
}

TEST_CASE("GRU cell step with zero weights matches hand computation") {
    // z = 0.5, candidate = 0, so h = 0.5*h_prev
    ModelParams<double> p;
    for (const char* g : {"z", "r", "c"}) {
        p.add(std::string("l.") + g + ".wx", Tensor<double>::zeros({2, 3}));
        p.add(std::string("l.") + g + ".wh", Tensor<double>::zeros({3, 3}));
        p.add(std::string("l.") + g + ".b", Tensor<double>::zeros({3}));
    }
    auto x = Tensor<double>::from_values({1, 2}, {0.4, -0.9});
    auto h0 = Tensor<double>::full({1, 3}, 1.0);
    auto h = gru_cell_step(p, "l", x, h0);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(h.values()[j] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("chained recurrent steps pass gradient checks") {
    for (const bool lstm : {true, false}) {
        CAPTURE(lstm);
        ModelParams<double> p;
        Rng init(5, lstm ? "lstm-chain" : "gru-chain");
        for (const char* g : lstm ? std::vector<const char*>{"i", "f", "g", "o"}
                                  : std::vector<const char*>{"z", "r", "c"}) {
            p.add(std::string("l.") + g + ".wx", random_tensor({2, 3}, init, -0.5, 0.5));
            p.add(std::string("l.") + g + ".wh", random_tensor({3, 3}, init, -0.5, 0.5));
            p.add(std::string("l.") + g + ".b", random_tensor({3}, init, -0.1, 0.1));
        }
        Rng data(6, "chain-x");
        std::vector<Tensor<double>> xs = {random_tensor({2, 2}, data),
                                          random_tensor({2, 2}, data),
                                          random_tensor({2, 2}, data)};
        std::vector<Tensor<double>> leaves;
        for (auto& [_, t] : p.entries) leaves.push_back(t);
        auto loss_fn = [&] {
            auto h = Tensor<double>::zeros({2, 3});
            auto c = Tensor<double>::zeros({2, 3});
            for (const auto& x : xs) {
                if (lstm) {
                    auto [h2, c2] = lstm_cell_step(p, "l", x, h, c);
                    h = h2;
                    c = c2;
                } else {
                    h = gru_cell_step(p, "l", x, h);
                }
            }
            return sum_all(mul(h, h));
        };
        CHECK(grad_check(leaves, loss_fn) < 1e-3);
    }
}

TEST_CASE("every family passes an end-to-end gradient check") {
    for (const auto& name : model_names()) {
        CAPTURE(name);
        CHECK(model_grad_max_rel(name, 3) < 1e-3);
    }
}

TEST_CASE("forward is invariant to values in the padded region") {
    for (const auto& name : model_names()) {
        CAPTURE(name);
        const ModelConfig cfg = small_config(name);
        auto params = build<float>(cfg, 9);
        Rng data_rng(9, "pad-batch");
        auto batch = small_batch(cfg, 3, data_rng);

        auto to_float = [](const Tensor<double>& d) {
            std::vector<float> v(d.values().begin(), d.values().end());
            return Tensor<float>::from_values(d.shape(), std::move(v));
        };
        auto clean = to_float(batch.data);
        auto dirty = to_float(batch.data);
        // poison every padded timestep
        const std::size_t t_max = clean.shape()[1], ch = clean.shape()[2];
        Rng junk(1, "junk");
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t t = batch.lengths[i]; t < t_max; ++t)
                for (std::size_t c = 0; c < ch; ++c)
                    dirty.values()[(i * t_max + t) * ch + c] =
                        static_cast<float>(junk.uniform(-50.0, 50.0));

        Rng e1(0, "eval"), e2(0, "eval");
        auto out_clean = forward_model(cfg, params, clean, batch.lengths, Mode::Eval, e1);
        auto out_dirty = forward_model(cfg, params, dirty, batch.lengths, Mode::Eval, e2);
        const double tol = name == "encoder" ? 1e-5 : 1e-6;
        for (std::size_t i = 0; i < out_clean.size(); ++i)
            CHECK(std::fabs(out_clean.values()[i] - out_dirty.values()[i]) < tol);
    }
}

TEST_CASE("samples in a batch do not interact") {
    for (const auto& name : {"stacked_lstm", "dense_stacked_gru", "encoder"}) {
        CAPTURE(name);
        const ModelConfig cfg = small_config(name);
        auto params = build<float>(cfg, 4);
        Rng data_rng(4, "indep");
        auto batch = small_batch(cfg, 3, data_rng);
        const std::size_t t_max = batch.data.shape()[1], ch = batch.data.shape()[2];

        std::vector<float> all(batch.data.values().begin(), batch.data.values().end());
        Rng e0(0, "eval");
        auto joint = forward_model(cfg, params, Tensor<float>::from_values({3, t_max, ch}, all),
                                   batch.lengths, Mode::Eval, e0);
        const std::size_t k = joint.shape()[1];
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<float> one(all.begin() + i * t_max * ch,
                                   all.begin() + (i + 1) * t_max * ch);
            Rng e(0, "eval");
            auto solo = forward_model(cfg, params, Tensor<float>::from_values({1, t_max, ch},
                                                                              std::move(one)),
                                      {batch.lengths[i]}, Mode::Eval, e);
            for (std::size_t j = 0; j < k; ++j)
                CHECK(std::fabs(joint.values()[i * k + j] - solo.values()[j]) < 1e-5);
        }
    }
}

TEST_CASE("eval-mode forward is bit-identical across calls") {
    const ModelConfig cfg = small_config("encoder");
    auto params = build<float>(cfg, 8);
    Rng data_rng(8, "det");
    auto batch = small_batch(cfg, 2, data_rng);
    std::vector<float> v(batch.data.values().begin(), batch.data.values().end());
    auto x = Tensor<float>::from_values(batch.data.shape(), std::move(v));
    Rng e1(0, "eval"), e2(7, "other-stream");
    auto a = forward_model(cfg, params, x, batch.lengths, Mode::Eval, e1);
    auto b = forward_model(cfg, params, x, batch.lengths, Mode::Eval, e2);
    CHECK(a.values() == b.values());
}

TEST_CASE("length validation") {
    const ModelConfig cfg = small_config("stacked_lstm");
    auto params = build<float>(cfg, 2);
    auto x = Tensor<float>::zeros({2, 7, 3});
    Rng rng(0, "eval");
    CHECK_THROWS_AS(forward_model(cfg, params, x, {0, 3}, Mode::Eval, rng), ModelError);
    CHECK_THROWS_AS(forward_model(cfg, params, x, {3, 8}, Mode::Eval, rng), ModelError);
    CHECK_THROWS_AS(forward_model(cfg, params, x, {3}, Mode::Eval, rng), ModelError);
}
