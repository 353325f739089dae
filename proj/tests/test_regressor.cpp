#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "qmr/error.hpp"
#include "qmr/regressor.hpp"
#include "qmr/rng.hpp"
#include "qmr/synthetic.hpp"
#include "support/gradcheck.hpp"

using namespace qmr;
using nn::Tensor4;

namespace {

RegressorConfig blur_config(int n = 5) {
    RegressorConfig c;
    c.grids = {ParamGrid(ModifierKind::Blur, n, 1.0, 2.5)};
    return c;
}

Tensor4 random_tensor(int n, int side, std::uint64_t seed) {
    Tensor4 t(n, 1, side, side);
    Rng rng(seed);
    for (auto& v : t.v) v = 0.2 + 0.6 * rng.uniform();
    return t;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("qmr_test_regressor_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace

TEST(Conditioning, RemovesMeanAndScales) {
    const Tensor4 x = random_tensor(3, 6, 1);
    const Tensor4 y = condition_input(x);
    for (int i = 0; i < 3; ++i) {
        double mean = 0.0;
        for (std::size_t k = 0; k < 36; ++k) mean += y.v[i * 36 + k];
        EXPECT_NEAR(mean / 36.0, 0.0, 1e-12);
        EXPECT_NEAR(y.v[i * 36 + 1] - y.v[i * 36], kInputGain * (x.v[i * 36 + 1] - x.v[i * 36]), 1e-12);
    }
}

TEST(Conditioning, BackwardIsAdjoint) {
    const Tensor4 x = random_tensor(2, 5, 2), g = random_tensor(2, 5, 3);
    const Tensor4 ax = condition_input(x), atg = condition_input_backward(g);
    const double lhs = std::inner_product(ax.v.begin(), ax.v.end(), g.v.begin(), 0.0);
    const double rhs = std::inner_product(x.v.begin(), x.v.end(), atg.v.begin(), 0.0);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(QmrNet, TopologiesShareAsDocumented) {
    RegressorConfig c;
    c.grids = {ParamGrid::defaults(ModifierKind::Blur), ParamGrid::defaults(ModifierKind::Snr)};
    c.topology = Topology::MultiHead;
    QmrNet shared(c, 1);
    EXPECT_EQ(shared.encoders(), 1);
    EXPECT_EQ(shared.heads(), 2);
    c.topology = Topology::MultiBranch;
    QmrNet branches(c, 1);
    EXPECT_EQ(branches.encoders(), 2);
    c.topology = Topology::SingleHead;
    EXPECT_THROW(QmrNet(c, 1), ParameterError);
    EXPECT_EQ(parse_topology("multi-branch"), Topology::MultiBranch);
    EXPECT_THROW(parse_topology("tree"), ParameterError);
}

TEST(QmrNet, ProbabilitiesSumToOne) {
    QmrNet net(blur_config(), 3);
    const Tensor4 p = net.infer(random_tensor(4, 32, 4), 0);
    ASSERT_EQ(p.n, 4);
    ASSERT_EQ(p.c, 5);
    for (int i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int c = 0; c < 5; ++c) s += p.at(i, c, 0, 0);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_THROW(net.infer(random_tensor(1, 32, 4), 1), ParameterError);
}

TEST(QmrNet, InputGradientMatchesFiniteDifferences) {
    QmrNet net(blur_config(3), 5);
    const Tensor4 x = random_tensor(2, 12, 6);
    std::vector<double> w(6);
    Rng rng(7);
    for (auto& v : w) v = rng.uniform() - 0.5;
    Tensor4 probe = x;
    auto f = [&] {
        const Tensor4 p = net.infer(probe, 0);
        return std::inner_product(p.v.begin(), p.v.end(), w.begin(), 0.0);
    };
    net.forward(x, 0);
    Tensor4 g(2, 3, 1, 1);
    g.v = w;
    const Tensor4 analytic = net.backward(g, 0);
    const auto numeric = check::numeric_gradient(f, probe.v);
    EXPECT_LT(check::relative_error(analytic.v, numeric), 1e-6);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
    RegressorConfig c = blur_config();
    c.lr = 0.01;
    c.batch = 8;
    const auto back = RegressorConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_THROW(RegressorConfig::from_json({{"learning_rate", 1.0}}), ParameterError);
    const auto partial = RegressorConfig::from_json({{"epochs", 3}});
    EXPECT_EQ(partial.epochs, 3);
    EXPECT_EQ(partial.side, 64);
}

TEST(Split, DisjointCoveringAndSeeded) {
    std::vector<int> sources;
    for (int i = 0; i < 10; ++i)
        for (int k = 0; k < 3; ++k) sources.push_back(9 - i);
    std::vector<int> tr, va, tr2, va2;
    split_sources(sources, 0.2, 11, tr, va);
    split_sources(sources, 0.2, 11, tr2, va2);
    EXPECT_EQ(tr, tr2);
    EXPECT_EQ(va, va2);
    EXPECT_EQ(va.size(), 2u);
    EXPECT_EQ(tr.size(), 8u);
    std::vector<int> all = tr;
    all.insert(all.end(), va.begin(), va.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
    split_sources({4, 5}, 0.01, 1, tr, va);
    EXPECT_EQ(va.size(), 1u);
    EXPECT_EQ(tr.size(), 1u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto dir = temp_dir("ckpt");
    QmrNet net(blur_config(), 8);
    save_model(net, dir / "m.json", {{"note", "x"}});
    nlohmann::json meta;
    const QmrNet back = load_model(dir / "m.json", blur_config().grids, &meta);
    EXPECT_EQ(meta["note"], "x");
    const Tensor4 x = random_tensor(2, 64, 9);
    EXPECT_EQ(net.infer(x, 0).v, back.infer(x, 0).v);
    EXPECT_EQ(net.to_json({}).dump(), back.to_json({}).dump());

    EXPECT_THROW(load_model(dir / "m.json", {ParamGrid(ModifierKind::Blur, 10, 1.0, 2.5)}), GridMismatchError);

    std::string text;
    {
        std::ifstream in(dir / "m.json");
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    {
        std::ofstream out(dir / "cut.json");
        out << text.substr(0, text.size() / 2);
    }
    EXPECT_THROW(load_model(dir / "cut.json"), CheckpointError);
    auto j = nlohmann::json::parse(text);
    j["version"] = 7;
    {
        std::ofstream out(dir / "v7.json");
        out << j.dump();
    }
    EXPECT_THROW(load_model(dir / "v7.json"), CheckpointError);
    EXPECT_THROW(load_model(dir / "missing.json"), IoError);
    std::filesystem::remove_all(dir);
}

TEST(Predict, CropAveragingIsAssociative) {
    QmrNet net(blur_config(), 10);
    const Image img = synthetic::textured_scene(80, 70, 3);
    const auto hp = predict(net, img, 8, 21)[0];

    // Same eight crops, evaluated as two half batches and averaged.
    const Image padded = circular_pad(img, 64);
    const auto rects = extract_crops(padded, 64, 8, 21);
    std::vector<double> acc(5, 0.0);
    for (int half = 0; half < 2; ++half) {
        std::vector<Image> part;
        for (int k = 0; k < 4; ++k) part.push_back(crop(padded, rects[half * 4 + k]));
        const Tensor4 p = net.infer(to_batch(part), 0);
        for (int i = 0; i < p.n; ++i)
            for (int c = 0; c < 5; ++c) acc[c] += p.at(i, c, 0, 0);
    }
    const double total = std::accumulate(acc.begin(), acc.end(), 0.0);
    for (int c = 0; c < 5; ++c) EXPECT_NEAR(hp.probabilities[c], acc[c] / total, 1e-14);
    EXPECT_EQ(hp.value, hp.grid.value(hp.argmax));
}

TEST(Predict, QualityVectorNeedsEveryRequestedHead) {
    QmrNet net(blur_config(), 10);
    const Image img = synthetic::textured_scene(64, 64, 3);
    const auto qv = predict_quality_vector({&net}, img, 2, 1, {ModifierKind::Blur});
    EXPECT_TRUE(qv.blur.has_value());
    EXPECT_FALSE(qv.snr.has_value());
    EXPECT_THROW(predict_quality_vector({&net}, img, 2, 1), ParameterError);
}

TEST(QualityLoss, ZeroForIdenticalInputs) {
    QmrNet net(blur_config(), 12);
    const Tensor4 hr = random_tensor(2, 32, 13);
    for (auto kind : {QmrLossKind::L1, QmrLossKind::L2}) {
        const auto l = qmr_loss(net, hr, hr, kind);
        EXPECT_EQ(l.value, 0.0);
        for (double g : l.grad.v) EXPECT_EQ(g, 0.0);
    }
}

TEST(QualityLoss, GradientMatchesFiniteDifferences) {
    QmrNet net(blur_config(), 14);
    const Tensor4 hr = random_tensor(1, 12, 15), sr = random_tensor(1, 12, 16);
    for (auto kind : {QmrLossKind::L2, QmrLossKind::Bce}) {
        const auto l = qmr_loss(net, hr, sr, kind);
        Tensor4 probe = sr;
        auto f = [&] { return qmr_loss(net, hr, probe, kind).value; };
        EXPECT_LT(check::relative_error(l.grad.v, check::numeric_gradient(f, probe.v)), 1e-5) << to_string(kind);
    }
}

TEST(QualityLoss, LeavesNetworkUntouched) {
    QmrNet net(blur_config(), 17);
    const auto before = net.to_json({}).dump();
    qmr_loss(net, random_tensor(1, 16, 1), random_tensor(1, 16, 2), QmrLossKind::Bce);
    EXPECT_EQ(net.to_json({}).dump(), before);
    for (auto* p : net.all_parameters())
        for (double g : p->grad) EXPECT_EQ(g, 0.0);
}

TEST(QualityLoss, CombinedLoss) {
    const Tensor4 hr = random_tensor(1, 16, 3), sr = random_tensor(1, 16, 4);
    const auto c = combined_sr_loss(nullptr, hr, sr, 0.0);
    const auto l1 = nn::l1_loss(sr.v, hr.v);
    EXPECT_EQ(c.value, l1.value);
    EXPECT_EQ(c.grad.v, l1.grad);
    const auto c2 = combined_sr_loss(nullptr, hr, sr, 0.0, QmrLossKind::L1, 0, ContentLoss::L2);
    EXPECT_EQ(c2.value, nn::l2_loss(sr.v, hr.v).value);
    EXPECT_THROW(combined_sr_loss(nullptr, hr, sr, 0.1), ParameterError);

    QmrNet net(blur_config(), 5);
    const auto q = qmr_loss(net, hr, sr, QmrLossKind::L1);
    const auto c3 = combined_sr_loss(&net, hr, sr, 0.5, QmrLossKind::L1);
    EXPECT_NEAR(c3.value, l1.value + 0.5 * q.value, 1e-15);
    EXPECT_EQ(parse_qmr_loss("bce"), QmrLossKind::Bce);
    EXPECT_THROW(parse_qmr_loss("l3"), ParameterError);
}

TEST(Training, TwoClassToyLearns) {
    std::vector<Image> imgs;
    for (int i = 0; i < 10; ++i) imgs.push_back(synthetic::textured_scene(72, 72, 300 + i));
    RegressorConfig c;
    c.grids = {ParamGrid(ModifierKind::Blur, 2, 1.0, 2.5)};
    c.epochs = 6;
    c.batch = 8;
    c.lr = 0.01;
    const auto r = train_regressor(imgs, c, 4);
    ASSERT_EQ(r.log.size(), 6u);
    EXPECT_LT(r.log.back().loss, r.log.front().loss);
    const auto best = std::max_element(r.log.begin(), r.log.end(),
                                       [](const EpochLog& a, const EpochLog& b) { return a.r_at_1 < b.r_at_1; });
    EXPECT_GE(best->r_at_1, 80.0);
    EXPECT_EQ(r.val_sources.size(), 2u);
}

TEST(Training, DeterministicForSeed) {
    std::vector<Image> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(synthetic::textured_scene(64, 64, 40 + i));
    RegressorConfig c = blur_config(3);
    c.epochs = 2;
    c.crops = 2;
    const auto a = train_regressor(imgs, c, 5, 1), b = train_regressor(imgs, c, 5, 3);
    EXPECT_EQ(a.best.to_json({}).dump(), b.best.to_json({}).dump());
    EXPECT_EQ(epoch_log_csv(a.log), epoch_log_csv(b.log));
    EXPECT_EQ(epoch_log_csv(a.log).substr(0, 23), "epoch,loss,medR,R@1,R@5");
}
