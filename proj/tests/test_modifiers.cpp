#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qmr/error.hpp"
#include "qmr/modifiers.hpp"
#include "qmr/nr_metrics.hpp"
#include "qmr/synthetic.hpp"

using namespace qmr;

TEST(ParamGrid, DefaultsAndValues) {
    const auto g = ParamGrid::defaults(ModifierKind::Gsd);
    EXPECT_EQ(g.n, 10);
    EXPECT_DOUBLE_EQ(g.value(0), 0.30);
    EXPECT_DOUBLE_EQ(g.value(9), 0.60);
    EXPECT_NEAR(g.value(1), 0.3333333333333333, 1e-15);
    EXPECT_EQ(ParamGrid::defaults(ModifierKind::Blur).n, 50);
    EXPECT_THROW(ParamGrid(ModifierKind::Blur, 1, 0, 1), ParameterError);
    EXPECT_THROW(ParamGrid(ModifierKind::Blur, 3, 1, 1), ParameterError);
    EXPECT_THROW(g.value(10), ParameterError);
}

TEST(ParamGrid, ValueToClass) {
    const ParamGrid g(ModifierKind::Blur, 5, 1.0, 2.5);  // 1, 1.375, 1.75, 2.125, 2.5
    EXPECT_EQ(value_to_class(g, 1.0), 0);
    EXPECT_EQ(value_to_class(g, 1.74), 2);
    EXPECT_EQ(value_to_class(g, 1.1875), 0);  // tie goes low
    EXPECT_EQ(value_to_class(g, 0.2), 0);     // clamped
    EXPECT_EQ(value_to_class(g, 9.0), 4);
    for (int k = 0; k < g.n; ++k) EXPECT_EQ(value_to_class(g, class_to_value(g, k)), k);
}

TEST(Modifiers, NamesRoundTrip) {
    for (auto k : kAllModifiers) EXPECT_EQ(parse_modifier(to_string(k)), k);
    EXPECT_THROW(parse_modifier("fog"), ParameterError);
}

TEST(Modifiers, BlurPreservesConstantsAndSmooths) {
    const Image flat = synthetic::flat(20, 20, 77.0);
    for (double v : apply_blur(flat, 2.0).data) EXPECT_NEAR(v, 77.0, 1e-12);
    const Image tex = synthetic::textured_scene(64, 64, 5);
    auto variance = [](const Image& im) {
        const double m = im.mean();
        double s = 0;
        for (double v : im.data) s += (v - m) * (v - m);
        return s / im.size();
    };
    EXPECT_LT(variance(apply_blur(tex, 2.0)), variance(apply_blur(tex, 1.0)));
    EXPECT_THROW(apply_blur(tex, 0.0), ParameterError);
}

TEST(Modifiers, SharpnessIdentityAndDirection) {
    const Image tex = synthetic::textured_scene(48, 48, 5);
    EXPECT_EQ(apply_sharpness(tex, 1.0).data, tex.data);
    synthetic::EdgeSpec spec;
    spec.sigma = 1.5;
    const Image edge = synthetic::edge_phantom(spec);
    const double base = rer(measure_edge_response(edge, EdgeOrientation::X));
    EXPECT_GT(rer(measure_edge_response(apply_sharpness(edge, 2.0), EdgeOrientation::X)), base);
    EXPECT_LT(rer(measure_edge_response(apply_sharpness(edge, 0.5), EdgeOrientation::X)), base);
}

TEST(Modifiers, GsdRescales) {
    Image img = synthetic::flat(40, 30, 10.0);
    const Image out = apply_modifier(img, ModifierKind::Gsd, 0.60, 0);
    EXPECT_EQ(out.width, 80);
    EXPECT_EQ(out.height, 60);
    ASSERT_TRUE(out.gsd);
    EXPECT_DOUBLE_EQ(*out.gsd, 60.0);
    const Image same = apply_gsd(img, 30.0, 30.0);
    EXPECT_EQ(same.width, 40);
    EXPECT_THROW(apply_gsd(img, 20.0, 30.0), ParameterError);
}

TEST(Modifiers, RerSigmaInverse) {
    for (double r : {0.15, 0.3, 0.55, 0.9}) EXPECT_NEAR(sigma_to_rer(rer_to_sigma(r)), r, 1e-12);
    EXPECT_NEAR(sigma_to_rer(1.0), std::erf(1.0 / (2.0 * std::sqrt(2.0))), 1e-15);
    EXPECT_THROW(rer_to_sigma(1.0), ParameterError);
}

TEST(Modifiers, RerClosedLoop) {
    synthetic::EdgeSpec spec;
    spec.sigma = rer_to_sigma(0.55);
    const Image edge = synthetic::edge_phantom(spec);
    for (double target : {0.25, 0.35, 0.45}) {
        const double got = rer(measure_edge_response(apply_rer(edge, target, 0.55), EdgeOrientation::X));
        EXPECT_NEAR(got, target, 0.05 * target) << target;
    }
    EXPECT_THROW(apply_rer(edge, 0.6, 0.55), ParameterError);
}

TEST(Modifiers, SnrNoiseLevelAndSeed) {
    const Image flat = synthetic::flat(128, 128, 120.0);
    const Image a = apply_snr(flat, 20.0, 3);
    const Image b = apply_snr(flat, 20.0, 3);
    EXPECT_EQ(a.data, b.data);
    EXPECT_NE(a.data, apply_snr(flat, 20.0, 4).data);
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a.data[i] - 120.0) * (a.data[i] - 120.0);
    EXPECT_NEAR(std::sqrt(s / a.size()), 6.0, 0.1);
    EXPECT_THROW(apply_snr(synthetic::flat(8, 8, 0.0), 20.0, 0), DegenerateInputError);
}

TEST(Manifest, JsonlRoundTrip) {
    DatasetManifest m;
    m.grid = ParamGrid(ModifierKind::Snr, 4, 15, 30);
    m.side = 32;
    m.crops = 2;
    m.seed = 99;
    m.skipped = {"bad.png"};
    ManifestEntry e;
    e.source = "a.png";
    e.kind = ModifierKind::Snr;
    e.value = 20;
    e.class_index = 1;
    e.rect = {3, 4, 32};
    e.seed = 12345678901234567ULL;
    e.output = "snr/1/0_a_0.png";
    m.entries = {e, e};
    const auto back = DatasetManifest::from_jsonl(m.to_jsonl());
    EXPECT_EQ(back.grid, m.grid);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.skipped, m.skipped);
    ASSERT_EQ(back.entries.size(), 2u);
    EXPECT_EQ(back.entries[1].rect, e.rect);
    EXPECT_EQ(back.entries[1].seed, e.seed);
    EXPECT_EQ(back.entries[1].output, e.output);
    EXPECT_EQ(back.to_jsonl(), m.to_jsonl());
    EXPECT_THROW(DatasetManifest::from_jsonl("{\"record\":\"entry\"}\n"), DecodeError);
}

TEST(Manifest, GenerateCountsAndDeterminism) {
    const auto dir = std::filesystem::temp_directory_path() / "qmr_test_modifiers";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir / "in");
    std::vector<std::filesystem::path> inputs;
    for (int i = 0; i < 2; ++i) {
        inputs.push_back(dir / "in" / ("img" + std::to_string(i) + ".png"));
        save_image(synthetic::textured_scene(80, 72, i), inputs.back());
    }
    inputs.push_back(dir / "in" / "broken.png");
    { std::ofstream(inputs.back()) << "x"; }
    const ParamGrid g(ModifierKind::Blur, 5, 1.0, 2.5);
    const auto m1 = generate_annotated_dataset(inputs, g, 32, 8, 7, dir / "out1", 1);
    const auto m2 = generate_annotated_dataset(inputs, g, 32, 8, 7, dir / "out2", 3);
    EXPECT_EQ(m1.entries.size(), 80u);
    EXPECT_EQ(m1.skipped.size(), 1u);
    EXPECT_EQ(m1.to_jsonl(), m2.to_jsonl());
    for (const auto& e : m1.entries) {
        const Image a = load_image(dir / "out1" / e.output);
        const Image b = load_image(dir / "out2" / e.output);
        EXPECT_EQ(a.width, 32);
        EXPECT_EQ(a.data, b.data);
    }
    // The in-memory path yields the same crops.
    std::vector<Image> imgs = {load_image(inputs[0]), load_image(inputs[1])};
    const auto crops = make_annotated_crops(imgs, g, 32, 8, 7);
    ASSERT_EQ(crops.size(), 80u);
    const Image disk = load_image(dir / "out1" / m1.entries[17].output);
    for (std::size_t i = 0; i < disk.size(); ++i) EXPECT_NEAR(disk.data[i], std::round(crops[17].crop.data[i]), 0.5);
    EXPECT_EQ(crops[17].class_index, m1.entries[17].class_index);
}
