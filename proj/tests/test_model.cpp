#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "voxatn/errors.hpp"
#include "voxatn/model.hpp"
#include "voxatn/rng.hpp"
#include "voxatn/synthface.hpp"
#include "voxatn/voxel.hpp"

using namespace voxatn;
using namespace voxatn::net;
using tengine::Tensor;

namespace {

ModelConfig small_config(int res = 8) {
    ModelConfig cfg;
    cfg.resolution = res;
    cfg.fc_hidden = 6;
    return cfg;
}

Tensor random_input(const ModelConfig& cfg, int n, std::uint64_t seed, double density = 0.2) {
    Rng rng(seed);
    Tensor x({n, 1, cfg.resolution, cfg.resolution, cfg.resolution});
    for (double& v : x.data) v = rng.uniform() < density ? 1.0 : 0.0;
    return x;
}

// Closed-form total: conv stack + both attention branches + tail + classifier.
long long expected_params(const ModelConfig& cfg) {
    auto conv = [](int f, int c, int k) { return static_cast<long long>(f) * c * k * k * k + f; };
    int k1 = 5, k2 = 3, k3 = 3;
    switch (cfg.filter_variant) {
        case FilterVariant::PaperDefault: break;
        case FilterVariant::All3x3: k1 = k2 = k3 = 3; break;
        case FilterVariant::All5x5: k1 = k2 = k3 = 5; break;
        case FilterVariant::All7x7: k1 = k2 = k3 = 7; break;
    }
    long long total = conv(64, 1, k1) + conv(32, 64, k2) + conv(32, 32, k3);
    total += conv(32, 32, k3);  // tail conv, present with or without the gate
    if (cfg.attention_enabled) {
        const long long branch = 32LL * cfg.attention_hidden + cfg.attention_hidden +
                                 static_cast<long long>(cfg.attention_hidden) * cfg.attention_out +
                                 cfg.attention_out;
        total += 2 * branch;
    }
    const long long flat = 32LL * (cfg.resolution / 2) * (cfg.resolution / 2) * (cfg.resolution / 2);
    total += flat * cfg.fc_hidden + cfg.fc_hidden;
    total += static_cast<long long>(cfg.fc_hidden) * cfg.num_classes + cfg.num_classes;
    return total;
}

}  // namespace

TEST_CASE("parameter count at full resolution sits within 5% of 35.7M") {
    ModelConfig cfg;  // 64^3 defaults
    Model m(cfg);
    const double count = static_cast<double>(m.parameter_count());
    CHECK(std::fabs(count - 35.7e6) / 35.7e6 < 0.05);
    CHECK(m.parameter_count() == expected_params(cfg));
    // the summary documents the total
    const std::string s = m.summary();
    CHECK(s.find(std::to_string(m.parameter_count())) != std::string::npos);
}

TEST_CASE("parameter count follows the closed form across variants") {
    for (FilterVariant v :
         {FilterVariant::PaperDefault, FilterVariant::All3x3, FilterVariant::All5x5, FilterVariant::All7x7}) {
        for (bool att : {true, false}) {
            ModelConfig cfg = small_config(16);
            cfg.filter_variant = v;
            cfg.attention_enabled = att;
            Model m(cfg);
            CHECK(m.parameter_count() == expected_params(cfg));
        }
    }
    ModelConfig with = small_config(16);
    ModelConfig without = small_config(16);
    without.attention_enabled = false;
    CHECK(Model(without).parameter_count() < Model(with).parameter_count());
}

TEST_CASE("forward produces normalized probabilities and a fresh model scores 0.5") {
    ModelConfig cfg = small_config();
    Model m(cfg);
    m.init_params(7);
    const Tensor x = random_input(cfg, 3, 1);
    const Tensor p = m.forward(x);
    REQUIRE(p.shape == std::vector<int>({3, 2}));
    for (int n = 0; n < 3; ++n) {
        const double row = p.data[2 * n] + p.data[2 * n + 1];
        CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(p.data[2 * n] >= 0.0);
        // zero-initialized classifier: both classes exactly tied
        CHECK(p.data[2 * n] == doctest::Approx(0.5));
    }
}

TEST_CASE("forward is deterministic and respects the input contract") {
    ModelConfig cfg = small_config();
    Model m(cfg);
    m.init_params(3);
    const Tensor x = random_input(cfg, 2, 5);
    const Tensor a = m.forward(x);
    const Tensor b = m.forward(x);
    CHECK(a.data == b.data);
    Tensor wrong({2, 1, 4, 4, 4});
    CHECK_THROWS_AS(m.forward(wrong), UserError);
}

TEST_CASE("attention gate actually modulates the features") {
    // saturate one branch: forcing the max-branch second-layer bias very
    // negative drives its gate logits down, which must change the output
    ModelConfig cfg = small_config();
    Model m(cfg);
    m.init_params(11);
    Rng rng(13);
    for (double& v : m.fc2_w.data) v = 0.2 * rng.gaussian();  // non-trivial classifier
    const Tensor x = random_input(cfg, 2, 9);
    const Tensor before = m.forward(x);
    for (double& v : m.att_max_b2.data) v = -50.0;
    for (double& v : m.att_avg_b2.data) v = -50.0;
    const Tensor after = m.forward(x);
    bool changed = false;
    for (std::size_t i = 0; i < before.data.size(); ++i)
        if (std::fabs(before.data[i] - after.data[i]) > 1e-12) changed = true;
    CHECK(changed);

    // with attention disabled the same parameters are simply absent
    ModelConfig off = small_config();
    off.attention_enabled = false;
    Model moff(off);
    moff.init_params(11);
    const auto names = moff.parameter_names();
    for (const std::string& n : names) CHECK(n.find("att_") == std::string::npos);
    const Tensor p = moff.forward(x);
    CHECK(p.shape == std::vector<int>({2, 2}));
}

TEST_CASE("checkpoint round trip preserves every parameter bit") {
    ModelConfig cfg = small_config();
    cfg.filter_variant = FilterVariant::All3x3;
    Model m(cfg);
    m.init_params(21);
    std::ostringstream out;
    m.save(out);
    std::istringstream in(out.str());
    Model back = Model::load(in);
    CHECK(back.config().resolution == cfg.resolution);
    CHECK(back.config().filter_variant == cfg.filter_variant);
    auto pa = m.parameters();
    auto pb = back.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == pb[i]->data);

    const Tensor x = random_input(cfg, 1, 2);
    CHECK(m.forward(x).data == back.forward(x).data);
}

TEST_CASE("checkpoint loader rejects corrupted streams") {
    ModelConfig cfg = small_config();
    Model m(cfg);
    m.init_params(1);
    std::ostringstream out;
    m.save(out);
    const std::string blob = out.str();

    std::istringstream bad_magic("VXM9\n" + blob.substr(5));
    CHECK_THROWS_AS(Model::load(bad_magic), UserError);
    std::istringstream truncated(blob.substr(0, blob.size() / 2));
    CHECK_THROWS_AS(Model::load(truncated), UserError);
}

TEST_CASE("load_file_checked enforces the expected architecture") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "voxatn_test_model";
    fs::create_directories(dir);
    const std::string path = (dir / "ckpt.vxm1").string();

    ModelConfig cfg = small_config();
    Model m(cfg);
    m.init_params(2);
    m.save_file(path);

    CHECK_NOTHROW(Model::load_file_checked(path, cfg));
    ModelConfig other = cfg;
    other.resolution = 16;
    CHECK_THROWS_AS(Model::load_file_checked(path, other), UserError);
    ModelConfig off = cfg;
    off.attention_enabled = false;
    CHECK_THROWS_AS(Model::load_file_checked(path, off), UserError);
    CHECK_THROWS_AS(Model::load_file("/nonexistent/ckpt.vxm1"), UserError);
    fs::remove_all(dir);
}

namespace {

std::vector<LabeledCloud> tiny_dataset(int per_class, int points, std::uint64_t seed) {
    using synthface::sample_identity;
    using cloudio::PaiKind;
    std::vector<LabeledCloud> ds;
    for (int i = 0; i < per_class; ++i) {
        for (PaiKind kind : {PaiKind::BonaFide, PaiKind::SiliconeMask}) {
            synthface::SynthSpec spec;
            spec.kind = kind;
            spec.points_per_cloud = points;
            LabeledCloud lc;
            lc.cloud = cloudio::normalize(
                synthface::generate_cloud(sample_identity(kind, i, seed), spec, seed + 31 * i));
            lc.label.kind = kind;
            ds.push_back(std::move(lc));
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("a few epochs of training reduce the loss on a tiny task") {
    ModelConfig cfg = small_config(8);
    Model m(cfg);
    m.init_params(5);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 4;
    tc.learning_rate = 0.05;
    tc.augment.rotation_copies = 1;
    tc.augment.jitter_sigma = 0.0;
    tc.augment.mirror = false;
    tc.augment.shift_max = 0.0;
    tc.rng_seed = 9;
    const std::vector<double> losses = train(m, tiny_dataset(6, 400, 3), tc);
    REQUIRE(losses.size() == 4);
    CHECK(losses.back() < losses.front());
    for (double l : losses) CHECK(std::isfinite(l));
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto ds = tiny_dataset(4, 300, 8);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 2;
    tc.learning_rate = 0.02;
    tc.rng_seed = 12;
    tc.augment.rotation_copies = 2;

    ModelConfig cfg = small_config(8);
    Model a(cfg), b(cfg);
    a.init_params(4);
    b.init_params(4);
    const auto la = train(a, ds, tc);
    const auto lb = train(b, ds, tc);
    CHECK(la == lb);
    auto pa = a.parameters();
    auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == pb[i]->data);
}

TEST_CASE("training rejects unusable datasets") {
    ModelConfig cfg = small_config(8);
    Model m(cfg);
    m.init_params(1);
    TrainConfig tc;
    CHECK_THROWS_AS(train(m, {}, tc), UserError);

    // single-class data cannot train a discriminator
    auto ds = tiny_dataset(3, 300, 2);
    ds.erase(std::remove_if(ds.begin(), ds.end(),
                            [](const LabeledCloud& c) { return c.label.is_attack(); }),
             ds.end());
    CHECK_THROWS_AS(train(m, ds, tc), UserError);

    auto ok = tiny_dataset(2, 300, 2);
    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(m, ok, bad), UserError);
}

TEST_CASE("predict_score matches forward on the attack column") {
    ModelConfig cfg = small_config(8);
    Model m(cfg);
    m.init_params(19);
    Rng rng(2);
    for (double& v : m.fc2_w.data) v = 0.3 * rng.gaussian();

    synthface::SynthSpec spec;
    spec.kind = cloudio::PaiKind::BonaFide;
    spec.points_per_cloud = 500;
    const auto cloud =
        cloudio::normalize(synthface::generate_cloud(synthface::sample_identity(spec.kind, 0, 6), spec, 1));
    voxel::GridSpec gs;
    gs.resolution = cfg.resolution;
    const voxel::VoxelGrid grid = voxel::voxelize(cloud, gs);
    const double score = m.predict_score(grid);
    CHECK(score >= 0.0);
    CHECK(score <= 1.0);

    Tensor x({1, 1, cfg.resolution, cfg.resolution, cfg.resolution});
    x.data = voxel::grid_to_tensor(grid);
    CHECK(score == m.forward(x).data[1]);

    voxel::GridSpec wrong;
    wrong.resolution = cfg.resolution * 2;
    const voxel::VoxelGrid big = voxel::voxelize(cloud, wrong);
    CHECK_THROWS_AS(m.predict_score(big), UserError);
}

TEST_CASE("config validation catches impossible architectures") {
    ModelConfig bad = small_config();
    bad.resolution = 2;
    CHECK_THROWS_AS(Model{bad}, UserError);
    ModelConfig classes = small_config();
    classes.num_classes = 3;
    CHECK_THROWS_AS(Model{classes}, UserError);
    ModelConfig att = small_config();
    att.attention_out = 10;  // branches would concatenate to 20, not 32
    CHECK_THROWS_AS(Model{att}, UserError);
    CHECK(variant_from_string(variant_to_string(FilterVariant::All5x5)) == FilterVariant::All5x5);
    CHECK_THROWS_AS(variant_from_string("all_9x9"), UserError);
}

TEST_CASE("one_hot_targets") {
    const Tensor t = one_hot_targets({0, 1, 1}, 2);
    REQUIRE(t.shape == std::vector<int>({3, 2}));
    CHECK(t.data == std::vector<double>({1, 0, 0, 1, 0, 1}));
    CHECK_THROWS_AS(one_hot_targets({2}, 2), InternalError);
}
