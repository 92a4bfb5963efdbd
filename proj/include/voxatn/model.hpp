#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxatn/cloudio.hpp"
#include "voxatn/ops.hpp"
#include "voxatn/voxel.hpp"

namespace voxatn::net {

using tengine::Conv3dGeom;
using tengine::Tensor;

enum class FilterVariant { PaperDefault, All3x3, All5x5, All7x7 };

FilterVariant variant_from_string(const std::string& s);
std::string variant_to_string(FilterVariant v);

struct ModelConfig {
    int resolution = 64;  // input grid edge
    FilterVariant filter_variant = FilterVariant::PaperDefault;
    bool attention_enabled = true;
    int attention_hidden = 16;  // hidden width of each pooling branch
    int attention_out = 16;     // per-branch output; the two branches concatenate to 32
    int fc_hidden = 34;         // sized so the default model lands near the published 35.7M total
    int num_classes = 2;
    double leaky_slope = 0.01;

    Conv3dGeom conv1_geom() const;  // 64 filters, stride 2
    Conv3dGeom conv2_geom() const;  // 32 filters, stride 1
    Conv3dGeom conv3_geom() const;
    Conv3dGeom tail_geom() const;
    int feature_res() const;       // spatial edge after conv1
    int flattened_size() const;    // 32 * feature_res()^3
};

// Activations cached by a forward pass, consumed by backward.
struct ForwardCache {
    Tensor input;
    Tensor c1, r1, c2, r2, c3, r3;
    Tensor gmax, m1, mr, m2;
    Tensor gavg, a1, ar, a2;
    Tensor cat, gate, gated;
    Tensor t, rt, flat;
    Tensor f1, rf1, logits, probs;
};

class Model {
public:
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    // Seeded Gaussian init scaled by fan-in; the final classifier layer is
    // zero-initialized so a fresh model scores exactly 0.5.
    void init_params(std::uint64_t seed);

    Tensor forward(const Tensor& input) const;             // [N,1,R,R,R] -> probs [N,2]
    Tensor forward(const Tensor& input, ForwardCache& cache) const;
    void backward(const ForwardCache& cache, const Tensor& upstream_probs_grad);

    // class index 1 = attack
    double predict_score(const voxel::VoxelGrid& grid) const;

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::vector<std::string> parameter_names() const;
    long long parameter_count() const;

    void zero_grads();

    std::vector<std::string> layer_manifest() const;
    std::string summary() const;  // manifest + per-layer output shapes + parameter count

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Model load(std::istream& in);
    static Model load_file(const std::string& path);
    static Model load_file_checked(const std::string& path, const ModelConfig& expected);

    // parameter tensors, fixed manifest order
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor conv3_w, conv3_b;
    Tensor att_max_w1, att_max_b1, att_max_w2, att_max_b2;
    Tensor att_avg_w1, att_avg_b1, att_avg_w2, att_avg_b2;
    Tensor tail_w, tail_b;
    Tensor fc1_w, fc1_b;
    Tensor fc2_w, fc2_b;

private:
    static void accumulate(Tensor& param, const Tensor& g);

    ModelConfig cfg_;
};

struct TrainConfig {
    int batch_size = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int epochs = 30;
    cloudio::AugmentSpec augment;
    std::uint64_t rng_seed = 0;
};

struct LabeledCloud {
    cloudio::PointCloud cloud;  // normalized space
    cloudio::ClassLabel label;
};

// SGDM over shuffled mini-batches of augmented, voxelized clouds.
// Returns the mean batch loss per epoch.
std::vector<double> train(Model& model, const std::vector<LabeledCloud>& dataset, const TrainConfig& cfg);

Tensor one_hot_targets(const std::vector<int>& labels, int num_classes);

}  // namespace voxatn::net
