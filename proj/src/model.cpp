#include "voxatn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "voxatn/rng.hpp"

namespace voxatn::net {

using namespace tengine;

FilterVariant variant_from_string(const std::string& s) {
    if (s == "paper_default") return FilterVariant::PaperDefault;
    if (s == "all_3x3") return FilterVariant::All3x3;
    if (s == "all_5x5") return FilterVariant::All5x5;
    if (s == "all_7x7") return FilterVariant::All7x7;
    throw UserError("unknown filter variant: " + s);
}

std::string variant_to_string(FilterVariant v) {
    switch (v) {
        case FilterVariant::PaperDefault: return "paper_default";
        case FilterVariant::All3x3: return "all_3x3";
        case FilterVariant::All5x5: return "all_5x5";
        case FilterVariant::All7x7: return "all_7x7";
    }
    throw InternalError("unreachable FilterVariant");
}

namespace {

int first_filter_size(FilterVariant v) {
    switch (v) {
        case FilterVariant::PaperDefault: return 5;
        case FilterVariant::All3x3: return 3;
        case FilterVariant::All5x5: return 5;
        case FilterVariant::All7x7: return 7;
    }
    return 5;
}

int rest_filter_size(FilterVariant v) {
    switch (v) {
        case FilterVariant::PaperDefault: return 3;
        case FilterVariant::All3x3: return 3;
        case FilterVariant::All5x5: return 5;
        case FilterVariant::All7x7: return 7;
    }
    return 3;
}

Conv3dGeom geom(int k, int stride) {
    Conv3dGeom g;
    g.kd = g.kh = g.kw = k;
    g.sd = g.sh = g.sw = stride;
    g.pd = g.ph = g.pw = k / 2;
    return g;
}

constexpr int kConv1Filters = 64;
constexpr int kConvFilters = 32;

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xFF51AFD7ED558CCDULL;
    x ^= x >> 33;
    x *= 0xC4CEB9FE1A85EC53ULL;
    x ^= x >> 33;
    return x;
}

}  // namespace

Conv3dGeom ModelConfig::conv1_geom() const { return geom(first_filter_size(filter_variant), 2); }
Conv3dGeom ModelConfig::conv2_geom() const { return geom(rest_filter_size(filter_variant), 1); }
Conv3dGeom ModelConfig::conv3_geom() const { return geom(rest_filter_size(filter_variant), 1); }
Conv3dGeom ModelConfig::tail_geom() const { return geom(rest_filter_size(filter_variant), 1); }

int ModelConfig::feature_res() const {
    const Conv3dGeom g = conv1_geom();
    return conv_out_dim(resolution, g.kd, g.sd, g.pd);
}

int ModelConfig::flattened_size() const {
    const int fr = feature_res();
    return kConvFilters * fr * fr * fr;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.resolution < 4) throw UserError("model resolution must be >= 4");
    if (cfg.num_classes != 2) throw UserError("num_classes must be 2");
    if (cfg.fc_hidden < 1 || cfg.attention_hidden < 1) throw UserError("invalid model config: hidden sizes must be >= 1");
    if (2 * cfg.attention_out != kConvFilters)
        throw UserError("attention branch outputs must concatenate to the channel count (2*attention_out == 32)");

    const int k1 = first_filter_size(cfg.filter_variant);
    const int kr = rest_filter_size(cfg.filter_variant);

    conv1_w = Tensor({kConv1Filters, 1, k1, k1, k1}, true);
    conv1_b = Tensor({kConv1Filters}, true);
    conv2_w = Tensor({kConvFilters, kConv1Filters, kr, kr, kr}, true);
    conv2_b = Tensor({kConvFilters}, true);
    conv3_w = Tensor({kConvFilters, kConvFilters, kr, kr, kr}, true);
    conv3_b = Tensor({kConvFilters}, true);

    att_max_w1 = Tensor({kConvFilters, cfg.attention_hidden}, true);
    att_max_b1 = Tensor({cfg.attention_hidden}, true);
    att_max_w2 = Tensor({cfg.attention_hidden, cfg.attention_out}, true);
    att_max_b2 = Tensor({cfg.attention_out}, true);
    att_avg_w1 = Tensor({kConvFilters, cfg.attention_hidden}, true);
    att_avg_b1 = Tensor({cfg.attention_hidden}, true);
    att_avg_w2 = Tensor({cfg.attention_hidden, cfg.attention_out}, true);
    att_avg_b2 = Tensor({cfg.attention_out}, true);

    tail_w = Tensor({kConvFilters, kConvFilters, kr, kr, kr}, true);
    tail_b = Tensor({kConvFilters}, true);

    fc1_w = Tensor({cfg.flattened_size(), cfg.fc_hidden}, true);
    fc1_b = Tensor({cfg.fc_hidden}, true);
    fc2_w = Tensor({cfg.fc_hidden, cfg.num_classes}, true);
    fc2_b = Tensor({cfg.num_classes}, true);
}

std::vector<Tensor*> Model::parameters() {
    std::vector<Tensor*> p = {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b,
                              &tail_w,  &tail_b,  &fc1_w,   &fc1_b,   &fc2_w,   &fc2_b};
    if (cfg_.attention_enabled) {
        p.insert(p.begin() + 6, {&att_max_w1, &att_max_b1, &att_max_w2, &att_max_b2, &att_avg_w1, &att_avg_b1,
                                 &att_avg_w2, &att_avg_b2});
    }
    return p;
}

std::vector<const Tensor*> Model::parameters() const {
    auto mut = const_cast<Model*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::vector<std::string> Model::parameter_names() const {
    std::vector<std::string> n = {"conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b",
                                  "tail_w",  "tail_b",  "fc1_w",   "fc1_b",   "fc2_w",   "fc2_b"};
    if (cfg_.attention_enabled) {
        n.insert(n.begin() + 6, {"att_max_w1", "att_max_b1", "att_max_w2", "att_max_b2", "att_avg_w1", "att_avg_b1",
                                 "att_avg_w2", "att_avg_b2"});
    }
    return n;
}

long long Model::parameter_count() const {
    long long total = 0;
    for (const Tensor* p : parameters()) total += static_cast<long long>(p->numel());
    return total;
}

void Model::zero_grads() {
    for (Tensor* p : parameters()) p->zero_grad();
}

void Model::init_params(std::uint64_t seed) {
    Rng rng(seed);
    // He init: the sqrt(2) gain compensates the variance the rectifier
    // removes, keeping activation scale roughly constant through the stack
    auto fill = [&](Tensor& t, int fan_in, double gain) {
        const double scale = gain / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data) v = scale * rng.gaussian();
    };
    const double relu_gain = std::sqrt(2.0);
    const int k1 = first_filter_size(cfg_.filter_variant);
    const int kr = rest_filter_size(cfg_.filter_variant);
    fill(conv1_w, k1 * k1 * k1, relu_gain);
    fill(conv2_w, kConv1Filters * kr * kr * kr, relu_gain);
    fill(conv3_w, kConvFilters * kr * kr * kr, relu_gain);
    fill(att_max_w1, kConvFilters, relu_gain);
    fill(att_max_w2, cfg_.attention_hidden, 1.0);  // feeds the sigmoid gate
    fill(att_avg_w1, kConvFilters, relu_gain);
    fill(att_avg_w2, cfg_.attention_hidden, 1.0);
    fill(tail_w, kConvFilters * kr * kr * kr, relu_gain);
    fill(fc1_w, cfg_.flattened_size(), relu_gain);
    for (Tensor* b : {&conv1_b, &conv2_b, &conv3_b, &att_max_b1, &att_max_b2, &att_avg_b1, &att_avg_b2, &tail_b,
                      &fc1_b})
        std::fill(b->data.begin(), b->data.end(), 0.0);
    // symmetric logits from a fresh model: score exactly 0.5
    std::fill(fc2_w.data.begin(), fc2_w.data.end(), 0.0);
    std::fill(fc2_b.data.begin(), fc2_b.data.end(), 0.0);
}

Tensor Model::forward(const Tensor& input, ForwardCache& cache) const {
    if (input.rank() != 5 || input.dim(1) != 1 || input.dim(2) != cfg_.resolution || input.dim(3) != cfg_.resolution ||
        input.dim(4) != cfg_.resolution)
        throw UserError("model input must be [N,1," + std::to_string(cfg_.resolution) + "^3], got " +
                        shape_string(input.shape));

    cache.input = input;
    cache.c1 = conv3d_forward(input, conv1_w, conv1_b, cfg_.conv1_geom());
    cache.r1 = leaky_relu_forward(cache.c1, cfg_.leaky_slope);
    cache.c2 = conv3d_forward(cache.r1, conv2_w, conv2_b, cfg_.conv2_geom());
    cache.r2 = leaky_relu_forward(cache.c2, cfg_.leaky_slope);
    cache.c3 = conv3d_forward(cache.r2, conv3_w, conv3_b, cfg_.conv3_geom());
    cache.r3 = leaky_relu_forward(cache.c3, cfg_.leaky_slope);

    const Tensor* tail_in = &cache.r3;
    if (cfg_.attention_enabled) {
        cache.gmax = global_pool_forward(cache.r3, PoolMode::Max);
        cache.m1 = fully_connected_forward(cache.gmax, att_max_w1, att_max_b1);
        cache.mr = leaky_relu_forward(cache.m1, 0.0);
        cache.m2 = fully_connected_forward(cache.mr, att_max_w2, att_max_b2);

        cache.gavg = global_pool_forward(cache.r3, PoolMode::Avg);
        cache.a1 = fully_connected_forward(cache.gavg, att_avg_w1, att_avg_b1);
        cache.ar = leaky_relu_forward(cache.a1, 0.0);
        cache.a2 = fully_connected_forward(cache.ar, att_avg_w2, att_avg_b2);

        cache.cat = concat_forward(cache.m2, cache.a2);
        cache.gate = sigmoid_forward(cache.cat);
        cache.gated = multiply_broadcast_forward(cache.gate, cache.r3);
        tail_in = &cache.gated;
    }

    cache.t = conv3d_forward(*tail_in, tail_w, tail_b, cfg_.tail_geom());
    cache.rt = leaky_relu_forward(cache.t, cfg_.leaky_slope);
    cache.flat = flatten_forward(cache.rt);
    cache.f1 = fully_connected_forward(cache.flat, fc1_w, fc1_b);
    cache.rf1 = leaky_relu_forward(cache.f1, cfg_.leaky_slope);
    cache.logits = fully_connected_forward(cache.rf1, fc2_w, fc2_b);
    cache.probs = softmax_forward(cache.logits);
    check_finite(cache.probs, "model forward output");
    return cache.probs;
}

Tensor Model::forward(const Tensor& input) const {
    ForwardCache cache;
    return forward(input, cache);
}

void Model::backward(const ForwardCache& cache, const Tensor& upstream_probs_grad) {
    Tensor d_logits = softmax_backward(upstream_probs_grad, cache.probs);

    Tensor d_rf1, wg, bg;
    fully_connected_backward(d_logits, cache.rf1, fc2_w, d_rf1, wg, bg);
    accumulate(fc2_w, wg);
    accumulate(fc2_b, bg);

    Tensor d_f1 = leaky_relu_backward(d_rf1, cache.f1, cfg_.leaky_slope);
    Tensor d_flat;
    fully_connected_backward(d_f1, cache.flat, fc1_w, d_flat, wg, bg);
    accumulate(fc1_w, wg);
    accumulate(fc1_b, bg);

    Tensor d_rt = d_flat;
    d_rt.shape = cache.rt.shape;  // un-flatten
    Tensor d_t = leaky_relu_backward(d_rt, cache.t, cfg_.leaky_slope);

    const Tensor& tail_in = cfg_.attention_enabled ? cache.gated : cache.r3;
    Tensor d_tail_in;
    conv3d_backward(d_t, tail_in, tail_w, cfg_.tail_geom(), &d_tail_in, wg, bg);
    accumulate(tail_w, wg);
    accumulate(tail_b, bg);

    Tensor d_r3;
    if (cfg_.attention_enabled) {
        Tensor d_gate, d_skip;
        multiply_broadcast_backward(d_tail_in, cache.gate, cache.r3, d_gate, d_skip);
        Tensor d_cat = sigmoid_backward(d_gate, cache.gate);
        Tensor d_m2, d_a2;
        concat_backward(d_cat, cfg_.attention_out, d_m2, d_a2);

        Tensor d_mr;
        fully_connected_backward(d_m2, cache.mr, att_max_w2, d_mr, wg, bg);
        accumulate(att_max_w2, wg);
        accumulate(att_max_b2, bg);
        Tensor d_m1 = leaky_relu_backward(d_mr, cache.m1, 0.0);
        Tensor d_gmax;
        fully_connected_backward(d_m1, cache.gmax, att_max_w1, d_gmax, wg, bg);
        accumulate(att_max_w1, wg);
        accumulate(att_max_b1, bg);

        Tensor d_ar;
        fully_connected_backward(d_a2, cache.ar, att_avg_w2, d_ar, wg, bg);
        accumulate(att_avg_w2, wg);
        accumulate(att_avg_b2, bg);
        Tensor d_a1 = leaky_relu_backward(d_ar, cache.a1, 0.0);
        Tensor d_gavg;
        fully_connected_backward(d_a1, cache.gavg, att_avg_w1, d_gavg, wg, bg);
        accumulate(att_avg_w1, wg);
        accumulate(att_avg_b1, bg);

        Tensor d_from_max = global_pool_backward(d_gmax, cache.r3, PoolMode::Max);
        Tensor d_from_avg = global_pool_backward(d_gavg, cache.r3, PoolMode::Avg);
        d_r3 = d_skip;
        for (std::size_t i = 0; i < d_r3.data.size(); ++i)
            d_r3.data[i] += d_from_max.data[i] + d_from_avg.data[i];
    } else {
        d_r3 = d_tail_in;
    }

    Tensor d_c3 = leaky_relu_backward(d_r3, cache.c3, cfg_.leaky_slope);
    Tensor d_r2;
    conv3d_backward(d_c3, cache.r2, conv3_w, cfg_.conv3_geom(), &d_r2, wg, bg);
    accumulate(conv3_w, wg);
    accumulate(conv3_b, bg);

    Tensor d_c2 = leaky_relu_backward(d_r2, cache.c2, cfg_.leaky_slope);
    Tensor d_r1;
    conv3d_backward(d_c2, cache.r1, conv2_w, cfg_.conv2_geom(), &d_r1, wg, bg);
    accumulate(conv2_w, wg);
    accumulate(conv2_b, bg);

    Tensor d_c1 = leaky_relu_backward(d_r1, cache.c1, cfg_.leaky_slope);
    // no gradient needed with respect to the voxel input itself
    conv3d_backward(d_c1, cache.input, conv1_w, cfg_.conv1_geom(), nullptr, wg, bg);
    accumulate(conv1_w, wg);
    accumulate(conv1_b, bg);
}

void Model::accumulate(Tensor& param, const Tensor& g) {
    if (!param.requires_grad) return;
    if (param.grad.size() != g.data.size()) throw InternalError("gradient accumulation length mismatch");
    for (std::size_t i = 0; i < g.data.size(); ++i) param.grad[i] += g.data[i];
}

double Model::predict_score(const voxel::VoxelGrid& grid) const {
    if (grid.res() != cfg_.resolution)
        throw UserError("grid resolution " + std::to_string(grid.res()) + " does not match model resolution " +
                        std::to_string(cfg_.resolution));
    Tensor input({1, 1, cfg_.resolution, cfg_.resolution, cfg_.resolution});
    input.data = voxel::grid_to_tensor(grid);
    Tensor probs = forward(input);
    return probs.data[1];  // attack class
}

namespace {

std::string geom_line(const char* name, const Conv3dGeom& g, int filters) {
    std::ostringstream ss;
    ss << name << " k=" << g.kd << "x" << g.kh << "x" << g.kw << " f=" << filters << " s=" << g.sd << "x" << g.sh
       << "x" << g.sw << " p=" << g.pd << "x" << g.ph << "x" << g.pw;
    return ss.str();
}

}  // namespace

std::vector<std::string> Model::layer_manifest() const {
    std::ostringstream slope;
    slope << cfg_.leaky_slope;
    std::vector<std::string> m;
    m.push_back(geom_line("conv3d", cfg_.conv1_geom(), kConv1Filters));
    m.push_back("leaky_relu slope=" + slope.str());
    m.push_back(geom_line("conv3d", cfg_.conv2_geom(), kConvFilters));
    m.push_back("leaky_relu slope=" + slope.str());
    m.push_back(geom_line("conv3d", cfg_.conv3_geom(), kConvFilters));
    m.push_back("leaky_relu slope=" + slope.str());
    if (cfg_.attention_enabled) {
        const std::string h = std::to_string(cfg_.attention_hidden);
        const std::string o = std::to_string(cfg_.attention_out);
        m.push_back("global_max_pool");
        m.push_back("fully_connected in=32 out=" + h);
        m.push_back("relu");
        m.push_back("fully_connected in=" + h + " out=" + o);
        m.push_back("global_avg_pool");
        m.push_back("fully_connected in=32 out=" + h);
        m.push_back("relu");
        m.push_back("fully_connected in=" + h + " out=" + o);
        m.push_back("concat");
        m.push_back("sigmoid");
        m.push_back("multiply");
    }
    m.push_back(geom_line("conv3d", cfg_.tail_geom(), kConvFilters));
    m.push_back("leaky_relu slope=" + slope.str());
    m.push_back("flatten");
    m.push_back("fully_connected in=" + std::to_string(cfg_.flattened_size()) + " out=" +
                std::to_string(cfg_.fc_hidden));
    m.push_back("leaky_relu slope=" + slope.str());
    m.push_back("fully_connected in=" + std::to_string(cfg_.fc_hidden) + " out=" + std::to_string(cfg_.num_classes));
    m.push_back("softmax");
    return m;
}

std::string Model::summary() const {
    const int r = cfg_.resolution;
    const int fr = cfg_.feature_res();
    std::ostringstream ss;
    ss << "VoxAtnNet model summary\n";
    ss << "variant: " << variant_to_string(cfg_.filter_variant) << ", attention: "
       << (cfg_.attention_enabled ? "on" : "off") << ", input: [N,1," << r << "," << r << "," << r << "]\n";
    const std::vector<std::string> manifest = layer_manifest();
    ss << "layers: " << manifest.size() << "\n";

    auto vol = [&](int ch) {
        return "[N," + std::to_string(ch) + "," + std::to_string(fr) + "," + std::to_string(fr) + "," +
               std::to_string(fr) + "]";
    };
    std::vector<std::string> shapes;
    shapes.push_back(vol(64));  // conv1
    shapes.push_back(vol(64));
    shapes.push_back(vol(32));  // conv2
    shapes.push_back(vol(32));
    shapes.push_back(vol(32));  // conv3
    shapes.push_back(vol(32));
    if (cfg_.attention_enabled) {
        const std::string h = "[N," + std::to_string(cfg_.attention_hidden) + "]";
        const std::string o = "[N," + std::to_string(cfg_.attention_out) + "]";
        for (const std::string& s : {std::string("[N,32]"), h, h, o, std::string("[N,32]"), h, h, o,
                                     std::string("[N,32]"), std::string("[N,32]"), vol(32)})
            shapes.push_back(s);
    }
    shapes.push_back(vol(32));  // tail
    shapes.push_back(vol(32));
    shapes.push_back("[N," + std::to_string(cfg_.flattened_size()) + "]");
    shapes.push_back("[N," + std::to_string(cfg_.fc_hidden) + "]");
    shapes.push_back("[N," + std::to_string(cfg_.fc_hidden) + "]");
    shapes.push_back("[N,2]");
    shapes.push_back("[N,2]");

    for (std::size_t i = 0; i < manifest.size(); ++i)
        ss << "  " << i + 1 << ". " << manifest[i] << "  ->  " << shapes[i] << "\n";
    ss << "learnable parameters: " << parameter_count() << "\n";
    ss << "(fc_hidden=" << cfg_.fc_hidden << " sizes the first fully connected layer so the default"
       << " 64^3 model totals ~35.7M parameters)\n";
    return ss.str();
}

void Model::save(std::ostream& out) const {
    char slope_buf[40];
    std::snprintf(slope_buf, sizeof(slope_buf), "%.17g", cfg_.leaky_slope);
    out << "VXM1\n";
    out << "resolution " << cfg_.resolution << "\n";
    out << "variant " << variant_to_string(cfg_.filter_variant) << "\n";
    out << "attention " << (cfg_.attention_enabled ? 1 : 0) << "\n";
    out << "attention_hidden " << cfg_.attention_hidden << "\n";
    out << "attention_out " << cfg_.attention_out << "\n";
    out << "fc_hidden " << cfg_.fc_hidden << "\n";
    out << "num_classes " << cfg_.num_classes << "\n";
    out << "leaky_slope " << slope_buf << "\n";
    const std::vector<std::string> manifest = layer_manifest();
    out << "layers " << manifest.size() << "\n";
    for (const std::string& line : manifest) out << line << "\n";
    out << "end_header\n";

    for (const Tensor* p : parameters()) {
        const std::uint64_t n = p->data.size();
        out.write(reinterpret_cast<const char*>(&n), sizeof(n));
        out.write(reinterpret_cast<const char*>(p->data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    }
}

void Model::save_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UserError("cannot open " + path + " for writing");
    save(f);
}

Model Model::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "VXM1") throw UserError("checkpoint: missing VXM1 magic");

    ModelConfig cfg;
    long declared_layers = -1;
    while (std::getline(in, line)) {
        if (line == "end_header") break;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "resolution") ss >> cfg.resolution;
        else if (key == "variant") {
            std::string v;
            ss >> v;
            cfg.filter_variant = variant_from_string(v);
        } else if (key == "attention") {
            int a = 1;
            ss >> a;
            cfg.attention_enabled = (a != 0);
        } else if (key == "attention_hidden") ss >> cfg.attention_hidden;
        else if (key == "attention_out") ss >> cfg.attention_out;
        else if (key == "fc_hidden") ss >> cfg.fc_hidden;
        else if (key == "num_classes") ss >> cfg.num_classes;
        else if (key == "leaky_slope") ss >> cfg.leaky_slope;
        else if (key == "layers") {
            ss >> declared_layers;
            for (long i = 0; i < declared_layers; ++i)
                if (!std::getline(in, line)) throw UserError("checkpoint: truncated layer manifest");
        } else throw UserError("checkpoint: unknown header key '" + key + "'");
    }

    Model model(cfg);
    if (declared_layers >= 0 && declared_layers != static_cast<long>(model.layer_manifest().size()))
        throw UserError("checkpoint: layer manifest length disagrees with config");

    for (Tensor* p : model.parameters()) {
        std::uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (!in || n != p->data.size())
            throw UserError("checkpoint: parameter length " + std::to_string(n) + " does not match expected " +
                            std::to_string(p->data.size()));
        in.read(reinterpret_cast<char*>(p->data.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw UserError("checkpoint: truncated parameter data");
    }
    return model;
}

Model Model::load_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UserError("cannot open checkpoint " + path);
    return load(f);
}

Model Model::load_file_checked(const std::string& path, const ModelConfig& expected) {
    Model m = load_file(path);
    const ModelConfig& c = m.config();
    if (c.resolution != expected.resolution || c.filter_variant != expected.filter_variant ||
        c.attention_enabled != expected.attention_enabled || c.attention_hidden != expected.attention_hidden ||
        c.fc_hidden != expected.fc_hidden || c.num_classes != expected.num_classes)
        throw UserError("checkpoint " + path + " does not match the requested model config");
    return m;
}

Tensor one_hot_targets(const std::vector<int>& labels, int num_classes) {
    Tensor t({static_cast<int>(labels.size()), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) throw InternalError("label out of range");
        t.data[i * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return t;
}

std::vector<double> train(Model& model, const std::vector<LabeledCloud>& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw UserError("training dataset is empty");
    bool has_bona = false, has_attack = false;
    for (const LabeledCloud& s : dataset) (s.label.is_attack() ? has_attack : has_bona) = true;
    if (!has_bona || !has_attack)
        throw UserError(std::string("training dataset contains only ") + (has_bona ? "bona fide" : "attack") +
                        " samples");
    if (cfg.batch_size < 1 || cfg.epochs < 1) throw UserError("invalid train config");

    const int r = model.config().resolution;
    voxel::GridSpec gspec;
    gspec.resolution = r;

    SgdmState opt;
    opt.learning_rate = cfg.learning_rate;
    opt.momentum = cfg.momentum;
    std::vector<Tensor*> params = model.parameters();
    opt.init(params);

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // voxelized augmented copies for this epoch
        std::vector<voxel::VoxelGrid> grids;
        std::vector<int> labels;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            cloudio::AugmentSpec aspec = cfg.augment;
            aspec.rng_seed = mix64(cfg.rng_seed + mix64(static_cast<std::uint64_t>(epoch) * 0x10001ULL + i));
            for (const cloudio::PointCloud& copy : cloudio::augment(dataset[i].cloud, aspec)) {
                grids.push_back(voxel::voxelize(copy, gspec));
                labels.push_back(dataset[i].label.is_attack() ? 1 : 0);
            }
        }

        std::vector<std::size_t> order(grids.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(mix64(cfg.rng_seed ^ (0xE9C0DE ^ static_cast<std::uint64_t>(epoch))));
        shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        int batches = 0;
        const std::size_t vol = static_cast<std::size_t>(r) * r * r;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const int b = static_cast<int>(end - start);

            Tensor input({b, 1, r, r, r});
            std::vector<int> batch_labels(static_cast<std::size_t>(b));
            for (int s = 0; s < b; ++s) {
                const voxel::VoxelGrid& grid = grids[order[start + s]];
                double* dst = input.data.data() + static_cast<std::size_t>(s) * vol;
                for (std::size_t v = 0; v < vol; ++v) dst[v] = grid.occupancy[v] ? 1.0 : 0.0;
                batch_labels[static_cast<std::size_t>(s)] = labels[order[start + s]];
            }
            Tensor targets = one_hot_targets(batch_labels, model.config().num_classes);

            ForwardCache cache;
            Tensor probs = model.forward(input, cache);
            const double loss = cross_entropy_loss(probs, targets);
            if (!std::isfinite(loss))
                throw InternalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches));
            model.zero_grads();
            model.backward(cache, cross_entropy_backward(probs, targets));
            sgdm_step(params, opt);

            loss_sum += loss;
            ++batches;
        }
        history.push_back(loss_sum / static_cast<double>(batches));
    }
    return history;
}

}  // namespace voxatn::net
