#include "voxatn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "voxatn/rng.hpp"

namespace fs = std::filesystem;

namespace voxatn::cli {

using namespace tengine;

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream f(path);
    if (!f) throw UserError("cannot open " + path + " for writing");
    f << "path,class,identity,session\n";
    for (const ManifestEntry& e : entries)
        f << e.path << "," << cloudio::pai_to_string(e.kind) << "," << e.identity << "," << e.session << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UserError("cannot open manifest " + path);
    std::string line;
    if (!std::getline(f, line) || line != "path,class,identity,session")
        throw UserError("manifest " + path + ": bad header");
    std::vector<ManifestEntry> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestEntry e;
        std::string kind, session;
        if (!std::getline(ss, e.path, ',') || !std::getline(ss, kind, ',') || !std::getline(ss, e.identity, ',') ||
            !std::getline(ss, session, ','))
            throw UserError("manifest " + path + ": short row '" + line + "'");
        e.kind = cloudio::pai_from_string(kind);
        e.session = std::stoi(session);
        out.push_back(e);
    }
    if (out.empty()) throw UserError("manifest " + path + " lists no samples");
    return out;
}

std::string run_synth(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::vector<cloudio::PointCloud> clouds = synthface::generate_dataset(cfg.data);

    std::vector<ManifestEntry> entries;
    std::map<std::string, int> session_counter;
    for (const cloudio::PointCloud& cloud : clouds) {
        ManifestEntry e;
        e.kind = cloud.label.kind;
        e.identity = cloud.identity;
        e.session = session_counter[cloud.identity]++;
        char name[128];
        std::snprintf(name, sizeof(name), "%s_%s_%02d.ply", cloudio::pai_to_string(e.kind).c_str(),
                      e.identity.c_str(), e.session);
        e.path = (fs::path(out_dir) / name).string();
        cloudio::write_ply_file(e.path, cloud);
        entries.push_back(e);
    }

    const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
    write_manifest(manifest_path, entries);
    std::ofstream echo((fs::path(out_dir) / "resolved_config.ini").string());
    echo << echo_config(cfg);
    return manifest_path;
}

LoadedDataset load_dataset(const std::string& manifest_path) {
    LoadedDataset data;
    for (const ManifestEntry& e : read_manifest(manifest_path)) {
        cloudio::PointCloud cloud = cloudio::parse_ply_file(e.path);
        cloud.label.kind = e.kind;
        cloud.identity = e.identity;
        data.clouds.push_back({cloudio::normalize(cloud), cloud.label});
        data.metas.push_back({cloud.label, cloud.identity});
    }
    return data;
}

TrainOutputs run_train(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const LoadedDataset data = load_dataset(manifest_path);
    const padeval::Split split = padeval::split_protocol(data.metas, cfg.protocol, cfg.split_seed);

    std::vector<net::LabeledCloud> train_set;
    train_set.reserve(split.train.size());
    for (std::size_t i : split.train) train_set.push_back(data.clouds[i]);

    net::Model model(cfg.model);
    model.init_params(cfg.train.rng_seed);
    TrainOutputs out;
    out.loss_history = net::train(model, train_set, cfg.train);

    out.checkpoint_path = (fs::path(out_dir) / "checkpoint.vxm1").string();
    model.save_file(out.checkpoint_path);

    out.loss_csv_path = (fs::path(out_dir) / "loss_history.csv").string();
    {
        std::ofstream f(out.loss_csv_path);
        f << "epoch,mean_loss\n";
        char buf[64];
        for (std::size_t e = 0; e < out.loss_history.size(); ++e) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e, out.loss_history[e]);
            f << buf;
        }
    }
    out.summary_path = (fs::path(out_dir) / "model_summary.txt").string();
    {
        std::ofstream f(out.summary_path);
        f << model.summary();
    }
    std::ofstream echo((fs::path(out_dir) / "resolved_config.ini").string());
    echo << echo_config(cfg);
    return out;
}

padeval::ScoreSet score_test_split(const net::Model& model, const LoadedDataset& data,
                                   const padeval::ProtocolSpec& protocol, std::uint64_t split_seed) {
    const padeval::Split split = padeval::split_protocol(data.metas, protocol, split_seed);
    voxel::GridSpec gspec;
    gspec.resolution = model.config().resolution;

    padeval::ScoreSet scores;
    for (std::size_t i : split.test) {
        const net::LabeledCloud& s = data.clouds[i];
        const double score = model.predict_score(voxel::voxelize(s.cloud, gspec));
        scores.entries.push_back({score, s.label, data.metas[i].identity});
    }
    return scores;
}

namespace {

std::string protocol_name(const padeval::ProtocolSpec& p) {
    auto side = [](const std::vector<cloudio::PaiKind>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "+" : "") + cloudio::pai_to_string(v[i]);
        return s;
    };
    return padeval::mode_to_string(p.mode) + " (" + side(p.train_pai) + "->" + side(p.test_pai) + ")";
}

}  // namespace

EvalOutputs run_eval(const RunConfig& cfg, const std::string& manifest_path, const std::string& checkpoint_path,
                     const std::string& out_dir) {
    fs::create_directories(out_dir);
    const net::Model model = net::Model::load_file_checked(checkpoint_path, cfg.model);
    const LoadedDataset data = load_dataset(manifest_path);

    const padeval::ScoreSet scores = score_test_split(model, data, cfg.protocol, cfg.split_seed);
    EvalOutputs out;
    out.report = padeval::evaluate(scores);

    out.report_path = (fs::path(out_dir) / "report.txt").string();
    {
        std::ofstream f(out.report_path);
        f << padeval::report_text(protocol_name(cfg.protocol), out.report);
    }
    out.det_csv_path = (fs::path(out_dir) / "det.csv").string();
    {
        std::ofstream f(out.det_csv_path);
        padeval::write_det_csv(f, out.report.det_points);
    }
    std::ofstream echo((fs::path(out_dir) / "resolved_config.ini").string());
    echo << echo_config(cfg);
    return out;
}

std::vector<AblationRow> run_ablate(const RunConfig& cfg, const std::string& manifest_path,
                                    const std::string& out_dir) {
    fs::create_directories(out_dir);
    const LoadedDataset data = load_dataset(manifest_path);
    const padeval::Split split = padeval::split_protocol(data.metas, cfg.protocol, cfg.split_seed);
    std::vector<net::LabeledCloud> train_set;
    for (std::size_t i : split.train) train_set.push_back(data.clouds[i]);

    std::vector<AblationRow> rows;
    for (net::FilterVariant variant : {net::FilterVariant::All3x3, net::FilterVariant::All5x5,
                                       net::FilterVariant::All7x7, net::FilterVariant::PaperDefault}) {
        for (bool attention : {true, false}) {
            net::ModelConfig mc = cfg.model;
            mc.filter_variant = variant;
            mc.attention_enabled = attention;

            net::Model model(mc);
            model.init_params(cfg.train.rng_seed);
            net::train(model, train_set, cfg.train);

            const padeval::ScoreSet scores = score_test_split(model, data, cfg.protocol, cfg.split_seed);
            const padeval::EvalReport rep = padeval::evaluate(scores);
            rows.push_back({net::variant_to_string(variant), attention, model.parameter_count(), rep.d_eer,
                            rep.bpcer_at_apcer_10, rep.bpcer_at_apcer_5});
        }
    }

    std::ofstream f((fs::path(out_dir) / "ablation.txt").string());
    f << ablation_table(rows);
    std::ofstream echo((fs::path(out_dir) / "resolved_config.ini").string());
    echo << echo_config(cfg);
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream ss;
    ss << "Variant         Attention   Parameters    D-EER (%)   BPCER@10%   BPCER@5%\n";
    char buf[160];
    for (const AblationRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-15s %-9s %12lld   %9.2f   %9.2f   %8.2f\n", r.variant.c_str(),
                      r.attention ? "on" : "off", r.parameter_count, r.d_eer, r.bpcer10, r.bpcer5);
        ss << buf;
    }
    return ss.str();
}

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.gaussian();
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

// max relative error between an analytic gradient tensor and central
// differences of loss() over every coordinate of x
template <typename LossFn>
double fd_check(Tensor& x, const Tensor& analytic, LossFn loss, double eps) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double saved = x.data[i];
        x.data[i] = saved + eps;
        const double plus = loss();
        x.data[i] = saved - eps;
        const double minus = loss();
        x.data[i] = saved;
        worst = std::max(worst, relative_error(analytic.data[i], (plus - minus) / (2.0 * eps)));
    }
    return worst;
}

}  // namespace

std::vector<GradCheckEntry> op_gradient_checks(std::uint64_t seed, bool corrupt_backward) {
    Rng rng(seed);
    const double eps = 1e-5;
    std::vector<GradCheckEntry> entries;

    auto add = [&](const std::string& name, std::size_t coords, double err) {
        if (corrupt_backward) err += 0.05;  // negative-control fixture
        entries.push_back({name, coords, err});
    };

    {  // conv3d: input, weights, bias
        Conv3dGeom g;
        g.kd = g.kh = g.kw = 3;
        g.sd = g.sh = g.sw = 2;
        g.pd = g.ph = g.pw = 1;
        Tensor x = random_tensor({1, 2, 5, 5, 5}, rng);
        Tensor w = random_tensor({3, 2, 3, 3, 3}, rng, 0.5);
        Tensor b = random_tensor({3}, rng, 0.5);
        Tensor pi = random_tensor(conv3d_forward(x, w, b, g).shape, rng);
        auto loss = [&]() { return dot(conv3d_forward(x, w, b, g), pi); };
        Tensor xg, wg, bg;
        conv3d_backward(pi, x, w, g, &xg, wg, bg);
        add("conv3d_input", x.data.size(), fd_check(x, xg, loss, eps));
        add("conv3d_weights", w.data.size(), fd_check(w, wg, loss, eps));
        add("conv3d_bias", b.data.size(), fd_check(b, bg, loss, eps));
    }
    {  // leaky relu, inputs nudged off the kink
        Tensor x = random_tensor({2, 3, 2, 2, 2}, rng);
        for (double& v : x.data)
            if (std::abs(v) < 1e-3) v += v < 0 ? -1e-3 : 1e-3;
        Tensor pi = random_tensor(x.shape, rng);
        auto loss = [&]() { return dot(leaky_relu_forward(x, 0.01), pi); };
        Tensor xg = leaky_relu_backward(pi, x, 0.01);
        add("leaky_relu", x.data.size(), fd_check(x, xg, loss, eps));
    }
    {  // global pools
        Tensor x = random_tensor({2, 3, 3, 3, 3}, rng);
        for (PoolMode mode : {PoolMode::Max, PoolMode::Avg}) {
            Tensor pi = random_tensor({2, 3}, rng);
            auto loss = [&]() { return dot(global_pool_forward(x, mode), pi); };
            Tensor xg = global_pool_backward(pi, x, mode);
            add(mode == PoolMode::Max ? "global_max_pool" : "global_avg_pool", x.data.size(),
                fd_check(x, xg, loss, eps));
        }
    }
    {  // fully connected
        Tensor x = random_tensor({3, 6}, rng);
        Tensor w = random_tensor({6, 4}, rng, 0.5);
        Tensor b = random_tensor({4}, rng, 0.5);
        Tensor pi = random_tensor({3, 4}, rng);
        auto loss = [&]() { return dot(fully_connected_forward(x, w, b), pi); };
        Tensor xg, wg, bg;
        fully_connected_backward(pi, x, w, xg, wg, bg);
        add("fully_connected_input", x.data.size(), fd_check(x, xg, loss, eps));
        add("fully_connected_weights", w.data.size(), fd_check(w, wg, loss, eps));
        add("fully_connected_bias", b.data.size(), fd_check(b, bg, loss, eps));
    }
    {  // sigmoid
        Tensor x = random_tensor({4, 5}, rng);
        Tensor pi = random_tensor({4, 5}, rng);
        auto loss = [&]() { return dot(sigmoid_forward(x), pi); };
        Tensor xg = sigmoid_backward(pi, sigmoid_forward(x));
        add("sigmoid", x.data.size(), fd_check(x, xg, loss, eps));
    }
    {  // softmax
        Tensor x = random_tensor({4, 3}, rng);
        Tensor pi = random_tensor({4, 3}, rng);
        auto loss = [&]() { return dot(softmax_forward(x), pi); };
        Tensor xg = softmax_backward(pi, softmax_forward(x));
        add("softmax", x.data.size(), fd_check(x, xg, loss, eps));
    }
    {  // concat
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 2}, rng);
        Tensor pi = random_tensor({3, 6}, rng);
        auto loss = [&]() { return dot(concat_forward(a, b), pi); };
        Tensor ag, bg;
        concat_backward(pi, 4, ag, bg);
        add("concat_a", a.data.size(), fd_check(a, ag, loss, eps));
        add("concat_b", b.data.size(), fd_check(b, bg, loss, eps));
    }
    {  // multiply broadcast
        Tensor gate = random_tensor({2, 3}, rng);
        Tensor act = random_tensor({2, 3, 2, 2, 2}, rng);
        Tensor pi = random_tensor(act.shape, rng);
        auto loss = [&]() { return dot(multiply_broadcast_forward(gate, act), pi); };
        Tensor gg, ag;
        multiply_broadcast_backward(pi, gate, act, gg, ag);
        add("multiply_gate", gate.data.size(), fd_check(gate, gg, loss, eps));
        add("multiply_activations", act.data.size(), fd_check(act, ag, loss, eps));
    }
    {  // softmax + cross-entropy, gradient taken at the logits
        Tensor logits = random_tensor({4, 2}, rng);
        Tensor targets({4, 2});
        for (int r = 0; r < 4; ++r) targets.data[static_cast<std::size_t>(r) * 2 + (r % 2)] = 1.0;
        auto loss = [&]() { return cross_entropy_loss(softmax_forward(logits), targets); };
        Tensor probs = softmax_forward(logits);
        Tensor xg = softmax_backward(cross_entropy_backward(probs, targets), probs);
        add("softmax_cross_entropy", logits.data.size(), fd_check(logits, xg, loss, eps));
    }
    return entries;
}

GradCheckReport composed_gradient_check(std::uint64_t seed, bool corrupt_backward) {
    net::ModelConfig mc;
    mc.resolution = 16;
    net::Model model(mc);
    model.init_params(seed);

    // the final layer is zero-initialized by default, which would zero out
    // every upstream gradient; randomize it for a meaningful check
    Rng rng(seed ^ 0xF00D);
    for (double& v : model.fc2_w.data) v = 0.3 * rng.gaussian();
    for (double& v : model.fc2_b.data) v = 0.1 * rng.gaussian();

    Tensor input({1, 1, 16, 16, 16});
    for (double& v : input.data) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
    Tensor targets = net::one_hot_targets({1}, 2);

    // epsilon 1e-6: small enough that leaky-relu kink crossings (a bias step
    // shifts a whole channel) stay under tolerance, large enough for f64
    GradCheckReport report = gradient_check(model, input, targets, 1e-6, 11, seed ^ 0xBEEF);
    if (corrupt_backward) {
        for (GradCheckEntry& e : report.entries) e.max_rel_err += 0.05;
        report.max_rel_err += 0.05;
    }
    return report;
}

}  // namespace voxatn::cli
