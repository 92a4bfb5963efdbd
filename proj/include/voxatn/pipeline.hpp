#pragma once

#include <string>
#include <vector>

#include "voxatn/config.hpp"
#include "voxatn/gradcheck.hpp"
#include "voxatn/model.hpp"
#include "voxatn/padeval.hpp"

namespace voxatn::cli {

struct ManifestEntry {
    std::string path;
    cloudio::PaiKind kind = cloudio::PaiKind::BonaFide;
    std::string identity;
    int session = 0;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// generate_dataset -> PLY files + manifest.csv + resolved_config.ini
std::string run_synth(const RunConfig& cfg, const std::string& out_dir);

struct LoadedDataset {
    std::vector<net::LabeledCloud> clouds;     // normalized
    std::vector<padeval::SampleMeta> metas;    // parallel to clouds
};
LoadedDataset load_dataset(const std::string& manifest_path);

struct TrainOutputs {
    std::string checkpoint_path;
    std::string loss_csv_path;
    std::string summary_path;
    std::vector<double> loss_history;
};
TrainOutputs run_train(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_dir);

struct EvalOutputs {
    padeval::EvalReport report;
    std::string report_path;
    std::string det_csv_path;
};
EvalOutputs run_eval(const RunConfig& cfg, const std::string& manifest_path, const std::string& checkpoint_path,
                     const std::string& out_dir);

// Scores the protocol's test split with a trained model.
padeval::ScoreSet score_test_split(const net::Model& model, const LoadedDataset& data,
                                   const padeval::ProtocolSpec& protocol, std::uint64_t split_seed);

struct AblationRow {
    std::string variant;
    bool attention = false;
    long long parameter_count = 0;
    double d_eer = 0.0;
    double bpcer10 = 0.0;
    double bpcer5 = 0.0;
};
std::vector<AblationRow> run_ablate(const RunConfig& cfg, const std::string& manifest_path,
                                    const std::string& out_dir);
std::string ablation_table(const std::vector<AblationRow>& rows);

// Per-op finite-difference checks used by the gradcheck command; the corrupt
// flag injects a broken backward as a negative control.
std::vector<tengine::GradCheckEntry> op_gradient_checks(std::uint64_t seed, bool corrupt_backward = false);
tengine::GradCheckReport composed_gradient_check(std::uint64_t seed, bool corrupt_backward = false);

}  // namespace voxatn::cli
