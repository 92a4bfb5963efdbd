#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxatn/cloudio.hpp"

namespace voxatn::padeval {

using cloudio::ClassLabel;
using cloudio::PaiKind;

struct ScoreEntry {
    double score = 0.0;  // attack-class probability, in [0,1]
    ClassLabel label;
    std::string identity;
};

struct ScoreSet {
    std::vector<ScoreEntry> entries;

    void validate() const;  // at least one entry per binary class, scores in [0,1]
};

// Decision rule: classify attack iff score >= threshold.
// APCER = % attacks called bona fide, BPCER = % bona fides called attack.
struct ErrorRates {
    double apcer = 0.0;
    double bpcer = 0.0;
};
ErrorRates error_rates(const ScoreSet& scores, double threshold);

// Sweep over all distinct scores plus boundary thresholds; the operating
// point minimizing |APCER - BPCER| wins, ties broken by lower threshold.
struct EerResult {
    double eer = 0.0;  // (APCER + BPCER)/2 at the chosen threshold, percent
    double threshold = 0.0;
};
EerResult d_eer(const ScoreSet& scores);

// Minimum BPCER among thresholds with APCER <= target_apcer (percent).
double bpcer_at_apcer(const ScoreSet& scores, double target_apcer);

struct DetPoint {
    double threshold = 0.0;
    double apcer = 0.0;
    double bpcer = 0.0;
};
std::vector<DetPoint> det_curve(const ScoreSet& scores);

// "threshold,apcer,bpcer", rates with 4 decimal places.
void write_det_csv(std::ostream& out, const std::vector<DetPoint>& curve);
std::vector<DetPoint> read_det_csv(std::istream& in);

struct EvalReport {
    double d_eer = 0.0;
    double threshold_at_eer = 0.0;
    double bpcer_at_apcer_10 = 0.0;
    double bpcer_at_apcer_5 = 0.0;
    std::vector<DetPoint> det_points;
};
EvalReport evaluate(const ScoreSet& scores);

// D-EER / BPCER@10% / BPCER@5% row, mirroring the results-table layout.
std::string report_text(const std::string& protocol_name, const EvalReport& report);

enum class ProtocolMode { Intra, Inter, Both };

ProtocolMode mode_from_string(const std::string& s);
std::string mode_to_string(ProtocolMode m);

struct ProtocolSpec {
    ProtocolMode mode = ProtocolMode::Intra;
    std::vector<PaiKind> train_pai;  // attack kinds allowed on the train side
    std::vector<PaiKind> test_pai;

    void validate() const;  // Intra: equal singleton; Inter: disjoint; Both: both kinds on both sides
};

struct SampleMeta {
    ClassLabel label;
    std::string identity;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Identity-disjoint split: bona fide identities ~2:1 train:test, attack
// identities assigned per the protocol mode.
Split split_protocol(const std::vector<SampleMeta>& samples, const ProtocolSpec& spec, std::uint64_t seed);

}  // namespace voxatn::padeval
