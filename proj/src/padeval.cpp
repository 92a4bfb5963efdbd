#include "voxatn/padeval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "voxatn/rng.hpp"

namespace voxatn::padeval {

void ScoreSet::validate() const {
    int bona = 0, attack = 0;
    for (const ScoreEntry& e : entries) {
        if (!(e.score >= 0.0 && e.score <= 1.0))
            throw UserError("score out of [0,1]: " + std::to_string(e.score));
        (e.label.is_attack() ? attack : bona)++;
    }
    if (bona == 0) throw UserError("score set has no bona fide entries");
    if (attack == 0) throw UserError("score set has no attack entries");
}

ErrorRates error_rates(const ScoreSet& scores, double threshold) {
    scores.validate();
    int attacks = 0, missed_attacks = 0, bona = 0, rejected_bona = 0;
    for (const ScoreEntry& e : scores.entries) {
        if (e.label.is_attack()) {
            ++attacks;
            if (e.score < threshold) ++missed_attacks;  // attack called bona fide
        } else {
            ++bona;
            if (e.score >= threshold) ++rejected_bona;  // bona fide called attack
        }
    }
    ErrorRates r;
    r.apcer = 100.0 * missed_attacks / attacks;
    r.bpcer = 100.0 * rejected_bona / bona;
    return r;
}

namespace {

// All distinct scores plus both saturating boundaries, ascending.
std::vector<double> candidate_thresholds(const ScoreSet& scores) {
    std::set<double> cand;
    cand.insert(0.0);  // everything classified attack
    double max_score = 0.0;
    for (const ScoreEntry& e : scores.entries) {
        cand.insert(e.score);
        max_score = std::max(max_score, e.score);
    }
    cand.insert(std::nextafter(max_score, std::numeric_limits<double>::infinity()));  // everything bona fide
    return {cand.begin(), cand.end()};
}

}  // namespace

EerResult d_eer(const ScoreSet& scores) {
    scores.validate();
    EerResult best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (double t : candidate_thresholds(scores)) {
        const ErrorRates r = error_rates(scores, t);
        const double gap = std::abs(r.apcer - r.bpcer);
        if (gap < best_gap) {  // ties keep the lower threshold
            best_gap = gap;
            best.threshold = t;
            best.eer = 0.5 * (r.apcer + r.bpcer);
        }
    }
    return best;
}

double bpcer_at_apcer(const ScoreSet& scores, double target_apcer) {
    scores.validate();
    if (!(target_apcer > 0.0 && target_apcer <= 100.0)) throw UserError("target APCER must be in (0,100]");
    double best = std::numeric_limits<double>::infinity();
    for (double t : candidate_thresholds(scores)) {
        const ErrorRates r = error_rates(scores, t);
        if (r.apcer <= target_apcer) best = std::min(best, r.bpcer);
    }
    // threshold 0 always yields APCER 0, so a compliant point exists
    return best;
}

std::vector<DetPoint> det_curve(const ScoreSet& scores) {
    scores.validate();
    std::vector<DetPoint> curve;
    for (double t : candidate_thresholds(scores)) {
        const ErrorRates r = error_rates(scores, t);
        curve.push_back({t, r.apcer, r.bpcer});
    }
    return curve;
}

void write_det_csv(std::ostream& out, const std::vector<DetPoint>& curve) {
    out << "threshold,apcer,bpcer\n";
    char buf[96];
    for (const DetPoint& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.4f,%.4f\n", p.threshold, p.apcer, p.bpcer);
        out << buf;
    }
}

std::vector<DetPoint> read_det_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw UserError("DET CSV: empty file");
    if (line != "threshold,apcer,bpcer") throw UserError("DET CSV: bad header '" + line + "'");
    std::vector<DetPoint> curve;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        DetPoint p;
        char extra;
        std::istringstream ss(line);
        std::string tok;
        double* fields[3] = {&p.threshold, &p.apcer, &p.bpcer};
        for (int i = 0; i < 3; ++i) {
            if (!std::getline(ss, tok, ',')) throw UserError("DET CSV: short row at line " + std::to_string(lineno));
            std::istringstream ts(tok);
            if (!(ts >> *fields[i]) || (ts >> extra))
                throw UserError("DET CSV: bad number '" + tok + "' at line " + std::to_string(lineno));
        }
        curve.push_back(p);
    }
    if (curve.empty()) throw UserError("DET CSV: no data rows");
    return curve;
}

EvalReport evaluate(const ScoreSet& scores) {
    EvalReport rep;
    const EerResult eer = d_eer(scores);
    rep.d_eer = eer.eer;
    rep.threshold_at_eer = eer.threshold;
    rep.bpcer_at_apcer_10 = bpcer_at_apcer(scores, 10.0);
    rep.bpcer_at_apcer_5 = bpcer_at_apcer(scores, 5.0);
    rep.det_points = det_curve(scores);
    return rep;
}

std::string report_text(const std::string& protocol_name, const EvalReport& report) {
    std::ostringstream ss;
    char buf[160];
    ss << "Protocol              D-EER (%)   BPCER @ APCER = 10%   BPCER @ APCER = 5%\n";
    std::snprintf(buf, sizeof(buf), "%-20s  %9.2f   %19.2f   %18.2f\n", protocol_name.c_str(), report.d_eer,
                  report.bpcer_at_apcer_10, report.bpcer_at_apcer_5);
    ss << buf;
    std::snprintf(buf, sizeof(buf), "threshold at D-EER: %.6f\n", report.threshold_at_eer);
    ss << buf;
    return ss.str();
}

ProtocolMode mode_from_string(const std::string& s) {
    if (s == "intra") return ProtocolMode::Intra;
    if (s == "inter") return ProtocolMode::Inter;
    if (s == "both") return ProtocolMode::Both;
    throw UserError("unknown protocol mode: " + s);
}

std::string mode_to_string(ProtocolMode m) {
    switch (m) {
        case ProtocolMode::Intra: return "intra";
        case ProtocolMode::Inter: return "inter";
        case ProtocolMode::Both: return "both";
    }
    throw InternalError("unreachable ProtocolMode");
}

void ProtocolSpec::validate() const {
    auto sorted = [](std::vector<PaiKind> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    for (PaiKind k : train_pai)
        if (k == PaiKind::BonaFide) throw UserError("train_pai must list attack kinds only");
    for (PaiKind k : test_pai)
        if (k == PaiKind::BonaFide) throw UserError("test_pai must list attack kinds only");

    switch (mode) {
        case ProtocolMode::Intra:
            if (train_pai.size() != 1 || sorted(train_pai) != sorted(test_pai))
                throw UserError("intra protocol requires the same single PAI on both sides");
            break;
        case ProtocolMode::Inter: {
            if (train_pai.empty() || test_pai.empty()) throw UserError("inter protocol requires PAIs on both sides");
            for (PaiKind k : train_pai)
                for (PaiKind t : test_pai)
                    if (k == t) throw UserError("inter protocol requires disjoint train/test PAIs");
            break;
        }
        case ProtocolMode::Both:
            if (train_pai.size() != 2 || test_pai.size() != 2)
                throw UserError("both protocol requires both PAIs on both sides");
            break;
    }
}

namespace {

std::vector<std::string> unique_identities(const std::vector<SampleMeta>& samples, PaiKind kind) {
    std::set<std::string> ids;
    for (const SampleMeta& s : samples)
        if (s.label.kind == kind) ids.insert(s.identity);
    return {ids.begin(), ids.end()};
}

}  // namespace

Split split_protocol(const std::vector<SampleMeta>& samples, const ProtocolSpec& spec, std::uint64_t seed) {
    spec.validate();

    std::set<std::string> train_ids, test_ids;
    Rng rng(seed);

    // bona fide identities, ~2:1
    {
        std::vector<std::string> ids = unique_identities(samples, PaiKind::BonaFide);
        if (ids.size() < 2) throw UserError("insufficient bona fide identities for a disjoint split");
        shuffle(ids, rng);
        std::size_t n_train = std::max<std::size_t>(1, (2 * ids.size()) / 3);
        if (n_train == ids.size()) --n_train;
        for (std::size_t i = 0; i < ids.size(); ++i) (i < n_train ? train_ids : test_ids).insert(ids[i]);
    }

    auto split_half = [&](PaiKind kind) {
        std::vector<std::string> ids = unique_identities(samples, kind);
        if (ids.size() < 2)
            throw UserError("insufficient " + cloudio::pai_to_string(kind) + " identities for a disjoint split");
        shuffle(ids, rng);
        const std::size_t n_train = ids.size() / 2;
        for (std::size_t i = 0; i < ids.size(); ++i) (i < n_train ? train_ids : test_ids).insert(ids[i]);
    };
    auto all_to = [&](PaiKind kind, std::set<std::string>& side) {
        std::vector<std::string> ids = unique_identities(samples, kind);
        if (ids.empty()) throw UserError("no " + cloudio::pai_to_string(kind) + " identities available");
        for (const std::string& id : ids) side.insert(id);
    };

    switch (spec.mode) {
        case ProtocolMode::Intra:
            split_half(spec.train_pai[0]);
            break;
        case ProtocolMode::Inter:
            for (PaiKind k : spec.train_pai) all_to(k, train_ids);
            for (PaiKind k : spec.test_pai) all_to(k, test_ids);
            break;
        case ProtocolMode::Both:
            split_half(PaiKind::SiliconeMask);
            split_half(PaiKind::WrapPhoto);
            break;
    }

    auto allowed = [](const std::vector<PaiKind>& kinds, PaiKind k) {
        return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
    };

    Split split;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const SampleMeta& s = samples[i];
        const bool is_bona = !s.label.is_attack();
        if (train_ids.count(s.identity) && (is_bona || allowed(spec.train_pai, s.label.kind)))
            split.train.push_back(i);
        else if (test_ids.count(s.identity) && (is_bona || allowed(spec.test_pai, s.label.kind)))
            split.test.push_back(i);
        // samples of a PAI outside the protocol are left out entirely
    }

    for (const std::string& id : train_ids)
        if (test_ids.count(id)) throw InternalError("protocol split produced overlapping identity " + id);
    return split;
}

}  // namespace voxatn::padeval
