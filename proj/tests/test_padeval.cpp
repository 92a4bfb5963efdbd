#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "voxatn/errors.hpp"
#include "voxatn/padeval.hpp"
#include "voxatn/rng.hpp"

using namespace voxatn;
using namespace voxatn::padeval;
using cloudio::PaiKind;

namespace {

ScoreEntry entry(double score, bool attack, const std::string& id = "") {
    ScoreEntry e;
    e.score = score;
    e.label.kind = attack ? PaiKind::SiliconeMask : PaiKind::BonaFide;
    e.identity = id;
    return e;
}

// Brute-force rates at one threshold by direct counting.
ErrorRates brute_rates(const ScoreSet& s, double t) {
    double attacks = 0, missed = 0, bona = 0, rejected = 0;
    for (const ScoreEntry& e : s.entries) {
        if (e.label.is_attack()) {
            attacks += 1;
            if (e.score < t) missed += 1;
        } else {
            bona += 1;
            if (e.score >= t) rejected += 1;
        }
    }
    return {100.0 * missed / attacks, 100.0 * rejected / bona};
}

std::vector<double> brute_thresholds(const ScoreSet& s) {
    std::set<double> cand{0.0};
    double mx = 0.0;
    for (const ScoreEntry& e : s.entries) {
        cand.insert(e.score);
        mx = std::max(mx, e.score);
    }
    cand.insert(std::nextafter(mx, std::numeric_limits<double>::infinity()));
    return {cand.begin(), cand.end()};
}

EerResult brute_eer(const ScoreSet& s) {
    EerResult best;
    double gap = std::numeric_limits<double>::infinity();
    for (double t : brute_thresholds(s)) {
        const ErrorRates r = brute_rates(s, t);
        if (std::fabs(r.apcer - r.bpcer) < gap) {
            gap = std::fabs(r.apcer - r.bpcer);
            best = {0.5 * (r.apcer + r.bpcer), t};
        }
    }
    return best;
}

double brute_bpcer_at(const ScoreSet& s, double target) {
    double best = std::numeric_limits<double>::infinity();
    for (double t : brute_thresholds(s))
        if (brute_rates(s, t).apcer <= target) best = std::min(best, brute_rates(s, t).bpcer);
    return best;
}

ScoreSet random_scores(Rng& rng, int n_bona, int n_attack, int quantize = 0) {
    ScoreSet s;
    auto draw = [&] {
        double v = rng.uniform();
        if (quantize > 0) v = std::floor(v * quantize) / quantize;  // force score ties
        return v;
    };
    for (int i = 0; i < n_bona; ++i) s.entries.push_back(entry(draw(), false));
    for (int i = 0; i < n_attack; ++i) s.entries.push_back(entry(draw(), true));
    return s;
}

}  // namespace

TEST_CASE("error_rates on a worked example") {
    // attacks at .9 .8 .3, bona fide at .1 .2 .7; threshold .5:
    // one attack below -> APCER 33.33, one bona fide above -> BPCER 33.33
    ScoreSet s;
    s.entries = {entry(0.9, true), entry(0.8, true), entry(0.3, true),
                 entry(0.1, false), entry(0.2, false), entry(0.7, false)};
    const ErrorRates r = error_rates(s, 0.5);
    CHECK(r.apcer == doctest::Approx(100.0 / 3));
    CHECK(r.bpcer == doctest::Approx(100.0 / 3));
    const ErrorRates all_attack = error_rates(s, 0.0);
    CHECK(all_attack.apcer == 0.0);
    CHECK(all_attack.bpcer == 100.0);
    const ErrorRates all_bona = error_rates(s, 0.91);
    CHECK(all_bona.apcer == 100.0);
    CHECK(all_bona.bpcer == 0.0);
}

TEST_CASE("threshold comparison is inclusive on the attack side") {
    ScoreSet s;
    s.entries = {entry(0.5, true), entry(0.5, false)};
    const ErrorRates r = error_rates(s, 0.5);
    CHECK(r.apcer == 0.0);    // attack at exactly t is caught
    CHECK(r.bpcer == 100.0);  // bona fide at exactly t is rejected
}

TEST_CASE("d_eer matches brute force on random score sets") {
    Rng rng(31);
    for (int iter = 0; iter < 60; ++iter) {
        const int q = iter % 3 == 0 ? 8 : 0;  // every third set has heavy ties
        ScoreSet s = random_scores(rng, 5 + iter % 40, 5 + (iter * 7) % 40, q);
        const EerResult got = d_eer(s);
        const EerResult want = brute_eer(s);
        CHECK(got.eer == want.eer);
        CHECK(got.threshold == want.threshold);
    }
}

TEST_CASE("d_eer tie-break picks the lower threshold") {
    // both t=0.2 and t=0.8 give APCER == BPCER == 0; the lower one must win
    ScoreSet s;
    s.entries = {entry(0.9, true), entry(0.8, true), entry(0.1, false), entry(0.0, false)};
    const EerResult r = d_eer(s);
    CHECK(r.eer == 0.0);
    CHECK(r.threshold == 0.8);  // first threshold reaching gap 0 in ascending order
}

TEST_CASE("perfectly separated scores give zero D-EER") {
    ScoreSet s;
    for (int i = 0; i < 10; ++i) {
        s.entries.push_back(entry(0.6 + 0.03 * i, true));
        s.entries.push_back(entry(0.4 - 0.03 * i, false));
    }
    CHECK(d_eer(s).eer == 0.0);
}

TEST_CASE("bpcer_at_apcer matches brute force and validates its target") {
    Rng rng(77);
    for (int iter = 0; iter < 40; ++iter) {
        ScoreSet s = random_scores(rng, 6 + iter % 20, 6 + (iter * 3) % 20, iter % 2 ? 10 : 0);
        for (double target : {5.0, 10.0, 50.0}) CHECK(bpcer_at_apcer(s, target) == brute_bpcer_at(s, target));
    }
    ScoreSet s = random_scores(rng, 4, 4);
    CHECK_THROWS_AS(bpcer_at_apcer(s, 0.0), UserError);
    CHECK_THROWS_AS(bpcer_at_apcer(s, 101.0), UserError);
}

TEST_CASE("det_curve covers both saturated operating points") {
    Rng rng(5);
    ScoreSet s = random_scores(rng, 12, 12);
    const auto curve = det_curve(s);
    REQUIRE(curve.size() >= 3);
    CHECK(std::is_sorted(curve.begin(), curve.end(),
                         [](const DetPoint& a, const DetPoint& b) { return a.threshold < b.threshold; }));
    CHECK(curve.front().apcer == 0.0);
    CHECK(curve.front().bpcer == 100.0);
    CHECK(curve.back().apcer == 100.0);
    CHECK(curve.back().bpcer == 0.0);
    for (const DetPoint& p : curve) {
        const ErrorRates r = brute_rates(s, p.threshold);
        CHECK(p.apcer == r.apcer);
        CHECK(p.bpcer == r.bpcer);
    }
}

TEST_CASE("det csv round trip") {
    Rng rng(9);
    ScoreSet s = random_scores(rng, 10, 10);
    const auto curve = det_curve(s);
    std::ostringstream out;
    write_det_csv(out, curve);
    std::istringstream in(out.str());
    const auto back = read_det_csv(in);
    REQUIRE(back.size() == curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK(back[i].threshold == doctest::Approx(curve[i].threshold).epsilon(1e-9));
        CHECK(back[i].apcer == doctest::Approx(curve[i].apcer).epsilon(1e-3));
        CHECK(back[i].bpcer == doctest::Approx(curve[i].bpcer).epsilon(1e-3));
    }
}

TEST_CASE("det csv reader rejects malformed input") {
    std::istringstream bad_header("thresh,apcer,bpcer\n0.5,1,1\n");
    CHECK_THROWS_AS(read_det_csv(bad_header), UserError);
    std::istringstream short_row("threshold,apcer,bpcer\n0.5,1.0\n");
    CHECK_THROWS_AS(read_det_csv(short_row), UserError);
    std::istringstream bad_number("threshold,apcer,bpcer\n0.5,one,1.0\n");
    CHECK_THROWS_AS(read_det_csv(bad_number), UserError);
    std::istringstream no_rows("threshold,apcer,bpcer\n");
    CHECK_THROWS_AS(read_det_csv(no_rows), UserError);
}

TEST_CASE("score set validation") {
    ScoreSet s;
    s.entries = {entry(0.5, true)};
    CHECK_THROWS_AS(s.validate(), UserError);  // no bona fide
    s.entries.push_back(entry(1.5, false));
    CHECK_THROWS_AS(s.validate(), UserError);  // out of range
    s.entries[1].score = 0.4;
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("evaluate aggregates the individual metrics") {
    Rng rng(123);
    ScoreSet s = random_scores(rng, 25, 25);
    const EvalReport rep = evaluate(s);
    const EerResult eer = d_eer(s);
    CHECK(rep.d_eer == eer.eer);
    CHECK(rep.threshold_at_eer == eer.threshold);
    CHECK(rep.bpcer_at_apcer_10 == bpcer_at_apcer(s, 10.0));
    CHECK(rep.bpcer_at_apcer_5 == bpcer_at_apcer(s, 5.0));
    CHECK(rep.det_points.size() == det_curve(s).size());
    const std::string text = report_text("intra-mask", rep);
    CHECK(text.find("intra-mask") != std::string::npos);
    CHECK(text.find("D-EER") != std::string::npos);
}

namespace {

std::vector<SampleMeta> synthetic_metas(int bona_ids, int mask_ids, int wrap_ids, int sessions) {
    std::vector<SampleMeta> metas;
    auto add = [&](PaiKind kind, const std::string& prefix, int count) {
        for (int i = 0; i < count; ++i)
            for (int s = 0; s < sessions; ++s) {
                SampleMeta m;
                m.label.kind = kind;
                m.identity = prefix + std::to_string(i);
                metas.push_back(m);
            }
    };
    add(PaiKind::BonaFide, "b", bona_ids);
    add(PaiKind::SiliconeMask, "m", mask_ids);
    add(PaiKind::WrapPhoto, "w", wrap_ids);
    return metas;
}

ProtocolSpec make_spec(ProtocolMode mode) {
    ProtocolSpec spec;
    spec.mode = mode;
    switch (mode) {
        case ProtocolMode::Intra:
            spec.train_pai = {PaiKind::SiliconeMask};
            spec.test_pai = {PaiKind::SiliconeMask};
            break;
        case ProtocolMode::Inter:
            spec.train_pai = {PaiKind::SiliconeMask};
            spec.test_pai = {PaiKind::WrapPhoto};
            break;
        case ProtocolMode::Both:
            spec.train_pai = {PaiKind::SiliconeMask, PaiKind::WrapPhoto};
            spec.test_pai = spec.train_pai;
            break;
    }
    return spec;
}

}  // namespace

TEST_CASE("protocol splits are identity-disjoint with the right composition") {
    const auto metas = synthetic_metas(9, 4, 6, 3);
    for (ProtocolMode mode : {ProtocolMode::Intra, ProtocolMode::Inter, ProtocolMode::Both}) {
        const ProtocolSpec spec = make_spec(mode);
        for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
            const Split split = split_protocol(metas, spec, seed);
            std::set<std::string> train_ids, test_ids;
            bool train_bona = false, test_bona = false;
            for (std::size_t i : split.train) {
                train_ids.insert(metas[i].identity);
                if (!metas[i].label.is_attack()) train_bona = true;
                if (metas[i].label.is_attack())
                    CHECK(std::count(spec.train_pai.begin(), spec.train_pai.end(), metas[i].label.kind) == 1);
            }
            for (std::size_t i : split.test) {
                test_ids.insert(metas[i].identity);
                if (!metas[i].label.is_attack()) test_bona = true;
                if (metas[i].label.is_attack())
                    CHECK(std::count(spec.test_pai.begin(), spec.test_pai.end(), metas[i].label.kind) == 1);
            }
            for (const std::string& id : train_ids) CHECK(test_ids.count(id) == 0);
            CHECK(train_bona);
            CHECK(test_bona);
        }
    }
}

TEST_CASE("split is deterministic in the seed and all sessions travel together") {
    const auto metas = synthetic_metas(6, 3, 4, 4);
    const ProtocolSpec spec = make_spec(ProtocolMode::Both);
    const Split a = split_protocol(metas, spec, 17);
    const Split b = split_protocol(metas, spec, 17);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    // every identity in the train side has all of its sessions there
    std::set<std::string> train_ids;
    for (std::size_t i : a.train) train_ids.insert(metas[i].identity);
    for (std::size_t i : a.test) CHECK(train_ids.count(metas[i].identity) == 0);
}

TEST_CASE("inter protocol keeps the attack kinds disjoint across sides") {
    const auto metas = synthetic_metas(6, 3, 4, 2);
    const Split split = split_protocol(metas, make_spec(ProtocolMode::Inter), 4);
    for (std::size_t i : split.train)
        CHECK(metas[i].label.kind != PaiKind::WrapPhoto);
    for (std::size_t i : split.test)
        CHECK(metas[i].label.kind != PaiKind::SiliconeMask);
}

TEST_CASE("protocol spec validation") {
    ProtocolSpec bad = make_spec(ProtocolMode::Intra);
    bad.test_pai = {PaiKind::WrapPhoto};
    CHECK_THROWS_AS(bad.validate(), UserError);

    ProtocolSpec overlap = make_spec(ProtocolMode::Inter);
    overlap.test_pai = {PaiKind::SiliconeMask};
    CHECK_THROWS_AS(overlap.validate(), UserError);

    ProtocolSpec half = make_spec(ProtocolMode::Both);
    half.train_pai = {PaiKind::SiliconeMask};
    CHECK_THROWS_AS(half.validate(), UserError);

    ProtocolSpec bona = make_spec(ProtocolMode::Intra);
    bona.train_pai = {PaiKind::BonaFide};
    CHECK_THROWS_AS(bona.validate(), UserError);

    for (ProtocolMode m : {ProtocolMode::Intra, ProtocolMode::Inter, ProtocolMode::Both})
        CHECK_NOTHROW(make_spec(m).validate());
    CHECK(mode_from_string(mode_to_string(ProtocolMode::Inter)) == ProtocolMode::Inter);
    CHECK_THROWS_AS(mode_from_string("cross"), UserError);
}

TEST_CASE("split_protocol rejects datasets it cannot split") {
    // a single bona fide identity cannot be split disjointly
    const auto metas = synthetic_metas(1, 3, 3, 2);
    CHECK_THROWS_AS(split_protocol(metas, make_spec(ProtocolMode::Intra), 1), UserError);
    // intra on masks needs at least two mask identities
    const auto one_mask = synthetic_metas(5, 1, 3, 2);
    CHECK_THROWS_AS(split_protocol(one_mask, make_spec(ProtocolMode::Intra), 1), UserError);
}
