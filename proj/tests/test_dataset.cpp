#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "signspeak/dataset.hpp"

using namespace signspeak;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content = "")
        : path("ss_test_" + name) {
        if (!content.empty()) {
            std::ofstream out(path);
            out << content;
        }
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string csv_recording(const std::string& id, const std::string& label, std::size_t len,
                          int base = 100) {
    std::ostringstream os;
    for (std::size_t t = 0; t < len; ++t)
        os << id << ',' << t << ',' << base << ',' << base + 1 << ',' << base + 2 << ','
           << base + 3 << ',' << base + 4 << ',' << label << '\n';
    return os.str();
}

const std::string kHeader = "recording_id,t,s1,s2,s3,s4,s5,label\n";

}  // namespace

TEST_CASE("label vocabulary is A-Z then 1-10") {
    CHECK(LabelVocab::names().size() == kNumClasses);
    CHECK(LabelVocab::name(0) == "A");
    CHECK(LabelVocab::name(25) == "Z");
    CHECK(LabelVocab::name(26) == "1");
    CHECK(LabelVocab::name(35) == "10");
    CHECK(LabelVocab::index_of("A") == 0);
    CHECK(LabelVocab::index_of("10") == 35);
    CHECK(LabelVocab::index_of("zz") == -1);
    CHECK_THROWS_AS(LabelVocab::name(36), DataError);
}

TEST_CASE("csv round trip preserves the dataset") {
    auto ds = synth_generate(2, 10.0, 7);
    TempFile f("roundtrip.csv");
    write_csv(ds, f.path);
    auto back = load_csv(f.path);
    REQUIRE(back.recordings.size() == ds.recordings.size());
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) {
        CHECK(back.recordings[i].id == ds.recordings[i].id);
        CHECK(back.recordings[i].label == ds.recordings[i].label);
        CHECK(back.recordings[i].frames == ds.recordings[i].frames);
    }
}

TEST_CASE("loader rejects malformed input with line numbers") {
    SUBCASE("bad header") {
        TempFile f("badheader.csv", "id,t,s1,s2,s3,s4,s5,label\n");
        CHECK_THROWS_AS(load_csv(f.path), DataError);
    }
    SUBCASE("value out of range names the line") {
        std::string body = csv_recording("r0", "A", 50);
        // corrupt one reading on data line 10 (file line 11)
        std::string bad = kHeader;
        std::istringstream is(body);
        std::string line;
        for (int i = 0; std::getline(is, line); ++i) {
            if (i == 9) line = "r0,9,1024,100,100,100,100,A";
            bad += line + "\n";
        }
        TempFile f("range.csv", bad);
        try {
            load_csv(f.path);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("line 11") != std::string::npos);
            CHECK(msg.find("1024") != std::string::npos);
        }
    }
    SUBCASE("non-contiguous time index") {
        std::string bad = kHeader + "r0,0,1,1,1,1,1,A\nr0,2,1,1,1,1,1,A\n";
        TempFile f("time.csv", bad);
        CHECK_THROWS_AS(load_csv(f.path), DataError);
    }
    SUBCASE("unknown label") {
        TempFile f("label.csv", kHeader + "r0,0,1,1,1,1,1,Q9\n");
        CHECK_THROWS_AS(load_csv(f.path), DataError);
    }
    SUBCASE("non-integer reading") {
        TempFile f("int.csv", kHeader + "r0,0,1.5,1,1,1,1,A\n");
        CHECK_THROWS_AS(load_csv(f.path), DataError);
    }
}

TEST_CASE("length gating quarantines out-of-range recordings") {
    std::string body = kHeader;
    body += csv_recording("short", "A", 49);
    body += csv_recording("ok50", "B", 50);
    body += csv_recording("ok80", "C", 80);
    body += csv_recording("long", "D", 81);
    TempFile f("lengths.csv", body);
    auto ds = load_csv(f.path);
    REQUIRE(ds.recordings.size() == 2);
    CHECK(ds.recordings[0].id == "ok50");
    CHECK(ds.recordings[1].id == "ok80");
    REQUIRE(ds.rejected.size() == 2);
    CHECK(ds.rejected[0].id == "short");
    CHECK(ds.rejected[0].length == 49);
    CHECK(ds.rejected[1].id == "long");
    CHECK(ds.rejected[1].length == 81);
    const std::string summary = ds.rejection_summary();
    CHECK(summary.find("short") != std::string::npos);
    CHECK(summary.find("length=49") != std::string::npos);

    const std::string stats = dataset_stats(ds);
    CHECK(stats.find("recordings=2") != std::string::npos);
    CHECK(stats.find("rejected=2") != std::string::npos);
}

TEST_CASE("pad_batch scales, masks and validates") {
    std::string body = kHeader + csv_recording("a", "A", 50, 0) + csv_recording("b", "B", 60, 1019);
    TempFile f("pad.csv", body);
    auto ds = load_csv(f.path);
    auto batch = pad_batch(ds, {0, 1});
    CHECK(batch.data.shape() == Shape{2, kPaddedLen, kNumChannels});
    CHECK(batch.lengths == std::vector<std::size_t>{50, 60});
    CHECK(batch.labels == std::vector<int>{0, 1});
    // endpoints of the scaling: 0 -> 0, 1023 -> 1
    CHECK(batch.data.values()[0] == 0.0f);
    CHECK(batch.data.values()[kPaddedLen * kNumChannels + 4] == 1.0f);  // b frame 0 channel 4
    // mask is a 1-prefix of each row, zero padding after
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t t = 0; t < kPaddedLen; ++t) {
            const float expect = t < batch.lengths[r] ? 1.0f : 0.0f;
            CHECK(batch.mask.values()[r * kPaddedLen + t] == expect);
            if (t >= batch.lengths[r])
                for (std::size_t c = 0; c < kNumChannels; ++c)
                    CHECK(batch.data.values()[(r * kPaddedLen + t) * kNumChannels + c] == 0.0f);
        }
    CHECK_THROWS_AS(pad_batch(ds, {}), DataError);
    // a recording longer than the requested extent is refused
    CHECK_THROWS_AS(pad_batch(ds, {1}, 59), DataError);
}

TEST_CASE("stratified k-fold partitions the dataset") {
    auto ds = synth_generate(7, 15.0, 3);  // 7 per class, not divisible by 5
    auto folds = stratified_k_fold(ds, 5, 11);
    REQUIRE(folds.size() == 5);

    std::set<std::size_t> seen;
    for (const auto& f : folds)
        for (auto i : f) CHECK(seen.insert(i).second);  // disjoint
    CHECK(seen.size() == ds.recordings.size());         // exhaustive

    // per-class fold counts differ by at most one
    for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
        std::size_t mn = ds.recordings.size(), mx = 0;
        for (const auto& f : folds) {
            std::size_t n = 0;
            for (auto i : f)
                if (ds.recordings[i].label == static_cast<int>(cls)) ++n;
            mn = std::min(mn, n);
            mx = std::max(mx, n);
        }
        CHECK(mx - mn <= 1);
    }

    // deterministic in the seed
    CHECK(stratified_k_fold(ds, 5, 11) == folds);
    CHECK(stratified_k_fold(ds, 5, 12) != folds);

    auto tiny = synth_generate(4, 15.0, 3);
    CHECK_THROWS_AS(stratified_k_fold(tiny, 5, 1), DataError);
    CHECK_THROWS_AS(stratified_k_fold(ds, 1, 1), DataError);
}

TEST_CASE("synthetic generator is deterministic and in range") {
    auto a = synth_generate(3, 20.0, 42);
    auto b = synth_generate(3, 20.0, 42);
    REQUIRE(a.recordings.size() == 3 * kNumClasses);
    for (std::size_t i = 0; i < a.recordings.size(); ++i) {
        CHECK(a.recordings[i].frames == b.recordings[i].frames);
        const auto len = a.recordings[i].frames.size();
        CHECK(len >= kMinLen);
        CHECK(len <= kPaddedLen);
        for (const auto& f : a.recordings[i].frames) {
            int sum = 0;
            for (auto v : f) {
                CHECK(v <= kSensorMax);
                sum += v;
            }
            CHECK(sum < 5000);  // every synthetic frame reads as active
        }
    }
    auto c = synth_generate(3, 20.0, 43);
    CHECK(a.recordings[0].frames != c.recordings[0].frames);
}

TEST_CASE("synthetic classes are recovered by a nearest-template oracle") {
    auto ds = synth_generate(2, 20.0, 5);
    for (const auto& rec : ds.recordings) {
        double best = 1e300;
        int best_cls = -1;
        for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
            double d = 0.0;
            for (std::size_t t = 0; t < rec.frames.size(); ++t)
                for (std::size_t c = 0; c < kNumChannels; ++c) {
                    const double diff =
                        static_cast<double>(rec.frames[t][c]) - synth_template_value(cls, c, t);
                    d += diff * diff;
                }
            if (d < best) {
                best = d;
                best_cls = static_cast<int>(cls);
            }
        }
        CHECK(best_cls == rec.label);
    }
}

TEST_CASE("import adapter passes canonical files through and converts wide layouts") {
    auto ds = synth_generate(1, 10.0, 9);
    TempFile canonical("import_canon.csv");
    write_csv(ds, canonical.path);
    auto via_import = import_external(canonical.path);
    REQUIRE(via_import.recordings.size() == ds.recordings.size());
    CHECK(via_import.recordings[0].frames == ds.recordings[0].frames);

    // wide layout: label column plus flattened frame-major readings, blanks
    // padding shorter rows
    std::ostringstream os;
    os << "label";
    for (std::size_t i = 0; i < 55 * kNumChannels; ++i) os << ",v" << i;
    os << "\n";
    os << "b";  // lower-case label is tolerated
    for (std::size_t i = 0; i < 52 * kNumChannels; ++i) os << ',' << (i % 1024);
    for (std::size_t i = 52 * kNumChannels; i < 55 * kNumChannels; ++i) os << ',';
    os << "\n";
    os << "10";
    for (std::size_t i = 0; i < 55 * kNumChannels; ++i) os << ',' << 7;
    os << "\n";
    TempFile wide("import_wide.csv", os.str());
    auto w = import_external(wide.path);
    REQUIRE(w.recordings.size() == 2);
    CHECK(w.recordings[0].label == LabelVocab::index_of("B"));
    CHECK(w.recordings[0].frames.size() == 52);
    CHECK(w.recordings[0].frames[0][0] == 0);
    CHECK(w.recordings[0].frames[0][4] == 4);
    CHECK(w.recordings[1].label == LabelVocab::index_of("10"));
    CHECK(w.recordings[1].frames.size() == 55);

    TempFile nolabel("import_nolabel.csv", "a,b,c\n1,2,3\n");
    CHECK_THROWS_AS(import_external(nolabel.path), DataError);
}
