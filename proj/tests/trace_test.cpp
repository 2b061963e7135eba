#include "michscan/trace.hpp"
#include "michscan/trace_io.hpp"
#include "michscan/rng.hpp"

#include "gtest/gtest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace michscan;

namespace {

Trace make_trace(std::vector<double> samples, double rate = 1000.0) {
    Trace t;
    t.samples = std::move(samples);
    t.sample_rate_hz = rate;
    return t;
}

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "michscan_trace_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST(Trace, ValidationRejectsBadInputs) {
    EXPECT_THROW(validate(make_trace({})), InvalidArgument);
    EXPECT_THROW(validate(make_trace({1.0, 2.0}, 0.0)), InvalidArgument);
    EXPECT_THROW(validate(make_trace({1.0, std::nan("")})), InvalidArgument);

    Trace t = make_trace({1.0, 2.0, 3.0});
    t.markers.push_back({"fc", 2, 2});
    EXPECT_THROW(validate(t), InvalidArgument);
    t.markers.back() = {"fc", 1, 4};
    EXPECT_THROW(validate(t), InvalidArgument);
    t.markers.back() = {"fc", 0, 3};
    EXPECT_NO_THROW(validate(t));
}

TEST(Average, IdenticalTracesReturnTheTrace) {
    const Trace x = make_trace({0.25, -1.5, 3.0, 7.125});
    const TraceSet set{{x, x}};
    const Trace avg = average_traces(set);
    EXPECT_EQ(avg.samples, x.samples);
    EXPECT_EQ(avg.sample_rate_hz, x.sample_rate_hz);
}

TEST(Average, SymmetricPair) {
    const TraceSet set{{make_trace({1.0, 3.0}), make_trace({3.0, 1.0})}};
    const Trace avg = average_traces(set);
    EXPECT_EQ(avg.samples, (std::vector<double>{2.0, 2.0}));
}

TEST(Average, DropsMarkersAndMeta) {
    Trace a = make_trace({1.0, 2.0});
    a.markers.push_back({"fc", 0, 2});
    a.meta["device_id"] = "d";
    const Trace avg = average_traces(TraceSet{{a, a}});
    EXPECT_TRUE(avg.markers.empty());
    EXPECT_TRUE(avg.meta.empty());
}

TEST(Average, PermutationInvariant) {
    Rng rng(41);
    TraceSet set;
    for (int t = 0; t < 7; ++t) {
        Trace tr = make_trace({}, 500.0);
        for (int i = 0; i < 33; ++i)
            tr.samples.push_back(rng.uniform(-1.0, 1.0));
        set.traces.push_back(std::move(tr));
    }
    const Trace base = average_traces(set);
    std::rotate(set.traces.begin(), set.traces.begin() + 3, set.traces.end());
    std::swap(set.traces[0], set.traces[4]);
    const Trace permuted = average_traces(set);
    for (std::size_t i = 0; i < base.samples.size(); ++i)
        EXPECT_NEAR(base.samples[i], permuted.samples[i], 1e-12);
}

TEST(Average, RejectsEmptySet) {
    EXPECT_THROW(average_traces(TraceSet{}), InvalidArgument);
}

TEST(Average, RejectsMixedLengthsAndRates) {
    EXPECT_THROW(average_traces(TraceSet{{make_trace({1.0}), make_trace({1.0, 2.0})}}),
                 InvalidArgument);
    EXPECT_THROW(average_traces(TraceSet{{make_trace({1.0}, 10.0), make_trace({1.0}, 20.0)}}),
                 InvalidArgument);
}

TEST(Quantize, TwoLevelQuantizer) {
    const Trace t = make_trace({0.2, 0.8, 0.5});
    const Trace q = quantize(t, 1, 1.0);
    EXPECT_EQ(q.samples[0], 0.0);
    EXPECT_EQ(q.samples[1], 1.0);
    EXPECT_EQ(q.samples[2], 1.0); // tie rounds half-up
}

TEST(Quantize, Idempotent) {
    Rng rng(7);
    Trace t = make_trace({});
    for (int i = 0; i < 500; ++i)
        t.samples.push_back(rng.uniform(0.0, 3.3));
    const Trace once = quantize(t, 10, 3.3);
    const Trace twice = quantize(once, 10, 3.3);
    EXPECT_EQ(once.samples, twice.samples);
}

TEST(Quantize, PicksNearestLevel) {
    // Verify the rounding rule by explicitly comparing the two adjacent levels.
    const double x = 0.5005;
    const double levels = 1023.0;
    const double lo = std::floor(x * levels) / levels;
    const double hi = std::ceil(x * levels) / levels;
    const double expected = (x - lo < hi - x) ? lo : hi;
    EXPECT_EQ(expected, 512.0 / 1023.0);

    const Trace q = quantize(make_trace({x}), 10, 1.0);
    EXPECT_DOUBLE_EQ(q.samples[0], expected);
}

TEST(Quantize, RejectsOutOfRangeAndBadWidth) {
    EXPECT_THROW(quantize(make_trace({-0.01}), 10, 1.0), InvalidArgument);
    EXPECT_THROW(quantize(make_trace({1.01}), 10, 1.0), InvalidArgument);
    EXPECT_THROW(quantize(make_trace({0.5}), 0, 1.0), InvalidArgument);
    EXPECT_THROW(quantize(make_trace({0.5}), 25, 1.0), InvalidArgument);
}

TEST(Quantize, LevelCountAndErrorBound) {
    Rng rng(11);
    Trace t = make_trace({});
    for (int i = 0; i < 4000; ++i)
        t.samples.push_back(rng.uniform(0.0, 1.0));
    const int bits = 6;
    const Trace q = quantize(t, bits, 1.0);

    std::vector<double> distinct = q.samples;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    EXPECT_LE(distinct.size(), std::size_t(1) << bits);

    // Levels sit at k/(2^bits - 1), so the worst rounding error is half of
    // that spacing.
    const double bound = 0.5 / double((1 << bits) - 1) + 1e-12;
    for (std::size_t i = 0; i < t.samples.size(); ++i)
        EXPECT_LE(std::abs(q.samples[i] - t.samples[i]), bound);
}

TEST(ExtractSegment, FullSpanMarkerReturnsWholeTrace) {
    Trace t = make_trace({1.0, 2.0, 3.0, 4.0});
    t.markers.push_back({"fc", 0, 4});
    const Trace seg = extract_segment(t, "fc");
    EXPECT_EQ(seg.samples, t.samples);
    EXPECT_EQ(seg.sample_rate_hz, t.sample_rate_hz);
}

TEST(ExtractSegment, SliceContract) {
    Trace t = make_trace({});
    for (int i = 0; i < 64; ++i)
        t.samples.push_back(double(i));
    t.markers.push_back({"conv2", 10, 20});
    t.meta["input_id"] = "abc";
    const Trace seg = extract_segment(t, "conv2");
    ASSERT_EQ(seg.samples.size(), 10u);
    for (int i = 0; i < 10; ++i)
        EXPECT_EQ(seg.samples[std::size_t(i)], double(10 + i));
    EXPECT_EQ(seg.meta.at("input_id"), "abc");
    EXPECT_TRUE(seg.markers.empty());
}

TEST(ExtractSegment, UnknownLabelThrows) {
    Trace t = make_trace({1.0, 2.0});
    t.markers.push_back({"fc", 0, 2});
    EXPECT_THROW(extract_segment(t, "conv1"), InvalidArgument);
}

TEST(ExtractSegment, LengthMatchesMarkerSpan) {
    Rng rng(3);
    Trace t = make_trace(std::vector<double>(128, 0.0));
    for (int rep = 0; rep < 20; ++rep) {
        const auto start = std::size_t(rng.uniform_int(0, 126));
        const auto end = std::size_t(rng.uniform_int(std::int64_t(start) + 1, 128));
        t.markers.assign(1, Marker{"m", start, end});
        EXPECT_EQ(extract_segment(t, "m").samples.size(), end - start);
    }
}

TEST(TraceIo, BinaryRoundTripIsIdentity) {
    TraceSet set;
    for (int t = 0; t < 2; ++t) {
        Trace tr = make_trace({}, 96e6);
        for (int i = 0; i < 64; ++i)
            tr.samples.push_back(double(i + t) / 256.0); // f32-exact values
        tr.markers.push_back({"fc1", 0, 32});
        tr.markers.push_back({"fc2", 32, 64});
        tr.meta["device_id"] = "dev-7";
        tr.meta["noise_seed"] = std::to_string(t);
        set.traces.push_back(std::move(tr));
    }

    const auto path = temp_file("roundtrip.mtrc");
    store_traces(path, set, TraceFormat::binary);
    const TraceSet loaded = load_traces(path, TraceFormat::binary);
    EXPECT_EQ(loaded, set);

    // Store-load-store is byte stable.
    const auto path2 = temp_file("roundtrip2.mtrc");
    store_traces(path2, loaded, TraceFormat::binary);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(b1, b2);
}

TEST(TraceIo, WrongMagicNamesExpectedValue) {
    const auto path = temp_file("badmagic.mtrc");
    std::ofstream os(path, std::ios::binary);
    os << "XXXXjunkjunkjunk";
    os.close();
    try {
        load_traces(path, TraceFormat::binary);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("MCH1"), std::string::npos);
    }
}

TEST(TraceIo, CsvRowsMustHaveEqualLength) {
    const auto path = temp_file("ragged.csv");
    std::ofstream os(path);
    os << "1.0,2.0,3.0\n1.0,2.0\n";
    os.close();
    EXPECT_THROW(load_traces(path, TraceFormat::csv), FormatError);
}

TEST(TraceIo, CsvRoundTripWithSidecar) {
    TraceSet set;
    Trace tr = make_trace({}, 2e6);
    for (int i = 0; i < 16; ++i)
        tr.samples.push_back(double(i) / 64.0);
    tr.markers.push_back({"fc", 4, 12});
    tr.meta["input_id"] = "in-1";
    set.traces.push_back(tr);

    const auto path = temp_file("set.csv");
    store_traces(path, set, TraceFormat::csv);
    EXPECT_TRUE(std::filesystem::exists(temp_file("set.meta.json")));
    const TraceSet loaded = load_traces(path, TraceFormat::csv);
    EXPECT_EQ(loaded, set);
}

TEST(TraceIo, CsvWithoutSidecarFails) {
    const auto path = temp_file("nosidecar.csv");
    std::ofstream os(path);
    os << "1.0,2.0\n";
    os.close();
    std::filesystem::remove(temp_file("nosidecar.meta.json"));
    EXPECT_THROW(load_traces(path, TraceFormat::csv), FormatError);
}

TEST(TraceIo, MixedMarkersCannotBeStored) {
    Trace a = make_trace({1.0, 2.0});
    Trace b = a;
    b.markers.push_back({"fc", 0, 1});
    EXPECT_THROW(store_traces(temp_file("mixed.mtrc"), TraceSet{{a, b}}, TraceFormat::binary),
                 InvalidArgument);
}
