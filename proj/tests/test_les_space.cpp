#include <catch2/catch_amalgamated.hpp>

#include "les/les.hpp"
#include "support/synthetic.hpp"

using namespace les;

namespace {

DatasetStats fixture_stats() {
    DatasetStats stats;
    for (int i = 0; i < kNumAu; ++i) {
        stats.mu_d[i] = 1.0 + 0.1 * i;
        stats.sigma_d[i] = 0.5 + 0.05 * i;
    }
    stats.has_global = true;
    for (Emotion e : kAllEmotions) {
        Vec17 sigma = Vec17::Ones() * 0.8;
        Vec17 mu = Vec17::Ones() * 1.2;
        stats.sigma_emo[e] = sigma;
        stats.mu_emo[e] = mu;
    }
    return stats;
}

} // namespace

TEST_CASE("standardize subtracts the global mean and divides by the std") {
    DatasetStats stats = fixture_stats();
    Vec17 au = Vec17::Constant(2.0);
    ActVector u = standardize(au, stats);
    for (int i = 0; i < kNumAu; ++i)
        CHECK(u[i] == Catch::Approx((2.0 - stats.mu_d[i]) / stats.sigma_d[i]).epsilon(1e-15));
}

TEST_CASE("inverse standardize clamps to the AU range and reports indices") {
    DatasetStats stats = fixture_stats();
    ActVector u = ActVector::Zero();
    u[0] = 1000.0;   // way past 5 after de-standardizing
    u[5] = -1000.0;  // way below 0
    std::vector<int> clamped;
    Vec17 au = inverse_standardize(u, stats, &clamped);
    CHECK(au[0] == 5.0);
    CHECK(au[5] == 0.0);
    REQUIRE(clamped.size() == 2);
    CHECK(clamped[0] == 0);
    CHECK(clamped[1] == 5);
}

TEST_CASE("standardize and inverse are mutual inverses inside the range") {
    DatasetStats stats = fixture_stats();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(0.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        Vec17 au;
        for (int i = 0; i < kNumAu; ++i) au[i] = dist(rng);
        Vec17 back = inverse_standardize(standardize(au, stats), stats, nullptr);
        for (int i = 0; i < kNumAu; ++i) CHECK(back[i] == Catch::Approx(au[i]).margin(1e-12));
    }
}

TEST_CASE("fitted standardization has zero mean and unit variance") {
    auto catalog = ts::make_catalog(48, 2024);
    DatasetStats stats = fit_stats(catalog);

    Vec17 sum = Vec17::Zero(), sum_sq = Vec17::Zero();
    std::int64_t n = 0;
    for (const auto& seq : catalog)
        for (const auto& frame : seq.frames) {
            ActVector u = standardize(frame.au, stats);
            sum += u;
            sum_sq += u.cwiseProduct(u);
            ++n;
        }
    REQUIRE(n >= 1000);
    for (int i = 0; i < kNumAu; ++i) {
        double mean = sum[i] / static_cast<double>(n);
        double var = sum_sq[i] / static_cast<double>(n) - mean * mean;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
}

TEST_CASE("isolation magnitudes follow the configured variant") {
    DatasetStats stats = fixture_stats();
    Vec17 au = Vec17::Constant(2.0);

    SECTION("literal: |AU| / sigma_emo") {
        stats.opt2_mode = Opt2Mode::Literal;
        Vec17 iso = isolate(au, stats, Emotion::Happy);
        for (int i = 0; i < kNumAu; ++i) CHECK(iso[i] == Catch::Approx(2.0 / 0.8));
    }
    SECTION("centered: |AU - mu_emo| / sigma_emo") {
        stats.opt2_mode = Opt2Mode::Centered;
        Vec17 iso = isolate(au, stats, Emotion::Happy);
        for (int i = 0; i < kNumAu; ++i) CHECK(iso[i] == Catch::Approx(0.8 / 0.8));
    }
    SECTION("magnitudes are never negative") {
        stats.opt2_mode = Opt2Mode::Centered;
        Vec17 small = Vec17::Constant(0.1);  // below mu_emo
        Vec17 iso = isolate(small, stats, Emotion::Sad);
        CHECK(iso.minCoeff() >= 0.0);
    }
}

TEST_CASE("reconstruct lays out action, isolation, and one-hot blocks") {
    DatasetStats stats = fixture_stats();
    AUFrame frame;
    frame.frame_index = 0;
    frame.au = Vec17::Constant(2.0);

    SECTION("non-neutral carries od in its slot") {
        LesVector w = reconstruct(frame, stats, Emotion::Happy);
        auto [u, v] = decompose(w);
        CHECK((u - standardize(frame.au, stats)).cwiseAbs().maxCoeff() == 0.0);
        Vec17 iso = isolate(frame.au, stats, Emotion::Happy);
        for (int i = 0; i < kNumAu; ++i) CHECK(v[i] == iso[i]);
        double od = origin_distance(iso);
        for (int s = 0; s < kNumSlots; ++s) {
            if (s == iso_slot(Emotion::Happy))
                CHECK(v[kNumAu + s] == od);
            else
                CHECK(v[kNumAu + s] == 0.0);
        }
        CHECK(one_hot_slot(v) == iso_slot(Emotion::Happy));
        CHECK(origin_distance(v) == od);
    }
    SECTION("neutral has an all-zero tail") {
        LesVector w = reconstruct(frame, stats, Emotion::Neutral);
        auto [u, v] = decompose(w);
        for (int s = 0; s < kNumSlots; ++s) CHECK(v[kNumAu + s] == 0.0);
        CHECK_FALSE(one_hot_slot(v).has_value());
    }
}

TEST_CASE("compose inverts decompose") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    LesVector w;
    for (int i = 0; i < kLesDim; ++i) w[i] = dist(rng);
    auto [u, v] = decompose(w);
    LesVector back = compose(u, v);
    for (int i = 0; i < kLesDim; ++i) CHECK(back[i] == w[i]);
}

TEST_CASE("one-hot/od coupling holds for every reconstructed corpus vector") {
    auto catalog = ts::make_catalog(24, 77);
    DatasetStats stats = fit_stats(catalog);
    for (const auto& seq : catalog) {
        if (!seq.emotion || *seq.emotion == Emotion::Neutral) continue;
        for (const auto& frame : seq.frames) {
            auto [u, v] = decompose(reconstruct(frame, stats, *seq.emotion));
            int nonzero = 0;
            for (int s = 0; s < kNumSlots; ++s)
                if (v[kNumAu + s] != 0.0) ++nonzero;
            REQUIRE(nonzero == 1);
            CHECK(std::abs(v[kNumAu + iso_slot(*seq.emotion)] - origin_distance(v)) < 1e-9);
        }
    }
}

TEST_CASE("degenerate columns fall back to unit sigma with a warning") {
    // one AU frozen at a constant -> zero std
    auto catalog = ts::make_catalog(12, 55);
    for (auto& seq : catalog)
        for (auto& frame : seq.frames) frame.au[16] = 2.5;
    DatasetStats stats = fit_stats(catalog);
    CHECK(stats.sigma_d[16] == 1.0);
    bool mentioned = false;
    for (const auto& w : stats.degenerate_columns)
        if (w.find("AU45") != std::string::npos) mentioned = true;
    CHECK(mentioned);
}
