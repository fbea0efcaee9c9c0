#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stu/rng.hpp"
#include "stu/stats.hpp"

using namespace stu;

namespace {

std::vector<double> lognormal_sample(std::uint64_t seed, std::size_t n, double sigma,
                                     double scale, double loc = 0) {
    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& x : out)
        x = loc + rng.lognormal(sigma, scale);
    return out;
}

std::vector<double> normal_sample(std::uint64_t seed, std::size_t n, double mean, double sd) {
    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& x : out)
        x = mean + sd * rng.normal();
    return out;
}

} // namespace

TEST_CASE("family names round-trip") {
    for (Family family : kFamilies)
        CHECK(family_from_name(family_name(family)) == family);
    CHECK_FALSE(family_from_name("cauchy").has_value());
}

TEST_CASE("lognormal fits recover seeded shape and scale within 5 percent") {
    const auto sample = lognormal_sample(20230601, 10000, 0.6, 271.2);
    const auto fit = fit_distribution(sample, Family::lognormal);
    CHECK(std::abs(fit.shape - 0.6) / 0.6 < 0.05);
    CHECK(std::abs(fit.scale - 271.2) / 271.2 < 0.05);
    CHECK(fit.ks_statistic < 0.02);
    CHECK(fit.sample_size == 10000);
}

TEST_CASE("normal and exponential fits recover their parameters") {
    const auto gauss = normal_sample(77, 8000, 120.0, 15.0);
    const auto normal_fit = fit_distribution(gauss, Family::normal);
    CHECK(normal_fit.location == doctest::Approx(120.0).epsilon(0.02));
    CHECK(normal_fit.scale == doctest::Approx(15.0).epsilon(0.05));

    Rng rng(78);
    std::vector<double> expo(8000);
    for (auto& x : expo)
        x = 3.0 - 20.0 * std::log(1 - rng.uniform());
    const auto expo_fit = fit_distribution(expo, Family::exponential);
    CHECK(expo_fit.location == doctest::Approx(3.0).epsilon(0.01));
    CHECK(expo_fit.scale == doctest::Approx(20.0).epsilon(0.05));
}

TEST_CASE("fitted cdfs are proper distribution functions") {
    const auto sample = lognormal_sample(5, 2000, 0.5, 100.0, 10.0);
    for (Family family : kFamilies) {
        const auto fit = fit_distribution(sample, family);
        const double lo = fit.cdf(10.5), mid = fit.cdf(150.0), hi = fit.cdf(1e7);
        CHECK(lo >= 0.0);
        CHECK(lo <= mid);
        CHECK(mid <= hi);
        CHECK(hi <= 1.0);
        CHECK(fit.cdf(1e12) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("lognormal ranks first against normal, exponential and gamma in 20 of 20 runs") {
    const std::array<Family, 4> contenders = {Family::lognormal, Family::normal,
                                              Family::exponential, Family::gamma};
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto sample = lognormal_sample(1000 + rep, 4000, 0.6, 271.2);
        const auto ranking = select_best_family(sample, contenders);
        REQUIRE(!ranking.ranked.empty());
        CHECK(ranking.ranked.front().family == Family::lognormal);
    }
}

TEST_CASE("families that cannot hold the sample are reported, not ranked") {
    auto sample = normal_sample(11, 500, 0.0, 1.0); // straddles zero
    const auto ranking = select_best_family(sample, kFamilies);
    bool lognormal_unfit = false;
    for (const auto& [family, reason] : ranking.unfit)
        if (family == Family::lognormal && !reason.empty())
            lognormal_unfit = true;
    CHECK(lognormal_unfit);
    for (const auto& fit : ranking.ranked)
        CHECK(fit.family != Family::lognormal);
}

TEST_CASE("fit preconditions") {
    std::vector<double> tiny = {1, 2, 3};
    try {
        fit_distribution(tiny, Family::normal);
        FAIL("expected insufficient_samples");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::insufficient_samples);
    }
    std::vector<double> flat(20, 5.0);
    try {
        fit_distribution(flat, Family::normal);
        FAIL("expected degenerate_sample");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::degenerate_sample);
    }
    std::vector<double> negative = {-1, 2, 3, 4, 5, 6, 7, 8, 9};
    try {
        fit_distribution(negative, Family::lognormal);
        FAIL("expected support_violation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::support_violation);
    }
}

TEST_CASE("two-sample ks separates the urban and rural scales") {
    const auto urban = lognormal_sample(91, 5000, 0.6, 268.7);
    const auto rural = lognormal_sample(92, 5000, 0.6, 155.3);
    const auto result = two_sample_ks(urban, rural);
    CHECK(result.statistic > 0.15);
    CHECK(result.p_value < 0.001);
}

TEST_CASE("identical samples give a zero ks distance") {
    const auto sample = lognormal_sample(93, 1000, 0.5, 100.0);
    const auto result = two_sample_ks(sample, sample);
    CHECK(result.statistic == 0.0);
    CHECK(result.p_value == 1.0);
}

TEST_CASE("kolmogorov survival function matches reference values") {
    CHECK(kolmogorov_sf(0.5) == doctest::Approx(0.9639452436648751).epsilon(1e-12));
    CHECK(kolmogorov_sf(1.0) == doctest::Approx(0.26999967167735456).epsilon(1e-12));
    CHECK(kolmogorov_sf(2.0) == doctest::Approx(0.0006709252557796953).epsilon(1e-9));
    CHECK(kolmogorov_sf(0.0) == 1.0);
    CHECK(kolmogorov_sf(10.0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("checkerboard fields reach the rook-weights minimum of -1") {
    const auto weights = SpatialWeights::rook_grid(2, 2);
    const std::vector<double> values = {1, -1, -1, 1};
    const auto result = morans_i(values, weights, 0, 1);
    CHECK(std::abs(result.i - (-1.0)) <= 1e-12);

    const auto big = SpatialWeights::rook_grid(6, 6);
    std::vector<double> board(36);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 6; ++c)
            board[r * 6 + c] = ((r + c) % 2 == 0) ? 1.0 : -1.0;
    CHECK(morans_i(board, big, 0, 1).i == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("constant fields have no spatial structure to test") {
    const auto weights = SpatialWeights::rook_grid(3, 3);
    const std::vector<double> flat(9, 2.5);
    try {
        morans_i(flat, weights, 99, 1);
        FAIL("expected zero_variance");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::zero_variance);
    }
}

TEST_CASE("a smooth gradient is strongly clustered") {
    const auto weights = SpatialWeights::rook_grid(10, 10);
    std::vector<double> gradient;
    gradient.reserve(100);
    for (std::size_t r = 0; r < 10; ++r)
        for (std::size_t c = 0; c < 10; ++c)
            gradient.push_back(static_cast<double>(r + c));
    const auto result = morans_i(gradient, weights, 999, 20230102);
    CHECK(result.i > 0.5);
    CHECK(result.p_value < 0.01);
    CHECK(result.permutations == 999);
}

TEST_CASE("moran is invariant under affine maps of the values") {
    Rng rng(314);
    std::vector<double> values(64);
    for (auto& v : values)
        v = rng.uniform() * 10;
    std::vector<double> mapped(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        mapped[i] = -3.5 * values[i] + 11.0;
    const auto weights = SpatialWeights::rook_grid(8, 8);
    const auto a = morans_i(values, weights, 99, 7);
    const auto b = morans_i(mapped, weights, 99, 7);
    CHECK(a.i == doctest::Approx(b.i).epsilon(1e-12));
    CHECK(a.p_value == b.p_value); // same permutation stream, same ranks
}

TEST_CASE("permutation p-values are thread-count independent") {
    std::vector<double> gradient;
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c)
            gradient.push_back(static_cast<double>(r) * 1.7 + c);
    const auto weights = SpatialWeights::rook_grid(8, 8);
    const auto serial = morans_i(gradient, weights, 499, 55, 1);
    const auto parallel = morans_i(gradient, weights, 499, 55, 8);
    CHECK(serial.i == parallel.i);
    CHECK(serial.p_value == parallel.p_value);
}

TEST_CASE("edge-list weights match the equivalent grid") {
    // 2x2 rook grid written out by hand
    std::vector<std::string> ids = {"a", "b", "c", "d"};
    std::vector<std::pair<std::string, std::string>> edges = {
        {"a", "b"}, {"a", "c"}, {"b", "d"}, {"c", "d"}};
    const auto manual = SpatialWeights::from_edges(ids, edges);
    const auto grid = SpatialWeights::rook_grid(2, 2);
    const std::vector<double> values = {4, 1, 1, 4};
    CHECK(morans_i(values, manual, 0, 1).i ==
          doctest::Approx(morans_i(values, grid, 0, 1).i).epsilon(1e-15));

    CHECK_THROWS_AS(SpatialWeights::from_edges({"a", "a"}, {}), Error);
    CHECK_THROWS_AS(SpatialWeights::from_edges(ids, std::array{std::pair<std::string,
                        std::string>{"a", "z"}}), Error);
}

TEST_CASE("pearson r on an exact line") {
    std::vector<double> x, y;
    for (int i = 0; i < 50; ++i) {
        x.push_back(i);
        y.push_back(2.0 * i + 1);
    }
    const auto result = pearson_r(x, y);
    CHECK(result.r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(result.p_value < 1e-12);
    CHECK(result.n == 50);

    for (auto& v : y)
        v = -v;
    CHECK(pearson_r(x, y).r == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("independent noise is not significant") {
    const auto x = normal_sample(21, 200, 0, 1);
    const auto y = normal_sample(22, 200, 0, 1);
    const auto result = pearson_r(x, y);
    CHECK(std::abs(result.r) < 0.2);
    CHECK(result.p_value > 0.01);
    CHECK(result.ci_low < result.r);
    CHECK(result.r < result.ci_high);
}

TEST_CASE("pearson preconditions") {
    std::vector<double> x = {1, 2};
    CHECK_THROWS_AS(pearson_r(x, x), Error);
    std::vector<double> flat(10, 1.0), varying = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    try {
        pearson_r(flat, varying);
        FAIL("expected constant_input");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::constant_input);
    }
    std::vector<double> uneven = {1, 2, 3};
    CHECK_THROWS_AS(pearson_r(uneven, varying), Error);
}

TEST_CASE("fisher-z intervals cover a true r of 0.3 at least 93 percent of the time") {
    const double rho = 0.3;
    const double residual = std::sqrt(1 - rho * rho);
    std::size_t covered = 0;
    for (std::uint64_t sim = 0; sim < 1000; ++sim) {
        Rng rng(900000 + sim);
        std::vector<double> x(100), y(100);
        for (std::size_t i = 0; i < 100; ++i) {
            x[i] = rng.normal();
            y[i] = rho * x[i] + residual * rng.normal();
        }
        const auto result = pearson_r(x, y);
        if (result.ci_low <= rho && rho <= result.ci_high)
            ++covered;
    }
    CHECK(covered >= 930);
}
