#include "stu/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/polygamma.hpp>

#include "stu/rng.hpp"

namespace stu {

namespace {

constexpr std::size_t kLocationGridPoints = 32;
constexpr double kZ975 = 1.959963984540054;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double mean_of(std::span<const double> xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

struct Moments {
    double mean = 0;
    double log_mean = 0;     // mean of ln x
    double log_var = 0;      // MLE variance of ln x
    double sum_log = 0;      // sum of ln x
};

Moments shifted_moments(std::span<const double> xs, double loc) {
    Moments m;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) {
        const double z = x - loc;
        m.mean += z;
        m.sum_log += std::log(z);
    }
    m.mean /= n;
    m.log_mean = m.sum_log / n;
    for (double x : xs)
        m.log_var += (std::log(x - loc) - m.log_mean) * (std::log(x - loc) - m.log_mean);
    m.log_var /= n;
    return m;
}

// Weibull shape solve: g(k) = sum z^k ln z / sum z^k - 1/k - mean(ln z) is
// increasing in k, so bisection is safe. Powers are taken on z/zmax to stay
// finite.
double weibull_shape(std::span<const double> xs, double loc, double log_mean_shifted) {
    double zmax = 0;
    for (double x : xs)
        zmax = std::max(zmax, x - loc);
    auto g = [&](double k) {
        double num = 0;
        double den = 0;
        for (double x : xs) {
            const double u = (x - loc) / zmax;
            const double uk = std::pow(u, k);
            num += uk * std::log(u);
            den += uk;
        }
        return std::log(zmax) + num / den - 1.0 / k - log_mean_shifted;
    };
    double lo = 1e-3;
    double hi = 128;
    if (g(lo) > 0)
        return lo;
    if (g(hi) < 0)
        return hi;
    for (int iter = 0; iter < 200 && hi - lo > 1e-13 * hi; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Gamma shape by Newton on ln a - digamma(a) = s, started from the standard
// closed-form approximation.
double gamma_shape(double s) {
    double a = (3 - s + std::sqrt((s - 3) * (s - 3) + 24 * s)) / (12 * s);
    for (int iter = 0; iter < 50; ++iter) {
        const double f = std::log(a) - boost::math::digamma(a) - s;
        const double fp = 1.0 / a - boost::math::polygamma(1, a);
        const double next = a - f / fp;
        if (!(next > 0))
            break;
        if (std::abs(next - a) < 1e-13 * a) {
            a = next;
            break;
        }
        a = next;
    }
    return a;
}

struct GammaFit {
    double shape = 0;
    double location = 0;
    double scale = 0;
    double log_likelihood = -std::numeric_limits<double>::infinity();
};

GammaFit fit_gamma_profile(std::span<const double> xs, double xmin) {
    const double n = static_cast<double>(xs.size());
    GammaFit best;
    for (std::size_t i = 0; i < kLocationGridPoints; ++i) {
        const double loc = xmin * static_cast<double>(i) / static_cast<double>(kLocationGridPoints);
        const Moments m = shifted_moments(xs, loc);
        const double s = std::log(m.mean) - m.log_mean;
        if (!(s > 0))
            continue;
        const double a = gamma_shape(s);
        if (!std::isfinite(a) || a <= 0)
            continue;
        const double theta = m.mean / a;
        const double ll = (a - 1) * m.sum_log - n * m.mean / theta - n * a * std::log(theta) -
                          n * std::lgamma(a);
        if (ll > best.log_likelihood)
            best = {a, loc, theta, ll};
    }
    if (!std::isfinite(best.log_likelihood))
        throw Error(ErrorKind::degenerate_sample, "gamma profile fit found no usable location");
    return best;
}

void require_positive_support(std::span<const double> xs, Family family) {
    if (xs.front() <= 0) // sorted ascending
        throw Error(ErrorKind::support_violation,
                    std::string(family_name(family)) +
                        " fit needs strictly positive samples, minimum is " +
                        format_double(xs.front()));
}

double ks_statistic_against(const DistributionFit& fit, std::span<const double> sorted) {
    const double n = static_cast<double>(sorted.size());
    double d = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = fit.cdf(sorted[i]);
        d = std::max(d, f - static_cast<double>(i) / n);
        d = std::max(d, static_cast<double>(i + 1) / n - f);
    }
    return std::min(d, 1.0);
}

} // namespace

std::string_view family_name(Family family) {
    switch (family) {
    case Family::normal:
        return "normal";
    case Family::lognormal:
        return "lognormal";
    case Family::weibull:
        return "weibull";
    case Family::exponential:
        return "exponential";
    case Family::gamma:
        return "gamma";
    case Family::powerlaw:
        return "powerlaw";
    case Family::chisquared:
        return "chisquared";
    }
    return "";
}

std::optional<Family> family_from_name(std::string_view name) {
    for (Family f : kFamilies)
        if (family_name(f) == name)
            return f;
    return std::nullopt;
}

double DistributionFit::cdf(double x) const {
    switch (family) {
    case Family::normal:
        return normal_cdf((x - location) / scale);
    case Family::lognormal: {
        if (x <= location)
            return 0;
        return normal_cdf((std::log(x - location) - std::log(scale)) / shape);
    }
    case Family::weibull: {
        if (x <= location)
            return 0;
        return 1 - std::exp(-std::pow((x - location) / scale, shape));
    }
    case Family::exponential: {
        if (x <= location)
            return 0;
        return 1 - std::exp(-(x - location) / scale);
    }
    case Family::gamma: {
        if (x <= location)
            return 0;
        return boost::math::gamma_p(shape, (x - location) / scale);
    }
    case Family::powerlaw: {
        if (x <= scale)
            return 0;
        return 1 - std::pow(scale / x, shape);
    }
    case Family::chisquared: {
        if (x <= location)
            return 0;
        return boost::math::gamma_p(shape / 2, (x - location) / (2 * scale));
    }
    }
    return 0;
}

DistributionFit fit_distribution(std::span<const double> samples, Family family) {
    if (samples.size() < 8)
        throw Error(ErrorKind::insufficient_samples,
                    "need at least 8 samples, got " + std::to_string(samples.size()));
    std::vector<double> xs(samples.begin(), samples.end());
    for (double x : xs)
        if (!std::isfinite(x))
            throw Error(ErrorKind::bad_format, "non-finite sample");
    std::sort(xs.begin(), xs.end());
    if (xs.front() == xs.back())
        throw Error(ErrorKind::degenerate_sample, "all samples equal");

    const double n = static_cast<double>(xs.size());
    DistributionFit fit;
    fit.family = family;
    fit.sample_size = xs.size();

    switch (family) {
    case Family::normal: {
        const double mu = mean_of(xs);
        double ss = 0;
        for (double x : xs)
            ss += (x - mu) * (x - mu);
        const double sigma = std::sqrt(ss / n);
        fit.location = mu;
        fit.scale = sigma;
        fit.log_likelihood = -0.5 * n * std::log(2 * std::numbers::pi) - n * std::log(sigma) - n / 2;
        break;
    }
    case Family::lognormal: {
        require_positive_support(xs, family);
        double best_ll = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < kLocationGridPoints; ++i) {
            const double loc =
                xs.front() * static_cast<double>(i) / static_cast<double>(kLocationGridPoints);
            const Moments m = shifted_moments(xs, loc);
            if (!(m.log_var > 0))
                continue;
            const double sigma = std::sqrt(m.log_var);
            const double ll = -m.sum_log - n * std::log(sigma) -
                              0.5 * n * std::log(2 * std::numbers::pi) - n / 2;
            if (ll > best_ll) {
                best_ll = ll;
                fit.shape = sigma;
                fit.location = loc;
                fit.scale = std::exp(m.log_mean);
            }
        }
        if (!std::isfinite(best_ll))
            throw Error(ErrorKind::degenerate_sample, "lognormal profile fit failed");
        fit.log_likelihood = best_ll;
        break;
    }
    case Family::weibull: {
        require_positive_support(xs, family);
        double best_ll = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < kLocationGridPoints; ++i) {
            const double loc =
                xs.front() * static_cast<double>(i) / static_cast<double>(kLocationGridPoints);
            const Moments m = shifted_moments(xs, loc);
            const double k = weibull_shape(xs, loc, m.log_mean);
            double sum_pow = 0;
            double zmax = xs.back() - loc;
            for (double x : xs)
                sum_pow += std::pow((x - loc) / zmax, k);
            const double lambda = zmax * std::pow(sum_pow / n, 1.0 / k);
            double sum_scaled = 0;
            for (double x : xs)
                sum_scaled += std::pow((x - loc) / lambda, k);
            const double ll =
                n * std::log(k) - n * k * std::log(lambda) + (k - 1) * m.sum_log - sum_scaled;
            if (ll > best_ll) {
                best_ll = ll;
                fit.shape = k;
                fit.location = loc;
                fit.scale = lambda;
            }
        }
        if (!std::isfinite(best_ll))
            throw Error(ErrorKind::degenerate_sample, "weibull profile fit failed");
        fit.log_likelihood = best_ll;
        break;
    }
    case Family::exponential: {
        const double loc = xs.front();
        const double scale = mean_of(xs) - loc;
        if (!(scale > 0))
            throw Error(ErrorKind::degenerate_sample, "zero spread above the minimum");
        fit.location = loc;
        fit.scale = scale;
        fit.log_likelihood = -n * std::log(scale) - n;
        break;
    }
    case Family::gamma: {
        require_positive_support(xs, family);
        const GammaFit g = fit_gamma_profile(xs, xs.front());
        fit.shape = g.shape;
        fit.location = g.location;
        fit.scale = g.scale;
        fit.log_likelihood = g.log_likelihood;
        break;
    }
    case Family::powerlaw: {
        require_positive_support(xs, family);
        const double xmin = xs.front();
        double sum_log_ratio = 0;
        for (double x : xs)
            sum_log_ratio += std::log(x / xmin);
        const double b = n / sum_log_ratio;
        fit.shape = b;
        fit.location = 0;
        fit.scale = xmin;
        fit.log_likelihood = n * std::log(b) + n * b * std::log(xmin) - (b + 1) * (sum_log_ratio + n * std::log(xmin));
        break;
    }
    case Family::chisquared: {
        require_positive_support(xs, family);
        const GammaFit g = fit_gamma_profile(xs, xs.front());
        fit.shape = 2 * g.shape;
        fit.location = g.location;
        fit.scale = g.scale / 2;
        fit.log_likelihood = g.log_likelihood;
        break;
    }
    }

    fit.ks_statistic = ks_statistic_against(fit, xs);
    fit.p_value = kolmogorov_sf(std::sqrt(n) * fit.ks_statistic);
    return fit;
}

FamilyRanking select_best_family(std::span<const double> samples,
                                 std::span<const Family> families) {
    FamilyRanking out;
    for (Family family : families) {
        try {
            out.ranked.push_back(fit_distribution(samples, family));
        } catch (const Error& e) {
            out.unfit.emplace_back(family, std::string(error_name(e.kind())) + ": " + e.what());
        }
    }
    std::stable_sort(out.ranked.begin(), out.ranked.end(),
                     [](const DistributionFit& a, const DistributionFit& b) {
                         return a.ks_statistic < b.ks_statistic;
                     });
    return out;
}

KsResult two_sample_ks(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty())
        throw Error(ErrorKind::too_few_points, "two-sample KS needs nonempty samples");
    std::vector<double> xs(a.begin(), a.end());
    std::vector<double> ys(b.begin(), b.end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const double n1 = static_cast<double>(xs.size());
    const double n2 = static_cast<double>(ys.size());

    double d = 0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < xs.size() && j < ys.size()) {
        const double v = std::min(xs[i], ys[j]);
        while (i < xs.size() && xs[i] == v)
            ++i;
        while (j < ys.size() && ys[j] == v)
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
    }
    d = std::min(d, 1.0);

    const double effective = n1 * n2 / (n1 + n2);
    return {d, kolmogorov_sf(std::sqrt(effective) * d)};
}

double kolmogorov_sf(double lambda) {
    if (lambda <= 1e-12)
        return 1;
    double sum = 0;
    for (int j = 1; j <= 1000; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += (j % 2 == 1 ? term : -term);
        if (term < 1e-16)
            break;
    }
    return std::clamp(2 * sum, 0.0, 1.0);
}

SpatialWeights SpatialWeights::from_edges(std::vector<std::string> ids,
                                          std::span<const std::pair<std::string, std::string>> edges,
                                          bool row_standardize) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (!index.emplace(ids[i], i).second)
            throw Error(ErrorKind::bad_format, "duplicate unit id '" + ids[i] + "'");

    std::vector<std::set<std::size_t>> adjacency(ids.size());
    for (const auto& [a, b] : edges) {
        const auto ia = index.find(a);
        const auto ib = index.find(b);
        if (ia == index.end() || ib == index.end())
            throw Error(ErrorKind::bad_format,
                        "edge (" + a + ", " + b + ") references an unknown unit");
        if (ia->second == ib->second)
            throw Error(ErrorKind::bad_format, "self loop on unit '" + a + "'");
        adjacency[ia->second].insert(ib->second);
        adjacency[ib->second].insert(ia->second);
    }

    SpatialWeights w;
    w.ids_ = std::move(ids);
    w.row_standardized_ = row_standardize;
    w.neighbors_.resize(adjacency.size());
    for (std::size_t i = 0; i < adjacency.size(); ++i) {
        const double weight =
            row_standardize && !adjacency[i].empty()
                ? 1.0 / static_cast<double>(adjacency[i].size())
                : 1.0;
        for (std::size_t j : adjacency[i])
            w.neighbors_[i].emplace_back(j, weight);
    }
    return w;
}

SpatialWeights SpatialWeights::rook_grid(std::size_t rows, std::size_t cols, bool row_standardize) {
    std::vector<std::string> ids;
    ids.reserve(rows * cols);
    std::vector<std::pair<std::string, std::string>> edges;
    auto name = [](std::size_t r, std::size_t c) {
        return std::to_string(r) + "_" + std::to_string(c);
    };
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            ids.push_back(name(r, c));
            if (r + 1 < rows)
                edges.emplace_back(name(r, c), name(r + 1, c));
            if (c + 1 < cols)
                edges.emplace_back(name(r, c), name(r, c + 1));
        }
    return from_edges(std::move(ids), edges, row_standardize);
}

MoranResult morans_i(std::span<const double> values, const SpatialWeights& weights,
                     std::size_t permutations, std::uint64_t seed, int threads) {
    if (values.size() != weights.size())
        throw Error(ErrorKind::bad_format, "value count " + std::to_string(values.size()) +
                                               " does not match unit count " +
                                               std::to_string(weights.size()));
    const std::size_t n = values.size();
    if (n < 3)
        throw Error(ErrorKind::too_few_units, "need at least 3 units, got " + std::to_string(n));

    std::vector<double> z(values.begin(), values.end());
    const double mu = mean_of(z);
    double denom = 0;
    for (auto& v : z) {
        v -= mu;
        denom += v * v;
    }
    if (denom <= 0)
        throw Error(ErrorKind::zero_variance, "value field is constant");

    double s0 = 0;
    for (const auto& row : weights.rows())
        for (const auto& [j, w] : row)
            s0 += w;
    if (s0 <= 0)
        throw Error(ErrorKind::bad_format, "weights matrix has no edges");

    auto statistic = [&](std::span<const double> field) {
        double cross = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [j, w] : weights.rows()[i])
                cross += w * field[i] * field[j];
        return static_cast<double>(n) / s0 * cross / denom;
    };

    MoranResult result;
    result.i = statistic(z);
    result.n = n;
    result.permutations = permutations;

    if (permutations == 0) {
        result.p_value = std::numeric_limits<double>::quiet_NaN();
        return result;
    }
    std::vector<double> perm_stats(permutations);
    parallel_for(permutations, threads, [&](std::size_t p) {
        Rng rng(derive_seed(seed, "moran-perm", p));
        std::vector<double> shuffled = z;
        rng.shuffle(std::span<double>(shuffled));
        perm_stats[p] = statistic(shuffled);
    });
    std::size_t at_or_below = 0;
    std::size_t at_or_above = 0;
    for (double s : perm_stats) {
        if (s <= result.i)
            ++at_or_below;
        if (s >= result.i)
            ++at_or_above;
    }
    const double denom_p = static_cast<double>(permutations + 1);
    const double lower = (1 + static_cast<double>(at_or_below)) / denom_p;
    const double upper = (1 + static_cast<double>(at_or_above)) / denom_p;
    result.p_value = std::min(1.0, 2 * std::min(lower, upper));
    return result;
}

PearsonResult pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw Error(ErrorKind::bad_format, "variable lengths differ");
    const std::size_t n = x.size();
    if (n < 4)
        throw Error(ErrorKind::too_few_points, "need at least 4 points, got " + std::to_string(n));
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0;
    double syy = 0;
    double sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0 || syy <= 0)
        throw Error(ErrorKind::constant_input, "a variable is constant");

    PearsonResult result;
    result.n = n;
    result.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);

    const double nu = static_cast<double>(n - 2);
    const double one_minus_r2 = 1 - result.r * result.r;
    if (one_minus_r2 < 1e-15) {
        result.p_value = 0;
        result.ci_low = result.r;
        result.ci_high = result.r;
        return result;
    }
    const double t2 = result.r * result.r * nu / one_minus_r2;
    result.p_value = boost::math::ibeta(nu / 2, 0.5, nu / (nu + t2));

    const double fisher = std::atanh(result.r);
    const double half_width = kZ975 / std::sqrt(static_cast<double>(n - 3));
    result.ci_low = std::tanh(fisher - half_width);
    result.ci_high = std::tanh(fisher + half_width);
    return result;
}

} // namespace stu
