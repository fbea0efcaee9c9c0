#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stu/common.hpp"

namespace stu {

enum class Family : int { normal = 0, lognormal, weibull, exponential, gamma, powerlaw, chisquared };

inline constexpr std::array<Family, 7> kFamilies = {
    Family::normal, Family::lognormal, Family::weibull, Family::exponential,
    Family::gamma,  Family::powerlaw,  Family::chisquared,
};

std::string_view family_name(Family family);
std::optional<Family> family_from_name(std::string_view name);

// Maximum-likelihood fit of one family. (shape, location, scale) follow the
// usual conventions per family: normal ignores shape; lognormal shape is the
// log-sigma and scale the median; weibull/gamma carry their shape and scale;
// exponential pins location at the minimum; powerlaw's shape is the survival
// exponent with scale = the sample minimum; chisquared's shape is the degrees
// of freedom. Three-parameter families pick the location by profile
// likelihood over a 32-point grid between 0 and the sample minimum.
struct DistributionFit {
    Family family = Family::normal;
    double shape = 0;
    double location = 0;
    double scale = 1;
    double ks_statistic = 0;
    double p_value = 0;
    double log_likelihood = 0;
    std::size_t sample_size = 0;

    double cdf(double x) const;
};

// Requires n >= 8 finite samples with nonzero spread; log-and-power families
// additionally require a positive minimum. The KS p-value uses the asymptotic
// Kolmogorov distribution, which is approximate when parameters come from the
// same sample.
DistributionFit fit_distribution(std::span<const double> samples, Family family);

struct FamilyRanking {
    std::vector<DistributionFit> ranked;                   // ascending KS statistic
    std::vector<std::pair<Family, std::string>> unfit;     // family, reason
};

FamilyRanking select_best_family(std::span<const double> samples,
                                 std::span<const Family> families);

struct KsResult {
    double statistic = 0;
    double p_value = 1;
};

// Two-sample Kolmogorov-Smirnov: sup ECDF distance with the asymptotic
// p-value at effective size n1*n2/(n1+n2).
KsResult two_sample_ks(std::span<const double> a, std::span<const double> b);

// Survival function of the Kolmogorov distribution, Q(lambda).
double kolmogorov_sf(double lambda);

// Sparse symmetric neighbor weights over an ordered unit list; values passed
// to morans_i align positionally with ids().
class SpatialWeights {
public:
    static SpatialWeights from_edges(std::vector<std::string> ids,
                                     std::span<const std::pair<std::string, std::string>> edges,
                                     bool row_standardize = true);
    static SpatialWeights rook_grid(std::size_t rows, std::size_t cols,
                                    bool row_standardize = true);

    std::size_t size() const { return neighbors_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    bool row_standardized() const { return row_standardized_; }
    const std::vector<std::vector<std::pair<std::size_t, double>>>& rows() const {
        return neighbors_;
    }

private:
    std::vector<std::string> ids_;
    std::vector<std::vector<std::pair<std::size_t, double>>> neighbors_;
    bool row_standardized_ = false;
};

struct MoranResult {
    double i = 0;
    double p_value = 1; // two-sided permutation p; NaN when permutations = 0
    std::size_t n = 0;
    std::size_t permutations = 0;
};

MoranResult morans_i(std::span<const double> values, const SpatialWeights& weights,
                     std::size_t permutations, std::uint64_t seed, int threads = 1);

struct PearsonResult {
    double r = 0;
    double p_value = 1; // two-sided t-test
    double ci_low = 0;  // 95% Fisher-z interval
    double ci_high = 0;
    std::size_t n = 0;
};

PearsonResult pearson_r(std::span<const double> x, std::span<const double> y);

} // namespace stu
