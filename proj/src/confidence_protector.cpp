#include "dbmef/confidence_protector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>

#include "dbmef/error.hpp"

namespace dbmef {
namespace {

struct Moments {
    double mean = 0.0;
    double sum_sq_dev = 0.0;
};

Moments moments(std::span<const double> v) {
    Moments m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (double x : v) m.sum_sq_dev += (x - m.mean) * (x - m.mean);
    return m;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
    const Moments ma = moments(a), mb = moments(b);
    const double diff = ma.mean - mb.mean;
    const double dof = static_cast<double>(a.size() + b.size()) - 2.0;
    const double pooled = dof > 0.0 ? std::sqrt((ma.sum_sq_dev + mb.sum_sq_dev) / dof) : 0.0;
    if (pooled == 0.0) {
        if (diff == 0.0) return 0.0;
        return diff > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    return diff / pooled;
}

struct PooledRanks {
    std::vector<std::int64_t> doubled_ranks;  // 2 * midrank per pooled element, ascending values
    std::int64_t doubled_rank_sum_a = 0;
    double tie_term = 0.0;                    // sum over tie groups of t^3 - t
};

PooledRanks pooled_ranks(std::span<const double> a, std::span<const double> b) {
    struct Item {
        double value;
        bool from_a;
    };
    std::vector<Item> items;
    items.reserve(a.size() + b.size());
    for (double x : a) items.push_back({x, true});
    for (double x : b) items.push_back({x, false});
    std::sort(items.begin(), items.end(), [](const Item& l, const Item& r) { return l.value < r.value; });

    PooledRanks out;
    out.doubled_ranks.resize(items.size());
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        while (j + 1 < items.size() && items[j + 1].value == items[i].value) ++j;
        // ranks i+1 .. j+1 share the midrank (i + j + 2) / 2
        const auto doubled = static_cast<std::int64_t>(i + j + 2);
        const double t = static_cast<double>(j - i + 1);
        out.tie_term += t * t * t - t;
        for (std::size_t k = i; k <= j; ++k) {
            out.doubled_ranks[k] = doubled;
            if (items[k].from_a) out.doubled_rank_sum_a += doubled;
        }
        i = j + 1;
    }
    return out;
}

// Two-sided exact p: fraction of size-n_a subsets of the pooled ranks whose
// |2U - n_a n_b| is at least the observed one.
double exact_p_value(const PooledRanks& ranks, std::size_t n_a, std::size_t n_b, std::int64_t doubled_u) {
    const std::size_t n = n_a + n_b;
    const std::int64_t max_sum = 2 * static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n_a);
    // counts[j][s]: subsets of size j with doubled rank sum s
    std::vector<std::vector<std::uint64_t>> counts(n_a + 1, std::vector<std::uint64_t>(max_sum + 1, 0));
    counts[0][0] = 1;
    for (std::size_t item = 0; item < n; ++item) {
        const std::int64_t r = ranks.doubled_ranks[item];
        for (std::size_t j = std::min(n_a, item + 1); j >= 1; --j) {
            auto& dst = counts[j];
            const auto& src = counts[j - 1];
            for (std::int64_t s = max_sum; s >= r; --s) {
                const std::uint64_t add = src[s - r];
                if (add == 0) continue;
                if (dst[s] > std::numeric_limits<std::uint64_t>::max() - add) {
                    throw ParameterError("exact Mann-Whitney enumeration overflows; use the normal approximation");
                }
                dst[s] += add;
            }
        }
    }
    const auto na = static_cast<std::int64_t>(n_a), nb = static_cast<std::int64_t>(n_b);
    const std::int64_t centre = na * nb;
    const std::int64_t observed = std::llabs(doubled_u - centre);
    std::uint64_t total = 0, extreme = 0;
    for (std::int64_t s = 0; s <= max_sum; ++s) {
        const std::uint64_t c = counts[n_a][s];
        if (c == 0) continue;
        total += c;
        const std::int64_t du = s - na * (na + 1);
        if (std::llabs(du - centre) >= observed) extreme += c;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

double normal_p_value(const PooledRanks& ranks, std::size_t n_a, std::size_t n_b, double u) {
    const double na = static_cast<double>(n_a), nb = static_cast<double>(n_b), n = na + nb;
    const double mean = na * nb / 2.0;
    const double tie_adjust = n > 1.0 ? ranks.tie_term / (n * (n - 1.0)) : 0.0;
    const double variance = na * nb / 12.0 * ((n + 1.0) - tie_adjust);
    if (!(variance > 0.0)) return 1.0;
    const double z = std::max(0.0, std::abs(u - mean) - 0.5) / std::sqrt(variance);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

std::vector<double> collect_correct_scores(const ClassifierParams& classifier, const Dataset& train) {
    if (train.size() == 0) throw DataError("calibration set is empty");
    std::vector<double> scores;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto z = logits(classifier, train.row(i));
        const auto p = softmax(z);
        const auto top = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
        if (top == train.labels[i]) scores.push_back(*std::max_element(p.begin(), p.end()));
    }
    if (scores.empty()) throw CalibrationError("no correctly classified samples to calibrate from");
    return scores;
}

std::size_t nearest_rank(double alpha, std::size_t n) {
    const double x = alpha * static_cast<double>(n);
    // absorb representation error such as (1 - 0.8) * 5 = 1.0000000000000004
    const double k = std::ceil(x - 1e-9 * std::max(1.0, x));
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, n);
}

ProtectorCalibration calibrate_threshold(std::span<const double> scores, double prot, ThresholdMode mode) {
    if (!(prot >= 0.0 && prot <= 1.0)) throw ParameterError("prot must be in [0, 1], got " + std::to_string(prot));
    ProtectorCalibration cal;
    cal.correct_scores.assign(scores.begin(), scores.end());
    cal.prot = prot;
    cal.mode = mode;
    if (prot == 1.0) {
        cal.kind = ThresholdKind::never;
        cal.threshold = 1.0;
        return cal;
    }
    if (prot == 0.0) {
        cal.kind = ThresholdKind::always;
        cal.threshold = 0.0;
        return cal;
    }
    if (mode == ThresholdMode::absolute) {
        cal.threshold = prot;
        return cal;
    }
    if (scores.empty()) throw CalibrationError("quantile calibration needs at least one correct-sample score");
    std::vector<double> sorted(scores.begin(), scores.end());
    const std::size_t k = nearest_rank(1.0 - prot, sorted.size());
    std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
    cal.threshold = sorted[k - 1];
    return cal;
}

bool should_reclassify(double s_value, const ProtectorCalibration& calibration) {
    switch (calibration.kind) {
        case ThresholdKind::always: return true;
        case ThresholdKind::never: return false;
        case ThresholdKind::value: break;
    }
    return calibration.mode == ThresholdMode::absolute ? s_value < calibration.threshold
                                                       : s_value <= calibration.threshold;
}

RankTestResult mann_whitney(std::span<const double> sample_a, std::span<const double> sample_b,
                            RankTestMethod method) {
    if (sample_a.empty() || sample_b.empty()) throw ParameterError("Mann-Whitney needs two non-empty samples");
    const std::size_t n_a = sample_a.size(), n_b = sample_b.size();
    const PooledRanks ranks = pooled_ranks(sample_a, sample_b);
    const auto na = static_cast<std::int64_t>(n_a);
    const std::int64_t doubled_u = ranks.doubled_rank_sum_a - na * (na + 1);

    RankTestResult out;
    out.u_statistic = static_cast<double>(doubled_u) / 2.0;
    out.cohens_d = cohens_d(sample_a, sample_b);
    out.exact = method == RankTestMethod::exact ||
                (method == RankTestMethod::automatic && n_a * n_b <= kExactRankTestLimit);
    out.p_value = out.exact ? exact_p_value(ranks, n_a, n_b, doubled_u)
                            : normal_p_value(ranks, n_a, n_b, out.u_statistic);
    return out;
}

ScoreDistribution score_distribution(const ClassifierParams& classifier, const Dataset& data) {
    ScoreDistribution out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto z = logits(classifier, data.row(i));
        const auto p = softmax(z);
        out.scores.push_back(*std::max_element(p.begin(), p.end()));
        out.correct.push_back(std::max_element(z.begin(), z.end()) - z.begin() == data.labels[i]);
    }
    return out;
}

std::string score_distribution_csv(const ScoreDistribution& dist) {
    std::ostringstream os;
    os.precision(17);
    os << "score,correct\n";
    for (std::size_t i = 0; i < dist.scores.size(); ++i) {
        os << dist.scores[i] << ',' << (dist.correct[i] ? 1 : 0) << '\n';
    }
    return os.str();
}

const char* to_string(ThresholdMode mode) { return mode == ThresholdMode::absolute ? "absolute" : "quantile"; }

ThresholdMode threshold_mode_from_string(const std::string& s) {
    if (s == "absolute") return ThresholdMode::absolute;
    if (s == "quantile") return ThresholdMode::quantile;
    throw ValidationError("threshold mode must be 'absolute' or 'quantile', got '" + s + "'");
}

}  // namespace dbmef
