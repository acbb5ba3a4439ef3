#pragma once

#include <span>
#include <string>
#include <vector>

#include "dbmef/base_classifier.hpp"
#include "dbmef/dataset.hpp"

namespace dbmef {

/// absolute: threshold is prot itself, gate is S(x) < prot.
/// quantile: threshold is the nearest-rank lower-(1 - prot) percentile of the
///           correct-sample scores, gate is S(x) <= threshold.
enum class ThresholdMode { absolute, quantile };

enum class ThresholdKind { value, always, never };

struct ProtectorCalibration {
    std::vector<double> correct_scores;
    double prot = 0.95;
    ThresholdMode mode = ThresholdMode::absolute;
    ThresholdKind kind = ThresholdKind::value;
    double threshold = 0.95;  // meaningful only when kind == value
};

inline constexpr double kDefaultProt = 0.95;

/// S(x) of every correctly classified example, in dataset order.
std::vector<double> collect_correct_scores(const ClassifierParams& classifier, const Dataset& train);

ProtectorCalibration calibrate_threshold(std::span<const double> scores, double prot, ThresholdMode mode);

/// Nearest-rank index k = max(1, ceil(alpha * n)), 1-based.
std::size_t nearest_rank(double alpha, std::size_t n);

bool should_reclassify(double s_value, const ProtectorCalibration& calibration);

enum class RankTestMethod { automatic, exact, normal };

struct RankTestResult {
    double u_statistic = 0.0;
    double p_value = 1.0;
    double cohens_d = 0.0;
    bool exact = false;
};

/// Two-sided Mann-Whitney U test of sample_a against sample_b, with
/// U = #{a > b} + 0.5 #{a == b}. `automatic` enumerates the permutation
/// distribution when n_a * n_b <= 400 and uses the tie-corrected normal
/// approximation with continuity correction otherwise.
RankTestResult mann_whitney(std::span<const double> sample_a, std::span<const double> sample_b,
                            RankTestMethod method = RankTestMethod::automatic);

inline constexpr std::size_t kExactRankTestLimit = 400;

/// S(x) and whether the base classifier was right, for every example.
struct ScoreDistribution {
    std::vector<double> scores;
    std::vector<bool> correct;
};

ScoreDistribution score_distribution(const ClassifierParams& classifier, const Dataset& data);

/// "score,correct" CSV with one row per example.
std::string score_distribution_csv(const ScoreDistribution& dist);

const char* to_string(ThresholdMode mode);
ThresholdMode threshold_mode_from_string(const std::string& s);

}  // namespace dbmef
