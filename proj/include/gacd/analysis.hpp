#ifndef GACD_ANALYSIS_HPP
#define GACD_ANALYSIS_HPP

#include <optional>
#include <string>
#include <vector>

#include "gacd/attacks.hpp"
#include "gacd/data.hpp"
#include "gacd/nn/model.hpp"

namespace gacd {

// K×K Pearson correlations between per-class logit series over a split.
struct CorrelationMatrix {
    Matrix values;
    bool had_zero_variance = false;  // diagnostic: some channel was constant
};

CorrelationMatrix logits_correlation(Classifier& model, const Dataset& data,
                                     const DatasetSplit& split,
                                     const std::optional<AttackBudget>& budget = std::nullopt,
                                     uint64_t seed = 0);

// Pearson correlation between rows of a series matrix (one column per
// sample). Zero-variance rows correlate as 0 with the diagnostic flag set.
CorrelationMatrix pearson_correlation(const Matrix& series);

struct CorrelationDiff {
    Matrix abs_diff;
    Scalar mean_off_diagonal = 0.0;
};

CorrelationDiff correlation_difference(const CorrelationMatrix& teacher,
                                       const CorrelationMatrix& student);

void save_correlation(const std::string& path, const CorrelationMatrix& m, uint64_t config_hash);

// One group of rows for the feature dump: `count` samples of class `cls`,
// natural or adversarially crafted toward `target_class`.
struct ExportGroup {
    int cls = 0;
    int count = 0;
    bool adversarial = false;
    int target_class = 0;
};

struct ExportStats {
    int rows = 0;
    int attack_failures = 0;  // rows omitted
};

// Writes tab-separated penultimate features, one row per sample:
//   # gacd-features v1 dim=<D> config=<hash>
//   id	class	variant	f0	f1 ... f<D-1>
// Sampling is seeded and re-exports byte-identically.
ExportStats export_features(Classifier& model, const Dataset& data,
                            const std::vector<ExportGroup>& groups, const AttackBudget& budget,
                            uint64_t seed, const std::string& path, uint64_t config_hash);

}  // namespace gacd

#endif  // GACD_ANALYSIS_HPP
