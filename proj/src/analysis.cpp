#include "gacd/analysis.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace gacd {

CorrelationMatrix pearson_correlation(const Matrix& series) {
    const Eigen::Index k = series.rows();
    const Eigen::Index n = series.cols();
    if (n < 1 || k < 2) throw std::invalid_argument("need >= 2 channels and >= 1 sample");

    const Vector mean = series.rowwise().mean();
    Matrix centered = series.colwise() - mean;
    Vector stddev(k);
    for (Eigen::Index i = 0; i < k; ++i)
        stddev(i) = std::sqrt(centered.row(i).squaredNorm() / static_cast<Scalar>(n));

    CorrelationMatrix out;
    out.values.resize(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            Scalar r;
            if (i == j) {
                r = 1.0;
            } else if (stddev(i) == 0.0 || stddev(j) == 0.0) {
                out.had_zero_variance = true;  // constant channel, correlation undefined
                r = 0.0;
            } else {
                r = centered.row(i).dot(centered.row(j)) /
                    (static_cast<Scalar>(n) * stddev(i) * stddev(j));
                r = std::min(1.0, std::max(-1.0, r));
            }
            out.values(i, j) = r;
            out.values(j, i) = r;
        }
    }
    return out;
}

CorrelationMatrix logits_correlation(Classifier& model, const Dataset& data,
                                     const DatasetSplit& split,
                                     const std::optional<AttackBudget>& budget, uint64_t seed) {
    if (split.size() == 0) throw std::invalid_argument("empty split");
    const int num_classes = model.num_classes();
    if (num_classes < 2) throw std::invalid_argument("correlation needs at least two classes");

    Matrix logits(num_classes, split.size());
    const int batch = 128;
    for (int start = 0; start < split.size(); start += batch) {
        const int n = std::min(batch, split.size() - start);
        Matrix x = split.x.middleCols(start, n);
        if (budget) {
            std::vector<int> y(split.y.begin() + start, split.y.begin() + start + n);
            auto rng = subrng(seed, {fnv1a64("corr_attack"), static_cast<uint64_t>(start)});
            x = pgd_attack(model, x, y, *budget, rng);
        }
        logits.middleCols(start, n) = model.logits(x);
    }
    return pearson_correlation(logits);
}

CorrelationDiff correlation_difference(const CorrelationMatrix& teacher,
                                       const CorrelationMatrix& student) {
    if (teacher.values.rows() != student.values.rows() ||
        teacher.values.cols() != student.values.cols())
        throw std::invalid_argument("correlation matrix shape mismatch");
    CorrelationDiff diff;
    diff.abs_diff = (teacher.values - student.values).cwiseAbs();
    const Eigen::Index k = diff.abs_diff.rows();
    if (k > 1) {
        Scalar sum = diff.abs_diff.sum() - diff.abs_diff.diagonal().sum();
        diff.mean_off_diagonal = sum / static_cast<Scalar>(k * (k - 1));
    }
    return diff;
}

void save_correlation(const std::string& path, const CorrelationMatrix& m, uint64_t config_hash) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write correlation matrix: " + path);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, config_hash);
    out << "# gacd-correlation v1 k=" << m.values.rows() << " config=" << buf
        << (m.had_zero_variance ? " zero-variance-channels" : "") << "\n";
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.12g", m.values(i, j));
            out << buf << (j + 1 < m.values.cols() ? "\t" : "\n");
        }
    }
}

ExportStats export_features(Classifier& model, const Dataset& data,
                            const std::vector<ExportGroup>& groups, const AttackBudget& budget,
                            uint64_t seed, const std::string& path, uint64_t config_hash) {
    for (const ExportGroup& g : groups) {
        if (g.cls < 0 || g.cls >= data.num_classes)
            throw std::invalid_argument("export group class out of range");
        if (g.adversarial && (g.target_class < 0 || g.target_class >= data.num_classes))
            throw std::invalid_argument("export group target class out of range");
        if (g.count < 0) throw std::invalid_argument("export group count must be nonnegative");
    }

    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const std::string tmp = path + ".tmp";
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write feature dump: " + path);

    const int dim = model.backbone().feature_dim();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, config_hash);
    out << "# gacd-features v1 dim=" << dim << " config=" << buf << "\n";
    out << "id\tclass\tvariant";
    for (int i = 0; i < dim; ++i) out << "\tf" << i;
    out << "\n";

    ExportStats stats;
    const DatasetSplit& split = data.test;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        const ExportGroup& g = groups[gi];
        std::vector<int> pool;
        for (int i = 0; i < split.size(); ++i)
            if (split.y[static_cast<size_t>(i)] == g.cls) pool.push_back(i);
        if (pool.empty() && g.count > 0)
            throw std::invalid_argument("no samples of class " + std::to_string(g.cls));

        // seeded sample without replacement (cycling if count > pool)
        auto rng = subrng(seed, {fnv1a64("export"), gi});
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<int> chosen;
        for (int i = 0; i < g.count; ++i) chosen.push_back(pool[static_cast<size_t>(i) % pool.size()]);

        for (size_t ci = 0; ci < chosen.size(); ++ci) {
            const int idx = chosen[ci];
            Matrix x = split.x.col(idx);
            const char* variant = "natural";
            if (g.adversarial) {
                variant = "adversarial";
                AttackStats astats;
                auto arng = subrng(seed, {fnv1a64("export_attack"), gi, ci});
                x = pgd_attack_targeted(model, x, {g.target_class}, budget, arng, &astats);
                if (astats.aborted_samples > 0) {
                    ++stats.attack_failures;  // row omitted
                    continue;
                }
            }
            const Matrix feats = model.features(x);
            out << idx << "\t" << g.cls << "\t" << variant;
            for (int i = 0; i < dim; ++i) {
                std::snprintf(buf, sizeof buf, "%.12g", feats(i, 0));
                out << "\t" << buf;
            }
            out << "\n";
            ++stats.rows;
        }
    }
    out.flush();
    out.close();
    std::filesystem::rename(tmp, path);
    return stats;
}

}  // namespace gacd
