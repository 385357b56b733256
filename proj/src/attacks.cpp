#include "gacd/attacks.hpp"

#include <sstream>

namespace gacd {

void AttackBudget::validate() const {
    if (epsilon < 0) throw std::invalid_argument("epsilon must be nonnegative");
    if (steps < 1) throw std::invalid_argument("attack needs at least one step");
    if (epsilon > 0 && (step_size <= 0 || step_size > epsilon))
        throw std::invalid_argument("step size must satisfy 0 < alpha <= epsilon");
}

std::string AttackBudget::describe() const {
    std::ostringstream os;
    os << "pgd-" << steps << " eps=" << epsilon << " alpha=" << step_size << " linf"
       << (random_start ? " rand-start" : "");
    return os.str();
}

void OTConfig::validate() const {
    if (entropic_lambda <= 0) throw std::invalid_argument("entropic lambda must be positive");
    if (iterations < 1) throw std::invalid_argument("sinkhorn needs at least one iteration");
}

namespace {

inline Scalar sign0(Scalar v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

void project_ball_and_box(Matrix& x_adv, const Matrix& x, Scalar eps) {
    for (Eigen::Index j = 0; j < x_adv.cols(); ++j)
        for (Eigen::Index i = 0; i < x_adv.rows(); ++i) {
            Scalar v = x_adv(i, j);
            const Scalar lo = std::max(0.0, x(i, j) - eps);
            const Scalar hi = std::min(1.0, x(i, j) + eps);
            x_adv(i, j) = std::min(std::max(v, lo), hi);
        }
}

Matrix pgd_core(GradModel& model, const Matrix& x, const std::vector<int>& y,
                const AttackBudget& budget, std::mt19937_64& rng, AttackStats* stats,
                Scalar direction) {
    budget.validate();
    if (static_cast<size_t>(x.cols()) != y.size())
        throw std::invalid_argument("batch/label size mismatch");
    if (budget.epsilon == 0.0) return x;  // projection pins every pixel

    Matrix x_adv = x;
    if (budget.random_start && budget.epsilon > 0) {
        std::uniform_real_distribution<Scalar> dist(-budget.epsilon, budget.epsilon);
        for (Eigen::Index j = 0; j < x_adv.cols(); ++j)
            for (Eigen::Index i = 0; i < x_adv.rows(); ++i) x_adv(i, j) += dist(rng);
        project_ball_and_box(x_adv, x, budget.epsilon);
    }

    std::vector<bool> alive(static_cast<size_t>(x.cols()), true);
    for (int step = 0; step < budget.steps; ++step) {
        Matrix g = model.loss_input_grad(x_adv, y);
        for (Eigen::Index j = 0; j < x_adv.cols(); ++j) {
            if (!alive[static_cast<size_t>(j)]) continue;
            if (!g.col(j).allFinite()) {
                alive[static_cast<size_t>(j)] = false;
                x_adv.col(j) = x.col(j);
                if (stats) ++stats->aborted_samples;
                continue;
            }
            for (Eigen::Index i = 0; i < x_adv.rows(); ++i)
                x_adv(i, j) += direction * budget.step_size * sign0(g(i, j));
        }
        project_ball_and_box(x_adv, x, budget.epsilon);
    }
    return x_adv;
}

}  // namespace

Matrix pgd_attack(GradModel& model, const Matrix& x, const std::vector<int>& y,
                  const AttackBudget& budget, std::mt19937_64& rng, AttackStats* stats) {
    return pgd_core(model, x, y, budget, rng, stats, +1.0);
}

Matrix pgd_attack_targeted(GradModel& model, const Matrix& x, const std::vector<int>& targets,
                           const AttackBudget& budget, std::mt19937_64& rng, AttackStats* stats) {
    return pgd_core(model, x, targets, budget, rng, stats, -1.0);
}

namespace {

constexpr Scalar kNormFloor = 1e-12;

// log Σ exp(v_i), explicit loop so transposed runs stay bit-identical.
Scalar log_sum_exp(const std::vector<Scalar>& v) {
    Scalar mx = v[0];
    for (Scalar x : v) mx = std::max(mx, x);
    Scalar s = 0.0;
    for (Scalar x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

// Gauss-Seidel log-domain Sinkhorn ending on the column update, so column
// marginals are exact. Returns the plan for the given cost orientation.
Matrix sinkhorn_plan_raw(const Matrix& cost, const OTConfig& cfg) {
    const Eigen::Index n = cost.rows(), m = cost.cols();
    const Scalar lam = cfg.entropic_lambda;
    const Scalar log_a = -std::log(static_cast<Scalar>(n));
    const Scalar log_b = -std::log(static_cast<Scalar>(m));

    Vector f = Vector::Zero(n), g = Vector::Zero(m);
    std::vector<Scalar> buf;
    for (int it = 0; it < cfg.iterations; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            buf.clear();
            for (Eigen::Index j = 0; j < m; ++j) buf.push_back((g(j) - cost(i, j)) / lam);
            f(i) = lam * (log_a - log_sum_exp(buf));
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            buf.clear();
            for (Eigen::Index i = 0; i < n; ++i) buf.push_back((f(i) - cost(i, j)) / lam);
            g(j) = lam * (log_b - log_sum_exp(buf));
        }
    }

    Matrix plan(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            plan(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / lam);
    return plan;
}

// A canonical orientation makes D(A,B) and D(B,A) run identical arithmetic:
// the cosine cost of the swapped call is exactly the transpose.
bool prefer_transposed(const Matrix& cost) {
    if (cost.rows() != cost.cols()) return cost.rows() > cost.cols();
    for (Eigen::Index i = 0; i < cost.rows(); ++i)
        for (Eigen::Index j = 0; j < cost.cols(); ++j) {
            if (cost(i, j) < cost(j, i)) return false;
            if (cost(i, j) > cost(j, i)) return true;
        }
    return false;
}

}  // namespace

Matrix cosine_cost(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("feature dimension mismatch");
    if (!all_finite(a) || !all_finite(b)) throw std::invalid_argument("non-finite features");
    Matrix cost(a.cols(), b.cols());
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
        const Scalar na = std::max(a.col(i).norm(), kNormFloor);
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            const Scalar nb = std::max(b.col(j).norm(), kNormFloor);
            cost(i, j) = 1.0 - a.col(i).dot(b.col(j)) / (na * nb);
        }
    }
    return cost;
}

Matrix sinkhorn_plan(const Matrix& cost, const OTConfig& cfg) {
    cfg.validate();
    if (cost.rows() < 1 || cost.cols() < 1) throw std::invalid_argument("empty cost matrix");
    if (!all_finite(cost)) throw std::invalid_argument("non-finite cost matrix");
    return sinkhorn_plan_raw(cost, cfg);
}

Scalar sinkhorn_distance(const Matrix& a, const Matrix& b, const OTConfig& cfg) {
    cfg.validate();
    Matrix cost = cosine_cost(a, b);
    if (prefer_transposed(cost)) cost = cost.transpose().eval();
    Matrix plan = sinkhorn_plan_raw(cost, cfg);
    Scalar total = 0.0;
    for (Eigen::Index i = 0; i < cost.rows(); ++i)
        for (Eigen::Index j = 0; j < cost.cols(); ++j) total += plan(i, j) * cost(i, j);
    return total;
}

Matrix feature_scatter_positive(FeatureModel& model, const Matrix& x, const AttackBudget& budget,
                                const OTConfig& cfg, std::mt19937_64& rng, AttackStats* stats) {
    budget.validate();
    cfg.validate();

    const Matrix clean_features = model.features(x);
    if (!all_finite(clean_features)) throw std::invalid_argument("non-finite features");
    if (budget.epsilon == 0.0) return x;
    const Eigen::Index n = x.cols();

    Matrix x_adv = x;
    if (budget.random_start && budget.epsilon > 0) {
        std::uniform_real_distribution<Scalar> dist(-budget.epsilon, budget.epsilon);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < x_adv.rows(); ++i) x_adv(i, j) += dist(rng);
        project_ball_and_box(x_adv, x, budget.epsilon);
    }

    std::vector<bool> alive(static_cast<size_t>(n), true);
    for (int step = 0; step < budget.steps; ++step) {
        Matrix feats = model.features(x_adv);
        Matrix cost = cosine_cost(clean_features, feats);
        Matrix plan = sinkhorn_plan_raw(cost, cfg);

        // Envelope gradient: plan held fixed, differentiate ⟨P, C⟩ through
        // the cosine cost w.r.t. the perturbed-batch features.
        Matrix gfeat = Matrix::Zero(feats.rows(), feats.cols());
        for (Eigen::Index j = 0; j < n; ++j) {
            const Scalar nb = std::max(feats.col(j).norm(), kNormFloor);
            const Vector bh = feats.col(j) / nb;
            for (Eigen::Index i = 0; i < clean_features.cols(); ++i) {
                const Scalar na = std::max(clean_features.col(i).norm(), kNormFloor);
                const Vector ah = clean_features.col(i) / na;
                gfeat.col(j) -= plan(i, j) / nb * (ah - ah.dot(bh) * bh);
            }
        }

        Matrix gx = model.feature_input_grad(x_adv, gfeat);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!alive[static_cast<size_t>(j)]) continue;
            if (!gx.col(j).allFinite()) {
                alive[static_cast<size_t>(j)] = false;
                x_adv.col(j) = x.col(j);
                if (stats) ++stats->aborted_samples;
                continue;
            }
            for (Eigen::Index i = 0; i < x_adv.rows(); ++i)
                x_adv(i, j) += budget.step_size * sign0(gx(i, j));
        }
        project_ball_and_box(x_adv, x, budget.epsilon);
    }
    return x_adv;
}

}  // namespace gacd
