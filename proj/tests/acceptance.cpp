// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero if any fails.
// Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ftsne/ftsne.hpp"
#include "test_support.hpp"

using namespace ftsne;
using check::random_joint;
using check::random_matrix;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::vector<Divergence> conjugate_divergences() {
    return { Divergence::kl(), Divergence::rkl(), Divergence::js(), Divergence::ch(), Divergence::hl() };
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
    return buf;
}

// 1. Primal gradients against central differences.
Outcome gradient_suite() {
    std::vector<Divergence> divs = conjugate_divergences();
    for (double alpha : { 0.05, 0.1, 0.5 }) {
        divs.push_back(Divergence::interpolated(alpha));
    }
    std::mt19937_64 rng(101);
    double worst = 0;
    std::string worst_name;
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_joint(8, rng);
        const auto y = random_matrix(8, 2, rng);
        for (const auto& div : divs) {
            const auto analytic = primal_gradient(div, p, y);
            const auto numeric = check::finite_difference([&](const Matrix& c) { return primal_loss(div, p, c); }, y, 1e-5);
            const double err = check::max_relative_error(analytic, numeric);
            if (err > worst) {
                worst = err;
                worst_name = to_string(div);
            }
        }
    }
    return { worst < 1e-4, fmt("worst relative error %.3g", worst) + " (" + worst_name + ")" };
}

// 2. Tight analytic witness and random discriminators below the primal value.
Outcome duality_suite() {
    std::mt19937_64 rng(202);
    double tight_gap = 0;
    for (const auto& div : conjugate_divergences()) {
        for (int trial = 0; trial < 50; ++trial) {
            const auto p = random_joint(10, rng);
            const auto q = low_dim_affinity(random_matrix(10, 2, rng));
            const double bound = variational_objective(div, p.probs, q.probs, optimal_witness(div, p.probs, q.probs));
            tight_gap = std::max(tight_gap, std::abs(bound - primal_divergence(div, p.probs, q.probs)));
        }
    }
    double excess = -1e300;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 5 + trial % 8;
        const auto p = random_joint(m, rng);
        const auto y = random_matrix(m, 2, rng);
        const auto x = random_matrix(m, 3, rng, 1 + trial % 5);
        const Discriminator disc(3, {}, rng);
        for (const auto& div : conjugate_divergences()) {
            excess = std::max(excess, variational_objective(div, p, y, disc, x) - primal_loss(div, p, y));
        }
    }
    return { tight_gap <= 1e-9 && excess <= 1e-7, fmt("tight-witness gap %.3g, max bound - primal %.3g", tight_gap, excess) };
}

// 3. Binary neighborhoods against the small-delta closed forms.
Outcome binary_suite() {
    auto gap = [](double delta, const Divergence& div) {
        const auto bn = BinaryNeighborhood::uniform(1000, 1000, 50, 50, 25, delta);
        return std::abs(binary_divergence(bn, div) / binary_closed_form(bn, div) - 1);
    };
    const double kl = gap(1e-8, Divergence::kl());
    const double rkl = gap(1e-8, Divergence::rkl());
    bool monotone = true;
    for (const auto& div : { Divergence::kl(), Divergence::rkl() }) {
        double previous = std::numeric_limits<double>::infinity();
        for (double delta = 1e-3; delta >= 0.99e-9; delta /= 10) {
            const double g = gap(delta, div);
            monotone = monotone && g < previous;
            previous = g;
        }
    }
    return { kl <= 0.05 && rkl <= 0.05 && monotone,
             fmt("relative gap at delta=1e-8: KL %.4f, RKL %.4f; shrinking with delta: ", kl, rkl) + (monotone ? "yes" : "no") };
}

struct StructureScore {
    double max_fscore;

    /** NN-precision at K = 10; reported, not gated. */
    double nn_precision;
};

double nn_precision_10(const Matrix& data, const Matrix& coords) {
    const std::size_t k[] = { 10 };
    return knn_kfn_curve(data, coords, k).precision[0];
}

StructureScore blob_score(const Divergence& div, std::uint64_t seed) {
    const auto data = gaussian_blobs(300, 10, 1, seed);
    const auto p = floor_affinities(symmetrize(conditional_affinities(data, 100)));
    OptimizerSchedule schedule;
    schedule.epochs = 1000;
    schedule.seed = seed;
    const auto coords = run_primal(div, p, schedule, 2).embedding.coords;
    const auto r = latent_affinity(*data.labels, LatentKind::discrete);
    const auto q = student_t_conditional(coords);
    return { pr_curve_zy(r, q, epsilon_grid(r.rows, q)).max_fscore, nn_precision_10(data.points, coords) };
}

StructureScore roll_score(const Divergence& div, std::uint64_t seed) {
    const auto data = swiss_roll(1000, 0.0, seed);
    const auto cond = conditional_affinities(data, 10);
    const auto p = floor_affinities(symmetrize(cond));
    OptimizerSchedule schedule;
    schedule.epochs = 1000;
    schedule.seed = seed;
    const auto coords = run_primal(div, p, schedule, 2).embedding.coords;
    const auto q = student_t_conditional(coords);
    return { pr_curve_xy(cond.rows, q, epsilon_grid(cond.rows, q)).max_fscore, nn_precision_10(data.points, coords) };
}

// 4. KL favors clusters, RKL favors the manifold.
Outcome structure_suite() {
    std::vector<double> f[4], nn[4];
    for (std::uint64_t seed : { 1, 2, 3 }) {
        const StructureScore scores[4] = { blob_score(Divergence::kl(), seed), blob_score(Divergence::rkl(), seed), roll_score(Divergence::kl(), seed),
                                           roll_score(Divergence::rkl(), seed) };
        for (int c = 0; c < 4; ++c) {
            f[c].push_back(scores[c].max_fscore);
            nn[c].push_back(scores[c].nn_precision);
        }
    }
    const double bk = median3(f[0]), br = median3(f[1]), rk = median3(f[2]), rr = median3(f[3]);
    return { bk >= br && rr >= rk, fmt("blobs max F_Z median KL %.4f vs RKL %.4f; swiss roll max F_X median RKL %.4f vs KL %.4f", bk, br, rr, rk) +
                                       fmt(" (NN-precision@10 medians: blobs KL %.3f RKL %.3f, roll RKL %.3f KL %.3f)", median3(nn[0]), median3(nn[1]), median3(nn[3]), median3(nn[2])) };
}

// 5. Variational against primal optimization on the blobs.
Outcome variational_suite() {
    std::size_t wins = 0;
    std::string detail;
    for (std::uint64_t seed : { 1, 2, 3 }) {
        const auto data = gaussian_blobs(300, 10, 1, seed);
        const auto p = floor_affinities(symmetrize(conditional_affinities(data, 10)));

        MinimaxConfig config;
        config.j_steps = 10;
        config.k_steps = 10;
        config.rounds = 500;
        config.disc_lr = 0.1;
        config.emb_schedule.seed = seed;
        const double variational = run_variational(Divergence::kl(), p, data, config, 2).final_loss;

        OptimizerSchedule schedule;
        schedule.epochs = 5000;
        schedule.seed = seed;
        const double primal = run_primal(Divergence::kl(), p, schedule, 2).final_loss;

        wins += variational <= 1.1 * primal;
        detail += fmt("seed %.0f: variational %.4f, primal %.4f; ", static_cast<double>(seed), variational, primal);
    }
    detail += fmt("%.0f of 3 seeds within 10%%", static_cast<double>(wins));
    return { wins >= 2, detail };
}

// 6. Retrieval curves against brute force.
Outcome metric_suite() {
    std::mt19937_64 rng(606);
    std::uniform_int_distribution<std::size_t> size(6, 30);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = size(rng);
        const Dataset data{ random_matrix(m, 3, rng), std::nullopt };
        const auto p = conditional_affinities(data, std::min(5.0, (m - 1) / 2.0)).rows;
        const auto y = random_matrix(m, 2, rng);
        const auto q = student_t_conditional(y);

        const auto grid = epsilon_grid(p, q, 30);
        const auto xy = pr_curve_xy(p, q, grid);
        const auto naive_xy = check::naive_threshold_curve(p, q, grid);
        mismatches += xy.precision != naive_xy.precision || xy.recall != naive_xy.recall;

        Matrix labels(m, 1);
        std::uniform_int_distribution<int> cls(0, 3);
        for (auto& v : labels.values()) {
            v = cls(rng);
        }
        labels(0, 0) = 42;
        const auto r = latent_affinity(labels, LatentKind::discrete);
        const auto zgrid = epsilon_grid(r.rows, q, 30);
        const auto zy = pr_curve_zy(r, q, zgrid);
        const auto naive_zy = check::naive_threshold_curve(r.rows, q, zgrid, r.excluded);
        mismatches += zy.precision != naive_zy.precision || zy.recall != naive_zy.recall;

        std::vector<std::size_t> ks;
        for (std::size_t k = 1; k < m; k += 1 + k / 3) {
            ks.push_back(k);
        }
        const auto knn = knn_kfn_curve(data.points, y, ks);
        const auto naive_knn = check::naive_knn_curve(data.points, y, ks);
        mismatches += knn.precision != naive_knn.precision || knn.recall != naive_knn.recall;
    }
    return { mismatches == 0, fmt("%.0f curve mismatches over 150 comparisons", static_cast<double>(mismatches)) };
}

bool same_bytes(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

// 7. Invariances and determinism.
Outcome invariance_suite() {
    std::mt19937_64 rng(707);
    std::vector<Divergence> divs = conjugate_divergences();
    divs.push_back(Divergence::interpolated(0.3));

    double loss_shift = 0, grad_sum = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_joint(12, rng);
        const auto y = random_matrix(12, 2, rng);
        const double angle = 0.1 + trial;
        Matrix moved(12, 2);
        for (std::size_t i = 0; i < 12; ++i) {
            moved(i, 0) = std::cos(angle) * y(i, 0) - std::sin(angle) * y(i, 1) + 3.5;
            moved(i, 1) = std::sin(angle) * y(i, 0) + std::cos(angle) * y(i, 1) - 7.25;
        }
        for (const auto& div : divs) {
            const double base = primal_loss(div, p, y);
            loss_shift = std::max(loss_shift, std::abs(primal_loss(div, p, moved) - base) / std::max(1.0, std::abs(base)));
            const auto grad = primal_gradient(div, p, y);
            for (std::size_t c = 0; c < 2; ++c) {
                double s = 0;
                for (std::size_t i = 0; i < 12; ++i) {
                    s += grad(i, c);
                }
                grad_sum = std::max(grad_sum, std::abs(s));
            }
        }
    }

    double scale_shift = 0;
    for (double factor : { 1e-3, 0.5, 7.0, 1e3 }) {
        const auto data = swiss_roll(200, 0.05, 11);
        Dataset scaled = data;
        for (auto& v : scaled.points.values()) {
            v *= factor;
        }
        const auto a = symmetrize(conditional_affinities(data, 15)).probs;
        const auto b = symmetrize(conditional_affinities(scaled, 15)).probs;
        for (std::size_t k = 0; k < a.size(); ++k) {
            scale_shift = std::max(scale_shift, std::abs(a.values()[k] - b.values()[k]));
        }
    }

    // Symmetry after a run of ascent steps.
    bool symmetric = true;
    {
        const auto x = random_matrix(15, 4, rng);
        const auto y = random_matrix(15, 2, rng);
        const auto p = random_joint(15, rng);
        Discriminator disc(4, {}, rng);
        for (int step = 0; step < 25; ++step) {
            disc.params().add_scaled(discriminator_gradient(Divergence::js(), p, y, disc, x), 0.5);
        }
        for (std::size_t i = 0; i < 15; ++i) {
            for (std::size_t j = 0; j < 15; ++j) {
                symmetric = symmetric && disc.score(x.row(i), x.row(j)) == disc.score(x.row(j), x.row(i));
            }
        }
    }

    bool deterministic = true;
    {
        const auto data = gaussian_blobs(90, 8, 1, 5);
        const auto p = symmetrize(conditional_affinities(data, 12));
        OptimizerSchedule schedule;
        schedule.epochs = 150;
        schedule.seed = 9;
        deterministic = same_bytes(run_primal(Divergence::js(), p, schedule, 2).embedding.coords, run_primal(Divergence::js(), p, schedule, 2).embedding.coords);
        MinimaxConfig config;
        config.rounds = 15;
        config.emb_schedule.seed = 9;
        deterministic = deterministic && same_bytes(run_variational(Divergence::kl(), p, data, config, 2).embedding.coords,
                                                    run_variational(Divergence::kl(), p, data, config, 2).embedding.coords);
    }

    const bool pass = loss_shift <= 1e-10 && grad_sum <= 1e-9 && scale_shift <= 1e-8 && symmetric && deterministic;
    return { pass, fmt("loss shift %.3g, gradient sum %.3g, affinity scale shift %.3g", loss_shift, grad_sum, scale_shift) + ", symmetric: " + (symmetric ? "yes" : "no") +
                       ", deterministic: " + (deterministic ? "yes" : "no") };
}

}

int main(int argc, char** argv) {
    using Suite = Outcome (*)();
    const Suite suites[] = { gradient_suite, duality_suite, binary_suite, structure_suite, variational_suite, metric_suite, invariance_suite };
    const char* names[] = { "gradient correctness", "duality", "binary-neighborhood closed forms", "structure vs divergence", "variational vs primal", "metric oracles", "invariances" };

    std::set<int> selected;
    for (int a = 1; a < argc; ++a) {
        selected.insert(std::atoi(argv[a]));
    }
    bool all = true;
    for (int k = 0; k < 7; ++k) {
        if (!selected.empty() && !selected.count(k + 1)) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = suites[k]();
        } catch (const std::exception& e) {
            outcome = { false, std::string("exception: ") + e.what() };
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %d %s: %s [%.1fs]\n", outcome.pass ? "PASS" : "FAIL", k + 1, names[k], outcome.detail.c_str(), seconds);
        std::fflush(stdout);
        all = all && outcome.pass;
    }
    return all ? 0 : 1;
}
