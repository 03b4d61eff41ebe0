#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "worldprobe/parallel.hpp"
#include "worldprobe/probes.hpp"
#include "worldprobe/rng.hpp"
#include "worldprobe/stats.hpp"

namespace worldprobe {

// Permutation test against shuffled training targets: features stay fixed, the
// training rows of Y are permuted, the probe is retrained with the tuned
// hyperparameters frozen (no re-tuning per permutation), and the test R^2 is
// recorded. The add-one rule p = (1 + #{perm >= observed}) / (1 + n_perm)
// keeps every reported p-value non-zero.

struct PermutationRecipe {
    ProbeKind kind = ProbeKind::Linear;
    HyperParams hyper;
    int epochs = 300;
    int batch_size = 512;
};

struct PermutationOutcome {
    double p = 1.0;
    double observed_r2 = 0.0;
    int n_permutations = 0;
    std::vector<double> permuted_r2;
};

inline PermutationOutcome permutation_test(const Eigen::MatrixXd& x_train,
                                           const Eigen::MatrixXd& y_train,
                                           const Eigen::MatrixXd& x_test,
                                           const Eigen::MatrixXd& y_test,
                                           const PermutationRecipe& recipe, double observed_r2,
                                           int n_perm = 100, std::uint64_t seed = 0,
                                           unsigned threads = 1) {
    if (n_perm < 1) throw std::invalid_argument("permutation_test: n_perm >= 1");
    PermutationOutcome out;
    out.observed_r2 = observed_r2;
    out.n_permutations = n_perm;
    out.permuted_r2.assign(static_cast<std::size_t>(n_perm), 0.0);

    const Eigen::Index n = y_train.rows();
    parallel_for(static_cast<std::size_t>(n_perm), threads, [&](std::size_t i) {
        Rng shuffle_rng(derive_seed(seed, "perm-shuffle", i));
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        for (Eigen::Index r = 0; r < n; ++r) order[static_cast<std::size_t>(r)] = r;
        shuffle_rng.shuffle(order);
        Eigen::MatrixXd y_shuffled(n, y_train.cols());
        for (Eigen::Index r = 0; r < n; ++r)
            y_shuffled.row(r) = y_train.row(order[static_cast<std::size_t>(r)]);

        FitControl ctl;
        ctl.batch_size = recipe.batch_size;
        ctl.epochs = recipe.epochs;
        ctl.seed = derive_seed(seed, "perm-fit", i);
        double r2;
        if (recipe.kind == ProbeKind::Linear) {
            const auto probe = fit_linear(x_train, y_shuffled, recipe.hyper, ctl);
            r2 = r2_score(y_test, probe.predict(x_test));
        } else {
            const auto probe = fit_mlp(x_train, y_shuffled, recipe.hyper, ctl);
            r2 = r2_score(y_test, probe.predict(x_test));
        }
        out.permuted_r2[i] = r2;
    });

    int count = 0;
    for (double r2 : out.permuted_r2)
        if (r2 >= observed_r2) ++count;
    out.p = static_cast<double>(1 + count) / static_cast<double>(1 + n_perm);
    return out;
}

}  // namespace worldprobe
