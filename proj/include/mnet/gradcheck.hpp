#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mnet/arch.hpp"
#include "mnet/rng.hpp"
#include "mnet/tape.hpp"
#include "mnet/tensor.hpp"

// Central finite-difference verification of the backward rules, double
// precision only. Non-scalar outputs are checked through a fixed random
// cotangent: analytic = J^T c via the tape, numeric = d<y, c>/dx.

namespace mnet {

struct FdConfig {
    double step = 1e-5;
    double rel_tol = 1e-4;
    int max_coords_per_leaf = 24; // randomly sampled probe coordinates
};

// fn rebuilds the graph from the shared leaves on the given tape and
// returns the output tensor. Leaves must require gradients.
using GraphFn =
    std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

// Largest relative FD error over all probed coordinates of all leaves.
// grad_scale multiplies the analytic gradients before comparison (the
// deliberate-perturbation hook of the verification command).
double fd_max_rel_error(const GraphFn& fn, std::vector<Tensor<double>> leaves,
                        const FdConfig& cfg, Rng& rng, double grad_scale = 1.0);

struct GradCheckCase {
    std::string op;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

// Per-op finite-difference suite over `seeds` randomized instances each.
// perturb_op != "" corrupts that op's analytic gradient so the harness must
// report it as failing.
std::vector<GradCheckCase> run_op_gradchecks(int seeds, const std::string& perturb_op = "");

// Whole-model check: deep-supervision loss of a small mesh vs finite
// differences on a sampled subset of parameters.
GradCheckCase run_model_gradcheck(const MNetConfig& config,
                                  std::array<int64_t, 3> patch_size, int param_samples,
                                  uint64_t seed, double rel_tol = 1e-3);

} // namespace mnet
