#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "pgada/matrix.hpp"
#include "pgada/rng.hpp"

namespace pgada {

// out(i, j) = ||a_i - b_j||^2. Rows are distributed over OpenMP threads; each
// entry is computed by one thread in a fixed order, so results do not depend on
// the thread count.
Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b);

// i.i.d. N(mean, sigma^2) entries drawn row-major from `rng`.
Matrix gaussian_sample(RngStream& rng, double mean, double sigma, std::size_t n, std::size_t d);

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Vector finite_diff_grad(const ScalarFn& f, std::span<const double> x, double h);

// Serial kernels kept as the reference the parallel paths are tested and
// benchmarked against.
namespace reference {

Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b);

}  // namespace reference

}  // namespace pgada
