#pragma once

// Data-parallel inner loops. Each kernel has a plain serial reference and an
// OpenMP version; the two produce bit-identical results because every output
// element is accumulated by exactly one thread in the same order as the
// serial loop.

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace cb::kernels {

/// 0 = leave the OpenMP default.
void set_num_threads(int n);
int max_threads();

// w(t, i) = sum_j v(j, t) * b(i, j)
Eigen::MatrixXd spatial_context_serial(const Eigen::MatrixXd& v, const Eigen::MatrixXd& b);
Eigen::MatrixXd spatial_context_parallel(const Eigen::MatrixXd& v, const Eigen::MatrixXd& b);

// scores(t, c) = sum_j components(j, c) * (x(j, t) - mean(j))
Eigen::MatrixXd project_serial(const Eigen::MatrixXd& components, const Eigen::VectorXd& mean,
                               const Eigen::MatrixXd& x);
Eigen::MatrixXd project_parallel(const Eigen::MatrixXd& components, const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& x);

struct HistBin {
    double g = 0.0;
    double h = 0.0;
    std::int64_t n = 0;
};

/// Column-major binned features: column f occupies bins[f] with one entry per row,
/// and its histogram occupies out[offsets[f] .. offsets[f+1]).
struct BinColumns {
    std::span<const std::vector<std::uint8_t>> bins;
    std::span<const std::size_t> offsets;
};

// Accumulates (g, h, count) of `rows` into the histograms of the listed features.
// `out` must be zeroed for those features beforehand.
void histogram_serial(const BinColumns& cols, std::span<const int> features,
                      std::span<const std::uint32_t> rows, std::span<const double> g,
                      std::span<const double> h, std::span<HistBin> out);
void histogram_parallel(const BinColumns& cols, std::span<const int> features,
                        std::span<const std::uint32_t> rows, std::span<const double> g,
                        std::span<const double> h, std::span<HistBin> out);

}  // namespace cb::kernels
