#include "cityboost/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cb::kernels {

void set_num_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

Eigen::MatrixXd spatial_context_serial(const Eigen::MatrixXd& v, const Eigen::MatrixXd& b) {
    const Eigen::Index k = v.rows();
    const Eigen::Index t_count = v.cols();
    Eigen::MatrixXd w(t_count, k);
    for (Eigen::Index t = 0; t < t_count; ++t) {
        for (Eigen::Index i = 0; i < k; ++i) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) acc += v(j, t) * b(i, j);
            w(t, i) = acc;
        }
    }
    return w;
}

Eigen::MatrixXd spatial_context_parallel(const Eigen::MatrixXd& v, const Eigen::MatrixXd& b) {
    const Eigen::Index k = v.rows();
    const Eigen::Index t_count = v.cols();
    // Row i of b becomes contiguous column i of bt.
    const Eigen::MatrixXd bt = b.transpose();
    Eigen::MatrixXd w(t_count, k);
#pragma omp parallel for schedule(static)
    for (Eigen::Index t = 0; t < t_count; ++t) {
        const double* vt = v.col(t).data();
        for (Eigen::Index i = 0; i < k; ++i) {
            const double* bi = bt.col(i).data();
            double acc = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) acc += vt[j] * bi[j];
            w(t, i) = acc;
        }
    }
    return w;
}

Eigen::MatrixXd project_serial(const Eigen::MatrixXd& components, const Eigen::VectorXd& mean,
                               const Eigen::MatrixXd& x) {
    const Eigen::Index k = components.rows();
    const Eigen::Index c = components.cols();
    Eigen::MatrixXd scores(x.cols(), c);
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
        for (Eigen::Index m = 0; m < c; ++m) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) acc += components(j, m) * (x(j, t) - mean(j));
            scores(t, m) = acc;
        }
    }
    return scores;
}

Eigen::MatrixXd project_parallel(const Eigen::MatrixXd& components, const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& x) {
    const Eigen::Index k = components.rows();
    const Eigen::Index c = components.cols();
    Eigen::MatrixXd scores(x.cols(), c);
#pragma omp parallel for schedule(static)
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
        const double* xt = x.col(t).data();
        for (Eigen::Index m = 0; m < c; ++m) {
            const double* cm = components.col(m).data();
            double acc = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) acc += cm[j] * (xt[j] - mean(j));
            scores(t, m) = acc;
        }
    }
    return scores;
}

namespace {

inline void accumulate_feature(const std::vector<std::uint8_t>& bins, std::size_t offset,
                               std::span<const std::uint32_t> rows, std::span<const double> g,
                               std::span<const double> h, std::span<HistBin> out) {
    HistBin* hist = out.data() + offset;
    const std::uint8_t* col = bins.data();
    for (const std::uint32_t r : rows) {
        HistBin& bin = hist[col[r]];
        bin.g += g[r];
        bin.h += h[r];
        ++bin.n;
    }
}

}  // namespace

void histogram_serial(const BinColumns& cols, std::span<const int> features,
                      std::span<const std::uint32_t> rows, std::span<const double> g,
                      std::span<const double> h, std::span<HistBin> out) {
    for (const int f : features) {
        accumulate_feature(cols.bins[f], cols.offsets[f], rows, g, h, out);
    }
}

void histogram_parallel(const BinColumns& cols, std::span<const int> features,
                        std::span<const std::uint32_t> rows, std::span<const double> g,
                        std::span<const double> h, std::span<HistBin> out) {
    const auto n = static_cast<std::ptrdiff_t>(features.size());
#pragma omp parallel for schedule(dynamic, 1) if (rows.size() * features.size() > 16384)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const int f = features[i];
        accumulate_feature(cols.bins[f], cols.offsets[f], rows, g, h, out);
    }
}

}  // namespace cb::kernels
