#include "cityboost/counterfeat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cityboost/error.hpp"
#include "cityboost/kernels.hpp"

namespace cb {

CounterMatrix CounterMatrix::select_weeks(std::span<const int> weeks) const {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index t = 0; t < n_slots(); ++t) {
        if (std::find(weeks.begin(), weeks.end(), slots[t].week) != weeks.end()) cols.push_back(t);
    }
    CounterMatrix out;
    out.counter_ids = counter_ids;
    out.values.resize(n_counters(), static_cast<Eigen::Index>(cols.size()));
    out.slots.reserve(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.values.col(static_cast<Eigen::Index>(c)) = values.col(cols[c]);
        out.slots.push_back(slots[cols[c]]);
    }
    return out;
}

std::vector<double> missingness_rates(const CounterMatrix& v) {
    std::vector<double> rates(v.n_counters(), 0.0);
    if (v.n_slots() == 0) return rates;
    for (Eigen::Index i = 0; i < v.n_counters(); ++i) {
        Eigen::Index missing = 0;
        for (Eigen::Index t = 0; t < v.n_slots(); ++t) missing += v.observed(i, t) ? 0 : 1;
        rates[i] = static_cast<double>(missing) / static_cast<double>(v.n_slots());
    }
    return rates;
}

Eigen::MatrixXd impute_zero(const CounterMatrix& v) {
    return v.values.unaryExpr([](double x) { return std::isnan(x) ? 0.0 : x; });
}

WindowValues window_features(std::span<const double> series, std::size_t t, int window) {
    WindowValues out;
    if (series.empty() || window < 1) return out;
    t = std::min(t, series.size() - 1);
    const std::size_t first = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - window : 0;
    bool have_last = false;
    for (std::size_t s = t + 1; s-- > first;) {
        const double x = series[s];
        if (std::isnan(x)) continue;
        out.window_sum += x;
        if (!have_last) {
            out.last = x;
            have_last = true;
        }
    }
    return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> window_matrices(const CounterMatrix& v, int window) {
    const Eigen::Index k = v.n_counters();
    const Eigen::Index n = v.n_slots();
    Eigen::MatrixXd last(k, n);
    Eigen::MatrixXd sum(k, n);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < k; ++i) {
        std::vector<double> series(static_cast<std::size_t>(n));
        for (Eigen::Index t = 0; t < n; ++t) series[t] = v.values(i, t);
        for (Eigen::Index t = 0; t < n; ++t) {
            const auto w = window_features(series, static_cast<std::size_t>(t), window);
            last(i, t) = w.last;
            sum(i, t) = w.window_sum;
        }
    }
    return {std::move(last), std::move(sum)};
}

PCAModel fit_pca(const Eigen::MatrixXd& samples, int n_components) {
    const Eigen::Index k = samples.rows();
    const Eigen::Index t = samples.cols();
    if (k < 1 || t < 2) {
        throw Error(ErrorKind::DimensionMismatch, "PCA needs at least 1 counter and 2 observations");
    }
    if (n_components < 1 || n_components > k) {
        throw Error(ErrorKind::InvalidConfig, "PCA component count must be in [1, " +
                                                  std::to_string(k) + "], got " +
                                                  std::to_string(n_components));
    }
    bool all_constant = true;
    for (Eigen::Index i = 0; i < k && all_constant; ++i) {
        all_constant = samples.row(i).maxCoeff() == samples.row(i).minCoeff();
    }
    if (all_constant) throw Error(ErrorKind::DegenerateVariance, "every counter is constant");

    PCAModel model;
    model.mean = samples.rowwise().mean();
    const Eigen::MatrixXd centered = samples.colwise() - model.mean;
    const Eigen::MatrixXd cov = (centered * centered.transpose()) / static_cast<double>(t - 1);
    model.total_variance = cov.trace();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorKind::Internal, "symmetric eigensolver did not converge");
    }
    // Eigen returns ascending eigenvalues.
    model.components.resize(k, n_components);
    model.eigenvalues.resize(n_components);
    for (int c = 0; c < n_components; ++c) {
        const Eigen::Index src = k - 1 - c;
        model.eigenvalues(c) = std::max(0.0, solver.eigenvalues()(src));
        Eigen::VectorXd dir = solver.eigenvectors().col(src);
        Eigen::Index arg = 0;
        dir.cwiseAbs().maxCoeff(&arg);
        if (dir(arg) < 0) dir = -dir;
        model.components.col(c) = dir;
    }
    return model;
}

PCAModel fit_pca(const CounterMatrix& v, int n_components) {
    return fit_pca(impute_zero(v), n_components);
}

Eigen::VectorXd project_pca(const PCAModel& model,
                            const Eigen::Ref<const Eigen::VectorXd>& snapshot) {
    if (snapshot.size() != model.n_features()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "snapshot has " + std::to_string(snapshot.size()) + " entries, model expects " +
                        std::to_string(model.n_features()));
    }
    return model.components.transpose() * (snapshot - model.mean);
}

Eigen::MatrixXd project_pca_all(const PCAModel& model, const Eigen::MatrixXd& snapshots) {
    if (snapshots.rows() != model.n_features()) {
        throw Error(ErrorKind::DimensionMismatch, "snapshot matrix row count differs from model");
    }
    return kernels::project_parallel(model.components, model.mean, snapshots);
}

double explained_variance(const PCAModel& model, int m) {
    if (m < 1 || m > model.n_components()) {
        throw Error(ErrorKind::InvalidConfig, "explained_variance: m out of range");
    }
    if (model.total_variance <= 0.0) return 0.0;
    return std::min(1.0, model.eigenvalues.head(m).sum() / model.total_variance);
}

nlohmann::json to_json(const PCAModel& model) {
    nlohmann::json j;
    j["mean"] = std::vector<double>(model.mean.data(), model.mean.data() + model.mean.size());
    auto comps = nlohmann::json::array();
    for (Eigen::Index c = 0; c < model.n_components(); ++c) {
        const Eigen::VectorXd col = model.components.col(c);
        comps.push_back(std::vector<double>(col.data(), col.data() + col.size()));
    }
    j["components"] = std::move(comps);
    j["eigenvalues"] = std::vector<double>(model.eigenvalues.data(),
                                           model.eigenvalues.data() + model.eigenvalues.size());
    j["total_variance"] = model.total_variance;
    return j;
}

PCAModel pca_from_json(const nlohmann::json& j) {
    try {
        PCAModel m;
        const auto mean = j.at("mean").get<std::vector<double>>();
        const auto comps = j.at("components").get<std::vector<std::vector<double>>>();
        const auto eig = j.at("eigenvalues").get<std::vector<double>>();
        m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        m.components.resize(static_cast<Eigen::Index>(mean.size()),
                            static_cast<Eigen::Index>(comps.size()));
        for (std::size_t c = 0; c < comps.size(); ++c) {
            if (comps[c].size() != mean.size()) {
                throw Error(ErrorKind::SchemaError, "PCA component length differs from mean");
            }
            for (std::size_t r = 0; r < mean.size(); ++r) {
                m.components(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = comps[c][r];
            }
        }
        if (eig.size() != comps.size()) {
            throw Error(ErrorKind::SchemaError, "PCA eigenvalue count differs from components");
        }
        m.eigenvalues = Eigen::Map<const Eigen::VectorXd>(eig.data(), static_cast<Eigen::Index>(eig.size()));
        m.total_variance = j.at("total_variance").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("PCA model: ") + e.what());
    }
}

const char* weight_method_name(WeightMethod m) {
    switch (m) {
        case WeightMethod::SoftmaxInverseDistance: return "softmax-inverse-distance";
        case WeightMethod::KnnUniform: return "knn-uniform";
    }
    return "?";
}

SpatialWeightMatrix build_weight_matrix(std::span<const Point> positions, std::span<const Id> ids,
                                        WeightMethod method, int knn_k) {
    const auto k = static_cast<Eigen::Index>(positions.size());
    if (k < 2) throw Error(ErrorKind::TooFewCounters, "weighting needs at least 2 counters");
    if (method == WeightMethod::KnnUniform && (knn_k < 1 || knn_k >= k)) {
        throw Error(ErrorKind::InvalidK, "knn_k must be in [1, " + std::to_string(k - 1) +
                                             "], got " + std::to_string(knn_k));
    }
    SpatialWeightMatrix out;
    out.method = method;
    out.knn_k = method == WeightMethod::KnnUniform ? knn_k : 0;
    out.weights = Eigen::MatrixXd::Zero(k, k);

    std::vector<double> d(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) d[j] = distance(positions[i], positions[j]);
        if (method == WeightMethod::SoftmaxInverseDistance) {
            // Shift by the largest score before exponentiating.
            double top = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < k; ++j) {
                if (j != i) top = std::max(top, 1.0 / std::max(d[j], kMinCounterDistance));
            }
            double z = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) {
                if (j == i) continue;
                const double e = std::exp(1.0 / std::max(d[j], kMinCounterDistance) - top);
                out.weights(i, j) = e;
                z += e;
            }
            out.weights.row(i) /= z;
        } else {
            std::vector<Eigen::Index> order;
            order.reserve(static_cast<std::size_t>(k - 1));
            for (Eigen::Index j = 0; j < k; ++j) {
                if (j != i) order.push_back(j);
            }
            std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
                if (d[a] != d[b]) return d[a] < d[b];
                return ids[a] < ids[b];
            });
            for (int n = 0; n < knn_k; ++n) out.weights(i, order[n]) = 1.0 / knn_k;
        }
    }
    return out;
}

SpatialWeightMatrix build_weight_matrix(const RoadGraph& graph, WeightMethod method, int knn_k) {
    std::vector<Point> positions;
    std::vector<Id> ids;
    for (const auto& c : graph.counters()) {
        positions.push_back(c.position);
        ids.push_back(c.id);
    }
    return build_weight_matrix(positions, ids, method, knn_k);
}

Eigen::MatrixXd spatial_context(const Eigen::MatrixXd& v, const SpatialWeightMatrix& b) {
    if (b.weights.rows() != v.rows() || b.weights.cols() != v.rows()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "weight matrix is " + std::to_string(b.weights.rows()) + "x" +
                        std::to_string(b.weights.cols()) + " but counter matrix has " +
                        std::to_string(v.rows()) + " counters");
    }
    return kernels::spatial_context_parallel(v, b.weights);
}

}  // namespace cb
