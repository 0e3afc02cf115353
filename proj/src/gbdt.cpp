#include "cityboost/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "cityboost/csv.hpp"
#include "cityboost/error.hpp"
#include "cityboost/metrics.hpp"
#include "cityboost/rng.hpp"
#include "cityboost/stats.hpp"

namespace cb::gbdt {

namespace {

// Splits whose gain does not clear this are treated as rounding noise.
constexpr double kMinGain = 1e-12;

FeatureBins make_bins(const std::vector<double>& column, int max_bins) {
    FeatureBins fb;
    std::vector<double> v;
    v.reserve(column.size());
    for (double x : column) {
        if (std::isnan(x)) {
            fb.has_missing = true;
        } else {
            v.push_back(x);
        }
    }
    std::sort(v.begin(), v.end());
    std::vector<double> distinct = v;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
        for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
            fb.upper_bounds.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0);
        }
    } else {
        const std::size_t n = v.size();
        for (int j = 1; j < max_bins; ++j) {
            const std::size_t idx = static_cast<std::size_t>(j) * n / static_cast<std::size_t>(max_bins);
            if (idx == 0 || idx >= n || v[idx - 1] == v[idx]) continue;
            const double cut = v[idx - 1] + (v[idx] - v[idx - 1]) / 2.0;
            if (fb.upper_bounds.empty() || cut > fb.upper_bounds.back()) fb.upper_bounds.push_back(cut);
        }
    }
    fb.upper_bounds.push_back(std::numeric_limits<double>::infinity());
    return fb;
}

std::vector<std::uint8_t> apply_bins(const FeatureBins& fb, const std::vector<double>& column) {
    std::vector<std::uint8_t> out(column.size());
    for (std::size_t r = 0; r < column.size(); ++r) out[r] = fb.bin_of(column[r]);
    return out;
}

BinnedDataset bin_like(const BinnedDataset& reference, const FeatureTable& table) {
    BinnedDataset d;
    d.features = reference.features;
    d.offsets = reference.offsets;
    d.n_rows = table.n_rows();
    d.bins.resize(table.n_features());
    for (std::size_t f = 0; f < table.n_features(); ++f) d.bins[f] = apply_bins(d.features[f], table.columns[f]);
    return d;
}

struct Split {
    int feature = -1;
    int bin = 0;
    double gain = 0.0;
    double g_left = 0.0;
    double h_left = 0.0;
    std::int64_t n_left = 0;
};

struct Leaf {
    int node = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    double g = 0.0;
    double h = 0.0;
    std::vector<kernels::HistBin> hist;
    Split best;
};

double score_term(double g, double h, double lambda) {
    const double d = h + lambda;
    return d > 0.0 ? g * g / d : 0.0;
}

double leaf_value(double g, double h, double lambda) {
    const double d = h + lambda;
    return d > 0.0 ? -g / d : 0.0;
}

Split find_split(const BinnedDataset& data, const Leaf& leaf, std::span<const int> features,
                 const TrainParams& p) {
    Split best;
    const double parent = score_term(leaf.g, leaf.h, p.lambda_l2);
    const auto n_total = static_cast<std::int64_t>(leaf.end - leaf.begin);
    const double threshold = std::max(p.min_gain_to_split, kMinGain);
    for (const int f : features) {
        const FeatureBins& fb = data.features[static_cast<std::size_t>(f)];
        const kernels::HistBin* hist = leaf.hist.data() + data.offsets[static_cast<std::size_t>(f)];
        const int nb = fb.n_bins();
        double gl = 0.0;
        double hl = 0.0;
        std::int64_t nl = 0;
        for (int b = 0; b < nb - 1; ++b) {
            gl += hist[b].g;
            hl += hist[b].h;
            nl += hist[b].n;
            if (b < fb.first_value_bin()) continue;
            const std::int64_t nr = n_total - nl;
            if (nl < p.min_data_in_leaf || nr < p.min_data_in_leaf) continue;
            const double hr = leaf.h - hl;
            if (hl < p.min_sum_hessian || hr < p.min_sum_hessian) continue;
            const double gain = score_term(gl, hl, p.lambda_l2) +
                                score_term(leaf.g - gl, hr, p.lambda_l2) - parent;
            if (gain > threshold && gain > best.gain) {
                best = {f, b, gain, gl, hl, nl};
            }
        }
    }
    return best;
}

void build_hist(const BinnedDataset& data, std::span<const int> features, std::span<const std::uint32_t> rows,
                std::span<const double> g, std::span<const double> h, std::vector<kernels::HistBin>& out) {
    out.assign(data.total_bins(), kernels::HistBin{});
    kernels::histogram_parallel(data.columns(), features, rows, g, h, out);
}

std::vector<int> all_features(std::size_t n) {
    std::vector<int> f(n);
    std::iota(f.begin(), f.end(), 0);
    return f;
}

}  // namespace

std::uint8_t FeatureBins::bin_of(double x) const {
    if (std::isnan(x)) return 0;
    const auto it = std::lower_bound(upper_bounds.begin(), upper_bounds.end(), x);
    const auto idx = static_cast<int>(std::min<std::ptrdiff_t>(it - upper_bounds.begin(),
                                                               static_cast<std::ptrdiff_t>(upper_bounds.size()) - 1));
    return static_cast<std::uint8_t>(idx + first_value_bin());
}

BinnedDataset bin_features(const FeatureTable& table, int max_bins) {
    if (max_bins < 1 || max_bins > kMaxBins) {
        throw Error(ErrorKind::InvalidConfig, "max_bins must lie in [1, 255]");
    }
    table.validate();
    BinnedDataset d;
    d.n_rows = table.n_rows();
    d.features.resize(table.n_features());
    d.bins.resize(table.n_features());
    d.offsets.assign(table.n_features() + 1, 0);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(table.n_features()); ++i) {
        const auto f = static_cast<std::size_t>(i);
        d.features[f] = make_bins(table.columns[f], max_bins);
        d.bins[f] = apply_bins(d.features[f], table.columns[f]);
    }
    for (std::size_t f = 0; f < table.n_features(); ++f) {
        d.offsets[f + 1] = d.offsets[f] + static_cast<std::size_t>(d.features[f].n_bins());
    }
    return d;
}

void TrainParams::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
    if (num_leaves < 2) bad("num_leaves must be >= 2");
    if (num_iters < 0) bad("num_iters must be >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be positive");
    if (min_data_in_leaf < 1) bad("min_data_in_leaf must be >= 1");
    if (!(lambda_l2 >= 0.0) || !std::isfinite(lambda_l2)) bad("lambda_l2 must be >= 0");
    if (early_stopping_rounds < 0) bad("early_stopping_rounds must be >= 0");
    if (max_bins < 2 || max_bins > kMaxBins) bad("max_bins must lie in [2, 255]");
    if (!(min_sum_hessian >= 0.0)) bad("min_sum_hessian must be >= 0");
    if (!(min_gain_to_split >= 0.0)) bad("min_gain_to_split must be >= 0");
    if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) bad("feature_fraction must lie in (0, 1]");
    if (!(bagging_fraction > 0.0 && bagging_fraction <= 1.0)) bad("bagging_fraction must lie in (0, 1]");
}

void ObjectiveConfig::validate() const {
    if (kind != ObjectiveKind::WeightedSoftmaxCE) return;
    for (double w : class_weights) {
        if (!std::isfinite(w) || w <= 0.0) {
            throw Error(ErrorKind::InvalidConfig, "class weights must be finite and positive");
        }
    }
    if (!(class_weights[2] >= class_weights[1] && class_weights[1] >= class_weights[0])) {
        throw Error(ErrorKind::InvalidConfig, "class weights must satisfy red >= yellow >= green");
    }
}

const char* objective_name(ObjectiveKind k) {
    return k == ObjectiveKind::WeightedSoftmaxCE ? "weighted_softmax_ce" : "mae";
}

GradHess3 grad_hess_wce(std::span<const double, 3> logits, int label, std::span<const double, 3> weights) {
    const double top = std::max({logits[0], logits[1], logits[2]});
    std::array<double, 3> p{};
    double z = 0.0;
    for (int c = 0; c < 3; ++c) {
        p[c] = std::exp(logits[c] - top);
        z += p[c];
    }
    const double w = weights[static_cast<std::size_t>(label)];
    GradHess3 out;
    for (int c = 0; c < 3; ++c) {
        p[c] /= z;
        out.g[c] = w * (p[c] - (c == label ? 1.0 : 0.0));
        out.h[c] = w * p[c] * (1.0 - p[c]);
    }
    return out;
}

GradHess1 grad_hess_mae(double pred, double label) {
    const double d = pred - label;
    return {d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0), 1.0};
}

int Tree::n_leaves() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int Tree::leaf_of(std::span<const double> row) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        const double x = row[static_cast<std::size_t>(n.feature)];
        i = (std::isnan(x) || x <= n.threshold) ? n.left : n.right;
    }
    return i;
}

int Tree::leaf_of_binned(const BinnedDataset& data, std::size_t row) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        i = data.bins[static_cast<std::size_t>(n.feature)][row] <= n.bin ? n.left : n.right;
    }
    return i;
}

GrownTree grow_tree(const BinnedDataset& data, std::span<const double> g, std::span<const double> h,
                    const TrainParams& params, std::span<const std::uint32_t> rows, std::span<const int> features) {
    if (g.size() != data.n_rows || h.size() != data.n_rows) {
        throw Error(ErrorKind::DimensionMismatch, "gradient length differs from row count");
    }
    std::vector<std::uint32_t> index;
    if (rows.empty()) {
        index.resize(data.n_rows);
        std::iota(index.begin(), index.end(), 0u);
    } else {
        index.assign(rows.begin(), rows.end());
    }
    std::vector<int> feats = features.empty() ? all_features(data.n_features())
                                              : std::vector<int>(features.begin(), features.end());
    std::sort(feats.begin(), feats.end());

    GrownTree out;
    out.row_leaf.assign(data.n_rows, -1);
    auto& nodes = out.tree.nodes;

    Leaf root;
    root.end = index.size();
    for (auto r : index) {
        root.g += g[r];
        root.h += h[r];
    }
    nodes.push_back({});
    nodes[0].value = leaf_value(root.g, root.h, params.lambda_l2);
    nodes[0].count = static_cast<std::int64_t>(index.size());
    if (!index.empty()) {
        build_hist(data, feats, index, g, h, root.hist);
        root.best = find_split(data, root, feats, params);
    }

    std::vector<Leaf> leaves;
    leaves.push_back(std::move(root));

    while (static_cast<int>(leaves.size()) < params.num_leaves) {
        // Largest gain; ties go to the lower node index.
        std::size_t pick = leaves.size();
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            if (leaves[i].best.feature < 0) continue;
            if (pick == leaves.size() || leaves[i].best.gain > leaves[pick].best.gain ||
                (leaves[i].best.gain == leaves[pick].best.gain && leaves[i].node < leaves[pick].node)) {
                pick = i;
            }
        }
        if (pick == leaves.size()) break;

        Leaf parent = std::move(leaves[pick]);
        leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));
        const Split s = parent.best;
        const auto& col = data.bins[static_cast<std::size_t>(s.feature)];
        const auto first = index.begin() + static_cast<std::ptrdiff_t>(parent.begin);
        const auto last = index.begin() + static_cast<std::ptrdiff_t>(parent.end);
        const auto mid = std::stable_partition(first, last, [&](std::uint32_t r) { return col[r] <= s.bin; });
        const auto split_at = static_cast<std::size_t>(mid - index.begin());

        const int left_id = static_cast<int>(nodes.size());
        const int right_id = left_id + 1;
        TreeNode& pn = nodes[static_cast<std::size_t>(parent.node)];
        pn.feature = s.feature;
        pn.bin = s.bin;
        pn.threshold = data.features[static_cast<std::size_t>(s.feature)].threshold_of(s.bin);
        pn.left = left_id;
        pn.right = right_id;
        pn.gain = s.gain;

        Leaf left;
        left.node = left_id;
        left.begin = parent.begin;
        left.end = split_at;
        left.g = s.g_left;
        left.h = s.h_left;
        Leaf right;
        right.node = right_id;
        right.begin = split_at;
        right.end = parent.end;
        right.g = parent.g - s.g_left;
        right.h = parent.h - s.h_left;

        for (const Leaf* c : {&left, &right}) {
            TreeNode node;
            node.value = leaf_value(c->g, c->h, params.lambda_l2);
            node.count = static_cast<std::int64_t>(c->end - c->begin);
            nodes.push_back(node);
        }

        // Histogram the smaller child directly, derive the sibling by subtraction.
        Leaf& small = (left.end - left.begin) <= (right.end - right.begin) ? left : right;
        Leaf& large = &small == &left ? right : left;
        build_hist(data, feats,
                   std::span<const std::uint32_t>(index.data() + small.begin, small.end - small.begin), g, h,
                   small.hist);
        large.hist = std::move(parent.hist);
        for (std::size_t b = 0; b < large.hist.size(); ++b) {
            large.hist[b].g -= small.hist[b].g;
            large.hist[b].h -= small.hist[b].h;
            large.hist[b].n -= small.hist[b].n;
        }
        left.best = find_split(data, left, feats, params);
        right.best = find_split(data, right, feats, params);
        leaves.push_back(std::move(left));
        leaves.push_back(std::move(right));
    }

    for (const Leaf& leaf : leaves) {
        for (std::size_t i = leaf.begin; i < leaf.end; ++i) out.row_leaf[index[i]] = leaf.node;
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd resolve_init(const Eigen::MatrixXd& init, std::size_t n, int k, const char* what) {
    if (init.size() == 0) return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), k);
    if (init.rows() != static_cast<Eigen::Index>(n) || init.cols() != k) {
        throw Error(ErrorKind::DimensionMismatch,
                    std::string(what) + ": init scores must be " + std::to_string(n) + " x " + std::to_string(k));
    }
    return init;
}

void check_labels(const FeatureTable& t, const ObjectiveConfig& obj, const char* what) {
    if (t.labels.size() != t.n_rows()) {
        throw Error(ErrorKind::SchemaError, std::string(what) + ": rows must carry labels");
    }
    for (double y : t.labels) {
        if (!std::isfinite(y)) throw Error(ErrorKind::SchemaError, std::string(what) + ": non-finite label");
        if (obj.kind == ObjectiveKind::WeightedSoftmaxCE && y != 0.0 && y != 1.0 && y != 2.0) {
            throw Error(ErrorKind::SchemaError, std::string(what) + ": class labels must be 0, 1 or 2");
        }
    }
}

void compute_grad(const ObjectiveConfig& obj, const Eigen::MatrixXd& scores, std::span<const double> labels,
                  std::vector<std::vector<double>>& g, std::vector<std::vector<double>>& h) {
    const auto n = static_cast<std::ptrdiff_t>(labels.size());
    if (obj.kind == ObjectiveKind::WeightedSoftmaxCE) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const std::array<double, 3> s{scores(i, 0), scores(i, 1), scores(i, 2)};
            const auto gh = grad_hess_wce(s, static_cast<int>(labels[static_cast<std::size_t>(i)]), obj.class_weights);
            for (std::size_t c = 0; c < 3; ++c) {
                g[c][static_cast<std::size_t>(i)] = gh.g[c];
                h[c][static_cast<std::size_t>(i)] = gh.h[c];
            }
        }
    } else {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto gh = grad_hess_mae(scores(i, 0), labels[static_cast<std::size_t>(i)]);
            g[0][static_cast<std::size_t>(i)] = gh.g;
            h[0][static_cast<std::size_t>(i)] = gh.h;
        }
    }
}

void add_tree(const Tree& tree, const BinnedDataset& data, Eigen::MatrixXd& scores, Eigen::Index out) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.n_rows); ++i) {
        scores(i, out) += tree.nodes[static_cast<std::size_t>(tree.leaf_of_binned(data, static_cast<std::size_t>(i)))].value;
    }
}

}  // namespace

double evaluate_scores(const ObjectiveConfig& objective, const Eigen::MatrixXd& scores,
                       std::span<const double> labels) {
    if (objective.kind == ObjectiveKind::WeightedSoftmaxCE) {
        return eval_core(softmax_rows(scores), labels, objective.class_weights);
    }
    const Eigen::VectorXd col = scores.col(0);
    return eval_extended(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), labels);
}

TrainResult train(const FeatureTable& train_rows, const FeatureTable& valid_rows,
                  const Eigen::MatrixXd& init_train, const Eigen::MatrixXd& init_valid,
                  const ObjectiveConfig& objective, const TrainParams& params) {
    params.validate();
    objective.validate();
    train_rows.validate();
    if (train_rows.n_rows() == 0) throw Error(ErrorKind::EmptyData, "training table has no rows");
    if (train_rows.n_features() == 0) throw Error(ErrorKind::EmptyData, "training table has no feature columns");
    check_labels(train_rows, objective, "train");
    const bool has_valid = valid_rows.n_rows() > 0;
    if (has_valid) {
        valid_rows.validate();
        require_same_schema(train_rows, valid_rows, "validation table");
        check_labels(valid_rows, objective, "valid");
    }

    const int k = objective.n_outputs();
    const std::size_t n = train_rows.n_rows();
    Eigen::MatrixXd scores = resolve_init(init_train, n, k, "train");
    Eigen::MatrixXd vscores = has_valid ? resolve_init(init_valid, valid_rows.n_rows(), k, "valid") : Eigen::MatrixXd();

    const BinnedDataset data = bin_features(train_rows, params.max_bins);
    const BinnedDataset vdata = has_valid ? bin_like(data, valid_rows) : BinnedDataset{};

    TrainResult result;
    result.model.objective = objective;
    result.model.params = params;
    result.model.feature_names = train_rows.names;

    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto log_row = [&](int iter) {
        LogRow row{iter, evaluate_scores(objective, scores, train_rows.labels), nan};
        if (has_valid) row.valid_metric = evaluate_scores(objective, vscores, valid_rows.labels);
        result.log.push_back(row);
        return row;
    };
    double best_metric = log_row(0).valid_metric;
    int best_iter = 0;

    std::vector<std::vector<double>> g(static_cast<std::size_t>(k), std::vector<double>(n));
    std::vector<std::vector<double>> h = g;
    const std::vector<int> every_feature = all_features(train_rows.n_features());

    for (int iter = 1; iter <= params.num_iters; ++iter) {
        compute_grad(objective, scores, train_rows.labels, g, h);

        std::vector<std::uint32_t> bag;
        if (params.bagging_fraction < 1.0) {
            Rng rng = Rng::substream(params.seed, static_cast<std::uint64_t>(iter));
            for (std::uint32_t r = 0; r < n; ++r) {
                if (rng.uniform() < params.bagging_fraction) bag.push_back(r);
            }
            if (bag.empty()) bag.push_back(static_cast<std::uint32_t>(rng.below(n)));
        }
        std::vector<int> feats;
        if (params.feature_fraction < 1.0) {
            Rng rng = Rng::substream(params.seed ^ 0xFEA7u, static_cast<std::uint64_t>(iter));
            feats = every_feature;
            const auto take = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::ceil(params.feature_fraction * static_cast<double>(feats.size()))));
            for (std::size_t i = 0; i < take; ++i) {
                std::swap(feats[i], feats[i + rng.below(feats.size() - i)]);
            }
            feats.resize(take);
        }

        std::vector<Tree> trees;
        for (int out = 0; out < k; ++out) {
            const auto o = static_cast<std::size_t>(out);
            GrownTree grown = grow_tree(data, g[o], h[o], params, bag, feats);
            Tree& tree = grown.tree;
            if (objective.kind == ObjectiveKind::MAE) {
                std::vector<std::vector<double>> residuals(tree.nodes.size());
                for (std::size_t r = 0; r < n; ++r) {
                    const int leaf = grown.row_leaf[r];
                    if (leaf >= 0) {
                        residuals[static_cast<std::size_t>(leaf)].push_back(
                            train_rows.labels[r] - scores(static_cast<Eigen::Index>(r), 0));
                    }
                }
                for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
                    if (tree.nodes[i].is_leaf()) {
                        tree.nodes[i].value =
                            residuals[i].empty() ? 0.0 : params.learning_rate * median(residuals[i]);
                    }
                }
            } else {
                for (auto& node : tree.nodes) {
                    if (node.is_leaf()) node.value *= params.learning_rate;
                }
            }
            trees.push_back(std::move(tree));
        }
        for (int out = 0; out < k; ++out) {
            add_tree(trees[static_cast<std::size_t>(out)], data, scores, out);
            if (has_valid) add_tree(trees[static_cast<std::size_t>(out)], vdata, vscores, out);
        }
        result.model.iterations.push_back(std::move(trees));

        const LogRow row = log_row(iter);
        if (has_valid) {
            if (row.valid_metric < best_metric) {
                best_metric = row.valid_metric;
                best_iter = iter;
            } else if (params.early_stopping_rounds > 0 && iter - best_iter >= params.early_stopping_rounds) {
                break;
            }
        }
    }

    if (has_valid && params.early_stopping_rounds > 0) {
        result.model.iterations.resize(static_cast<std::size_t>(best_iter));
        result.best_iteration = best_iter;
    } else {
        result.best_iteration = static_cast<int>(result.model.iterations.size());
    }
    return result;
}

Eigen::MatrixXd predict(const TreeEnsemble& model, const FeatureTable& rows, const Eigen::MatrixXd& init) {
    rows.validate();
    if (rows.names != model.feature_names) {
        throw Error(ErrorKind::SchemaMismatch,
                    "prediction table columns differ from the model's (" + std::to_string(model.feature_names.size()) +
                        " expected, " + std::to_string(rows.names.size()) + " given)");
    }
    const int k = model.n_outputs();
    Eigen::MatrixXd scores = resolve_init(init, rows.n_rows(), k, "predict");
    const std::size_t nf = rows.n_features();
#pragma omp parallel
    {
        std::vector<double> buf(nf);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows.n_rows()); ++i) {
            for (std::size_t f = 0; f < nf; ++f) buf[f] = rows.columns[f][static_cast<std::size_t>(i)];
            for (const auto& trees : model.iterations) {
                for (int out = 0; out < k; ++out) scores(i, out) += trees[static_cast<std::size_t>(out)].predict(buf);
            }
        }
    }
    return scores;
}

Eigen::MatrixXd predict_proba(const TreeEnsemble& model, const FeatureTable& rows, const Eigen::MatrixXd& init) {
    if (model.objective.kind != ObjectiveKind::WeightedSoftmaxCE) {
        throw Error(ErrorKind::SchemaMismatch, "probabilities are only defined for the classification objective");
    }
    return softmax_rows(predict(model, rows, init));
}

std::vector<double> feature_importance(const TreeEnsemble& model) {
    std::vector<double> imp(model.feature_names.size(), 0.0);
    for (const auto& trees : model.iterations) {
        for (const auto& tree : trees) {
            for (const auto& node : tree.nodes) {
                if (!node.is_leaf()) imp[static_cast<std::size_t>(node.feature)] += node.gain;
            }
        }
    }
    return imp;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json params_json(const TrainParams& p) {
    return {{"num_leaves", p.num_leaves},
            {"num_iters", p.num_iters},
            {"learning_rate", p.learning_rate},
            {"min_data_in_leaf", p.min_data_in_leaf},
            {"lambda_l2", p.lambda_l2},
            {"early_stopping_rounds", p.early_stopping_rounds},
            {"max_bins", p.max_bins},
            {"seed", p.seed},
            {"min_sum_hessian", p.min_sum_hessian},
            {"min_gain_to_split", p.min_gain_to_split},
            {"feature_fraction", p.feature_fraction},
            {"bagging_fraction", p.bagging_fraction}};
}

TrainParams params_from(const nlohmann::json& j) {
    TrainParams p;
    p.num_leaves = j.at("num_leaves").get<int>();
    p.num_iters = j.at("num_iters").get<int>();
    p.learning_rate = j.at("learning_rate").get<double>();
    p.min_data_in_leaf = j.at("min_data_in_leaf").get<int>();
    p.lambda_l2 = j.at("lambda_l2").get<double>();
    p.early_stopping_rounds = j.at("early_stopping_rounds").get<int>();
    p.max_bins = j.at("max_bins").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.min_sum_hessian = j.at("min_sum_hessian").get<double>();
    p.min_gain_to_split = j.at("min_gain_to_split").get<double>();
    p.feature_fraction = j.at("feature_fraction").get<double>();
    p.bagging_fraction = j.at("bagging_fraction").get<double>();
    return p;
}

}  // namespace

nlohmann::json to_json(const TreeEnsemble& model) {
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& trees : model.iterations) {
        nlohmann::json per_output = nlohmann::json::array();
        for (const auto& tree : trees) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& n : tree.nodes) {
                nodes.push_back({n.feature, n.bin, n.threshold, n.left, n.right, n.value, n.gain, n.count});
            }
            per_output.push_back(std::move(nodes));
        }
        iters.push_back(std::move(per_output));
    }
    return {{"format_version", kModelFormatVersion},
            {"objective",
             {{"kind", objective_name(model.objective.kind)}, {"class_weights", model.objective.class_weights}}},
            {"params", params_json(model.params)},
            {"feature_names", model.feature_names},
            {"n_outputs", model.n_outputs()},
            {"trees", std::move(iters)}};
}

TreeEnsemble model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != kModelFormatVersion) {
            throw Error(ErrorKind::SchemaError, "unsupported model format_version");
        }
        TreeEnsemble m;
        const std::string kind = j.at("objective").at("kind").get<std::string>();
        if (kind == objective_name(ObjectiveKind::WeightedSoftmaxCE)) {
            m.objective.kind = ObjectiveKind::WeightedSoftmaxCE;
        } else if (kind == objective_name(ObjectiveKind::MAE)) {
            m.objective.kind = ObjectiveKind::MAE;
        } else {
            throw Error(ErrorKind::SchemaError, "unknown objective '" + kind + "'");
        }
        m.objective.class_weights = j.at("objective").at("class_weights").get<std::array<double, 3>>();
        m.params = params_from(j.at("params"));
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        const auto k = static_cast<std::size_t>(m.n_outputs());
        for (const auto& per_output : j.at("trees")) {
            if (per_output.size() != k) throw Error(ErrorKind::SchemaError, "tree count per iteration differs");
            std::vector<Tree> trees;
            for (const auto& nodes : per_output) {
                Tree t;
                for (const auto& a : nodes) {
                    TreeNode n;
                    n.feature = a.at(0).get<int>();
                    n.bin = a.at(1).get<int>();
                    n.threshold = a.at(2).get<double>();
                    n.left = a.at(3).get<int>();
                    n.right = a.at(4).get<int>();
                    n.value = a.at(5).get<double>();
                    n.gain = a.at(6).get<double>();
                    n.count = a.at(7).get<std::int64_t>();
                    t.nodes.push_back(n);
                }
                const auto size = static_cast<int>(t.nodes.size());
                for (const auto& n : t.nodes) {
                    if (n.is_leaf()) continue;
                    if (n.feature >= static_cast<int>(m.feature_names.size()) || n.left <= 0 || n.right <= 0 ||
                        n.left >= size || n.right >= size) {
                        throw Error(ErrorKind::SchemaError, "malformed tree node");
                    }
                }
                if (t.nodes.empty()) throw Error(ErrorKind::SchemaError, "empty tree");
                trees.push_back(std::move(t));
            }
            m.iterations.push_back(std::move(trees));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("malformed model file: ") + e.what());
    }
}

void save_model(const TreeEnsemble& model, const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    out << to_json(model).dump() << '\n';
}

TreeEnsemble load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open model file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

void write_log(std::span<const LogRow> log, const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    out << "iter,train_metric,valid_metric\n";
    for (const auto& r : log) {
        out << r.iter << ',' << csv::format_double(r.train_metric) << ',' << csv::format_double(r.valid_metric)
            << '\n';
    }
}

}  // namespace cb::gbdt
