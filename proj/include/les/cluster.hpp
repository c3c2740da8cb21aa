#pragma once

// Clustering diagnostics over action-subspace vectors: seeded k-means++
// with Lloyd iterations, a full-covariance Gaussian mixture fitted by EM,
// and the mean silhouette coefficient. Everything is deterministic given
// the seed; iteration histories are kept so monotonicity (non-increasing
// within-cluster sum of squares, non-decreasing log-likelihood) can be
// audited.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "les/au.hpp"
#include "les/error.hpp"

namespace les {

enum class ClusterMethod { KMeans, Gmm };

inline const char* to_string(ClusterMethod m) {
    return m == ClusterMethod::KMeans ? "kmeans" : "gmm";
}

inline ClusterMethod cluster_method_from_string(const std::string& s) {
    if (s == "kmeans") return ClusterMethod::KMeans;
    if (s == "gmm") return ClusterMethod::Gmm;
    throw Error(ErrorKind::BadParams, "cluster method must be 'kmeans' or 'gmm', got '" + s + "'");
}

struct ClusterLabelShare {
    std::string label;
    double percentage = 0.0;  // share of the cluster carrying this label, in percent
};

struct ClusterReport {
    ClusterMethod method = ClusterMethod::KMeans;
    int k = 0;
    std::vector<int> assignments;
    double silhouette = 0.0;
    std::map<int, ClusterLabelShare> per_cluster_top_label;
    std::vector<Eigen::VectorXd> centroids;   // k-means centroids / GMM means
    std::vector<double> wcss_history;         // per Lloyd iteration
    std::vector<double> loglik_history;       // per EM iteration
};

namespace detail {

inline constexpr double kKMeansShiftTol = 1e-6;
inline constexpr int kKMeansMaxIter = 300;
inline constexpr double kGmmLogLikTol = 1e-6;
inline constexpr int kGmmMaxIter = 200;
inline constexpr double kGmmCovFloor = 1e-6;

inline double sq_dist(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).squaredNorm();
}

// k-means++ seeding: first centroid uniform, the rest proportional to the
// squared distance to the nearest chosen centroid.
inline std::vector<Eigen::VectorXd> kmeans_pp_seed(const std::vector<Eigen::VectorXd>& points,
                                                   int k, std::mt19937_64& rng) {
    const size_t n = points.size();
    std::vector<Eigen::VectorXd> centroids;
    centroids.reserve(static_cast<size_t>(k));
    std::uniform_int_distribution<size_t> uniform(0, n - 1);
    centroids.push_back(points[uniform(rng)]);
    std::vector<double> d2(n);
    while (centroids.size() < static_cast<size_t>(k)) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(points[i], c));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            centroids.push_back(points[uniform(rng)]);  // all remaining points coincide
            continue;
        }
        std::uniform_real_distribution<double> pick(0.0, total);
        double target = pick(rng);
        size_t chosen = n - 1;
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= target) {
                chosen = i;
                break;
            }
        }
        centroids.push_back(points[chosen]);
    }
    return centroids;
}

inline int nearest_centroid(const Eigen::VectorXd& p, const std::vector<Eigen::VectorXd>& centroids) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < centroids.size(); ++c) {
        double d = sq_dist(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

} // namespace detail

struct KMeansResult {
    std::vector<Eigen::VectorXd> centroids;
    std::vector<int> assignments;
    std::vector<double> wcss_history;
};

/// Lloyd's algorithm with k-means++ seeding. Runs until the largest centroid
/// shift falls below 1e-6 or 300 iterations. A cluster left empty after
/// assignment is re-seeded from the point farthest from its centroid.
inline KMeansResult kmeans(const std::vector<Eigen::VectorXd>& points, int k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorKind::BadParams, "k must be >= 2");
    if (points.size() < static_cast<size_t>(k))
        throw Error(ErrorKind::TooFewPoints,
                    std::to_string(points.size()) + " points for k=" + std::to_string(k));

    std::mt19937_64 rng(seed);
    KMeansResult result;
    result.centroids = detail::kmeans_pp_seed(points, k, rng);
    result.assignments.assign(points.size(), 0);

    for (int iter = 0; iter < detail::kKMeansMaxIter; ++iter) {
        double wcss = 0.0;
        for (size_t i = 0; i < points.size(); ++i) {
            result.assignments[i] = detail::nearest_centroid(points[i], result.centroids);
            wcss += detail::sq_dist(points[i], result.centroids[static_cast<size_t>(result.assignments[i])]);
        }
        result.wcss_history.push_back(wcss);

        std::vector<Eigen::VectorXd> next(static_cast<size_t>(k),
                                          Eigen::VectorXd::Zero(points[0].size()));
        std::vector<std::int64_t> counts(static_cast<size_t>(k), 0);
        for (size_t i = 0; i < points.size(); ++i) {
            next[static_cast<size_t>(result.assignments[i])] += points[i];
            ++counts[static_cast<size_t>(result.assignments[i])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                // re-seed the empty cluster from the globally farthest point
                size_t farthest = 0;
                double best = -1.0;
                for (size_t i = 0; i < points.size(); ++i) {
                    double d = detail::sq_dist(
                        points[i], result.centroids[static_cast<size_t>(result.assignments[i])]);
                    if (d > best) {
                        best = d;
                        farthest = i;
                    }
                }
                next[static_cast<size_t>(c)] = points[farthest];
                result.assignments[farthest] = c;
            } else {
                next[static_cast<size_t>(c)] /= static_cast<double>(counts[static_cast<size_t>(c)]);
            }
        }

        double shift = 0.0;
        for (int c = 0; c < k; ++c)
            shift = std::max(shift, (next[static_cast<size_t>(c)] -
                                     result.centroids[static_cast<size_t>(c)]).norm());
        result.centroids = std::move(next);
        if (shift < detail::kKMeansShiftTol) break;
    }

    // final assignment against the converged centroids
    double wcss = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
        result.assignments[i] = detail::nearest_centroid(points[i], result.centroids);
        wcss += detail::sq_dist(points[i], result.centroids[static_cast<size_t>(result.assignments[i])]);
    }
    result.wcss_history.push_back(wcss);
    return result;
}

struct GmmResult {
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;
    std::vector<double> weights;
    std::vector<int> assignments;  // argmax responsibility
    std::vector<double> loglik_history;
};

/// Full-covariance Gaussian mixture fitted by EM, initialized from k-means.
/// Covariance diagonals are floored at 1e-6. Stops when the log-likelihood
/// improves by less than 1e-6 or after 200 iterations.
inline GmmResult gmm(const std::vector<Eigen::VectorXd>& points, int k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorKind::BadParams, "k must be >= 2");
    if (points.size() < static_cast<size_t>(k))
        throw Error(ErrorKind::TooFewPoints,
                    std::to_string(points.size()) + " points for k=" + std::to_string(k));

    const auto n = points.size();
    const auto dim = points[0].size();
    KMeansResult init = kmeans(points, k, seed);

    GmmResult result;
    result.means = init.centroids;
    result.weights.assign(static_cast<size_t>(k), 1.0 / k);
    result.covariances.assign(static_cast<size_t>(k), Eigen::MatrixXd::Zero(dim, dim));

    // initial moments from the k-means partition
    std::vector<std::int64_t> counts(static_cast<size_t>(k), 0);
    for (size_t i = 0; i < n; ++i) ++counts[static_cast<size_t>(init.assignments[i])];
    for (size_t i = 0; i < n; ++i) {
        auto c = static_cast<size_t>(init.assignments[i]);
        Eigen::VectorXd d = points[i] - result.means[c];
        result.covariances[c] += d * d.transpose();
    }
    for (int c = 0; c < k; ++c) {
        auto& cov = result.covariances[static_cast<size_t>(c)];
        if (counts[static_cast<size_t>(c)] > 0) cov /= static_cast<double>(counts[static_cast<size_t>(c)]);
        cov.diagonal().array() += detail::kGmmCovFloor;
        result.weights[static_cast<size_t>(c)] =
            static_cast<double>(std::max<std::int64_t>(counts[static_cast<size_t>(c)], 1)) /
            static_cast<double>(n);
    }
    {
        double wsum = 0.0;
        for (double w : result.weights) wsum += w;
        for (double& w : result.weights) w /= wsum;
    }

    Eigen::MatrixXd log_resp(static_cast<Eigen::Index>(n), k);
    const double log2pi = std::log(2.0 * M_PI);

    for (int iter = 0; iter < detail::kGmmMaxIter; ++iter) {
        // E step: log responsibilities via Cholesky factors
        std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
        std::vector<double> log_dets(static_cast<size_t>(k));
        llts.reserve(static_cast<size_t>(k));
        for (int c = 0; c < k; ++c) {
            llts.emplace_back(result.covariances[static_cast<size_t>(c)]);
            double log_det = 0.0;
            for (Eigen::Index i = 0; i < dim; ++i)
                log_det += 2.0 * std::log(llts.back().matrixL()(i, i));
            log_dets[static_cast<size_t>(c)] = log_det;
        }
        double loglik = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double row_max = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                Eigen::VectorXd d = points[i] - result.means[static_cast<size_t>(c)];
                double maha = llts[static_cast<size_t>(c)].matrixL().solve(d).squaredNorm();
                double lp = std::log(result.weights[static_cast<size_t>(c)]) -
                            0.5 * (dim * log2pi + log_dets[static_cast<size_t>(c)] + maha);
                log_resp(static_cast<Eigen::Index>(i), c) = lp;
                row_max = std::max(row_max, lp);
            }
            double sum = 0.0;
            for (int c = 0; c < k; ++c)
                sum += std::exp(log_resp(static_cast<Eigen::Index>(i), c) - row_max);
            double log_norm = row_max + std::log(sum);
            loglik += log_norm;
            for (int c = 0; c < k; ++c) log_resp(static_cast<Eigen::Index>(i), c) -= log_norm;
        }
        result.loglik_history.push_back(loglik);

        // M step
        for (int c = 0; c < k; ++c) {
            double nc = 0.0;
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
            for (size_t i = 0; i < n; ++i) {
                double r = std::exp(log_resp(static_cast<Eigen::Index>(i), c));
                nc += r;
                mean += r * points[i];
            }
            nc = std::max(nc, 1e-12);
            mean /= nc;
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
            for (size_t i = 0; i < n; ++i) {
                double r = std::exp(log_resp(static_cast<Eigen::Index>(i), c));
                Eigen::VectorXd d = points[i] - mean;
                cov += r * (d * d.transpose());
            }
            cov /= nc;
            cov.diagonal().array() += detail::kGmmCovFloor;
            result.means[static_cast<size_t>(c)] = mean;
            result.covariances[static_cast<size_t>(c)] = cov;
            result.weights[static_cast<size_t>(c)] = nc / static_cast<double>(n);
        }

        if (result.loglik_history.size() >= 2) {
            double prev = result.loglik_history[result.loglik_history.size() - 2];
            if (std::abs(loglik - prev) < detail::kGmmLogLikTol) break;
        }
    }

    result.assignments.assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
        int best = 0;
        double best_lp = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (log_resp(static_cast<Eigen::Index>(i), c) > best_lp) {
                best_lp = log_resp(static_cast<Eigen::Index>(i), c);
                best = c;
            }
        }
        result.assignments[i] = best;
    }
    return result;
}

/// Mean silhouette coefficient s(i) = (b - a) / max(a, b). Points in
/// singleton clusters contribute 0, as do points with a = b = 0.
inline double silhouette(const std::vector<Eigen::VectorXd>& points,
                         const std::vector<int>& assignments) {
    if (points.size() != assignments.size())
        throw Error(ErrorKind::BadParams, "points/assignments size mismatch");
    const size_t n = points.size();

    std::map<int, std::int64_t> cluster_sizes;
    for (int a : assignments) ++cluster_sizes[a];
    if (cluster_sizes.size() < 2)
        throw Error(ErrorKind::SingleCluster, "silhouette needs at least 2 clusters");

    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        int own = assignments[i];
        if (cluster_sizes[own] == 1) continue;  // singleton contributes 0

        std::map<int, double> dist_sum;
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dist_sum[assignments[j]] += (points[i] - points[j]).norm();
        }
        double a = dist_sum[own] / static_cast<double>(cluster_sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [cluster, sum] : dist_sum) {
            if (cluster == own) continue;
            b = std::min(b, sum / static_cast<double>(cluster_sizes[cluster]));
        }
        double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

/// Runs the requested method and assembles the report. When `labels` is
/// non-empty (one label per point) the dominant label and its share are
/// reported per cluster.
inline ClusterReport cluster(const std::vector<Eigen::VectorXd>& points, int k,
                             ClusterMethod method, std::uint64_t seed,
                             const std::vector<std::string>& labels = {}) {
    if (!labels.empty() && labels.size() != points.size())
        throw Error(ErrorKind::BadParams, "labels must match points");

    ClusterReport report;
    report.method = method;
    report.k = k;
    if (method == ClusterMethod::KMeans) {
        KMeansResult r = kmeans(points, k, seed);
        report.assignments = std::move(r.assignments);
        report.centroids = std::move(r.centroids);
        report.wcss_history = std::move(r.wcss_history);
    } else {
        GmmResult r = gmm(points, k, seed);
        report.assignments = std::move(r.assignments);
        report.centroids = std::move(r.means);
        report.loglik_history = std::move(r.loglik_history);
    }

    std::map<int, std::int64_t> sizes;
    for (int a : report.assignments) ++sizes[a];
    bool all_singletons = true;
    for (const auto& [c, s] : sizes)
        if (s > 1) all_singletons = false;
    // with k == n every cluster is a singleton; silhouette is 0 by convention
    report.silhouette = all_singletons ? 0.0 : silhouette(points, report.assignments);

    if (!labels.empty()) {
        std::map<int, std::map<std::string, std::int64_t>> tally;
        for (size_t i = 0; i < labels.size(); ++i) ++tally[report.assignments[i]][labels[i]];
        for (const auto& [cluster, counts] : tally) {
            ClusterLabelShare share;
            std::int64_t best = -1, total = 0;
            for (const auto& [label, count] : counts) {
                total += count;
                if (count > best) {
                    best = count;
                    share.label = label;
                }
            }
            share.percentage = 100.0 * static_cast<double>(best) / static_cast<double>(total);
            report.per_cluster_top_label[cluster] = share;
        }
    }
    return report;
}

} // namespace les
