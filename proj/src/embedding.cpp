#include "blau/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blau/errors.hpp"

namespace blau {

EmbeddingResult classical_mds(const std::vector<std::string>& ids, const Eigen::MatrixXd& d, std::size_t k) {
    const Eigen::Index n = d.rows();
    if (d.cols() != n) throw ConfigError("mds: distance matrix is not square");
    if (ids.size() != static_cast<std::size_t>(n)) throw ConfigError("mds: id count does not match the matrix");
    if (k < 1) throw ConfigError("mds: target dimension must be at least 1");
    if (!d.allFinite()) throw ConfigError("mds: distance matrix has non-finite entries");
    const double scale = n == 0 ? 0.0 : d.cwiseAbs().maxCoeff();
    const double tol = 1e-9 * std::max(1.0, scale);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(d(i, i)) > tol) throw ConfigError("mds: distance matrix has a non-zero diagonal");
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (std::abs(d(i, j) - d(j, i)) > tol) throw ConfigError("mds: distance matrix is not symmetric");
    }

    // B = -1/2 J D^2 J
    Eigen::MatrixXd sq = 0.5 * (d + d.transpose());
    sq = sq.cwiseProduct(sq);
    const Eigen::VectorXd row_mean = sq.rowwise().mean();
    const double grand = row_mean.mean();
    Eigen::MatrixXd b(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) b(i, j) = -0.5 * (sq(i, j) - row_mean[i] - row_mean[j] + grand);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
    if (eig.info() != Eigen::Success) throw NumericError("mds: eigendecomposition failed");
    // Eigen sorts ascending.
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

    EmbeddingResult out;
    out.ids = ids;
    const auto kk = static_cast<Eigen::Index>(k);
    out.coordinates = Eigen::MatrixXd::Zero(n, kk);
    out.eigenvalues = Eigen::VectorXd::Zero(kk);
    double kept_sq = 0.0;
    for (Eigen::Index m = 0; m < std::min(kk, n); ++m) {
        out.eigenvalues[m] = values[m];
        if (values[m] > 0.0) {
            out.coordinates.col(m) = vectors.col(m) * std::sqrt(values[m]);
            kept_sq += values[m] * values[m];
        }
    }
    // remove residual mean from rounding
    out.coordinates.rowwise() -= out.coordinates.colwise().mean();

    const double total_sq = values.squaredNorm();
    out.strain = total_sq > 0.0 ? std::sqrt(std::max(0.0, total_sq - kept_sq) / total_sq) : 0.0;
    const double abs_total = values.cwiseAbs().sum();
    out.negative_mass = abs_total > 0.0 ? (values.array() < 0.0).select(-values.array(), 0.0).sum() / abs_total : 0.0;

    const Eigen::MatrixXd embedded = euclidean_distances(out.coordinates);
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double r = d(i, j) - embedded(i, j);
            num += r * r;
            den += d(i, j) * d(i, j);
        }
    out.stress = den > 0.0 ? std::sqrt(num / den) : 0.0;
    return out;
}

EmbeddingResult classical_mds(const SeparationMatrix& distances, std::size_t k) {
    return classical_mds(distances.ids, distances.values, k);
}

Eigen::MatrixXd euclidean_distances(const Eigen::MatrixXd& points) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) out(i, j) = out(j, i) = (points.row(i) - points.row(j)).norm();
    return out;
}

std::vector<std::optional<double>> kernel_smooth(const Eigen::MatrixXd& points, std::span<const double> values,
                                                 const Eigen::MatrixXd& query, double bandwidth) {
    if (!(bandwidth > 0.0)) throw ConfigError("kernel smoothing: bandwidth must be positive");
    if (static_cast<std::size_t>(points.rows()) != values.size())
        throw ConfigError("kernel smoothing: point and value counts differ");
    if (points.cols() != query.cols()) throw ConfigError("kernel smoothing: dimension mismatch");
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    std::vector<std::optional<double>> out(static_cast<std::size_t>(query.rows()));
    for (Eigen::Index q = 0; q < query.rows(); ++q) {
        double wsum = 0.0, vsum = 0.0;
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            const double w = std::exp(-(query.row(q) - points.row(i)).squaredNorm() * inv);
            wsum += w;
            vsum += w * values[static_cast<std::size_t>(i)];
        }
        if (wsum >= std::numeric_limits<double>::min())
            out[static_cast<std::size_t>(q)] = std::clamp(vsum / wsum, *std::min_element(values.begin(), values.end()),
                                                          *std::max_element(values.begin(), values.end()));
    }
    return out;
}

double silverman_bandwidth(const Eigen::MatrixXd& points) {
    const Eigen::Index n = points.rows();
    if (n < 2) throw ConfigError("bandwidth: need at least 2 points");
    double sd = 0.0;
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
        const double mean = points.col(c).mean();
        sd += std::sqrt((points.col(c).array() - mean).square().sum() / static_cast<double>(n - 1));
    }
    sd /= static_cast<double>(points.cols());
    if (!(sd > 0.0)) throw ConfigError("bandwidth: points have zero spread");
    return 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
}

ConditionalProfile conditional_profile(std::span<const double> coordinate, std::span<const double> attribute,
                                       std::span<const double> grid, double bandwidth) {
    if (coordinate.size() != attribute.size())
        throw ConfigError("conditional profile: coordinate and attribute lengths differ");
    const auto n = static_cast<Eigen::Index>(coordinate.size());
    Eigen::MatrixXd pts(n, 1), query(static_cast<Eigen::Index>(grid.size()), 1);
    for (Eigen::Index i = 0; i < n; ++i) pts(i, 0) = coordinate[static_cast<std::size_t>(i)];
    for (std::size_t g = 0; g < grid.size(); ++g) query(static_cast<Eigen::Index>(g), 0) = grid[g];
    std::vector<double> squares(attribute.size());
    for (std::size_t i = 0; i < attribute.size(); ++i) squares[i] = attribute[i] * attribute[i];

    ConditionalProfile out;
    out.grid.assign(grid.begin(), grid.end());
    out.mean = kernel_smooth(pts, attribute, query, bandwidth);
    const auto second = kernel_smooth(pts, squares, query, bandwidth);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (!out.mean[g] || !second[g]) {
            out.sd.emplace_back();
            continue;
        }
        out.sd.emplace_back(std::sqrt(std::max(0.0, *second[g] - *out.mean[g] * *out.mean[g])));
    }
    return out;
}

}  // namespace blau
