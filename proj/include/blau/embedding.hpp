#pragma once
// Classical (Torgerson) multidimensional scaling of a separation matrix and
// Gaussian kernel smoothing over the embedding.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blau/segregation.hpp"

namespace blau {

struct EmbeddingResult {
    std::vector<std::string> ids;
    Eigen::MatrixXd coordinates;  // n x k, column means zero
    Eigen::VectorXd eigenvalues;  // k largest, descending; negative ones had their dimension zeroed
    double stress = 0.0;          // Kruskal stress-1 between input and embedded distances
    double strain = 0.0;          // ||B - B_k||_F / ||B||_F of the double-centered matrix
    double negative_mass = 0.0;   // sum of |negative eigenvalues| / sum of |eigenvalues|
};

EmbeddingResult classical_mds(const std::vector<std::string>& ids, const Eigen::MatrixXd& distances,
                              std::size_t k);
EmbeddingResult classical_mds(const SeparationMatrix& distances, std::size_t k);

/// Pairwise Euclidean distances between the rows of `points`.
Eigen::MatrixXd euclidean_distances(const Eigen::MatrixXd& points);

/// Nadaraya-Watson estimate with weights exp(-|q - p|^2 / (2 h^2)). Queries
/// whose weights all underflow come back empty.
std::vector<std::optional<double>> kernel_smooth(const Eigen::MatrixXd& points, std::span<const double> values,
                                                 const Eigen::MatrixXd& query, double bandwidth);

/// Rule-of-thumb bandwidth 1.06 * sd * n^(-1/5), with sd averaged over columns.
double silverman_bandwidth(const Eigen::MatrixXd& points);

struct ConditionalProfile {
    std::vector<double> grid;
    std::vector<std::optional<double>> mean;
    std::vector<std::optional<double>> sd;
};

/// Smoothed conditional mean and standard deviation of `attribute` along a
/// single coordinate.
ConditionalProfile conditional_profile(std::span<const double> coordinate, std::span<const double> attribute,
                                       std::span<const double> grid, double bandwidth);

}  // namespace blau
