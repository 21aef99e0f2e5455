#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ocda/color_lab.hpp"

namespace ocda {

/// Symmetric Euclidean distance matrix with zero diagonal.
struct DistanceMatrix {
    int n = 0;
    std::vector<double> d;  // n*n

    double at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
    double& at(int i, int j) { return d[static_cast<std::size_t>(i) * n + j]; }
};

/// Assignment of every image to one of k subdomains (0-based indices
/// internally; external CSV uses 1-based indices).
struct SubdomainPartition {
    int k = 0;
    std::vector<int> assignment;
    std::optional<int> k_star;

    std::vector<std::vector<int>> members() const;
};

struct ScPoint {
    int k = 0;
    double sc = 0.0;       // summed silhouette (Eq. form used for selection)
    double sc_mean = 0.0;  // sc / n, reported alongside
};

DistanceMatrix pairwise_distances(std::span<const StyleDescriptor> descs);

/// Seeded k-means with k-means++ init, 10 restarts, 300-iteration cap,
/// 1e-6 relative-shift convergence. Deterministic for a fixed seed.
SubdomainPartition cluster(std::span<const StyleDescriptor> descs, int k, std::uint64_t seed);

/// Mean distance from image i to the other members of its own cluster.
double gamma_cohesion(int i, const SubdomainPartition& part, const DistanceMatrix& dist);

/// Minimum over foreign clusters of the mean distance from image i to that cluster.
double delta_separation(int i, const SubdomainPartition& part, const DistanceMatrix& dist);

/// Summed silhouette score: sum over images of (delta-gamma)/max(gamma,delta).
/// Members of singleton clusters contribute 0, as do all-zero-distance points.
double silhouette_score(const SubdomainPartition& part, const DistanceMatrix& dist);

/// Clusters for each k in [k_min, k_max], scores each with the summed
/// silhouette, and returns the argmax partition (ties toward smaller k) with
/// k_star set. Optionally reports the score curve.
SubdomainPartition auto_separate(std::span<const StyleDescriptor> descs, int k_min, int k_max,
                                 std::uint64_t seed, std::vector<ScPoint>* curve = nullptr);

}  // namespace ocda
