#include "ocda/domain_sep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ocda/errors.hpp"
#include "ocda/rng.hpp"

namespace ocda {

namespace {

// Above this size the silhouette is estimated on a seeded uniform subsample.
constexpr int kSilhouetteExactLimit = 5000;
constexpr int kSilhouetteSampleSize = 2000;

double sq_dist(const StyleDescriptor& a, const StyleDescriptor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct KMeansRun {
    std::vector<int> assignment;
    double inertia = std::numeric_limits<double>::infinity();
    bool valid = false;
};

std::vector<std::vector<double>> kmeanspp_init(std::span<const StyleDescriptor> descs, int k,
                                               RngEngine& rng) {
    const int n = static_cast<int>(descs.size());
    std::vector<std::vector<double>> centroids;
    centroids.reserve(k);
    std::vector<char> chosen(n, 0);
    int first = static_cast<int>(bounded(rng, n));
    centroids.emplace_back(descs[first].begin(), descs[first].end());
    chosen[first] = 1;
    std::vector<double> d2(n, 0.0);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& cen : centroids) {
                best = std::min(best, sq_dist(descs[i], cen));
            }
            d2[i] = chosen[i] ? 0.0 : best;
            total += d2[i];
        }
        int pick = -1;
        if (total > 0.0) {
            double r = unit_real(rng) * total;
            for (int i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0.0 && !chosen[i]) {
                    pick = i;
                    break;
                }
            }
        }
        if (pick < 0) {
            // All remaining mass is zero (duplicate points); take the first unchosen.
            for (int i = 0; i < n; ++i) {
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.emplace_back(descs[pick].begin(), descs[pick].end());
        chosen[pick] = 1;
    }
    return centroids;
}

KMeansRun kmeans_once(std::span<const StyleDescriptor> descs, int k, RngEngine& rng) {
    const int n = static_cast<int>(descs.size());
    const std::size_t dim = descs[0].size();
    auto centroids = kmeanspp_init(descs, k, rng);
    std::vector<int> assign(n, -1);
    std::vector<int> counts(k, 0);

    const int max_iter = 300;
    const double rel_tol = 1e-6;
    int empty_fixes = 0;

    for (int it = 0; it < max_iter; ++it) {
        // assignment step; ties break toward the lower centroid index
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                const double d = sq_dist(descs[i], centroids[c]);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            assign[i] = arg;
        }
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) counts[assign[i]]++;

        // reseed any empty centroid at the point farthest from its own centroid
        bool had_empty = false;
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            had_empty = true;
            if (++empty_fixes > 10) {
                return {};  // unrecoverable in this restart
            }
            double far_d = -1.0;
            int far_i = 0;
            for (int i = 0; i < n; ++i) {
                if (counts[assign[i]] <= 1) continue;  // keep donors non-empty
                const double d =
                    sq_dist(descs[i], centroids[assign[i]]);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            counts[assign[far_i]]--;
            assign[far_i] = c;
            counts[c] = 1;
            centroids[c].assign(descs[far_i].begin(), descs[far_i].end());
        }
        if (had_empty) continue;

        // update step
        double max_shift = 0.0;
        std::vector<double> mean(dim);
        for (int c = 0; c < k; ++c) {
            std::fill(mean.begin(), mean.end(), 0.0);
            for (int i = 0; i < n; ++i) {
                if (assign[i] != c) continue;
                for (std::size_t j = 0; j < dim; ++j) mean[j] += descs[i][j];
            }
            double norm_old = 0.0, shift = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                mean[j] /= counts[c];
                const double d = mean[j] - centroids[c][j];
                shift += d * d;
                norm_old += centroids[c][j] * centroids[c][j];
            }
            centroids[c].assign(mean.begin(), mean.end());
            max_shift = std::max(max_shift, std::sqrt(shift) / (std::sqrt(norm_old) + 1e-12));
        }
        if (max_shift <= rel_tol) break;
    }

    KMeansRun run;
    run.assignment = assign;
    run.inertia = 0.0;
    for (int i = 0; i < n; ++i) {
        run.inertia += sq_dist(descs[i], centroids[assign[i]]);
    }
    run.valid = true;
    for (int c = 0; c < k; ++c) {
        if (counts[c] == 0) run.valid = false;
    }
    return run;
}

// Silhouette restricted to a subset of point indices (identity subset when exact).
double silhouette_on(const std::vector<int>& subset, const SubdomainPartition& part,
                     const DistanceMatrix& dist) {
    const int k = part.k;
    if (k < 2) throw SingleClusterError("silhouette_score: needs k >= 2");
    std::vector<std::vector<int>> members(k);
    for (int i : subset) members[part.assignment[i]].push_back(i);

    double sc = 0.0;
    std::vector<double> mean_to(k, 0.0);
    for (int i : subset) {
        const int mine = part.assignment[i];
        if (members[mine].size() < 2) continue;  // singleton contributes 0
        std::fill(mean_to.begin(), mean_to.end(), 0.0);
        for (int c = 0; c < k; ++c) {
            if (members[c].empty()) continue;
            double s = 0.0;
            for (int j : members[c]) s += dist.at(i, j);
            const double denom = c == mine ? static_cast<double>(members[c].size() - 1)
                                           : static_cast<double>(members[c].size());
            mean_to[c] = s / denom;
        }
        const double g = mean_to[mine];
        double d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == mine || members[c].empty()) continue;
            d = std::min(d, mean_to[c]);
        }
        if (!std::isfinite(d)) continue;  // no non-empty foreign cluster in the subset
        const double denom = std::max(g, d);
        if (denom > 0.0) sc += (d - g) / denom;
    }
    return sc;
}

}  // namespace

std::vector<std::vector<int>> SubdomainPartition::members() const {
    std::vector<std::vector<int>> m(k);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        m[assignment[i]].push_back(static_cast<int>(i));
    }
    return m;
}

DistanceMatrix pairwise_distances(std::span<const StyleDescriptor> descs) {
    const int n = static_cast<int>(descs.size());
    if (n < 2) throw TooFewImagesError("pairwise_distances: needs at least 2 descriptors");
    DistanceMatrix m;
    m.n = n;
    m.d.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double d = std::sqrt(sq_dist(descs[i], descs[j]));
            m.at(i, j) = d;
            m.at(j, i) = d;
        }
    }
    return m;
}

SubdomainPartition cluster(std::span<const StyleDescriptor> descs, int k, std::uint64_t seed) {
    const int n = static_cast<int>(descs.size());
    if (n < 1) throw TooFewImagesError("cluster: empty descriptor set");
    if (k < 2 || k > n) throw BadKError("cluster: k must lie in [2, n]");

    RngEngine rng = make_stream(seed, 0x6b6d65616e73ULL);  // "kmeans"
    KMeansRun best;
    const int restarts = 10;
    for (int r = 0; r < restarts; ++r) {
        KMeansRun run = kmeans_once(descs, k, rng);
        if (run.valid && run.inertia < best.inertia) best = run;
    }
    if (!best.valid) {
        throw EmptyClusterError("cluster: could not produce k non-empty clusters");
    }
    SubdomainPartition part;
    part.k = k;
    part.assignment = best.assignment;
    return part;
}

double gamma_cohesion(int i, const SubdomainPartition& part, const DistanceMatrix& dist) {
    const int mine = part.assignment[i];
    double s = 0.0;
    int count = 0;
    for (int j = 0; j < dist.n; ++j) {
        if (j == i || part.assignment[j] != mine) continue;
        s += dist.at(i, j);
        ++count;
    }
    if (count == 0) throw SingletonClusterError("gamma: image is alone in its cluster");
    return s / count;
}

double delta_separation(int i, const SubdomainPartition& part, const DistanceMatrix& dist) {
    if (part.k < 2) throw SingleClusterError("delta: needs k >= 2");
    const int mine = part.assignment[i];
    std::vector<double> sums(part.k, 0.0);
    std::vector<int> counts(part.k, 0);
    for (int j = 0; j < dist.n; ++j) {
        sums[part.assignment[j]] += dist.at(i, j);
        counts[part.assignment[j]]++;
    }
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < part.k; ++c) {
        if (c == mine || counts[c] == 0) continue;
        best = std::min(best, sums[c] / counts[c]);
    }
    return best;
}

double silhouette_score(const SubdomainPartition& part, const DistanceMatrix& dist) {
    std::vector<int> all(dist.n);
    for (int i = 0; i < dist.n; ++i) all[i] = i;
    return silhouette_on(all, part, dist);
}

SubdomainPartition auto_separate(std::span<const StyleDescriptor> descs, int k_min, int k_max,
                                 std::uint64_t seed, std::vector<ScPoint>* curve) {
    const int n = static_cast<int>(descs.size());
    if (k_min < 2 || k_min > k_max || k_max > n - 1) {
        throw BadKError("auto_separate: need 2 <= k_min <= k_max <= n-1");
    }

    // Exact silhouette at desk scale; seeded subsample beyond the limit.
    std::vector<int> subset;
    DistanceMatrix dist;
    if (n <= kSilhouetteExactLimit) {
        subset.resize(n);
        for (int i = 0; i < n; ++i) subset[i] = i;
        dist = pairwise_distances(descs);
    } else {
        std::vector<int> all(n);
        for (int i = 0; i < n; ++i) all[i] = i;
        RngEngine rng = make_stream(seed, 0x73696c73616d70ULL);  // "silsamp"
        shuffle(all, rng);
        subset.assign(all.begin(), all.begin() + kSilhouetteSampleSize);
        std::sort(subset.begin(), subset.end());
        std::vector<StyleDescriptor> sub_descs;
        sub_descs.reserve(subset.size());
        for (int i : subset) sub_descs.push_back(descs[i]);
        dist = pairwise_distances(sub_descs);
    }

    SubdomainPartition best;
    double best_sc = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        SubdomainPartition part = cluster(descs, k, splitmix64(seed) ^ static_cast<std::uint64_t>(k));
        double sc;
        if (n <= kSilhouetteExactLimit) {
            sc = silhouette_score(part, dist);
        } else {
            // Re-index assignment onto the subsample's local distance matrix.
            SubdomainPartition sub_part;
            sub_part.k = part.k;
            sub_part.assignment.reserve(subset.size());
            for (int i : subset) sub_part.assignment.push_back(part.assignment[i]);
            std::vector<int> local(subset.size());
            for (std::size_t i = 0; i < subset.size(); ++i) local[i] = static_cast<int>(i);
            sc = silhouette_on(local, sub_part, dist);
        }
        if (curve) curve->push_back({k, sc, sc / n});
        if (sc > best_sc) {  // strict: ties stay with the smaller k
            best_sc = sc;
            best = part;
        }
    }
    best.k_star = best.k;
    return best;
}

}  // namespace ocda
