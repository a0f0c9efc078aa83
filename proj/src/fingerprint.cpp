#include "perturbscope/fingerprint.hpp"

#include "perturbscope/detection.hpp"
#include "perturbscope/errors.hpp"
#include "perturbscope/synthesis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace ps {

std::vector<double> resample_profile(const RadialProfile& profile, int bins) {
    if (bins < 2) throw ArgumentError("resample_profile: bins must be >= 2");
    const int r_max = profile.r_max();
    std::vector<double> out(std::size_t(bins), 0.0);
    for (int i = 0; i < bins; ++i) {
        const double t = double(i) * r_max / (bins - 1);
        const int k0 = int(t);
        const int k1 = std::min(k0 + 1, r_max);
        const double frac = t - k0;
        out[std::size_t(i)] = std::lerp(profile.magnitudes[std::size_t(k0)],
                                        profile.magnitudes[std::size_t(k1)], frac);
    }
    return out;
}

namespace {

struct ResidualStats {
    double entropy = 0.0, mean = 0.0, stddev = 0.0, mean_abs_gradient = 0.0;
};

ResidualStats residual_stats(const ImageF32& plane) {
    ResidualStats s;
    s.entropy = shannon_entropy(plane);
    double sum = 0.0;
    for (float v : plane.data) sum += v;
    s.mean = sum / double(plane.data.size());
    double var = 0.0;
    for (float v : plane.data) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / double(plane.data.size()));

    double gsum = 0.0;
    std::size_t gcount = 0;
    for (int y = 0; y < plane.height; ++y)
        for (int x = 0; x < plane.width; ++x) {
            if (x + 1 < plane.width) {
                gsum += std::abs(plane.at(y, x + 1, 0) - plane.at(y, x, 0));
                ++gcount;
            }
            if (y + 1 < plane.height) {
                gsum += std::abs(plane.at(y + 1, x, 0) - plane.at(y, x, 0));
                ++gcount;
            }
        }
    s.mean_abs_gradient = gcount > 0 ? gsum / double(gcount) : 0.0;
    return s;
}

void fill_vector(Fingerprint& fp, const std::vector<double>& mag_profile,
                 const std::vector<double>& diff_profile, const ResidualStats& stats) {
    for (int i = 0; i < kProfileBins; ++i) fp.vector[std::size_t(i)] = mag_profile[std::size_t(i)];
    for (int i = 0; i < kProfileBins; ++i)
        fp.vector[std::size_t(kProfileBins + i)] = diff_profile[std::size_t(i)];
    fp.vector[2 * kProfileBins + 0] = stats.entropy;
    fp.vector[2 * kProfileBins + 1] = stats.mean;
    fp.vector[2 * kProfileBins + 2] = stats.stddev;
    fp.vector[2 * kProfileBins + 3] = stats.mean_abs_gradient;
}

} // namespace

Fingerprint build_fingerprint(const PairedSample& pair, const PairFingerprint& spectra,
                              std::string base_image_id) {
    Fingerprint fp;
    fp.base_image_id = std::move(base_image_id);
    fp.protection_label = pair.label;

    const auto mag = resample_profile(spectra.perturbed_profile, kProfileBins);
    const auto diff = resample_profile(radial_profile_of_plane(spectra.diff.delta), kProfileBins);
    const ImageF32 residual = channel_mean_plane(extract_residual(pair));
    fill_vector(fp, mag, diff, residual_stats(residual));
    return fp;
}

Fingerprint build_fingerprint_clean(const ImageF32& image, std::string base_image_id) {
    Fingerprint fp;
    fp.base_image_id = std::move(base_image_id);
    fp.protection_label = "clean";

    const Spectrum spec = fft_log_magnitude(to_grayscale(image));
    const auto mag = resample_profile(radial_profile(spec), kProfileBins);
    const std::vector<double> zeros(std::size_t(kProfileBins), 0.0);
    fill_vector(fp, mag, zeros, ResidualStats{});
    return fp;
}

StandardizedSet standardize(const std::vector<Fingerprint>& fps) {
    if (fps.size() < 2) throw ArgumentError("standardize: need at least 2 fingerprints");
    const std::size_t n = fps.size();

    StandardizedSet set;
    set.rows.assign(n, {});
    for (int d = 0; d < kFingerprintDims; ++d) {
        double mean = 0.0;
        for (const auto& fp : fps) mean += fp.vector[std::size_t(d)];
        mean /= double(n);
        double var = 0.0;
        for (const auto& fp : fps) {
            const double dv = fp.vector[std::size_t(d)] - mean;
            var += dv * dv;
        }
        var /= double(n);
        if (var <= 0.0) continue; // constant dimension carries no information
        const double sd = std::sqrt(var);
        set.kept_dims.push_back(d);
        for (std::size_t i = 0; i < n; ++i)
            set.rows[i].push_back((fps[i].vector[std::size_t(d)] - mean) / sd);
    }
    return set;
}

std::vector<std::vector<double>> distance_matrix(const std::vector<Fingerprint>& fps) {
    const StandardizedSet set = standardize(fps);
    const std::size_t n = fps.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < set.rows[i].size(); ++d) {
                const double diff = set.rows[i][d] - set.rows[j][d];
                s += diff * diff;
            }
            dist[i][j] = dist[j][i] = std::sqrt(s);
        }
    return dist;
}

Embedding2D project_2d(const std::vector<Fingerprint>& fps) {
    if (fps.size() < 3) throw ArgumentError("project_2d: need at least 3 fingerprints");
    const StandardizedSet set = standardize(fps);
    const Eigen::Index n = Eigen::Index(fps.size());
    const Eigen::Index d = Eigen::Index(set.kept_dims.size());

    Embedding2D emb;
    emb.points.assign(fps.size(), {0.0, 0.0});
    if (d == 0) {
        emb.degenerate = true;
        return emb;
    }

    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            X(i, j) = set.rows[std::size_t(i)][std::size_t(j)];

    const Eigen::MatrixXd cov = X.transpose() * X / double(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
        throw ArgumentError("project_2d: eigendecomposition failed");

    // eigenvalues ascend; take the last one or two
    const Eigen::VectorXd evals = solver.eigenvalues();
    const Eigen::MatrixXd evecs = solver.eigenvectors();

    auto axis = [&](Eigen::Index which) {
        Eigen::VectorXd v = evecs.col(which);
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v(imax) < 0) v = -v; // deterministic sign
        return v;
    };

    const Eigen::VectorXd pc1 = axis(d - 1);
    const double lambda1 = std::max(evals(d - 1), 0.0);
    Eigen::VectorXd pc2;
    bool have_pc2 = false;
    if (d >= 2 && evals(d - 2) > 1e-12 * std::max(lambda1, 1e-300)) {
        pc2 = axis(d - 2);
        have_pc2 = true;
    } else {
        emb.degenerate = true;
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        emb.points[std::size_t(i)][0] = X.row(i).dot(pc1);
        emb.points[std::size_t(i)][1] = have_pc2 ? X.row(i).dot(pc2) : 0.0;
    }
    return emb;
}

double cluster_quality(const std::vector<Fingerprint>& fps, Grouping grouping) {
    const std::size_t n = fps.size();
    if (n < 2) throw ArgumentError("cluster_quality: need at least 2 fingerprints");

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& key =
            grouping == Grouping::ByBaseImage ? fps[i].base_image_id : fps[i].protection_label;
        groups[key].push_back(i);
    }
    if (groups.size() < 2) throw ArgumentError("cluster_quality: need at least 2 groups");
    bool any_multi = false;
    for (const auto& [k, members] : groups) any_multi |= members.size() >= 2;
    if (!any_multi)
        throw ArgumentError("cluster_quality: silhouette undefined for singleton-only grouping");

    const auto dist = distance_matrix(fps);
    double total = 0.0;
    for (const auto& [key, members] : groups) {
        for (std::size_t i : members) {
            double a = 0.0;
            if (members.size() > 1) {
                for (std::size_t j : members)
                    if (j != i) a += dist[i][j];
                a /= double(members.size() - 1);
            } else {
                total += 0.0; // singleton convention
                continue;
            }
            double b = std::numeric_limits<double>::infinity();
            for (const auto& [other_key, other] : groups) {
                if (other_key == key) continue;
                double m = 0.0;
                for (std::size_t j : other) m += dist[i][j];
                b = std::min(b, m / double(other.size()));
            }
            const double denom = std::max(a, b);
            total += denom > 0.0 ? (b - a) / denom : 0.0;
        }
    }
    return total / double(n);
}

} // namespace ps
