#include <catch2/catch_amalgamated.hpp>
#include <visage/visage.hpp>

#include "oracles.hpp"

using namespace visage;

namespace {

std::vector<Point2> random_points(std::size_t n, Rng& rng, double lo = 0.0, double hi = 224.0) {
    std::vector<Point2> pts(n);
    for (auto& p : pts) p = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
    return pts;
}

std::size_t hull_edge_count(const FaceMesh& mesh) {
    std::map<std::array<std::size_t, 2>, int> inc;
    for (const auto& t : mesh.triangles) {
        inc[{std::min(t[0], t[1]), std::max(t[0], t[1])}]++;
        inc[{std::min(t[1], t[2]), std::max(t[1], t[2])}]++;
        inc[{std::min(t[0], t[2]), std::max(t[0], t[2])}]++;
    }
    std::size_t hull = 0;
    for (const auto& [e, c] : inc)
        if (c == 1) ++hull;
    return hull;
}

}  // namespace

TEST_CASE("triangle input gives one triangle, three edges") {
    const FaceMesh mesh = triangulate(std::vector<Point2>{{0, 0}, {1, 0}, {0, 1}});
    REQUIRE(mesh.triangles.size() == 1);
    REQUIRE(mesh.edges.size() == 3);
}

TEST_CASE("reference landmark fixture triangulates to 150 edges") {
    const LandmarkSet ref = reference_landmarks();
    REQUIRE(ref.size() == 60);
    const FaceMesh mesh = triangulate(ref);
    REQUIRE(mesh.edges.size() == 150);
}

TEST_CASE("edge count follows the Euler identity with a hull oracle") {
    Rng rng(17);
    const auto pts = random_points(20, rng);
    const FaceMesh mesh = triangulate(pts);
    const std::size_t h = oracles::hull_point_count(pts);
    REQUIRE(mesh.edges.size() == 3 * 20 - 3 - h);
}

TEST_CASE("Euler identity holds over 100 random point sets") {
    Rng rng(18);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 5 + rng.index(40);
        const auto pts = random_points(n, rng);
        const FaceMesh mesh = triangulate(pts);
        const std::size_t h = oracles::hull_point_count(pts);
        REQUIRE(mesh.edges.size() == 3 * n - 3 - h);
        REQUIRE(hull_edge_count(mesh) == h);
    }
}

TEST_CASE("collinear input is rejected") {
    REQUIRE_THROWS_AS(triangulate(std::vector<Point2>{{0, 0}, {1, 1}, {2, 2}, {3, 3}}),
                      DegenerateInput);
    REQUIRE_THROWS_AS(triangulate(std::vector<Point2>{{0, 0}, {1, 0}}), DegenerateInput);
    REQUIRE_THROWS_AS(triangulate(std::vector<Point2>{{0, 0}, {1, 0}, {1, 0}, {0, 1}}),
                      DegenerateInput);
}

TEST_CASE("empty-circumcircle property holds for every triangle") {
    Rng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const auto pts = random_points(30, rng);
        const FaceMesh mesh = triangulate(pts);
        for (const auto& t : mesh.triangles) {
            const Point2 a = pts[t[0]], b = pts[t[1]], c = pts[t[2]];
            const double d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
            const double ux = ((a.x * a.x + a.y * a.y) * (b.y - c.y) +
                               (b.x * b.x + b.y * b.y) * (c.y - a.y) +
                               (c.x * c.x + c.y * c.y) * (a.y - b.y)) / d;
            const double uy = ((a.x * a.x + a.y * a.y) * (c.x - b.x) +
                               (b.x * b.x + b.y * b.y) * (a.x - c.x) +
                               (c.x * c.x + c.y * c.y) * (b.x - a.x)) / d;
            const double r = std::hypot(a.x - ux, a.y - uy);
            for (std::size_t q = 0; q < pts.size(); ++q) {
                if (q == t[0] || q == t[1] || q == t[2]) continue;
                const double dist_q = std::hypot(pts[q].x - ux, pts[q].y - uy);
                REQUIRE(dist_q >= r - 1e-9 * std::max(1.0, r));
            }
        }
    }
}

TEST_CASE("triangulation is deterministic, edges lexicographic") {
    Rng rng(20);
    const auto pts = random_points(25, rng);
    const FaceMesh m1 = triangulate(pts);
    const FaceMesh m2 = triangulate(pts);
    REQUIRE(m1.edges == m2.edges);
    REQUIRE(m1.triangles == m2.triangles);
    REQUIRE(std::is_sorted(m1.edges.begin(), m1.edges.end()));
    // Mirror-symmetric layouts hit exactly cocircular quadruples; the result
    // must still be deterministic and consistent.
    const LandmarkSet ref = reference_landmarks();
    REQUIRE(triangulate(ref).edges == triangulate(ref).edges);
}

TEST_CASE("extract_distances on the unit right triangle") {
    LandmarkSet lms;
    lms.points = {{0, 0}, {1, 0}, {0, 1}};
    FaceMesh mesh = triangulate(lms.points);
    const DistanceVector d = extract_distances(lms, mesh);
    REQUIRE(d.size() == 3);
    // edges sorted: (0,1), (0,2), (1,2)
    REQUIRE(d[0] == Catch::Approx(1.0));
    REQUIRE(d[1] == Catch::Approx(1.0));
    REQUIRE(d[2] == Catch::Approx(std::sqrt(2.0)));
}

TEST_CASE("distances are homogeneous of degree one") {
    Rng rng(21);
    LandmarkSet lms;
    lms.points = random_points(10, rng, 10.0, 200.0);
    const FaceMesh mesh = triangulate(lms.points);
    const DistanceVector d1 = extract_distances(lms, mesh);
    LandmarkSet scaled = lms;
    scaled.canvas_w = 448;
    scaled.canvas_h = 448;
    for (Point2& p : scaled.points) {
        p.x *= 2.0;
        p.y *= 2.0;
    }
    const DistanceVector d2 = extract_distances(scaled, mesh);
    for (std::size_t i = 0; i < d1.size(); ++i)
        REQUIRE(d2[i] == Catch::Approx(2.0 * d1[i]).epsilon(1e-12));
}

TEST_CASE("distances match the brute-force pairwise oracle") {
    Rng rng(22);
    LandmarkSet lms;
    lms.points = random_points(10, rng, 5.0, 220.0);
    const FaceMesh mesh = triangulate(lms.points);
    const DistanceVector d = extract_distances(lms, mesh);
    for (std::size_t k = 0; k < mesh.edges.size(); ++k) {
        const Point2 a = lms.points[mesh.edges[k][0]], b = lms.points[mesh.edges[k][1]];
        REQUIRE(d[k] == std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)));
    }
    FaceMesh bad = mesh;
    bad.edges.push_back({0, 99});
    REQUIRE_THROWS_AS(extract_distances(lms, bad), ShapeError);
}

namespace {

std::vector<DistanceVector> subspace_samples(std::size_t n, std::size_t dim, std::size_t intrinsic,
                                             double noise, Rng& rng) {
    // Random affine subspace basis (not orthogonal; PCA must still find it).
    std::vector<std::vector<double>> basis(intrinsic, std::vector<double>(dim));
    std::vector<double> origin(dim);
    for (auto& row : basis)
        for (double& v : row) v = rng.normal(0.0, 1.0);
    for (double& v : origin) v = rng.uniform(50.0, 100.0);
    std::vector<DistanceVector> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        DistanceVector d = origin;
        for (std::size_t b = 0; b < intrinsic; ++b) {
            const double coef = rng.normal(0.0, 1.0 + 0.5 * static_cast<double>(b % 5));
            for (std::size_t j = 0; j < dim; ++j) d[j] += coef * basis[b][j];
        }
        if (noise > 0.0)
            for (double& v : d) v += rng.normal(0.0, noise);
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace

TEST_CASE("pca: exact k-dim subspace reconstructs with zero error") {
    Rng rng(30);
    const auto samples = subspace_samples(60, 40, 8, 0.0, rng);
    const PcaModel m = pca_fit(samples, 8);
    for (const auto& s : samples) {
        const DistanceVector back = pca_decode(m, pca_encode(m, s));
        for (std::size_t j = 0; j < s.size(); ++j)
            REQUIRE(back[j] == Catch::Approx(s[j]).margin(1e-8));
    }
}

TEST_CASE("pca: 30-intrinsic-dim data retains at least 99% variance at k=32") {
    Rng rng(31);
    const auto samples = subspace_samples(400, 150, 30, 1e-3, rng);
    const PcaModel m = pca_fit(samples, 32);
    REQUIRE(m.explained_ratio >= 0.99);
}

TEST_CASE("pca: reconstruction MSE equals the discarded eigenvalue sum (Jacobi oracle)") {
    Rng rng(32);
    const std::size_t dim = 20, k = 6;
    const auto samples = subspace_samples(80, dim, 12, 0.05, rng);
    const PcaModel m = pca_fit(samples, k);

    // Oracle: covariance (1/N) and a full Jacobi eigendecomposition.
    std::vector<double> mean(dim, 0.0);
    for (const auto& s : samples)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += s[j] / samples.size();
    std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
    for (const auto& s : samples)
        for (std::size_t a = 0; a < dim; ++a)
            for (std::size_t b = 0; b < dim; ++b)
                cov[a][b] += (s[a] - mean[a]) * (s[b] - mean[b]) / samples.size();
    std::vector<double> evals;
    std::vector<std::vector<double>> evecs;
    oracles::jacobi_eigen(cov, evals, evecs);

    double discarded = 0.0;
    for (std::size_t i = k; i < dim; ++i) discarded += evals[i];
    double mse = 0.0;
    for (const auto& s : samples) {
        const DistanceVector back = pca_decode(m, pca_encode(m, s));
        for (std::size_t j = 0; j < dim; ++j) mse += (s[j] - back[j]) * (s[j] - back[j]);
    }
    mse /= static_cast<double>(samples.size());
    REQUIRE(mse == Catch::Approx(discarded).margin(1e-9));

    // Library eigenvalues agree with the oracle's top-k.
    for (std::size_t i = 0; i < k; ++i)
        REQUIRE(m.eigenvalues[i] == Catch::Approx(evals[i]).margin(1e-9));
}

TEST_CASE("pca: encode of the mean is zero; subspace points are fixed points") {
    Rng rng(33);
    const auto samples = subspace_samples(50, 30, 5, 0.0, rng);
    const PcaModel m = pca_fit(samples, 5);
    const GeometryCode c = pca_encode(m, m.mean);
    for (double v : c) REQUIRE(v == Catch::Approx(0.0).margin(1e-9));
    const DistanceVector roundtrip = pca_decode(m, pca_encode(m, samples[7]));
    for (std::size_t j = 0; j < roundtrip.size(); ++j)
        REQUIRE(roundtrip[j] == Catch::Approx(samples[7][j]).margin(1e-8));
}

TEST_CASE("pca: residual energy equals discarded-component energy per sample") {
    Rng rng(34);
    const auto samples = subspace_samples(60, 25, 15, 0.0, rng);
    const PcaModel m = pca_fit(samples, 6);
    const PcaModel full = pca_fit(samples, 25);
    for (int i = 0; i < 10; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i) * 5];
        const DistanceVector back = pca_decode(m, pca_encode(m, s));
        double resid = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) resid += (s[j] - back[j]) * (s[j] - back[j]);
        const GeometryCode cf = pca_encode(full, s);
        double tail = 0.0;
        for (std::size_t j = 6; j < cf.size(); ++j) tail += cf[j] * cf[j];
        REQUIRE(resid == Catch::Approx(tail).margin(1e-8));
    }
}

TEST_CASE("pca: components orthonormal, eigenvalues sorted, signs canonical") {
    Rng rng(35);
    const auto samples = subspace_samples(100, 40, 20, 0.01, rng);
    const PcaModel m = pca_fit(samples, 12);
    REQUIRE(pca_orthonormality_error(m) < 1e-10);
    for (std::size_t i = 1; i < m.k; ++i) REQUIRE(m.eigenvalues[i] <= m.eigenvalues[i - 1]);
    for (std::size_t r = 0; r < m.k; ++r) {
        double best = 0.0;
        for (std::size_t j = 0; j < m.dim; ++j)
            if (std::fabs(m.component(r, j)) > std::fabs(best)) best = m.component(r, j);
        REQUIRE(best > 0.0);
    }
}

TEST_CASE("pca: encode/decode are exact adjoints") {
    Rng rng(36);
    const auto samples = subspace_samples(60, 30, 10, 0.01, rng);
    const PcaModel m = pca_fit(samples, 7);
    for (int trial = 0; trial < 20; ++trial) {
        DistanceVector d(m.dim);
        GeometryCode c(m.k);
        for (double& v : d) v = rng.normal(0.0, 3.0);
        for (double& v : c) v = rng.normal(0.0, 3.0);
        const GeometryCode ed = pca_encode(m, d);
        double lhs = 0.0;
        for (std::size_t i = 0; i < m.k; ++i) lhs += ed[i] * c[i];
        const DistanceVector dc = pca_decode(m, c);
        double rhs = 0.0;
        for (std::size_t j = 0; j < m.dim; ++j) rhs += (d[j] - m.mean[j]) * (dc[j] - m.mean[j]);
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-9).margin(1e-9));
    }
}

TEST_CASE("pca: too few samples rejected") {
    Rng rng(37);
    const auto samples = subspace_samples(10, 20, 3, 0.0, rng);
    REQUIRE_THROWS_AS(pca_fit(samples, 10), DegenerateInput);
}

TEST_CASE("pca model file round-trips with mesh header") {
    Rng rng(38);
    const LandmarkSet ref = reference_landmarks();
    const FaceMesh mesh = triangulate(ref);
    std::vector<DistanceVector> dists;
    for (int i = 0; i < 40; ++i) {
        const LandmarkSet lms = layout_landmarks(sample_params(attractive_param_stats(), rng),
                                                 0.5, &rng);
        dists.push_back(extract_distances(lms, mesh));
    }
    const PcaModel m = pca_fit(dists, 8);
    const auto j = pca_to_json(m, &mesh);
    REQUIRE(j["edge_count"].get<std::size_t>() == 150);
    FaceMesh mesh2;
    const PcaModel m2 = pca_from_json(j, &mesh2);
    REQUIRE(m2.mean == m.mean);
    REQUIRE(m2.components == m.components);
    REQUIRE(m2.eigenvalues == m.eigenvalues);
    REQUIRE(mesh2.edges == mesh.edges);
    REQUIRE(pca_to_json(m2, &mesh2).dump() == j.dump());
}

TEST_CASE("landmark files round-trip and validate") {
    const LandmarkSet ref = reference_landmarks();
    const std::string text = landmarks_to_json(ref).dump();
    const LandmarkSet back = parse_landmarks(text);
    REQUIRE(back.size() == 60);
    for (std::size_t i = 0; i < 60; ++i) {
        REQUIRE(back.points[i].x == ref.points[i].x);
        REQUIRE(back.points[i].y == ref.points[i].y);
    }
    REQUIRE(back.groups == ref.groups);
    REQUIRE_THROWS_AS(parse_landmarks("{\"version\":2}"), ParseError);

    LandmarkSet off = ref;
    off.points[5].x = 500.0;
    REQUIRE_THROWS_AS(off.validate(), DegenerateInput);
    LandmarkSet dup = ref;
    dup.points[4] = dup.points[9];
    REQUIRE_THROWS_AS(dup.validate(), DegenerateInput);
}
