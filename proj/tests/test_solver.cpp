#include <catch2/catch_amalgamated.hpp>
#include <visage/visage.hpp>

#include "oracles.hpp"

using namespace visage;

namespace {

FitProblem fixture_problem(Rng& rng, double noise_sigma) {
    FitProblem prob;
    prob.init_points = reference_landmarks();
    prob.mesh = triangulate(prob.init_points);
    prob.target_distances = extract_distances(prob.init_points, prob.mesh);
    if (noise_sigma > 0.0)
        for (Point2& p : prob.init_points.points) {
            p.x += rng.normal(0.0, noise_sigma);
            p.y += rng.normal(0.0, noise_sigma);
        }
    return prob;
}

}  // namespace

TEST_CASE("energy is zero when distances already match") {
    Rng rng(1);
    const FitProblem prob = fixture_problem(rng, 0.0);
    REQUIRE(energy(prob.init_points, prob) == 0.0);
}

TEST_CASE("single-edge energy arithmetic") {
    FaceMesh mesh;
    mesh.edges.push_back({0, 1});
    const std::vector<Point2> pts = {{0.0, 0.0}, {2.0, 0.0}};
    REQUIRE(energy(pts, mesh, {1.0}) == 9.0);
}

TEST_CASE("energy matches the direct summation oracle") {
    Rng rng(2);
    LandmarkSet lms;
    for (int i = 0; i < 12; ++i) lms.points.push_back({rng.uniform(0, 224), rng.uniform(0, 224)});
    const FaceMesh mesh = triangulate(lms.points);
    DistanceVector target(mesh.edges.size());
    for (double& d : target) d = rng.uniform(1.0, 50.0);
    double want = 0.0;
    for (std::size_t k = 0; k < mesh.edges.size(); ++k) {
        const Point2 a = lms.points[mesh.edges[k][0]], b = lms.points[mesh.edges[k][1]];
        const double sq = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
        want += (sq - target[k] * target[k]) * (sq - target[k] * target[k]);
    }
    REQUIRE(energy(lms.points, mesh, target) == want);
}

TEST_CASE("energy is invariant under rigid motion and reflection") {
    Rng rng(3);
    const FitProblem prob = fixture_problem(rng, 1.0);
    const double e0 = energy(prob.init_points, prob);
    const double theta = rng.uniform(0, 6.28), tx = rng.uniform(-30, 30), ty = rng.uniform(-30, 30);
    LandmarkSet moved = prob.init_points;
    for (Point2& p : moved.points) {
        const double x = p.x * std::cos(theta) - p.y * std::sin(theta) + tx;
        const double y = p.x * std::sin(theta) + p.y * std::cos(theta) + ty;
        p = {x, y};
    }
    REQUIRE(energy(moved, prob) == Catch::Approx(e0).epsilon(1e-9));
    LandmarkSet mirrored = prob.init_points;
    for (Point2& p : mirrored.points) p.x = -p.x;
    REQUIRE(energy(mirrored, prob) == Catch::Approx(e0).epsilon(1e-9));
}

TEST_CASE("energy gradient matches finite differences (analytic Jacobian check)") {
    Rng rng(4);
    FitProblem prob = fixture_problem(rng, 1.5);
    // grad E = 2 J^T r with J the analytic residual Jacobian.
    const std::size_t n = prob.init_points.size();
    std::vector<double> grad(2 * n, 0.0);
    for (std::size_t k = 0; k < prob.mesh.edges.size(); ++k) {
        const std::size_t i = prob.mesh.edges[k][0], j = prob.mesh.edges[k][1];
        const Point2 a = prob.init_points.points[i], b = prob.init_points.points[j];
        const double r = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) -
                         prob.target_distances[k] * prob.target_distances[k];
        grad[2 * i] += 2.0 * r * 2.0 * (a.x - b.x);
        grad[2 * i + 1] += 2.0 * r * 2.0 * (a.y - b.y);
        grad[2 * j] += 2.0 * r * -2.0 * (a.x - b.x);
        grad[2 * j + 1] += 2.0 * r * -2.0 * (a.y - b.y);
    }
    auto f = [&]() { return energy(prob.init_points, prob); };
    for (std::size_t p = 0; p < n; p += 7) {
        const double fdx = oracles::central_diff(f, prob.init_points.points[p].x, 1e-6);
        const double fdy = oracles::central_diff(f, prob.init_points.points[p].y, 1e-6);
        REQUIRE(std::fabs(fdx - grad[2 * p]) / std::max(1.0, std::fabs(fdx)) < 1e-6);
        REQUIRE(std::fabs(fdy - grad[2 * p + 1]) / std::max(1.0, std::fabs(fdy)) < 1e-6);
    }
}

TEST_CASE("already-optimal problem returns the init with zero iterations") {
    Rng rng(5);
    const FitProblem prob = fixture_problem(rng, 0.0);
    const LmResult res = solve_landmarks(prob);
    REQUIRE(res.iterations == 0);
    REQUIRE(res.converged);
    REQUIRE(res.energy == 0.0);
    for (std::size_t i = 0; i < prob.init_points.size(); ++i) {
        REQUIRE(res.points.points[i].x == prob.init_points.points[i].x);
        REQUIRE(res.points.points[i].y == prob.init_points.points[i].y);
    }
}

TEST_CASE("perturbed inits recover the landmarks after similarity alignment") {
    Rng rng(6);
    const LandmarkSet truth = reference_landmarks();
    const FaceMesh mesh = triangulate(truth);
    const DistanceVector target = extract_distances(truth, mesh);
    int good = 0;
    for (int trial = 0; trial < 50; ++trial) {
        FitProblem prob;
        prob.mesh = mesh;
        prob.target_distances = target;
        prob.init_points = truth;
        for (Point2& p : prob.init_points.points) {
            p.x += rng.normal(0.0, 2.0);
            p.y += rng.normal(0.0, 2.0);
        }
        const LmResult res = solve_landmarks(prob);
        const double rmse = oracles::procrustes_rmse(res.points.points, truth.points);
        if (rmse < 1e-3) ++good;
    }
    REQUIRE(good == 50);
}

TEST_CASE("scaled targets scale the recovered mean edge length") {
    Rng rng(7);
    const LandmarkSet truth = reference_landmarks();
    const FaceMesh mesh = triangulate(truth);
    DistanceVector target = extract_distances(truth, mesh);
    double base_mean = 0.0;
    for (double d : target) base_mean += d / target.size();
    for (double& d : target) d *= 1.1;

    FitProblem prob{mesh, target, truth};
    const LmResult res = solve_landmarks(prob);
    const DistanceVector got = extract_distances(res.points, mesh);
    double got_mean = 0.0;
    for (double d : got) got_mean += d / got.size();
    REQUIRE(got_mean == Catch::Approx(1.1 * base_mean).epsilon(1e-6));
}

TEST_CASE("accepted-step energies are monotone non-increasing") {
    Rng rng(8);
    const FitProblem prob = fixture_problem(rng, 3.0);
    const LmResult res = solve_landmarks(prob);
    REQUIRE(res.trace.size() >= 2);
    for (std::size_t i = 1; i < res.trace.size(); ++i)
        REQUIRE(res.trace[i].energy <= res.trace[i - 1].energy);
    REQUIRE(res.converged);
}

TEST_CASE("iteration cap yields the non-converged flag with best iterate kept") {
    Rng rng(9);
    const FitProblem prob = fixture_problem(rng, 4.0);
    LmOptions opts;
    opts.max_iter = 2;
    const LmResult res = solve_landmarks(prob, opts);
    REQUIRE_FALSE(res.converged);
    REQUIRE(res.iterations == 2);
    REQUIRE(res.energy < energy(prob.init_points, prob));
}

TEST_CASE("problem validation rejects bad targets and indices") {
    Rng rng(10);
    FitProblem prob = fixture_problem(rng, 0.0);
    prob.target_distances[3] = -1.0;
    REQUIRE_THROWS_AS(solve_landmarks(prob), DegenerateInput);
    FitProblem prob2 = fixture_problem(rng, 0.0);
    prob2.target_distances.pop_back();
    REQUIRE_THROWS_AS(solve_landmarks(prob2), ShapeError);
}

TEST_CASE("recover: projected code returns near the source landmarks") {
    Rng rng(11);
    const LandmarkSet p_x = reference_landmarks();
    const FaceMesh mesh = triangulate(p_x);
    std::vector<DistanceVector> dists;
    for (int i = 0; i < 80; ++i) {
        const bool attr = i % 2 == 0;
        const LandmarkSet lms = layout_landmarks(
            sample_params(attr ? attractive_param_stats() : unattractive_param_stats(), rng), 0.5,
            &rng);
        dists.push_back(extract_distances(lms, mesh));
    }
    const PcaModel pca = pca_fit(dists, 32);
    const GeometryCode code = pca_encode(pca, extract_distances(p_x, mesh));
    const LmResult res = recover_enhanced_landmarks(pca, mesh, code, p_x);
    // The fit residual is bounded by the PCA truncation error of the target.
    const DistanceVector projected = pca_decode(pca, code);
    const double fit = energy(res.points.points, mesh, projected);
    REQUIRE(fit < 1e-6);
    const double rmse = oracles::procrustes_rmse(res.points.points, p_x.points);
    REQUIRE(rmse < 2.0);  // projection residual only
}

TEST_CASE("recover: fixture round-trip reaches tiny energy") {
    Rng rng(12);
    const LandmarkSet p_x = reference_landmarks();
    const FaceMesh mesh = triangulate(p_x);
    std::vector<DistanceVector> dists;
    for (int i = 0; i < 60; ++i)
        dists.push_back(extract_distances(
            layout_landmarks(sample_params(attractive_param_stats(), rng), 0.5, &rng), mesh));
    const PcaModel pca = pca_fit(dists, 32);
    const GeometryCode code = pca_encode(pca, extract_distances(p_x, mesh));
    const LmResult res = recover_enhanced_landmarks(pca, mesh, code, p_x);
    REQUIRE(energy(res.points.points, mesh, pca_decode(pca, code)) < 1e-6);
}

TEST_CASE("recover: full-rank PCA reproduces the landmarks exactly") {
    Rng rng(13);
    const LandmarkSet p_x = reference_landmarks();
    const FaceMesh mesh = triangulate(p_x);
    std::vector<DistanceVector> dists;
    for (int i = 0; i < 160; ++i)
        dists.push_back(extract_distances(
            layout_landmarks(sample_params(i % 2 ? attractive_param_stats()
                                                 : unattractive_param_stats(), rng),
                             0.5, &rng),
            mesh));
    const PcaModel pca = pca_fit(dists, 150);
    const GeometryCode code = pca_encode(pca, extract_distances(p_x, mesh));
    const LmResult res = recover_enhanced_landmarks(pca, mesh, code, p_x);
    const double rmse = oracles::procrustes_rmse(res.points.points, p_x.points);
    REQUIRE(rmse < 1e-9);
}

TEST_CASE("solver trace serializes to CSV") {
    Rng rng(14);
    const FitProblem prob = fixture_problem(rng, 2.0);
    const LmResult res = solve_landmarks(prob);
    const std::string csv = lm_trace_csv(res);
    REQUIRE(csv.rfind("iteration,energy,damping\n", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(res.trace.size()) + 1);
}
