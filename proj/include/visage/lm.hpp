#pragma once

#include <Eigen/Cholesky>

#include "visage/geometry.hpp"
#include "visage/pca.hpp"

namespace visage {

// Landmark recovery problem: find point positions whose mesh edge lengths
// match a target distance vector, starting from the original landmarks.
struct FitProblem {
    FaceMesh mesh;
    DistanceVector target_distances;
    LandmarkSet init_points;

    void validate() const {
        if (target_distances.size() != mesh.edges.size())
            throw ShapeError("fit problem: target length does not match mesh edge count");
        for (double d : target_distances)
            if (!(d > 0.0)) throw DegenerateInput("fit problem: nonpositive target distance");
        for (const auto& e : mesh.edges)
            if (e[0] >= init_points.size() || e[1] >= init_points.size())
                throw ShapeError("fit problem: mesh references missing landmark");
    }
};

struct LmOptions {
    double damping_init = 1e-3;
    double damping_up = 10.0;
    double damping_down = 10.0;
    int max_iter = 200;
    double rel_tol = 1e-10;
};

struct LmTraceRow {
    int iteration;
    double energy;
    double damping;
};

struct LmResult {
    LandmarkSet points;
    double energy = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<LmTraceRow> trace;
};

// Squared-distance residual energy: sum over edges of
// (|p_i - p_j|^2 - d_ij^2)^2. Invariant under rigid motion and reflection of
// the point set; the polynomial residual keeps the Jacobian smooth everywhere.
inline double energy(const std::vector<Point2>& pts, const FaceMesh& mesh,
                     const DistanceVector& target) {
    double e = 0.0;
    for (std::size_t k = 0; k < mesh.edges.size(); ++k) {
        const Point2& a = pts[mesh.edges[k][0]];
        const Point2& b = pts[mesh.edges[k][1]];
        const double dx = a.x - b.x, dy = a.y - b.y;
        const double r = dx * dx + dy * dy - target[k] * target[k];
        e += r * r;
    }
    return e;
}

inline double energy(const LandmarkSet& pts, const FitProblem& prob) {
    return energy(pts.points, prob.mesh, prob.target_distances);
}

// Levenberg-Marquardt with the classic Marquardt schedule: damping scales the
// diagonal of J^T J, multiplied by damping_up on a rejected step and divided
// by damping_down on an accepted one. Accepted energies are monotone
// non-increasing by construction. No gauge anchors: initialization at the
// source landmarks keeps the rigid-motion family pinned near the input pose.
inline LmResult solve_landmarks(const FitProblem& prob, const LmOptions& opts = {}) {
    prob.validate();
    const std::size_t n = prob.init_points.size();
    const std::size_t m = prob.mesh.edges.size();
    std::vector<Point2> pts = prob.init_points.points;

    LmResult res;
    res.points = prob.init_points;
    double e = energy(pts, prob.mesh, prob.target_distances);
    double lambda = opts.damping_init;
    res.trace.push_back({0, e, lambda});

    Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(2 * n));
    Eigen::VectorXd r(static_cast<Eigen::Index>(m));

    int iter = 0;
    bool converged = e <= 1e-18;
    while (!converged && iter < opts.max_iter) {
        ++iter;
        jac.setZero();
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = prob.mesh.edges[k][0], j = prob.mesh.edges[k][1];
            const double dx = pts[i].x - pts[j].x, dy = pts[i].y - pts[j].y;
            r[static_cast<Eigen::Index>(k)] =
                dx * dx + dy * dy -
                prob.target_distances[k] * prob.target_distances[k];
            const Eigen::Index kk = static_cast<Eigen::Index>(k);
            jac(kk, static_cast<Eigen::Index>(2 * i)) = 2.0 * dx;
            jac(kk, static_cast<Eigen::Index>(2 * i + 1)) = 2.0 * dy;
            jac(kk, static_cast<Eigen::Index>(2 * j)) = -2.0 * dx;
            jac(kk, static_cast<Eigen::Index>(2 * j + 1)) = -2.0 * dy;
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < 1e-12) {
            converged = true;
            break;
        }

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index d = 0; d < a.rows(); ++d)
                a(d, d) += lambda * std::max(jtj(d, d), 1e-12);
            const Eigen::VectorXd delta = a.ldlt().solve(-g);
            std::vector<Point2> cand = pts;
            for (std::size_t p = 0; p < n; ++p) {
                cand[p].x += delta[static_cast<Eigen::Index>(2 * p)];
                cand[p].y += delta[static_cast<Eigen::Index>(2 * p + 1)];
            }
            const double ec = energy(cand, prob.mesh, prob.target_distances);
            if (std::isfinite(ec) && ec < e) {
                accepted = true;
                const double rel = (e - ec) / std::max(e, 1e-300);
                pts = std::move(cand);
                e = ec;
                lambda = std::max(lambda / opts.damping_down, 1e-15);
                res.trace.push_back({iter, e, lambda});
                if (rel < opts.rel_tol || e <= 1e-18) converged = true;
            } else {
                lambda *= opts.damping_up;
                if (lambda > 1e15) break;  // numerical floor; no step helps
            }
        }
        if (!accepted) {
            // Cannot decrease the energy any further at this precision.
            converged = true;
            break;
        }
    }

    res.points.points = pts;
    res.energy = e;
    res.iterations = iter;
    res.converged = converged;
    return res;
}

// Decode an enhanced geometry code into distances and fit landmarks to them,
// initialized at the original points. Decoded entries are floored at a small
// positive value; codes far out of distribution can decode to nonpositive
// lengths, which the energy cannot represent.
inline LmResult recover_enhanced_landmarks(const PcaModel& pca, const FaceMesh& mesh,
                                           const GeometryCode& code, const LandmarkSet& p_x,
                                           const LmOptions& opts = {}) {
    FitProblem prob;
    prob.mesh = mesh;
    prob.target_distances = pca_decode(pca, code);
    for (double& d : prob.target_distances) d = std::max(d, 1e-6);
    prob.init_points = p_x;
    return solve_landmarks(prob, opts);
}

inline std::string lm_trace_csv(const LmResult& res) {
    std::string csv = "iteration,energy,damping\n";
    for (const auto& row : res.trace)
        csv += std::to_string(row.iteration) + "," + std::to_string(row.energy) + "," +
               std::to_string(row.damping) + "\n";
    return csv;
}

}  // namespace visage
