#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <deque>
#include <set>
#include <utility>

#include "visage/geometry.hpp"

namespace visage {
namespace pred {

// Floating-point filters after Shewchuk; exact rational arithmetic as the
// fallback. Inputs are doubles, so cpp_rational evaluates the determinants
// with no rounding at all.
using Rat = boost::multiprecision::cpp_rational;

constexpr double kEps = 1.1102230246251565e-16;  // 2^-53
constexpr double kCcwErrBound = (3.0 + 16.0 * kEps) * kEps;
constexpr double kIccErrBound = (10.0 + 96.0 * kEps) * kEps;

inline int sign_of(const Rat& r) { return r.sign(); }

inline int orient2d_exact(const Point2& a, const Point2& b, const Point2& c) {
    const Rat det = (Rat(b.x) - Rat(a.x)) * (Rat(c.y) - Rat(a.y)) -
                    (Rat(b.y) - Rat(a.y)) * (Rat(c.x) - Rat(a.x));
    return sign_of(det);
}

// Sign of the CCW test: +1 if (a,b,c) turn left, -1 right, 0 collinear.
inline int orient2d(const Point2& a, const Point2& b, const Point2& c) {
    const double detleft = (a.x - c.x) * (b.y - c.y);
    const double detright = (a.y - c.y) * (b.x - c.x);
    const double det = detleft - detright;
    double detsum = 0.0;
    if (detleft > 0.0) {
        if (detright <= 0.0) return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
        detsum = detleft + detright;
    } else if (detleft < 0.0) {
        if (detright >= 0.0) return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
        detsum = -detleft - detright;
    } else {
        return det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
    }
    if (det >= kCcwErrBound * detsum || -det >= kCcwErrBound * detsum)
        return det > 0.0 ? 1 : -1;
    return orient2d_exact(a, b, c);
}

inline int incircle_exact(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
    const Rat adx = Rat(a.x) - Rat(d.x), ady = Rat(a.y) - Rat(d.y);
    const Rat bdx = Rat(b.x) - Rat(d.x), bdy = Rat(b.y) - Rat(d.y);
    const Rat cdx = Rat(c.x) - Rat(d.x), cdy = Rat(c.y) - Rat(d.y);
    const Rat det = (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy) +
                    (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy) +
                    (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady);
    return sign_of(det);
}

// Sign of the in-circumcircle test: +1 if d lies strictly inside the circle
// through a, b, c (taken CCW), -1 outside, 0 cocircular.
inline int incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
    const double adx = a.x - d.x, ady = a.y - d.y;
    const double bdx = b.x - d.x, bdy = b.y - d.y;
    const double cdx = c.x - d.x, cdy = c.y - d.y;

    const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
    const double alift = adx * adx + ady * ady;
    const double cdxady = cdx * ady, adxcdy = adx * cdy;
    const double blift = bdx * bdx + bdy * bdy;
    const double adxbdy = adx * bdy, bdxady = bdx * ady;
    const double clift = cdx * cdx + cdy * cdy;

    const double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) +
                       clift * (adxbdy - bdxady);
    const double permanent = (std::fabs(bdxcdy) + std::fabs(cdxbdy)) * alift +
                             (std::fabs(cdxady) + std::fabs(adxcdy)) * blift +
                             (std::fabs(adxbdy) + std::fabs(bdxady)) * clift;
    const double errbound = kIccErrBound * permanent;
    if (det > errbound || -det > errbound) return det > 0.0 ? 1 : -1;
    return incircle_exact(a, b, c, d);
}

// In-circle with symbolic perturbation of the paraboloid lift. Exactly
// cocircular quadruples (common on mirror-symmetric faces) are resolved by
// giving lower-indexed points an infinitesimally dominant weight, so ties
// break deterministically toward the lowest index. Returns 0 only when all
// four points are collinear.
inline int incircle_perturbed(const Point2& a, std::size_t ia, const Point2& b, std::size_t ib,
                              const Point2& c, std::size_t ic, const Point2& d, std::size_t id) {
    const int s = incircle(a, b, c, d);
    if (s != 0) return s;
    // det(w) = det0 - sum_p w_p * A_p, with A_p the z-column cofactors.
    struct Term {
        std::size_t idx;
        const Point2 *p, *q, *r;
        int sgn;
    };
    const Term terms[4] = {{ia, &b, &c, &d, +1},
                           {ib, &a, &c, &d, -1},
                           {ic, &a, &b, &d, +1},
                           {id, &a, &b, &c, -1}};
    // Weights shrink with index rank, so iterate the four points by ascending
    // global index; the first nonzero cofactor decides.
    std::array<int, 4> order = {0, 1, 2, 3};
    std::sort(order.begin(), order.end(),
              [&](int l, int r) { return terms[l].idx < terms[r].idx; });
    for (int k : order) {
        const Term& t = terms[k];
        const int o = orient2d(*t.p, *t.q, *t.r);
        if (o != 0) return -t.sgn * o;
    }
    return 0;
}

}  // namespace pred

// Delaunay triangulation by advancing-front gift wrapping: for each frontier
// edge, the mate is the point whose circumcircle is empty of all other points
// on that side. Exact predicates make the selection robust; the perturbed
// in-circle test makes it deterministic on cocircular inputs. Edge ordering
// of the result is lexicographic by sorted index pair.
inline FaceMesh triangulate(const std::vector<Point2>& pts) {
    const std::size_t n = pts.size();
    if (n < 3) throw DegenerateInput("triangulate: need at least 3 points");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(pts[i].x) || !std::isfinite(pts[i].y))
            throw DegenerateInput("triangulate: non-finite point " + std::to_string(i));
    {
        std::vector<std::pair<double, double>> sorted;
        sorted.reserve(n);
        for (const Point2& p : pts) sorted.emplace_back(p.x, p.y);
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw DegenerateInput("triangulate: coincident points");
    }

    // Seed edge: lexicographic minimum, then its clockwise-most neighbor so
    // every point lies left of (p0, p1).
    std::size_t p0 = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (pts[i].x < pts[p0].x || (pts[i].x == pts[p0].x && pts[i].y < pts[p0].y)) p0 = i;
    std::size_t p1 = n;  // invalid
    for (std::size_t q = 0; q < n; ++q) {
        if (q == p0) continue;
        if (p1 == n) {
            p1 = q;
            continue;
        }
        const int o = pred::orient2d(pts[p0], pts[p1], pts[q]);
        if (o < 0)
            p1 = q;
        else if (o == 0 && dist(pts[p0], pts[q]) < dist(pts[p0], pts[p1]))
            p1 = q;
    }

    using DirEdge = std::pair<std::size_t, std::size_t>;
    std::set<DirEdge> done;
    std::deque<DirEdge> queue;
    queue.push_back({p0, p1});
    done.insert({p1, p0});  // nothing lies right of the seed edge

    FaceMesh mesh;
    while (!queue.empty()) {
        const DirEdge e = queue.front();
        queue.pop_front();
        if (done.count(e)) continue;
        const std::size_t u = e.first, v = e.second;
        std::size_t mate = n;
        for (std::size_t q = 0; q < n; ++q) {
            if (q == u || q == v) continue;
            if (pred::orient2d(pts[u], pts[v], pts[q]) <= 0) continue;
            if (mate == n ||
                pred::incircle_perturbed(pts[u], u, pts[v], v, pts[mate], mate, pts[q], q) > 0)
                mate = q;
        }
        done.insert(e);
        if (mate == n) continue;  // hull edge seen from outside
        mesh.triangles.push_back({u, v, mate});
        done.insert({v, mate});
        done.insert({mate, u});
        for (DirEdge next : {DirEdge{mate, v}, DirEdge{u, mate}})
            if (!done.count(next)) queue.push_back(next);
    }
    if (mesh.triangles.empty())
        throw DegenerateInput("triangulate: points are collinear");

    std::set<std::array<std::size_t, 2>> edge_set;
    for (auto& t : mesh.triangles) {
        // Rotate so the smallest index leads; orientation (CCW) is preserved.
        while (t[0] > t[1] || t[0] > t[2]) t = {t[1], t[2], t[0]};
        edge_set.insert({std::min(t[0], t[1]), std::max(t[0], t[1])});
        edge_set.insert({std::min(t[1], t[2]), std::max(t[1], t[2])});
        edge_set.insert({std::min(t[0], t[2]), std::max(t[0], t[2])});
    }
    std::sort(mesh.triangles.begin(), mesh.triangles.end());
    mesh.edges.assign(edge_set.begin(), edge_set.end());
    return mesh;
}

inline FaceMesh triangulate(const LandmarkSet& lms) {
    lms.validate();
    return triangulate(lms.points);
}

}  // namespace visage
