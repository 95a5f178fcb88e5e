#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "visage/common.hpp"

namespace visage {

struct Point2 {
    double x = 0.0, y = 0.0;
};

inline double dist(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// Named 2-D landmarks on a normalized canvas (224x224 for the reference
// layout; 60 points grouped into eyebrows, eyes, nose bridge, nose tip,
// lips and chin).
struct LandmarkSet {
    std::vector<Point2> points;
    std::map<std::string, std::vector<std::size_t>> groups;
    double canvas_w = 224.0, canvas_h = 224.0;
    std::string image;  // optional path of the image these landmarks annotate

    std::size_t size() const { return points.size(); }

    void validate() const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const Point2& p = points[i];
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                throw DegenerateInput("landmark " + std::to_string(i) + " is not finite");
            if (p.x < 0.0 || p.x > canvas_w || p.y < 0.0 || p.y > canvas_h)
                throw DegenerateInput("landmark " + std::to_string(i) + " outside canvas");
        }
        for (std::size_t i = 0; i < points.size(); ++i)
            for (std::size_t j = i + 1; j < points.size(); ++j)
                if (points[i].x == points[j].x && points[i].y == points[j].y)
                    throw DegenerateInput("coincident landmarks " + std::to_string(i) + " and " +
                                          std::to_string(j));
    }
};

// Triangulated landmark connectivity. Edge order is canonical: pairs sorted
// within, list sorted lexicographically, so distance vectors extracted by
// different runs line up entry for entry.
struct FaceMesh {
    std::vector<std::array<std::size_t, 3>> triangles;
    std::vector<std::array<std::size_t, 2>> edges;

    std::size_t edge_count() const { return edges.size(); }
};

// Per-edge Euclidean lengths in mesh edge order, pixel units.
using DistanceVector = std::vector<double>;

inline DistanceVector extract_distances(const LandmarkSet& lms, const FaceMesh& mesh) {
    DistanceVector d(mesh.edges.size());
    for (std::size_t k = 0; k < mesh.edges.size(); ++k) {
        const auto& e = mesh.edges[k];
        if (e[0] >= lms.size() || e[1] >= lms.size())
            throw ShapeError("mesh edge " + std::to_string(k) + " references landmark out of range");
        d[k] = dist(lms.points[e[0]], lms.points[e[1]]);
    }
    return d;
}

// ---- Landmark file format ----
// {version:1, image:<path>, canvas:[w,h], points:[[x,y],...], groups:{name:[i,...]}}

inline nlohmann::json landmarks_to_json(const LandmarkSet& lms) {
    nlohmann::json j;
    j["version"] = 1;
    j["image"] = lms.image;
    j["canvas"] = {lms.canvas_w, lms.canvas_h};
    auto pts = nlohmann::json::array();
    for (const Point2& p : lms.points) pts.push_back({p.x, p.y});
    j["points"] = pts;
    j["groups"] = lms.groups;
    return j;
}

inline LandmarkSet landmarks_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw ParseError("landmark file: missing or unsupported version");
    LandmarkSet lms;
    lms.image = j.value("image", std::string{});
    if (j.contains("canvas")) {
        lms.canvas_w = j["canvas"].at(0).get<double>();
        lms.canvas_h = j["canvas"].at(1).get<double>();
    }
    for (const auto& pj : j.at("points"))
        lms.points.push_back({pj.at(0).get<double>(), pj.at(1).get<double>()});
    if (j.contains("groups"))
        lms.groups = j["groups"].get<std::map<std::string, std::vector<std::size_t>>>();
    return lms;
}

inline LandmarkSet parse_landmarks(const std::string& text) {
    try {
        return landmarks_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("landmark file: ") + e.what());
    }
}

inline nlohmann::json mesh_to_json(const FaceMesh& mesh) {
    nlohmann::json j;
    auto tris = nlohmann::json::array();
    for (const auto& t : mesh.triangles) tris.push_back({t[0], t[1], t[2]});
    auto edges = nlohmann::json::array();
    for (const auto& e : mesh.edges) edges.push_back({e[0], e[1]});
    j["triangles"] = tris;
    j["edges"] = edges;
    return j;
}

inline FaceMesh mesh_from_json(const nlohmann::json& j) {
    FaceMesh mesh;
    for (const auto& tj : j.at("triangles"))
        mesh.triangles.push_back({tj.at(0).get<std::size_t>(), tj.at(1).get<std::size_t>(),
                                  tj.at(2).get<std::size_t>()});
    for (const auto& ej : j.at("edges"))
        mesh.edges.push_back({ej.at(0).get<std::size_t>(), ej.at(1).get<std::size_t>()});
    return mesh;
}

}  // namespace visage
