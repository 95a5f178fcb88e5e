#pragma once

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "visage/geometry.hpp"
#include "visage/tensor.hpp"

namespace visage {

// 32-dim PCA coordinates of a distance vector; the space the geometry GAN
// and the KNN baseline operate in.
using GeometryCode = std::vector<double>;

struct PcaModel {
    std::vector<double> mean;          // [dim]
    std::vector<double> components;    // row-major [k, dim], orthonormal rows
    std::vector<double> eigenvalues;   // [k], nonincreasing, >= 0
    double explained_ratio = 0.0;
    std::size_t dim = 0;
    std::size_t k = 0;

    double component(std::size_t row, std::size_t col) const {
        return components[row * dim + col];
    }
};

// Top-k eigendecomposition of the sample covariance (normalized by N so the
// mean reconstruction MSE equals the discarded-eigenvalue sum exactly).
// Component signs follow the convention that each row's largest-magnitude
// entry is positive, which keeps serialized models stable across runs.
inline PcaModel pca_fit(const std::vector<DistanceVector>& samples, std::size_t k = 32) {
    if (samples.empty()) throw DegenerateInput("pca_fit: no samples");
    const std::size_t dim = samples[0].size();
    if (samples.size() < k + 1)
        throw DegenerateInput("pca_fit: need at least k+1 = " + std::to_string(k + 1) +
                              " samples, got " + std::to_string(samples.size()));
    if (k == 0 || k > dim) throw DegenerateInput("pca_fit: k must be in [1, dim]");
    for (const auto& s : samples)
        if (s.size() != dim) throw ShapeError("pca_fit: inconsistent sample dimension");

    const std::size_t n = samples.size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (const auto& s : samples)
        mean += Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(dim));
    mean /= static_cast<double>(n);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                                static_cast<Eigen::Index>(dim));
    for (const auto& s : samples) {
        Eigen::VectorXd c =
            Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(dim)) - mean;
        cov.noalias() += c * c.transpose();
    }
    cov /= static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericError("pca_fit: eigendecomposition failed");
    // Eigen returns ascending order; we want the top k descending.
    const Eigen::VectorXd& evals = es.eigenvalues();
    const Eigen::MatrixXd& evecs = es.eigenvectors();
    double total = 0.0;
    for (Eigen::Index i = 0; i < evals.size(); ++i) total += std::max(evals[i], 0.0);

    PcaModel model;
    model.dim = dim;
    model.k = k;
    model.mean.assign(mean.data(), mean.data() + dim);
    model.components.resize(k * dim);
    model.eigenvalues.resize(k);
    double retained = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        const Eigen::Index src = static_cast<Eigen::Index>(dim - 1 - r);
        const double lam = std::max(evals[src], 0.0);
        model.eigenvalues[r] = lam;
        retained += lam;
        Eigen::VectorXd v = evecs.col(src);
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0.0) v = -v;
        for (std::size_t c = 0; c < dim; ++c) model.components[r * dim + c] = v[static_cast<Eigen::Index>(c)];
    }
    model.explained_ratio = total > 0.0 ? retained / total : 1.0;
    return model;
}

inline GeometryCode pca_encode(const PcaModel& m, const DistanceVector& d) {
    if (d.size() != m.dim) throw ShapeError("pca_encode: dimension mismatch");
    GeometryCode c(m.k, 0.0);
    for (std::size_t r = 0; r < m.k; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.dim; ++j)
            acc += m.components[r * m.dim + j] * (d[j] - m.mean[j]);
        c[r] = acc;
    }
    return c;
}

inline DistanceVector pca_decode(const PcaModel& m, const GeometryCode& c) {
    if (c.size() != m.k) throw ShapeError("pca_decode: code dimension mismatch");
    DistanceVector d = m.mean;
    for (std::size_t r = 0; r < m.k; ++r)
        for (std::size_t j = 0; j < m.dim; ++j) d[j] += m.components[r * m.dim + j] * c[r];
    return d;
}

inline double pca_orthonormality_error(const PcaModel& m) {
    double worst = 0.0;
    for (std::size_t a = 0; a < m.k; ++a)
        for (std::size_t b = a; b < m.k; ++b) {
            double dot = 0.0;
            for (std::size_t j = 0; j < m.dim; ++j)
                dot += m.components[a * m.dim + j] * m.components[b * m.dim + j];
            worst = std::max(worst, std::fabs(dot - (a == b ? 1.0 : 0.0)));
        }
    return worst;
}

// ---- Model file ----
// The file carries the PCA payload plus a geometry header: the shared face
// mesh the distances were measured on and its edge count. Edge counts other
// than 150 are recorded, not rejected; 150 is a property of the reference
// landmark layout, not of the format.

inline nlohmann::json pca_to_json(const PcaModel& m, const FaceMesh* mesh = nullptr,
                                  double canvas_w = 224.0, double canvas_h = 224.0) {
    nlohmann::json j;
    j["version"] = 1;
    j["dim"] = m.dim;
    j["k"] = m.k;
    j["mean"] = m.mean;
    auto comps = nlohmann::json::array();
    for (std::size_t r = 0; r < m.k; ++r)
        comps.push_back(std::vector<double>(m.components.begin() + static_cast<long>(r * m.dim),
                                            m.components.begin() + static_cast<long>((r + 1) * m.dim)));
    j["components"] = comps;
    j["eigenvalues"] = m.eigenvalues;
    j["explained_ratio"] = m.explained_ratio;
    j["canvas"] = {canvas_w, canvas_h};
    if (mesh) {
        j["edge_count"] = mesh->edges.size();
        j["mesh"] = mesh_to_json(*mesh);
    }
    return j;
}

inline PcaModel pca_from_json(const nlohmann::json& j, FaceMesh* mesh = nullptr) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw ParseError("pca model file: missing or unsupported version");
    PcaModel m;
    m.dim = j.at("dim").get<std::size_t>();
    m.k = j.at("k").get<std::size_t>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    m.explained_ratio = j.at("explained_ratio").get<double>();
    const auto& comps = j.at("components");
    if (comps.size() != m.k) throw ParseError("pca model file: component row count mismatch");
    m.components.reserve(m.k * m.dim);
    for (const auto& row : comps) {
        if (row.size() != m.dim) throw ParseError("pca model file: component row length mismatch");
        for (const auto& v : row) m.components.push_back(v.get<double>());
    }
    if (m.mean.size() != m.dim || m.eigenvalues.size() != m.k)
        throw ParseError("pca model file: field lengths inconsistent with dim/k");
    if (mesh && j.contains("mesh")) *mesh = mesh_from_json(j["mesh"]);
    return m;
}

}  // namespace visage
