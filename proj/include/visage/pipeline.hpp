#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>

#include "visage/geogan.hpp"
#include "visage/knn.hpp"
#include "visage/lm.hpp"
#include "visage/losses.hpp"
#include "visage/warp.hpp"

namespace visage {

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ArtifactError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << text;
}

inline nlohmann::json parse_json_file(const std::string& path) {
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

enum class EnhanceMethod { Gan, Knn };

inline EnhanceMethod enhance_method_from_string(const std::string& s) {
    if (s == "gan") return EnhanceMethod::Gan;
    if (s == "knn") return EnhanceMethod::Knn;
    throw ParseError("unknown enhancement method: " + s);
}

// Run configuration: artifact paths plus loss weights and solver options.
// All randomness in a run flows from the single seed.
struct PipelineConfig {
    std::string pca_path;
    std::string generator_path;   // geometry GAN generator network
    std::string extractor_path;   // optional, for gec evaluation
    std::string bank_path;        // optional, for the KNN method
    LossWeights weights;
    LmOptions solver;
    std::uint64_t seed = 0;
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    cfg.pca_path = j.value("pca", std::string{});
    cfg.generator_path = j.value("generator", std::string{});
    cfg.extractor_path = j.value("extractor", std::string{});
    cfg.bank_path = j.value("bank", std::string{});
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        cfg.weights.adv = w.value("adv", cfg.weights.adv);
        cfg.weights.id = w.value("id", cfg.weights.id);
        cfg.weights.px = w.value("px", cfg.weights.px);
        cfg.weights.tv = w.value("tv", cfg.weights.tv);
        cfg.weights.gec = w.value("gec", cfg.weights.gec);
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        cfg.solver.damping_init = s.value("damping_init", cfg.solver.damping_init);
        cfg.solver.damping_up = s.value("damping_up", cfg.solver.damping_up);
        cfg.solver.damping_down = s.value("damping_down", cfg.solver.damping_down);
        cfg.solver.max_iter = s.value("max_iter", cfg.solver.max_iter);
        cfg.solver.rel_tol = s.value("rel_tol", cfg.solver.rel_tol);
    }
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.weights.validate();
    return cfg;
}

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["pca"] = cfg.pca_path;
    j["generator"] = cfg.generator_path;
    j["extractor"] = cfg.extractor_path;
    j["bank"] = cfg.bank_path;
    j["weights"] = {{"adv", cfg.weights.adv},
                    {"id", cfg.weights.id},
                    {"px", cfg.weights.px},
                    {"tv", cfg.weights.tv},
                    {"gec", cfg.weights.gec}};
    j["solver"] = {{"damping_init", cfg.solver.damping_init},
                   {"damping_up", cfg.solver.damping_up},
                   {"damping_down", cfg.solver.damping_down},
                   {"max_iter", cfg.solver.max_iter},
                   {"rel_tol", cfg.solver.rel_tol}};
    j["seed"] = cfg.seed;
    return j;
}

// Loaded enhancement artifacts (shared, read-only at run time).
struct EnhanceArtifacts {
    PcaModel pca;
    FaceMesh mesh;
    GeoGanModel gan;       // generator required for the GAN method
    GeometryBank bank;     // required for the KNN method
    bool has_generator = false;
    bool has_bank = false;
};

inline EnhanceArtifacts load_artifacts(const PipelineConfig& cfg) {
    EnhanceArtifacts art;
    if (cfg.pca_path.empty()) throw ArtifactError("config: pca model path missing");
    try {
        art.pca = pca_from_json(parse_json_file(cfg.pca_path), &art.mesh);
    } catch (const ParseError& e) {
        throw ArtifactError(std::string("pca model: ") + e.what());
    }
    if (art.mesh.edges.empty())
        throw ArtifactError("pca model file carries no mesh; refit with the pipeline");
    if (!cfg.generator_path.empty()) {
        try {
            art.gan.generator = deserialize_network(read_text_file(cfg.generator_path));
        } catch (const ParseError& e) {
            throw ArtifactError(std::string("generator: ") + e.what());
        }
        art.has_generator = true;
    }
    if (!cfg.bank_path.empty()) {
        try {
            art.bank = bank_from_json(parse_json_file(cfg.bank_path));
        } catch (const ParseError& e) {
            throw ArtifactError(std::string("bank: ") + e.what());
        }
        art.has_bank = true;
    }
    return art;
}

struct StageTimings {
    double extract = 0.0;  // x -> l_x
    double map = 0.0;      // l_x -> l_y
    double apply = 0.0;    // l_y -> y
    double total = 0.0;
};

inline std::string timings_csv(const StageTimings& t) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "stage,seconds\nx_to_lx,%.6f\nlx_to_ly,%.6f\nly_to_y,%.6f\ntotal,%.6f\n",
                  t.extract, t.map, t.apply, t.total);
    return buf;
}

struct EnhanceResult {
    ImageBuffer image;
    LandmarkSet landmarks;
    GeometryCode code_in, code_out;
    StageTimings timings;
    bool solver_converged = true;
    double solver_energy = 0.0;
    std::vector<std::string> warnings;
};

// Full geometry enhancement: extract -> encode -> map (GAN or KNN) ->
// recover landmarks -> warp. Deterministic given fixed artifacts; a
// non-converged solver is reported as a warning, not a failure.
inline EnhanceResult enhance_face(const ImageBuffer& img, const LandmarkSet& landmarks,
                                  const EnhanceArtifacts& art,
                                  EnhanceMethod method = EnhanceMethod::Gan,
                                  const LmOptions& solver = {}, std::size_t knn_k = 3) {
    using clock = std::chrono::steady_clock;
    EnhanceResult res;
    const auto t0 = clock::now();

    landmarks.validate();
    const DistanceVector d = extract_distances(landmarks, art.mesh);
    res.code_in = pca_encode(art.pca, d);
    const auto t1 = clock::now();

    if (method == EnhanceMethod::Gan) {
        if (!art.has_generator) throw ArtifactError("enhance: generator artifact not loaded");
        res.code_out = enhance_code(art.gan, res.code_in);
    } else {
        if (!art.has_bank) throw ArtifactError("enhance: geometry bank not loaded");
        res.code_out = knn_enhance(art.bank, res.code_in, knn_k);
    }
    const auto t2 = clock::now();

    LmResult fit = recover_enhanced_landmarks(art.pca, art.mesh, res.code_out, landmarks, solver);
    res.solver_converged = fit.converged;
    res.solver_energy = fit.energy;
    if (!fit.converged)
        res.warnings.push_back("landmark solver stopped before convergence (energy " +
                               std::to_string(fit.energy) + ")");
    res.landmarks = fit.points;
    res.image = warp_face(img, landmarks, res.landmarks, art.mesh, &res.warnings);
    const auto t3 = clock::now();

    res.timings.extract = std::chrono::duration<double>(t1 - t0).count();
    res.timings.map = std::chrono::duration<double>(t2 - t1).count();
    res.timings.apply = std::chrono::duration<double>(t3 - t2).count();
    res.timings.total = std::chrono::duration<double>(t3 - t0).count();
    return res;
}

// Identity preservation metric: cosine similarity of descriptor embeddings.
inline double eval_identity(const ImageBuffer& x, const ImageBuffer& xhat,
                            const IdentityDescriptor& psi) {
    const auto u = psi.describe(x);
    const auto v = psi.describe(xhat);
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu <= 0.0 || nv <= 0.0) return 0.0;
    return dot / std::sqrt(nu * nv);
}

}  // namespace visage
