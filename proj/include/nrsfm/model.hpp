#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nrsfm/autodiff.hpp"
#include "nrsfm/config.hpp"
#include "nrsfm/errors.hpp"
#include "nrsfm/geometry.hpp"
#include "nrsfm/matrix.hpp"
#include "nrsfm/rng.hpp"

namespace nrsfm {

// Parameter fields in canonical order. Everything that iterates parameters
// (init, binding, Adam state, checkpoints) goes through this list.
#define NRSFM_PARAM_LIST(X) \
    X(in_w) X(in_b) \
    X(res1_w1) X(res1_b1) X(res1_w2) X(res1_b2) \
    X(res2_w1) X(res2_b1) X(res2_w2) X(res2_b2) \
    X(rot_w) X(rot_b) \
    X(alpha_w) X(alpha_b) \
    X(beta_w) X(beta_b) \
    X(basis_w) X(deform_w) \
    X(cano_w) X(cano_b)

// All learnable weights. The backbone maps the flattened 2xN_p observation
// to a feature vector through two residual blocks; four heads read from it:
// rotation (axis-angle), basis coefficients, deformation coefficients (which
// also see the basis coefficients and a noise vector), and the two linear
// synthesis layers whose columns are the learned atom shapes/deformations.
// The canonicalizer is an affine map on flattened shapes used only by the
// canonicalization loss.
struct ModelParams {
#define NRSFM_DECLARE(name) Matrix name;
    NRSFM_PARAM_LIST(NRSFM_DECLARE)
#undef NRSFM_DECLARE

    template <typename F>
    void for_each_param(F&& f) {
#define NRSFM_VISIT(name) f(#name, name);
        NRSFM_PARAM_LIST(NRSFM_VISIT)
#undef NRSFM_VISIT
    }

    template <typename F>
    void for_each_param(F&& f) const {
#define NRSFM_VISIT(name) f(#name, name);
        NRSFM_PARAM_LIST(NRSFM_VISIT)
#undef NRSFM_VISIT
    }

    int feature_width() const { return in_w.rows(); }
    int n_p() const { return basis_w.rows() / 3; }
    int k_b() const { return basis_w.cols(); }
    int k_d() const { return deform_w.cols(); }
    int dim_z() const { return beta_w.cols() - feature_width() - k_b(); }

    // Weights uniform in +-1/sqrt(fan-in), biases zero. The rotation head is
    // zeroed entirely so training starts from the identity rotation.
    static ModelParams init(const TrainConfig& cfg, Rng& rng) {
        cfg.validate();
        const int f = cfg.feature_width, np2 = 2 * cfg.n_p, np3 = 3 * cfg.n_p;
        ModelParams p;
        auto dense = [&rng](int rows, int cols) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
            return rng.uniform_matrix(rows, cols, -bound, bound);
        };
        p.in_w = dense(f, np2);
        p.in_b = Matrix(f, 1);
        p.res1_w1 = dense(f, f);
        p.res1_b1 = Matrix(f, 1);
        p.res1_w2 = dense(f, f);
        p.res1_b2 = Matrix(f, 1);
        p.res2_w1 = dense(f, f);
        p.res2_b1 = Matrix(f, 1);
        p.res2_w2 = dense(f, f);
        p.res2_b2 = Matrix(f, 1);
        p.rot_w = Matrix(3, f);
        p.rot_b = Matrix(3, 1);
        p.alpha_w = dense(cfg.k_b, f);
        p.alpha_b = Matrix(cfg.k_b, 1);
        p.beta_w = dense(cfg.k_d, f + cfg.k_b + cfg.dim_z);
        p.beta_b = Matrix(cfg.k_d, 1);
        p.basis_w = dense(np3, cfg.k_b);
        p.deform_w = dense(np3, cfg.k_d);
        p.cano_w = dense(np3, np3);
        p.cano_b = Matrix(np3, 1);
        return p;
    }

    void validate_against(const TrainConfig& cfg) const {
        const int f = cfg.feature_width, np2 = 2 * cfg.n_p, np3 = 3 * cfg.n_p;
        auto expect = [](const Matrix& m, int r, int c, const char* name) {
            if (m.rows() != r || m.cols() != c)
                throw ConfigError(std::string(name) + ": expected " +
                                  Matrix::shape_str(r, c) + ", got " + m.shape_str());
        };
        expect(in_w, f, np2, "in_w");
        expect(in_b, f, 1, "in_b");
        expect(res1_w1, f, f, "res1_w1");
        expect(res1_b1, f, 1, "res1_b1");
        expect(res1_w2, f, f, "res1_w2");
        expect(res1_b2, f, 1, "res1_b2");
        expect(res2_w1, f, f, "res2_w1");
        expect(res2_b1, f, 1, "res2_b1");
        expect(res2_w2, f, f, "res2_w2");
        expect(res2_b2, f, 1, "res2_b2");
        expect(rot_w, 3, f, "rot_w");
        expect(rot_b, 3, 1, "rot_b");
        expect(alpha_w, cfg.k_b, f, "alpha_w");
        expect(alpha_b, cfg.k_b, 1, "alpha_b");
        expect(beta_w, cfg.k_d, f + cfg.k_b + cfg.dim_z, "beta_w");
        expect(beta_b, cfg.k_d, 1, "beta_b");
        expect(basis_w, np3, cfg.k_b, "basis_w");
        expect(deform_w, np3, cfg.k_d, "deform_w");
        expect(cano_w, np3, np3, "cano_w");
        expect(cano_b, np3, 1, "cano_b");
    }
};

// Graph leaves for every parameter on one tape (one binding per training
// step; all frames in the batch share the leaves).
struct ParamBinding {
#define NRSFM_DECLARE(name) Var name;
    NRSFM_PARAM_LIST(NRSFM_DECLARE)
#undef NRSFM_DECLARE

    std::vector<std::pair<std::string, Var>> ordered;
};

inline ParamBinding bind_params(Tape& tape, const ModelParams& params,
                                bool requires_grad = true) {
    ParamBinding b;
#define NRSFM_BIND(name) \
    b.name = tape.leaf(params.name, requires_grad); \
    b.ordered.emplace_back(#name, b.name);
    NRSFM_PARAM_LIST(NRSFM_BIND)
#undef NRSFM_BIND
    return b;
}

struct NoiseBatch {
    std::vector<Matrix> z; // n_m vectors, each dim_z x 1, standard normal
    uint64_t seed = 0;     // seed of the generating stream
};

inline NoiseBatch draw_noise(Rng& rng, int n_m, int dim_z) {
    if (n_m < 1) throw UsageError("draw_noise: n_m must be >= 1");
    NoiseBatch nb;
    nb.seed = rng.seed();
    nb.z.reserve(n_m);
    for (int m = 0; m < n_m; ++m) nb.z.push_back(rng.normal_matrix(dim_z, 1));
    return nb;
}

inline Var backbone_forward(Tape& tape, const ParamBinding& p, const Matrix& w) {
    if (w.rows() != 2)
        throw UsageError("backbone_forward: observation must be 2xN_p, got " + w.shape_str());
    if (max_row_mean_abs(w) >= 1e-9)
        throw UsageError("backbone_forward: observation is not centered at zero; "
                         "run center_frames on the dataset first");
    Var x = reshape(tape.constant(w), w.size(), 1);
    Var h = leaky_relu(add(matmul(p.in_w, x), p.in_b));
    auto res_block = [&](Var input, Var w1, Var b1, Var w2, Var b2) {
        Var inner = leaky_relu(add(matmul(w1, input), b1));
        return add(input, leaky_relu(add(matmul(w2, inner), b2)));
    };
    h = res_block(h, p.res1_w1, p.res1_b1, p.res1_w2, p.res1_b2);
    h = res_block(h, p.res2_w1, p.res2_b1, p.res2_w2, p.res2_b2);
    return h;
}

// 3-vector head through the axis-angle exponential map; one rotation per
// frame, shared by every hypothesis.
inline Var estimate_rotation(Tape& tape, const ParamBinding& p, Var feature) {
    Var omega = add(matmul(p.rot_w, feature), p.rot_b);
    return rodrigues(tape, omega);
}

struct Coefficients {
    Var alpha;              // k_b x 1, deterministic
    std::vector<Var> betas; // n_m of k_d x 1, one per noise vector
};

inline Coefficients estimate_coefficients(Tape& tape, const ParamBinding& p, Var feature,
                                          const NoiseBatch& noise) {
    Coefficients c;
    c.alpha = add(matmul(p.alpha_w, feature), p.alpha_b);
    c.betas.reserve(noise.z.size());
    for (const Matrix& z : noise.z) {
        Var zv = tape.constant(z);
        Var input = concat_rows({feature, c.alpha, zv});
        c.betas.push_back(add(matmul(p.beta_w, input), p.beta_b));
    }
    return c;
}

// Per-frame graph outputs: everything the losses need, plus the plain-value
// reprojection errors used for hypothesis selection.
struct ForwardPass {
    Var w_node;                   // 2 x n_p constant
    Var basis;                    // 3 x n_p
    std::vector<Var> deformations;
    std::vector<Var> hypotheses;
    Var rotation;                 // 3 x 3
    std::vector<Var> reproj_nodes;
    std::vector<double> reproj_errors;
    int best_index = 0;
};

inline ForwardPass synthesize_hypotheses(Tape& tape, const ParamBinding& p,
                                         const Coefficients& coeffs, Var rotation,
                                         const Camera& cam, Var w_node) {
    const int n_p = w_node.value().cols();
    ForwardPass fp;
    fp.w_node = w_node;
    fp.rotation = rotation;
    fp.basis = reshape(matmul(p.basis_w, coeffs.alpha), 3, n_p);
    const size_t n_m = coeffs.betas.size();
    fp.deformations.reserve(n_m);
    fp.hypotheses.reserve(n_m);
    fp.reproj_nodes.reserve(n_m);
    fp.reproj_errors.reserve(n_m);
    for (size_t m = 0; m < n_m; ++m) {
        Var def = reshape(matmul(p.deform_w, coeffs.betas[m]), 3, n_p);
        Var hyp = add(fp.basis, def);
        Var err = frobenius_norm(subtract(w_node, project(tape, cam, rotation, hyp)));
        fp.deformations.push_back(def);
        fp.hypotheses.push_back(hyp);
        fp.reproj_nodes.push_back(err);
        fp.reproj_errors.push_back(err.value()(0, 0));
    }
    fp.best_index = 0;
    for (size_t m = 1; m < n_m; ++m)
        if (fp.reproj_errors[m] < fp.reproj_errors[fp.best_index])
            fp.best_index = static_cast<int>(m); // ties keep the lowest index
    return fp;
}

inline ForwardPass model_forward(Tape& tape, const ParamBinding& p, const Matrix& w,
                                 const Camera& cam, const NoiseBatch& noise) {
    Var w_node = tape.constant(w);
    Var feature = backbone_forward(tape, p, w);
    Var rotation = estimate_rotation(tape, p, feature);
    Coefficients coeffs = estimate_coefficients(tape, p, feature, noise);
    return synthesize_hypotheses(tape, p, coeffs, rotation, cam, w_node);
}

// Value-level per-frame output for inference, evaluation and export.
struct HypothesisSet {
    Matrix basis;
    std::vector<Matrix> deformations;
    std::vector<Matrix> hypotheses;
    Rotation rotation;
    std::vector<double> reproj_errors;
    int best_index = 0;

    const Matrix& best() const { return hypotheses[best_index]; }

    int worst_index() const {
        int w = 0;
        for (size_t m = 1; m < reproj_errors.size(); ++m)
            if (reproj_errors[m] > reproj_errors[w]) w = static_cast<int>(m);
        return w;
    }
};

inline HypothesisSet extract_hypotheses(const ForwardPass& fp) {
    HypothesisSet h;
    h.basis = fp.basis.value();
    for (Var d : fp.deformations) h.deformations.push_back(d.value());
    for (Var s : fp.hypotheses) h.hypotheses.push_back(s.value());
    h.rotation = Rotation{fp.rotation.value()};
    h.reproj_errors = fp.reproj_errors;
    h.best_index = fp.best_index;
    return h;
}

// Full inference for one observation: deterministic given the seed.
inline HypothesisSet reconstruct(const ModelParams& params, const Matrix& w, const Camera& cam,
                                 int n_m, uint64_t seed) {
    if (n_m < 1) throw UsageError("reconstruct: n_m must be >= 1");
    Tape tape;
    ParamBinding binding = bind_params(tape, params, /*requires_grad=*/false);
    Rng rng(seed);
    NoiseBatch noise = draw_noise(rng, n_m, params.dim_z());
    ForwardPass fp = model_forward(tape, binding, w, cam, noise);
    return extract_hypotheses(fp);
}

} // namespace nrsfm
