//! Dynamic context-window gates: logistic filter gates computed from the
//! raw window input, word-level dropout on the gates, and the gated input
//! transform feeding every network architecture.
//!
//! Four variants of the filter:
//! * `ScalarConcat` — one scalar gate per window slot, gated slots stay
//!   concatenated (the original formulation).
//! * `Elementwise` — one gate per input dimension (1×1-convolution style).
//! * `TwoLayer` — slot gates from a small two-layer network
//!   r = σ(W_ur · σ(W_xu x)).
//! * `WeightedAverage` — slot gates, slots summed into one feature-sized
//!   vector x̃ = Σ r_k f_k.
//!
//! Gradients flow through BOTH occurrences of x — the gate input and the
//! gated operand; `detach_gates` freezes the former for ablation studies.

use crate::error::{Error, Result};
use crate::numerics::{
    axpy, dot, dsigmoid_from_output, hadamard, init_gaussian, sigmoid_vec, Matrix, Rng, Vector,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateVariant {
    ScalarConcat,
    Elementwise,
    TwoLayer,
    WeightedAverage,
}

impl GateVariant {
    pub const ALL: [GateVariant; 4] = [
        GateVariant::ScalarConcat,
        GateVariant::Elementwise,
        GateVariant::TwoLayer,
        GateVariant::WeightedAverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateVariant::ScalarConcat => "scalar-concat",
            GateVariant::Elementwise => "elementwise",
            GateVariant::TwoLayer => "two-layer",
            GateVariant::WeightedAverage => "weighted-average",
        }
    }

    pub fn from_name(s: &str) -> Result<GateVariant> {
        GateVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown gate variant {s:?}; expected one of scalar-concat, \
                     elementwise, two-layer, weighted-average"
                ))
            })
    }

    /// Gates per token: one per slot, except Elementwise gates every input
    /// dimension.
    pub fn gate_dim(self, slots: usize, window_dim: usize) -> usize {
        match self {
            GateVariant::Elementwise => window_dim,
            _ => slots,
        }
    }

    /// Slot gates can be exported per window position; Elementwise cannot.
    pub fn is_slot_valued(self) -> bool {
        !matches!(self, GateVariant::Elementwise)
    }
}

/// Whether gates are learned or forced to 1. Forcing reduces the mechanism
/// to plain word-level dropout, and with drop rate 0 to the ungated
/// baseline, bit for bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    Learned,
    Ones,
}

impl GateMode {
    pub fn name(self) -> &'static str {
        match self {
            GateMode::Learned => "learned",
            GateMode::Ones => "ones",
        }
    }

    pub fn from_name(s: &str) -> Result<GateMode> {
        match s {
            "learned" => Ok(GateMode::Learned),
            "ones" => Ok(GateMode::Ones),
            _ => Err(Error::config(format!(
                "unknown gate mode {s:?}; expected learned or ones"
            ))),
        }
    }
}

/// Shape and behavior of the gate layer for one model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateConfig {
    pub variant: GateVariant,
    /// Window slots, 2ρ+1.
    pub slots: usize,
    /// Token feature dimension F.
    pub feat_dim: usize,
    /// Hidden width of the TwoLayer variant.
    pub two_layer_hidden: usize,
    /// Ablation: exclude the gate computation from grad_x (gates still
    /// train through the product path).
    pub detach_gates: bool,
}

impl GateConfig {
    pub fn window_dim(&self) -> usize {
        self.slots * self.feat_dim
    }

    pub fn gate_dim(&self) -> usize {
        self.variant.gate_dim(self.slots, self.window_dim())
    }

    /// Dimension of the gated output x̃ the network consumes.
    pub fn output_dim(&self) -> usize {
        match self.variant {
            GateVariant::WeightedAverage => self.feat_dim,
            _ => self.window_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.slots % 2 == 0 {
            return Err(Error::config("window slot count must be odd and >= 1"));
        }
        if self.feat_dim == 0 {
            return Err(Error::config("feature dimension must be >= 1"));
        }
        if self.variant == GateVariant::TwoLayer && self.two_layer_hidden == 0 {
            return Err(Error::config("two-layer gate hidden size must be >= 1"));
        }
        Ok(())
    }
}

/// Learned gate weights. One-layer variants own W_xr (gate_dim × I); the
/// TwoLayer variant owns W_xu (u × I) and W_ur (gate_dim × u) instead.
#[derive(Clone, Debug, PartialEq)]
pub enum GateParams {
    OneLayer { w_xr: Matrix },
    TwoLayer { w_xu: Matrix, w_ur: Matrix },
}

impl GateParams {
    pub fn init(cfg: &GateConfig, rng: &mut Rng) -> Result<GateParams> {
        cfg.validate()?;
        let i = cfg.window_dim();
        Ok(match cfg.variant {
            GateVariant::TwoLayer => {
                let u = cfg.two_layer_hidden;
                GateParams::TwoLayer {
                    w_xu: init_gaussian(u, i, i, 0.1, rng),
                    w_ur: init_gaussian(cfg.gate_dim(), u, u, 0.1, rng),
                }
            }
            _ => GateParams::OneLayer {
                w_xr: init_gaussian(cfg.gate_dim(), i, i, 0.1, rng),
            },
        })
    }
}

/// Gradient accumulator shaped like `GateParams`.
#[derive(Clone, Debug)]
pub enum GateGrads {
    OneLayer { w_xr: Matrix },
    TwoLayer { w_xu: Matrix, w_ur: Matrix },
}

impl GateGrads {
    pub fn zeros_like(params: &GateParams) -> GateGrads {
        match params {
            GateParams::OneLayer { w_xr } => GateGrads::OneLayer {
                w_xr: Matrix::zeros(w_xr.rows(), w_xr.cols()),
            },
            GateParams::TwoLayer { w_xu, w_ur } => GateGrads::TwoLayer {
                w_xu: Matrix::zeros(w_xu.rows(), w_xu.cols()),
                w_ur: Matrix::zeros(w_ur.rows(), w_ur.cols()),
            },
        }
    }

    pub fn apply_sgd(&mut self, params: &mut GateParams, lr: f64) {
        match (self, params) {
            (GateGrads::OneLayer { w_xr: g }, GateParams::OneLayer { w_xr: p }) => {
                p.add_scaled(g, -lr);
                g.fill(0.0);
            }
            (
                GateGrads::TwoLayer { w_xu: gu, w_ur: gr },
                GateParams::TwoLayer { w_xu: pu, w_ur: pr },
            ) => {
                pu.add_scaled(gu, -lr);
                pr.add_scaled(gr, -lr);
                gu.fill(0.0);
                gr.fill(0.0);
            }
            _ => panic!("gate grads do not match gate params variant"),
        }
    }

    pub fn clear(&mut self) {
        match self {
            GateGrads::OneLayer { w_xr } => w_xr.fill(0.0),
            GateGrads::TwoLayer { w_xu, w_ur } => {
                w_xu.fill(0.0);
                w_ur.fill(0.0);
            }
        }
    }
}

/// How the raw gates are attenuated for one token: a sampled Bernoulli
/// mask in training, deterministic mean scaling (1−p) at test time.
#[derive(Clone, Debug, PartialEq)]
pub enum GateScaling {
    Mask(Vector),
    Scale(f64),
}

impl GateScaling {
    fn factor(&self, k: usize) -> f64 {
        match self {
            GateScaling::Mask(m) => m[k],
            GateScaling::Scale(c) => *c,
        }
    }

    /// Elementwise mask/scale. Linear, so it is its own backward map.
    pub fn apply(&self, v: &[f64]) -> Vector {
        match self {
            GateScaling::Mask(m) => hadamard(m, v),
            GateScaling::Scale(c) => v.iter().map(|&x| c * x).collect(),
        }
    }
}

/// Train-mode mask for a hidden layer of width `dim`.
pub fn sample_hidden_mask(dim: usize, drop_rate: f64, rng: &mut Rng) -> GateScaling {
    GateScaling::Mask(crate::numerics::dropout_mask(dim, drop_rate, rng))
}

/// Samples the per-token train-mode gate mask (0 with probability
/// `drop_rate`). One entry per gate.
pub fn sample_gate_mask(cfg: &GateConfig, drop_rate: f64, rng: &mut Rng) -> GateScaling {
    GateScaling::Mask(crate::numerics::dropout_mask(cfg.gate_dim(), drop_rate, rng))
}

/// Test-time scaling by the keep probability 1−p.
pub fn test_gate_scaling(drop_rate: f64) -> GateScaling {
    GateScaling::Scale(1.0 - drop_rate)
}

/// Everything the backward pass needs from one token's forward.
#[derive(Clone, Debug)]
pub struct DynwinCache {
    pub x: Vector,
    /// TwoLayer hidden activations.
    pub u: Option<Vector>,
    /// Raw gates σ(·), before dropout. All ones in `GateMode::Ones`.
    pub r: Vector,
    /// Gates actually multiplied into x (after mask / scaling).
    pub r_used: Vector,
    scaling: GateScaling,
}

/// Raw gates for a window input: r = σ(W_xr x), or the two-layer form.
pub fn gate_forward(params: &GateParams, x: &[f64]) -> (Vector, Option<Vector>) {
    match params {
        GateParams::OneLayer { w_xr } => (sigmoid_vec(&w_xr.matvec(x)), None),
        GateParams::TwoLayer { w_xu, w_ur } => {
            let u = sigmoid_vec(&w_xu.matvec(x));
            (sigmoid_vec(&w_ur.matvec(&u)), Some(u))
        }
    }
}

/// Applies (possibly dropped) gates to the window input.
pub fn apply_gates(cfg: &GateConfig, x: &[f64], r_used: &[f64]) -> Vector {
    let f = cfg.feat_dim;
    match cfg.variant {
        GateVariant::Elementwise => hadamard(r_used, x),
        GateVariant::WeightedAverage => {
            let mut out = vec![0.0; f];
            for (k, &rk) in r_used.iter().enumerate() {
                axpy(&mut out, rk, &x[k * f..(k + 1) * f]);
            }
            out
        }
        // Slot-scalar gating, slots kept concatenated.
        _ => {
            let mut out = Vec::with_capacity(x.len());
            for (k, &rk) in r_used.iter().enumerate() {
                out.extend(x[k * f..(k + 1) * f].iter().map(|v| rk * v));
            }
            out
        }
    }
}

/// Full input transform for one token: gates → dropout → gated window.
/// With `params == None` (GateMode::Ones) the raw gates are all ones and
/// only the dropout mask / scaling acts.
pub fn dynwin_forward(
    params: Option<&GateParams>,
    cfg: &GateConfig,
    x: Vector,
    scaling: GateScaling,
) -> (Vector, DynwinCache) {
    debug_assert_eq!(x.len(), cfg.window_dim());
    let (r, u) = match params {
        Some(p) => gate_forward(p, &x),
        None => (vec![1.0; cfg.gate_dim()], None),
    };
    let r_used: Vector = r
        .iter()
        .enumerate()
        .map(|(k, &rk)| scaling.factor(k) * rk)
        .collect();
    let out = apply_gates(cfg, &x, &r_used);
    (
        out,
        DynwinCache {
            x,
            u,
            r,
            r_used,
            scaling,
        },
    )
}

/// Backward through the gated transform. Returns grad_x; accumulates gate
/// weight gradients into `grads` when the gates are learned. The dropout
/// mask is treated as a constant.
pub fn dynwin_backward(
    params: Option<&GateParams>,
    cfg: &GateConfig,
    cache: &DynwinCache,
    grad_out: &[f64],
    grads: Option<&mut GateGrads>,
) -> Vector {
    let f = cfg.feat_dim;
    let x = &cache.x;
    let mut grad_x = vec![0.0; x.len()];

    // Direct path (x as the gated operand) and the gradient on r_used.
    let grad_r_used: Vector = match cfg.variant {
        GateVariant::Elementwise => {
            for (gx, (&ru, &g)) in grad_x.iter_mut().zip(cache.r_used.iter().zip(grad_out)) {
                *gx = ru * g;
            }
            hadamard(grad_out, x)
        }
        GateVariant::WeightedAverage => (0..cfg.slots)
            .map(|k| {
                let seg = &x[k * f..(k + 1) * f];
                axpy(
                    &mut grad_x[k * f..(k + 1) * f],
                    cache.r_used[k],
                    grad_out,
                );
                dot(grad_out, seg)
            })
            .collect(),
        _ => (0..cfg.slots)
            .map(|k| {
                let seg = &x[k * f..(k + 1) * f];
                let gseg = &grad_out[k * f..(k + 1) * f];
                axpy(&mut grad_x[k * f..(k + 1) * f], cache.r_used[k], gseg);
                dot(gseg, seg)
            })
            .collect(),
    };

    let (params, grads) = match (params, grads) {
        (Some(p), Some(g)) => (p, g),
        // Forced-ones gates: r is constant, nothing more to do.
        _ => return grad_x,
    };

    // Through the dropout (constant factor) and the sigmoid.
    let dz: Vector = grad_r_used
        .iter()
        .enumerate()
        .map(|(k, &g)| cache.scaling.factor(k) * g * dsigmoid_from_output(cache.r[k]))
        .collect();

    match (params, grads) {
        (GateParams::OneLayer { w_xr }, GateGrads::OneLayer { w_xr: g_xr }) => {
            g_xr.add_outer(&dz, x);
            if !cfg.detach_gates {
                axpy(&mut grad_x, 1.0, &w_xr.matvec_t(&dz));
            }
        }
        (
            GateParams::TwoLayer { w_xu, w_ur },
            GateGrads::TwoLayer { w_xu: g_xu, w_ur: g_ur },
        ) => {
            let u = cache.u.as_ref().expect("two-layer cache has u");
            g_ur.add_outer(&dz, u);
            let du = w_ur.matvec_t(&dz);
            let dz_u: Vector = du
                .iter()
                .zip(u.iter())
                .map(|(&d, &ui)| d * dsigmoid_from_output(ui))
                .collect();
            g_xu.add_outer(&dz_u, x);
            if !cfg.detach_gates {
                axpy(&mut grad_x, 1.0, &w_xu.matvec_t(&dz_u));
            }
        }
        _ => panic!("gate grads do not match gate params variant"),
    }

    grad_x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sigmoid;

    fn cfg(variant: GateVariant) -> GateConfig {
        GateConfig {
            variant,
            slots: 3,
            feat_dim: 3,
            two_layer_hidden: 4,
            detach_gates: false,
        }
    }

    fn rand_vec(n: usize, rng: &mut Rng) -> Vector {
        (0..n).map(|_| rng.standard_normal()).collect()
    }

    #[test]
    fn zero_weights_give_half_gates() {
        for variant in GateVariant::ALL {
            let c = cfg(variant);
            let params = match variant {
                GateVariant::TwoLayer => GateParams::TwoLayer {
                    w_xu: Matrix::zeros(4, c.window_dim()),
                    w_ur: Matrix::zeros(c.gate_dim(), 4),
                },
                _ => GateParams::OneLayer {
                    w_xr: Matrix::zeros(c.gate_dim(), c.window_dim()),
                },
            };
            let x = rand_vec(c.window_dim(), &mut Rng::new(1));
            let (r, _) = gate_forward(&params, &x);
            assert_eq!(r.len(), c.gate_dim());
            for v in r {
                assert_eq!(v, 0.5);
            }
        }
    }

    #[test]
    fn gates_stay_in_open_unit_interval() {
        let mut rng = Rng::new(2);
        for variant in GateVariant::ALL {
            let c = cfg(variant);
            let params = GateParams::init(&c, &mut rng).unwrap();
            for _ in 0..20 {
                let x = rand_vec(c.window_dim(), &mut rng);
                let (r, _) = gate_forward(&params, &x);
                assert!(r.iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn one_layer_gate_matches_naive_oracle() {
        let c = cfg(GateVariant::ScalarConcat);
        let mut rng = Rng::new(3);
        let params = GateParams::init(&c, &mut rng).unwrap();
        let x = rand_vec(c.window_dim(), &mut rng);
        let (r, _) = gate_forward(&params, &x);
        let GateParams::OneLayer { w_xr } = &params else {
            unreachable!()
        };
        for k in 0..c.gate_dim() {
            let z: f64 = (0..c.window_dim()).map(|j| w_xr.get(k, j) * x[j]).sum();
            assert!((r[k] - sigmoid(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_ones_is_identity_for_scalar_concat() {
        let c = cfg(GateVariant::ScalarConcat);
        let x = rand_vec(c.window_dim(), &mut Rng::new(4));
        let (out, cache) = dynwin_forward(None, &c, x.clone(), GateScaling::Scale(1.0));
        assert_eq!(out, x); // bitwise: 1.0 * v == v
        assert!(cache.r.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_gates_zero_the_input() {
        let c = cfg(GateVariant::ScalarConcat);
        let x = rand_vec(c.window_dim(), &mut Rng::new(5));
        let out = apply_gates(&c, &x, &[0.0, 0.0, 0.0]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slot_gates_remove_individual_slots() {
        let c = cfg(GateVariant::ScalarConcat); // ρ=1: slots are [-1, 0, +1]
        let x = rand_vec(c.window_dim(), &mut Rng::new(6));
        let out = apply_gates(&c, &x, &[1.0, 0.0, 1.0]);
        assert_eq!(&out[..3], &x[..3]);
        assert_eq!(&out[3..6], &[0.0, 0.0, 0.0]);
        assert_eq!(&out[6..], &x[6..]);
    }

    #[test]
    fn output_dims_per_variant() {
        let mut rng = Rng::new(7);
        for variant in GateVariant::ALL {
            let c = cfg(variant);
            let params = GateParams::init(&c, &mut rng).unwrap();
            let x = rand_vec(c.window_dim(), &mut rng);
            let (out, cache) =
                dynwin_forward(Some(&params), &c, x, GateScaling::Scale(1.0));
            let expect = match variant {
                GateVariant::WeightedAverage => c.feat_dim,
                _ => c.window_dim(),
            };
            assert_eq!(out.len(), expect, "{}", variant.name());
            assert_eq!(cache.r.len(), c.gate_dim());
        }
    }

    #[test]
    fn weighted_average_sums_slots() {
        let c = cfg(GateVariant::WeightedAverage);
        let x: Vector = (1..=9).map(|v| v as f64).collect();
        let out = apply_gates(&c, &x, &[0.5, 1.0, 2.0]);
        // 0.5·[1,2,3] + 1·[4,5,6] + 2·[7,8,9]
        assert_eq!(out, vec![0.5 + 4.0 + 14.0, 1.0 + 5.0 + 16.0, 1.5 + 6.0 + 18.0]);
    }

    #[test]
    fn dropout_semantics() {
        let r = vec![0.3, 0.6, 0.9];
        // Train, p=0: mask is all ones, r̃ == r.
        let mask = sample_gate_mask(&cfg(GateVariant::ScalarConcat), 0.0, &mut Rng::new(8));
        let GateScaling::Mask(m) = &mask else { unreachable!() };
        assert!(m.iter().all(|&v| v == 1.0));
        // Test, p=0.5: exact halving.
        let s = test_gate_scaling(0.5);
        let scaled: Vector = r.iter().enumerate().map(|(k, &v)| s.factor(k) * v).collect();
        assert_eq!(scaled, vec![0.15, 0.3, 0.45]);
    }

    #[test]
    fn forced_ones_with_dropout_is_word_deletion() {
        // r ≡ 1 composed with a 0/1 mask leaves each slot either intact or
        // fully removed — dropout over whole context words.
        let c = cfg(GateVariant::ScalarConcat);
        let x = rand_vec(c.window_dim(), &mut Rng::new(9));
        let scaling = GateScaling::Mask(vec![1.0, 0.0, 1.0]);
        let (out, cache) = dynwin_forward(None, &c, x.clone(), scaling);
        assert!(cache.r_used.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(&out[..3], &x[..3]);
        assert_eq!(&out[3..6], &[0.0, 0.0, 0.0]);
        assert_eq!(&out[6..], &x[6..]);
    }

    #[test]
    fn train_mask_mean_matches_keep_probability() {
        // Per-coordinate empirical mean of r̃ over many masks ≈ (1−p)·r.
        let c = cfg(GateVariant::ScalarConcat);
        let mut rng = Rng::new(10);
        let params = GateParams::init(&c, &mut rng).unwrap();
        let x = rand_vec(c.window_dim(), &mut rng);
        let p = 0.3;
        let n = 100_000;
        let mut sums = vec![0.0; c.gate_dim()];
        let mut r_ref = Vector::new();
        for _ in 0..n {
            let scaling = sample_gate_mask(&c, p, &mut rng);
            let (_, cache) = dynwin_forward(Some(&params), &c, x.clone(), scaling);
            axpy(&mut sums, 1.0, &cache.r_used);
            r_ref = cache.r;
        }
        for (k, s) in sums.iter().enumerate() {
            let mean = s / n as f64;
            let expect = (1.0 - p) * r_ref[k];
            assert!(
                (mean - expect).abs() / expect < 0.01,
                "coord {k}: mean {mean}, expect {expect}"
            );
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Scalar loss L = g · x̃ used for finite-difference checks.
    fn loss(
        params: Option<&GateParams>,
        c: &GateConfig,
        x: &Vector,
        scaling: &GateScaling,
        g: &Vector,
    ) -> f64 {
        let (out, _) = dynwin_forward(params, c, x.clone(), scaling.clone());
        dot(g, &out)
    }

    #[test]
    fn backward_matches_finite_differences_all_variants() {
        let h = 1e-5;
        for variant in GateVariant::ALL {
            let c = cfg(variant);
            let mut rng = Rng::new(11);
            let mut params = GateParams::init(&c, &mut rng).unwrap();
            let x = rand_vec(c.window_dim(), &mut rng);
            let g = rand_vec(c.output_dim(), &mut rng);
            // Train-mode mask, frozen across all evaluations.
            let scaling = sample_gate_mask(&c, 0.4, &mut Rng::new(12));

            let (_, cache) = dynwin_forward(Some(&params), &c, x.clone(), scaling.clone());
            let mut grads = GateGrads::zeros_like(&params);
            let grad_x = dynwin_backward(Some(&params), &c, &cache, &g, Some(&mut grads));

            // grad wrt x.
            for j in 0..x.len() {
                let mut xp = x.clone();
                xp[j] += h;
                let lp = loss(Some(&params), &c, &xp, &scaling, &g);
                xp[j] -= 2.0 * h;
                let lm = loss(Some(&params), &c, &xp, &scaling, &g);
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    rel_err(fd, grad_x[j]) < 1e-4,
                    "{} x[{j}]: fd {fd} vs {}",
                    variant.name(),
                    grad_x[j]
                );
            }

            // grad wrt every gate weight.
            let blocks: Vec<(&str, &Matrix)> = match &grads {
                GateGrads::OneLayer { w_xr } => vec![("w_xr", w_xr)],
                GateGrads::TwoLayer { w_xu, w_ur } => vec![("w_xu", w_xu), ("w_ur", w_ur)],
            };
            let analytic: Vec<(String, Vec<f64>)> = blocks
                .iter()
                .map(|(n, m)| (n.to_string(), m.data().to_vec()))
                .collect();
            for (name, values) in &analytic {
                for idx in 0..values.len() {
                    let perturb = |params: &mut GateParams, delta: f64| match (
                        params,
                        name.as_str(),
                    ) {
                        (GateParams::OneLayer { w_xr }, "w_xr") => w_xr.data_mut()[idx] += delta,
                        (GateParams::TwoLayer { w_xu, .. }, "w_xu") => {
                            w_xu.data_mut()[idx] += delta
                        }
                        (GateParams::TwoLayer { w_ur, .. }, "w_ur") => {
                            w_ur.data_mut()[idx] += delta
                        }
                        _ => unreachable!(),
                    };
                    perturb(&mut params, h);
                    let lp = loss(Some(&params), &c, &x, &scaling, &g);
                    perturb(&mut params, -2.0 * h);
                    let lm = loss(Some(&params), &c, &x, &scaling, &g);
                    perturb(&mut params, h);
                    let fd = (lp - lm) / (2.0 * h);
                    assert!(
                        rel_err(fd, values[idx]) < 1e-4,
                        "{} {name}[{idx}]: fd {fd} vs {}",
                        variant.name(),
                        values[idx]
                    );
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_param_grads() {
        let c = cfg(GateVariant::TwoLayer);
        let mut rng = Rng::new(13);
        let params = GateParams::init(&c, &mut rng).unwrap();
        let x = rand_vec(c.window_dim(), &mut rng);
        let (_, cache) =
            dynwin_forward(Some(&params), &c, x, GateScaling::Scale(1.0));
        let mut grads = GateGrads::zeros_like(&params);
        let g = vec![0.0; c.output_dim()];
        let grad_x = dynwin_backward(Some(&params), &c, &cache, &g, Some(&mut grads));
        assert!(grad_x.iter().all(|&v| v == 0.0));
        let GateGrads::TwoLayer { w_xu, w_ur } = &grads else {
            unreachable!()
        };
        assert_eq!(w_xu.max_abs(), 0.0);
        assert_eq!(w_ur.max_abs(), 0.0);
    }

    #[test]
    fn detached_gates_freeze_gate_path_in_grad_x() {
        let h = 1e-5;
        for variant in GateVariant::ALL {
            let mut c = cfg(variant);
            c.detach_gates = true;
            let mut rng = Rng::new(14);
            let params = GateParams::init(&c, &mut rng).unwrap();
            let x = rand_vec(c.window_dim(), &mut rng);
            let g = rand_vec(c.output_dim(), &mut rng);
            let scaling = GateScaling::Scale(0.7);

            let (_, cache) = dynwin_forward(Some(&params), &c, x.clone(), scaling.clone());
            let mut grads = GateGrads::zeros_like(&params);
            let grad_x = dynwin_backward(Some(&params), &c, &cache, &g, Some(&mut grads));

            // Oracle: perturb x only where it is the gated operand (the
            // gate activations stay frozen at their original values).
            for j in 0..x.len() {
                let fd = {
                    let mut xp = x.clone();
                    xp[j] += h;
                    let lp = dot(&g, &apply_gates(&c, &xp, &cache.r_used));
                    xp[j] -= 2.0 * h;
                    let lm = dot(&g, &apply_gates(&c, &xp, &cache.r_used));
                    (lp - lm) / (2.0 * h)
                };
                assert!(
                    rel_err(fd, grad_x[j]) < 1e-4,
                    "{} x[{j}]: fd {fd} vs {}",
                    variant.name(),
                    grad_x[j]
                );
            }
        }
    }
}
