//! Finite-difference validation of the analytic gradients.
//!
//! The oracle is implementation-independent: it touches the model only
//! through loss evaluation. Dropout masks are frozen per comparison, so
//! both sides differentiate the same deterministic function; features are
//! re-gathered on every evaluation so perturbations of lookup-table rows
//! are visible in the loss.

use crate::error::{Error, Result};
use crate::networks::{Grads, Masks, Model};
use crate::numerics::Rng;
use crate::training::nll_loss;
use std::fmt;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Max tolerated relative error.
    pub threshold: f64,
    /// Central-difference step h.
    pub step: f64,
    /// Sweep every coordinate when the model has at most this many
    /// parameters; sample otherwise.
    pub exhaustive_limit: usize,
    /// Coordinates drawn per block in sampling mode.
    pub samples_per_block: usize,
    /// Seed for dropout masks and coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            threshold: 1e-4,
            step: 1e-5,
            exhaustive_limit: 2000,
            samples_per_block: 24,
            seed: 1,
        }
    }
}

/// |a − b| / max(|a|, |b|, 1e-8); the floor keeps zero-gradient
/// coordinates from dividing by zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central difference (f(x+h) − f(x−h)) / 2h.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    /// Coordinates compared.
    pub checked: usize,
    pub max_rel_err: f64,
    /// (row, col) of the worst coordinate.
    pub worst: (usize, usize),
    /// Analytic and numeric derivatives at the worst coordinate.
    pub analytic: f64,
    pub numeric: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub threshold: f64,
    pub step: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradReport {
    pub fn pass(&self) -> bool {
        self.blocks.iter().all(|b| b.pass)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn coords_checked(&self) -> usize {
        self.blocks.iter().map(|b| b.checked).sum()
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradient check: threshold {:.1e}, step {:.1e}",
            self.threshold, self.step
        )?;
        for b in &self.blocks {
            writeln!(
                f,
                "  {:<12} {:>6} coords  max rel err {:.3e} at ({}, {})  analytic {:+.6e}  numeric {:+.6e}  {}",
                b.name,
                b.checked,
                b.max_rel_err,
                b.worst.0,
                b.worst.1,
                b.analytic,
                b.numeric,
                if b.pass { "ok" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "overall: {} (max rel err {:.3e} over {} coordinates)",
            if self.pass() { "PASS" } else { "FAIL" },
            self.max_rel_err(),
            self.coords_checked()
        )
    }
}

/// The deterministic loss the check differentiates: featurize → forward
/// with the given frozen masks → mean NLL.
pub fn loss_with_masks(
    model: &Model,
    surfaces: &[String],
    gold: &[usize],
    masks: &Masks,
) -> f64 {
    let sf = model.featurize(surfaces);
    let fwd = model.forward(&sf, masks);
    nll_loss(&fwd.probs, gold)
}

/// Numeric ∂loss/∂θ for one coordinate, by central difference with the
/// same masks on both evaluations. `block` indexes `Model::param_blocks`.
pub fn finite_diff_grad(
    model: &mut Model,
    surfaces: &[String],
    gold: &[usize],
    masks: &Masks,
    block: usize,
    row: usize,
    col: usize,
    h: f64,
) -> Result<f64> {
    let original = {
        let blocks = model.param_blocks();
        blocks[block].1.get(row, col)
    };
    let eval_at = |m: &mut Model, v: f64| {
        m.param_blocks_mut()[block].1.set(row, col, v);
        loss_with_masks(m, surfaces, gold, masks)
    };
    let plus = eval_at(model, original + h);
    let minus = eval_at(model, original - h);
    eval_at(model, original); // restore
    if !plus.is_finite() || !minus.is_finite() {
        let name = model.param_blocks()[block].0.clone();
        return Err(Error::config(format!(
            "non-finite loss while perturbing {name}[{row},{col}]: L(+h)={plus}, L(-h)={minus}"
        )));
    }
    Ok((plus - minus) / (2.0 * h))
}

/// Compares a precomputed analytic gradient against finite differences.
/// `analytic` must come from a backward pass over the same sentence and
/// the same `masks`.
pub fn compare_grads_against(
    model: &mut Model,
    surfaces: &[String],
    gold: &[usize],
    masks: &Masks,
    analytic: &Grads,
    cfg: &GradCheckConfig,
) -> Result<GradReport> {
    let exhaustive = model.num_params() <= cfg.exhaustive_limit;
    let shapes: Vec<(String, usize, usize)> = model
        .param_blocks()
        .iter()
        .map(|(n, m)| (n.clone(), m.rows(), m.cols()))
        .collect();
    let mut coord_rng = Rng::new(cfg.seed ^ 0x9e37_79b9);

    let mut blocks = Vec::with_capacity(shapes.len());
    for (bi, (name, rows, cols)) in shapes.iter().enumerate() {
        let coords: Vec<(usize, usize)> = if exhaustive {
            (0..*rows)
                .flat_map(|r| (0..*cols).map(move |c| (r, c)))
                .collect()
        } else {
            (0..cfg.samples_per_block)
                .map(|_| {
                    let r = (coord_rng.uniform() * *rows as f64) as usize % rows;
                    let c = (coord_rng.uniform() * *cols as f64) as usize % cols;
                    (r, c)
                })
                .collect()
        };
        let mut report = BlockReport {
            name: name.clone(),
            checked: coords.len(),
            max_rel_err: 0.0,
            worst: (0, 0),
            analytic: 0.0,
            numeric: 0.0,
            pass: true,
        };
        for (r, c) in coords {
            let a = {
                let blocks = analytic.blocks();
                blocks[bi].1.get(r, c)
            };
            let mut n = finite_diff_grad(model, surfaces, gold, masks, bi, r, c, cfg.step)?;
            let mut e = rel_err(a, n);
            // Near-zero derivatives sit below the cancellation noise of the
            // default step (≈ ulp(loss)/2h). A larger step shrinks that
            // noise, so retry noisy coordinates with a coarser h and keep
            // the best agreement; a genuinely wrong gradient disagrees at
            // every step size.
            if e > cfg.threshold * 0.1 {
                for h in [cfg.step * 10.0, cfg.step * 100.0, cfg.step * 1000.0] {
                    let retry = finite_diff_grad(model, surfaces, gold, masks, bi, r, c, h)?;
                    let re = rel_err(a, retry);
                    if re < e {
                        e = re;
                        n = retry;
                    }
                }
            }
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = (r, c);
                report.analytic = a;
                report.numeric = n;
            }
        }
        report.pass = report.max_rel_err <= cfg.threshold;
        blocks.push(report);
    }
    Ok(GradReport {
        threshold: cfg.threshold,
        step: cfg.step,
        blocks,
    })
}

/// Full check for one sentence: freeze train-mode masks from the seed, run
/// one backward pass, then compare every parameter block (exhaustively for
/// small models, by seeded sample otherwise).
pub fn compare_grads(
    model: &mut Model,
    surfaces: &[String],
    gold: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradReport> {
    let sf = model.featurize(surfaces);
    let masks = model.sample_masks(sf.len(), &mut Rng::new(cfg.seed));
    let fwd = model.forward(&sf, &masks);
    let mut grads = Grads::zeros_like(model);
    model.backward(&sf, &masks, &fwd, gold, &mut grads);
    compare_grads_against(model, surfaces, gold, &masks, &grads, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab_tagset, parse_corpus, CharVocab, Sentence};
    use crate::features::FeatureConfig;
    use crate::networks::{NetConfig, NetKind};

    fn corpus() -> Vec<Sentence> {
        parse_corpus(
            "the|D cat|N sat|V\nthe|D dog|N ran|V fast|A\nbig|A cats|N sleep|V",
            "test",
        )
        .unwrap()
    }

    fn checked_sentence() -> (Vec<String>, Vec<usize>) {
        (
            ["The", "dog", "sat", "oddly"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vec![1, 2, 3, 4],
        )
    }

    fn tiny_model(kind: NetKind, drops: (f64, f64), seed: u64) -> Model {
        let train = corpus();
        let (vocab, tags) = build_vocab_tagset(&train, 1).unwrap();
        let chars = CharVocab::build(&train);
        let cfg = NetConfig {
            kind,
            hidden: 5,
            depth: 2,
            feature: FeatureConfig {
                word_dim: 3,
                cap_dim: 2,
                char_dim: 2,
                chars_per_side: 1,
                window_radius: 1,
            },
            two_layer_hidden: 3,
            gate_drop: drops.0,
            hidden_drop: drops.1,
            ..NetConfig::default()
        };
        Model::new(cfg, vocab, chars, tags, None, seed).unwrap()
    }

    #[test]
    fn central_difference_nails_smooth_functions() {
        let d = central_diff(|x| x * x, 3.0, 1e-5);
        assert!((d - 6.0).abs() < 1e-9, "{d}");
        for h in [1e-2, 1e-4, 1e-6] {
            let d = central_diff(|x| 3.0 * x + 1.0, 0.7, h);
            assert!((d - 3.0).abs() < 1e-9, "h={h}: {d}");
        }
    }

    #[test]
    fn relative_error_floors_at_zero_gradients() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert!((rel_err(1.0, 2.0) - 0.5).abs() < 1e-15);
        assert!(rel_err(0.0, 1e-12) < 1e-3);
    }

    #[test]
    fn fresh_tiny_mlp_passes_with_dropout_frozen() {
        let mut m = tiny_model(NetKind::Mlp, (0.4, 0.5), 3);
        let (surfaces, gold) = checked_sentence();
        let report = compare_grads(&mut m, &surfaces, &gold, &GradCheckConfig::default()).unwrap();
        assert!(report.pass(), "{report}");
        // Every block must actually be covered.
        assert!(report.blocks.iter().all(|b| b.checked > 0));
        assert!(report.blocks.iter().any(|b| b.name == "L_w"));
        assert!(report.blocks.iter().any(|b| b.name == "W_xr"));
    }

    #[test]
    fn corrupted_block_is_flagged_and_others_pass() {
        let mut m = tiny_model(NetKind::Mlp, (0.0, 0.0), 5);
        let (surfaces, gold) = checked_sentence();
        let cfg = GradCheckConfig::default();
        let sf = m.featurize(&surfaces);
        let masks = m.sample_masks(sf.len(), &mut Rng::new(cfg.seed));
        let fwd = m.forward(&sf, &masks);
        let mut grads = Grads::zeros_like(&m);
        m.backward(&sf, &masks, &fwd, &gold, &mut grads);
        // Sign-flip one block of the analytic gradient.
        if let crate::networks::ArchGrads::Mlp(g) = &mut grads.arch {
            g.w_xh.add_scaled(&g.w_xh.clone(), -2.0);
        } else {
            unreachable!()
        }
        let report =
            compare_grads_against(&mut m, &surfaces, &gold, &masks, &grads, &cfg).unwrap();
        assert!(!report.pass());
        for b in &report.blocks {
            assert_eq!(b.pass, b.name != "W_xh", "{}", b.name);
        }
    }

    #[test]
    fn halving_the_step_does_not_worsen_agreement() {
        let mut m = tiny_model(NetKind::Elman, (0.3, 0.3), 7);
        let (surfaces, gold) = checked_sentence();
        let coarse = GradCheckConfig {
            step: 1e-4,
            ..GradCheckConfig::default()
        };
        let fine = GradCheckConfig {
            step: 1e-5,
            ..GradCheckConfig::default()
        };
        let e4 = compare_grads(&mut m, &surfaces, &gold, &coarse).unwrap().max_rel_err();
        let e5 = compare_grads(&mut m, &surfaces, &gold, &fine).unwrap().max_rel_err();
        assert!(e5 <= e4 * 2.0 + 1e-10, "h=1e-4: {e4:.3e}, h=1e-5: {e5:.3e}");
    }

    /// Sampling mode: force it by dropping the exhaustive limit.
    #[test]
    fn sampled_sweep_is_deterministic_and_covers_blocks() {
        let mut m = tiny_model(NetKind::Lstm, (0.2, 0.2), 9);
        let (surfaces, gold) = checked_sentence();
        let cfg = GradCheckConfig {
            exhaustive_limit: 1,
            samples_per_block: 6,
            ..GradCheckConfig::default()
        };
        let a = compare_grads(&mut m, &surfaces, &gold, &cfg).unwrap();
        let b = compare_grads(&mut m, &surfaces, &gold, &cfg).unwrap();
        assert!(a.pass(), "{a}");
        assert!(a.blocks.iter().all(|blk| blk.checked == 6));
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert_eq!(x.max_rel_err, y.max_rel_err);
            assert_eq!(x.worst, y.worst);
        }
    }

    #[test]
    fn report_renders_every_block_line() {
        let mut m = tiny_model(NetKind::Mlp, (0.0, 0.0), 11);
        let (surfaces, gold) = checked_sentence();
        let report = compare_grads(&mut m, &surfaces, &gold, &GradCheckConfig::default()).unwrap();
        let text = report.to_string();
        assert!(text.contains("overall: PASS"));
        for b in &report.blocks {
            assert!(text.contains(&b.name));
        }
    }
}
