//! Tikhonov-regularized fitting of a one-block softmax transformer.
//!
//! The parameter vector `θ` is laid out as
//! `[η, W (row-major, d×w), U (row-major, w×d), b (w), ρ, V (row-major, d×d), A (row-major, d×d)]`
//! with `w` the feed-forward width. Attention runs at `τ = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::layers::{AttentionKind, FeedForwardLayer, SelfAttentionLayer};
use crate::matrix::{AttentionMatrix, DenseMatrix};
use crate::token::{Sequence, Token};
use crate::transformer::{Transformer, TransformerBlock};

/// Objective values above this count as divergence.
pub const DIVERGENCE: f64 = 1e12;

/// `max_{x∈X} ‖x − y‖²` for a one-token target `Y = {y}`.
pub fn loss_f(x: &Sequence<f64>, y: &Sequence<f64>) -> Result<f64> {
    if y.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "target must hold exactly one token, got {}",
            y.len()
        )));
    }
    if x.dim() != y.dim() {
        return Err(Error::Dimension(format!(
            "tokens in R^{} against a target in R^{}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(x.iter().map(|t| t.dist_sq(&y[0])).fold(0.0, f64::max))
}

/// `‖θ‖²`.
pub fn kappa(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t * t).sum()
}

/// Shape of the trained model: one block in `R^d` with feed-forward width `width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub d: usize,
    pub width: usize,
}

impl Architecture {
    pub fn new(d: usize) -> Self {
        Architecture { d, width: d }
    }

    pub fn len(&self) -> usize {
        let (d, w) = (self.d, self.width);
        1 + 2 * d * w + w + 1 + 2 * d * d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn offsets(&self) -> [usize; 7] {
        let (d, w) = (self.d, self.width);
        let eta = 0;
        let wm = 1;
        let um = wm + d * w;
        let b = um + w * d;
        let rho = b + w;
        let v = rho + 1;
        let a = v + d * d;
        [eta, wm, um, b, rho, v, a]
    }

    pub fn model(&self, theta: &[f64]) -> Result<Transformer<f64>> {
        if theta.len() != self.len() {
            return Err(Error::Dimension(format!(
                "θ has {} entries, expected {}",
                theta.len(),
                self.len()
            )));
        }
        let (d, w) = (self.d, self.width);
        let [eta, wm, um, b, rho, v, a] = self.offsets();
        let rows = |start: usize, r: usize, c: usize| {
            DenseMatrix::from_rows(
                (0..r)
                    .map(|i| theta[start + i * c..start + (i + 1) * c].to_vec())
                    .collect(),
            )
        };
        let ff = FeedForwardLayer {
            eta: theta[eta],
            w: rows(wm, d, w)?,
            u: rows(um, w, d)?,
            b: theta[b..b + w].to_vec(),
        };
        let sa = SelfAttentionLayer {
            rho: theta[rho],
            v: AttentionMatrix::Dense(rows(v, d, d)?),
            a: AttentionMatrix::Dense(rows(a, d, d)?),
            kind: AttentionKind::Softmax { tau: 1.0 },
        };
        let mut t = Transformer::new(d);
        t.push(TransformerBlock { ff, sa });
        Ok(t)
    }
}

/// Mean data fit `(1/N) Σ f(T_θ(X^j), Y^j)`.
pub fn data_fit(arch: &Architecture, theta: &[f64], ds: &Dataset<f64>) -> Result<f64> {
    let model = arch.model(theta)?;
    let mut total = 0.0;
    for pair in &ds.pairs {
        total += loss_f(&model.apply(&pair.input)?, &pair.output)?;
    }
    Ok(total / ds.len() as f64)
}

/// `F_ε(θ) = (1/N) Σ f(T_θ(X^j), Y^j) + ε κ(θ)`.
pub fn objective(
    arch: &Architecture,
    theta: &[f64],
    ds: &Dataset<f64>,
    epsilon: f64,
) -> Result<f64> {
    Ok(data_fit(arch, theta, ds)? + epsilon * kappa(theta))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    #[default]
    Analytic,
    /// Central differences with step `h_rel·(1 + |θ_i|)`.
    FiniteDifference {
        h_rel: f64,
    },
}

/// `∇F_ε(θ)`; the data term is differentiated through the maximizing token.
pub fn gradient(
    arch: &Architecture,
    theta: &[f64],
    ds: &Dataset<f64>,
    epsilon: f64,
    mode: GradMode,
) -> Result<Vec<f64>> {
    match mode {
        GradMode::Analytic => analytic_gradient(arch, theta, ds, epsilon),
        GradMode::FiniteDifference { h_rel } => finite_difference(arch, theta, ds, epsilon, h_rel),
    }
}

fn finite_difference(
    arch: &Architecture,
    theta: &[f64],
    ds: &Dataset<f64>,
    epsilon: f64,
    h_rel: f64,
) -> Result<Vec<f64>> {
    if !(h_rel > 0.0) {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must be positive, got {h_rel}"
        )));
    }
    (0..theta.len())
        .into_par_iter()
        .map(|i| {
            let h = h_rel * (1.0 + theta[i].abs());
            let mut probe = theta.to_vec();
            probe[i] = theta[i] + h;
            let up = objective(arch, &probe, ds, epsilon)?;
            probe[i] = theta[i] - h;
            let down = objective(arch, &probe, ds, epsilon)?;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "objective is not finite around coordinate {i}"
                )));
            }
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

fn analytic_gradient(
    arch: &Architecture,
    theta: &[f64],
    ds: &Dataset<f64>,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let model = arch.model(theta)?;
    let TransformerBlock { ff, sa } = &model.blocks[0];
    let (AttentionMatrix::Dense(v), AttentionMatrix::Dense(a)) = (&sa.v, &sa.a) else {
        unreachable!("training model uses dense attention matrices")
    };
    let (d, w) = (arch.d, arch.width);
    let [o_eta, o_w, o_u, o_b, o_rho, o_v, o_a] = arch.offsets();
    let mut g: Vec<f64> = theta.iter().map(|t| 2.0 * epsilon * t).collect();
    let scale = 1.0 / ds.len() as f64;

    for pair in &ds.pairs {
        let xs = pair.input.tokens();
        let y = &pair.output[0];
        let pre: Vec<Vec<f64>> = xs.iter().map(|x| ff.pre_activations(x)).collect();
        let z: Vec<Token<f64>> = xs.iter().map(|x| ff.apply_unchecked(x)).collect();
        let zs = Sequence::from_tokens_unchecked(z.clone());
        let pi = sa.weights(&zs);
        let out = sa.apply_unchecked(&zs);
        let l = (0..out.len())
            .max_by(|&p, &q| out[p].dist_sq(y).total_cmp(&out[q].dist_sq(y)))
            .expect("non-empty sequence");
        let m: Vec<f64> = (0..d)
            .map(|c| pi[l].iter().zip(&z).map(|(p, zk)| p * zk[c]).sum())
            .collect();

        let g_out: Vec<f64> = out[l]
            .sub(y)
            .iter_coords()
            .map(|c| 2.0 * scale * c)
            .collect();
        let mut g_z = vec![vec![0.0; d]; z.len()];
        g[o_rho] += dot(&g_out, &z[l].0);
        for r in 0..d {
            for c in 0..d {
                g[o_v + r * d + c] += g_out[r] * m[c];
            }
        }
        let g_m = v.mul_vec_transposed(&g_out);
        for c in 0..d {
            g_z[l][c] += sa.rho * g_out[c];
        }
        let g_pi: Vec<f64> = z.iter().map(|zk| dot(&g_m, &zk.0)).collect();
        let mean_g: f64 = pi[l].iter().zip(&g_pi).map(|(p, q)| p * q).sum();
        let az_l = a.mul_vec(&z[l].0);
        for (k, zk) in z.iter().enumerate() {
            let pk = pi[l][k];
            for c in 0..d {
                g_z[k][c] += pk * g_m[c];
            }
            // s_lk = ⟨A z_l, z_k⟩
            let gs = pk * (g_pi[k] - mean_g);
            if gs == 0.0 {
                continue;
            }
            for r in 0..d {
                for c in 0..d {
                    g[o_a + r * d + c] += gs * zk[r] * z[l][c];
                }
            }
            let at_zk = a.mul_vec_transposed(&zk.0);
            for c in 0..d {
                g_z[k][c] += gs * az_l[c];
                g_z[l][c] += gs * at_zk[c];
            }
        }

        for (k, x) in xs.iter().enumerate() {
            let gz = &g_z[k];
            g[o_eta] += dot(gz, &x.0);
            let h: Vec<f64> = pre[k].iter().map(|&p| p.max(0.0)).collect();
            for r in 0..d {
                for c in 0..w {
                    g[o_w + r * w + c] += gz[r] * h[c];
                }
            }
            let g_h = ff.w.mul_vec_transposed(gz);
            for c in 0..w {
                if pre[k][c] > 0.0 {
                    g[o_b + c] += g_h[c];
                    for e in 0..d {
                        g[o_u + c * d + e] += g_h[c] * x[e];
                    }
                }
            }
        }
    }
    Ok(g)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A planted instance: parameters, the dataset they fit exactly, and `κ(θ_exact)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthetic {
    pub arch: Architecture,
    pub theta_exact: Vec<f64>,
    pub dataset: Dataset<f64>,
    pub kappa_exact: f64,
}

const MAX_DRAWS: usize = 1000;

/// Plants a block whose attention collapses every sequence onto one point
/// (`ρ = 0`, `A = 0`: each token becomes `V` times the mean feed-forward image)
/// and uses those points as targets.
pub fn make_synthetic(seed: u64, n_sequences: usize, n: usize, d: usize) -> Result<Synthetic> {
    if n_sequences == 0 || n == 0 || d < 2 {
        return Err(Error::InvalidInput(format!(
            "need N, n ≥ 1 and d ≥ 2 (got N={n_sequences}, n={n}, d={d})"
        )));
    }
    let arch = Architecture::new(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta: Vec<f64> = (0..arch.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let [o_eta, _, _, _, o_rho, _, o_a] = arch.offsets();
    theta[o_eta] = 1.0;
    theta[o_rho] = 0.0;
    for t in &mut theta[o_a..] {
        *t = 0.0;
    }
    let model = arch.model(&theta)?;
    for _ in 0..MAX_DRAWS {
        let pairs = (0..n_sequences)
            .map(|_| {
                let input = Sequence::from_tokens_unchecked(
                    (0..n)
                        .map(|_| {
                            Token(
                                (0..d)
                                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                                    .collect(),
                            )
                        })
                        .collect(),
                );
                let out = model.apply(&input)?;
                Ok((input, Sequence::from_tokens_unchecked(vec![out[0].clone()])))
            })
            .collect::<Result<Vec<_>>>()?;
        let dataset = Dataset::new(d, pairs);
        if dataset.validate().is_ok() {
            let kappa_exact = kappa(&theta);
            return Ok(Synthetic {
                arch,
                theta_exact: theta,
                dataset,
                kappa_exact,
            });
        }
    }
    Err(Error::InvalidInput(format!(
        "no valid synthetic dataset after {MAX_DRAWS} draws"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Standard deviation of the random initialization.
    pub init_scale: f64,
    pub grad_mode: GradMode,
}

impl TrainingConfig {
    pub fn new(epsilon: f64, steps: usize, seed: u64) -> Self {
        TrainingConfig {
            epsilon,
            steps,
            step_size: 3e-4,
            momentum: 0.9,
            seed,
            init_scale: 0.1,
            grad_mode: GradMode::Analytic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("at least one step is required".into()));
        }
        if !(self.step_size > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput(
                "step size must be positive and momentum in [0, 1)".into(),
            ));
        }
        if let GradMode::FiniteDifference { h_rel } = self.grad_mode {
            if !(h_rel > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "finite-difference step must be positive, got {h_rel}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunLabel {
    /// The objective reached `ε κ(θ_exact)`, an upper bound on its global minimum.
    BelowBound,
    /// The objective stayed above the bound: not a global minimizer.
    LocalOrInsufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub loss: Vec<f64>,
    pub data_fit: Vec<f64>,
    pub kappa: Vec<f64>,
    pub threshold: f64,
    pub crossed_at: Option<usize>,
    pub label: RunLabel,
    pub theta: Vec<f64>,
}

impl TrainingRun {
    pub fn min_loss(&self) -> f64 {
        self.loss.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `step,F_eps,data_fit,kappa` rows, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,F_eps,data_fit,kappa\n");
        for (k, ((l, f), c)) in self
            .loss
            .iter()
            .zip(&self.data_fit)
            .zip(&self.kappa)
            .enumerate()
        {
            s.push_str(&format!("{k},{l:.16e},{f:.16e},{c:.16e}\n"));
        }
        s
    }
}

/// Random initial parameters for `arch`.
pub fn initial_theta(arch: &Architecture, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..arch.len())
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Gradient descent with heavy-ball momentum from `theta0` (or a seeded random
/// start), recording the objective after every step and the first step at
/// which it drops to `ε κ(θ_exact)`.
pub fn train(
    cfg: &TrainingConfig,
    arch: &Architecture,
    ds: &Dataset<f64>,
    theta_exact: &[f64],
    theta0: Option<Vec<f64>>,
) -> Result<TrainingRun> {
    cfg.validate()?;
    let threshold = cfg.epsilon * kappa(theta_exact);
    let mut theta = theta0.unwrap_or_else(|| initial_theta(arch, cfg.seed, cfg.init_scale));
    let mut velocity = vec![0.0; theta.len()];
    let (mut loss, mut fit, mut kap) = (Vec::new(), Vec::new(), Vec::new());
    let mut crossed_at = None;
    for step in 0..=cfg.steps {
        let f = data_fit(arch, &theta, ds)?;
        let k = kappa(&theta);
        let value = f + cfg.epsilon * k;
        if !value.is_finite() || value > DIVERGENCE {
            return Err(Error::Divergence { step, value });
        }
        loss.push(value);
        fit.push(f);
        kap.push(k);
        if crossed_at.is_none() && value <= threshold {
            debug_assert!(k <= kappa(theta_exact) * (1.0 + 1e-12));
            crossed_at = Some(step);
        }
        if step == cfg.steps {
            break;
        }
        let g = gradient(arch, &theta, ds, cfg.epsilon, cfg.grad_mode)?;
        for ((t, v), gi) in theta.iter_mut().zip(&mut velocity).zip(&g) {
            *v = cfg.momentum * *v - cfg.step_size * gi;
            *t += *v;
        }
    }
    let label = if crossed_at.is_some() {
        RunLabel::BelowBound
    } else {
        RunLabel::LocalOrInsufficient
    };
    Ok(TrainingRun {
        loss,
        data_fit: fit,
        kappa: kap,
        threshold,
        crossed_at,
        label,
        theta,
    })
}
