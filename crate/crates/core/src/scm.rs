//! Synthetic structural causal models: the confounder and mediator graphs
//! with additive noise, the function and noise menus of the experiment
//! protocol, smooth/nonsmooth variants, and oracle access to the latent U.
//!
//! All randomness flows through ChaCha8 seeded from a caller-supplied u64,
//! so the same seed produces the same bytes on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which latent structure connects X and Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// U -> X, U -> Y, U -> W (U is a latent confounder).
    Confounder,
    /// X -> U -> Y, U -> W (U is a latent mediator).
    Mediator,
}

/// Structural function menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuncKind {
    Linear,
    Tanh,
    Sin,
    Sigmoid,
}

impl FuncKind {
    const MENU: [FuncKind; 4] = [
        FuncKind::Linear,
        FuncKind::Tanh,
        FuncKind::Sin,
        FuncKind::Sigmoid,
    ];
}

/// A menu function with a scale coefficient: f(v) = scale * base(v).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuncSpec {
    pub kind: FuncKind,
    pub scale: f64,
}

impl FuncSpec {
    pub fn new(kind: FuncKind, scale: f64) -> FuncSpec {
        FuncSpec { kind, scale }
    }

    pub fn linear() -> FuncSpec {
        FuncSpec::new(FuncKind::Linear, 1.0)
    }

    pub fn apply(&self, v: f64) -> f64 {
        let base = match self.kind {
            FuncKind::Linear => v,
            FuncKind::Tanh => v.tanh(),
            FuncKind::Sin => v.sin(),
            FuncKind::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        };
        self.scale * base
    }
}

/// Noise menu. Exponential and gamma draws are shifted to mean zero so
/// location stays with the structural part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian { std: f64 },
    Uniform { half_width: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
}

/// Default noise scale of the experiment protocol.
pub const DEFAULT_NOISE_SCALE: f64 = 0.1;

impl NoiseSpec {
    /// The four menu entries at the default scale (mean / spread ~ 0.1).
    pub fn default_menu() -> [NoiseSpec; 4] {
        [
            NoiseSpec::Gaussian {
                std: DEFAULT_NOISE_SCALE,
            },
            NoiseSpec::Uniform {
                half_width: DEFAULT_NOISE_SCALE,
            },
            NoiseSpec::Exponential {
                rate: 1.0 / DEFAULT_NOISE_SCALE,
            },
            NoiseSpec::Gamma {
                shape: 2.0,
                rate: 2.0 / DEFAULT_NOISE_SCALE,
            },
        ]
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            NoiseSpec::Gaussian { std } => *std > 0.0,
            NoiseSpec::Uniform { half_width } => *half_width > 0.0,
            NoiseSpec::Exponential { rate } => *rate > 0.0,
            NoiseSpec::Gamma { shape, rate } => *shape > 0.0 && *rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "noise scales must be strictly positive: {self:?}"
            )))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseSpec::Gaussian { std } => std * rng.sample::<f64, _>(StandardNormal),
            NoiseSpec::Uniform { half_width } => rng.random_range(-half_width..*half_width),
            NoiseSpec::Exponential { rate } => {
                rng.sample::<f64, _>(Exp::new(*rate).unwrap()) - 1.0 / rate
            }
            NoiseSpec::Gamma { shape, rate } => {
                rng.sample::<f64, _>(Gamma::new(*shape, 1.0 / rate).unwrap()) - shape / rate
            }
        }
    }
}

/// Step discontinuity injected into the U -> Y mechanism by
/// [`nonsmooth_variant`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    /// Where f_Y jumps (the median of U's marginal).
    pub location: f64,
    /// Jump height, added for u >= location.
    pub magnitude: f64,
}

/// Declarative description of a synthetic structural causal model.
///
/// Confounder graph: U = R; X = f_link(U) + N_link; W = f_w(U) + N_w;
/// Y = a * f_xy(X) + f_y(U) + N_y.
/// Mediator graph: X = R; U = f_link(X) + N_link; W = f_w(U) + N_w;
/// Y = a * f_xy(X) + f_y(U) + N_y.
/// R is the root noise; the X -> Y edge is present iff a != 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub graph: GraphKind,
    /// Coefficient a on the X -> Y edge; 0 means the edge is absent (H0).
    pub effect_strength: f64,
    /// U -> X in the confounder graph, X -> U in the mediator graph.
    pub f_link: FuncSpec,
    pub f_y: FuncSpec,
    pub f_w: FuncSpec,
    pub f_xy: FuncSpec,
    /// Marginal law of the root node (U or X).
    pub root_noise: NoiseSpec,
    pub noise_link: NoiseSpec,
    pub noise_y: NoiseSpec,
    pub noise_w: NoiseSpec,
    pub smooth: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<JumpSpec>,
}

impl ScmSpec {
    pub fn validate(&self) -> Result<()> {
        self.root_noise.validate()?;
        self.noise_link.validate()?;
        self.noise_y.validate()?;
        self.noise_w.validate()?;
        if !self.effect_strength.is_finite() {
            return Err(Error::InvalidConfig(
                "effect strength must be finite".into(),
            ));
        }
        if self.smooth != self.jump.is_none() {
            return Err(Error::InvalidConfig(
                "smooth flag inconsistent with jump spec".into(),
            ));
        }
        Ok(())
    }

    pub fn edge_present(&self) -> bool {
        self.effect_strength != 0.0
    }

    /// An all-linear Gaussian baseline spec with no X -> Y edge.
    pub fn linear_gaussian(graph: GraphKind) -> ScmSpec {
        ScmSpec {
            graph,
            effect_strength: 0.0,
            f_link: FuncSpec::linear(),
            f_y: FuncSpec::linear(),
            f_w: FuncSpec::linear(),
            f_xy: FuncSpec::linear(),
            root_noise: NoiseSpec::Gaussian { std: 1.0 },
            noise_link: NoiseSpec::Gaussian {
                std: DEFAULT_NOISE_SCALE,
            },
            noise_y: NoiseSpec::Gaussian {
                std: DEFAULT_NOISE_SCALE,
            },
            noise_w: NoiseSpec::Gaussian {
                std: DEFAULT_NOISE_SCALE,
            },
            smooth: true,
            jump: None,
        }
    }

    /// Copy with the X -> Y edge set to strength `a` through function `f`.
    pub fn with_edge(&self, a: f64, f: FuncSpec) -> ScmSpec {
        let mut spec = self.clone();
        spec.effect_strength = a;
        spec.f_xy = f;
        spec
    }

    /// The structural Y term in u, including the nonsmooth jump if any.
    fn y_structural(&self, u: f64) -> f64 {
        let mut v = self.f_y.apply(u);
        if let Some(jump) = &self.jump {
            if u >= jump.location {
                v += jump.magnitude;
            }
        }
        v
    }
}

/// Observed vectors plus the latent U. The latent column exists for
/// simulation diagnostics only and must never feed the test itself.
#[derive(Debug, Clone)]
pub struct ScmSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    /// Oracle values of the latent variable.
    pub u: Vec<f64>,
}

/// Draw n samples from the model. Deterministic given (spec, n, seed).
pub fn sample_scm(spec: &ScmSpec, n: usize, seed: u64) -> Result<ScmSample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("sample size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let a = spec.effect_strength;
    for _ in 0..n {
        let root = spec.root_noise.draw(&mut rng);
        let n_link = spec.noise_link.draw(&mut rng);
        let n_w = spec.noise_w.draw(&mut rng);
        let n_y = spec.noise_y.draw(&mut rng);
        let (xv, uv) = match spec.graph {
            GraphKind::Confounder => {
                let uv = root;
                (spec.f_link.apply(uv) + n_link, uv)
            }
            GraphKind::Mediator => {
                let xv = root;
                (xv, spec.f_link.apply(xv) + n_link)
            }
        };
        let wv = spec.f_w.apply(uv) + n_w;
        let yv = a * spec.f_xy.apply(xv) + spec.y_structural(uv) + n_y;
        x.push(xv);
        y.push(yv);
        w.push(wv);
        u.push(uv);
    }
    Ok(ScmSample { x, y, w, u })
}

/// Draw a random spec from the function and noise menus. The effect
/// strength is uniform on [1, 10] under H1 and zero under H0; the menu
/// draws do not depend on the h1 flag, so the H0/H1 pair at one seed
/// shares its mechanisms.
pub fn random_spec(graph: GraphKind, h1: bool, seed: u64) -> ScmSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick_f = |rng: &mut ChaCha8Rng| -> FuncSpec {
        FuncSpec::new(FuncKind::MENU[rng.random_range(0..4)], 1.0)
    };
    let f_link = pick_f(&mut rng);
    let f_y = pick_f(&mut rng);
    let f_w = pick_f(&mut rng);
    let f_xy = pick_f(&mut rng);
    let menu = NoiseSpec::default_menu();
    let noise_link = menu[rng.random_range(0..4)];
    let noise_y = menu[rng.random_range(0..4)];
    let noise_w = menu[rng.random_range(0..4)];
    let effect = rng.random_range(1.0..10.0);
    ScmSpec {
        graph,
        effect_strength: if h1 { effect } else { 0.0 },
        f_link,
        f_y,
        f_w,
        f_xy,
        root_noise: NoiseSpec::Gaussian { std: 1.0 },
        noise_link,
        noise_y,
        noise_w,
        smooth: true,
        jump: None,
    }
}

// Internal seed for calibrating the jump of the nonsmooth variant.
const JUMP_CALIBRATION_SEED: u64 = 0x5ca1_ab1e;
const JUMP_CALIBRATION_DRAWS: usize = 200_000;

/// Replace f_Y(u) by f_Y(u) + c * step(u - median(U)) with
/// c = 3 x std(f_Y(U)), violating the TV-smoothness of u -> L(Y|U=u).
/// The median and standard deviation come from a fixed-seed Monte Carlo
/// draw of U's marginal, so the variant is deterministic in the spec.
pub fn nonsmooth_variant(spec: &ScmSpec) -> Result<ScmSpec> {
    if !spec.smooth {
        return Err(Error::AlreadyNonsmooth);
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(JUMP_CALIBRATION_SEED);
    let mut us = Vec::with_capacity(JUMP_CALIBRATION_DRAWS);
    for _ in 0..JUMP_CALIBRATION_DRAWS {
        let root = spec.root_noise.draw(&mut rng);
        let uv = match spec.graph {
            GraphKind::Confounder => root,
            GraphKind::Mediator => spec.f_link.apply(root) + spec.noise_link.draw(&mut rng),
        };
        us.push(uv);
    }
    us.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let location = us[us.len() / 2];
    let m = us.len() as f64;
    let mean: f64 = us.iter().map(|u| spec.f_y.apply(*u)).sum::<f64>() / m;
    let var: f64 = us
        .iter()
        .map(|u| (spec.f_y.apply(*u) - mean).powi(2))
        .sum::<f64>()
        / m;
    let magnitude = 3.0 * var.sqrt();
    let mut out = spec.clone();
    out.smooth = false;
    out.jump = Some(JumpSpec {
        location,
        magnitude,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sample() {
        let spec = random_spec(GraphKind::Confounder, true, 42);
        let a = sample_scm(&spec, 500, 7).unwrap();
        let b = sample_scm(&spec, 500, 7).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.w, b.w);
        assert_eq!(a.u, b.u);
        let c = sample_scm(&spec, 500, 8).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn same_seed_same_spec() {
        assert_eq!(
            random_spec(GraphKind::Mediator, true, 99),
            random_spec(GraphKind::Mediator, true, 99)
        );
    }

    #[test]
    fn h0_spec_has_no_edge() {
        for seed in 0..50 {
            let spec = random_spec(GraphKind::Confounder, false, seed);
            assert_eq!(spec.effect_strength, 0.0);
            assert!(!spec.edge_present());
            let h1 = random_spec(GraphKind::Confounder, true, seed);
            assert!((1.0..10.0).contains(&h1.effect_strength));
            // The menus agree between the H0/H1 pair at one seed.
            assert_eq!(spec.f_y, h1.f_y);
            assert_eq!(spec.noise_w, h1.noise_w);
        }
    }

    #[test]
    fn menu_frequencies_are_uniform() {
        let mut counts = [0usize; 4];
        for seed in 0..1000 {
            let spec = random_spec(GraphKind::Confounder, false, seed);
            let idx = FuncKind::MENU
                .iter()
                .position(|k| *k == spec.f_y.kind)
                .unwrap();
            counts[idx] += 1;
        }
        for c in counts {
            let freq = c as f64 / 1000.0;
            assert!((freq - 0.25).abs() <= 0.05, "frequency {freq}");
        }
    }

    #[test]
    fn strong_linear_effect_shows_in_correlation() {
        let mut spec = ScmSpec::linear_gaussian(GraphKind::Confounder);
        spec.effect_strength = 3.0;
        let s = sample_scm(&spec, 10_000, 1).unwrap();
        let n = s.x.len() as f64;
        let mx = s.x.iter().sum::<f64>() / n;
        let my = s.y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (xv, yv) in s.x.iter().zip(&s.y) {
            sxy += (xv - mx) * (yv - my);
            sxx += (xv - mx).powi(2);
            syy += (yv - my).powi(2);
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr >= 0.5, "corr = {corr}");
    }

    #[test]
    fn centered_noise_has_small_mean() {
        for noise in NoiseSpec::default_menu() {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let mean: f64 = (0..200_000).map(|_| noise.draw(&mut rng)).sum::<f64>() / 200_000.0;
            assert!(mean.abs() < 0.005, "{noise:?} mean {mean}");
        }
    }

    #[test]
    fn nonsmooth_variant_flips_flag_and_errors_twice() {
        let spec = ScmSpec::linear_gaussian(GraphKind::Confounder);
        let ns = nonsmooth_variant(&spec).unwrap();
        assert!(!ns.smooth);
        let jump = ns.jump.unwrap();
        // f_Y = id and U ~ N(0,1): median ~ 0, std ~ 1, so c ~ 3.
        assert!(jump.location.abs() < 0.02, "location {}", jump.location);
        assert!((jump.magnitude - 3.0).abs() < 0.05, "c = {}", jump.magnitude);
        // The injected mechanism has exactly the promised discontinuity.
        let eps = 1e-9;
        let below = ns.y_structural(jump.location - eps);
        let above = ns.y_structural(jump.location + eps);
        assert!(((above - below) - jump.magnitude).abs() < 1e-6);
        assert!(matches!(nonsmooth_variant(&ns), Err(Error::AlreadyNonsmooth)));
    }

    #[test]
    fn mediator_graph_wiring() {
        // In the mediator graph X is the root: with a = 0 and f_link = id,
        // U - X is exactly the link noise.
        let spec = ScmSpec::linear_gaussian(GraphKind::Mediator);
        let s = sample_scm(&spec, 2000, 3).unwrap();
        for ((xv, uv), wv) in s.x.iter().zip(&s.u).zip(&s.w) {
            assert!((uv - xv).abs() < 1.0, "link noise too large");
            assert!((wv - uv).abs() < 1.0, "w noise too large");
        }
    }
}
