// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Prior measures on qubit state space and their discretization into
//! equally weighted ensemble atoms.
//!
//! Every sampler draws a radius by inverse transform and an independent
//! uniform direction, from the `(seed, PRIOR)` stream.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchangeable::Ensemble;
use crate::qstate::{density_from_bloch, BlochVector, DensityOperator};
use crate::rng::{self, StreamRng};

/// One explicitly listed atom of an `atoms` prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bloch: Option<BlochVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<DensityOperator>,
}

/// A prior measure together with how to discretize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    /// Lebesgue measure on the Bloch ball.
    UniformBall {
        atom_count: usize,
        seed: u64,
        #[serde(default)]
        symmetrize: bool,
    },
    /// Unitarily invariant measure on pure qubit states.
    PureHaar {
        atom_count: usize,
        seed: u64,
        #[serde(default)]
        symmetrize: bool,
    },
    /// Qubit Bures measure.
    Bures {
        atom_count: usize,
        seed: u64,
        #[serde(default)]
        symmetrize: bool,
    },
    /// Isotropic density `p(|b|)` per unit Bloch-ball volume, sampled on an
    /// equally spaced grid over `[0, 1]` and linearly interpolated.
    IsotropicRadial {
        radial_density: Vec<f64>,
        atom_count: usize,
        seed: u64,
        #[serde(default)]
        symmetrize: bool,
    },
    /// Explicit weighted atoms; weights are normalized.
    Atoms { atoms: Vec<AtomSpec> },
}

impl PriorSpec {
    pub fn uniform_ball(atom_count: usize, seed: u64) -> Self {
        PriorSpec::UniformBall {
            atom_count,
            seed,
            symmetrize: false,
        }
    }

    pub fn pure_haar(atom_count: usize, seed: u64) -> Self {
        PriorSpec::PureHaar {
            atom_count,
            seed,
            symmetrize: false,
        }
    }

    pub fn bures(atom_count: usize, seed: u64) -> Self {
        PriorSpec::Bures {
            atom_count,
            seed,
            symmetrize: false,
        }
    }

    /// Turns on reflection symmetrization for sampled kinds.
    pub fn symmetrized(mut self) -> Self {
        if let Some(flag) = self.symmetrize_flag_mut() {
            *flag = true;
        }
        self
    }

    fn symmetrize_flag_mut(&mut self) -> Option<&mut bool> {
        match self {
            PriorSpec::UniformBall { symmetrize, .. }
            | PriorSpec::PureHaar { symmetrize, .. }
            | PriorSpec::Bures { symmetrize, .. }
            | PriorSpec::IsotropicRadial { symmetrize, .. } => Some(symmetrize),
            PriorSpec::Atoms { .. } => None,
        }
    }

    pub fn is_symmetrized(&self) -> bool {
        matches!(
            self,
            PriorSpec::UniformBall { symmetrize: true, .. }
                | PriorSpec::PureHaar { symmetrize: true, .. }
                | PriorSpec::Bures { symmetrize: true, .. }
                | PriorSpec::IsotropicRadial { symmetrize: true, .. }
        )
    }

    pub fn atom_count(&self) -> usize {
        match self {
            PriorSpec::UniformBall { atom_count, .. }
            | PriorSpec::PureHaar { atom_count, .. }
            | PriorSpec::Bures { atom_count, .. }
            | PriorSpec::IsotropicRadial { atom_count, .. } => *atom_count,
            PriorSpec::Atoms { atoms } => atoms.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atom_count() == 0 {
            return Err(Error::InvalidPrior("atom_count must be at least 1".into()));
        }
        if self.is_symmetrized() && self.atom_count() % REFLECTIONS != 0 {
            return Err(Error::InvalidPrior(format!(
                "symmetrized priors need atom_count divisible by {REFLECTIONS}, got {}",
                self.atom_count()
            )));
        }
        if let PriorSpec::IsotropicRadial { radial_density, .. } = self {
            RadialSampler::new(radial_density)?;
        }
        Ok(())
    }

    /// Replaces the sampling seed, if this kind has one.
    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self {
            PriorSpec::UniformBall { seed, .. }
            | PriorSpec::PureHaar { seed, .. }
            | PriorSpec::Bures { seed, .. }
            | PriorSpec::IsotropicRadial { seed, .. } => *seed = new_seed,
            PriorSpec::Atoms { .. } => {}
        }
        self
    }
}

/// Number of coordinate sign-flip images per draw when symmetrizing.
pub const REFLECTIONS: usize = 8;

/// Expands each point into its eight images under `(x, y, z) → (±x, ±y, ±z)`.
///
/// Every isotropic measure is invariant under these reflections, so the
/// expanded set samples the same measure while reproducing its odd moments
/// exactly.
pub fn reflect_octants(points: &[BlochVector]) -> Vec<BlochVector> {
    let mut out = Vec::with_capacity(points.len() * REFLECTIONS);
    for b in points {
        for mask in 0..REFLECTIONS {
            let sign = |bit: usize| if mask & bit == 0 { 1.0 } else { -1.0 };
            out.push(
                BlochVector::new(sign(4) * b.x(), sign(2) * b.y(), sign(1) * b.z())
                    .expect("reflection preserves the norm"),
            );
        }
    }
    out
}

fn unit_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi: f64 = 2.0 * PI * rng.random::<f64>();
    let rho = (1.0 - z * z).max(0.0).sqrt();
    [rho * phi.cos(), rho * phi.sin(), z]
}

fn scaled(dir: [f64; 3], r: f64) -> BlochVector {
    BlochVector::new(dir[0] * r, dir[1] * r, dir[2] * r).expect("radius within [0, 1]")
}

fn sample_with<F>(count: usize, seed: u64, mut radius: F) -> Vec<BlochVector>
where
    F: FnMut(&mut StreamRng) -> f64,
{
    let mut g = rng::stream(seed, rng::streams::PRIOR);
    (0..count)
        .map(|_| {
            let r = radius(&mut g);
            scaled(unit_direction(&mut g), r)
        })
        .collect()
}

/// I.i.d. points uniform in the closed unit ball.
pub fn sample_bloch_uniform(count: usize, seed: u64) -> Vec<BlochVector> {
    sample_with(count, seed, |g| g.random::<f64>().cbrt())
}

/// I.i.d. points uniform on the unit sphere (pure states).
pub fn sample_pure_haar(count: usize, seed: u64) -> Vec<BlochVector> {
    sample_with(count, seed, |_| 1.0)
}

/// I.i.d. points from the qubit Bures measure, radial density
/// `∝ r²/√(1−r²)`.
pub fn sample_bures(count: usize, seed: u64) -> Vec<BlochVector> {
    sample_with(count, seed, |g| bures_radius(g.random::<f64>()))
}

/// Inverse of the Bures radial CDF. With `r = sin θ` the CDF is
/// `(2θ − sin 2θ)/π` on `θ ∈ [0, π/2]`, solved by bisection.
fn bures_radius(u: f64) -> f64 {
    let cdf = |t: f64| (2.0 * t - (2.0 * t).sin()) / PI;
    let (mut lo, mut hi) = (0.0f64, PI / 2.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).sin().min(1.0)
}

/// Inverse-transform sampler for `r² p(r)` with `p` piecewise linear.
struct RadialSampler {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialSampler {
    const FINE: usize = 4096;

    fn new(density: &[f64]) -> Result<Self> {
        if density.len() < 2 {
            return Err(Error::InvalidPrior(
                "radial density needs at least two grid samples".into(),
            ));
        }
        if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidPrior(
                "radial density must be finite and nonnegative".into(),
            ));
        }
        let step = 1.0 / (density.len() - 1) as f64;
        let p = |r: f64| {
            let pos = (r / step).min((density.len() - 1) as f64);
            let i = (pos.floor() as usize).min(density.len() - 2);
            let t = pos - i as f64;
            density[i] * (1.0 - t) + density[i + 1] * t
        };
        let grid: Vec<f64> = (0..=Self::FINE).map(|i| i as f64 / Self::FINE as f64).collect();
        let mut cdf = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            let (a, b) = (grid[i - 1], grid[i]);
            let m = 0.5 * (a + b);
            // Simpson on each cell.
            let f = |r: f64| r * r * p(r);
            cdf[i] = cdf[i - 1] + (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        }
        let total = *cdf.last().expect("nonempty grid");
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidPrior("radial density is not normalizable".into()));
        }
        for c in &mut cdf {
            *c /= total;
        }
        Ok(Self { grid, cdf })
    }

    fn radius(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (self.grid[i - 1] + t * (self.grid[i] - self.grid[i - 1])).clamp(0.0, 1.0)
    }
}

/// I.i.d. points from an isotropic density sampled on a uniform radial grid.
pub fn sample_isotropic_radial(
    radial_density: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<BlochVector>> {
    let sampler = RadialSampler::new(radial_density)?;
    Ok(sample_with(count, seed, |g| sampler.radius(g.random::<f64>())))
}

/// Discretizes a prior into an ensemble: equal weights for sampled kinds,
/// explicit (normalized) weights for `atoms`.
pub fn discretize_prior(spec: &PriorSpec) -> Result<Ensemble> {
    spec.validate()?;
    let draws = if spec.is_symmetrized() {
        spec.atom_count() / REFLECTIONS
    } else {
        spec.atom_count()
    };
    let points = match spec {
        PriorSpec::UniformBall { seed, .. } => sample_bloch_uniform(draws, *seed),
        PriorSpec::PureHaar { seed, .. } => sample_pure_haar(draws, *seed),
        PriorSpec::Bures { seed, .. } => sample_bures(draws, *seed),
        PriorSpec::IsotropicRadial {
            radial_density,
            seed,
            ..
        } => sample_isotropic_radial(radial_density, draws, *seed)?,
        PriorSpec::Atoms { atoms } => {
            let mut weights = Vec::with_capacity(atoms.len());
            let mut states = Vec::with_capacity(atoms.len());
            for (i, a) in atoms.iter().enumerate() {
                let state = match (&a.bloch, &a.matrix) {
                    (Some(b), None) => density_from_bloch(*b),
                    (None, Some(m)) => m.clone(),
                    _ => {
                        return Err(Error::InvalidPrior(format!(
                            "atom {i} needs exactly one of `bloch` or `matrix`"
                        )))
                    }
                };
                weights.push(a.weight);
                states.push(state);
            }
            return Ensemble::from_unnormalized(weights, states);
        }
    };
    let points = if spec.is_symmetrized() {
        reflect_octants(&points)
    } else {
        points
    };
    let n = points.len();
    Ensemble::from_bloch(vec![1.0; n], &points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchangeable::marginal_state;
    use crate::qstate::trace_distance;

    /// Composite Simpson rule, used as an independent quadrature oracle.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn mean(points: &[BlochVector], f: impl Fn(&BlochVector) -> f64) -> f64 {
        points.iter().map(f).sum::<f64>() / points.len() as f64
    }

    #[test]
    fn quadrature_oracles() {
        // ⟨r²⟩ for the uniform ball: ∫ r² · 3r² dr.
        let ball = simpson(|r| r * r * 3.0 * r * r, 0.0, 1.0, 1000);
        assert!((ball - 0.6).abs() < 1e-10);
        // ⟨z²⟩ on the sphere: ½∫ cos²θ sin θ dθ.
        let z2 = 0.5 * simpson(|t| t.cos().powi(2) * t.sin(), 0.0, PI, 1000);
        assert!((z2 - 1.0 / 3.0).abs() < 1e-10);
        // Bures mean radius, substituting r = sin θ to remove the endpoint singularity.
        let norm = simpson(|t| t.sin().powi(2), 0.0, PI / 2.0, 1000);
        let first = simpson(|t| t.sin().powi(3), 0.0, PI / 2.0, 1000);
        assert!((first / norm - 8.0 / (3.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn uniform_ball_moments() {
        let pts = sample_bloch_uniform(100_000, 1);
        for c in 0..3 {
            assert!(mean(&pts, |b| b.to_array()[c]).abs() < 0.02);
        }
        assert!((mean(&pts, |b| b.norm_squared()) - 0.6).abs() < 0.01);
        assert_eq!(sample_bloch_uniform(50, 9), sample_bloch_uniform(50, 9));
        assert_ne!(sample_bloch_uniform(50, 9), sample_bloch_uniform(50, 10));
    }

    #[test]
    fn pure_haar_moments() {
        let pts = sample_pure_haar(100_000, 2);
        assert!(pts.iter().all(|b| (b.norm() - 1.0).abs() < 1e-12));
        assert!(mean(&pts, |b| b.z()).abs() < 0.02);
        assert!((mean(&pts, |b| b.z() * b.z()) - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn bures_moments() {
        let pts = sample_bures(100_000, 3);
        for c in 0..3 {
            assert!(mean(&pts, |b| b.to_array()[c]).abs() < 0.02);
        }
        assert!((mean(&pts, |b| b.norm()) - 8.0 / (3.0 * PI)).abs() < 0.01);
        assert!(pts.iter().all(|b| (0.0..=1.0).contains(&b.norm())));
    }

    #[test]
    fn isotropic_radial_matches_uniform_ball_for_flat_density() {
        let pts = sample_isotropic_radial(&[1.0, 1.0], 100_000, 4).unwrap();
        assert!((mean(&pts, |b| b.norm_squared()) - 0.6).abs() < 0.01);
        // p(r) ∝ 1 − r: ⟨r⟩ = ∫ r³(1−r) / ∫ r²(1−r) = (1/20)/(1/12) = 0.6.
        let pts = sample_isotropic_radial(&[1.0, 0.0], 100_000, 4).unwrap();
        assert!((mean(&pts, |b| b.norm()) - 0.6).abs() < 0.01);
    }

    #[test]
    fn invalid_priors() {
        let bad = PriorSpec::IsotropicRadial {
            radial_density: vec![0.0, 0.0, 0.0],
            atom_count: 10,
            seed: 0,
            symmetrize: false,
        };
        assert!(matches!(discretize_prior(&bad), Err(Error::InvalidPrior(_))));
        let neg = PriorSpec::IsotropicRadial {
            radial_density: vec![1.0, -1.0],
            atom_count: 10,
            seed: 0,
            symmetrize: false,
        };
        assert!(discretize_prior(&neg).is_err());
        let empty = PriorSpec::uniform_ball(0, 0);
        assert!(discretize_prior(&empty).is_err());
    }

    #[test]
    fn discretize_examples() {
        let single = PriorSpec::Atoms {
            atoms: vec![AtomSpec {
                weight: 1.0,
                bloch: Some(BlochVector::origin()),
                matrix: None,
            }],
        };
        let e = discretize_prior(&single).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.weights(), &[1.0]);

        let half = DensityOperator::maximally_mixed(2);
        for spec in [
            PriorSpec::uniform_ball(10_000, 5),
            PriorSpec::pure_haar(10_000, 5),
        ] {
            let e = discretize_prior(&spec).unwrap();
            assert_eq!(e.len(), 10_000);
            assert!((e.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(trace_distance(&marginal_state(&e), &half).unwrap() < 0.02);
        }
    }

    #[test]
    fn isotropic_marginal_statistical_bound() {
        let half = DensityOperator::maximally_mixed(2);
        for n in [1_000usize, 10_000] {
            for spec in [
                PriorSpec::uniform_ball(n, 21),
                PriorSpec::pure_haar(n, 21),
                PriorSpec::bures(n, 21),
            ] {
                let d = trace_distance(&marginal_state(&discretize_prior(&spec).unwrap()), &half).unwrap();
                assert!(d < 3.0 / (n as f64).sqrt(), "{spec:?}: {d}");
            }
        }
    }

    #[test]
    fn symmetrized_priors_have_exact_odd_moments() {
        let spec = PriorSpec::uniform_ball(8_000, 13).symmetrized();
        let e = discretize_prior(&spec).unwrap();
        assert_eq!(e.len(), 8_000);
        let m = marginal_state(&e);
        assert!(trace_distance(&m, &DensityOperator::maximally_mixed(2)).unwrap() < 1e-13);
        let r2 = e.states().iter().map(|r| crate::qstate::bloch_from_density(r).unwrap().norm_squared()).sum::<f64>() / 8_000.0;
        assert!((r2 - 0.6).abs() < 0.02);
        assert!(matches!(
            discretize_prior(&PriorSpec::bures(12, 1).symmetrized()),
            Err(Error::InvalidPrior(_))
        ));
        let json: PriorSpec =
            serde_json::from_str(r#"{"kind":"bures","atom_count":16,"seed":1,"symmetrize":true}"#).unwrap();
        assert!(json.is_symmetrized());
    }

    #[test]
    fn discretization_is_deterministic() {
        let spec = PriorSpec::bures(200, 77);
        let a = discretize_prior(&spec).unwrap();
        let b = discretize_prior(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_json_shape() {
        let spec: PriorSpec =
            serde_json::from_str(r#"{"kind":"uniform-ball","atom_count":10,"seed":3}"#).unwrap();
        assert_eq!(spec, PriorSpec::uniform_ball(10, 3));
        let spec: PriorSpec = serde_json::from_str(
            r#"{"kind":"atoms","atoms":[{"weight":0.5,"bloch":[1,0,0]},{"weight":0.5,"bloch":[-1,0,0]}]}"#,
        )
        .unwrap();
        assert_eq!(discretize_prior(&spec).unwrap().len(), 2);
        assert!(serde_json::from_str::<PriorSpec>(r#"{"kind":"jeffreys","atom_count":1,"seed":1}"#).is_err());
    }
}
