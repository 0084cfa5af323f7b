use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::PotentialError;
use crate::geometry::Vec3;
use crate::system::Species;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyMlpSpec {
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_radial")]
    pub n_radial: usize,
    pub r_c: f64,
    #[serde(default)]
    pub seed: u64,
    /// Output scale, energy units per atom.
    #[serde(default = "default_scale")]
    pub energy_scale: f64,
}

fn default_widths() -> Vec<usize> {
    vec![32, 32, 32]
}

fn default_radial() -> usize {
    8
}

fn default_scale() -> f64 {
    1e-3
}

impl ToyMlpSpec {
    pub fn new(r_c: f64, seed: u64) -> Self {
        Self {
            widths: default_widths(),
            n_radial: default_radial(),
            r_c,
            seed,
            energy_scale: default_scale(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out × n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Radial-descriptor network: per neighbour species, Gaussian shells damped
/// by `(1 - (r/r_c)²)³`; tanh hidden layers; linear scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyMlp {
    spec: ToyMlpSpec,
    centers: Vec<f64>,
    eta: f64,
    layers: Vec<Layer>,
}

impl ToyMlp {
    pub fn new(spec: ToyMlpSpec) -> Result<Self, PotentialError> {
        if spec.n_radial == 0 || !(spec.r_c > 0.0) || spec.widths.contains(&0) {
            return Err(PotentialError::Params(
                "toy_mlp needs n_radial >= 1, r_c > 0, nonzero widths".into(),
            ));
        }
        let k = spec.n_radial;
        let centers: Vec<f64> = (0..k).map(|i| 0.8 + (spec.r_c - 0.8) * i as f64 / k as f64).collect();
        let spacing = (spec.r_c - 0.8) / k as f64;
        let eta = 1.0 / (spacing * spacing);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut dims = vec![2 * k + 2];
        dims.extend(&spec.widths);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, 1.0 / (w[0] as f64).sqrt()).expect("finite sigma");
                Layer {
                    n_in: w[0],
                    n_out: w[1],
                    w: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                    b: (0..w[1]).map(|_| 0.1 * normal.sample(&mut rng)).collect(),
                }
            })
            .collect();
        Ok(Self {
            spec,
            centers,
            eta,
            layers,
        })
    }

    pub fn cutoff(&self) -> f64 {
        self.spec.r_c
    }

    /// Multiply-adds per centre atom, for cost accounting.
    pub fn flops_per_atom(&self) -> usize {
        self.layers.iter().map(|l| l.n_in * l.n_out).sum()
    }

    fn radial(&self, r: f64) -> Vec<(f64, f64)> {
        let rc = self.spec.r_c;
        if r >= rc {
            return vec![(0.0, 0.0); self.centers.len()];
        }
        let t = 1.0 - (r / rc).powi(2);
        let fc = t * t * t;
        let dfc = -6.0 * r / (rc * rc) * t * t;
        self.centers
            .iter()
            .map(|&mu| {
                let g = (-self.eta * (r - mu).powi(2)).exp();
                let dg = -2.0 * self.eta * (r - mu) * g;
                (fc * g, dfc * g + fc * dg)
            })
            .collect()
    }

    /// `E_i` and `∂E_i/∂r_ij` for neighbour displacements `r_ij = R_j - R_i`.
    pub fn atom_terms(&self, si: Species, nbrs: &[(Species, Vec3)], grad: &mut Vec<Vec3>) -> f64 {
        let k = self.centers.len();
        let mut x = vec![0.0; 2 * k + 2];
        x[2 * k + usize::from(si == Species::H)] = 1.0;
        let mut radial = Vec::with_capacity(nbrs.len());
        for &(sj, d) in nbrs {
            let r = d.norm();
            let off = if sj == Species::O { 0 } else { k };
            let rad = self.radial(r);
            for (c, &(v, _)) in rad.iter().enumerate() {
                x[off + c] += v;
            }
            radial.push((off, r, rad));
        }
        // forward, keeping activations
        let mut acts = vec![x];
        for (li, layer) in self.layers.iter().enumerate() {
            let inp = acts.last().expect("input");
            let mut out = layer.b.clone();
            for (o, v) in out.iter_mut().enumerate() {
                *v += layer.w[o * layer.n_in..(o + 1) * layer.n_in]
                    .iter()
                    .zip(inp)
                    .map(|(w, a)| w * a)
                    .sum::<f64>();
            }
            if li + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        let energy = self.spec.energy_scale * acts.last().expect("output")[0];
        // backward
        let mut delta = vec![self.spec.energy_scale];
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let mut prev = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                for (i, p) in prev.iter_mut().enumerate() {
                    *p += layer.w[o * layer.n_in + i] * d;
                }
            }
            if li > 0 {
                for (p, a) in prev.iter_mut().zip(&acts[li]) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        grad.clear();
        for (&(_, d), (off, r, rad)) in nbrs.iter().zip(&radial) {
            if *r >= self.spec.r_c || *r == 0.0 {
                grad.push(Vec3::ZERO);
                continue;
            }
            let de_dr: f64 = rad.iter().enumerate().map(|(c, &(_, dv))| delta[off + c] * dv).sum();
            grad.push(d * (de_dr / r));
        }
        energy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample(seed: u64) -> Vec<(Species, Vec3)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..12)
            .map(|i| {
                let s = if i % 3 == 0 { Species::O } else { Species::H };
                (
                    s,
                    Vec3::new(
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                    ),
                )
            })
            .collect()
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let m = ToyMlp::new(ToyMlpSpec::new(4.0, 7)).unwrap();
        let nbrs = sample(1);
        let mut g = Vec::new();
        m.atom_terms(Species::O, &nbrs, &mut g);
        let h = 1e-6;
        let mut scratch = Vec::new();
        for j in 0..nbrs.len() {
            for d in 0..3 {
                let mut p = nbrs.clone();
                p[j].1[d] += h;
                let mut q = nbrs.clone();
                q[j].1[d] -= h;
                let fd = (m.atom_terms(Species::O, &p, &mut scratch) - m.atom_terms(Species::O, &q, &mut scratch)) / (2.0 * h);
                assert!((fd - g[j][d]).abs() <= 1e-6 * m.spec.energy_scale.max(1e-3), "{fd} vs {}", g[j][d]);
            }
        }
    }

    #[test]
    fn deterministic_for_seed_and_zero_when_isolated() {
        let a = ToyMlp::new(ToyMlpSpec::new(4.0, 3)).unwrap();
        let b = ToyMlp::new(ToyMlpSpec::new(4.0, 3)).unwrap();
        assert_eq!(a, b);
        let mut g = Vec::new();
        let nbrs = sample(2);
        assert_eq!(a.atom_terms(Species::H, &nbrs, &mut g), b.atom_terms(Species::H, &nbrs, &mut g));
        let far = [(Species::O, Vec3::new(4.5, 0.0, 0.0))];
        a.atom_terms(Species::H, &far, &mut g);
        assert_eq!(g, vec![Vec3::ZERO]);
    }
}
