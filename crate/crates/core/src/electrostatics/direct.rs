//! Exact k-space sum over the truncated mode set; the oracle for PPPM.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{ChargeSet, EwaldParams, LongRange};
use crate::geometry::{SimulationBox, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMode {
    pub n: [i32; 3],
    /// `m = n / box lengths`, 1/Å.
    pub m: Vec3,
    /// `exp(-π²m²/β²)/m²`.
    pub green: f64,
}

/// All `m ≠ 0` with `|m| ≤ L`, both signs included.
pub fn k_modes(sim_box: &SimulationBox, params: &EwaldParams) -> Vec<KMode> {
    let l = sim_box.lengths();
    let lc = params.k_cutoff;
    let nmax: [i32; 3] = std::array::from_fn(|d| (lc * l[d]).floor() as i32);
    let mut out = Vec::new();
    for nz in -nmax[2]..=nmax[2] {
        for ny in -nmax[1]..=nmax[1] {
            for nx in -nmax[0]..=nmax[0] {
                if nx == 0 && ny == 0 && nz == 0 {
                    continue;
                }
                let m = Vec3::new(nx as f64 / l[0], ny as f64 / l[1], nz as f64 / l[2]);
                let m2 = m.norm2();
                if m2 <= lc * lc {
                    out.push(KMode {
                        n: [nx, ny, nz],
                        m,
                        green: params.green(m2),
                    });
                }
            }
        }
    }
    out
}

/// `S(m) = Σ q e^{-2πi m·r}`.
pub fn structure_factor(m: Vec3, charges: &ChargeSet) -> Complex64 {
    charges
        .positions
        .iter()
        .zip(&charges.charges)
        .map(|(&r, &q)| Complex64::from_polar(q, -2.0 * PI * m.dot(r)))
        .sum()
}

pub fn ewald_energy_direct(charges: &ChargeSet, sim_box: &SimulationBox, params: &EwaldParams) -> f64 {
    let pref = 1.0 / (2.0 * PI * sim_box.volume());
    pref * k_modes(sim_box, params)
        .iter()
        .map(|k| k.green * structure_factor(k.m, charges).norm_sqr())
        .sum::<f64>()
}

/// Energy and `∂E/∂r` for every charge, via `∂|S|²/∂r = 2 Re(S* ∂S/∂r)`.
pub fn ewald_forces_direct(charges: &ChargeSet, sim_box: &SimulationBox, params: &EwaldParams) -> LongRange {
    let pref = 1.0 / (2.0 * PI * sim_box.volume());
    let modes = k_modes(sim_box, params);
    let mut energy = 0.0;
    let mut grad = vec![Vec3::ZERO; charges.len()];
    let mut phases = vec![Complex64::new(0.0, 0.0); charges.len()];
    for k in &modes {
        let mut s = Complex64::new(0.0, 0.0);
        for (ph, (&r, &q)) in phases.iter_mut().zip(charges.positions.iter().zip(&charges.charges)) {
            *ph = Complex64::from_polar(q, -2.0 * PI * k.m.dot(r));
            s += *ph;
        }
        energy += k.green * s.norm_sqr();
        for (g, ph) in grad.iter_mut().zip(&phases) {
            // ∂S/∂r = -2πi m q e^{-2πi m·r}
            let c = (s.conj() * *ph * Complex64::new(0.0, -2.0 * PI)).re;
            *g += k.m * (2.0 * pref * k.green * c);
        }
    }
    LongRange {
        energy: pref * energy,
        grad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_water_box, WaterBoxSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(pos: &[Vec3], q: &[f64]) -> ChargeSet {
        ChargeSet {
            positions: pos.to_vec(),
            charges: q.to_vec(),
            n_ions: pos.len(),
        }
    }

    fn water_charges(n: usize, edge: f64, seed: u64) -> (ChargeSet, SimulationBox) {
        let sys = generate_water_box(&WaterBoxSpec::new(n, edge), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let binding = sys.wc_binding_indices().unwrap();
        // displaced centroids so the WC terms are exercised
        let wc: Vec<Vec3> = binding
            .iter()
            .map(|&i| {
                sys.atoms[i].position
                    + Vec3::new(
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                    )
            })
            .collect();
        (ChargeSet::from_system(&sys, &wc), sys.sim_box)
    }

    // double-double accumulation of one component
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    #[test]
    fn empty_and_unit_charge() {
        let m = Vec3::new(0.1, -0.2, 0.3);
        assert_eq!(structure_factor(m, &set(&[], &[])), Complex64::new(0.0, 0.0));
        let s = structure_factor(m, &set(&[Vec3::ZERO], &[1.0]));
        assert_eq!(s, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn structure_factor_matches_compensated_sum() {
        let (cs, b) = water_charges(32, 9.85, 2);
        let p = EwaldParams::new(0.3, [16; 3]);
        for k in k_modes(&b, &p).iter().step_by(7) {
            let s = structure_factor(k.m, &cs);
            let (mut re, mut re_lo, mut im, mut im_lo) = (0.0, 0.0, 0.0, 0.0);
            for (r, q) in cs.positions.iter().zip(&cs.charges) {
                let ph = -2.0 * PI * (k.m[0] * r[0] + k.m[1] * r[1] + k.m[2] * r[2]);
                let (s1, e1) = two_sum(re, q * ph.cos());
                re = s1;
                re_lo += e1;
                let (s2, e2) = two_sum(im, q * ph.sin());
                im = s2;
                im_lo += e2;
            }
            let oracle = Complex64::new(re + re_lo, im + im_lo);
            assert!((s - oracle).norm() <= 1e-13 * cs.charges.iter().map(|q| q.abs()).sum::<f64>());
            let sm = structure_factor(-k.m, &cs);
            assert!((sm - s.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_charges_and_quadratic_scaling() {
        let (mut cs, b) = water_charges(16, 9.0, 4);
        let p = EwaldParams::new(0.3, [16; 3]);
        let e1 = ewald_energy_direct(&cs, &b, &p);
        cs.charges.iter_mut().for_each(|q| *q *= 2.0);
        let e2 = ewald_energy_direct(&cs, &b, &p);
        assert_eq!(e2, 4.0 * e1);
        cs.charges.iter_mut().for_each(|q| *q = 0.0);
        let z = ewald_forces_direct(&cs, &b, &p);
        assert_eq!(z.energy, 0.0);
        assert!(z.grad.iter().all(|g| *g == Vec3::ZERO));
    }

    #[test]
    fn gaussian_pair_matches_textbook_sum() {
        let b = SimulationBox::cubic(12.0).unwrap();
        let p = EwaldParams::new(0.35, [16; 3]);
        let d = Vec3::new(1.3, -0.4, 2.2);
        let a = Vec3::new(3.0, 4.0, 5.0);
        let cs = set(&[a, a + d], &[1.5, -1.5]);
        // (2π/V) Σ_k e^{-k²/4β²}/k² |S(k)|², k = 2πn/L; |S|² = 2q²(1 - cos k·d)
        let lk = 2.0 * PI * p.k_cutoff;
        let nmax = (p.k_cutoff * 12.0).floor() as i32;
        let mut e = 0.0;
        for nx in -nmax..=nmax {
            for ny in -nmax..=nmax {
                for nz in -nmax..=nmax {
                    let k = Vec3::new(nx as f64, ny as f64, nz as f64) * (2.0 * PI / 12.0);
                    let k2 = k.norm2();
                    if k2 == 0.0 || k2 > lk * lk {
                        continue;
                    }
                    e += (-k2 / (4.0 * 0.35 * 0.35)).exp() / k2 * 2.0 * 1.5 * 1.5 * (1.0 - k.dot(d).cos());
                }
            }
        }
        e *= 2.0 * PI / b.volume();
        let got = ewald_energy_direct(&cs, &b, &p);
        assert!(((got - e) / e).abs() < 1e-10, "{got} vs {e}");
    }

    #[test]
    fn mirror_pair_forces_are_opposite() {
        let b = SimulationBox::cubic(10.0).unwrap();
        let p = EwaldParams::new(0.4, [16; 3]);
        let c = Vec3::new(5.0, 5.0, 5.0);
        let d = Vec3::new(0.7, 0.2, -0.3);
        let r = ewald_forces_direct(&set(&[c + d, c - d], &[1.0, -1.0]), &b, &p);
        assert!((r.grad[0] + r.grad[1]).max_abs() < 1e-14);
        assert!(r.grad[0].max_abs() > 1e-4);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (cs, b) = water_charges(8, 8.0, 9);
        let p = EwaldParams::new(0.3, [16; 3]);
        let r = ewald_forces_direct(&cs, &b, &p);
        assert!((r.energy - ewald_energy_direct(&cs, &b, &p)).abs() < 1e-12 * r.energy.abs());
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in (0..cs.len()).step_by(3) {
            for d in 0..3 {
                let mut plus = cs.clone();
                plus.positions[i][d] += h;
                let mut minus = cs.clone();
                minus.positions[i][d] -= h;
                let fd = (ewald_energy_direct(&plus, &b, &p) - ewald_energy_direct(&minus, &b, &p)) / (2.0 * h);
                worst = worst.max((fd - r.grad[i][d]).abs());
            }
        }
        assert!(worst <= 1e-6, "worst {worst}");
    }
}
