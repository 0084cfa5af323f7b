//! Short-range models, the Wannier-displacement model and force assembly.
//!
//! Every short-range term is atom-centred: `E_i` depends on the
//! displacements `r_ij = R_j - R_i` of neighbours within the cutoff, and its
//! gradient with respect to `R_i` is minus the sum of the neighbour gradients.

mod mlp;
mod pair;
mod wannier;

use serde::{Deserialize, Serialize};

pub use mlp::{ToyMlp, ToyMlpSpec};
pub use pair::{switch, PairAnalytic, SpeciesPair};
pub use wannier::{mat_vec, vjp, Mat3, WannierModel};

use crate::domain::LocalView;
use crate::electrostatics::{ChargeSet, LongRange};
use crate::error::PotentialError;
use crate::geometry::Vec3;
use crate::neighbor::NeighborList;
use crate::system::{Species, System};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShortRangeSpec {
    PairAnalytic(PairAnalytic),
    ToyMlp(ToyMlpSpec),
}

impl ShortRangeSpec {
    pub fn cutoff(&self) -> f64 {
        match self {
            Self::PairAnalytic(p) => p.r_c,
            Self::ToyMlp(s) => s.r_c,
        }
    }

    pub fn build(&self) -> Result<ShortRangeModel, PotentialError> {
        Ok(match self {
            Self::PairAnalytic(p) => {
                p.validate()?;
                ShortRangeModel::PairAnalytic(p.clone())
            }
            Self::ToyMlp(s) => ShortRangeModel::ToyMlp(ToyMlp::new(s.clone())?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ShortRangeModel {
    PairAnalytic(PairAnalytic),
    ToyMlp(ToyMlp),
}

impl ShortRangeModel {
    pub fn cutoff(&self) -> f64 {
        match self {
            Self::PairAnalytic(p) => p.r_c,
            Self::ToyMlp(m) => m.cutoff(),
        }
    }

    /// Relative cost of one centre atom with `n` neighbours.
    pub fn cost(&self, n: usize) -> f64 {
        match self {
            Self::PairAnalytic(_) => n as f64,
            Self::ToyMlp(m) => (m.flops_per_atom() + 16 * n) as f64,
        }
    }

    /// `E_i`, writing `∂E_i/∂r_ij` into `grad`.
    pub fn atom_terms(&self, si: Species, nbrs: &[(Species, Vec3)], grad: &mut Vec<Vec3>) -> f64 {
        match self {
            Self::PairAnalytic(p) => {
                grad.clear();
                let mut e = 0.0;
                for &(sj, d) in nbrs {
                    let r = d.norm();
                    let (phi, dphi) = p.eval(si, sj, r);
                    e += 0.5 * phi;
                    grad.push(if r > 0.0 { d * (0.5 * dphi / r) } else { Vec3::ZERO });
                }
                e
            }
            Self::ToyMlp(m) => m.atom_terms(si, nbrs, grad),
        }
    }
}

/// One centre atom's energy and its gradients per neighbour.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomTerm {
    pub atom: usize,
    pub energy: f64,
    pub neighbors: Vec<usize>,
    /// `∂E_i/∂R_j` for each entry of `neighbors`.
    pub grad: Vec<Vec3>,
}

/// Neighbours of `i` within `cutoff` (by minimum image) taken from
/// `candidates`, which must be sorted by atom index.
fn centre_inputs(system: &System, i: usize, candidates: impl Iterator<Item = usize>, cutoff: f64) -> (Vec<usize>, Vec<(Species, Vec3)>) {
    let b = &system.sim_box;
    let pi = system.atoms[i].position;
    let c2 = cutoff * cutoff;
    let mut idx = Vec::new();
    let mut inp = Vec::new();
    for j in candidates {
        let d = b.min_image(system.atoms[j].position - pi);
        if d.norm2() < c2 {
            idx.push(j);
            inp.push((system.atoms[j].species, d));
        }
    }
    (idx, inp)
}

/// Term for atom `i` from neighbour candidates sorted by index.
pub fn atom_term_from(system: &System, model: &ShortRangeModel, i: usize, candidates: impl Iterator<Item = usize>) -> AtomTerm {
    let (neighbors, inp) = centre_inputs(system, i, candidates, model.cutoff());
    let mut grad = Vec::with_capacity(inp.len());
    let energy = model.atom_terms(system.atoms[i].species, &inp, &mut grad);
    AtomTerm {
        atom: i,
        energy,
        neighbors,
        grad,
    }
}

/// Forces from atom terms, accumulated in the order given.
pub fn accumulate_forces(terms: &[AtomTerm], n_atoms: usize) -> Vec<Vec3> {
    let mut f = vec![Vec3::ZERO; n_atoms];
    for t in terms {
        let mut centre = Vec3::ZERO;
        for (&j, &g) in t.neighbors.iter().zip(&t.grad) {
            centre += g;
            f[j] -= g;
        }
        f[t.atom] += centre;
    }
    f
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShortRange {
    pub energy: f64,
    pub per_atom: Vec<f64>,
    /// `-∂E_sr/∂R`.
    pub forces: Vec<Vec3>,
    pub terms: Vec<AtomTerm>,
}

impl ShortRange {
    pub fn from_terms(mut terms: Vec<AtomTerm>, n_atoms: usize) -> Self {
        terms.sort_by_key(|t| t.atom);
        let per_atom: Vec<f64> = terms.iter().map(|t| t.energy).collect();
        Self {
            energy: per_atom.iter().sum(),
            forces: accumulate_forces(&terms, n_atoms),
            per_atom,
            terms,
        }
    }
}

fn check_list(system: &System, nl: &NeighborList, cutoff: f64) -> Result<(), PotentialError> {
    if nl.neighbors.len() != system.n_atoms() {
        return Err(PotentialError::Shape(format!(
            "neighbour list has {} atoms, system {}",
            nl.neighbors.len(),
            system.n_atoms()
        )));
    }
    if cutoff > nl.cutoff {
        return Err(PotentialError::Params(format!(
            "model cutoff {cutoff} exceeds neighbour-list cutoff {}",
            nl.cutoff
        )));
    }
    Ok(())
}

pub fn short_range(system: &System, nl: &NeighborList, model: &ShortRangeModel) -> Result<ShortRange, PotentialError> {
    check_list(system, nl, model.cutoff())?;
    let terms = (0..system.n_atoms())
        .map(|i| atom_term_from(system, model, i, nl.neighbors[i].iter().map(|n| n.index)))
        .collect();
    Ok(ShortRange::from_terms(terms, system.n_atoms()))
}

/// Terms for the listed view entries, evaluated from what the view holds.
pub fn short_range_view(system: &System, view: &LocalView, model: &ShortRangeModel, entries: &[usize]) -> Vec<AtomTerm> {
    entries
        .iter()
        .map(|&k| {
            let cand: Vec<usize> = view.neighbors_of(k, model.cutoff()).iter().map(|&e| view.entries[e].atom).collect();
            atom_term_from(system, model, view.entries[k].atom, cand.into_iter())
        })
        .collect()
}

/// All local atoms of a view.
pub fn short_range_node(system: &System, view: &LocalView, model: &ShortRangeModel) -> Vec<AtomTerm> {
    let local: Vec<usize> = (0..view.n_local).collect();
    short_range_view(system, view, model, &local)
}

/// One centroid's displacement and the Jacobian blocks `∂Δ/∂R_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DwTerm {
    pub wc: usize,
    pub atom: usize,
    pub delta: Vec3,
    pub neighbors: Vec<usize>,
    pub jac: Vec<Mat3>,
}

pub fn dw_term(system: &System, model: &WannierModel, wc: usize, atom: usize, candidates: impl Iterator<Item = usize>) -> DwTerm {
    let (neighbors, inp) = centre_inputs(system, atom, candidates, model.r_c);
    let disp: Vec<Vec3> = inp.iter().map(|p| p.1).collect();
    DwTerm {
        wc,
        atom,
        delta: model.forward(&disp),
        neighbors,
        jac: model.jacobian(&disp),
    }
}

fn check_binding(system: &System, binding: &[usize]) -> Result<(), PotentialError> {
    if binding.len() != system.wcs.len() {
        return Err(PotentialError::Shape(format!(
            "{} binding atoms for {} centroids",
            binding.len(),
            system.wcs.len()
        )));
    }
    match binding
        .iter()
        .find(|&&i| i >= system.n_atoms() || !system.atoms[i].species.binds_wc())
    {
        Some(&i) => Err(PotentialError::NotBinding(i)),
        None => Ok(()),
    }
}

/// `Δ_n` for every centroid.
pub fn dw_forward(system: &System, nl: &NeighborList, model: &WannierModel, binding: &[usize]) -> Result<Vec<Vec3>, PotentialError> {
    check_list(system, nl, model.r_c)?;
    check_binding(system, binding)?;
    Ok(binding
        .iter()
        .map(|&i| {
            let (_, inp) = centre_inputs(system, i, nl.neighbors[i].iter().map(|x| x.index), model.r_c);
            model.forward(&inp.iter().map(|p| p.1).collect::<Vec<_>>())
        })
        .collect())
}

pub fn dw_jacobians(system: &System, nl: &NeighborList, model: &WannierModel, binding: &[usize]) -> Result<Vec<DwTerm>, PotentialError> {
    check_list(system, nl, model.r_c)?;
    check_binding(system, binding)?;
    Ok(binding
        .iter()
        .enumerate()
        .map(|(n, &i)| dw_term(system, model, n, i, nl.neighbors[i].iter().map(|x| x.index)))
        .collect())
}

/// `-Σ_n g_nᵀ ∂Δ_n/∂R` for upstream gradients `g_n = ∂E/∂W_n`.
pub fn dw_backward(terms: &[DwTerm], g: &[Vec3], n_atoms: usize) -> Result<Vec<Vec3>, PotentialError> {
    if terms.len() != g.len() {
        return Err(PotentialError::Shape(format!(
            "{} gradients for {} centroids",
            g.len(),
            terms.len()
        )));
    }
    let mut f = vec![Vec3::ZERO; n_atoms];
    for (t, &gn) in terms.iter().zip(g) {
        let (centre, per) = vjp(&t.jac, gn);
        for (&j, c) in t.neighbors.iter().zip(per) {
            f[j] += c;
        }
        f[t.atom] += centre;
    }
    Ok(f)
}

/// Inputs to force assembly. Short-range and chain-rule entries are forces;
/// the long-range entries are gradients as returned by the solvers.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForceTerms<'a> {
    pub short_range: Option<&'a [Vec3]>,
    pub long_range_ion_grad: Option<&'a [Vec3]>,
    pub long_range_wc_grad: Option<&'a [Vec3]>,
    pub chain_rule: Option<&'a [Vec3]>,
    pub binding: &'a [usize],
}

/// Per-atom forces by term; `total` is their sum in field order.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceBreakdown {
    pub short_range: Vec<Vec3>,
    pub long_range_direct: Vec<Vec3>,
    pub long_range_wc: Vec<Vec3>,
    pub chain_rule: Vec<Vec3>,
    pub total: Vec<Vec3>,
}

pub fn assemble_forces(terms: &ForceTerms<'_>, n_atoms: usize) -> Result<ForceBreakdown, PotentialError> {
    let sr = terms.short_range.ok_or(PotentialError::MissingTerm("short_range"))?;
    let ion = terms.long_range_ion_grad.ok_or(PotentialError::MissingTerm("long_range_ion"))?;
    let wc = terms.long_range_wc_grad.ok_or(PotentialError::MissingTerm("long_range_wc"))?;
    let chain = terms.chain_rule.ok_or(PotentialError::MissingTerm("chain_rule"))?;
    for (name, len) in [
        ("short_range", sr.len()),
        ("long_range_ion", ion.len()),
        ("chain_rule", chain.len()),
    ] {
        if len != n_atoms {
            return Err(PotentialError::Shape(format!("{name} has {len} entries for {n_atoms} atoms")));
        }
    }
    if wc.len() != terms.binding.len() {
        return Err(PotentialError::Shape(format!(
            "{} centroid gradients for {} bindings",
            wc.len(),
            terms.binding.len()
        )));
    }
    let mut wc_force = vec![Vec3::ZERO; n_atoms];
    for (&i, &g) in terms.binding.iter().zip(wc) {
        if i >= n_atoms {
            return Err(PotentialError::NotBinding(i));
        }
        wc_force[i] -= g;
    }
    let direct: Vec<Vec3> = ion.iter().map(|&g| -g).collect();
    let total = (0..n_atoms).map(|i| sr[i] + direct[i] + wc_force[i] + chain[i]).collect();
    Ok(ForceBreakdown {
        short_range: sr.to_vec(),
        long_range_direct: direct,
        long_range_wc: wc_force,
        chain_rule: chain.to_vec(),
        total,
    })
}

/// Energies, centroid displacements and forces for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub e_sr: f64,
    pub e_gt: f64,
    pub deltas: Vec<Vec3>,
    pub short_range: ShortRange,
    pub forces: ForceBreakdown,
}

impl Evaluation {
    pub fn energy(&self) -> f64 {
        self.e_sr + self.e_gt
    }
}

/// Full serial evaluation; `long_range` maps a charge set to energy and gradient.
pub fn evaluate<E>(
    system: &System,
    nl: &NeighborList,
    sr_model: &ShortRangeModel,
    dw_model: &WannierModel,
    long_range: impl FnOnce(&ChargeSet) -> Result<LongRange, E>,
) -> crate::Result<Evaluation>
where
    crate::Error: From<E>,
{
    let binding = system.wc_binding_indices()?;
    let sr = short_range(system, nl, sr_model)?;
    let dw = dw_jacobians(system, nl, dw_model, &binding)?;
    let deltas: Vec<Vec3> = dw.iter().map(|t| t.delta).collect();
    let wc_pos: Vec<Vec3> = binding.iter().zip(&deltas).map(|(&i, &d)| system.atoms[i].position + d).collect();
    let charges = ChargeSet::from_system(system, &wc_pos);
    let lr = long_range(&charges)?;
    let n = system.n_atoms();
    let chain = dw_backward(&dw, lr.wc_grad(n), n)?;
    let forces = assemble_forces(
        &ForceTerms {
            short_range: Some(&sr.forces),
            long_range_ion_grad: Some(lr.ion_grad(n)),
            long_range_wc_grad: Some(lr.wc_grad(n)),
            chain_rule: Some(&chain),
            binding: &binding,
        },
        n,
    )?;
    Ok(Evaluation {
        e_sr: sr.energy,
        e_gt: lr.energy,
        deltas,
        short_range: sr,
        forces,
    })
}
