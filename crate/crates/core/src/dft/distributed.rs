use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Direction, TwiddleMatrix};
use crate::error::{DftError, NetError};
use crate::simnet::{
    configure_chains, quantize_pack, unpack_dequantize, ChainPayload, Fixed64Spec, Network, PayloadMode, QuantSpec, ReduceOp,
};

/// Smallest brick edge a node may hold along any axis.
pub const MIN_BRICK_POINTS: usize = 4;

/// Exponent offset of the one-hot amplitude encoding.
const EXP_BIAS: i32 = 128;
const EXP_BITS: i32 = 384;

fn split(n: usize, parts: usize) -> Vec<Range<usize>> {
    let (q, r) = (n / parts, n % parts);
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let len = q + usize::from(p < r);
            let out = start..start + len;
            start += len;
            out
        })
        .collect()
}

/// Real-space mesh split into one brick per node; the spectrum keeps the
/// same brick layout.
#[derive(Clone, Debug, PartialEq)]
pub struct KGrid {
    mesh: [usize; 3],
    node_grid: [usize; 3],
    ranges: [Vec<Range<usize>>; 3],
}

impl KGrid {
    pub fn new(mesh: [usize; 3], node_grid: [usize; 3]) -> Result<Self, DftError> {
        Self::with_min_points(mesh, node_grid, MIN_BRICK_POINTS)
    }

    pub fn with_min_points(mesh: [usize; 3], node_grid: [usize; 3], min: usize) -> Result<Self, DftError> {
        if (0..3).any(|d| node_grid[d] == 0 || mesh[d] < node_grid[d] * min.max(1)) {
            return Err(DftError::BrickTooSmall {
                mesh,
                grid: node_grid,
                min,
            });
        }
        Ok(Self {
            mesh,
            node_grid,
            ranges: std::array::from_fn(|d| split(mesh[d], node_grid[d])),
        })
    }

    pub fn mesh(&self) -> [usize; 3] {
        self.mesh
    }

    pub fn node_grid(&self) -> [usize; 3] {
        self.node_grid
    }

    pub fn n_nodes(&self) -> usize {
        self.node_grid.iter().product()
    }

    pub fn total_points(&self) -> usize {
        self.mesh.iter().product()
    }

    pub fn node_coords(&self, n: usize) -> [usize; 3] {
        let g = self.node_grid;
        [n % g[0], (n / g[0]) % g[1], n / (g[0] * g[1])]
    }

    pub fn node_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.node_grid[0] * (c[1] + self.node_grid[1] * c[2])
    }

    pub fn ranges(&self, node: usize) -> [Range<usize>; 3] {
        let c = self.node_coords(node);
        std::array::from_fn(|d| self.ranges[d][c[d]].clone())
    }

    pub fn brick_dims(&self, node: usize) -> [usize; 3] {
        self.ranges(node).map(|r| r.len())
    }

    pub fn brick_points(&self, node: usize) -> usize {
        self.brick_dims(node).iter().product()
    }

    /// Node owning global mesh point `g`.
    pub fn owner_of(&self, g: [usize; 3]) -> usize {
        let c = std::array::from_fn(|d| self.ranges[d].iter().position(|r| r.contains(&g[d])).expect("point on mesh"));
        self.node_index(c)
    }

    /// Brick-local flat offset of global point `g` on its owner.
    pub fn local_offset(&self, node: usize, g: [usize; 3]) -> usize {
        let r = self.ranges(node);
        let b = self.brick_dims(node);
        (g[0] - r[0].start) + b[0] * ((g[1] - r[1].start) + b[1] * (g[2] - r[2].start))
    }

    pub fn flat(&self, g: [usize; 3]) -> usize {
        g[0] + self.mesh[0] * (g[1] + self.mesh[1] * g[2])
    }

    /// Cut an x-fastest full grid into bricks.
    pub fn scatter<T: Copy>(&self, full: &[T]) -> Vec<Vec<T>> {
        (0..self.n_nodes())
            .map(|n| {
                let r = self.ranges(n);
                let mut out = Vec::with_capacity(self.brick_points(n));
                for z in r[2].clone() {
                    for y in r[1].clone() {
                        for x in r[0].clone() {
                            out.push(full[self.flat([x, y, z])]);
                        }
                    }
                }
                out
            })
            .collect()
    }

    pub fn assemble<T: Copy + Default>(&self, bricks: &[Vec<T>]) -> Vec<T> {
        let mut full = vec![T::default(); self.total_points()];
        for (n, b) in bricks.iter().enumerate() {
            let r = self.ranges(n);
            let mut it = b.iter();
            for z in r[2].clone() {
                for y in r[1].clone() {
                    for x in r[0].clone() {
                        full[self.flat([x, y, z])] = *it.next().expect("brick size");
                    }
                }
            }
        }
        full
    }

    /// Signed frequency of index `k` along axis `d`.
    pub fn freq(&self, d: usize, k: usize) -> i64 {
        let n = self.mesh[d] as i64;
        let k = k as i64;
        if 2 * k > n {
            k - n
        } else {
            k
        }
    }

    /// The unpaired `k = N/2` mode of an even axis.
    pub fn is_nyquist(&self, d: usize, k: usize) -> bool {
        self.mesh[d].is_multiple_of(2) && 2 * k == self.mesh[d]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchGranularity {
    /// All rows a master owns are reduced as one stream.
    #[default]
    Brick,
    /// Each pencil row is padded to whole operations on its own.
    Pencil,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DftReport {
    /// Data reductions per stage (x, y, z), over all chains.
    pub reductions: [u64; 3],
    /// Largest per-chain data reduction count per stage.
    pub max_chain_reductions: [u64; 3],
    pub scale_reductions: u64,
    /// Simulated critical-path network time of the transform.
    pub critical_time: f64,
    /// Largest per-node complex multiply-add count.
    pub max_node_macs: u64,
}

impl DftReport {
    pub fn accumulate(&mut self, other: &DftReport) {
        for d in 0..3 {
            self.reductions[d] += other.reductions[d];
            self.max_chain_reductions[d] = self.max_chain_reductions[d].max(other.max_chain_reductions[d]);
        }
        self.scale_reductions += other.scale_reductions;
        self.critical_time += other.critical_time;
        self.max_node_macs += other.max_node_macs;
    }
}

/// 3D DFT over node bricks: per-stage partial DFTs reduced over the chains
/// of each node line, x then y then z.
#[derive(Clone, Debug)]
pub struct DistributedDft {
    kgrid: KGrid,
    mode: PayloadMode,
    batch: BatchGranularity,
    quant: QuantSpec,
    fixed: Fixed64Spec,
    /// Rings (node lists) per dimension.
    lines: [Vec<Vec<usize>>; 3],
    /// Chain id per dimension, line and master position.
    chains: [Vec<Vec<usize>>; 3],
}

fn stage_name(d: usize) -> &'static str {
    ["dft_x", "dft_y", "dft_z"][d]
}

impl DistributedDft {
    pub fn new(net: &mut Network, kgrid: KGrid, mode: PayloadMode, chain_limit: usize, batch: BatchGranularity) -> Result<Self, DftError> {
        if kgrid.n_nodes() > net.nodes() {
            return Err(NetError::ChainConfig(format!("{} bricks on a {}-node network", kgrid.n_nodes(), net.nodes())).into());
        }
        let quant = QuantSpec::default();
        let fixed = Fixed64Spec::default();
        let g = kgrid.node_grid();
        let mut lines: [Vec<Vec<usize>>; 3] = Default::default();
        let mut chains: [Vec<Vec<usize>>; 3] = Default::default();
        for d in 0..3 {
            let (a, b) = other_axes(d);
            for cb in 0..g[b] {
                for ca in 0..g[a] {
                    let ring: Vec<usize> = (0..g[d])
                        .map(|k| {
                            let mut c = [0; 3];
                            c[a] = ca;
                            c[b] = cb;
                            c[d] = k;
                            kgrid.node_index(c)
                        })
                        .collect();
                    match mode {
                        PayloadMode::PackedI32x12 => quant.check_summands(ring.len())?,
                        PayloadMode::SixU64 if ring.len() > fixed.max_summands() => {
                            return Err(NetError::CarryBound {
                                k: ring.len(),
                                max: fixed.max_summands(),
                            }
                            .into())
                        }
                        _ => {}
                    }
                    let configured = configure_chains(&ring, &ring, chain_limit, mode)?;
                    chains[d].push(net.register_chains(configured));
                    lines[d].push(ring);
                }
            }
        }
        Ok(Self {
            kgrid,
            mode,
            batch,
            quant,
            fixed,
            lines,
            chains,
        })
    }

    pub fn kgrid(&self) -> &KGrid {
        &self.kgrid
    }

    pub fn mode(&self) -> PayloadMode {
        self.mode
    }

    pub fn quant_spec(&self) -> &QuantSpec {
        &self.quant
    }

    /// Transform node bricks; returns spectral bricks in the same layout.
    pub fn transform(
        &self,
        net: &mut Network,
        mut bricks: Vec<Vec<Complex64>>,
        direction: Direction,
    ) -> Result<(Vec<Vec<Complex64>>, DftReport), DftError> {
        if bricks.len() != self.kgrid.n_nodes() {
            return Err(DftError::Shape(format!(
                "{} bricks for {} nodes",
                bricks.len(),
                self.kgrid.n_nodes()
            )));
        }
        for (n, b) in bricks.iter().enumerate() {
            if b.len() != self.kgrid.brick_points(n) {
                return Err(DftError::Shape(format!("brick {n} has {} points", b.len())));
            }
        }
        let prev = net.phase().to_string();
        let mut report = DftReport::default();
        for d in 0..3 {
            self.stage(net, d, &mut bricks, direction, &mut report)?;
        }
        net.set_phase(prev);
        Ok((bricks, report))
    }

    fn stage(
        &self,
        net: &mut Network,
        d: usize,
        data: &mut [Vec<Complex64>],
        direction: Direction,
        report: &mut DftReport,
    ) -> Result<(), DftError> {
        let n_d = self.kgrid.mesh()[d];
        let tw = TwiddleMatrix::new(n_d, direction);
        let latency = *net.latency();
        let op_bytes = 8 * self.mode.lanes();
        let mut stage_time: f64 = 0.0;
        let mut stage_macs: u64 = 0;
        for (ring, chain_ids) in self.lines[d].iter().zip(&self.chains[d]) {
            // every member computes its partials for every master first
            let mut per_master = Vec::with_capacity(ring.len());
            let mut peak = std::collections::BTreeMap::new();
            for (&master, &cid) in ring.iter().zip(chain_ids) {
                let chain = net.chain(cid)?.clone();
                let k_range = self.kgrid.ranges(master)[d].clone();
                let partials: Vec<Vec<f64>> = chain
                    .members()
                    .iter()
                    .map(|&p| self.partial(p, d, &k_range, &data[p], &tw))
                    .collect();
                for (&p, v) in chain.members().iter().zip(&partials) {
                    let m = peak.entry(p).or_insert(0.0f64);
                    for &x in v {
                        *m = if x.is_finite() { m.max(x.abs()) } else { f64::NAN };
                    }
                }
                per_master.push((master, cid, chain, k_range, partials));
            }
            let amplitude = match self.mode {
                PayloadMode::ThreeF64 => 1.0,
                _ => {
                    net.set_phase("dft_scale");
                    let a = self.ring_amplitude(net, chain_ids, &peak, report)?;
                    let hops = net.chain(chain_ids[0])?.hops();
                    stage_time += latency.chain_op(hops, op_bytes);
                    a
                }
            };
            net.set_phase(stage_name(d));
            let mut outputs = Vec::with_capacity(ring.len());
            let mut line_time: f64 = 0.0;
            for (master, cid, chain, k_range, partials) in per_master {
                let chunks = self.chunks(partials[0].len(), 2 * k_range.len());
                let mut reduced = vec![0.0; partials[0].len()];
                for span in &chunks {
                    let contributions = partials
                        .iter()
                        .map(|v| self.encode(&v[span.clone()], amplitude))
                        .collect::<Result<Vec<_>, _>>()?;
                    let sum = net.chain_reduce(cid, ReduceOp::Sum, &contributions)?;
                    let vals = self.decode(sum, span.len(), chain.ring_len(), amplitude)?;
                    reduced[span.clone()].copy_from_slice(&vals);
                }
                let ops = chunks.len() as u64;
                report.reductions[d] += ops;
                report.max_chain_reductions[d] = report.max_chain_reductions[d].max(ops);
                line_time = line_time.max(ops as f64 * latency.chain_op(chain.hops(), op_bytes));
                outputs.push((master, k_range, reduced));
            }
            stage_time = stage_time.max(line_time);
            for &p in ring {
                stage_macs = stage_macs.max((self.kgrid.brick_points(p) * n_d) as u64);
            }
            // every member's brick now holds the k-range it mastered
            for (master, k_range, reduced) in outputs {
                self.scatter_rows(master, d, &k_range, &reduced, &mut data[master]);
            }
        }
        report.critical_time += stage_time;
        report.max_node_macs += stage_macs;
        Ok(())
    }

    /// Smallest power of two above every member's largest partial
    /// component, agreed by one bitwise-OR reduction per chain.
    fn ring_amplitude(
        &self,
        net: &mut Network,
        chain_ids: &[usize],
        peak: &std::collections::BTreeMap<usize, f64>,
        report: &mut DftReport,
    ) -> Result<f64, DftError> {
        let mut per_node = std::collections::BTreeMap::new();
        for (&p, &m) in peak {
            if !m.is_finite() {
                return Err(NetError::QuantOverflow {
                    value: m,
                    v_max: f64::INFINITY,
                }
                .into());
            }
            let e = if m > 0.0 { m.log2().floor() as i32 + 1 } else { -EXP_BIAS };
            let bit = (e + EXP_BIAS).clamp(0, EXP_BITS - 1) as usize;
            let mut words = vec![0u64; 6];
            words[bit / 64] |= 1u64 << (bit % 64);
            per_node.insert(p, ChainPayload::U64(words));
        }
        let mut e_max = -EXP_BIAS;
        for &cid in chain_ids {
            let chain = net.chain(cid)?.clone();
            let contributions: Vec<ChainPayload> = chain.members().iter().map(|p| per_node[p].clone()).collect();
            let words = net
                .chain_reduce(cid, ReduceOp::BitOr, &contributions)?
                .into_u64()
                .ok_or(NetError::PayloadKind("scale"))?;
            let top = (0..EXP_BITS as usize)
                .rev()
                .find(|&b| words[b / 64] >> (b % 64) & 1 == 1)
                .unwrap_or(0);
            e_max = top as i32 - EXP_BIAS;
            report.scale_reductions += 1;
        }
        Ok(2f64.powi(e_max))
    }

    /// Reals (re, im interleaved) of `Σ_{n∈J_p} ω^{kn} x_n` for every row of
    /// the brick and every `k` in the master's range.
    fn partial(&self, p: usize, d: usize, k_range: &Range<usize>, brick: &[Complex64], tw: &TwiddleMatrix) -> Vec<f64> {
        let dims = self.kgrid.brick_dims(p);
        let j0 = self.kgrid.ranges(p)[d].start;
        let strides = [1, dims[0], dims[0] * dims[1]];
        let (a, b) = other_axes(d);
        let mut out = Vec::with_capacity(2 * dims[a] * dims[b] * k_range.len());
        for rb in 0..dims[b] {
            for ra in 0..dims[a] {
                let base = ra * strides[a] + rb * strides[b];
                for k in k_range.clone() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for n in 0..dims[d] {
                        acc += tw.entry(k, j0 + n) * brick[base + n * strides[d]];
                    }
                    out.push(acc.re);
                    out.push(acc.im);
                }
            }
        }
        out
    }

    fn scatter_rows(&self, node: usize, d: usize, k_range: &Range<usize>, reduced: &[f64], brick: &mut [Complex64]) {
        let dims = self.kgrid.brick_dims(node);
        let strides = [1, dims[0], dims[0] * dims[1]];
        let (a, b) = other_axes(d);
        let mut it = reduced.chunks_exact(2);
        for rb in 0..dims[b] {
            for ra in 0..dims[a] {
                let base = ra * strides[a] + rb * strides[b];
                for k in 0..k_range.len() {
                    let v = it.next().expect("row length");
                    brick[base + k * strides[d]] = Complex64::new(v[0], v[1]);
                }
            }
        }
    }

    fn chunks(&self, total: usize, row: usize) -> Vec<Range<usize>> {
        let per = self.mode.values_per_op();
        let step = |start: usize, end: usize, out: &mut Vec<Range<usize>>| {
            let mut s = start;
            while s < end {
                out.push(s..(s + per).min(end));
                s += per;
            }
        };
        let mut out = Vec::new();
        match self.batch {
            BatchGranularity::Brick => step(0, total, &mut out),
            BatchGranularity::Pencil => {
                for r in (0..total).step_by(row.max(1)) {
                    step(r, (r + row).min(total), &mut out);
                }
            }
        }
        out
    }

    fn encode(&self, vals: &[f64], amplitude: f64) -> Result<ChainPayload, DftError> {
        Ok(match self.mode {
            PayloadMode::ThreeF64 => ChainPayload::F64(vals.to_vec()),
            PayloadMode::SixU64 => {
                let scaled: Vec<f64> = vals.iter().map(|v| v / amplitude).collect();
                ChainPayload::U64(self.fixed.encode(&scaled)?)
            }
            PayloadMode::PackedI32x12 => {
                let scaled: Vec<f64> = vals.iter().map(|v| v / amplitude).collect();
                ChainPayload::U64(quantize_pack(&scaled, &self.quant)?)
            }
        })
    }

    fn decode(&self, sum: ChainPayload, n: usize, k: usize, amplitude: f64) -> Result<Vec<f64>, DftError> {
        Ok(match (self.mode, sum) {
            (PayloadMode::ThreeF64, ChainPayload::F64(v)) => v,
            (PayloadMode::SixU64, ChainPayload::U64(w)) => self.fixed.decode(&w, k)?.into_iter().map(|v| v * amplitude).collect(),
            (PayloadMode::PackedI32x12, ChainPayload::U64(w)) => unpack_dequantize(&w, n, k, &self.quant)?
                .into_iter()
                .map(|v| v * amplitude)
                .collect(),
            _ => return Err(NetError::PayloadKind(self.mode.name()).into()),
        })
    }
}

fn other_axes(d: usize) -> (usize, usize) {
    match d {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

#[cfg(test)]
mod tests {
    use super::super::serial_dft_3d;
    use super::*;
    use crate::simnet::{LatencyModel, DEFAULT_CHAIN_LIMIT};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(mesh: [usize; 3], grid: [usize; 3], mode: PayloadMode) -> (Network, DistributedDft) {
        let kg = KGrid::new(mesh, grid).unwrap();
        let mut net = Network::new(kg.n_nodes(), 4, LatencyModel::default());
        let dft = DistributedDft::new(&mut net, kg, mode, DEFAULT_CHAIN_LIMIT, BatchGranularity::Brick).unwrap();
        (net, dft)
    }

    fn random_real(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect()
    }

    fn run(net: &mut Network, dft: &DistributedDft, full: &[Complex64], dir: Direction) -> Vec<Complex64> {
        let bricks = dft.kgrid().scatter(full);
        let (out, _) = dft.transform(net, bricks, dir).unwrap();
        dft.kgrid().assemble(&out)
    }

    #[test]
    fn bricks_tile_the_mesh() {
        let kg = KGrid::new([12, 18, 12], [2, 3, 2]).unwrap();
        let total: usize = (0..kg.n_nodes()).map(|n| kg.brick_points(n)).sum();
        assert_eq!(total, kg.total_points());
        let full: Vec<usize> = (0..kg.total_points()).collect();
        assert_eq!(kg.assemble(&kg.scatter(&full)), full);
        assert!(matches!(KGrid::new([6, 8, 8], [2, 1, 1]), Err(DftError::BrickTooSmall { .. })));
        assert_eq!(kg.owner_of([11, 17, 11]), 11);
    }

    #[test]
    fn delta_at_origin_gives_flat_spectrum() {
        let (mut net, dft) = setup([8, 8, 8], [2, 2, 2], PayloadMode::ThreeF64);
        let mut full = vec![Complex64::new(0.0, 0.0); 512];
        full[0] = Complex64::new(1.0, 0.0);
        let s = run(&mut net, &dft, &full, Direction::Forward);
        assert!(s.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn f64_chains_match_serial_on_12x18x12() {
        let (mut net, dft) = setup([12, 18, 12], [2, 3, 2], PayloadMode::ThreeF64);
        let full = random_real(12 * 18 * 12, 1);
        for dir in [Direction::Forward, Direction::Inverse] {
            let got = run(&mut net, &dft, &full, dir);
            let want = serial_dft_3d(&full, [12, 18, 12], dir).unwrap();
            let num: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum();
            let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
            assert!((num / den).sqrt() <= 1e-12);
        }
    }

    #[test]
    fn quantized_modes_within_bound() {
        for mode in [PayloadMode::SixU64, PayloadMode::PackedI32x12] {
            let (mut net, dft) = setup([12, 18, 12], [2, 3, 2], mode);
            for seed in 0..5 {
                let full = random_real(12 * 18 * 12, 100 + seed);
                let got = run(&mut net, &dft, &full, Direction::Forward);
                let want = serial_dft_3d(&full, [12, 18, 12], Direction::Forward).unwrap();
                let amax = full.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let bound = 4.0 * 0.5 / dft.quant_spec().scale * amax * full.len() as f64;
                let err = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err <= bound, "{mode:?}: {err} > {bound}");
            }
        }
    }

    #[test]
    fn non_finite_input_is_reported() {
        let (mut net, dft) = setup([8, 8, 8], [2, 1, 1], PayloadMode::PackedI32x12);
        let mut full = random_real(512, 3);
        full[7] = Complex64::new(f64::NAN, 0.0);
        let bricks = dft.kgrid().scatter(&full);
        assert!(matches!(
            dft.transform(&mut net, bricks, Direction::Forward),
            Err(DftError::Net(NetError::QuantOverflow { .. }))
        ));
    }

    #[test]
    fn brick_of_64_points_costs_22_then_11_per_chain() {
        for (mode, ops) in [
            (PayloadMode::SixU64, 22),
            (PayloadMode::PackedI32x12, 11),
            (PayloadMode::ThreeF64, 43),
        ] {
            let (mut net, dft) = setup([8, 8, 8], [2, 2, 2], mode);
            let bricks = dft.kgrid().scatter(&random_real(512, 5));
            let (_, rep) = dft.transform(&mut net, bricks, Direction::Forward).unwrap();
            assert_eq!(rep.max_chain_reductions, [ops; 3]);
            // 4 lines × 2 masters per stage
            assert_eq!(rep.reductions, [8 * ops; 3]);
            assert_eq!(net.stats().phase("dft_x").reductions, 8 * ops);
            for &c in net.stats().per_chain.keys() {
                let scale = u64::from(mode != PayloadMode::ThreeF64);
                assert_eq!(net.stats().per_chain[&c], ops + scale);
            }
        }
    }

    #[test]
    fn pencil_batches_pad_each_row() {
        let kg = KGrid::new([8, 8, 8], [2, 2, 2]).unwrap();
        let mut net = Network::new(8, 1, LatencyModel::default());
        let dft = DistributedDft::new(&mut net, kg, PayloadMode::SixU64, 24, BatchGranularity::Pencil).unwrap();
        let bricks = dft.kgrid().scatter(&random_real(512, 5));
        let (_, rep) = dft.transform(&mut net, bricks, Direction::Forward).unwrap();
        // 16 rows of 8 reals, two operations each
        assert_eq!(rep.max_chain_reductions, [32; 3]);
    }

    #[test]
    fn chain_limit_is_enforced() {
        let kg = KGrid::with_min_points([30, 4, 4], [30, 1, 1], 1).unwrap();
        let mut net = Network::new(30, 1, LatencyModel::default());
        assert!(matches!(
            DistributedDft::new(&mut net, kg, PayloadMode::ThreeF64, 24, BatchGranularity::Brick),
            Err(DftError::Net(NetError::ChainLimit { .. }))
        ));
    }

    #[test]
    fn single_node_is_serial() {
        let (mut net, dft) = setup([6, 5, 4], [1, 1, 1], PayloadMode::PackedI32x12);
        let full = random_real(120, 8);
        let got = run(&mut net, &dft, &full, Direction::Forward);
        let want = serial_dft_3d(&full, [6, 5, 4], Direction::Forward).unwrap();
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-4));
        assert_eq!(net.stats().totals.chain_hops, 0);
    }
}
