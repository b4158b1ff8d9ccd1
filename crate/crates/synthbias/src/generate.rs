use crate::{BiasSpec, Block, DatasetBundle, OodMode, Result, Sample};
use ndarray::Array2;
use netcore::{seeded_rng, Mat, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

/// Stream tags for seed derivation, so each split has its own generator.
const TAG_PROTOS: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_ID: u64 = 3;
const TAG_OOD: u64 = 4;
const TAG_CF: u64 = 5;

fn derive(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03)) ^ (tag << 56)
}

/// Class prototypes, fixed per seed and shared by every split.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub prefix: Mat,
    pub q_core: Mat,
    pub v_core: Mat,
    pub v_spur: Mat,
    /// k × block_dim, nonzero only in the first half.
    pub q_spur: Mat,
    /// k × block_dim, nonzero only in the second half.
    pub cross: Mat,
}

/// `k` unit vectors in `dim` dimensions, orthonormal when `k <= dim`.
fn unit_rows(k: usize, dim: usize, rng: &mut Rng) -> Mat {
    let mut m = Array2::<f64>::zeros((k, dim));
    for i in 0..k {
        loop {
            let mut row: Vec<f64> = (0..dim).map(|_| gauss(rng)).collect();
            if i < dim {
                for j in 0..i {
                    let dot: f64 = row.iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
                    for (r, b) in row.iter_mut().zip(m.row(j)) {
                        *r -= dot * b;
                    }
                }
            }
            let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for (dst, r) in m.row_mut(i).iter_mut().zip(&row) {
                    *dst = r / norm;
                }
                break;
            }
        }
    }
    m
}

pub fn prototypes(spec: &BiasSpec) -> Prototypes {
    let (k, b) = (spec.num_classes, spec.block_dim);
    let h = b / 2;
    let mut rng = seeded_rng(derive(spec.seed, TAG_PROTOS));
    let prefix = unit_rows(k, b, &mut rng);
    let q_core = unit_rows(k, b, &mut rng);
    let v_core = unit_rows(k, b, &mut rng);
    let v_spur = unit_rows(k, b, &mut rng);
    let mut q_spur = Array2::zeros((k, b));
    q_spur.slice_mut(ndarray::s![.., ..h]).assign(&unit_rows(k, h, &mut rng));
    let mut cross = Array2::zeros((k, b));
    cross.slice_mut(ndarray::s![.., h..]).assign(&unit_rows(k, h, &mut rng));
    Prototypes { prefix, q_core, v_core, v_spur, q_spur, cross }
}

/// Uniform class in `0..k` other than `y`.
fn other(rng: &mut Rng, y: usize, k: usize) -> usize {
    let r = rng.random_range(0..k - 1);
    if r >= y {
        r + 1
    } else {
        r
    }
}

fn gauss(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn noise(rng: &mut Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n).map(|_| sigma * gauss(rng)).collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    InDistribution,
    OutOfDistribution,
}

fn make_split(spec: &BiasSpec, protos: &Prototypes, n: usize, kind: Kind, seed: u64) -> Vec<Sample> {
    let (k, bd) = (spec.num_classes, spec.block_dim);
    let h = bd / 2;
    let sigma = spec.noise_sigma;
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let group = rng.random_range(0..k);
        let bias = group % spec.num_bias_classes;
        let u: f64 = rng.random();
        let (label, spur) = match kind {
            Kind::InDistribution => {
                let y = if u < spec.rho_q { bias } else { other(&mut rng, bias, k) };
                let channel = |r: f64, rng: &mut Rng| {
                    if u < r {
                        y
                    } else if bias != y {
                        bias
                    } else {
                        other(rng, y, k)
                    }
                };
                let cq = channel(spec.rho_q, &mut rng);
                let cv = channel(spec.rho_v, &mut rng);
                let cx = channel(spec.rho_cross, &mut rng);
                (y, [cq, cv, cx])
            }
            Kind::OutOfDistribution => {
                let y = rng.random_range(0..k);
                let c = match spec.ood_mode {
                    OodMode::Agnostic => bias,
                    OodMode::Anti if bias != y => bias,
                    OodMode::Anti => other(&mut rng, y, k),
                };
                (y, [c, c, c])
            }
        };
        let core_q = rng.random_range(0..k);
        let core_v = (label + k - core_q) % k;

        let pad: Vec<f64> = noise(&mut rng, h, spec.pad_sigma);
        let mut sample = Sample {
            q: vec![0.0; spec.q_dim()],
            v: vec![0.0; spec.v_dim()],
            label,
            group_id: group,
            core_q,
            core_v,
            spur,
        };
        let blocks: [(Block, Option<(&Mat, usize, f64)>); 7] = [
            (Block::Prefix, Some((&protos.prefix, group, spec.prefix_amp))),
            (Block::QCore, Some((&protos.q_core, core_q, spec.core_amp))),
            (Block::QSpur, Some((&protos.q_spur, spur[0], spec.spur_amp))),
            (Block::VCore, Some((&protos.v_core, core_v, spec.core_amp))),
            (Block::VSpur, Some((&protos.v_spur, spur[1], spec.spur_amp))),
            (Block::Irrelevant, None),
            (Block::CrossV, Some((&protos.cross, spur[2], spec.spur_amp))),
        ];
        for (block, proto) in blocks {
            let eps = noise(&mut rng, bd, sigma);
            let dst = sample.block_mut(block, bd);
            for (j, d) in dst.iter_mut().enumerate() {
                let mut x = eps[j];
                if let Some((p, c, amp)) = proto {
                    x += amp * p[[c, j]];
                }
                if j >= h {
                    match block {
                        Block::QSpur => x += pad[j - h],
                        Block::CrossV => x -= pad[j - h],
                        _ => {}
                    }
                }
                *d = x;
            }
        }
        out.push(sample);
    }
    out
}

/// Generates train, ID, OOD and counterfactual splits for `spec`.
pub fn make_dataset(spec: &BiasSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let protos = prototypes(spec);
    let train = make_split(spec, &protos, spec.n_train, Kind::InDistribution, derive(spec.seed, TAG_TRAIN));
    let id_test = make_split(spec, &protos, spec.n_test, Kind::InDistribution, derive(spec.seed, TAG_ID));
    let ood_test = make_split(spec, &protos, spec.n_test, Kind::OutOfDistribution, derive(spec.seed, TAG_OOD));
    let cf_test = make_counterfactual(&id_test, spec);
    Ok(DatasetBundle { spec: spec.clone(), train, id_test, ood_test, cf_test })
}

/// Copy of `split` with only the irrelevant block resampled from N(mu_shift, sigma).
pub fn make_counterfactual(split: &[Sample], spec: &BiasSpec) -> Vec<Sample> {
    let mut rng = seeded_rng(derive(spec.seed, TAG_CF));
    split
        .iter()
        .map(|s| {
            let mut c = s.clone();
            for x in c.block_mut(Block::Irrelevant, spec.block_dim) {
                *x = spec.mu_shift + spec.noise_sigma * gauss(&mut rng);
            }
            c
        })
        .collect()
}

/// Copy of `sample` keeping only the prefix block of `q`; `v` is unchanged.
pub fn mask_to_spurious(sample: &Sample, block_dim: usize) -> Sample {
    let mut m = sample.clone();
    for x in &mut m.q[block_dim..] {
        *x = 0.0;
    }
    m
}
