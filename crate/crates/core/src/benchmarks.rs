//! Real-parameter test functions: shifted sphere, shifted rotated Rastrigin
//! and Schwefel's problem 2.13.
//!
//! Instance data (shift vectors, rotation matrices, Schwefel coefficients) is
//! regenerated from a seed rather than loaded from the CEC'05 data files, so
//! every instance is reproducible from its `(kind, dim, seed)` triple. The
//! global optimum of every instance is exactly its `f_bias`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BenchmarkError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("{0} does not use a rotation matrix")]
    RotationNotApplicable(ProblemKind),
    #[error("genome has {got} genes, instance expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gene {index} is not finite")]
    NonFiniteGene { index: usize },
    #[error("unknown problem kind `{0}`")]
    UnknownKind(String),
    #[error("instance file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// The three benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemKind {
    ShiftedSphere,
    ShiftedRotatedRastrigin,
    Schwefel213,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [
        ProblemKind::ShiftedSphere,
        ProblemKind::ShiftedRotatedRastrigin,
        ProblemKind::Schwefel213,
    ];

    pub fn default_dim(self) -> usize {
        match self {
            ProblemKind::ShiftedSphere => 100,
            ProblemKind::ShiftedRotatedRastrigin => 30,
            ProblemKind::Schwefel213 => 10,
        }
    }

    /// Symmetric search-space half-width: genes live in `[-b, b]`.
    pub fn bound(self) -> f64 {
        match self {
            ProblemKind::ShiftedSphere => 100.0,
            ProblemKind::ShiftedRotatedRastrigin => 5.0,
            ProblemKind::Schwefel213 => PI,
        }
    }

    pub fn f_bias(self) -> f64 {
        match self {
            ProblemKind::ShiftedSphere => -450.0,
            ProblemKind::ShiftedRotatedRastrigin => -330.0,
            ProblemKind::Schwefel213 => -460.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::ShiftedSphere => "sphere",
            ProblemKind::ShiftedRotatedRastrigin => "rastrigin",
            ProblemKind::Schwefel213 => "schwefel",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sphere" | "shifted-sphere" | "shiftedsphere" => Ok(ProblemKind::ShiftedSphere),
            "rastrigin" | "shifted-rotated-rastrigin" | "shiftedrotatedrastrigin" => {
                Ok(ProblemKind::ShiftedRotatedRastrigin)
            }
            "schwefel" | "schwefel213" | "schwefel-2.13" => Ok(ProblemKind::Schwefel213),
            _ => Err(BenchmarkError::UnknownKind(s.to_string())),
        }
    }
}

/// A real-coded candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome(pub Vec<f64>);

impl Genome {
    pub fn new(genes: Vec<f64>) -> Self {
        Genome(genes)
    }

    pub fn genes(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Genome {
    fn from(genes: Vec<f64>) -> Self {
        Genome(genes)
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Copy> SquareMatrix<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }
}

impl SquareMatrix<f64> {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        SquareMatrix { n, data }
    }

    /// Largest absolute entry of `MᵀM − I`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| self.get(k, i) * self.get(k, j)).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
enum InstanceData {
    Sphere {
        shift: Vec<f64>,
    },
    Rastrigin {
        shift: Vec<f64>,
        rotation: SquareMatrix<f64>,
        rotated: bool,
    },
    Schwefel {
        coeff_a: SquareMatrix<i32>,
        coeff_b: SquareMatrix<i32>,
        alpha: Vec<f64>,
        // A_i, derived from alpha and the coefficients.
        target: Vec<f64>,
    },
}

/// An immutable benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    kind: ProblemKind,
    dim: usize,
    seed: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    f_bias: f64,
    data: InstanceData,
}

/// Builds an instance with the kind's default rotation setting
/// (rotated for Rastrigin).
pub fn make_instance(
    kind: ProblemKind,
    dim: usize,
    seed: u64,
) -> Result<ProblemInstance, BenchmarkError> {
    make_instance_with(kind, dim, seed, None)
}

/// Like [`make_instance`], with an explicit rotation request. `Some(false)`
/// asks for an identity rotation. Only Rastrigin accepts a request.
pub fn make_instance_with(
    kind: ProblemKind,
    dim: usize,
    seed: u64,
    rotated: Option<bool>,
) -> Result<ProblemInstance, BenchmarkError> {
    if dim == 0 {
        return Err(BenchmarkError::ZeroDimension);
    }
    if rotated.is_some() && kind != ProblemKind::ShiftedRotatedRastrigin {
        return Err(BenchmarkError::RotationNotApplicable(kind));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = kind.bound();
    let lower = vec![-b; dim];
    let upper = vec![b; dim];
    let data = match kind {
        ProblemKind::ShiftedSphere => InstanceData::Sphere {
            shift: central_shift(&mut rng, dim, b),
        },
        ProblemKind::ShiftedRotatedRastrigin => {
            let shift = central_shift(&mut rng, dim, b);
            let rotated = rotated.unwrap_or(true);
            let rotation = if rotated {
                random_orthogonal(&mut rng, dim)
            } else {
                SquareMatrix::identity(dim)
            };
            InstanceData::Rastrigin {
                shift,
                rotation,
                rotated,
            }
        }
        ProblemKind::Schwefel213 => {
            let draw = |rng: &mut ChaCha8Rng| SquareMatrix {
                n: dim,
                data: (0..dim * dim)
                    .map(|_| rng.random_range(-100..=100))
                    .collect(),
            };
            let coeff_a = draw(&mut rng);
            let coeff_b = draw(&mut rng);
            let alpha: Vec<f64> = (0..dim).map(|_| rng.random_range(-PI..=PI)).collect();
            let target = schwefel_b(&coeff_a, &coeff_b, &alpha);
            InstanceData::Schwefel {
                coeff_a,
                coeff_b,
                alpha,
                target,
            }
        }
    };
    Ok(ProblemInstance {
        kind,
        dim,
        seed,
        lower,
        upper,
        f_bias: kind.f_bias(),
        data,
    })
}

// Uniform in the central 80% of [-b, b].
fn central_shift(rng: &mut ChaCha8Rng, dim: usize, b: f64) -> Vec<f64> {
    let half = 0.8 * b;
    (0..dim).map(|_| rng.random_range(-half..half)).collect()
}

/// Orthonormalizes a standard Gaussian matrix with two passes of modified
/// Gram-Schmidt. Columns are the basis vectors.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> SquareMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj: f64 = done[k].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                for (x, q) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * q;
                }
            }
        }
        let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    let mut data = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            data[i * n + j] = *v;
        }
    }
    SquareMatrix { n, data }
}

fn schwefel_b(a: &SquareMatrix<i32>, b: &SquareMatrix<i32>, x: &[f64]) -> Vec<f64> {
    let n = a.n;
    let (sin, cos): (Vec<f64>, Vec<f64>) = x.iter().map(|v| v.sin_cos()).unzip();
    (0..n)
        .map(|i| {
            let (ra, rb) = (a.row(i), b.row(i));
            (0..n)
                .map(|j| f64::from(ra[j]) * sin[j] + f64::from(rb[j]) * cos[j])
                .sum()
        })
        .collect()
}

impl ProblemInstance {
    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn f_bias(&self) -> f64 {
        self.f_bias
    }

    pub fn shift(&self) -> Option<&[f64]> {
        match &self.data {
            InstanceData::Sphere { shift } | InstanceData::Rastrigin { shift, .. } => Some(shift),
            InstanceData::Schwefel { .. } => None,
        }
    }

    pub fn rotation(&self) -> Option<&SquareMatrix<f64>> {
        match &self.data {
            InstanceData::Rastrigin { rotation, .. } => Some(rotation),
            _ => None,
        }
    }

    pub fn coefficients(&self) -> Option<(&SquareMatrix<i32>, &SquareMatrix<i32>)> {
        match &self.data {
            InstanceData::Schwefel {
                coeff_a, coeff_b, ..
            } => Some((coeff_a, coeff_b)),
            _ => None,
        }
    }

    pub fn alpha(&self) -> Option<&[f64]> {
        match &self.data {
            InstanceData::Schwefel { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Objective value of `x` (minimization).
    pub fn evaluate(&self, x: &Genome) -> Result<f64, BenchmarkError> {
        let genes = x.genes();
        if genes.len() != self.dim {
            return Err(BenchmarkError::DimensionMismatch {
                expected: self.dim,
                got: genes.len(),
            });
        }
        if let Some(index) = genes.iter().position(|g| !g.is_finite()) {
            return Err(BenchmarkError::NonFiniteGene { index });
        }
        let raw = match &self.data {
            InstanceData::Sphere { shift } => genes
                .iter()
                .zip(shift)
                .map(|(x, o)| {
                    let z = x - o;
                    z * z
                })
                .sum::<f64>(),
            InstanceData::Rastrigin {
                shift,
                rotation,
                rotated,
            } => {
                let d: Vec<f64> = genes.iter().zip(shift).map(|(x, o)| x - o).collect();
                let term = |z: f64| z * z - 10.0 * (2.0 * PI * z).cos() + 10.0;
                if *rotated {
                    (0..self.dim)
                        .map(|i| term(rotation.row(i).iter().zip(&d).map(|(m, v)| m * v).sum()))
                        .sum()
                } else {
                    d.iter().map(|&z| term(z)).sum()
                }
            }
            InstanceData::Schwefel {
                coeff_a,
                coeff_b,
                target,
                ..
            } => schwefel_b(coeff_a, coeff_b, genes)
                .iter()
                .zip(target)
                .map(|(b, a)| (a - b) * (a - b))
                .sum(),
        };
        Ok(raw + self.f_bias)
    }

    /// Location of the global minimum.
    pub fn optimum(&self) -> Genome {
        match &self.data {
            InstanceData::Sphere { shift } | InstanceData::Rastrigin { shift, .. } => {
                Genome(shift.clone())
            }
            InstanceData::Schwefel { alpha, .. } => Genome(alpha.clone()),
        }
    }

    pub fn contains(&self, x: &Genome) -> bool {
        x.len() == self.dim
            && x.genes()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(g, (lo, hi))| *g >= *lo && *g <= *hi)
    }

    /// Writes the instance as a line-oriented `key = values` text file.
    /// Reals use 17 significant digits so the file reloads bit-exactly.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        let reals = |v: &[f64]| v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(" ");
        let ints = |v: &[i32]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str("# evoagent problem instance\n");
        out.push_str(&format!("kind = {}\n", self.kind));
        out.push_str(&format!("dim = {}\n", self.dim));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("f_bias = {}\n", fmt_real(self.f_bias)));
        out.push_str(&format!("lower = {}\n", reals(&self.lower)));
        out.push_str(&format!("upper = {}\n", reals(&self.upper)));
        match &self.data {
            InstanceData::Sphere { shift } => {
                out.push_str(&format!("shift = {}\n", reals(shift)));
            }
            InstanceData::Rastrigin {
                shift,
                rotation,
                rotated,
            } => {
                out.push_str(&format!("shift = {}\n", reals(shift)));
                out.push_str(&format!("rotated = {rotated}\n"));
                for i in 0..rotation.n {
                    out.push_str(&format!("rotation.{i} = {}\n", reals(rotation.row(i))));
                }
            }
            InstanceData::Schwefel {
                coeff_a,
                coeff_b,
                alpha,
                ..
            } => {
                out.push_str(&format!("alpha = {}\n", reals(alpha)));
                for i in 0..coeff_a.n {
                    out.push_str(&format!("a.{i} = {}\n", ints(coeff_a.row(i))));
                }
                for i in 0..coeff_b.n {
                    out.push_str(&format!("b.{i} = {}\n", ints(coeff_b.row(i))));
                }
            }
        }
        out
    }

    /// Parses the output of [`ProblemInstance::export_text`].
    pub fn import_text(text: &str) -> Result<ProblemInstance, BenchmarkError> {
        let mut fields: Vec<(usize, &str, &str)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| BenchmarkError::Parse {
                line: idx + 1,
                message: "expected `key = value`".into(),
            })?;
            fields.push((idx + 1, key.trim(), value.trim()));
        }
        let find = |key: &str| -> Result<(usize, &str), BenchmarkError> {
            fields
                .iter()
                .find(|(_, k, _)| *k == key)
                .map(|(l, _, v)| (*l, *v))
                .ok_or_else(|| BenchmarkError::Parse {
                    line: 0,
                    message: format!("missing key `{key}`"),
                })
        };
        fn parse_one<T: FromStr>((line, v): (usize, &str)) -> Result<T, BenchmarkError> {
            v.parse().map_err(|_| BenchmarkError::Parse {
                line,
                message: format!("cannot parse `{v}`"),
            })
        }
        fn parse_vec<T: FromStr>(
            (line, v): (usize, &str),
            len: usize,
        ) -> Result<Vec<T>, BenchmarkError> {
            let out = v
                .split_whitespace()
                .map(|t| parse_one((line, t)))
                .collect::<Result<Vec<T>, _>>()?;
            if out.len() != len {
                return Err(BenchmarkError::Parse {
                    line,
                    message: format!("expected {len} values, found {}", out.len()),
                });
            }
            Ok(out)
        }
        let matrix = |prefix: &str, n: usize| -> Result<Vec<String>, BenchmarkError> {
            (0..n)
                .map(|i| find(&format!("{prefix}.{i}")).map(|(_, v)| v.to_string()))
                .collect()
        };

        let kind: ProblemKind = find("kind")?.1.parse()?;
        let dim: usize = parse_one(find("dim")?)?;
        if dim == 0 {
            return Err(BenchmarkError::ZeroDimension);
        }
        let seed: u64 = parse_one(find("seed")?)?;
        let f_bias: f64 = parse_one(find("f_bias")?)?;
        let lower: Vec<f64> = parse_vec(find("lower")?, dim)?;
        let upper: Vec<f64> = parse_vec(find("upper")?, dim)?;
        let data = match kind {
            ProblemKind::ShiftedSphere => InstanceData::Sphere {
                shift: parse_vec(find("shift")?, dim)?,
            },
            ProblemKind::ShiftedRotatedRastrigin => {
                let shift = parse_vec(find("shift")?, dim)?;
                let rotated: bool = parse_one(find("rotated")?)?;
                let mut data = Vec::with_capacity(dim * dim);
                for row in matrix("rotation", dim)? {
                    data.extend(parse_vec::<f64>((0, &row), dim)?);
                }
                InstanceData::Rastrigin {
                    shift,
                    rotation: SquareMatrix { n: dim, data },
                    rotated,
                }
            }
            ProblemKind::Schwefel213 => {
                let alpha: Vec<f64> = parse_vec(find("alpha")?, dim)?;
                let load = |prefix: &str| -> Result<SquareMatrix<i32>, BenchmarkError> {
                    let mut data = Vec::with_capacity(dim * dim);
                    for row in matrix(prefix, dim)? {
                        data.extend(parse_vec::<i32>((0, &row), dim)?);
                    }
                    Ok(SquareMatrix { n: dim, data })
                };
                let coeff_a = load("a")?;
                let coeff_b = load("b")?;
                let target = schwefel_b(&coeff_a, &coeff_b, &alpha);
                InstanceData::Schwefel {
                    coeff_a,
                    coeff_b,
                    alpha,
                    target,
                }
            }
        };
        Ok(ProblemInstance {
            kind,
            dim,
            seed,
            lower,
            upper,
            f_bias,
            data,
        })
    }
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_at_origin(dim: usize) -> ProblemInstance {
        ProblemInstance {
            kind: ProblemKind::ShiftedSphere,
            dim,
            seed: 0,
            lower: vec![-100.0; dim],
            upper: vec![100.0; dim],
            f_bias: -450.0,
            data: InstanceData::Sphere {
                shift: vec![0.0; dim],
            },
        }
    }

    #[test]
    fn same_seed_same_instance() {
        for kind in ProblemKind::ALL {
            let a = make_instance(kind, kind.default_dim(), 17).unwrap();
            let b = make_instance(kind, kind.default_dim(), 17).unwrap();
            assert_eq!(a, b);
            let c = make_instance(kind, kind.default_dim(), 18).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn rastrigin_rotation_is_orthogonal() {
        for seed in 0..5 {
            let inst = make_instance(ProblemKind::ShiftedRotatedRastrigin, 30, seed).unwrap();
            assert!(inst.rotation().unwrap().orthogonality_error() <= 1e-9);
        }
    }

    #[test]
    fn schwefel_coefficients_are_bounded_integers() {
        let inst = make_instance(ProblemKind::Schwefel213, 10, 3).unwrap();
        let (a, b) = inst.coefficients().unwrap();
        assert_eq!(a.data.len() + b.data.len(), 200);
        assert!(a
            .data
            .iter()
            .chain(&b.data)
            .all(|v| (-100..=100).contains(v)));
        assert!(inst.alpha().unwrap().iter().all(|v| v.abs() <= PI));
    }

    #[test]
    fn shift_inside_central_band() {
        for kind in [
            ProblemKind::ShiftedSphere,
            ProblemKind::ShiftedRotatedRastrigin,
        ] {
            let inst = make_instance(kind, 200, 9).unwrap();
            let limit = 0.8 * kind.bound();
            assert!(inst.shift().unwrap().iter().all(|o| o.abs() <= limit));
        }
    }

    #[test]
    fn rejects_bad_requests() {
        assert_eq!(
            make_instance(ProblemKind::ShiftedSphere, 0, 1),
            Err(BenchmarkError::ZeroDimension)
        );
        assert_eq!(
            make_instance_with(ProblemKind::Schwefel213, 10, 1, Some(true)),
            Err(BenchmarkError::RotationNotApplicable(
                ProblemKind::Schwefel213
            ))
        );
        assert!(make_instance_with(ProblemKind::ShiftedSphere, 10, 1, Some(false)).is_err());
        let plain =
            make_instance_with(ProblemKind::ShiftedRotatedRastrigin, 4, 1, Some(false)).unwrap();
        assert_eq!(plain.rotation().unwrap(), &SquareMatrix::identity(4));
    }

    #[test]
    fn optima_hit_f_bias() {
        let sphere = make_instance(ProblemKind::ShiftedSphere, 100, 5).unwrap();
        assert_eq!(sphere.evaluate(&sphere.optimum()).unwrap(), -450.0);
        let ras =
            make_instance_with(ProblemKind::ShiftedRotatedRastrigin, 30, 5, Some(false)).unwrap();
        assert_eq!(ras.evaluate(&ras.optimum()).unwrap(), -330.0);
        let sch = make_instance(ProblemKind::Schwefel213, 10, 5).unwrap();
        assert_eq!(sch.evaluate(&sch.optimum()).unwrap(), -460.0);
    }

    #[test]
    fn hand_computed_sphere() {
        let inst = sphere_at_origin(2);
        assert_eq!(inst.evaluate(&Genome(vec![3.0, 4.0])).unwrap(), -425.0);
    }

    #[test]
    fn evaluate_errors() {
        let inst = sphere_at_origin(2);
        assert_eq!(
            inst.evaluate(&Genome(vec![1.0])),
            Err(BenchmarkError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
        assert_eq!(
            inst.evaluate(&Genome(vec![1.0, f64::NAN])),
            Err(BenchmarkError::NonFiniteGene { index: 1 })
        );
    }

    #[test]
    fn export_import_is_exact() {
        for kind in ProblemKind::ALL {
            let inst = make_instance(kind, 6, 77).unwrap();
            let back = ProblemInstance::import_text(&inst.export_text()).unwrap();
            assert_eq!(inst, back);
        }
    }

    #[test]
    fn import_reports_missing_keys() {
        let text = "kind = sphere\ndim = 2\n";
        assert!(matches!(
            ProblemInstance::import_text(text),
            Err(BenchmarkError::Parse { .. })
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ProblemKind::ALL {
            assert_eq!(kind.name().parse::<ProblemKind>().unwrap(), kind);
        }
        assert!("ackley".parse::<ProblemKind>().is_err());
    }
}
