//! Unit-hypersphere embeddings: projection, geodesic distance and projected
//! gradient steps.
//!
//! Points live in the ambient space `R^{n+1}`; the only retraction is the
//! normalization `x / ‖x‖`.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use thiserror::Error;

use crate::node::LaggedNode;
use crate::rng::SeededRng;

/// Inputs to [`geodesic_distance`] must be unit length within this tolerance.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("cannot project the zero vector onto the sphere")]
    ZeroVector,
    #[error("vector has a non-finite component")]
    NonFinite,
    #[error("update landed at the origin (|x| = {x_norm}, eta*|grad| = {step_norm})")]
    DegenerateStep { x_norm: f64, step_norm: f64 },
    #[error("vector has norm {0}, expected unit length")]
    NotUnit(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SphereError>;

/// Euclidean norm, rescaled by the largest component when the plain sum of
/// squares would overflow or underflow.
pub fn norm(x: &[f64]) -> f64 {
    let sq = x.iter().map(|v| v * v).sum::<f64>();
    if sq.is_normal() && sq < f64::MAX {
        return sq.sqrt();
    }
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x / ‖x‖`.
pub fn project_to_sphere(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SphereError::NonFinite);
    }
    let n = norm(x);
    if n == 0.0 {
        return Err(SphereError::ZeroVector);
    }
    let mut out: Vec<f64> = x.iter().map(|v| v / n).collect();
    // Subnormal inputs can leave the first quotient slightly off unit length.
    let again = norm(&out);
    if again != 1.0 {
        out.iter_mut().for_each(|v| *v /= again);
    }
    Ok(out)
}

/// Angle between two unit vectors, in `[0, π]`.
pub fn geodesic_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(SphereError::DimMismatch(u.len(), v.len()));
    }
    for w in [u, v] {
        let n = norm(w);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(SphereError::NotUnit(n));
        }
    }
    Ok(dot(u, v).clamp(-1.0, 1.0).acos())
}

/// Projected gradient step `Π(x − η·grad)`.
pub fn riemannian_step(x: &[f64], grad: &[f64], eta: f64) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    riemannian_step_in_place(&mut out, grad, eta)?;
    Ok(out)
}

/// In-place [`riemannian_step`]. A zero step leaves `x` bit-identical.
pub fn riemannian_step_in_place(x: &mut [f64], grad: &[f64], eta: f64) -> Result<()> {
    if x.len() != grad.len() {
        return Err(SphereError::DimMismatch(x.len(), grad.len()));
    }
    if eta == 0.0 || grad.iter().all(|g| *g == 0.0) {
        return Ok(());
    }
    let moved: Vec<f64> = x.iter().zip(grad).map(|(xi, gi)| xi - eta * gi).collect();
    let unit = project_to_sphere(&moved)
        .map_err(|_| SphereError::DegenerateStep { x_norm: norm(x), step_norm: eta.abs() * norm(grad) })?;
    x.copy_from_slice(&unit);
    Ok(())
}

/// Uniform point on the sphere: isotropic Gaussian, then projected.
pub fn random_unit(rng: &mut SeededRng, ambient_dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..ambient_dim).map(|_| rng.normal()).collect();
        if let Ok(u) = project_to_sphere(&g) {
            return u;
        }
    }
}

/// Table of unit vectors keyed by lagged node.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereEmbedding {
    nodes: Vec<LaggedNode>,
    rows: BTreeMap<LaggedNode, usize>,
    ambient_dim: usize,
    data: Vec<f64>,
}

impl SphereEmbedding {
    pub fn random(nodes: Vec<LaggedNode>, ambient_dim: usize, rng: &mut SeededRng) -> Self {
        let mut data = Vec::with_capacity(nodes.len() * ambient_dim);
        for _ in &nodes {
            data.extend(random_unit(rng, ambient_dim));
        }
        Self::from_parts(nodes, ambient_dim, data)
    }

    fn from_parts(nodes: Vec<LaggedNode>, ambient_dim: usize, data: Vec<f64>) -> Self {
        let rows = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { nodes, rows, ambient_dim, data }
    }

    /// Builds a table from explicit vectors, projecting each onto the sphere.
    pub fn from_vectors(entries: Vec<(LaggedNode, Vec<f64>)>) -> Result<Self> {
        let ambient_dim = entries.first().map_or(0, |(_, v)| v.len());
        let mut nodes = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * ambient_dim);
        for (n, v) in entries {
            if v.len() != ambient_dim {
                return Err(SphereError::DimMismatch(v.len(), ambient_dim));
            }
            data.extend(project_to_sphere(&v)?);
            nodes.push(n);
        }
        Ok(Self::from_parts(nodes, ambient_dim, data))
    }

    /// Ambient dimension `n + 1`.
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Intrinsic sphere dimension `n`.
    pub fn sphere_dim(&self) -> usize {
        self.ambient_dim.saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[LaggedNode] {
        &self.nodes
    }

    pub fn row_of(&self, node: &LaggedNode) -> Option<usize> {
        self.rows.get(node).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn get(&self, node: &LaggedNode) -> Option<&[f64]> {
        self.row_of(node).map(|i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Raw access to one row. Callers must leave it on the sphere.
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.ambient_dim;
        &mut self.data[i * d..(i + 1) * d]
    }

    pub fn step_row(&mut self, i: usize, grad: &[f64], eta: f64) -> Result<()> {
        let d = self.ambient_dim;
        riemannian_step_in_place(&mut self.data[i * d..(i + 1) * d], grad, eta)
    }

    pub fn max_norm_error(&self) -> f64 {
        (0..self.len()).map(|i| (norm(self.row(i)) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Text header (format tag, dimension, node order) followed by the rows
    /// as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "CSHT-EMBEDDING v1")?;
        writeln!(w, "ambient_dim={}", self.ambient_dim)?;
        writeln!(w, "nodes={}", self.nodes.len())?;
        for n in &self.nodes {
            writeln!(w, "{n}")?;
        }
        writeln!(w, "END")?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        let mut next_line = |r: &mut R| -> Result<String> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(SphereError::Format("unexpected end of header".into()));
            }
            Ok(line.trim_end().to_string())
        };
        if next_line(&mut r)? != "CSHT-EMBEDDING v1" {
            return Err(SphereError::Format("bad magic".into()));
        }
        let parse_kv = |l: String, key: &str| -> Result<usize> {
            l.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| SphereError::Format(format!("expected {key}=<n>, got `{l}`")))
        };
        let ambient_dim = parse_kv(next_line(&mut r)?, "ambient_dim")?;
        let count = parse_kv(next_line(&mut r)?, "nodes")?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let l = next_line(&mut r)?;
            nodes.push(l.parse::<LaggedNode>().map_err(SphereError::Format)?);
        }
        if next_line(&mut r)? != "END" {
            return Err(SphereError::Format("missing END".into()));
        }
        let data = read_f64s(&mut r, count * ambient_dim)?;
        Ok(Self::from_parts(nodes, ambient_dim, data))
    }
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::Modality;
    use crate::rng::Stream;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_sphere(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        let u = [0.6, 0.8];
        let p = project_to_sphere(&u).unwrap();
        assert!(p.iter().zip(u).all(|(a, b)| (a - b).abs() <= 1e-15));
        assert!(matches!(project_to_sphere(&[0.0, 0.0]), Err(SphereError::ZeroVector)));
    }

    #[test]
    fn distance_examples() {
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        assert_eq!(geodesic_distance(&e1, &e1).unwrap(), 0.0);
        assert!((geodesic_distance(&e1, &e2).unwrap() - FRAC_PI_2).abs() < 1e-15);
        let u = project_to_sphere(&[0.1, 0.7, 0.3]).unwrap();
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let d = geodesic_distance(&u, &neg).unwrap();
        assert!(d.is_finite() && (d - PI).abs() < 1e-7);
        assert!(matches!(geodesic_distance(&[2.0, 0.0], &[1.0, 0.0]), Err(SphereError::NotUnit(_))));
    }

    #[test]
    fn step_examples() {
        let s = riemannian_step(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s[0] - r).abs() < 1e-15 && (s[1] + r).abs() < 1e-15);
        let x = project_to_sphere(&[0.3, -0.2, 0.9]).unwrap();
        assert_eq!(riemannian_step(&x, &[0.0; 3], 0.5).unwrap(), x);
        let radial: Vec<f64> = x.iter().map(|v| 0.4 * v).collect();
        let y = riemannian_step(&x, &radial, 1.0).unwrap();
        assert!(y.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-15));
        let outward: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let flipped = riemannian_step(&x, &outward, 1.0).unwrap();
        assert!(flipped.iter().zip(&x).all(|(a, b)| (a + b).abs() < 1e-15));
        assert!(matches!(riemannian_step(&[1.0, 0.0], &[1.0, 0.0], 1.0), Err(SphereError::DegenerateStep { .. })));
    }

    #[test]
    fn embedding_round_trip() {
        let mut rng = SeededRng::new(5, Stream::Init);
        let nodes = vec![LaggedNode::target("A"), LaggedNode::new(Modality::Sentiment, "B", 3)];
        let emb = SphereEmbedding::random(nodes, 8, &mut rng);
        assert!(emb.max_norm_error() < 1e-12);
        let mut buf = Vec::new();
        emb.write_to(&mut buf).unwrap();
        let back = SphereEmbedding::read_from(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, emb);
        assert_eq!(back.sphere_dim(), 7);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit(dim: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1.0f64..1.0, dim)
                .prop_filter("nonzero", |v| norm(v) > 1e-3)
                .prop_map(|v| project_to_sphere(&v).unwrap())
        }

        proptest! {
            #[test]
            fn distance_is_symmetric_and_links_to_cosine(u in unit(6), v in unit(6)) {
                let a = geodesic_distance(&u, &v).unwrap();
                let b = geodesic_distance(&v, &u).unwrap();
                prop_assert_eq!(a, b);
                prop_assert!((a.cos() - dot(&u, &v)).abs() < 1e-9);
            }

            #[test]
            fn steps_stay_on_sphere(x in unit(5), grads in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 5), 1..20), eta in 0.0f64..2.0) {
                let mut x = x;
                for g in grads {
                    if let Ok(y) = riemannian_step(&x, &g, eta) {
                        x = y;
                    }
                    prop_assert!((norm(&x) - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
