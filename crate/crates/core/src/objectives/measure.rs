//! Functionals on probability measures, evaluated on empirical measures.
//!
//! A separable functional has the form
//! `G(mu) = int F dmu + 1/2 iint Phi(x - y) dmu(x) dmu(y)`, which on an
//! N-particle cloud becomes
//! `(1/N) sum_i F(x_i) + 1/(2N^2) sum_{i != j} Phi(x_i - x_j)`.
//! Self-pairs are excluded so logarithmic kernels stay finite.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use super::euclidean::PointFn;
use crate::error::{Error, Result};
use crate::types::ParticleCloud;

/// Pair distances below this are clamped before a logarithm is taken.
pub const MIN_PAIR_DISTANCE: f64 = 1e-12;

pub type CloudFn = Arc<dyn Fn(&ParticleCloud) -> f64 + Send + Sync>;

/// Interaction kernel `Phi`, applied to the difference `x - y`.
#[derive(Clone)]
pub enum PairKernel {
    /// `Phi(r) = quadratic * |r|^2 - logarithmic * ln|r|`.
    Radial { quadratic: f64, logarithmic: f64 },
    /// Arbitrary finite kernel; not assumed symmetric.
    General(PointFn),
}

impl fmt::Debug for PairKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairKernel::Radial {
                quadratic,
                logarithmic,
            } => write!(f, "Radial({quadratic} |r|^2 - {logarithmic} ln|r|)"),
            PairKernel::General(_) => f.write_str("General(..)"),
        }
    }
}

impl PairKernel {
    pub fn is_singular(&self) -> bool {
        matches!(self, PairKernel::Radial { logarithmic, .. } if *logarithmic != 0.0)
    }

    /// `Phi(r)`; increments `clamps` when a singular kernel's distance is clamped.
    #[inline]
    pub fn eval(&self, r: &[f64], clamps: &mut usize) -> f64 {
        match self {
            PairKernel::Radial {
                quadratic,
                logarithmic,
            } => {
                let r2: f64 = r.iter().map(|v| v * v).sum();
                radial(*quadratic, *logarithmic, r2, clamps)
            }
            PairKernel::General(f) => f(r),
        }
    }
}

#[inline]
fn radial(quadratic: f64, logarithmic: f64, r2: f64, clamps: &mut usize) -> f64 {
    let mut v = quadratic * r2;
    if logarithmic != 0.0 {
        const MIN_R2: f64 = MIN_PAIR_DISTANCE * MIN_PAIR_DISTANCE;
        let r2 = if r2 < MIN_R2 {
            *clamps += 1;
            MIN_R2
        } else {
            r2
        };
        v -= logarithmic * 0.5 * r2.ln();
    }
    v
}

#[derive(Clone)]
pub enum MeasureKind {
    General(CloudFn),
    Separable {
        confinement: Option<PointFn>,
        kernel: Option<PairKernel>,
    },
}

/// A functional `G: P_2(R^d) -> R`.
#[derive(Clone)]
pub struct MeasureObjectiveSpec {
    pub id: String,
    pub dim: usize,
    pub kind: MeasureKind,
    pub known_min_value: Option<f64>,
    offset: f64,
}

impl fmt::Debug for MeasureObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            MeasureKind::General(_) => "general".to_string(),
            MeasureKind::Separable {
                confinement,
                kernel,
            } => format!(
                "separable(F: {}, Phi: {:?})",
                confinement.is_some(),
                kernel
            ),
        };
        f.debug_struct("MeasureObjectiveSpec")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("kind", &kind)
            .field("known_min_value", &self.known_min_value)
            .finish()
    }
}

/// Sums of positions and squared norms; expands quadratic pair sums in O(1).
#[derive(Clone, Debug)]
pub(crate) struct Moments {
    sum: Vec<f64>,
    sum_sq: f64,
    n: f64,
}

impl Moments {
    pub(crate) fn of(points: &[f64], dim: usize) -> Self {
        let mut sum = vec![0.0; dim];
        let mut sum_sq = 0.0;
        for p in points.chunks_exact(dim) {
            for (s, v) in sum.iter_mut().zip(p) {
                *s += v;
                sum_sq += v * v;
            }
        }
        Self {
            sum,
            sum_sq,
            n: (points.len() / dim) as f64,
        }
    }

    /// `sum_j |y - p_j|^2` over all points.
    #[inline]
    fn sq_dist_sum(&self, y: &[f64]) -> f64 {
        let (mut yy, mut ys) = (0.0, 0.0);
        for (v, s) in y.iter().zip(&self.sum) {
            yy += v * v;
            ys += v * s;
        }
        (self.n * yy - 2.0 * ys + self.sum_sq).max(0.0)
    }
}

impl MeasureObjectiveSpec {
    pub fn general(
        id: impl Into<String>,
        dim: usize,
        f: impl Fn(&ParticleCloud) -> f64 + Send + Sync + 'static,
        known_min_value: Option<f64>,
    ) -> Self {
        Self {
            id: id.into(),
            dim,
            kind: MeasureKind::General(Arc::new(f)),
            known_min_value,
            offset: 0.0,
        }
    }

    pub fn separable(
        id: impl Into<String>,
        dim: usize,
        confinement: Option<PointFn>,
        kernel: Option<PairKernel>,
        known_min_value: Option<f64>,
    ) -> Self {
        Self {
            id: id.into(),
            dim,
            kind: MeasureKind::Separable {
                confinement,
                kernel,
            },
            known_min_value,
            offset: 0.0,
        }
    }

    /// 2-D Newtonian swarm `iint (|x-y|^2/2 - ln|x-y|) dmu dmu`; minimized by
    /// the uniform measure on the unit disk with energy 0.75.
    pub fn newtonian_energy(dim: usize) -> Result<Self> {
        require_dim(dim, 2)?;
        Ok(Self::separable(
            "newtonian2d",
            2,
            None,
            Some(PairKernel::Radial {
                quadratic: 1.0,
                logarithmic: 2.0,
            }),
            Some(0.75),
        ))
    }

    /// Spring swarm `1/2 iint |x-y|^2 dmu dmu`; zero on every Dirac measure.
    pub fn spring_energy(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension {
                expected: 1,
                got: 0,
            });
        }
        Ok(Self::separable(
            "spring",
            dim,
            None,
            Some(PairKernel::Radial {
                quadratic: 1.0,
                logarithmic: 0.0,
            }),
            Some(0.0),
        ))
    }

    /// Two quartic hoop wells at (-2, 0) and (2, 0) with logarithmic repulsion.
    pub fn double_hula_hoop(dim: usize) -> Result<Self> {
        require_dim(dim, 2)?;
        Ok(Self::separable(
            "hulahoop",
            2,
            Some(Arc::new(hula_hoop_potential)),
            Some(PairKernel::Radial {
                quadratic: 0.0,
                logarithmic: 1.0,
            }),
            None,
        ))
    }

    /// Constant functional, for tests and smoke runs.
    pub fn constant(dim: usize, value: f64) -> Self {
        Self::general("constant", dim, move |_| value, Some(value))
    }

    /// `G + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.offset += c;
        s.known_min_value = s.known_min_value.map(|v| v + c);
        s
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.kind, MeasureKind::Separable { .. })
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn confinement(&self) -> Option<&PointFn> {
        match &self.kind {
            MeasureKind::Separable { confinement, .. } => confinement.as_ref(),
            MeasureKind::General(_) => None,
        }
    }

    pub fn kernel(&self) -> Option<&PairKernel> {
        match &self.kind {
            MeasureKind::Separable { kernel, .. } => kernel.as_ref(),
            MeasureKind::General(_) => None,
        }
    }

    /// `G(mu^N)`.
    pub fn evaluate(&self, cloud: &ParticleCloud) -> Result<f64> {
        self.evaluate_with_diagnostics(cloud).map(|(v, _)| v)
    }

    /// `G(mu^N)` and the number of clamped pair distances.
    ///
    /// Particles are visited in a canonical (lexicographic) order, so the
    /// result is bitwise independent of the cloud's ordering.
    pub fn evaluate_with_diagnostics(&self, cloud: &ParticleCloud) -> Result<(f64, usize)> {
        if cloud.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: cloud.dim(),
            });
        }
        Ok(self.evaluate_unchecked(cloud))
    }

    pub(crate) fn evaluate_unchecked(&self, cloud: &ParticleCloud) -> (f64, usize) {
        let (confinement, kernel) = match &self.kind {
            MeasureKind::General(f) => return (f(cloud) + self.offset, 0),
            MeasureKind::Separable {
                confinement,
                kernel,
            } => (confinement, kernel),
        };
        let n = cloud.len();
        let order = canonical_order(cloud);
        let mut clamps = 0;
        let mut total = 0.0;
        if let Some(f) = confinement {
            let s: f64 = order.iter().map(|&i| f(cloud.point(i))).sum();
            total += s / n as f64;
        }
        if let Some(k) = kernel {
            let mut r = vec![0.0; cloud.dim()];
            let mut pairs = 0.0;
            let symmetric = matches!(k, PairKernel::Radial { .. });
            for (a, &i) in order.iter().enumerate() {
                let xi = cloud.point(i);
                let mut row = 0.0;
                let partners = if symmetric { &order[a + 1..] } else { &order[..] };
                for &j in partners {
                    if j == i {
                        continue;
                    }
                    for ((rv, u), v) in r.iter_mut().zip(xi).zip(cloud.point(j)) {
                        *rv = u - v;
                    }
                    row += k.eval(&r, &mut clamps);
                }
                pairs += if symmetric { 2.0 * row } else { row };
            }
            total += pairs / (2.0 * (n * n) as f64);
        }
        (total + self.offset, clamps)
    }

    /// The part of `N * G` that depends on particle `i`, with particle `i`
    /// moved to `y` and every other particle at `points[j]`:
    /// `F(y) + 1/(2N) sum_{j != i} [Phi(y - p_j) + Phi(p_j - y)]`.
    ///
    /// `moments`, when given, must be the moments of `points`; the quadratic
    /// part of a radial kernel is then evaluated in O(d).
    pub(crate) fn particle_score(
        &self,
        y: &[f64],
        points: &[f64],
        i: usize,
        moments: Option<&Moments>,
        clamps: &mut usize,
    ) -> f64 {
        let d = self.dim;
        let n = points.len() / d;
        let mut score = self.confinement().map_or(0.0, |f| f(y));
        let Some(kernel) = self.kernel() else {
            return score;
        };
        let inv_n = 1.0 / n as f64;
        match kernel {
            PairKernel::Radial {
                quadratic,
                logarithmic,
            } => {
                let own = &points[i * d..(i + 1) * d];
                let mut interaction = 0.0;
                let quad_done = match moments {
                    Some(m) if *quadratic != 0.0 => {
                        let own_sq: f64 = y.iter().zip(own).map(|(a, b)| (a - b) * (a - b)).sum();
                        interaction += quadratic * (m.sq_dist_sum(y) - own_sq).max(0.0);
                        true
                    }
                    _ => false,
                };
                let q = if quad_done { 0.0 } else { *quadratic };
                if *logarithmic != 0.0 {
                    interaction += quadratic_and_log_sum(q, *logarithmic, y, points, i, clamps);
                } else if q != 0.0 {
                    for (j, p) in points.chunks_exact(d).enumerate() {
                        if j != i {
                            interaction += q * y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                        }
                    }
                }
                // Phi symmetric: both directed sums coincide.
                score += interaction * inv_n;
            }
            PairKernel::General(phi) => {
                let mut r = vec![0.0; d];
                let mut interaction = 0.0;
                for (j, p) in points.chunks_exact(d).enumerate() {
                    if j == i {
                        continue;
                    }
                    for ((rv, a), b) in r.iter_mut().zip(y).zip(p) {
                        *rv = a - b;
                    }
                    interaction += phi(&r);
                    r.iter_mut().for_each(|v| *v = -*v);
                    interaction += phi(&r);
                }
                score += 0.5 * interaction * inv_n;
            }
        }
        score
    }
}

/// `sum_{j != i} (q |y - p_j|^2 - l ln|y - p_j|)`, taking one logarithm per
/// block of squared distances. Blocks hold at most four clamped distances,
/// so their products stay within the normal range unless a distance exceeds
/// 1e30, in which case the block is flushed early.
fn quadratic_and_log_sum(q: f64, l: f64, y: &[f64], points: &[f64], i: usize, clamps: &mut usize) -> f64 {
    const MIN_R2: f64 = MIN_PAIR_DISTANCE * MIN_PAIR_DISTANCE;
    let d = y.len();
    let (mut quad, mut log_sum) = (0.0, 0.0);
    let (mut prod, mut in_block) = (1.0f64, 0);
    for (j, p) in points.chunks_exact(d).enumerate() {
        if j == i {
            continue;
        }
        let mut r2: f64 = y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
        quad += r2;
        if r2 < MIN_R2 {
            *clamps += 1;
            r2 = MIN_R2;
        }
        if r2 > 1e30 {
            log_sum += r2.ln();
            continue;
        }
        prod *= r2;
        in_block += 1;
        if in_block == 4 {
            log_sum += prod.ln();
            prod = 1.0;
            in_block = 0;
        }
    }
    log_sum += prod.ln();
    q * quad - l * 0.5 * log_sum
}

fn require_dim(dim: usize, expected: usize) -> Result<()> {
    if dim == expected {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got: dim })
    }
}

/// `V(x) = min_c (|x - c|^2 - 1)^2 / 2` over the hoop centres (-2, 0), (2, 0).
pub fn hula_hoop_potential(x: &[f64]) -> f64 {
    let well = |cx: f64| {
        let r2 = (x[0] - cx).powi(2) + x[1..].iter().map(|v| v * v).sum::<f64>();
        0.5 * (r2 - 1.0).powi(2)
    };
    well(-2.0).min(well(2.0))
}

fn canonical_order(cloud: &ParticleCloud) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| {
        cloud
            .point(a)
            .iter()
            .zip(cloud.point(b))
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// `G(mu^N)` for `spec` on `cloud`.
pub fn empirical_functional(spec: &MeasureObjectiveSpec, cloud: &ParticleCloud) -> Result<f64> {
    spec.evaluate(cloud)
}
