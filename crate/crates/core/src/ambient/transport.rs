use nalgebra::{Matrix3, Vector3};

use super::{christoffel_at, AmbientError, AmbientMetric};

/// Piecewise-linear displacement path z(τ) over [0, t] with z(0) = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportHistory {
    taus: Vec<f64>,
    zs: Vec<Vector3<f64>>,
}

impl TransportHistory {
    pub fn new(taus: Vec<f64>, zs: Vec<Vector3<f64>>) -> Result<Self, AmbientError> {
        if taus.is_empty() || taus.len() != zs.len() {
            return Err(AmbientError::EmptyHistory);
        }
        if taus[0] != 0.0 {
            return Err(AmbientError::BadHistory("first sample must be at τ = 0".into()));
        }
        if zs[0].amax() != 0.0 {
            return Err(AmbientError::BadHistory("z(0) must vanish".into()));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AmbientError::BadHistory("samples must be strictly increasing".into()));
        }
        Ok(Self { taus, zs })
    }

    /// Only the τ = 0 sample.
    pub fn origin() -> Self {
        Self { taus: vec![0.0], zs: vec![Vector3::zeros()] }
    }

    /// z(τ) = τ ż sampled at `steps` uniform segments on [0, t].
    pub fn constant_rate(zdot: Vector3<f64>, t: f64, steps: usize) -> Result<Self, AmbientError> {
        if steps == 0 || t <= 0.0 {
            return Err(AmbientError::EmptyHistory);
        }
        let taus: Vec<f64> = (0..=steps).map(|m| t * m as f64 / steps as f64).collect();
        let zs = taus.iter().map(|&tau| zdot * tau).collect();
        Self::new(taus, zs)
    }

    /// Appends a sample; τ must exceed the last one.
    pub fn push(&mut self, tau: f64, z: Vector3<f64>) -> Result<(), AmbientError> {
        if tau <= *self.taus.last().expect("non-empty") {
            return Err(AmbientError::BadHistory("samples must be strictly increasing".into()));
        }
        self.taus.push(tau);
        self.zs.push(z);
        Ok(())
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn zs(&self) -> &[Vector3<f64>] {
        &self.zs
    }

    pub fn segments(&self) -> usize {
        self.taus.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        *self.taus.last().expect("non-empty")
    }

    pub fn z_end(&self) -> Vector3<f64> {
        *self.zs.last().expect("non-empty")
    }

    /// ż on segment s.
    pub fn zdot(&self, s: usize) -> Vector3<f64> {
        (self.zs[s + 1] - self.zs[s]) / (self.taus[s + 1] - self.taus[s])
    }

    fn z_in(&self, s: usize, tau: f64) -> Vector3<f64> {
        self.zs[s] + self.zdot(s) * (tau - self.taus[s])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// From τ = t back to τ = 0.
    Backward,
    /// From τ = 0 forward to τ = t.
    Forward,
}

/// M(τ) = Γ(y + z(τ)) ż on segment s.
fn gamma_zdot(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
    s: usize,
    tau: f64,
) -> Result<Matrix3<f64>, AmbientError> {
    let c = christoffel_at(metric, &(base + hist.z_in(s, tau)))?;
    Ok(c.along(&hist.zdot(s)))
}

fn rk4_segment(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
    s: usize,
    substeps: usize,
    dir: Direction,
    mut x: Matrix3<f64>,
) -> Result<Matrix3<f64>, AmbientError> {
    let (t0, t1) = (hist.taus[s], hist.taus[s + 1]);
    let n = substeps.max(1);
    let h = match dir {
        Direction::Forward => (t1 - t0) / n as f64,
        Direction::Backward => -(t1 - t0) / n as f64,
    };
    let mut tau = if dir == Direction::Forward { t0 } else { t1 };
    for _ in 0..n {
        let m0 = gamma_zdot(metric, base, hist, s, tau)?;
        let mh = gamma_zdot(metric, base, hist, s, tau + 0.5 * h)?;
        let m1 = gamma_zdot(metric, base, hist, s, tau + h)?;
        let k1 = -m0 * x;
        let k2 = -mh * (x + k1 * (0.5 * h));
        let k3 = -mh * (x + k2 * (0.5 * h));
        let k4 = -m1 * (x + k3 * h);
        x += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
        tau += h;
    }
    Ok(x)
}

/// Transport matrix P with A(0) = P A(t) for dA/dτ + Γ ż A = 0.
pub fn transport_matrix_backward(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
    substeps: usize,
) -> Result<Matrix3<f64>, AmbientError> {
    if metric.is_constant() {
        return Ok(Matrix3::identity());
    }
    let mut x = Matrix3::identity();
    for s in (0..hist.segments()).rev() {
        x = rk4_segment(metric, base, hist, s, substeps, Direction::Backward, x)?;
    }
    Ok(x)
}

/// Transport matrix Q with A(t) = Q A(0).
pub fn transport_matrix_forward(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
    substeps: usize,
) -> Result<Matrix3<f64>, AmbientError> {
    if metric.is_constant() {
        return Ok(Matrix3::identity());
    }
    let mut x = Matrix3::identity();
    for s in 0..hist.segments() {
        x = rk4_segment(metric, base, hist, s, substeps, Direction::Forward, x)?;
    }
    Ok(x)
}

/// Backward transport of `seed` from τ = t to τ = 0.
pub fn transport_tensor_ode(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
    seed: &Vector3<f64>,
    substeps: usize,
) -> Result<Vector3<f64>, AmbientError> {
    if hist.segments() == 0 {
        return Err(AmbientError::EmptyHistory);
    }
    Ok(transport_matrix_backward(metric, base, hist, substeps)? * seed)
}

/// (τ, point, transported vector).
pub type PathSample = (f64, Vector3<f64>, Vector3<f64>);

/// Forward transport of `seed` sampled at every knot (and substep) of the path.
/// Returns (τ, point, vector) triples.
pub fn transport_path(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
    seed: &Vector3<f64>,
    substeps: usize,
) -> Result<Vec<PathSample>, AmbientError> {
    let n = substeps.max(1);
    let mut out = vec![(0.0, *base, *seed)];
    let mut v = *seed;
    for s in 0..hist.segments() {
        let (t0, t1) = (hist.taus[s], hist.taus[s + 1]);
        let h = (t1 - t0) / n as f64;
        for q in 0..n {
            let tau = t0 + q as f64 * h;
            let m0 = gamma_zdot(metric, base, hist, s, tau)?;
            let mh = gamma_zdot(metric, base, hist, s, tau + 0.5 * h)?;
            let m1 = gamma_zdot(metric, base, hist, s, tau + h)?;
            let k1 = -m0 * v;
            let k2 = -mh * (v + k1 * (0.5 * h));
            let k3 = -mh * (v + k2 * (0.5 * h));
            let k4 = -m1 * (v + k3 * h);
            v += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
            let tau1 = tau + h;
            out.push((tau1, base + hist.z_in(s, tau1), v));
        }
    }
    Ok(out)
}

/// Iterated transport integrals by cumulative trapezoid, each history segment
/// split into `substeps` pieces. Backward terms are A₍ₖ₎(t, 0), forward terms are
/// A₍ₖ₎(0, t); both chain indices so that `terms[k-1] * v` is the k-th correction.
pub fn transport_series_terms(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
    k_max: usize,
    substeps: usize,
    dir: Direction,
) -> Result<Vec<Matrix3<f64>>, AmbientError> {
    if k_max == 0 {
        return Ok(Vec::new());
    }
    let n = substeps.max(1);
    // fine grid: for every piece, the left/right values of M with the segment's ż
    let mut pieces = Vec::with_capacity(hist.segments() * n);
    for s in 0..hist.segments() {
        let (t0, t1) = (hist.taus[s], hist.taus[s + 1]);
        let h = (t1 - t0) / n as f64;
        for q in 0..n {
            let a = t0 + q as f64 * h;
            pieces.push((h, gamma_zdot(metric, base, hist, s, a)?, gamma_zdot(metric, base, hist, s, a + h)?));
        }
    }
    let npts = pieces.len() + 1;
    let mut prev = vec![Matrix3::identity(); npts];
    let mut terms = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        let mut cur = vec![Matrix3::zeros(); npts];
        match dir {
            Direction::Backward => {
                for p in (0..pieces.len()).rev() {
                    let (h, ml, mr) = &pieces[p];
                    cur[p] = cur[p + 1] + (ml * prev[p] + mr * prev[p + 1]) * (0.5 * h);
                }
                terms.push(cur[0]);
            }
            Direction::Forward => {
                for p in 0..pieces.len() {
                    let (h, ml, mr) = &pieces[p];
                    cur[p + 1] = cur[p] - (ml * prev[p] + mr * prev[p + 1]) * (0.5 * h);
                }
                terms.push(cur[npts - 1]);
            }
        }
        prev = cur;
    }
    Ok(terms)
}

/// A₍₁₎(t, 0) = ∫₀ᵗ Γ(τ) ż(τ) dτ by 3-point Gauss on every segment.
pub fn first_transport_integral(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
) -> Result<Matrix3<f64>, AmbientError> {
    if metric.is_constant() {
        return Ok(Matrix3::zeros());
    }
    let g = (0.6f64).sqrt();
    let nodes = [(-g, 5.0 / 9.0), (0.0, 8.0 / 9.0), (g, 5.0 / 9.0)];
    let mut acc = Matrix3::zeros();
    for s in 0..hist.segments() {
        let (t0, t1) = (hist.taus[s], hist.taus[s + 1]);
        let (mid, half) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
        for (x, w) in nodes {
            acc += gamma_zdot(metric, base, hist, s, mid + half * x)? * (w * half);
        }
    }
    Ok(acc)
}

/// Parallel transfer of the unit normal from τ = 0 to τ = t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalTransport {
    /// n(t).
    pub n_t: Vector3<f64>,
    /// Full series tail n(t) - n(0).
    pub a1: Vector3<f64>,
    /// Tail without the first term.
    pub a2: Vector3<f64>,
    /// √(ã(t)(n(t), n(t))).
    pub norm: f64,
}

pub fn transport_normal(
    metric: &AmbientMetric,
    base: &Vector3<f64>,
    hist: &TransportHistory,
    normal: &Vector3<f64>,
    substeps: usize,
) -> Result<NormalTransport, AmbientError> {
    let q = transport_matrix_forward(metric, base, hist, substeps)?;
    let n_t = q * normal;
    let a1 = n_t - normal;
    let first = -first_transport_integral(metric, base, hist)?;
    let a2 = a1 - first * normal;
    let at = metric.metric(&(base + hist.z_end()));
    let norm = n_t.dot(&(at * n_t)).sqrt();
    Ok(NormalTransport { n_t, a1, a2, norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conformal() -> AmbientMetric {
        AmbientMetric::conformal_linear([0.4, -0.3, 0.2])
    }

    fn curved_history(t: f64, steps: usize) -> TransportHistory {
        let taus: Vec<f64> = (0..=steps).map(|m| t * m as f64 / steps as f64).collect();
        let zs = taus.iter().map(|&s| Vector3::new(s, 0.5 * s * s, -0.3 * s + s * s * s)).collect();
        TransportHistory::new(taus, zs).unwrap()
    }

    #[test]
    fn history_validation() {
        assert!(TransportHistory::new(vec![], vec![]).is_err());
        assert!(TransportHistory::new(vec![0.0, 0.0], vec![Vector3::zeros(); 2]).is_err());
        assert!(TransportHistory::new(vec![0.0], vec![Vector3::new(1.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn flat_transport_is_identity() {
        let h = curved_history(0.5, 10);
        let v = Vector3::new(1.0, 2.0, 3.0);
        let out = transport_tensor_ode(&AmbientMetric::flat(), &Vector3::zeros(), &h, &v, 4).unwrap();
        assert_eq!(out, v);
        let terms =
            transport_series_terms(&AmbientMetric::flat(), &Vector3::zeros(), &h, 4, 1, Direction::Backward).unwrap();
        assert!(terms.iter().all(|m| m.amax() == 0.0));
    }

    #[test]
    fn empty_history_rejected() {
        let out = transport_tensor_ode(&conformal(), &Vector3::zeros(), &TransportHistory::origin(), &Vector3::x(), 4);
        assert_eq!(out, Err(AmbientError::EmptyHistory));
    }

    #[test]
    fn forward_and_backward_are_inverse() {
        let h = curved_history(0.6, 12);
        let b = Vector3::new(0.1, 0.2, 0.3);
        let p = transport_matrix_backward(&conformal(), &b, &h, 8).unwrap();
        let q = transport_matrix_forward(&conformal(), &b, &h, 8).unwrap();
        assert!((p * q - Matrix3::identity()).amax() < 1e-10);
    }

    #[test]
    fn rk4_converges_to_fine_solution() {
        let h = TransportHistory::constant_rate(Vector3::new(0.5, -0.2, 0.4), 1.0, 1).unwrap();
        let b = Vector3::new(0.2, 0.0, -0.1);
        let fine = transport_matrix_backward(&conformal(), &b, &h, 400).unwrap();
        let e1 = (transport_matrix_backward(&conformal(), &b, &h, 10).unwrap() - fine).amax();
        let e2 = (transport_matrix_backward(&conformal(), &b, &h, 20).unwrap() - fine).amax();
        assert!(e1 / e2 > 12.0, "{e1} {e2}");
    }

    #[test]
    fn series_matches_ode_for_small_paths() {
        let h = curved_history(0.2, 200);
        let b = Vector3::new(0.0, 0.1, 0.0);
        let p = transport_matrix_backward(&conformal(), &b, &h, 2).unwrap();
        let terms = transport_series_terms(&conformal(), &b, &h, 4, 1, Direction::Backward).unwrap();
        let sum = terms.iter().fold(Matrix3::identity(), |a, m| a + m);
        assert!((sum - p).amax() < 1e-4);
        let q = transport_matrix_forward(&conformal(), &b, &h, 2).unwrap();
        let terms = transport_series_terms(&conformal(), &b, &h, 4, 1, Direction::Forward).unwrap();
        let sum = terms.iter().fold(Matrix3::identity(), |a, m| a + m);
        assert!((sum - q).amax() < 1e-4);
    }

    #[test]
    fn first_term_matches_gauss_integral() {
        let h = curved_history(0.3, 300);
        let b = Vector3::new(0.0, 0.1, 0.0);
        let terms = transport_series_terms(&conformal(), &b, &h, 1, 1, Direction::Backward).unwrap();
        let g = first_transport_integral(&conformal(), &b, &h).unwrap();
        assert!((terms[0] - g).amax() < 1e-5);
    }

    #[test]
    fn normal_transport_at_zero_time() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        let out =
            transport_normal(&AmbientMetric::flat(), &Vector3::zeros(), &TransportHistory::origin(), &n, 4).unwrap();
        assert_eq!(out.a1, Vector3::zeros());
        assert_eq!(out.a2, Vector3::zeros());
        assert_eq!(out.norm, 1.0);
    }

    #[test]
    fn transported_normal_keeps_unit_length() {
        let m = conformal();
        let b = Vector3::new(0.1, -0.1, 0.05);
        let a0 = m.metric(&b);
        let n = Vector3::new(0.0, 0.0, 1.0) / a0[(2, 2)].sqrt();
        let out = transport_normal(&m, &b, &curved_history(0.4, 20), &n, 10).unwrap();
        assert!((out.norm - 1.0).abs() < 1e-9);
    }
}
