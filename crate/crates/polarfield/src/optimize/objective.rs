//! The per-pixel objectives: normal cross-correlation (diffuse and
//! specular), normalized Ward-lobe least squares, and linear albedo least
//! squares. All gradients are analytic; a central-difference checker lives
//! alongside for verification.

use crate::geometry::{Direction3, ShadingFrame, Vec3};

use super::solver::{LeastSquares, Objective};
use super::FitError;

fn normalize_obs(obs: &[f64]) -> Option<Vec<f64>> {
    let norm = obs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-300 {
        return None;
    }
    Some(obs.iter().map(|v| v / norm).collect())
}

/// Unit-normal parameterization: `n(u, v) = normalize(n0 + u t1 + v t2)`
/// over the tangent basis of the anchor. Two free parameters, singular only
/// at the antipode of the anchor.
#[derive(Debug, Clone)]
pub struct TangentParam {
    anchor: Vec3,
    t1: Vec3,
    t2: Vec3,
}

impl TangentParam {
    pub fn new(anchor: Direction3) -> TangentParam {
        let (t1, t2) = ShadingFrame::tangent_basis(anchor);
        TangentParam { anchor: anchor.as_vec(), t1, t2 }
    }

    pub fn normal(&self, x: &[f64]) -> Direction3 {
        let w = self.anchor + self.t1.scale(x[0]) + self.t2.scale(x[1]);
        Direction3::from_vec(w).expect("anchor keeps w away from zero")
    }

    /// Normal plus the two Jacobian columns d n / d u and d n / d v.
    fn normal_jacobian(&self, x: &[f64]) -> (Vec3, Vec3, Vec3) {
        let w = self.anchor + self.t1.scale(x[0]) + self.t2.scale(x[1]);
        let wn = w.norm();
        let n = w.scale(1.0 / wn);
        let proj = |t: Vec3| (t - n.scale(n.dot(t))).scale(1.0 / wn);
        (n, proj(self.t1), proj(self.t2))
    }
}

/// Negative normalized cross-correlation between a geometric response model
/// and the observed sequence. The diffuse model is `n . w_k`; the specular
/// model is `w_r^k . w_o` with `w_r = 2 (w_k . n) n - w_k`.
#[derive(Debug)]
pub struct NormalCorrelation {
    dirs: Vec<Vec3>,
    obs_unit: Vec<f64>,
    param: TangentParam,
    omega_o: Option<Vec3>,
}

impl NormalCorrelation {
    pub fn diffuse(
        dirs: &[Direction3],
        obs: &[f64],
        n_init: Direction3,
    ) -> Result<NormalCorrelation, FitError> {
        Self::build(dirs, obs, n_init, None)
    }

    pub fn specular(
        dirs: &[Direction3],
        obs: &[f64],
        n_init: Direction3,
        omega_o: Direction3,
    ) -> Result<NormalCorrelation, FitError> {
        Self::build(dirs, obs, n_init, Some(omega_o.as_vec()))
    }

    fn build(
        dirs: &[Direction3],
        obs: &[f64],
        n_init: Direction3,
        omega_o: Option<Vec3>,
    ) -> Result<NormalCorrelation, FitError> {
        if dirs.len() != obs.len() {
            return Err(FitError::LengthMismatch(dirs.len(), obs.len()));
        }
        if dirs.len() < 3 {
            return Err(FitError::Underdetermined(dirs.len()));
        }
        let obs_unit = normalize_obs(obs).ok_or(FitError::Underdetermined(0))?;
        Ok(NormalCorrelation {
            dirs: dirs.iter().map(|d| d.as_vec()).collect(),
            obs_unit,
            param: TangentParam::new(n_init),
            omega_o,
        })
    }

    pub fn normal_at(&self, x: &[f64]) -> Direction3 {
        self.param.normal(x)
    }

    /// Correlation coefficient at the parameter point (the negated
    /// objective), in [-1, 1].
    pub fn correlation(&self, x: &[f64]) -> f64 {
        -self.value(x)
    }

    fn model(&self, n: Vec3, k: usize) -> f64 {
        match self.omega_o {
            None => n.dot(self.dirs[k]),
            Some(wo) => 2.0 * self.dirs[k].dot(n) * n.dot(wo) - self.dirs[k].dot(wo),
        }
    }

    /// d model_k / d n
    fn model_grad(&self, n: Vec3, k: usize) -> Vec3 {
        match self.omega_o {
            None => self.dirs[k],
            Some(wo) => self.dirs[k].scale(2.0 * n.dot(wo)) + wo.scale(2.0 * self.dirs[k].dot(n)),
        }
    }
}

impl Objective for NormalCorrelation {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.param.normal(x).as_vec();
        let mut dot_mo = 0.0;
        let mut mm = 0.0;
        for k in 0..self.dirs.len() {
            let m = self.model(n, k);
            dot_mo += m * self.obs_unit[k];
            mm += m * m;
        }
        let norm = mm.sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        -dot_mo / norm
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (n, dn_du, dn_dv) = self.param.normal_jacobian(x);
        let mut m = Vec::with_capacity(self.dirs.len());
        let mut dot_mo = 0.0;
        let mut mm = 0.0;
        for k in 0..self.dirs.len() {
            let mk = self.model(n, k);
            dot_mo += mk * self.obs_unit[k];
            mm += mk * mk;
            m.push(mk);
        }
        let norm = mm.sqrt();
        if norm < 1e-300 {
            grad[0] = 0.0;
            grad[1] = 0.0;
            return 0.0;
        }
        let corr = dot_mo / norm;
        // d(-corr)/dm_k = -(o_k - corr * m_k / norm) / norm
        let mut g_n = Vec3::ZERO;
        for k in 0..self.dirs.len() {
            let dval_dm = -(self.obs_unit[k] - corr * m[k] / norm) / norm;
            g_n = g_n + self.model_grad(n, k).scale(dval_dm);
        }
        grad[0] = g_n.dot(dn_du);
        grad[1] = g_n.dot(dn_dv);
        -corr
    }
}

/// Normalized Ward-lobe least squares in log-sigma: residuals are the unit
/// model vector minus the unit observation vector; positivity of sigma is
/// structural through the exponential.
pub struct SigmaObjective {
    obs_unit: Vec<f64>,
    /// per light: (ht^2, hb^2, 1 + hn, sqrt((wo.n)(wi.n)))
    terms: Vec<(f64, f64, f64, f64)>,
}

impl SigmaObjective {
    pub fn new(
        dirs: &[Direction3],
        obs: &[f64],
        omega_o: Direction3,
        frame: &ShadingFrame,
    ) -> Result<SigmaObjective, FitError> {
        if dirs.len() != obs.len() {
            return Err(FitError::LengthMismatch(dirs.len(), obs.len()));
        }
        let n = frame.normal;
        let cos_o = omega_o.dot(n);
        if cos_o <= 0.0 {
            return Err(FitError::Underdetermined(0));
        }
        let mut terms = Vec::new();
        let mut kept_obs = Vec::new();
        for (wi, o) in dirs.iter().zip(obs) {
            let cos_i = wi.dot(n);
            if cos_i <= 0.0 {
                continue;
            }
            let h = (wi.as_vec() + omega_o.as_vec()).normalized().expect("above horizon");
            let ht = h.dot(frame.tangent.as_vec());
            let hb = h.dot(frame.bitangent.as_vec());
            let hn = h.dot(n.as_vec());
            terms.push((ht * ht, hb * hb, 1.0 + hn, (cos_o * cos_i).sqrt()));
            kept_obs.push(*o);
        }
        if terms.len() < 3 {
            return Err(FitError::Underdetermined(terms.len()));
        }
        let obs_unit = normalize_obs(&kept_obs).ok_or(FitError::Underdetermined(0))?;
        Ok(SigmaObjective { obs_unit, terms })
    }

    pub fn sigma_at(x: &[f64]) -> [f64; 2] {
        [x[0].exp(), x[1].exp()]
    }

    pub fn params_for(sigma: [f64; 2]) -> [f64; 2] {
        [sigma[0].ln(), sigma[1].ln()]
    }

    /// Lobe values and their partials w.r.t. (log sx, log sy).
    fn lobe(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sx = x[0].exp();
        let sy = x[1].exp();
        let inv_sx2 = 1.0 / (sx * sx);
        let inv_sy2 = 1.0 / (sy * sy);
        let scale = 1.0 / (4.0 * std::f64::consts::PI * sx * sy);
        let mut f = Vec::with_capacity(self.terms.len());
        let mut dfa = Vec::with_capacity(self.terms.len());
        let mut dfb = Vec::with_capacity(self.terms.len());
        for (p, q, denom, s) in &self.terms {
            let e = (-2.0 * (p * inv_sx2 + q * inv_sy2) / denom).exp();
            let fk = scale * e / s;
            // d/d(log sx): f * (4 p / (sx^2 denom) - 1)
            f.push(fk);
            dfa.push(fk * (4.0 * p * inv_sx2 / denom - 1.0));
            dfb.push(fk * (4.0 * q * inv_sy2 / denom - 1.0));
        }
        (f, dfa, dfb)
    }
}

impl Objective for SigmaObjective {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (f, _, _) = self.lobe(x);
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return 2.0; // both vectors unit: max distance^2 is bounded by 4
        }
        f.iter()
            .zip(&self.obs_unit)
            .map(|(fk, ok)| {
                let r = fk / norm - ok;
                r * r
            })
            .sum()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.terms.len();
        let mut r = vec![0.0; m];
        let mut jac = vec![0.0; m * 2];
        self.residuals_jacobian(x, &mut r, &mut jac);
        grad[0] = 2.0 * (0..m).map(|i| jac[i * 2] * r[i]).sum::<f64>();
        grad[1] = 2.0 * (0..m).map(|i| jac[i * 2 + 1] * r[i]).sum::<f64>();
        r.iter().map(|v| v * v).sum()
    }
}

impl LeastSquares for SigmaObjective {
    fn residual_count(&self) -> usize {
        self.terms.len()
    }

    fn residuals_jacobian(&self, x: &[f64], r: &mut [f64], jac: &mut [f64]) {
        let (f, dfa, dfb) = self.lobe(x);
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            for i in 0..f.len() {
                r[i] = -self.obs_unit[i];
                jac[i * 2] = 0.0;
                jac[i * 2 + 1] = 0.0;
            }
            return;
        }
        let fu: Vec<f64> = f.iter().map(|v| v / norm).collect();
        // d(f/|f|) = (df - fu (fu . df)) / |f|
        let fu_dfa: f64 = fu.iter().zip(&dfa).map(|(a, b)| a * b).sum();
        let fu_dfb: f64 = fu.iter().zip(&dfb).map(|(a, b)| a * b).sum();
        for i in 0..f.len() {
            r[i] = fu[i] - self.obs_unit[i];
            jac[i * 2] = (dfa[i] - fu[i] * fu_dfa) / norm;
            jac[i * 2 + 1] = (dfb[i] - fu[i] * fu_dfb) / norm;
        }
    }
}

/// Linear albedo least squares: `sum_k (rho b_k - o_k)^2` for a fixed basis.
pub struct AlbedoObjective {
    basis: Vec<f64>,
    obs: Vec<f64>,
}

impl AlbedoObjective {
    pub fn new(basis: Vec<f64>, obs: Vec<f64>) -> Result<AlbedoObjective, FitError> {
        if basis.len() != obs.len() {
            return Err(FitError::LengthMismatch(basis.len(), obs.len()));
        }
        if basis.len() < 3 || basis.iter().all(|b| b.abs() < 1e-300) {
            return Err(FitError::Underdetermined(basis.len()));
        }
        Ok(AlbedoObjective { basis, obs })
    }

    /// Exact minimizer `sum(b o) / sum(b^2)`; the oracle that iterative
    /// backends must reproduce.
    pub fn closed_form(&self) -> f64 {
        let bo: f64 = self.basis.iter().zip(&self.obs).map(|(b, o)| b * o).sum();
        let bb: f64 = self.basis.iter().map(|b| b * b).sum();
        bo / bb
    }
}

impl Objective for AlbedoObjective {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.basis
            .iter()
            .zip(&self.obs)
            .map(|(b, o)| {
                let r = x[0] * b - o;
                r * r
            })
            .sum()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut g = 0.0;
        let mut v = 0.0;
        for (b, o) in self.basis.iter().zip(&self.obs) {
            let r = x[0] * b - o;
            v += r * r;
            g += 2.0 * r * b;
        }
        grad[0] = g;
        v
    }
}

impl LeastSquares for AlbedoObjective {
    fn residual_count(&self) -> usize {
        self.basis.len()
    }

    fn residuals_jacobian(&self, x: &[f64], r: &mut [f64], jac: &mut [f64]) {
        for i in 0..self.basis.len() {
            r[i] = x[0] * self.basis[i] - self.obs[i];
            jac[i] = self.basis[i];
        }
    }
}

/// Largest relative disagreement between the analytic gradient and a central
/// finite difference at `x`.
pub fn gradient_check(obj: &dyn Objective, x: &[f64]) -> f64 {
    let n = obj.dim();
    let mut grad = vec![0.0; n];
    obj.value_grad(x, &mut grad);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let numeric = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
        let denom = grad[i].abs().max(numeric.abs()).max(1.0);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::spiral_directions;

    fn upper_dirs(n: usize) -> Vec<Direction3> {
        spiral_directions(n).unwrap().into_iter().filter(|d| d.z() > 0.05).collect()
    }

    #[test]
    fn diffuse_correlation_peaks_at_the_generating_normal() {
        // constraint-satisfying samples only, as the filter guarantees
        let truth = Direction3::new(0.2, -0.3, 0.93).unwrap();
        let dirs: Vec<Direction3> =
            upper_dirs(64).into_iter().filter(|d| d.dot(truth) > 0.0).collect();
        let obs: Vec<f64> = dirs.iter().map(|d| d.dot(truth)).collect();
        let obj = NormalCorrelation::diffuse(&dirs, &obs, truth).unwrap();
        assert!((obj.correlation(&[0.0, 0.0]) - 1.0).abs() < 1e-9);
        // moving away drops the correlation
        assert!(obj.correlation(&[0.05, 0.0]) < 1.0 - 1e-6);
    }

    #[test]
    fn correlation_is_scale_invariant() {
        let dirs = upper_dirs(48);
        let truth = Direction3::new(0.1, 0.2, 0.97).unwrap();
        let obs: Vec<f64> = dirs.iter().map(|d| d.dot(truth).max(0.0)).collect();
        let scaled: Vec<f64> = obs.iter().map(|v| v * 7.7).collect();
        let a = NormalCorrelation::diffuse(&dirs, &obs, truth).unwrap();
        let b = NormalCorrelation::diffuse(&dirs, &scaled, truth).unwrap();
        for x in [[0.0, 0.0], [0.1, -0.2], [0.3, 0.3]] {
            assert!((a.value(&x) - b.value(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn underdetermined_inputs_are_rejected() {
        let dirs = upper_dirs(48);
        let two = &dirs[..2];
        let e = NormalCorrelation::diffuse(two, &[1.0, 2.0], Direction3::PLUS_Z).unwrap_err();
        assert!(matches!(e, FitError::Underdetermined(2)));
        let zeros = vec![0.0; dirs.len()];
        let e = NormalCorrelation::diffuse(&dirs, &zeros, Direction3::PLUS_Z).unwrap_err();
        assert!(matches!(e, FitError::Underdetermined(_)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dirs = upper_dirs(64);
        let truth = Direction3::new(0.25, 0.1, 0.96).unwrap();
        let obs: Vec<f64> = dirs.iter().map(|d| (d.dot(truth) + 0.2).max(0.01)).collect();

        let diffuse = NormalCorrelation::diffuse(&dirs, &obs, Direction3::PLUS_Z).unwrap();
        let specular =
            NormalCorrelation::specular(&dirs, &obs, Direction3::PLUS_Z, Direction3::PLUS_Z)
                .unwrap();
        let frame = ShadingFrame::from_normal(Direction3::PLUS_Z);
        let sigma = SigmaObjective::new(&dirs, &obs, Direction3::PLUS_Z, &frame).unwrap();
        let albedo = AlbedoObjective::new(obs.clone(), obs.iter().map(|v| v * 0.5).collect()).unwrap();

        for x in [[0.03, -0.08], [0.2, 0.1], [-0.15, 0.25]] {
            assert!(gradient_check(&diffuse, &x) < 1e-6, "diffuse at {x:?}");
            assert!(gradient_check(&specular, &x) < 1e-6, "specular at {x:?}");
        }
        for x in [
            SigmaObjective::params_for([0.1, 0.1]),
            SigmaObjective::params_for([0.4, 0.07]),
        ] {
            assert!(gradient_check(&sigma, &x) < 1e-6, "sigma at {x:?}");
        }
        assert!(gradient_check(&albedo, &[0.3]) < 1e-8);
    }

    #[test]
    fn albedo_closed_form_is_exact() {
        let basis = vec![0.5, 0.25, 0.75, 1.0];
        let obs: Vec<f64> = basis.iter().map(|b| 0.7 * b).collect();
        let obj = AlbedoObjective::new(basis, obs).unwrap();
        assert!((obj.closed_form() - 0.7).abs() < 1e-10);
    }

    #[test]
    fn sigma_objective_filters_below_horizon_samples() {
        let dirs = spiral_directions(64).unwrap();
        let obs = vec![1.0; dirs.len()];
        let frame = ShadingFrame::from_normal(Direction3::PLUS_Z);
        let obj = SigmaObjective::new(&dirs, &obs, Direction3::PLUS_Z, &frame).unwrap();
        let above = dirs.iter().filter(|d| d.z() > 0.0).count();
        assert_eq!(obj.residual_count(), above);
    }
}
