//! Pressure laws, the repulsion law and the growth functions.

use crate::error::{Error, Result};
use crate::grid::ScalarField;

/// Densities are never evaluated closer than this to the congestion singularity.
pub const DELTA_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tissue {
    One,
    Two,
}

impl Tissue {
    pub fn other(self) -> Self {
        match self {
            Tissue::One => Tissue::Two,
            Tissue::Two => Tissue::One,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Tissue::One => 1,
            Tissue::Two => 2,
        }
    }
}

/// Physical and numerical constants of the two-tissue models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub beta1: f64,
    pub beta2: f64,
    /// Congestion parameter.
    pub eps: f64,
    /// Repulsion exponent, must exceed 1.
    pub m: f64,
    /// Coefficient of the fourth-order stabilizing flux.
    pub alpha: f64,
    pub g1: f64,
    pub g2: f64,
    pub p1_star: f64,
    pub p2_star: f64,
    /// When false the repulsion pressure is identically zero.
    pub repulsion: bool,
}

impl Default for ModelParams {
    /// Tissue parameters of the neural tube / presomitic mesoderm runs.
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.1,
            eps: 0.1,
            m: 30.0,
            alpha: 0.001,
            g1: 1.0,
            g2: 1.0,
            p1_star: 5.0,
            p2_star: 10.0,
            repulsion: true,
        }
    }
}

impl ModelParams {
    /// Checks every positivity constraint and returns all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be > 0 (got {v})"));
            }
        };
        positive("beta1", self.beta1);
        positive("beta2", self.beta2);
        positive("eps", self.eps);
        positive("g1", self.g1);
        positive("g2", self.g2);
        if !(self.m > 1.0) {
            errs.push(format!("m must be > 1 (got {})", self.m));
        }
        if !(self.alpha >= 0.0) {
            errs.push(format!("alpha must be >= 0 (got {})", self.alpha));
        }
        for (name, v) in [("p1_star", self.p1_star), ("p2_star", self.p2_star)] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Params(errs.join("; ")))
        }
    }

    pub fn beta(&self, t: Tissue) -> f64 {
        match t {
            Tissue::One => self.beta1,
            Tissue::Two => self.beta2,
        }
    }

    pub fn g(&self, t: Tissue) -> f64 {
        match t {
            Tissue::One => self.g1,
            Tissue::Two => self.g2,
        }
    }

    pub fn p_star(&self, t: Tissue) -> f64 {
        match t {
            Tissue::One => self.p1_star,
            Tissue::Two => self.p2_star,
        }
    }

    /// Same model with the roles of the two tissues exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            beta1: self.beta2,
            beta2: self.beta1,
            g1: self.g2,
            g2: self.g1,
            p1_star: self.p2_star,
            p2_star: self.p1_star,
            ..*self
        }
    }

    /// Linear growth `G_t(p) = g_t (p*_t - p)`.
    #[inline]
    pub fn growth_at(&self, t: Tissue, p: f64) -> f64 {
        self.g(t) * (self.p_star(t) - p)
    }
}

/// Congestion pressure `eps * n / (1 - n)` for one density value, with the
/// argument clamped below `1 - DELTA_CLAMP`. Returns the pressure and whether
/// the clamp was active.
#[inline]
pub fn congestion_at(n: f64, eps: f64) -> (f64, bool) {
    let cap = 1.0 - DELTA_CLAMP;
    let saturated = n >= cap;
    let n = n.clamp(0.0, cap);
    (eps * n / (1.0 - n), saturated)
}

/// `q_m(r) = m/(m-1) ((1+r)^(m-1) - 1)` evaluated in log space. Returns the
/// value and an overflow flag; overflow saturates to `f64::MAX`.
#[inline]
pub fn repulsion_at(r: f64, m: f64) -> (f64, bool) {
    let r = r.max(0.0);
    let expo = (m - 1.0) * r.ln_1p();
    let q = m / (m - 1.0) * expo.exp_m1();
    if q.is_finite() {
        (q, false)
    } else {
        (f64::MAX, true)
    }
}

/// A pressure field together with its clamp/overflow counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Flagged {
    pub field: ScalarField,
    pub flagged_cells: usize,
}

pub fn pressure_congestion(n: &ScalarField, eps: f64) -> Flagged {
    let mut flagged_cells = 0;
    let field = n.map(|x| {
        let (p, sat) = congestion_at(x, eps);
        flagged_cells += sat as usize;
        p
    });
    Flagged { field, flagged_cells }
}

pub fn pressure_repulsion(r: &ScalarField, m: f64) -> Flagged {
    let mut flagged_cells = 0;
    let field = r.map(|x| {
        let (q, over) = repulsion_at(x, m);
        flagged_cells += over as usize;
        q
    });
    Flagged { field, flagged_cells }
}

/// Both tissue pressures and their building blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Pressures {
    pub p1: ScalarField,
    pub p2: ScalarField,
    pub congestion: ScalarField,
    pub repulsion: ScalarField,
    pub saturated_cells: usize,
    pub overflow_cells: usize,
}

/// `p1 = p_eps(n1 + n2) + n2 q_m(n1 n2)` and symmetrically for `p2`.
pub fn total_pressures(n1: &ScalarField, n2: &ScalarField, params: &ModelParams) -> Pressures {
    let total = n1.zip_map(n2, |a, b| a.max(0.0) + b.max(0.0));
    let pe = pressure_congestion(&total, params.eps);
    let (q, overflow_cells) = if params.repulsion {
        let r = n1.zip_map(n2, |a, b| a.max(0.0) * b.max(0.0));
        let q = pressure_repulsion(&r, params.m);
        (q.field, q.flagged_cells)
    } else {
        (ScalarField::zeros(n1.spec), 0)
    };
    let mut p1 = pe.field.clone();
    let mut p2 = pe.field.clone();
    for k in 0..p1.values.len() {
        // saturating add keeps the fields finite when q_m overflowed
        p1.values[k] = (p1.values[k] + n2.values[k].max(0.0) * q.values[k]).min(f64::MAX);
        p2.values[k] = (p2.values[k] + n1.values[k].max(0.0) * q.values[k]).min(f64::MAX);
    }
    Pressures {
        p1,
        p2,
        congestion: pe.field,
        repulsion: q,
        saturated_cells: pe.flagged_cells,
        overflow_cells,
    }
}

/// Linear growth rate field of tissue `which` for pressure `p`.
pub fn growth(p: &ScalarField, which: Tissue, params: &ModelParams) -> ScalarField {
    p.map(|x| params.growth_at(which, x))
}

/// Growth through an arbitrary law, for decreasing non-linear `G`.
pub fn growth_with(p: &ScalarField, law: impl Fn(f64) -> f64) -> ScalarField {
    p.map(law)
}

/// Signed margins of the sufficient coercivity condition
/// `beta1 g2 > 1/4` and `beta2 g1 > 1/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    pub holds: bool,
    pub margins: (f64, f64),
}

impl CoercivityReport {
    /// Lower bound on the coercivity constant of the stationary form,
    /// `min(beta1 - 1/(4 g2), beta2 - 1/(4 g1))`.
    pub fn lambda(params: &ModelParams) -> f64 {
        (params.beta1 - 0.25 / params.g2).min(params.beta2 - 0.25 / params.g1)
    }
}

pub fn coercivity_check(params: &ModelParams) -> CoercivityReport {
    let margins = (params.beta1 * params.g2 - 0.25, params.beta2 * params.g1 - 0.25);
    CoercivityReport {
        holds: margins.0 > 0.0 && margins.1 > 0.0,
        margins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn congestion_values() {
        assert_eq!(congestion_at(0.0, 0.1).0, 0.0);
        assert!(close(congestion_at(0.5, 0.1).0, 0.1, 1e-15));
        assert!(close(congestion_at(0.9, 0.1).0, 0.9, 1e-12));
        let (p, sat) = congestion_at(1.0, 0.1);
        assert!(sat && p.is_finite());
    }

    #[test]
    fn congestion_counts_saturated_cells() {
        let spec = GridSpec::unit_square(4, 4).unwrap();
        let mut n = ScalarField::constant(spec, 0.5);
        n.set(0, 0, 1.0);
        n.set(1, 0, 1.0 - 1e-9);
        let out = pressure_congestion(&n, 0.1);
        assert_eq!(out.flagged_cells, 2);
        assert!(out.field.is_finite());
    }

    #[test]
    fn repulsion_values() {
        for m in [1.5, 2.0, 30.0, 1e6] {
            assert_eq!(repulsion_at(0.0, m).0, 0.0);
        }
        for r in [0.0, 0.1, 0.37, 2.0] {
            assert!(close(repulsion_at(r, 2.0).0, 2.0 * r, 1e-14));
        }
        let (q, over) = repulsion_at(0.25, 1e6);
        assert!(over && q == f64::MAX);
    }

    #[test]
    fn repulsion_tends_to_exponential_at_scale_c_over_m() {
        // frozen: the 1/m correction of q_m(c/m) is ((e^c - 1) - e^c (c + c^2/2)) / m
        for c in [0.5_f64, 1.0, 2.0] {
            let mut prev = f64::INFINITY;
            for m in [1e2, 1e3, 1e4, 1e5, 1e6] {
                let err = (repulsion_at(c / m, m).0 - c.exp_m1()).abs();
                assert!(err < prev, "c={c} m={m}");
                assert!(err < 2.0 * c * c * c.exp() / m);
                prev = err;
            }
        }
        assert!((repulsion_at(1e-6, 1e6).0 - 1.718_281_828_459_045).abs() < 1e-5);
    }

    #[test]
    fn total_pressure_examples() {
        let spec = GridSpec::unit_square(4, 4).unwrap();
        let p = ModelParams { eps: 0.1, m: 2.0, ..ModelParams::default() };
        let half = ScalarField::constant(spec, 0.5);
        let zero = ScalarField::zeros(spec);
        let out = total_pressures(&half, &zero, &p);
        assert_eq!(out.p1, out.p2);
        assert!(close(out.p1.values[0], 0.1, 1e-15));
        let out = total_pressures(&zero, &zero, &p);
        assert_eq!(out.p1.max_abs(), 0.0);
        let n = ScalarField::constant(spec, 0.3);
        let out = total_pressures(&n, &n, &p);
        // p_eps(0.6) = 0.15, q_2(0.09) = 0.18
        assert!(close(out.p1.values[3], 0.204, 1e-14));
        assert!(close(out.p2.values[3], 0.204, 1e-14));
    }

    #[test]
    fn growth_examples() {
        let spec = GridSpec::unit_square(4, 4).unwrap();
        let p = ModelParams::default();
        assert_eq!(growth(&ScalarField::constant(spec, 5.0), Tissue::One, &p).max_abs(), 0.0);
        assert_eq!(growth(&ScalarField::zeros(spec), Tissue::One, &p).values[0], 5.0);
        assert_eq!(growth(&ScalarField::zeros(spec), Tissue::Two, &p).values[0], 10.0);
        let g = growth_with(&ScalarField::constant(spec, 1.0), |s| (-s).exp());
        assert!(close(g.values[0], (-1.0f64).exp(), 1e-15));
    }

    #[test]
    fn coercivity_examples() {
        let unit = ModelParams { beta1: 1.0, beta2: 1.0, g1: 1.0, g2: 1.0, ..ModelParams::default() };
        let r = coercivity_check(&unit);
        assert!(r.holds);
        assert_eq!(r.margins, (0.75, 0.75));
        let r = coercivity_check(&ModelParams::default());
        assert!(!r.holds);
        assert!(close(r.margins.0, 0.25, 1e-15) && close(r.margins.1, -0.15, 1e-15));
        let edge = ModelParams { beta1: 0.25, g2: 1.0, ..unit };
        assert!(!coercivity_check(&edge).holds);
    }

    #[test]
    fn validation_lists_every_violation() {
        let bad = ModelParams { beta1: 0.0, m: 1.0, eps: -1.0, ..ModelParams::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("beta1") && msg.contains("m must") && msg.contains("eps"));
    }

    proptest! {
        #[test]
        fn pressures_are_monotone(a in 0.0f64..0.45, b in 0.0f64..0.45, da in 0.0f64..0.05, db in 0.0f64..0.05) {
            let spec = GridSpec::unit_square(4, 4).unwrap();
            let p = ModelParams::default();
            let f = |x: f64| ScalarField::constant(spec, x);
            let lo = total_pressures(&f(a), &f(b), &p);
            let hi = total_pressures(&f(a + da), &f(b + db), &p);
            prop_assert!(hi.p1.values[0] >= lo.p1.values[0]);
            prop_assert!(hi.p2.values[0] >= lo.p2.values[0]);
            prop_assert!(congestion_at(a + da, 0.1).0 >= congestion_at(a, 0.1).0);
            prop_assert!(repulsion_at(a + da, 30.0).0 >= repulsion_at(a, 30.0).0);
        }

        #[test]
        fn segregated_pressures_collapse(a in 0.0f64..0.99) {
            let spec = GridSpec::unit_square(4, 4).unwrap();
            let n1 = ScalarField::from_fn(spec, |x, _| if x < 0.0 { a } else { 0.0 });
            let n2 = ScalarField::from_fn(spec, |x, _| if x >= 0.0 { a } else { 0.0 });
            let out = total_pressures(&n1, &n2, &ModelParams::default());
            let pe = pressure_congestion(&n1.zip_map(&n2, |x, y| x + y), 0.1).field;
            prop_assert_eq!(&out.p1, &pe);
            prop_assert_eq!(&out.p2, &pe);
        }
    }
}
