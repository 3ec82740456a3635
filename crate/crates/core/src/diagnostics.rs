//! Segregation, complementarity and curl-structure certificates.

use std::fmt::Write as _;

use crate::constitutive::{congestion_at, ModelParams, DELTA_CLAMP};
use crate::dynamics::SimState;
use crate::grid::{assert_same_grid, curl2d, ScalarField, VectorField};

/// Cells whose congestion pressure is at most this are left out of the
/// complementarity residual.
pub const PRESSURE_THRESHOLD: f64 = 1e-10;

/// `Σ n1 n2 hx hy`.
pub fn segregation_metric(n1: &ScalarField, n2: &ScalarField) -> f64 {
    assert_same_grid(&n1.spec, &n2.spec);
    n1.values
        .iter()
        .zip(&n2.values)
        .map(|(a, b)| (a * b).max(0.0))
        .sum::<f64>()
        * n1.spec.cell_area()
}

/// `Σ p_ε(n)(1 - n) hx hy` over pressurized cells.
pub fn complementarity_residual(n: &ScalarField, eps: f64) -> f64 {
    n.values
        .iter()
        .map(|&v| {
            let (p, _) = congestion_at(v, eps);
            if p > PRESSURE_THRESHOLD {
                p * (1.0 - v.min(1.0 - DELTA_CLAMP))
            } else {
                0.0
            }
        })
        .sum::<f64>()
        * n.spec.cell_area()
}

/// `∫ n(1 - n)`, the distance of a density from indicator values.
pub fn indicator_distance(n: &ScalarField) -> f64 {
    n.values.iter().map(|v| (v * (1.0 - v)).max(0.0)).sum::<f64>() * n.spec.cell_area()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurlStats {
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
    pub l2: f64,
}

impl CurlStats {
    pub fn of(v: &VectorField) -> Self {
        let c = curl2d(v);
        Self {
            min: c.min(),
            max: c.max(),
            max_abs: c.max_abs(),
            l2: c.norm_l2(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub overlap: f64,
    pub comp_residual: f64,
    pub curl1: CurlStats,
    pub curl2: CurlStats,
    pub clamp_count: usize,
}

pub fn record_for(state: &SimState, params: &ModelParams) -> DiagnosticRecord {
    let n = state.n1.zip_map(&state.n2, |a, b| a + b);
    DiagnosticRecord {
        t: state.t,
        mass1: state.n1.integral(),
        mass2: state.n2.integral(),
        overlap: segregation_metric(&state.n1, &state.n2),
        comp_residual: complementarity_residual(&n, params.eps),
        curl1: CurlStats::of(&state.v1),
        curl2: CurlStats::of(&state.v2),
        clamp_count: state.clamp_count,
    }
}

pub const OBSERVER_HEADER: &str = "t,mass1,mass2,overlap,comp_residual,max_abs_curl_v2,min_curl_v2,clamp_count";

impl DiagnosticRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            self.t,
            self.mass1,
            self.mass2,
            self.overlap,
            self.comp_residual,
            self.curl2.max_abs,
            self.curl2.min,
            self.clamp_count
        )
    }
}

pub fn records_to_csv(records: &[DiagnosticRecord]) -> String {
    let mut out = String::from(OBSERVER_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Where the two lower-half boxes and the probe line sit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurlRegions {
    /// Fraction of the width counted as "left" and "right" wall strips.
    pub strip_fraction: f64,
    /// Posterior region is the lower half when true.
    pub posterior_is_lower: bool,
    /// Height of the sign-change probe line.
    pub probe_y: f64,
    /// Only sign changes within this distance of an interface count.
    pub probe_radius: f64,
}

impl Default for CurlRegions {
    fn default() -> Self {
        Self {
            strip_fraction: 0.25,
            posterior_is_lower: true,
            probe_y: -0.25,
            probe_radius: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurlSignature {
    pub posterior_left_mean: f64,
    pub posterior_right_mean: f64,
    pub anterior_sign_changes: usize,
}

/// Mean curl in the posterior wall strips and sign changes of the curl
/// along the probe line near the given interface abscissae.
pub fn curl_signature(v: &VectorField, interfaces_x: &[f64], regions: &CurlRegions) -> CurlSignature {
    let s = v.spec;
    let c = curl2d(v);
    let width = s.x_max - s.x_min;
    let y_mid = 0.5 * (s.y_min + s.y_max);
    let posterior = |y: f64| if regions.posterior_is_lower { y < y_mid } else { y > y_mid };
    let (mut left, mut nl, mut right, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for j in 0..s.ny {
        if !posterior(s.yc(j)) {
            continue;
        }
        for i in 0..s.nx {
            let x = s.xc(i);
            if x < s.x_min + regions.strip_fraction * width {
                left += c.at(i, j);
                nl += 1;
            } else if x > s.x_max - regions.strip_fraction * width {
                right += c.at(i, j);
                nr += 1;
            }
        }
    }
    let probe_j = (((regions.probe_y - s.y_min) / s.hy).floor().max(0.0) as usize).min(s.ny - 1);
    let near = |x: f64| interfaces_x.iter().any(|&xi| (x - xi).abs() <= regions.probe_radius);
    let mut changes = 0;
    for i in 1..s.nx {
        let (a, b) = (c.at(i - 1, probe_j), c.at(i, probe_j));
        if a * b < 0.0 && near(0.5 * (s.xc(i - 1) + s.xc(i))) {
            changes += 1;
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    CurlSignature {
        posterior_left_mean: mean(left, nl),
        posterior_right_mean: mean(right, nr),
        anterior_sign_changes: changes,
    }
}

/// One row of [`limit_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub m: f64,
    pub alpha: f64,
    pub overlap: f64,
    pub comp_residual: f64,
    pub indicator_distance: f64,
    pub failure: Option<String>,
}

/// Runs `simulate` for every `(ε, m, α)` tuple and tabulates the limit
/// residuals of the final densities. Failed runs are kept as annotated rows.
pub fn limit_sweep<F>(base: &ModelParams, tuples: &[(f64, f64, f64)], simulate: F) -> Vec<SweepRow>
where
    F: Fn(&ModelParams) -> crate::Result<(ScalarField, ScalarField)> + Sync,
{
    use rayon::prelude::*;
    tuples
        .par_iter()
        .map(|&(eps, m, alpha)| {
            let params = ModelParams { eps, m, alpha, ..*base };
            let mut row = SweepRow {
                eps,
                m,
                alpha,
                overlap: f64::NAN,
                comp_residual: f64::NAN,
                indicator_distance: f64::NAN,
                failure: None,
            };
            match simulate(&params) {
                Ok((n1, n2)) => {
                    let n = n1.zip_map(&n2, |a, b| a + b);
                    row.overlap = segregation_metric(&n1, &n2);
                    row.comp_residual = complementarity_residual(&n, eps);
                    row.indicator_distance = indicator_distance(&n);
                }
                Err(e) => row.failure = Some(e.to_string()),
            }
            row
        })
        .collect()
}

/// True when every column strictly decreases down the table.
pub fn sweep_is_monotone(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| {
        w[0].failure.is_none()
            && w[1].failure.is_none()
            && w[1].overlap < w[0].overlap
            && w[1].comp_residual < w[0].comp_residual
            && w[1].indicator_distance < w[0].indicator_distance
    })
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("eps,m,alpha,overlap,comp_residual,indicator_distance,status\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:.17e},{:.17e},{:.17e},{}",
            r.eps,
            r.m,
            r.alpha,
            r.overlap,
            r.comp_residual,
            r.indicator_distance,
            r.failure.as_deref().map(|f| f.replace([',', '\n'], ";")).unwrap_or_else(|| "ok".into())
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use proptest::prelude::*;

    fn spec() -> GridSpec {
        GridSpec::unit_square(16, 16).unwrap()
    }

    #[test]
    fn segregation_examples() {
        let s = spec();
        let a = ScalarField::from_fn(s, |x, _| if x < 0.0 { 1.0 } else { 0.0 });
        let b = ScalarField::from_fn(s, |x, _| if x > 0.0 { 1.0 } else { 0.0 });
        assert_eq!(segregation_metric(&a, &b), 0.0);
        // half of the box has unit area
        let h = ScalarField::from_fn(s, |x, _| if x < 0.0 { 0.5 } else { 0.0 });
        assert!((segregation_metric(&h, &h) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn complementarity_examples() {
        let s = GridSpec::new(0.0, 1.0, 0.0, 1.0, 8, 8).unwrap();
        assert_eq!(complementarity_residual(&ScalarField::zeros(s), 0.1), 0.0);
        let n = ScalarField::constant(s, 0.9);
        assert!((complementarity_residual(&n, 0.1) - 0.09).abs() < 1e-14);
        let r: Vec<f64> = [0.1, 0.05, 0.01].iter().map(|&e| complementarity_residual(&n, e)).collect();
        assert!((r[0] / r[2] - 10.0).abs() < 1e-12);
        assert!((r[1] / r[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn curl_signature_examples() {
        let s = spec();
        let z = curl_signature(&VectorField::zeros(s), &[], &CurlRegions::default());
        assert_eq!(z.posterior_left_mean, 0.0);
        assert_eq!(z.posterior_right_mean, 0.0);
        let rot = VectorField::from_fn(s, |x, y| (-y, x));
        let sig = curl_signature(&rot, &[-0.5, 0.5], &CurlRegions::default());
        assert!((sig.posterior_left_mean - 2.0).abs() < 1e-12);
        assert!((sig.posterior_right_mean - 2.0).abs() < 1e-12);
        assert_eq!(sig.anterior_sign_changes, 0);
    }

    #[test]
    fn single_tuple_sweep() {
        let s = spec();
        let rows = limit_sweep(&ModelParams::default(), &[(0.1, 30.0, 1e-3)], |_| {
            Ok((ScalarField::constant(s, 0.2), ScalarField::constant(s, 0.3)))
        });
        assert_eq!(rows.len(), 1);
        assert!(sweep_is_monotone(&rows));
        assert!((rows[0].overlap - 0.06 * 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn segregation_symmetric_and_homogeneous(
            a in proptest::collection::vec(0.0f64..1.0, 16),
            b in proptest::collection::vec(0.0f64..1.0, 16),
            k in 0.0f64..3.0,
        ) {
            let s = GridSpec::unit_square(4, 4).unwrap();
            let fa = ScalarField::from_values(s, a).unwrap();
            let fb = ScalarField::from_values(s, b).unwrap();
            let m = segregation_metric(&fa, &fb);
            prop_assert!(m >= 0.0);
            prop_assert!((m - segregation_metric(&fb, &fa)).abs() <= 1e-14);
            let scaled = segregation_metric(&fa.map(|v| k * v), &fb);
            prop_assert!((scaled - k * m).abs() <= 1e-12 * (1.0 + m));
        }

        #[test]
        fn complementarity_is_eps_times_mass(
            a in proptest::collection::vec(0.0f64..0.99, 16),
            eps in 0.001f64..1.0,
        ) {
            let s = GridSpec::unit_square(4, 4).unwrap();
            let f = ScalarField::from_values(s, a).unwrap();
            let pressurized: f64 = f.values.iter()
                .filter(|&&v| congestion_at(v, eps).0 > PRESSURE_THRESHOLD)
                .sum::<f64>() * s.cell_area();
            let r = complementarity_residual(&f, eps);
            prop_assert!((r - eps * pressurized).abs() <= 1e-12 * (1.0 + r));
        }
    }
}
