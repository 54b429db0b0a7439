//! Matrix-perturbation machinery: covariance construction, a cyclic Jacobi
//! eigensolver, Frobenius norms, the tolerable-perturbation budget, its
//! closed-form inverse for the homogeneous dead-band, and the normalized
//! tolerance used for reporting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix; rows are time samples, columns are devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "matrix" });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row vectors of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// `Tr(Y^T Y)` == the sum of every squared entry.
    pub fn trace_gram(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Descending-sorted eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub values: Vec<f64>,
}

impl EigenSpectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A perturbation budget together with the inputs it was computed from,
/// so the stored value can always be re-derived and checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBound {
    pub tol_f: f64,
    pub trace_yty: f64,
    /// Per-device filtering variance `sigma_i^2 = delta_i^2 / 3`.
    pub sigma_sq: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

impl PerturbationBound {
    pub fn new(trace_yty: f64, sigma_sq: Vec<f64>, m: usize, n: usize) -> Result<Self> {
        let value = tol_f(trace_yty, &sigma_sq, m, n)?;
        Ok(Self {
            tol_f: value,
            trace_yty,
            sigma_sq,
            m,
            n,
        })
    }

    /// The stored budget reproduces the formula from the stored inputs.
    pub fn is_consistent(&self) -> bool {
        match tol_f(self.trace_yty, &self.sigma_sq, self.m, self.n) {
            Ok(v) => (v - self.tol_f).abs() <= 1e-12 * v.max(1e-300),
            Err(_) => false,
        }
    }
}

/// Sample covariance `(1/m) Y^T Y` of an m-row, n-column data matrix.
pub fn covariance(y: &DataMatrix) -> DataMatrix {
    let (m, n) = (y.rows, y.cols);
    let mut out = DataMatrix::zeros(n, n);
    let scale = 1.0 / m.max(1) as f64;
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for r in 0..m {
                acc += y.get(r, i) * y.get(r, j);
            }
            out.set(i, j, acc * scale);
            out.set(j, i, acc * scale);
        }
    }
    out
}

/// Frobenius norm: sqrt of the sum of squared entries.
pub fn frobenius_norm(m: &DataMatrix) -> f64 {
    m.trace_gram().sqrt()
}

/// `||A - A_hat||_F` between two equally-sized matrices.
pub fn delta_norm(a: &DataMatrix, a_hat: &DataMatrix) -> Result<f64> {
    if a.rows != a_hat.rows || a.cols != a_hat.cols {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, a_hat.rows, a_hat.cols
        )));
    }
    Ok(a.data
        .iter()
        .zip(&a_hat.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

fn off_diagonal_mass(a: &DataMatrix) -> f64 {
    let n = a.rows;
    let mut acc = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                acc += a.get(p, q) * a.get(p, q);
            }
        }
    }
    acc.sqrt()
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations, sorted
/// descending. Converges when the off-diagonal Frobenius mass drops below
/// `1e-12 * ||A||_F`.
pub fn sym_eigenvalues(a: &DataMatrix) -> Result<EigenSpectrum> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let norm = frobenius_norm(a);
    let sym_tol = SYMMETRY_TOL * norm.max(1.0);
    for p in 0..n {
        for q in (p + 1)..n {
            if (a.get(p, q) - a.get(q, p)).abs() > sym_tol {
                return Err(Error::NotSymmetric);
            }
        }
    }

    // Work on the symmetrized copy so tiny asymmetries cannot bias rotations.
    let mut w = a.clone();
    for p in 0..n {
        for q in (p + 1)..n {
            let avg = 0.5 * (w.get(p, q) + w.get(q, p));
            w.set(p, q, avg);
            w.set(q, p, avg);
        }
    }

    if n <= 1 || norm == 0.0 {
        let mut values: Vec<f64> = (0..n).map(|i| w.get(i, i)).collect();
        values.sort_by(|x, y| y.partial_cmp(x).unwrap());
        return Ok(EigenSpectrum { values });
    }

    let threshold = 1e-12 * norm;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_mass(&w) <= threshold {
            converged = true;
            break;
        }
        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                // Rotation angle that annihilates the (p, q) entry.
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = w.get(k, p);
                    let akq = w.get(k, q);
                    w.set(k, p, c * akp - s * akq);
                    w.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = w.get(p, k);
                    let aqk = w.get(q, k);
                    w.set(p, k, c * apk - s * aqk);
                    w.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    if !converged && off_diagonal_mass(&w) > threshold {
        return Err(Error::NoConvergence);
    }

    let mut values: Vec<f64> = (0..n).map(|i| w.get(i, i)).collect();
    values.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(EigenSpectrum { values })
}

/// Tolerable-perturbation budget on the expected covariance perturbation:
/// `2*sqrt(Tr(Y^T Y) * sum(sigma^2) / (m^2 n)) + sqrt((1/m + 1/n) * sum(sigma^4))`.
pub fn tol_f(trace_yty: f64, sigma_sq: &[f64], m: usize, n: usize) -> Result<f64> {
    if trace_yty < 0.0 {
        return Err(Error::NegativeInput {
            context: "trace_yty",
        });
    }
    if sigma_sq.iter().any(|s| *s < 0.0) {
        return Err(Error::NegativeInput {
            context: "sigma_sq",
        });
    }
    if m == 0 || n == 0 {
        return Err(Error::Config("tol_f needs m >= 1 and n >= 1".into()));
    }
    let (mf, nf) = (m as f64, n as f64);
    let s2: f64 = sigma_sq.iter().sum();
    let s4: f64 = sigma_sq.iter().map(|s| s * s).sum();
    Ok(2.0 * (trace_yty * s2 / (mf * mf * nf)).sqrt() + ((1.0 / mf + 1.0 / nf) * s4).sqrt())
}

/// Closed-form homogeneous dead-band for a target budget, assuming every
/// device filters uniformly on `[-delta, delta]` (so `sigma^2 = delta^2/3`).
///
/// Algebraically this is
/// `(sqrt(3T/m + 3*tol*sqrt(nm + m^2)) - sqrt(3T/m)) / sqrt(m + n)`,
/// evaluated in rationalized form to avoid cancellation when `tol` is
/// small relative to `T/m`.
pub fn solve_delta(trace_yty: f64, m: usize, n: usize, tol: f64) -> Result<f64> {
    if trace_yty < 0.0 {
        return Err(Error::NegativeInput {
            context: "trace_yty",
        });
    }
    if tol < 0.0 {
        return Err(Error::NegativeInput { context: "tol_f" });
    }
    if m == 0 || n == 0 {
        return Err(Error::Config("solve_delta needs m >= 1 and n >= 1".into()));
    }
    let (mf, nf) = (m as f64, n as f64);
    let x = 3.0 * trace_yty / mf;
    let y = 3.0 * tol * (nf * mf + mf * mf).sqrt();
    Ok(y / ((mf + nf).sqrt() * ((x + y).sqrt() + x.sqrt())))
}

/// Budget normalized by the RMS eigenvalue scale of the data covariance:
/// `tol / sqrt(sum(lambda^2) / n)`.
pub fn normalized_tol(tol: f64, spectrum: &EigenSpectrum) -> Result<f64> {
    if tol < 0.0 {
        return Err(Error::NegativeInput { context: "tol_f" });
    }
    let n = spectrum.len();
    if n == 0 {
        return Err(Error::ZeroSpectrum);
    }
    let denom = (spectrum.values.iter().map(|l| l * l).sum::<f64>() / n as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    Ok(tol / denom)
}

/// RMS eigenvalue displacement `sqrt(mean((lhat_i - l_i)^2))` between two
/// spectra sorted the same way.
pub fn eigen_perturb_rms(real: &EigenSpectrum, perturbed: &EigenSpectrum) -> Result<f64> {
    if real.len() != perturbed.len() {
        return Err(Error::LengthMismatch {
            expected: real.len(),
            got: perturbed.len(),
        });
    }
    if real.is_empty() {
        return Ok(0.0);
    }
    let acc: f64 = real
        .values
        .iter()
        .zip(&perturbed.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((acc / real.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DataMatrix {
        DataMatrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let col = mat(2, 1, &[1.0, 1.0]);
        assert_eq!(covariance(&col).as_slice(), &[1.0]);

        let zero = DataMatrix::zeros(3, 2);
        assert!(covariance(&zero).as_slice().iter().all(|v| *v == 0.0));

        let ident = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(covariance(&ident).as_slice(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = mat(
            6,
            3,
            &(0..18)
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect::<Vec<_>>(),
        );
        let a = covariance(&y);
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - a.get(j, i)).abs() < 1e-12);
            }
        }
        let spec = sym_eigenvalues(&a).unwrap();
        assert!(spec.values.iter().all(|l| *l > -1e-12));
    }

    #[test]
    fn eigenvalues_diagonal() {
        let d = mat(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        assert_eq!(sym_eigenvalues(&d).unwrap().values, vec![3.0, 1.0]);
    }

    #[test]
    fn eigenvalues_exchange_matrix() {
        // Characteristic polynomial l^2 - 1 = 0.
        let x = mat(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let spec = sym_eigenvalues(&x).unwrap();
        assert!((spec.values[0] - 1.0).abs() < 1e-12);
        assert!((spec.values[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalue_sum_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(1..=8);
            let mut a = DataMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = rng.gen_range(-3.0..3.0);
                    a.set(i, j, v);
                    a.set(j, i, v);
                }
            }
            let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
            let sum: f64 = sym_eigenvalues(&a).unwrap().values.iter().sum();
            let scale = trace.abs().max(1.0);
            assert!(
                (sum - trace).abs() <= 1e-9 * scale,
                "sum {sum} vs trace {trace}"
            );
        }
    }

    #[test]
    fn eigenvalues_reject_non_symmetric() {
        let a = mat(2, 2, &[1.0, 2.0, 0.5, 1.0]);
        assert!(matches!(sym_eigenvalues(&a), Err(Error::NotSymmetric)));
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&DataMatrix::zeros(3, 3)), 0.0);
        assert_eq!(frobenius_norm(&mat(1, 2, &[3.0, 4.0])), 5.0);
        let ident4 = {
            let mut m = DataMatrix::zeros(4, 4);
            for i in 0..4 {
                m.set(i, i, 1.0);
            }
            m
        };
        assert_eq!(frobenius_norm(&ident4), 2.0);
    }

    #[test]
    fn delta_norm_examples() {
        let a = mat(1, 1, &[2.0]);
        assert_eq!(delta_norm(&a, &a).unwrap(), 0.0);
        assert_eq!(delta_norm(&a, &mat(1, 1, &[1.0])).unwrap(), 1.0);
        assert!(delta_norm(&a, &DataMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn tol_f_examples() {
        assert_eq!(tol_f(7.0, &[0.0, 0.0], 4, 2).unwrap(), 0.0);
        let v = tol_f(1.0, &[1.0], 1, 1).unwrap();
        assert!((v - (2.0 + 2.0f64.sqrt())).abs() < 1e-12);
        assert!(tol_f(-1.0, &[0.1], 2, 1).is_err());
        assert!(tol_f(1.0, &[-0.1], 2, 1).is_err());
    }

    #[test]
    fn perturbation_bound_carries_consistent_inputs() {
        let bound = PerturbationBound::new(12.5, vec![0.3, 0.1], 16, 2).unwrap();
        assert!(bound.is_consistent());
        let mut tampered = bound.clone();
        tampered.tol_f *= 1.5;
        assert!(!tampered.is_consistent());
    }

    #[test]
    fn tol_f_monotone_in_sigma() {
        let lo = tol_f(10.0, &[0.1, 0.1], 8, 2).unwrap();
        let hi = tol_f(10.0, &[0.1, 0.2], 8, 2).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn solve_delta_zero_tolerance() {
        assert_eq!(solve_delta(5.0, 3, 2, 0.0).unwrap(), 0.0);
        assert!(solve_delta(5.0, 3, 2, -1.0).is_err());
    }

    #[test]
    fn solve_delta_round_trip_and_direct_eq11_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let trace = rng.gen_range(0.0..1e4);
            let m = rng.gen_range(1..=200);
            let n = rng.gen_range(1..=64);
            let target = rng.gen_range(1e-6..1e2);
            let delta = solve_delta(trace, m, n, target).unwrap();
            let sigma = vec![delta * delta / 3.0; n];
            let back = tol_f(trace, &sigma, m, n).unwrap();
            assert!(
                (back - target).abs() <= 1e-9 * target,
                "round trip {back} vs {target} (m={m}, n={n})"
            );

            // Literal textbook form agrees where it is well-conditioned.
            let (mf, nf) = (m as f64, n as f64);
            let x = 3.0 * trace / mf;
            let y = 3.0 * target * (nf * mf + mf * mf).sqrt();
            let literal = ((x + y).sqrt() - x.sqrt()) / (mf + nf).sqrt();
            assert!((literal - delta).abs() <= 1e-6 * delta.max(1e-12));
        }
    }

    #[test]
    fn solve_delta_bisection_oracle() {
        // Invert tol_f(delta) by bisection and compare to the closed form.
        let (trace, m, n, target) = (100.0, 100usize, 10usize, 1.0);
        let eval = |d: f64| tol_f(trace, &vec![d * d / 3.0; n], m, n).unwrap();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while eval(hi) < target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let bisected = 0.5 * (lo + hi);
        let closed = solve_delta(trace, m, n, target).unwrap();
        assert!(
            (bisected - closed).abs() <= 1e-9 * closed,
            "bisection {bisected} vs closed form {closed}"
        );
    }

    #[test]
    fn solve_delta_monotone_in_tol() {
        let a = solve_delta(50.0, 20, 5, 0.5).unwrap();
        let b = solve_delta(50.0, 20, 5, 1.0).unwrap();
        assert!(b > a);
    }

    #[test]
    fn solve_delta_zero_trace_degenerate() {
        // All-zero data: only the second budget term remains.
        let delta = solve_delta(0.0, 10, 4, 0.3).unwrap();
        let back = tol_f(0.0, &[delta * delta / 3.0; 4], 10, 4).unwrap();
        assert!((back - 0.3).abs() <= 1e-9 * 0.3);
    }

    #[test]
    fn normalized_tol_examples() {
        let spec2 = EigenSpectrum {
            values: vec![2.0, 2.0],
        };
        assert_eq!(normalized_tol(0.0, &spec2).unwrap(), 0.0);
        assert!((normalized_tol(2.0, &spec2).unwrap() - 1.0).abs() < 1e-12);
        let spec1 = EigenSpectrum { values: vec![3.0] };
        assert!((normalized_tol(3.0, &spec1).unwrap() - 1.0).abs() < 1e-12);
        let zero = EigenSpectrum {
            values: vec![0.0, 0.0],
        };
        assert!(matches!(
            normalized_tol(1.0, &zero),
            Err(Error::ZeroSpectrum)
        ));
    }

    #[test]
    fn eigen_perturb_rms_examples() {
        let a = EigenSpectrum {
            values: vec![2.0, 0.0],
        };
        assert_eq!(eigen_perturb_rms(&a, &a).unwrap(), 0.0);
        let b = EigenSpectrum {
            values: vec![0.0, 0.0],
        };
        assert!((eigen_perturb_rms(&a, &b).unwrap() - 2.0f64.sqrt()).abs() < 1e-15);
        let short = EigenSpectrum { values: vec![1.0] };
        assert!(eigen_perturb_rms(&a, &short).is_err());
    }

    #[test]
    fn triangle_inequality_chain_holds() {
        // ||A - Ahat||_F <= (||Y^T W|| + ||W^T Y|| + ||W^T W||) / m for every draw.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (m, n) = (rng.gen_range(2..=12), rng.gen_range(1..=5));
            let y = DataMatrix::new(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let delta = 0.4;
            let w = DataMatrix::new(
                m,
                n,
                (0..m * n).map(|_| rng.gen_range(-delta..delta)).collect(),
            )
            .unwrap();
            let mut y_hat = y.clone();
            for r in 0..m {
                for c in 0..n {
                    y_hat.set(r, c, y.get(r, c) + w.get(r, c));
                }
            }
            let lhs = delta_norm(&covariance(&y), &covariance(&y_hat)).unwrap();

            let gram = |a: &DataMatrix, b: &DataMatrix| {
                let mut out = DataMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for r in 0..m {
                            acc += a.get(r, i) * b.get(r, j);
                        }
                        out.set(i, j, acc);
                    }
                }
                out
            };
            let rhs = (frobenius_norm(&gram(&y, &w))
                + frobenius_norm(&gram(&w, &y))
                + frobenius_norm(&gram(&w, &w)))
                / m as f64;
            assert!(lhs <= rhs * (1.0 + 1e-9), "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn uniform_variance_identity() {
        // Var(U[-d, d]) == d^2/3; validates the sigma^2 substitution.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let d = 0.7;
        let n = 1_000_000usize;
        let var = (0..n)
            .map(|_| rng.gen_range(-d..d))
            .map(|x: f64| x * x)
            .sum::<f64>()
            / n as f64;
        let expected = d * d / 3.0;
        assert!(
            (var - expected).abs() <= 0.01 * expected,
            "empirical {var} vs {expected}"
        );
    }
}
