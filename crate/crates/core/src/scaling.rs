//! Finite-size scaling of coherence decay, crossover times and the
//! domain-wall power law.
//!
//! Short times: `C(t) ≈ A N^λ exp(−k t / N)`.
//! Long times: `C(t) ≈ B N^α exp(−k1 t / N^α)`.
//! Logarithms are natural throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub n_points: usize,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Fit("x and y differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Fit(format!("{n} points cannot define a line")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, intercept_se) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let s2 = rss / (nf - 2.0);
        let sumx2: f64 = x.iter().map(|v| v * v).sum();
        ((s2 / sxx).sqrt(), (s2 * sumx2 / (nf * sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        n_points: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Short,
    Long,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "short" => Ok(Regime::Short),
            "long" => Ok(Regime::Long),
            other => Err(Error::Fit(format!("unknown regime {other:?}"))),
        }
    }
}

/// Closed time window in MCS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_min: f64,
    pub t_max: f64,
}

impl Window {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite()) || t_min > t_max {
            return Err(Error::Fit(format!("empty window [{t_min}, {t_max}]")));
        }
        Ok(Window { t_min, t_max })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }
}

/// `[1, 0.3 t½]` for the short regime and `[2 t½, t_end]` for the long one,
/// with `t½` the half time of the equilibrium probability.
pub fn default_window(regime: Regime, t_half: f64, t_end: f64) -> Result<Window> {
    match regime {
        Regime::Short => Window::new(1.0, 0.3 * t_half),
        Regime::Long => Window::new(2.0 * t_half, t_end),
    }
}

/// Log-linear fit of one curve inside its window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub n_sites: usize,
    pub window: Window,
    /// `a_N`, intercept of `ln C` against `t`.
    pub intercept: f64,
    /// `s_N`, slope of `ln C` against `t`.
    pub slope: f64,
    pub n_points: usize,
    pub excluded: usize,
}

fn window_points(series: &TimeSeries, window: &Window) -> (Vec<f64>, Vec<f64>, usize) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut excluded = 0;
    for (&t, &v) in series.times.iter().zip(&series.values) {
        if !window.contains(t) {
            continue;
        }
        if v > 0.0 && v.is_finite() {
            x.push(t);
            y.push(v.ln());
        } else {
            excluded += 1;
        }
    }
    (x, y, excluded)
}

pub fn fit_curve(series: &TimeSeries, window: &Window) -> Result<CurveFit> {
    let (x, y, excluded) = window_points(series, window);
    if excluded > 0 {
        log::warn!(
            "N={}: {excluded} non-positive values excluded from [{}, {}]",
            series.meta.n_sites,
            window.t_min,
            window.t_max
        );
    }
    let f =
        linear_fit(&x, &y).map_err(|e| Error::Fit(format!("N={}: {e}", series.meta.n_sites)))?;
    Ok(CurveFit {
        n_sites: series.meta.n_sites,
        window: *window,
        intercept: f.intercept,
        slope: f.slope,
        n_points: f.n_points,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub regime: Regime,
    /// λ (short) or α (long).
    pub exponent: f64,
    pub exponent_se: f64,
    /// k (short) or k1 (long).
    pub rate: f64,
    pub rate_se: f64,
    /// `ln A` or `ln B`.
    pub log_amplitude: f64,
    pub curves: Vec<CurveFit>,
    pub collapse_score: f64,
}

impl ScalingFit {
    pub fn windows(&self) -> Vec<(usize, Window)> {
        self.curves.iter().map(|c| (c.n_sites, c.window)).collect()
    }
}

/// Solves the symmetric 3×3 system `a x = b` by Gaussian elimination with
/// partial pivoting; also returns `a⁻¹`.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Result<([f64; 3], [[f64; 3]; 3])> {
    let mut m = [[0.0; 7]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
        m[i][4 + i] = 1.0;
    }
    for col in 0..3 {
        let p = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[p][col].abs() < 1e-300 {
            return Err(Error::Fit("singular normal equations".into()));
        }
        m.swap(col, p);
        let d = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= d);
        for r in 0..3 {
            if r != col {
                let f = m[r][col];
                let pivot = m[col];
                m[r].iter_mut().zip(pivot).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    let x = [m[0][3], m[1][3], m[2][3]];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        inv[i].copy_from_slice(&m[i][4..7]);
    }
    Ok((x, inv))
}

/// Fits the scaling law of `regime` to one curve per chain length.
///
/// Short regime: λ is the slope of `a_N` against `ln N` and `k` the mean of
/// `−s_N N`. Long regime: `(ln B, α, ln k1)` minimize, jointly,
/// `Σ (a_N − ln B − α ln N)² + Σ (ln(−s_N) − ln k1 + α ln N)²`.
pub fn fit_regime(series: &[TimeSeries], regime: Regime, windows: &[Window]) -> Result<ScalingFit> {
    if series.len() != windows.len() {
        return Err(Error::Fit("one window per series required".into()));
    }
    let mut sizes: Vec<usize> = series.iter().map(|s| s.meta.n_sites).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() != series.len() || sizes.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 distinct chain lengths, got {:?}",
            series.iter().map(|s| s.meta.n_sites).collect::<Vec<_>>()
        )));
    }
    let curves: Vec<CurveFit> = series
        .iter()
        .zip(windows)
        .map(|(s, w)| fit_curve(s, w))
        .collect::<Result<_>>()?;
    let ln_n: Vec<f64> = curves.iter().map(|c| (c.n_sites as f64).ln()).collect();
    let a: Vec<f64> = curves.iter().map(|c| c.intercept).collect();

    let (exponent, exponent_se, rate, rate_se, log_amplitude) = match regime {
        Regime::Short => {
            let f = linear_fit(&ln_n, &a)?;
            let ks: Vec<f64> = curves.iter().map(|c| -c.slope * c.n_sites as f64).collect();
            let m = ks.len() as f64;
            let k = ks.iter().sum::<f64>() / m;
            let var = ks.iter().map(|v| (v - k).powi(2)).sum::<f64>() / (m - 1.0);
            (f.slope, f.slope_se, k, (var / m).sqrt(), f.intercept)
        }
        Regime::Long => {
            if let Some(c) = curves.iter().find(|c| c.slope >= 0.0) {
                return Err(Error::Fit(format!(
                    "N={}: coherence does not decay in the long window (slope {})",
                    c.n_sites, c.slope
                )));
            }
            // unknowns (ln B, α, ln k1); rows (1, ln N, 0)·p = a_N and (0, −ln N, 1)·p = ln(−s_N)
            let mut rows = Vec::with_capacity(2 * curves.len());
            for (c, &l) in curves.iter().zip(&ln_n) {
                rows.push(([1.0, l, 0.0], c.intercept));
                rows.push(([0.0, -l, 1.0], (-c.slope).ln()));
            }
            let mut ata = [[0.0; 3]; 3];
            let mut atb = [0.0; 3];
            for (r, y) in &rows {
                for i in 0..3 {
                    atb[i] += r[i] * y;
                    for j in 0..3 {
                        ata[i][j] += r[i] * r[j];
                    }
                }
            }
            let (p, inv) = solve3(ata, atb)?;
            let rss: f64 = rows
                .iter()
                .map(|(r, y)| (y - (r[0] * p[0] + r[1] * p[1] + r[2] * p[2])).powi(2))
                .sum();
            let dof = rows.len() as f64 - 3.0;
            let s2 = rss / dof;
            let k1 = p[2].exp();
            (
                p[1],
                (s2 * inv[1][1]).sqrt(),
                k1,
                k1 * (s2 * inv[2][2]).sqrt(),
                p[0],
            )
        }
    };
    let collapse_score = collapse_score(series, regime, windows, exponent)?;
    Ok(ScalingFit {
        regime,
        exponent,
        exponent_se,
        rate,
        rate_se,
        log_amplitude,
        curves,
        collapse_score,
    })
}

/// Points of every curve in the collapsed coordinates
/// `(t / N^p, ln(C / N^exponent))`, with `p = 1` in the short regime and
/// `p = exponent` in the long one. Each item is `(N, x, y)`.
pub fn scaled_points(
    series: &[TimeSeries],
    regime: Regime,
    windows: &[Window],
    exponent: f64,
) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for (s, w) in series.iter().zip(windows) {
        let n = s.meta.n_sites as f64;
        let power = match regime {
            Regime::Short => 1.0,
            Regime::Long => exponent,
        };
        let (x, y, _) = window_points(s, w);
        for (t, lc) in x.into_iter().zip(y) {
            out.push((s.meta.n_sites, t / n.powf(power), lc - exponent * n.ln()));
        }
    }
    out
}

/// Mean squared residual of all collapsed curves about a single pooled line.
pub fn collapse_score(
    series: &[TimeSeries],
    regime: Regime,
    windows: &[Window],
    exponent: f64,
) -> Result<f64> {
    let pts = scaled_points(series, regime, windows, exponent);
    let x: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let f = linear_fit(&x, &y)?;
    Ok(x.iter()
        .zip(&y)
        .map(|(a, b)| (b - f.intercept - f.slope * a).powi(2))
        .sum::<f64>()
        / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverParams {
    pub lambda: f64,
    pub alpha: f64,
    pub k: f64,
    pub k1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverPoint {
    pub n_sites: usize,
    pub t_c: f64,
    pub asymptotic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverResult {
    pub params: CrossoverParams,
    pub points: Vec<CrossoverPoint>,
}

/// `t_c = (λ − α) N ln N / (k − k1 / N^{α−1})` and its large-`N` form
/// `(λ − α)(N / k) ln N`.
pub fn crossover_from_params(p: &CrossoverParams, n: f64) -> Result<(f64, f64)> {
    let denom = p.k - p.k1 / n.powf(p.alpha - 1.0);
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::Fit(format!(
            "crossover denominator {denom} is not positive at N={n}"
        )));
    }
    let num = (p.lambda - p.alpha) * n * n.ln();
    Ok((num / denom, num / p.k))
}

pub fn crossover_time(
    short: &ScalingFit,
    long: &ScalingFit,
    sizes: &[usize],
) -> Result<CrossoverResult> {
    if short.regime != Regime::Short || long.regime != Regime::Long {
        return Err(Error::Fit("crossover needs a short and a long fit".into()));
    }
    let params = CrossoverParams {
        lambda: short.exponent,
        alpha: long.exponent,
        k: short.rate,
        k1: long.rate,
    };
    let points = sizes
        .iter()
        .map(|&n| {
            let (t_c, asymptotic) = crossover_from_params(&params, n as f64)?;
            Ok(CrossoverPoint {
                n_sites: n,
                t_c,
                asymptotic,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CrossoverResult { params, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// `1/z` in `D ∝ t^{−1/z}`.
    pub inverse_z: f64,
    pub inverse_z_se: f64,
    pub n_points: usize,
}

/// Slope of `ln D` against `ln t` inside `window`, negated.
pub fn fit_power_law(series: &TimeSeries, window: &Window) -> Result<PowerLawFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&t, &v) in series.times.iter().zip(&series.values) {
        if window.contains(t) && t > 0.0 {
            if v <= 0.0 {
                return Err(Error::Fit(format!("non-positive value {v} at t={t}")));
            }
            x.push(t.ln());
            y.push(v.ln());
        }
    }
    if x.len() < 4 {
        return Err(Error::Fit(format!(
            "window holds {} points, need at least 4",
            x.len()
        )));
    }
    let f = linear_fit(&x, &y)?;
    Ok(PowerLawFit {
        inverse_z: -f.slope,
        inverse_z_se: f.slope_se,
        n_points: f.n_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::SeriesMeta;

    fn series(n: usize, f: impl Fn(f64) -> f64, times: &[f64]) -> TimeSeries {
        TimeSeries::new(
            times.to_vec(),
            times.iter().map(|&t| f(t)).collect(),
            None,
            SeriesMeta {
                observable: "coherence".into(),
                variant: "synthetic".into(),
                n_sites: n,
                mode: "exact".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn short_regime_round_trip() {
        let times: Vec<f64> = (1..=30).map(|t| t as f64 * 0.5).collect();
        let sizes = [12, 14, 16, 18, 20];
        let data: Vec<TimeSeries> = sizes
            .iter()
            .map(|&n| {
                let nf = n as f64;
                series(n, |t| 0.03 * nf.powf(4.44) * (-2.5 * t / nf).exp(), &times)
            })
            .collect();
        let w = vec![Window::new(1.0, 10.0).unwrap(); sizes.len()];
        let fit = fit_regime(&data, Regime::Short, &w).unwrap();
        assert!((fit.exponent - 4.44).abs() < 1e-6);
        assert!((fit.rate - 2.5).abs() < 1e-6);
        assert!(fit.collapse_score < 1e-20);
        assert!(fit.exponent_se >= 0.0 && fit.rate_se >= 0.0);
    }

    #[test]
    fn long_regime_round_trip() {
        let times: Vec<f64> = (0..=40).map(|t| t as f64 * 10.0).collect();
        let sizes = [12, 14, 16];
        let data: Vec<TimeSeries> = sizes
            .iter()
            .map(|&n| {
                let nf = n as f64;
                series(
                    n,
                    |t| 0.7 * nf.powf(1.91) * (-5.23 * t / nf.powf(1.91)).exp(),
                    &times,
                )
            })
            .collect();
        let w = vec![Window::new(50.0, 400.0).unwrap(); sizes.len()];
        let fit = fit_regime(&data, Regime::Long, &w).unwrap();
        assert!((fit.exponent - 1.91).abs() < 1e-6);
        assert!((fit.rate - 5.23).abs() < 1e-6);
        assert!((fit.log_amplitude - 0.7f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn fewer_than_three_sizes_refused() {
        let times = [1.0, 2.0, 3.0];
        let data = vec![
            series(10, |t| (-t).exp(), &times),
            series(12, |t| (-t).exp(), &times),
        ];
        let w = vec![Window::new(0.0, 5.0).unwrap(); 2];
        assert!(fit_regime(&data, Regime::Short, &w).is_err());
        let dup = vec![data[0].clone(), data[0].clone(), data[1].clone()];
        let w = vec![Window::new(0.0, 5.0).unwrap(); 3];
        assert!(fit_regime(&dup, Regime::Short, &w).is_err());
    }

    #[test]
    fn non_positive_values_excluded() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let data: Vec<TimeSeries> = [8, 10, 12]
            .iter()
            .map(|&n| {
                let nf = n as f64;
                series(
                    n,
                    |t| {
                        if t == 4.0 {
                            0.0
                        } else {
                            nf.powi(3) * (-t / nf).exp()
                        }
                    },
                    &times,
                )
            })
            .collect();
        let w = vec![Window::new(1.0, 4.0).unwrap(); 3];
        let fit = fit_regime(&data, Regime::Short, &w).unwrap();
        assert!((fit.exponent - 3.0).abs() < 1e-10);
        assert!(fit
            .curves
            .iter()
            .all(|c| c.excluded == 1 && c.n_points == 3));
    }

    #[test]
    fn crossover_examples() {
        let p = CrossoverParams {
            lambda: 2.0,
            alpha: 2.0,
            k: 2.5,
            k1: 3.02,
        };
        assert_eq!(crossover_from_params(&p, 20.0).unwrap().0, 0.0);
        let p = CrossoverParams {
            lambda: 4.44,
            alpha: 2.0,
            k: 2.5,
            k1: 3.02,
        };
        let (t, asym) = crossover_from_params(&p, 20.0).unwrap();
        let n: f64 = 20.0;
        assert!((t - 2.44 * 20.0 * n.ln() / (2.5 - 3.02 / 20.0)).abs() < 1e-12);
        assert!((asym - 2.44 * (20.0 / 2.5) * n.ln()).abs() < 1e-12);
        let bad = CrossoverParams { k1: 100.0, ..p };
        assert!(crossover_from_params(&bad, 20.0).is_err());
    }

    #[test]
    fn power_law_round_trip() {
        let times: Vec<f64> = (0..=20).map(|t| t as f64).collect();
        let s = series(10, |t| 7.0 / t.max(1e-300).sqrt(), &times);
        let f = fit_power_law(&s, &Window::new(1.0, 20.0).unwrap()).unwrap();
        assert!((f.inverse_z - 0.5).abs() < 1e-6);
        assert!(fit_power_law(&s, &Window::new(1.0, 3.0).unwrap()).is_err());
    }
}
