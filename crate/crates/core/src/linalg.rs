//! Weighted ridge regression via the normal equations.

use nalgebra::{DMatrix, DVector};

/// Extra diagonal loads tried, in order, when the normal equations are not
/// positive definite.
const RIDGE_LADDER: [f64; 7] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub ridge: f64,
    pub raised: bool,
    /// Weighted coefficient of determination of the fit.
    pub r2: f64,
}

/// Minimize `Σ wᵢ (yᵢ − b − xᵢ·β)² + λ‖β‖²`.
///
/// With `fit_intercept` the intercept `b` is unpenalized (solved by weighted
/// centering); otherwise `b = 0`. `rows` are the design rows, all of equal
/// length. Returns `None` only when every rung of the ridge ladder fails.
pub fn weighted_ridge(
    rows: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    lambda: f64,
    fit_intercept: bool,
) -> Option<RidgeFit> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    debug_assert!(y.len() == n && w.len() == n);

    let total_w: f64 = w.iter().sum();
    let (x_mean, y_mean) = if fit_intercept && total_w > 0.0 {
        let mut xm = vec![0.0; p];
        for (row, wi) in rows.iter().zip(w) {
            for (m, x) in xm.iter_mut().zip(row) {
                *m += wi * x;
            }
        }
        xm.iter_mut().for_each(|m| *m /= total_w);
        let ym = y.iter().zip(w).map(|(yi, wi)| yi * wi).sum::<f64>() / total_w;
        (xm, ym)
    } else {
        (vec![0.0; p], 0.0)
    };

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut centered = vec![0.0; p];
    for ((row, yi), wi) in rows.iter().zip(y).zip(w) {
        for (c, (x, m)) in centered.iter_mut().zip(row.iter().zip(&x_mean)) {
            *c = x - m;
        }
        let yc = yi - y_mean;
        for a in 0..p {
            let wa = wi * centered[a];
            if wa == 0.0 {
                continue;
            }
            rhs[a] += wa * yc;
            for b in a..p {
                gram[(a, b)] += wa * centered[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let solve = |load: f64| -> Option<Vec<f64>> {
        let mut m = gram.clone();
        for i in 0..p {
            m[(i, i)] += load;
        }
        let beta = m.cholesky()?.solve(&rhs);
        beta.iter()
            .all(|v| v.is_finite())
            .then(|| beta.iter().copied().collect())
    };

    let (coef, ridge, raised) = if p == 0 {
        (Vec::new(), lambda, false)
    } else if let Some(beta) = solve(lambda) {
        (beta, lambda, false)
    } else {
        RIDGE_LADDER
            .iter()
            .find_map(|extra| solve(lambda + extra).map(|b| (b, lambda + extra, true)))?
    };

    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    let r2 = weighted_r2(rows, y, w, &coef, intercept);
    Some(RidgeFit {
        coef,
        intercept,
        ridge,
        raised,
        r2,
    })
}

fn weighted_r2(rows: &[Vec<f64>], y: &[f64], w: &[f64], coef: &[f64], intercept: f64) -> f64 {
    let total_w: f64 = w.iter().sum();
    if total_w <= 0.0 {
        return 0.0;
    }
    let y_mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total_w;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((row, yi), wi) in rows.iter().zip(y).zip(w) {
        let pred = intercept + row.iter().zip(coef).map(|(x, b)| x * b).sum::<f64>();
        ss_res += wi * (yi - pred).powi(2);
        ss_tot += wi * (yi - y_mean).powi(2);
    }
    if ss_tot == 0.0 {
        if ss_res <= f64::EPSILON {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_relation() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|m| (0..3).map(|i| ((m >> i) & 1) as f64).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 0.5 + 2.0 * r[0] - 1.0 * r[1] + 0.25 * r[2])
            .collect();
        let fit = weighted_ridge(&rows, &y, &[1.0; 8], 0.0, true).unwrap();
        for (got, want) in fit.coef.iter().zip([2.0, -1.0, 0.25]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((fit.intercept - 0.5).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(!fit.raised);
    }

    #[test]
    fn singular_system_climbs_the_ladder() {
        // second column duplicates the first
        let rows = vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0]];
        let fit = weighted_ridge(&rows, &[1.0, 0.0, 1.0], &[1.0; 3], 0.0, true).unwrap();
        assert!(fit.raised);
        assert!(fit.ridge > 0.0);
        assert!((fit.coef[0] - fit.coef[1]).abs() < 1e-9);
    }

    #[test]
    fn scaling_weights_with_zero_penalty_keeps_solution() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        ];
        let y = [0.3, 0.9, 1.0, 0.1];
        let w = [0.2, 0.7, 1.0, 0.4];
        let a = weighted_ridge(&rows, &y, &w, 0.0, true).unwrap();
        let w3: Vec<f64> = w.iter().map(|x| x * 3.0).collect();
        let b = weighted_ridge(&rows, &y, &w3, 0.0, true).unwrap();
        for (x, z) in a.coef.iter().zip(&b.coef) {
            assert!((x - z).abs() < 1e-12);
        }
    }
}
