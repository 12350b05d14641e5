//! Bayes rule computed in log space, independent of the library's
//! multiply-then-normalize update.

pub fn oracle(prior: [f64; 5], rows: &[[f64; 5]]) -> [f64; 5] {
    let mut logs = prior.map(f64::ln);
    for r in rows {
        for i in 0..5 {
            logs[i] += r[i].ln();
        }
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logs.map(|l| (l - m).exp());
    let z: f64 = exp.iter().sum();
    exp.map(|e| e / z)
}

pub fn close(a: [f64; 5], b: [f64; 5], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}
