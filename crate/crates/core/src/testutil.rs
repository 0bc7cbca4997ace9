use nalgebra::DMatrix;

/// Matrix exponential by scaling and squaring around a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let s = (a.norm().log2().ceil().max(0.0) as i32) + 4;
    let scaled = a / 2f64.powi(s);
    let n = a.nrows();
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Number of `Sₙ`-orbits on `[n]^m`, by enumerating tuples and relabelling each one by
/// order of first occurrence.
pub fn sn_orbit_count(n: usize, m: usize) -> usize {
    let mut patterns = std::collections::HashSet::new();
    let total = n.pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let mut labels = vec![usize::MAX; n];
        let mut next = 0;
        let mut pattern = Vec::with_capacity(m);
        for _ in 0..m {
            let d = c % n;
            c /= n;
            if labels[d] == usize::MAX {
                labels[d] = next;
                next += 1;
            }
            pattern.push(labels[d]);
        }
        patterns.insert(pattern);
    }
    patterns.len()
}
