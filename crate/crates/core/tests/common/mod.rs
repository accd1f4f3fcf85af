//! Reference implementations for the integration suites. Every oracle here
//! recomputes its quantity by a different route than the library (bitmask or
//! lexicographic enumeration, quadrature, raw-moment algebra) so that
//! agreement between the two is evidence rather than tautology.

#![allow(dead_code)]

/// Doubled pooled midranks: entry i is twice the midrank of values[i], so all
/// entries are integers even when ties average to half-units.
pub fn doubled_midranks(values: &[f64]) -> Vec<i64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks2 = vec![0i64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share midrank ((i+1)+(j+1))/2, doubled: i+j+2
        for &idx in &order[i..=j] {
            ranks2[idx] = (i + j + 2) as i64;
        }
        i = j + 1;
    }
    ranks2
}

/// Two-sided Wilcoxon rank-sum p by complete enumeration of the C(N, m)
/// assignments of pooled ranks to the first group. Deviations are compared in
/// doubled-rank integer arithmetic, so ties cost nothing in precision.
pub fn wilcoxon_exact_p_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let m = a.len();
    let n = m + b.len();
    assert!(n <= 24, "enumeration oracle is for small instances");
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let ranks2 = doubled_midranks(&pooled);
    let expected2: i64 = (m * (n + 1)) as i64;
    let observed2: i64 = ranks2[..m].iter().sum();
    let dev_obs = (observed2 - expected2).abs();
    let mut hits = 0u64;
    let mut total = 0u64;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        total += 1;
        let mut sum2 = 0i64;
        for (i, &r2) in ranks2.iter().enumerate() {
            if mask & (1 << i) != 0 {
                sum2 += r2;
            }
        }
        if (sum2 - expected2).abs() >= dev_obs {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn kendall_s(x: &[f64], y: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let cx = match x[j].partial_cmp(&x[i]).unwrap() {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
            let cy = match y[j].partial_cmp(&y[i]).unwrap() {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
            s += (cx * cy) as i64;
        }
    }
    s
}

fn next_permutation(idx: &mut [usize]) -> bool {
    let n = idx.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && idx[i - 1] >= idx[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while idx[j] <= idx[i - 1] {
        j -= 1;
    }
    idx.swap(i - 1, j);
    idx[i..].reverse();
    true
}

/// Two-sided Kendall permutation p: fraction of y-permutations, generated in
/// lexicographic order, whose |S| matches or exceeds the observed |S|.
pub fn kendall_exact_p_by_enumeration(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    assert!(n <= 9, "enumeration oracle is for small instances");
    let s_obs = kendall_s(x, y).abs();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut hits = 0u64;
    let mut total = 0u64;
    loop {
        let perm: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        total += 1;
        if kendall_s(x, &perm).abs() >= s_obs {
            hits += 1;
        }
        if !next_permutation(&mut idx) {
            break;
        }
    }
    hits as f64 / total as f64
}

/// Tie-corrected Kruskal-Wallis H via the rank one-way identity
/// H = (N-1) * SSB / SST over pooled midranks.
pub fn kruskal_wallis_h_by_rank_anova(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len();
    let ranks: Vec<f64> = doubled_midranks(&pooled)
        .into_iter()
        .map(|r2| r2 as f64 / 2.0)
        .collect();
    let grand = ranks.iter().sum::<f64>() / n as f64;
    let sst: f64 = ranks.iter().map(|r| (r - grand).powi(2)).sum();
    let mut ssb = 0.0;
    let mut offset = 0;
    for g in groups {
        let gr = &ranks[offset..offset + g.len()];
        let mean = gr.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand).powi(2);
        offset += g.len();
    }
    (n as f64 - 1.0) * ssb / sst
}

/// One-way F from raw power sums, no centering pass.
pub fn anova_f_by_raw_moments(groups: &[Vec<f64>]) -> f64 {
    let k = groups.len() as f64;
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand_sum: f64 = groups.iter().flatten().sum();
    let mut ssb = -grand_sum * grand_sum / n as f64;
    let mut ssw = 0.0;
    for g in groups {
        let s: f64 = g.iter().sum();
        let ss: f64 = g.iter().map(|v| v * v).sum();
        ssb += s * s / g.len() as f64;
        ssw += ss - s * s / g.len() as f64;
    }
    (ssb / (k - 1.0)) / (ssw / (n as f64 - k))
}

fn simpson_estimate(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson_estimate(f, a, fa, m, fm);
    let (rm, frm, right) = simpson_estimate(f, m, fm, b, fb);
    let delta = left + right - whole;
    // the roundoff clause stops the recursion once the correction falls below
    // f64 noise on this subinterval, where the tolerance is unreachable
    if depth == 0
        || delta.abs() <= 15.0 * tol
        || delta.abs() <= 4.0 * f64::EPSILON * (left.abs() + right.abs())
    {
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, fa, m, fm, lm, flm, left, tol * 0.5, depth - 1)
        + simpson_recurse(f, m, fm, b, fb, rm, frm, right, tol * 0.5, depth - 1)
}

/// Adaptive Simpson with Richardson extrapolation; `tol` is absolute.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson_estimate(f, a, fa, b, fb);
    simpson_recurse(f, a, fa, b, fb, m, fm, whole, tol, 28)
}

/// Composite Simpson on a fixed grid; only good for an order-of-magnitude
/// estimate, which is all the tolerance bootstrap below needs.
fn fixed_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * h;
        acc += h / 6.0 * (f(lo) + 4.0 * f(lo + 0.5 * h) + f(lo + h));
    }
    acc
}

/// Integrates with two bootstrap passes so the tolerance scales with the
/// integral's own magnitude; an absolute tolerance would send the adaptive
/// pass into full-depth recursion on integrands of magnitude far from 1.
/// The final 1e-12 relative target leaves two orders of margin under the
/// 1e-10 agreement the suites assert.
fn integrate_scaled(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let coarse = fixed_simpson(f, a, b, 128).abs();
    let rough = adaptive_simpson(f, a, b, (coarse + 1e-30) * 1e-3).abs();
    adaptive_simpson(f, a, b, (rough + 1e-30) * 1e-12)
}

pub fn erf_by_quadrature(x: f64) -> f64 {
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    if x < 0.0 {
        return -erf_by_quadrature(-x);
    }
    two_over_sqrt_pi * integrate_scaled(&|t: f64| (-t * t).exp(), 0.0, x)
}

/// Lower incomplete gamma by quadrature. For s < 1 the substitution u = t^s
/// removes the endpoint singularity: integral = (1/s) * int_0^{x^s} exp(-u^{1/s}) du.
fn lower_gamma_by_quadrature(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if s < 1.0 {
        let g = |u: f64| (-u.powf(1.0 / s)).exp();
        integrate_scaled(&g, 0.0, x.powf(s)) / s
    } else {
        // t = 0 endpoint: the integrand is 0 for s > 1 and exp(0) = 1 at
        // s = 1, but the log form would evaluate 0 * ln(0) = NaN.
        let f = move |t: f64| {
            if t == 0.0 {
                if s > 1.0 { 0.0 } else { 1.0 }
            } else {
                ((s - 1.0) * t.ln() - t).exp()
            }
        };
        integrate_scaled(&f, 0.0, x)
    }
}

/// Where the gamma integrand's tail drops below the oracle's working
/// precision: 30 sigma past the peak, capped at 3s + 72 for large shapes
/// where the sigma rule overshoots. Dropped mass stays under 1e-30 of the
/// whole across the tested shape range.
fn gamma_tail_cut(s: f64) -> f64 {
    (s + 30.0 * s.sqrt() + 50.0).min(3.0 * s + 72.0)
}

/// Regularized lower incomplete gamma P(s, x), both numerator and denominator
/// from quadrature, with the denominator truncated at the tail cut.
pub fn reg_gamma_lower_by_quadrature(s: f64, x: f64) -> f64 {
    reg_gamma_lower_by_quadrature_at(s, &[x])[0]
}

/// Same oracle over several probe points of one shape, sharing the
/// denominator integral.
pub fn reg_gamma_lower_by_quadrature_at(s: f64, xs: &[f64]) -> Vec<f64> {
    assert!(s > 0.0 && s <= 80.0, "oracle tail cut tuned for s <= 80");
    let cut = gamma_tail_cut(s);
    let whole = lower_gamma_by_quadrature(s, cut);
    xs.iter()
        .map(|&x| {
            if x >= cut {
                1.0
            } else {
                lower_gamma_by_quadrature(s, x) / whole
            }
        })
        .collect()
}

/// Partial beta integral int_0^c t^(a-1) (1-t)^(b-1) dt for c <= 1/2. For
/// a < 1 the substitution u = t^a flattens the t=0 singularity; for a >= 1
/// the raw integrand is smooth and the substitution would instead pile all
/// the curvature into an unresolvable corner, so integrate it directly.
fn beta_partial(a: f64, b: f64, c: f64) -> f64 {
    assert!(c <= 0.5 + 1e-12);
    if c <= 0.0 {
        return 0.0;
    }
    if a < 1.0 {
        let f = |u: f64| {
            let t = u.powf(1.0 / a);
            (1.0 - t).powf(b - 1.0)
        };
        integrate_scaled(&f, 0.0, c.powf(a)) / a
    } else {
        let f = |t: f64| {
            if t == 0.0 && a > 1.0 {
                0.0
            } else {
                t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0)
            }
        };
        integrate_scaled(&f, 0.0, c)
    }
}

/// Regularized incomplete beta by quadrature, split at 1/2 so each half is
/// integrated away from its own endpoint singularity.
pub fn reg_beta_by_quadrature(a: f64, b: f64, x: f64) -> f64 {
    let whole = beta_partial(a, b, 0.5) + beta_partial(b, a, 0.5);
    if x <= 0.5 {
        beta_partial(a, b, x) / whole
    } else {
        1.0 - beta_partial(b, a, 1.0 - x) / whole
    }
}

/// Central finite difference of a scalar function of one coordinate.
pub fn central_diff(f: &mut dyn FnMut(f64) -> f64, at: f64, h: f64) -> f64 {
    (f(at + h) - f(at - h)) / (2.0 * h)
}
