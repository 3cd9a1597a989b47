//! Trapezoid-based quadrature rules.
//!
//! Every continuous integral in the crate is computed with a trapezoid rule in
//! a transformed coordinate where the integrand is smooth and decays at both
//! ends (log scale for positive variables, standardized scale for real ones).
//! For such integrands the trapezoid error falls off like `exp(-c/h)`, so
//! halving the step roughly squares the error and nested levels reuse nodes.

use crate::error::{MisfitError, Result};

/// A discrete integration rule: `∫ f dμ ≈ Σ wᵢ f(xᵢ)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn push(&mut self, x: f64, w: f64) {
        self.nodes.push(x);
        self.weights.push(w);
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().cloned().zip(self.weights.iter().cloned())
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Trapezoid rule on `[lo, hi]` with nodes anchored at multiples of `h`, so
/// that the rule at `h/2` contains every node of the rule at `h`.
///
/// `map` sends the integration coordinate `s` to the point reported in the
/// rule, and `log_density` is the log of the integrand weight in `s`
/// (density times Jacobian).
pub fn anchored_trapezoid(
    lo: f64,
    hi: f64,
    h: f64,
    map: impl Fn(f64) -> f64,
    log_density: impl Fn(f64) -> f64,
) -> Rule {
    let k_lo = (lo / h).floor() as i64;
    let k_hi = (hi / h).ceil() as i64;
    let mut rule = Rule::default();
    for k in k_lo..=k_hi {
        let s = k as f64 * h;
        let lw = log_density(s);
        if lw.is_finite() {
            let w = h * lw.exp();
            if w > 0.0 {
                rule.push(map(s), w);
            }
        }
    }
    rule
}

/// Options for [`adaptive_log_trapezoid`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    /// Stop when successive levels agree to this relative tolerance.
    pub rel_tol: f64,
    /// Nodes beyond `peak - tail_drop` (in log units) are dropped.
    pub tail_drop: f64,
    pub max_nodes: usize,
    pub min_nodes: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions { rel_tol: 1e-9, tail_drop: 42.0, max_nodes: 1024, min_nodes: 64 }
    }
}

/// One evaluated node of an adaptive rule.
#[derive(Debug, Clone)]
pub struct LogNode<T> {
    pub u: f64,
    /// `ln h + ln integrand(u)`.
    pub log_weight: f64,
    pub payload: T,
}

#[derive(Debug, Clone)]
pub struct LogIntegral<T> {
    pub log_value: f64,
    pub nodes: Vec<LogNode<T>>,
    pub step: f64,
    /// Relative change between the last two levels.
    pub rel_change: f64,
}

/// Integrates `exp(φ(u))` over the real line for a unimodal log-integrand
/// `φ`, centred at `center` with initial step `h0`.
///
/// `eval(u)` returns `(φ(u), payload)`; payloads are retained per node so the
/// caller can form posterior-weighted averages without re-evaluating.
/// Successive levels halve the step until the integral changes by less than
/// `opts.rel_tol`, or fail once the node count would exceed `opts.max_nodes`.
pub fn adaptive_log_trapezoid<T>(
    center: f64,
    h0: f64,
    mut eval: impl FnMut(f64) -> (f64, T),
    opts: AdaptiveOptions,
) -> Result<LogIntegral<T>> {
    if !(h0 > 0.0) || !center.is_finite() {
        return Err(MisfitError::invalid("h0", "step and centre must be positive and finite"));
    }
    // (u, φ(u), payload), kept sorted by u
    let mut pts: Vec<(f64, f64, T)> = Vec::new();
    let (v0, p0) = eval(center);
    pts.push((center, v0, p0));
    let mut h = h0;
    let mut peak = v0;
    extend_tails(&mut pts, h, &mut peak, &mut eval, opts)?;
    let mut prev = log_trapezoid_sum(&pts, h);
    loop {
        let half = h / 2.0;
        let mut refined = Vec::with_capacity(pts.len() * 2);
        let mut it = pts.into_iter().peekable();
        while let Some((u, v, p)) = it.next() {
            refined.push((u, v, p));
            if it.peek().is_some() {
                let (vm, pm) = eval(u + half);
                peak = peak.max(vm);
                refined.push((u + half, vm, pm));
            }
        }
        pts = refined;
        h = half;
        extend_tails(&mut pts, h, &mut peak, &mut eval, opts)?;
        let cur = log_trapezoid_sum(&pts, h);
        let rel = (cur - prev).exp_m1().abs();
        if (rel < opts.rel_tol && pts.len() >= opts.min_nodes) || cur == prev {
            return Ok(finish(pts, h, cur, rel));
        }
        if pts.len() * 2 > opts.max_nodes {
            return Err(MisfitError::numerical(
                format!("adaptive trapezoid did not converge within {} nodes", opts.max_nodes),
                rel,
            ));
        }
        prev = cur;
    }
}

fn finish<T>(pts: Vec<(f64, f64, T)>, h: f64, log_value: f64, rel: f64) -> LogIntegral<T> {
    let lh = h.ln();
    LogIntegral {
        log_value,
        nodes: pts
            .into_iter()
            .map(|(u, v, payload)| LogNode { u, log_weight: lh + v, payload })
            .collect(),
        step: h,
        rel_change: rel,
    }
}

fn log_trapezoid_sum<T>(pts: &[(f64, f64, T)], h: f64) -> f64 {
    let m = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = pts.iter().map(|p| (p.1 - m).exp()).sum();
    m + s.ln() + h.ln()
}

fn extend_tails<T>(
    pts: &mut Vec<(f64, f64, T)>,
    h: f64,
    peak: &mut f64,
    eval: &mut impl FnMut(f64) -> (f64, T),
    opts: AdaptiveOptions,
) -> Result<()> {
    // right tail
    loop {
        let last = pts.last().expect("non-empty");
        if last.1 < *peak - opts.tail_drop && pts.len() > 2 {
            break;
        }
        if pts.len() > 4 * opts.max_nodes {
            return Err(MisfitError::numerical("integrand tail does not decay", last.1));
        }
        let u = last.0 + h;
        let (v, p) = eval(u);
        *peak = peak.max(v);
        pts.push((u, v, p));
        if v == f64::NEG_INFINITY {
            break;
        }
    }
    // left tail
    let mut front: Vec<(f64, f64, T)> = Vec::new();
    let mut u = pts[0].0;
    let mut v = pts[0].1;
    loop {
        if v < *peak - opts.tail_drop && pts.len() + front.len() > 2 {
            break;
        }
        if pts.len() + front.len() > 4 * opts.max_nodes {
            return Err(MisfitError::numerical("integrand tail does not decay", v));
        }
        u -= h;
        let (nv, p) = eval(u);
        *peak = peak.max(nv);
        v = nv;
        front.push((u, nv, p));
        if nv == f64::NEG_INFINITY {
            break;
        }
    }
    if !front.is_empty() {
        front.reverse();
        front.append(pts);
        *pts = front;
    }
    Ok(())
}
