//! Independent reference evaluations used by the integration and acceptance
//! tests. Nothing here calls into the crate's numerical code.

#![allow(dead_code)]

/// `1 - exp(-x)` by its alternating series for small `x`, direct otherwise.
pub fn one_minus_exp_neg(x: f64) -> f64 {
    if x > 0.1 {
        return 1.0 - (-x).exp();
    }
    let mut term = x;
    let mut sum = 0.0_f64;
    let mut k = 1.0;
    while term.abs() > 1e-300 && term.abs() > sum.abs() * 1e-18 {
        sum += term;
        k += 1.0;
        term *= -x / k;
    }
    sum
}

pub fn entropy(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 0.5 {
        return 1.0;
    }
    -(x * x.ln() + (1.0 - x) * (1.0 - x).ln()) / std::f64::consts::LN_2
}

/// Plain parameters of one link evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Link {
    pub p_ap: f64,
    pub p_dc: f64,
    pub e_prime: f64,
    pub e0: f64,
    pub eta_bob: f64,
    pub loss_db: f64,
    pub mu: f64,
    pub nu1: f64,
    pub f: f64,
    pub q: f64,
}

impl Link {
    pub fn eta(&self) -> f64 {
        self.eta_bob * 10f64.powf(-self.loss_db / 10.0)
    }

    pub fn y0(&self) -> f64 {
        (1.0 + self.p_ap) * self.p_dc
    }

    pub fn gain(&self, x: f64) -> f64 {
        self.y0() + one_minus_exp_neg(self.eta() * x) * (1.0 + self.p_ap)
    }

    pub fn qber(&self, x: f64) -> f64 {
        let s = one_minus_exp_neg(self.eta() * x);
        (self.e0 * self.y0() + (self.e_prime + self.e0 * self.p_ap) * s) / self.gain(x)
    }

    /// Exact single-photon yield and error rate.
    pub fn y1_e1(&self) -> (f64, f64) {
        let eta = self.eta();
        let y1 = self.y0() + eta * (1.0 + self.p_ap);
        let e1 = (self.e0 * self.y0() + (self.e_prime + self.e0 * self.p_ap) * eta) / y1;
        (y1, e1)
    }

    /// Weak+vacuum bounds on `Y1` and `e1`.
    pub fn bounds(&self) -> (f64, f64) {
        let (mu, nu) = (self.mu, self.nu1);
        let qm = self.gain(mu);
        let qn = self.gain(nu);
        let en = self.qber(nu);
        let y0 = self.y0();
        let y1 = mu / (mu * nu - nu * nu)
            * (qn * nu.exp() - qm * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0);
        let e1 = (en * qn * nu.exp() - self.e0 * y0) / (y1 * nu);
        (y1, e1)
    }

    /// Key-rate bound, floored at zero.
    pub fn key_rate(&self) -> f64 {
        let qm = self.gain(self.mu);
        let em = self.qber(self.mu);
        let (y1, e1) = self.bounds();
        let single = if y1 > 0.0 { y1 * self.mu * (-self.mu).exp() * (1.0 - entropy(e1.clamp(0.0, 1.0))) } else { 0.0 };
        (self.q * (-self.f * qm * entropy(em) + single)).max(0.0)
    }
}

/// Plain bisection for `(1 - mu) e^-mu = rhs` on (0, 1).
pub fn optimal_mu_by_bisection(e: f64, f: f64) -> f64 {
    let h = entropy(e);
    let rhs = f * h / (1.0 - h);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if (1.0 - mid) * (-mid).exp() > rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
