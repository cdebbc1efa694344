#![allow(dead_code)]

use astro_float::{BigFloat, Consts, RoundingMode};
use gbcosface_core::{sphere, ScoreBundle};

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// Extended-precision evaluation of the log-sum-exp based losses.
pub struct Wide {
    cc: Consts,
}

impl Wide {
    pub fn new() -> Self {
        Self { cc: Consts::new().expect("constants cache") }
    }

    fn big(x: f64) -> BigFloat {
        BigFloat::from_f64(x, P)
    }

    fn to_f64(x: &BigFloat) -> f64 {
        x.to_string().parse().expect("decimal rendering parses")
    }

    fn exp(&mut self, x: &BigFloat) -> BigFloat {
        x.exp(P, RM, &mut self.cc)
    }

    fn ln(&mut self, x: &BigFloat) -> BigFloat {
        x.ln(P, RM, &mut self.cc)
    }

    /// `(1/s) ln Σ exp(s v_i)` without any shifting.
    fn lse(&mut self, vals: &[f64], s: f64) -> BigFloat {
        let bs = Self::big(s);
        let mut acc = Self::big(0.0);
        for &v in vals {
            let e = self.exp(&Self::big(v).mul(&bs, P, RM));
            acc = acc.add(&e, P, RM);
        }
        self.ln(&acc).div(&bs, P, RM)
    }

    pub fn logsumexp(&mut self, vals: &[f64], s: f64) -> f64 {
        let r = self.lse(vals, s);
        Self::to_f64(&r)
    }

    /// `ln(1 + exp(z))` for an extended-precision `z`.
    fn softplus(&mut self, z: &BigFloat) -> BigFloat {
        let e = self.exp(z);
        self.ln(&e.add(&Self::big(1.0), P, RM))
    }

    /// `-ln(e^{s t} / (e^{s t} + Σ e^{s p_i}))`, with `t` supplied in f64.
    pub fn softmax_loss(&mut self, b: &ScoreBundle, target_logit: f64, s: f64) -> f64 {
        let bs = Self::big(s);
        let num = self.exp(&Self::big(target_logit).mul(&bs, P, RM));
        let mut den = num.clone();
        for &p in b.p_nontarget() {
            den = den.add(&self.exp(&Self::big(p).mul(&bs, P, RM)), P, RM);
        }
        let r = self.ln(&den.div(&num, P, RM));
        Self::to_f64(&r)
    }

    /// Two-term antetype loss: logistic terms at scale `k`, `p_n` pooled at scale `s`.
    fn two_term(&mut self, b: &ScoreBundle, p_v: f64, m: f64, s: f64, k: f64) -> (f64, f64) {
        let bs = Self::big(k);
        let pn = self.lse(b.p_nontarget(), s);
        let zt = Self::big(p_v - b.p_y() + m).mul(&bs, P, RM);
        let zn = pn
            .sub(&Self::big(p_v), P, RM)
            .add(&Self::big(m), P, RM)
            .mul(&bs, P, RM);
        let lt = self.softplus(&zt);
        let ln = self.softplus(&zn);
        (Self::to_f64(&lt), Self::to_f64(&ln))
    }

    pub fn antetype(&mut self, b: &ScoreBundle, p_v: f64, m: f64, s: f64) -> (f64, f64) {
        self.two_term(b, p_v, m, s, s)
    }

    /// Half-weighted antetype loss at doubled scale.
    pub fn gb_cosface(&mut self, b: &ScoreBundle, p_v: f64, m: f64, s: f64) -> f64 {
        let (t, n) = self.two_term(b, p_v, m, s, 2.0 * s);
        0.5 * t + 0.5 * n
    }
}

/// Plain loop reference for cosine scores.
pub fn naive_scores(x: &[f64], protos: &gbcosface_core::PrototypeMatrix) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..protos.n() {
        let mut acc = 0.0;
        for k in 0..x.len() {
            acc += x[k] * protos.row(r)[k];
        }
        out.push(acc);
    }
    out
}

/// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
pub fn random_rotation(rng: &mut impl rand::Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(u) {
                *a -= d * b;
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.push(v.iter().map(|a| a / n).collect());
        }
    }
    q
}

pub fn rotate(q: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    q.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn unit(v: &[f64]) -> sphere::UnitVector {
    sphere::normalize(v).unwrap()
}
