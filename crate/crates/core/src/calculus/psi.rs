//! Holomorphic symbols with declared decay orders.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Decay order recorded for exponentially decaying symbols; closure
/// arithmetic saturates at this value.
pub const EXP_SENTINEL: f64 = 64.0;

fn one() -> f64 {
    1.0
}

/// Expression tree of a symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PsiForm {
    /// `z^a e^{-rate·z}` (`a = 0` is the semigroup symbol)
    ExpMonomial {
        a: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    /// `z^a (1+z)^{-(a+b)}`
    Rational {
        a: f64,
        b: f64,
    },
    /// `(1 - e^{-z})^m`
    OneMinusExp {
        m: u32,
    },
    Scaled {
        c: f64,
        inner: Box<PsiForm>,
    },
    Product {
        factors: Vec<PsiForm>,
    },
    /// `z^s·inner(z)`
    ZPow {
        s: f64,
        inner: Box<PsiForm>,
    },
}

/// Built-in families accepted by [`psi_make`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PsiFamily {
    ExpMonomial(f64),
    Rational(f64, f64),
}

/// A holomorphic function on a sector together with its decay orders
/// `alpha` (at 0) and `beta` (at ∞) and its validity angle `sigma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PsiForm", into = "PsiForm")]
pub struct PsiFunction {
    form: PsiForm,
    alpha: f64,
    beta: f64,
    sigma: f64,
    value0: C64,
    value_inf: C64,
}

impl From<PsiFunction> for PsiForm {
    fn from(p: PsiFunction) -> PsiForm {
        p.form
    }
}

impl TryFrom<PsiForm> for PsiFunction {
    type Error = Error;
    fn try_from(f: PsiForm) -> Result<PsiFunction> {
        PsiFunction::from_form(f)
    }
}

/// `ψ(z) = c·family(z)`.
pub fn psi_make(family: PsiFamily, c: f64) -> Result<PsiFunction> {
    let base = match family {
        PsiFamily::ExpMonomial(a) => {
            if !(a > 0.0) {
                return invalid(format!("exp_monomial needs a > 0, got {a}"));
            }
            PsiForm::ExpMonomial { a, rate: 1.0 }
        }
        PsiFamily::Rational(a, b) => {
            if !(a > 0.0) || !(b > 0.0) {
                return invalid(format!("rational needs a, b > 0, got ({a}, {b})"));
            }
            PsiForm::Rational { a, b }
        }
    };
    let p = PsiFunction::from_form(base)?;
    if c == 1.0 {
        Ok(p)
    } else {
        p.scale(c)
    }
}

pub fn exp_monomial(a: f64) -> Result<PsiFunction> {
    psi_make(PsiFamily::ExpMonomial(a), 1.0)
}

pub fn rational(a: f64, b: f64) -> Result<PsiFunction> {
    psi_make(PsiFamily::Rational(a, b), 1.0)
}

/// `e^{-z}`.
pub fn semigroup_symbol() -> PsiFunction {
    PsiFunction::from_form(PsiForm::ExpMonomial { a: 0.0, rate: 1.0 }).unwrap()
}

/// `(1 - e^{-z})^m`.
pub fn one_minus_exp(m: u32) -> Result<PsiFunction> {
    if m == 0 {
        return invalid("power must be at least 1");
    }
    PsiFunction::from_form(PsiForm::OneMinusExp { m })
}

/// `(z e^{-z})^m = z^m e^{-m z}`.
pub fn exp_monomial_power(m: u32) -> Result<PsiFunction> {
    if m == 0 {
        return invalid("power must be at least 1");
    }
    PsiFunction::from_form(PsiForm::ExpMonomial {
        a: m as f64,
        rate: m as f64,
    })
}

/// `1 - e^{-x}` for complex `x` without cancellation.
fn one_minus_exp_neg(z: C64) -> C64 {
    // expm1(w) with w = -z
    let (x, y) = (-z.re, -z.im);
    let em1 = x.exp_m1();
    let s = (y / 2.0).sin();
    let re = em1 * y.cos() - 2.0 * s * s;
    let im = x.exp() * y.sin();
    -C64::new(re, im)
}

fn eval_form(f: &PsiForm, z: C64) -> C64 {
    match f {
        PsiForm::ExpMonomial { a, rate } => {
            if *a == 0.0 {
                (-z * rate).exp()
            } else {
                (z.ln() * a - z * rate).exp()
            }
        }
        PsiForm::Rational { a, b } => (z.ln() * a - (z + 1.0).ln() * (a + b)).exp(),
        PsiForm::OneMinusExp { m } => one_minus_exp_neg(z).powu(*m),
        PsiForm::Scaled { c, inner } => eval_form(inner, z) * c,
        PsiForm::Product { factors } => factors.iter().fold(C64::new(1.0, 0.0), |acc, g| acc * eval_form(g, z)),
        PsiForm::ZPow { s, inner } => (z.ln() * s).exp() * eval_form(inner, z),
    }
}

struct Meta {
    alpha: f64,
    beta: f64,
    sigma: f64,
}

fn meta(f: &PsiForm) -> Result<Meta> {
    Ok(match f {
        PsiForm::ExpMonomial { a, rate } => {
            if !(*a >= 0.0) || !(*rate > 0.0) {
                return invalid("exp_monomial needs a >= 0 and rate > 0");
            }
            Meta {
                alpha: *a,
                beta: EXP_SENTINEL,
                sigma: FRAC_PI_2,
            }
        }
        PsiForm::Rational { a, b } => {
            if !(*a > 0.0) || !(*b > 0.0) {
                return invalid("rational needs a, b > 0");
            }
            Meta {
                alpha: *a,
                beta: *b,
                sigma: PI,
            }
        }
        PsiForm::OneMinusExp { m } => {
            if *m == 0 {
                return invalid("power must be at least 1");
            }
            Meta {
                alpha: *m as f64,
                beta: 0.0,
                sigma: FRAC_PI_2,
            }
        }
        PsiForm::Scaled { c, inner } => {
            if *c == 0.0 || !c.is_finite() {
                return invalid("scale must be finite and nonzero");
            }
            meta(inner)?
        }
        PsiForm::Product { factors } => {
            if factors.is_empty() {
                return invalid("empty product");
            }
            let ms = factors.iter().map(meta).collect::<Result<Vec<_>>>()?;
            Meta {
                alpha: ms.iter().map(|m| m.alpha).sum(),
                beta: ms.iter().map(|m| m.beta).sum::<f64>().min(EXP_SENTINEL),
                sigma: ms.iter().map(|m| m.sigma).fold(PI, f64::min),
            }
        }
        PsiForm::ZPow { s, inner } => {
            let m = meta(inner)?;
            Meta {
                alpha: m.alpha + s,
                beta: if m.beta >= EXP_SENTINEL {
                    EXP_SENTINEL
                } else {
                    m.beta - s
                },
                sigma: m.sigma,
            }
        }
    })
}

impl PsiFunction {
    pub fn from_form(form: PsiForm) -> Result<PsiFunction> {
        let m = meta(&form)?;
        let mut p = PsiFunction {
            form,
            alpha: m.alpha,
            beta: m.beta,
            sigma: m.sigma,
            value0: C64::new(0.0, 0.0),
            value_inf: C64::new(0.0, 0.0),
        };
        p.value0 = p.limit(m.alpha, true);
        p.value_inf = p.limit(m.beta, false);
        Ok(p)
    }

    fn limit(&self, order: f64, at_zero: bool) -> C64 {
        if order > 0.0 {
            return C64::new(0.0, 0.0);
        }
        if order < 0.0 {
            return C64::new(f64::INFINITY, 0.0);
        }
        structural_limit(&self.form, at_zero)
    }

    pub fn form(&self) -> &PsiForm {
        &self.form
    }

    /// Vanishing order at 0.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Decay order at ∞ ([`EXP_SENTINEL`] for exponential decay).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Half-angle of the sector on which the symbol is holomorphic and bounded.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn value_at_zero(&self) -> C64 {
        self.value0
    }

    pub fn value_at_infinity(&self) -> C64 {
        self.value_inf
    }

    /// True for `Ψ`-class symbols (decay at both ends).
    pub fn is_psi_class(&self) -> bool {
        self.alpha > 0.0 && self.beta > 0.0
    }

    /// True for bounded symbols.
    pub fn is_bounded(&self) -> bool {
        self.alpha >= 0.0 && self.beta >= 0.0
    }

    pub fn eval(&self, z: C64) -> C64 {
        if z == C64::new(0.0, 0.0) {
            return self.value0;
        }
        eval_form(&self.form, z)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.eval(C64::new(x, 0.0)).re
    }

    /// `c·ψ`.
    pub fn scale(&self, c: f64) -> Result<PsiFunction> {
        let form = match &self.form {
            PsiForm::Scaled { c: c0, inner } => PsiForm::Scaled {
                c: c0 * c,
                inner: inner.clone(),
            },
            f => PsiForm::Scaled {
                c,
                inner: Box::new(f.clone()),
            },
        };
        PsiFunction::from_form(form)
    }

    /// `ψ·φ`.
    pub fn mul(&self, other: &PsiFunction) -> Result<PsiFunction> {
        let mut factors = Vec::new();
        for f in [&self.form, &other.form] {
            match f {
                PsiForm::Product { factors: fs } => factors.extend(fs.iter().cloned()),
                g => factors.push(g.clone()),
            }
        }
        PsiFunction::from_form(PsiForm::Product { factors })
    }

    /// `z^s·ψ(z)`.
    pub fn zpow(&self, s: f64) -> Result<PsiFunction> {
        if s == 0.0 {
            return Ok(self.clone());
        }
        PsiFunction::from_form(PsiForm::ZPow {
            s,
            inner: Box::new(self.form.clone()),
        })
    }

    /// Short human-readable description.
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Measured decay orders and the constant `C` in
    /// `|ψ(ζ)| ≤ C |ζ|^α / (1 + |ζ|^{α+β})` along the rays `arg ζ ∈ {0, ±σ/2}`.
    pub fn decay_report(&self) -> DecayReport {
        let slope = |x0: f64, x1: f64| -> f64 {
            let (a, b) = (self.eval_real(x0).abs(), self.eval_real(x1).abs());
            (b.ln() - a.ln()) / (x1.ln() - x0.ln())
        };
        let alpha_fit = slope(1e-7, 1e-6);
        let far = (self.eval_real(1e5).abs(), self.eval_real(1e6).abs());
        let beta_fit = if far.0 == 0.0 || far.1 == 0.0 || far.1 < far.0 * 1e-30 {
            EXP_SENTINEL
        } else {
            (-slope(1e5, 1e6)).min(EXP_SENTINEL)
        };
        let mut log_c = f64::NEG_INFINITY;
        let e = self.alpha + self.beta;
        for ang in [0.0, self.sigma / 2.0, -self.sigma / 2.0] {
            for k in 0..=120 {
                let r = 10f64.powf(-6.0 + 0.1 * k as f64);
                let v = self.eval(C64::from_polar(r, ang)).norm();
                if v == 0.0 {
                    continue;
                }
                let lr = r.ln();
                // ln(1 + r^e) computed stably
                let l1 = if e * lr > 0.0 {
                    e * lr + (-e * lr).exp().ln_1p()
                } else {
                    (e * lr).exp().ln_1p()
                };
                log_c = log_c.max(v.ln() + l1 - self.alpha * lr);
            }
        }
        DecayReport {
            alpha_fit,
            beta_fit,
            bound_constant: log_c.exp(),
        }
    }
}

fn structural_limit(f: &PsiForm, at_zero: bool) -> C64 {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    match f {
        PsiForm::ExpMonomial { a, .. } => {
            if at_zero && *a == 0.0 {
                one
            } else {
                zero
            }
        }
        PsiForm::Rational { .. } => zero,
        PsiForm::OneMinusExp { .. } => {
            if at_zero {
                zero
            } else {
                one
            }
        }
        PsiForm::Scaled { c, inner } => structural_limit(inner, at_zero) * c,
        PsiForm::Product { factors } => factors.iter().fold(one, |acc, g| acc * structural_limit(g, at_zero)),
        PsiForm::ZPow { .. } => {
            // total order zero with a nontrivial power: evaluate numerically
            let x = if at_zero { 1e-12 } else { 1e12 };
            eval_form(f, C64::new(x, 0.0))
        }
    }
}

impl fmt::Display for PsiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(x: &PsiForm) -> String {
            match x {
                PsiForm::ExpMonomial { a, rate } => {
                    let e = if *rate == 1.0 {
                        "e^{-z}".to_string()
                    } else {
                        format!("e^{{-{rate}z}}")
                    };
                    if *a == 0.0 {
                        e
                    } else {
                        format!("z^{a} {e}")
                    }
                }
                PsiForm::Rational { a, b } => format!("z^{a}/(1+z)^{}", a + b),
                PsiForm::OneMinusExp { m } => format!("(1-e^{{-z}})^{m}"),
                PsiForm::Scaled { c, inner } => format!("{c}*[{}]", go(inner)),
                PsiForm::Product { factors } => factors.iter().map(go).collect::<Vec<_>>().join(" * "),
                PsiForm::ZPow { s, inner } => format!("z^{s} [{}]", go(inner)),
            }
        }
        write!(f, "{}", go(&self.form))
    }
}

/// Output of [`PsiFunction::decay_report`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub alpha_fit: f64,
    pub beta_fit: f64,
    pub bound_constant: f64,
}
