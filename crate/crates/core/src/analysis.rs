//! Entropy and KL functionals, the unbalanced objective evaluator, the
//! uniform-match projector, exact common-measure arithmetic, and the
//! epsilon scaling rule.

use ndarray::Array2;

use crate::cost::{CostMatrix, MarginalPair};
use crate::error::{MatchError, Result};
use crate::numeric::kahan_sum;
use crate::plan::TransportPlan;
use crate::scaling::{SolverConfig, Tau};

/// Reduced fraction with positive denominator, on checked 64-bit integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    num: i64,
    den: i64,
}

fn gcd_u(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(MatchError::InvalidArgument("zero denominator".into()));
        }
        let sign = if (num < 0) != (den < 0) && num != 0 {
            -1
        } else {
            1
        };
        let (an, ad) = (num.unsigned_abs(), den.unsigned_abs());
        let g = if an == 0 { ad } else { gcd_u(an, ad) };
        let num = i64::try_from(an / g)
            .map_err(|_| MatchError::RationalOverflow("numerator".into()))?
            * sign;
        let den = i64::try_from(ad / g)
            .map_err(|_| MatchError::RationalOverflow("denominator".into()))?;
        Ok(Self { num, den })
    }

    pub fn numerator(&self) -> i64 {
        self.num
    }

    pub fn denominator(&self) -> i64 {
        self.den
    }

    pub fn is_positive(&self) -> bool {
        self.num > 0
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Whether `self` is an exact integer multiple of `other`.
    pub fn is_multiple_of(&self, other: &Rational) -> bool {
        // self / other = (num * other.den) / (den * other.num), exact in i128.
        let n = self.num as i128 * other.den as i128;
        let d = self.den as i128 * other.num as i128;
        d != 0 && n % d == 0
    }
}

fn checked_lcm(a: i64, b: i64) -> Result<i64> {
    let g = gcd_u(a.unsigned_abs(), b.unsigned_abs()) as i64;
    (a / g)
        .checked_mul(b)
        .ok_or_else(|| MatchError::RationalOverflow(format!("lcm({a}, {b})")))
}

/// The greatest rational that divides every input exactly: put everything
/// over the least common denominator and take the gcd of the scaled
/// numerators. Refuses inputs whose common denominator overflows i64.
pub fn common_measure(values: &[Rational]) -> Result<Rational> {
    if values.is_empty() {
        return Err(MatchError::EmptyInput("common_measure"));
    }
    if values.iter().any(|v| !v.is_positive()) {
        return Err(MatchError::InvalidArgument(
            "common measure requires strictly positive rationals".into(),
        ));
    }
    let mut lcm = 1i64;
    for v in values {
        lcm = checked_lcm(lcm, v.den)?;
    }
    let mut g: u64 = 0;
    for v in values {
        let scaled = v
            .num
            .checked_mul(lcm / v.den)
            .ok_or_else(|| MatchError::RationalOverflow("scaled numerator".into()))?;
        g = gcd_u(g, scaled.unsigned_abs());
    }
    Rational::new(
        i64::try_from(g).map_err(|_| MatchError::RationalOverflow("gcd".into()))?,
        lcm,
    )
}

/// Entropy `H(P) = -sum P_ij (log P_ij - 1)` with `0 log 0 = 0`.
/// For unit-mass plans the value lies in `[1, log(n m) + 1]`.
pub fn entropy(p: &TransportPlan) -> f64 {
    -kahan_sum(
        p.values()
            .iter()
            .filter(|x| **x > 0.0)
            .map(|x| x * (x.ln() - 1.0)),
    )
}

/// Generalized KL divergence `sum u log(u/v) - u + v` with `0 log 0 = 0`.
/// Zero reference entries are admissible only opposite zero mass.
pub fn kl(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(MatchError::DimensionMismatch(format!(
            "kl arguments have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let mut terms = Vec::with_capacity(u.len());
    for (ui, vi) in u.iter().zip(v) {
        if *ui < 0.0 || *vi < 0.0 {
            return Err(MatchError::InvalidArgument(
                "kl requires nonnegative mass and positive reference".into(),
            ));
        }
        if *ui == 0.0 {
            terms.push(*vi);
        } else {
            if *vi == 0.0 {
                return Err(MatchError::InvalidArgument(
                    "kl reference has a zero opposite positive mass".into(),
                ));
            }
            terms.push(ui * (ui / vi).ln() - ui + vi);
        }
    }
    Ok(kahan_sum(terms))
}

/// Term selection for [`unbalanced_objective`]; defaults to everything.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveOptions {
    pub include_entropy: bool,
    pub include_kl_alpha: bool,
    pub include_kl_beta: bool,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        Self {
            include_entropy: true,
            include_kl_alpha: true,
            include_kl_beta: true,
        }
    }
}

/// The unbalanced objective in expanded form.
///
/// `total = <P,C> - eps H(P) + tau1 KL(P1 | alpha) + tau2 KL(1'P | beta)`.
/// This differs from the kernel-relative form `eps KL(P | K_eps) + ...` by
/// the constant `eps sum(K_eps)`, which is independent of `P`; the expanded
/// convention is the one comparable across epsilon values and against the
/// unregularized closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub transport_term: f64,
    pub entropy_term: f64,
    pub kl_alpha_term: f64,
    pub kl_beta_term: f64,
    pub total: f64,
}

fn tau_times(tau: Tau, divergence: f64) -> f64 {
    match tau {
        Tau::Finite(t) => t * divergence,
        Tau::Infinite => {
            if divergence == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Evaluates the unbalanced objective of a plan. `cfg.epsilon` may be zero
/// here, which drops the entropy term and leaves pure transport plus KL
/// penalties; an `Infinite` tau contributes zero when its constraint is met
/// exactly and infinity otherwise.
pub fn unbalanced_objective(
    p: &TransportPlan,
    cost: &CostMatrix,
    m: &MarginalPair,
    cfg: &SolverConfig,
    opts: &ObjectiveOptions,
) -> Result<ObjectiveBreakdown> {
    if p.np() != cost.np() || p.cols() != cost.cols() {
        return Err(MatchError::DimensionMismatch(
            "plan and cost shapes differ".into(),
        ));
    }
    if m.alpha().len() != p.np() || m.beta().len() != p.cols() {
        return Err(MatchError::DimensionMismatch(
            "marginals do not match the plan shape".into(),
        ));
    }
    if !(cfg.epsilon >= 0.0 && cfg.epsilon.is_finite()) {
        return Err(MatchError::InvalidArgument(
            "objective evaluation needs a finite epsilon >= 0".into(),
        ));
    }

    let transport_term = p.transport_cost(cost);
    let entropy_term = if opts.include_entropy && cfg.epsilon > 0.0 {
        -cfg.epsilon * entropy(p)
    } else {
        0.0
    };
    let kl_alpha_term = if opts.include_kl_alpha {
        tau_times(cfg.tau1, kl(&p.row_sums(), m.alpha())?)
    } else {
        0.0
    };
    let kl_beta_term = if opts.include_kl_beta {
        tau_times(cfg.tau2, kl(&p.col_sums(), m.beta())?)
    } else {
        0.0
    };
    Ok(ObjectiveBreakdown {
        transport_term,
        entropy_term,
        kl_alpha_term,
        kl_beta_term,
        total: transport_term + entropy_term + kl_alpha_term + kl_beta_term,
    })
}

/// Projects a unit-mass plan onto the uniform matches under the Frobenius
/// norm: support is the `k` greatest entries with
/// `k = argmax (2 * top_k_sum - 1) / k`; ties in entry values resolve in
/// row-major order and ties in the objective to the smallest `k`.
pub fn project_uniform(p: &TransportPlan) -> TransportPlan {
    let mass = p.total_mass();
    assert!(
        (mass - 1.0).abs() <= 1e-9,
        "project_uniform needs a unit-mass plan, got mass {mass}"
    );
    let flat: Vec<f64> = p.values().iter().copied().collect();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_by(|a, b| flat[*b].partial_cmp(&flat[*a]).unwrap().then(a.cmp(b)));

    let mut best_k = 1usize;
    let mut best_obj = f64::NEG_INFINITY;
    let mut cum = 0.0;
    for (idx, flat_idx) in order.iter().enumerate() {
        cum += flat[*flat_idx];
        let k = idx + 1;
        let obj = (2.0 * cum - 1.0) / k as f64;
        if obj > best_obj {
            best_obj = obj;
            best_k = k;
        }
    }

    let cols = p.cols();
    let mut values = Array2::zeros((p.np(), cols));
    let mass = 1.0 / best_k as f64;
    for flat_idx in order.iter().take(best_k) {
        values[(flat_idx / cols, flat_idx % cols)] = mass;
    }
    TransportPlan::from_array(values).expect("projector output is a uniform match")
}

/// Which published form of the epsilon scaling rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonConvention {
    /// `eps0 / (log(2 np) + 1)`, the training-setup form. Default.
    Experiments,
    /// `eps0 / (log(np) + 1)`, the rule-of-thumb form.
    ///
    /// The two differ only by where the factor 2 is absorbed:
    /// `Experiments` at `np` equals `Appendix` at `2 np`.
    Appendix,
}

/// Scales the entropic regularization with the prediction count so the
/// entropy term keeps a size-independent weight. `eps0 = 0.12` is the
/// published working value.
pub fn epsilon_rule(np: usize, eps0: f64, convention: EpsilonConvention) -> f64 {
    assert!(np >= 1, "epsilon_rule needs np >= 1");
    assert!(eps0 > 0.0, "epsilon_rule needs eps0 > 0");
    let n = match convention {
        EpsilonConvention::Experiments => 2.0 * np as f64,
        EpsilonConvention::Appendix => np as f64,
    };
    eps0 / (n.ln() + 1.0)
}
