//! Background Markov chains: validation, stationary laws, drift, time
//! reversal and product chains of independent users.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Index;

use crate::linalg::solve_dense;
use crate::matrix::{Builder, SparseMatrix};
use crate::{Error, Result};

/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Residual bound `‖πP − π‖∞` accepted from the stationary solve.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Largest chain solved by the dense direct method.
pub const DENSE_SOLVE_LIMIT: usize = 4096;

/// Chain description as read from a file, before any checks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RawChain {
    pub states: Vec<String>,
    pub transition: Vec<Vec<f64>>,
    pub net_gen: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Check {
    RowStochastic,
    Irreducible,
    /// Every state has a positive self-loop, so the chain is aperiodic.
    SelfLoops,
    /// Some state has a net deficit.
    DeficitState,
    IntegerRewards,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::RowStochastic,
        Check::Irreducible,
        Check::SelfLoops,
        Check::DeficitState,
        Check::IntegerRewards,
    ];
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::RowStochastic => "row-stochastic",
            Check::Irreducible => "irreducible",
            Check::SelfLoops => "positive self-loops",
            Check::DeficitState => "deficit state present",
            Check::IntegerRewards => "integer rewards",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    /// First offending state, when the failure is attributable to one.
    pub state: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ValidationReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn outcome(&self, check: Check) -> &CheckOutcome {
        self.outcomes
            .iter()
            .find(|o| o.check == check)
            .expect("every check is reported")
    }

    pub fn passed(&self, check: Check) -> bool {
        self.outcome(check).passed
    }

    /// The first failed check as an error.
    pub fn into_result(self) -> Result<()> {
        match self.outcomes.into_iter().find(|o| !o.passed) {
            None => Ok(()),
            Some(o) => Err(Error::Validation {
                check: o.check,
                state: o.state,
                detail: o.detail,
            }),
        }
    }
}

fn check_shape(raw: &RawChain) -> Result<()> {
    let n = raw.states.len();
    if n == 0 {
        return Err(Error::Structure("chain has no states".into()));
    }
    if raw.transition.len() != n {
        return Err(Error::Structure(format!(
            "transition has {} rows for {n} states",
            raw.transition.len()
        )));
    }
    if let Some((i, row)) = raw
        .transition
        .iter()
        .enumerate()
        .find(|(_, r)| r.len() != n)
    {
        return Err(Error::Structure(format!(
            "transition row {i} has {} entries for {n} states",
            row.len()
        )));
    }
    if raw.net_gen.len() != n {
        return Err(Error::Structure(format!(
            "net_gen has {} entries for {n} states",
            raw.net_gen.len()
        )));
    }
    Ok(())
}

/// Runs every acceptance check on a chain description.
///
/// Shape problems are returned as [`Error::Structure`]; everything else is
/// reported per check so callers can show the full picture.
pub fn validate(raw: &RawChain) -> Result<ValidationReport> {
    check_shape(raw)?;
    let n = raw.states.len();
    let p = &raw.transition;

    let mut stochastic = pass(Check::RowStochastic);
    'rows: for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                stochastic = fail(Check::RowStochastic, i, format!("entry ({i},{j}) = {v}"));
                break 'rows;
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            stochastic = fail(Check::RowStochastic, i, format!("row {i} sums to {sum}"));
            break;
        }
    }

    let forward = reach(n, |i, visit| {
        for (j, &v) in p[i].iter().enumerate() {
            if v > 0.0 {
                visit(j);
            }
        }
    });
    let backward = reach(n, |j, visit| {
        for (i, row) in p.iter().enumerate() {
            if row[j] > 0.0 {
                visit(i);
            }
        }
    });
    let irreducible = match (0..n).find(|&s| !forward[s] || !backward[s]) {
        None => pass(Check::Irreducible),
        Some(s) => fail(
            Check::Irreducible,
            s,
            format!(
                "state {s} ({}) does not communicate with state 0",
                raw.states[s]
            ),
        ),
    };

    let self_loops = match (0..n).find(|&s| !(p[s][s] > 0.0)) {
        None => pass(Check::SelfLoops),
        Some(s) => fail(
            Check::SelfLoops,
            s,
            format!("P({s},{s}) = {} so the chain may be periodic", p[s][s]),
        ),
    };

    let deficit = if raw.net_gen.iter().any(|&r| r < 0.0) {
        pass(Check::DeficitState)
    } else {
        CheckOutcome {
            check: Check::DeficitState,
            passed: false,
            state: None,
            detail: "no state has negative net generation".into(),
        }
    };

    let integers = match raw.net_gen.iter().position(|&r| !is_integer(r)) {
        None => pass(Check::IntegerRewards),
        Some(s) => fail(
            Check::IntegerRewards,
            s,
            format!("net_gen[{s}] = {} is not an integer", raw.net_gen[s]),
        ),
    };

    Ok(ValidationReport {
        outcomes: vec![stochastic, irreducible, self_loops, deficit, integers],
    })
}

fn is_integer(r: f64) -> bool {
    r.is_finite() && libm::trunc(r) == r && r.abs() < 9.0e15
}

fn pass(check: Check) -> CheckOutcome {
    CheckOutcome {
        check,
        passed: true,
        state: None,
        detail: String::new(),
    }
}

fn fail(check: Check, state: usize, detail: String) -> CheckOutcome {
    CheckOutcome {
        check,
        passed: false,
        state: Some(state),
        detail,
    }
}

/// Depth-first reachability from state 0.
fn reach(n: usize, mut neighbours: impl FnMut(usize, &mut dyn FnMut(usize))) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        neighbours(i, &mut |j| {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        });
    }
    seen
}

/// Probability vector indexed by state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DistVector(Vec<f64>);

impl DistVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        Ok(DistVector(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Expectation of `f(state)`.
    pub fn expect(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.0.iter().enumerate().map(|(s, &p)| p * f(s)).sum()
    }
}

impl Index<usize> for DistVector {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// One user's background chain `X_i` with integer net generation `r_i` per
/// state. Joint chains of several users have the same shape (see
/// [`JointModel`]).
///
/// Immutable after construction; the stationary law is computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct UserModel {
    labels: Vec<String>,
    transition: SparseMatrix,
    net_gen: Vec<i64>,
    stationary: DistVector,
}

impl UserModel {
    /// Builds and validates a model; fails on the first failed check.
    pub fn new(labels: Vec<String>, transition: Vec<Vec<f64>>, net_gen: Vec<f64>) -> Result<Self> {
        Self::from_raw(RawChain {
            states: labels,
            transition,
            net_gen,
        })
    }

    pub fn from_raw(raw: RawChain) -> Result<Self> {
        validate(&raw)?.into_result()?;
        Self::from_raw_unchecked(raw)
    }

    /// Skips every check except shape, integrality and the stationary solve.
    /// Used for degenerate chains (single state, no deficit) that the
    /// analysis routines still need to handle.
    pub fn from_raw_unchecked(raw: RawChain) -> Result<Self> {
        check_shape(&raw)?;
        if let Some(s) = raw.net_gen.iter().position(|&r| !is_integer(r)) {
            return Err(Error::Validation {
                check: Check::IntegerRewards,
                state: Some(s),
                detail: format!("net_gen[{s}] = {}", raw.net_gen[s]),
            });
        }
        let transition = SparseMatrix::from_dense(&raw.transition)?;
        let net_gen = raw.net_gen.iter().map(|&r| r as i64).collect();
        let stationary = solve_stationary(&transition)?;
        Ok(UserModel {
            labels: raw.states,
            transition,
            net_gen,
            stationary,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn transition(&self) -> &SparseMatrix {
        &self.transition
    }

    pub fn net_gen(&self) -> &[i64] {
        &self.net_gen
    }

    /// Stationary law `π` (direct solve for user chains, product of the
    /// marginals for joint chains).
    pub fn stationary(&self) -> &DistVector {
        &self.stationary
    }

    /// Largest `|r(s)|`.
    pub fn max_abs_reward(&self) -> i64 {
        self.net_gen.iter().map(|r| r.abs()).max().unwrap_or(0)
    }

    /// States with `r(s) < 0`.
    pub fn deficit_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.net_gen
            .iter()
            .enumerate()
            .filter(|(_, &r)| r < 0)
            .map(|(s, _)| s)
    }

    /// Stationary variance of the per-step reward, ignoring autocorrelation.
    pub fn reward_variance(&self) -> f64 {
        let mean = drift(self);
        self.stationary.expect(|s| {
            let d = self.net_gen[s] as f64 - mean;
            d * d
        })
    }

    pub fn to_raw(&self) -> RawChain {
        RawChain {
            states: self.labels.clone(),
            transition: self.transition.to_dense(),
            net_gen: self.net_gen.iter().map(|&r| r as f64).collect(),
        }
    }

    /// Same chain with rewards replaced. Validity of the result is the
    /// caller's concern.
    pub(crate) fn with_net_gen(&self, net_gen: Vec<i64>) -> UserModel {
        debug_assert_eq!(net_gen.len(), self.len());
        UserModel {
            net_gen,
            ..self.clone()
        }
    }
}

impl AsRef<UserModel> for UserModel {
    fn as_ref(&self) -> &UserModel {
        self
    }
}

fn solve_stationary(p: &SparseMatrix) -> Result<DistVector> {
    let n = p.dim();
    if n > DENSE_SOLVE_LIMIT {
        return Err(Error::Capacity {
            what: "dense stationary solve",
            requested: n,
            cap: DENSE_SOLVE_LIMIT,
        });
    }
    // (Pᵀ − I) π = 0 with the last equation replaced by Σπ = 1.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for (j, v) in p.row(i) {
            a[j * n + i] += v;
        }
        a[i * n + i] -= 1.0;
    }
    for k in 0..n {
        a[(n - 1) * n + k] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let mut pi = solve_dense(a, rhs).ok_or(Error::Numerical {
        what: "stationary solve (singular system)",
        residual: f64::INFINITY,
    })?;
    for v in &mut pi {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);

    let mut pi_p = vec![0.0; n];
    p.vec_mul(&pi, &mut pi_p);
    let residual = pi_p
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(residual <= STATIONARY_RESIDUAL_TOL) {
        return Err(Error::Numerical {
            what: "stationary solve",
            residual,
        });
    }
    Ok(DistVector(pi))
}

/// Solves `πP = π`, `Σπ = 1` directly.
pub fn stationary_distribution(model: &UserModel) -> Result<DistVector> {
    solve_stationary(model.transition())
}

/// Steady-state mean net generation `Δ = Σ π(s) r(s)`.
pub fn drift(model: &UserModel) -> f64 {
    let r = model.net_gen();
    let d = model.stationary().expect(|s| r[s] as f64);
    if d <= 0.0 {
        log::warn!("non-positive drift {d}: LOLP does not decay with battery size");
    }
    d
}

/// Transition matrix of the time-reversed chain,
/// `P*(s, s') = π(s') P(s', s) / π(s)`. Rewards and `π` are unchanged.
pub fn time_reverse(model: &UserModel) -> UserModel {
    let pi = model.stationary().as_slice();
    let reversed = model
        .transition()
        .transpose()
        .map_entries(|s, s2, v| pi[s2] * v / pi[s]);
    UserModel {
        labels: model.labels.clone(),
        transition: reversed,
        net_gen: model.net_gen.clone(),
        stationary: model.stationary.clone(),
    }
}

/// Independent users run side by side. The joint chain lives in
/// [`JointModel::model`] with states in lexicographic order of the component
/// indices (first user most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    users: Vec<UserModel>,
    joint: UserModel,
}

impl JointModel {
    pub fn users(&self) -> &[UserModel] {
        &self.users
    }

    pub fn model(&self) -> &UserModel {
        &self.joint
    }

    pub fn into_model(self) -> UserModel {
        self.joint
    }

    /// Component state indices of a joint state.
    pub fn decode(&self, joint_state: usize) -> Vec<usize> {
        let mut rest = joint_state;
        let mut out = vec![0; self.users.len()];
        for (slot, user) in out.iter_mut().zip(&self.users).rev() {
            *slot = rest % user.len();
            rest /= user.len();
        }
        out
    }
}

impl AsRef<UserModel> for JointModel {
    fn as_ref(&self) -> &UserModel {
        &self.joint
    }
}

/// Product chain of independent users with summed rewards.
///
/// Fails with [`Error::Capacity`] when the joint state count exceeds `cap`.
pub fn product_chain(users: &[UserModel], cap: usize) -> Result<JointModel> {
    if users.is_empty() {
        return Err(Error::Domain("product of zero users".into()));
    }
    let mut size: usize = 1;
    for u in users {
        size = size
            .checked_mul(u.len())
            .filter(|&s| s <= cap)
            .ok_or(Error::Capacity {
                what: "joint state space",
                requested: users.iter().fold(1usize, |a, u| a.saturating_mul(u.len())),
                cap,
            })?;
    }
    if users.len() == 1 {
        return Ok(JointModel {
            users: users.to_vec(),
            joint: users[0].clone(),
        });
    }

    let nnz_estimate = users
        .iter()
        .fold(1usize, |a, u| a.saturating_mul(u.transition().nnz()));
    let mut builder = Builder::with_capacity(size, nnz_estimate.min(size.saturating_mul(64)));
    let mut labels = Vec::with_capacity(size);
    let mut net_gen = Vec::with_capacity(size);
    let mut pi = Vec::with_capacity(size);

    let mut index = vec![0usize; users.len()];
    // Per-component sparse rows of the current joint state.
    let mut comp_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); users.len()];
    for _ in 0..size {
        let mut label = String::new();
        let mut r = 0i64;
        let mut p = 1.0;
        for (k, (u, &s)) in users.iter().zip(&index).enumerate() {
            if k > 0 {
                label.push('|');
            }
            label.push_str(&u.labels()[s]);
            r += u.net_gen()[s];
            p *= u.stationary()[s];
            comp_rows[k].clear();
            comp_rows[k].extend(u.transition().row(s));
        }
        labels.push(label);
        net_gen.push(r);
        pi.push(p);

        // Odometer over the component rows yields joint columns in
        // increasing order.
        let mut pos = vec![0usize; users.len()];
        'cols: loop {
            let mut col = 0usize;
            let mut v = 1.0;
            for (k, u) in users.iter().enumerate() {
                let (c, pv) = comp_rows[k][pos[k]];
                col = col * u.len() + c;
                v *= pv;
            }
            builder.push(col, v);
            let mut k = users.len();
            loop {
                if k == 0 {
                    break 'cols;
                }
                k -= 1;
                pos[k] += 1;
                if pos[k] < comp_rows[k].len() {
                    break;
                }
                pos[k] = 0;
            }
        }
        builder.finish_row();

        for k in (0..users.len()).rev() {
            index[k] += 1;
            if index[k] < users[k].len() {
                break;
            }
            index[k] = 0;
        }
    }

    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(JointModel {
        users: users.to_vec(),
        joint: UserModel {
            labels,
            transition: builder.build(),
            net_gen,
            stationary: DistVector(pi),
        },
    })
}
