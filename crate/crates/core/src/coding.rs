//! Recursive feedback coding scheme and its verification.
//!
//! The encoder/decoder share the error state `x` and run
//!
//! ```text
//! x[k+1] = A x[k] + u[k]
//! y[k]   = C x[k]            (channel input is -y[k])
//! e[k]   = -y[k] + v[k]      (channel output)
//! ```
//!
//! with `u` produced by one of two controller realizations of the dynamic
//! gain `K(z)`, see [`ControllerForm`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::capacity::{identity_are_residual, CapacityResult, ChannelDesign};
use crate::error::{Error, Result};
use crate::kalman::{self, Modal};
use crate::linalg::{self, CMat, Mat};
use crate::noise::{mat_vec_acc, push_history, ArmaNoise};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerForm {
    /// The controller rebuilds the noise sample `v = e + y`, whitens it to
    /// `w` and applies `u = K (w - Chat x)`. The closed loop is
    /// `x[k+1] = (A - K Chat) x[k] + K w[k]`, whose stationary covariance is
    /// the Riccati solution.
    #[default]
    Innovations,
    /// Direct-form recursion on the channel outputs:
    /// `u[k] = K (e[k] - sum F_i e[k-i]) - sum G_j u[k-j]`.
    /// Matches the innovations form for white noise only; with colored
    /// noise the whitening filter acts on a driven state and the loop
    /// settles at a different power, or not at all.
    Direct,
}

impl std::fmt::Display for ControllerForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerForm::Innovations => "innovations",
            ControllerForm::Direct => "direct",
        })
    }
}

/// A design packaged with the noise model it was built for.
#[derive(Debug, Clone)]
pub struct CodingScheme {
    pub design: ChannelDesign,
    pub form: ControllerForm,
    /// Whitened output matrix recomputed from `(A, C)`.
    pub chat: Mat,
    /// Spectral radius of the closed loop restricted to the states the noise excites.
    pub stability_radius: f64,
    /// Spectral radius of the full closed-loop matrix, including unexcited modes.
    pub full_radius: f64,
    noise: ArmaNoise,
}

impl CodingScheme {
    pub fn state_dim(&self) -> usize {
        self.design.a.nrows()
    }

    pub fn ar(&self) -> &[Mat] {
        self.noise.ar()
    }

    pub fn ma(&self) -> &[Mat] {
        self.noise.ma()
    }

    pub fn noise(&self) -> &ArmaNoise {
        &self.noise
    }

    /// Statistics are taken after `max(1000, 50 max(p, q))` steps.
    pub fn burn_in(&self) -> usize {
        1000.max(50 * self.noise.max_order())
    }

    fn history_lens(&self) -> (usize, usize) {
        (self.noise.ar_order(), self.noise.ma_order())
    }

    fn new_state(&self) -> LoopState {
        let n = self.state_dim();
        let (p, q) = self.history_lens();
        LoopState {
            x: vec![0.0; n],
            first: vec![vec![0.0; n]; p],
            second: vec![vec![0.0; n]; q],
        }
    }

    /// One step of the loop for noise sample `v`. Writes `y` and `e`.
    fn step(&self, st: &mut LoopState, v: &[f64], y: &mut [f64], e: &mut [f64], scratch: &mut Scratch) {
        let d = &self.design;
        y.fill(0.0);
        mat_vec_acc(&d.c, &st.x, y, 1.0);
        for i in 0..y.len() {
            e[i] = v[i] - y[i];
        }
        let Scratch { u, w, r, t } = scratch;
        match self.form {
            ControllerForm::Direct => {
                // r = e - sum F_i e[k-i]; u = K r - sum G_j u[k-j]
                r.copy_from_slice(e);
                for (f, past) in self.noise.ar().iter().zip(&st.first) {
                    mat_vec_acc(f, past, r, -1.0);
                }
                u.fill(0.0);
                mat_vec_acc(&d.gain, r, u, 1.0);
                for (g, past) in self.noise.ma().iter().zip(&st.second) {
                    mat_vec_acc(g, past, u, -1.0);
                }
                push_history(&mut st.first, e);
                push_history(&mut st.second, u);
            }
            ControllerForm::Innovations => {
                // r = e + y recovers v; w = r - sum F_i r[k-i] - sum G_j w[k-j]
                for i in 0..r.len() {
                    r[i] = e[i] + y[i];
                }
                w.copy_from_slice(r);
                for (f, past) in self.noise.ar().iter().zip(&st.first) {
                    mat_vec_acc(f, past, w, -1.0);
                }
                for (g, past) in self.noise.ma().iter().zip(&st.second) {
                    mat_vec_acc(g, past, w, -1.0);
                }
                push_history(&mut st.first, r);
                push_history(&mut st.second, w);
                mat_vec_acc(&self.chat, &st.x, w, -1.0);
                u.fill(0.0);
                mat_vec_acc(&d.gain, w, u, 1.0);
            }
        }
        t.copy_from_slice(u);
        mat_vec_acc(&d.a, &st.x, t, 1.0);
        std::mem::swap(&mut st.x, t);
    }

    /// Closed-loop state matrix and noise input matrix of the full
    /// recursion, assembled by stepping unit vectors through it.
    pub fn closed_loop(&self) -> (Mat, Mat) {
        let n = self.state_dim();
        let (p, q) = self.history_lens();
        let dim = n * (1 + p + q);
        let mut m = Mat::zeros(dim, dim);
        let mut b = Mat::zeros(dim, n);
        let zero = vec![0.0; n];
        let (mut y, mut e) = (vec![0.0; n], vec![0.0; n]);
        let mut scratch = Scratch::new(n);
        for k in 0..dim {
            let mut st = self.new_state();
            st.set_flat(k, 1.0);
            self.step(&mut st, &zero, &mut y, &mut e, &mut scratch);
            m.set_column(k, &st.flat());
        }
        for k in 0..n {
            let mut st = self.new_state();
            let mut v = zero.clone();
            v[k] = 1.0;
            self.step(&mut st, &v, &mut y, &mut e, &mut scratch);
            b.set_column(k, &st.flat());
        }
        (m, b)
    }
}

#[derive(Debug, Clone)]
struct LoopState {
    x: Vec<f64>,
    /// Newest first: `e` history (direct) or recovered `v` history (innovations).
    first: Vec<Vec<f64>>,
    /// Newest first: `u` history (direct) or whitened `w` history (innovations).
    second: Vec<Vec<f64>>,
}

impl LoopState {
    fn flat(&self) -> linalg::Vector {
        let it = self
            .x
            .iter()
            .chain(self.first.iter().flatten())
            .chain(self.second.iter().flatten())
            .copied();
        linalg::Vector::from_iterator(self.x.len() * (1 + self.first.len() + self.second.len()), it)
    }

    fn set_flat(&mut self, index: usize, value: f64) {
        let n = self.x.len();
        let slots = std::iter::once(&mut self.x)
            .chain(self.first.iter_mut())
            .chain(self.second.iter_mut());
        for (i, slot) in slots.enumerate() {
            if index / n == i {
                slot[index % n] = value;
                return;
            }
        }
    }

    fn norm(&self) -> f64 {
        self.x.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

struct Scratch {
    u: Vec<f64>,
    w: Vec<f64>,
    r: Vec<f64>,
    t: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            w: vec![0.0; n],
            r: vec![0.0; n],
            t: vec![0.0; n],
        }
    }
}

/// Package a capacity result as a coding scheme (innovations form).
pub fn synthesize(result: &CapacityResult, noise: &ArmaNoise) -> Result<CodingScheme> {
    synthesize_design(&result.design, noise, ControllerForm::Innovations)
}

/// Package a design with an explicit controller form. Fails with
/// [`Error::Unstable`] if the excited part of the closed loop is not
/// strictly stable.
pub fn synthesize_design(design: &ChannelDesign, noise: &ArmaNoise, form: ControllerForm) -> Result<CodingScheme> {
    let scheme = assemble(design, noise, form)?;
    if !(scheme.stability_radius < 1.0) {
        return Err(Error::Unstable {
            radius: scheme.stability_radius,
        });
    }
    Ok(scheme)
}

fn assemble(design: &ChannelDesign, noise: &ArmaNoise, form: ControllerForm) -> Result<CodingScheme> {
    noise.ensure_valid()?;
    let n = noise.dim();
    for (name, m) in [("A", &design.a), ("C", &design.c), ("K", &design.gain), ("P", &design.p)] {
        if m.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "design matrix {name} is {}x{}, noise has {n} channels",
                m.nrows(),
                m.ncols()
            )));
        }
        linalg::ensure_finite(m)?;
    }
    let chat = kalman::compute_chat(&modal_of(&design.a)?, &design.c, noise)?;
    let mut scheme = CodingScheme {
        design: design.clone(),
        form,
        chat,
        stability_radius: f64::NAN,
        full_radius: f64::NAN,
        noise: noise.clone(),
    };
    let (m, b) = scheme.closed_loop();
    scheme.full_radius = linalg::spectral_radius(&m);
    scheme.stability_radius = linalg::reachable_spectral_radius(&m, &b, tol::RANK_TOL);
    Ok(scheme)
}

/// Modal form of a symmetric plant matrix.
fn modal_of(a: &Mat) -> Result<Modal> {
    let eig = linalg::sym_eig(a)?;
    // Unpowered channels have |λ| = 1 exactly; undo the roundoff of the decomposition.
    let values = eig
        .values
        .iter()
        .map(|&l| if (l.abs() - 1.0).abs() < 1e-12 { l.signum() } else { l })
        .collect();
    Modal::new(eig.vectors, values)
}

/// Outcome of a closed-loop Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Time average of `‖y[k]‖²` after burn-in.
    pub empirical_power: f64,
    /// `tr(C P C')`.
    pub predicted_power: f64,
    #[serde(with = "linalg::rows")]
    pub empirical_error_cov: Mat,
    #[serde(with = "linalg::rows")]
    pub predicted_error_cov: Mat,
    pub power_rel_err: f64,
    /// Frobenius-norm relative error of the state covariance.
    pub cov_rel_err: f64,
    /// Average power over the two halves of the post-burn-in run.
    pub window_powers: [f64; 2],
    pub stability_radius: f64,
}

impl SimulationReport {
    /// Relative disagreement between the two window powers.
    pub fn window_rel_diff(&self) -> f64 {
        let [a, b] = self.window_powers;
        (a - b).abs() / (0.5 * (a + b)).max(f64::MIN_POSITIVE)
    }
}

/// Run the loop for `steps` steps with the noise path drawn from `seed`.
pub fn simulate(scheme: &CodingScheme, noise: &ArmaNoise, steps: usize, seed: u64) -> Result<SimulationReport> {
    simulate_observed(scheme, noise, steps, seed, |_, _, _| {})
}

/// As [`simulate`], calling `observe(k, y, e)` after every step.
pub fn simulate_observed(
    scheme: &CodingScheme,
    noise: &ArmaNoise,
    steps: usize,
    seed: u64,
    mut observe: impl FnMut(usize, &[f64], &[f64]),
) -> Result<SimulationReport> {
    if noise.dim() != scheme.state_dim() {
        return Err(Error::Dimension("noise and scheme dimensions differ".into()));
    }
    let burn_in = scheme.burn_in();
    if steps <= burn_in {
        return Err(Error::InvalidArgument(format!(
            "steps ({steps}) must exceed the burn-in ({burn_in})"
        )));
    }
    let n = scheme.state_dim();
    let path = noise.sample_path(steps, seed)?;
    let mut st = scheme.new_state();
    let mut scratch = Scratch::new(n);
    let (mut y, mut e, mut v) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut cov = Mat::zeros(n, n);
    let mut windows = [0.0; 2];
    let counted = steps - burn_in;
    let half = burn_in + counted / 2;
    for k in 0..steps {
        for (c, vc) in v.iter_mut().enumerate() {
            *vc = path.noise[(k, c)];
        }
        if k >= burn_in {
            for r in 0..n {
                for c in 0..n {
                    cov[(r, c)] += st.x[r] * st.x[c];
                }
            }
        }
        scheme.step(&mut st, &v, &mut y, &mut e, &mut scratch);
        if k >= burn_in {
            windows[usize::from(k >= half)] += y.iter().map(|t| t * t).sum::<f64>();
        }
        observe(k, &y, &e);
        let norm = st.norm();
        if !(norm <= tol::OVERFLOW_GUARD) {
            return Err(Error::Overflow { step: k, norm });
        }
    }
    let empirical_power = (windows[0] + windows[1]) / counted as f64;
    let window_powers = [
        windows[0] / (half - burn_in) as f64,
        windows[1] / (steps - half) as f64,
    ];
    cov /= counted as f64;
    let d = &scheme.design;
    let predicted_power = (&d.c * &d.p * d.c.transpose()).trace();
    Ok(SimulationReport {
        steps,
        burn_in,
        seed,
        empirical_power,
        predicted_power,
        power_rel_err: (empirical_power - predicted_power).abs() / predicted_power,
        cov_rel_err: (&cov - &d.p).norm() / d.p.norm(),
        empirical_error_cov: cov,
        predicted_error_cov: d.p.clone(),
        window_powers,
        stability_radius: scheme.stability_radius,
    })
}

/// Loop transfer `L(z)` of the feedback loop at a point `z`.
///
/// For the direct form this is the map from channel output `e` to `y`. The
/// innovations controller closes its loop in the whitened domain, so there
/// `L(z) = Chat (zI - A)^-1 K`, the map from the whitened innovation to the
/// predicted channel input. The realized `e -> y` map of that controller is
/// available from [`realized_loop_gain`].
pub fn loop_gain(scheme: &CodingScheme, z: Complex64) -> Result<CMat> {
    let d = &scheme.design;
    let n = scheme.state_dim();
    let cx = |m: &Mat| m.map(|x| Complex64::new(x, 0.0));
    let (a, c, k) = (cx(&d.a), cx(&d.c), cx(&d.gain));
    let zi = CMat::identity(n, n) * z;
    let singular = || Error::Singular("loop transfer evaluated at a pole".into());
    match scheme.form {
        ControllerForm::Direct => {
            // y = C (zI - A)^-1 (I + G(z))^-1 K (I - F(z)) e
            let ctrl = scheme
                .noise
                .ma_at(z)
                .lu()
                .solve(&(k * scheme.noise.ar_at(z)))
                .ok_or_else(singular)?;
            let x = (zi - a).lu().solve(&ctrl).ok_or_else(singular)?;
            Ok(c * x)
        }
        ControllerForm::Innovations => {
            let x = (zi - a).lu().solve(&k).ok_or_else(singular)?;
            Ok(cx(&scheme.chat) * x)
        }
    }
}

/// Transfer from channel output `e` to channel input `y` as implemented by
/// the controller, at a point `z`.
pub fn realized_loop_gain(scheme: &CodingScheme, z: Complex64) -> Result<CMat> {
    let d = &scheme.design;
    let n = scheme.state_dim();
    let cx = |m: &Mat| m.map(|x| Complex64::new(x, 0.0));
    let (a, c, k) = (cx(&d.a), cx(&d.c), cx(&d.gain));
    let zi = CMat::identity(n, n) * z;
    let singular = || Error::Singular("loop transfer evaluated at a pole".into());
    match scheme.form {
        ControllerForm::Direct => loop_gain(scheme, z),
        ControllerForm::Innovations => {
            // z x = (A + K (W(z) C - Chat)) x + K W(z) e
            let w = scheme.noise.whitening_at(z)?;
            let drift = &k * (&w * &c - cx(&scheme.chat));
            let x = (zi - a - drift).lu().solve(&(k * w)).ok_or_else(singular)?;
            Ok(c * x)
        }
    }
}

/// Mean of `log2 |det (I + L(e^{jω}))^-1|` over `nodes` midpoint nodes.
fn bode_integral(scheme: &CodingScheme, nodes: usize) -> Result<f64> {
    let n = scheme.state_dim();
    let mut total = 0.0;
    for k in 0..nodes {
        let omega = -std::f64::consts::PI + (k as f64 + 0.5) * std::f64::consts::TAU / nodes as f64;
        let z = Complex64::from_polar(1.0, omega);
        let l = loop_gain(scheme, z)?;
        total -= (CMat::identity(n, n) + l).determinant().norm().log2();
    }
    Ok(total / nodes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRate {
    pub bits: f64,
    /// Node count of the accepted estimate.
    pub nodes: usize,
    /// Difference from the estimate at half as many nodes.
    pub difference: f64,
}

const MAX_QUAD_NODES: usize = 1 << 20;

/// Rate of the loop from the Bode sensitivity integral
/// `(1/2π) ∫ log2 |det (I + L(e^{jω}))^-1| dω`, doubling the node count until
/// two successive estimates agree to [`tol::QUAD_TOL`].
pub fn spectral_rate(scheme: &CodingScheme, nodes: usize) -> Result<SpectralRate> {
    if nodes == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    let mut nodes = nodes;
    let mut coarse = bode_integral(scheme, nodes)?;
    loop {
        let fine = bode_integral(scheme, 2 * nodes)?;
        let difference = (fine - coarse).abs();
        if difference <= tol::QUAD_TOL {
            return Ok(SpectralRate {
                bits: fine,
                nodes: 2 * nodes,
                difference,
            });
        }
        if 2 * nodes >= MAX_QUAD_NODES {
            return Err(Error::Quadrature { nodes, difference });
        }
        nodes *= 2;
        coarse = fine;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: u8,
    pub name: String,
    pub status: CheckStatus,
    /// Measured quantity; absent when the check could not be evaluated.
    pub value: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub checks: Vec<Check>,
    pub simulation: Option<SimulationReport>,
    pub spectral: Option<SpectralRate>,
}

impl Verification {
    pub fn passed(&self) -> usize {
        self.count(CheckStatus::Pass)
    }

    pub fn failed(&self) -> usize {
        self.count(CheckStatus::Fail)
    }

    pub fn inconclusive(&self) -> usize {
        self.count(CheckStatus::Inconclusive)
    }

    pub fn all_passed(&self) -> bool {
        self.failed() == 0
    }

    fn count(&self, s: CheckStatus) -> usize {
        self.checks.iter().filter(|c| c.status == s).count()
    }

    pub fn check(&self, id: u8) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub steps: usize,
    pub seed: u64,
    pub nodes: usize,
    pub form: ControllerForm,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            steps: tol::MC_REFERENCE_STEPS,
            seed: 0,
            nodes: tol::QUAD_NODES,
            form: ControllerForm::Innovations,
        }
    }
}

pub fn verify_result(result: &CapacityResult, noise: &ArmaNoise, opts: VerifyOptions) -> Verification {
    verify_design(&result.design, result.budget, noise, opts)
}

pub fn verify_design(design: &ChannelDesign, budget: f64, noise: &ArmaNoise, opts: VerifyOptions) -> Verification {
    verify_design_observed(design, budget, noise, opts, |_, _, _| {})
}

/// Run the six consistency checks on a design. Failures are recorded, not returned.
///
/// 1. Riccati residual, both of the identity-output equation for `P` and of
///    the stationary-covariance equation `P = (A - K Chat) P (A - K Chat)' + K V K'`
///    for the stored gain.
/// 2. `Chat = I`.
/// 3. Closed-loop spectral radius below one.
/// 4. Bode integral equals the allocation's rate.
/// 5. Simulated power matches the budget.
/// 6. Simulated error covariance matches `P`.
///
/// `observe` sees every step of the simulation, as in [`simulate_observed`].
pub fn verify_design_observed(
    design: &ChannelDesign,
    budget: f64,
    noise: &ArmaNoise,
    opts: VerifyOptions,
    observe: impl FnMut(usize, &[f64], &[f64]),
) -> Verification {
    let mut checks = Vec::with_capacity(6);
    let mut push = |id, name: &str, status, value: f64, tolerance, detail: String| {
        checks.push(Check {
            id,
            name: name.to_string(),
            status,
            value: value.is_finite().then_some(value),
            tolerance,
            detail,
        })
    };
    let pass_if = |ok: bool| if ok { CheckStatus::Pass } else { CheckStatus::Fail };

    let v = noise.innovation_cov();
    let residual = identity_are_residual(&design.a, &design.p, v).and_then(|r1| {
        let r2 = gain_residual(design, v)?;
        Ok(r1.max(r2))
    });
    match residual {
        Ok(r) => push(1, "riccati residual", pass_if(r <= tol::ARE_CHECK_TOL), r, tol::ARE_CHECK_TOL, String::new()),
        Err(e) => push(1, "riccati residual", CheckStatus::Fail, f64::NAN, tol::ARE_CHECK_TOL, e.to_string()),
    }

    let scheme = assemble(design, noise, opts.form);
    match &scheme {
        Ok(s) => {
            let n = s.state_dim();
            let dev = linalg::inf_norm(&(&s.chat - Mat::identity(n, n)));
            push(2, "whitened output is identity", pass_if(dev <= tol::CHAT_TOL), dev, tol::CHAT_TOL, String::new());
            push(
                3,
                "closed-loop stability",
                pass_if(s.stability_radius < 1.0),
                s.stability_radius,
                1.0,
                format!("full radius {:.6}", s.full_radius),
            );
        }
        Err(e) => {
            push(2, "whitened output is identity", CheckStatus::Fail, f64::NAN, tol::CHAT_TOL, e.to_string());
            push(3, "closed-loop stability", CheckStatus::Fail, f64::NAN, 1.0, e.to_string());
        }
    }
    let stable = scheme.as_ref().ok().filter(|s| s.stability_radius < 1.0);

    let rate = design.allocation.rate_bits;
    let mut spectral = None;
    match stable.map(|s| spectral_rate(s, opts.nodes)) {
        Some(Ok(sr)) => {
            spectral = Some(sr);
            let dev = (sr.bits - rate).abs();
            push(
                4,
                "spectral rate",
                pass_if(dev <= tol::QUAD_TOL),
                dev,
                tol::QUAD_TOL,
                format!("{:.9} vs {:.9} bits", sr.bits, rate),
            );
        }
        Some(Err(e)) => push(4, "spectral rate", CheckStatus::Fail, f64::NAN, tol::QUAD_TOL, e.to_string()),
        None => push(4, "spectral rate", CheckStatus::Fail, f64::NAN, tol::QUAD_TOL, "closed loop unstable".into()),
    }

    let mc = tol::mc_tol(opts.steps);
    let conclusive = opts.steps >= tol::MC_MIN_CONCLUSIVE_STEPS;
    let mut simulation = None;
    match stable.map(|s| simulate_observed(s, noise, opts.steps, opts.seed, observe)) {
        Some(Ok(rep)) => {
            let power_dev = (rep.empirical_power - budget).abs() / budget;
            let status = |ok: bool| match (ok, conclusive) {
                (true, _) => CheckStatus::Pass,
                (false, true) => CheckStatus::Fail,
                (false, false) => CheckStatus::Inconclusive,
            };
            let note = if conclusive {
                String::new()
            } else {
                format!("only {} steps", opts.steps)
            };
            push(5, "simulated power", status(power_dev <= mc), power_dev, mc, note.clone());
            push(6, "simulated error covariance", status(rep.cov_rel_err <= mc), rep.cov_rel_err, mc, note);
            simulation = Some(rep);
        }
        Some(Err(e)) => {
            let status = if matches!(e, Error::InvalidArgument(_)) {
                CheckStatus::Inconclusive
            } else {
                CheckStatus::Fail
            };
            push(5, "simulated power", status, f64::NAN, mc, e.to_string());
            push(6, "simulated error covariance", status, f64::NAN, mc, e.to_string());
        }
        None => {
            push(5, "simulated power", CheckStatus::Fail, f64::NAN, mc, "closed loop unstable".into());
            push(6, "simulated error covariance", CheckStatus::Fail, f64::NAN, mc, "closed loop unstable".into());
        }
    }
    Verification {
        checks,
        simulation,
        spectral,
    }
}

/// Relative residual of `P = (A - K Chat) P (A - K Chat)' + K V K'` with `Chat = I`.
fn gain_residual(design: &ChannelDesign, v: &Mat) -> Result<f64> {
    let closed = &design.a - &design.gain * &design.chat;
    let r = &design.p - &closed * &design.p * closed.transpose() - &design.gain * v * design.gain.transpose();
    Ok(linalg::inf_norm(&r) / (1.0 + linalg::inf_norm(&design.p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{build_design, Sign};
    use approx::assert_abs_diff_eq;

    fn scalar_white() -> (ArmaNoise, ChannelDesign) {
        let noise = ArmaNoise::scalar(&[], &[], 1.0).unwrap();
        let d = build_design(&noise, &[3.0], &[Sign::Plus]).unwrap();
        (noise, d)
    }

    #[test]
    fn scalar_white_closed_loop() {
        let (noise, d) = scalar_white();
        assert_abs_diff_eq!(d.gain[(0, 0)], 1.5, epsilon = 1e-14);
        let s = synthesize_design(&d, &noise, ControllerForm::Innovations).unwrap();
        assert_abs_diff_eq!(s.stability_radius, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn white_forms_coincide() {
        let (noise, d) = scalar_white();
        let a = synthesize_design(&d, &noise, ControllerForm::Innovations).unwrap();
        let b = synthesize_design(&d, &noise, ControllerForm::Direct).unwrap();
        let ra = simulate(&a, &noise, 5000, 3).unwrap();
        let rb = simulate(&b, &noise, 5000, 3).unwrap();
        assert_abs_diff_eq!(ra.empirical_power, rb.empirical_power, epsilon = 1e-9);
    }

    #[test]
    fn ar1_minus_margin() {
        let noise = ArmaNoise::scalar(&[0.5], &[], 1.0).unwrap();
        let d = build_design(&noise, &[3.0], &[Sign::Minus]).unwrap();
        let s = synthesize_design(&d, &noise, ControllerForm::Innovations).unwrap();
        assert!(s.stability_radius < 1.0);
        // x loop pole at -1/2, whitening memory at 0
        assert_abs_diff_eq!(s.stability_radius, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn direct_form_misses_power_on_colored_noise() {
        let noise = ArmaNoise::scalar(&[0.5], &[], 1.0).unwrap();
        let d = build_design(&noise, &[3.0], &[Sign::Minus]).unwrap();
        let s = synthesize_design(&d, &noise, ControllerForm::Direct).unwrap();
        let rep = simulate(&s, &noise, 200_000, 1).unwrap();
        assert!(rep.power_rel_err > 0.2, "direct form power {}", rep.empirical_power);
    }

    #[test]
    fn spectral_rate_scalar_white() {
        let (noise, d) = scalar_white();
        let s = synthesize_design(&d, &noise, ControllerForm::Innovations).unwrap();
        let r = spectral_rate(&s, 1 << 10).unwrap();
        assert_abs_diff_eq!(r.bits, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn spectral_rate_zero_power_channel() {
        let noise = ArmaNoise::white(Mat::from_diagonal(&linalg::Vector::from_vec(vec![1.0, 1.0]))).unwrap();
        let d = build_design(&noise, &[3.0, 0.0], &[Sign::Plus; 2]).unwrap();
        let s = synthesize_design(&d, &noise, ControllerForm::Innovations).unwrap();
        assert_abs_diff_eq!(s.full_radius, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.stability_radius, 0.5, epsilon = 1e-12);
        let r = spectral_rate(&s, 1 << 10).unwrap();
        assert_abs_diff_eq!(r.bits, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn simulation_is_deterministic() {
        let (noise, d) = scalar_white();
        let s = synthesize_design(&d, &noise, ControllerForm::Innovations).unwrap();
        let a = simulate(&s, &noise, 3000, 11).unwrap();
        let b = simulate(&s, &noise, 3000, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_steps_rejected() {
        let (noise, d) = scalar_white();
        let s = synthesize_design(&d, &noise, ControllerForm::Innovations).unwrap();
        assert!(matches!(simulate(&s, &noise, 1000, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unstable_gain_rejected() {
        let (noise, mut d) = scalar_white();
        d.gain[(0, 0)] = 3.5;
        assert!(matches!(
            synthesize_design(&d, &noise, ControllerForm::Innovations),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn short_run_is_inconclusive() {
        let (noise, d) = scalar_white();
        let rec = verify_design(
            &d,
            3.0,
            &noise,
            VerifyOptions {
                steps: 1000,
                nodes: 1 << 10,
                ..VerifyOptions::default()
            },
        );
        for id in 1..=4 {
            assert_eq!(rec.check(id).unwrap().status, CheckStatus::Pass);
        }
        for id in 5..=6 {
            assert_eq!(rec.check(id).unwrap().status, CheckStatus::Inconclusive);
        }
    }
}
