//! Alternating least squares for matched illumination.
//!
//! The objective `‖diag(B c) Q M − diag(e) X‖²_F` is quadratic in `M` for
//! fixed `c` and quadratic in `c` for fixed `M`. Each iteration solves both
//! halves exactly, the `c` half as a bounded problem on `[0, 1]`.

pub mod bvls;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Serialize, Serializer};

use crate::colorimetry::CmfSet;
use crate::error::{Error, Result};
use crate::illuminator::{solve_metamer, Basis, ChannelWeights, IlluminatorModel, RenderMode};
use crate::linalg::lstsq;
use crate::spectral::{SensorSet, Spectrum, N};

pub use bvls::{bvls, bvls_eq};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 200;
/// Consecutive objective increases tolerated by the complex solver.
pub const OSCILLATION_STREAK: usize = 5;

#[derive(Clone, Debug)]
pub struct MatchProblem<'a> {
    pub target: &'a Spectrum,
    pub q: &'a SensorSet,
    pub x: &'a CmfSet,
    pub model: &'a IlluminatorModel,
    pub mode: RenderMode,
    /// Starting weights; `None` starts from the target's metamer.
    pub c_guess: Option<ChannelWeights>,
    pub tol: f64,
    pub max_iters: usize,
}

impl<'a> MatchProblem<'a> {
    pub fn new(
        target: &'a Spectrum,
        q: &'a SensorSet,
        x: &'a CmfSet,
        model: &'a IlluminatorModel,
        mode: RenderMode,
    ) -> Self {
        Self {
            target,
            q,
            x,
            model,
            mode,
            c_guess: None,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// The explicit guess, else the metamer weights, else all ones.
    pub fn start(&self) -> ChannelWeights {
        self.c_guess.clone().unwrap_or_else(|| {
            solve_metamer(self.model, self.target, self.x, self.mode)
                .map(|m| m.weights)
                .unwrap_or_else(|_| ChannelWeights::ones(self.model.channels()))
        })
    }
}

fn serialize_rows<S: Serializer>(m: &Matrix3<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: [[f64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]));
    rows.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchResult {
    pub mode: RenderMode,
    pub weights: ChannelWeights,
    /// Correction matrix, serialized row-major.
    #[serde(serialize_with = "serialize_rows")]
    pub m: Matrix3<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

impl MatchResult {
    pub fn render(&self, model: &IlluminatorModel, mode: RenderMode) -> Result<Spectrum> {
        model.render(&self.weights, mode)
    }
}

fn to_dmatrix(q: &SensorSet) -> DMatrix<f64> {
    DMatrix::from_column_slice(N, 3, q.matrix().as_slice())
}

fn target_matrix(e: &Spectrum, x: &CmfSet) -> DMatrix<f64> {
    DMatrix::from_fn(N, 3, |l, k| e[l] * x.matrix()[(l, k)])
}

fn light(b_eff: &Basis, c: &ChannelWeights) -> nalgebra::SVector<f64, N> {
    b_eff * DVector::from_column_slice(c.as_slice())
}

/// `diag(B c) Q M`.
fn corrected(b_eff: &Basis, c: &ChannelWeights, q: &SensorSet, m: &Matrix3<f64>) -> DMatrix<f64> {
    let em = light(b_eff, c);
    let qm = q.matrix() * m;
    DMatrix::from_fn(N, 3, |l, k| em[l] * qm[(l, k)])
}

/// `‖diag(B c) Q M − diag(e) X‖²_F`.
pub fn objective(
    b_eff: &Basis,
    c: &ChannelWeights,
    q: &SensorSet,
    m: &Matrix3<f64>,
    e: &Spectrum,
    x: &CmfSet,
) -> f64 {
    (corrected(b_eff, c, q, m) - target_matrix(e, x)).norm_squared()
}

/// Best `M` for fixed weights: `(diag(B c) Q)⁺ diag(e) X`.
pub fn fit_m(
    b_eff: &Basis,
    c: &ChannelWeights,
    q: &SensorSet,
    e: &Spectrum,
    x: &CmfSet,
) -> Result<Matrix3<f64>> {
    let em = light(b_eff, c);
    let mut a = to_dmatrix(q);
    for (l, mut row) in a.row_iter_mut().enumerate() {
        row *= em[l];
    }
    let sol = lstsq(&a, &target_matrix(e, x), "effective sensors diag(Bc)Q")?;
    Ok(Matrix3::from_fn(|r, k| sol[(r, k)]))
}

/// Best weights in `[0, 1]` for fixed `M`.
pub fn step_c(
    m: &Matrix3<f64>,
    b_eff: &Basis,
    q: &SensorSet,
    e: &Spectrum,
    x: &CmfSet,
) -> Result<ChannelWeights> {
    let k = b_eff.ncols();
    let qm = q.matrix() * m;
    let g = DMatrix::from_fn(3 * N, k, |r, i| b_eff[(r / 3, i)] * qm[(r / 3, r % 3)]);
    let d = DVector::from_fn(3 * N, |r, _| e[r / 3] * x.matrix()[(r / 3, r % 3)]);
    let c = bvls(&g, &d, &vec![0.0; k], &vec![1.0; k])?;
    ChannelWeights::new(c)
}

fn annotate(err: Error, it: usize, c: &ChannelWeights) -> Error {
    match err {
        Error::Rank(msg) => {
            Error::Rank(format!("iteration {it}, weights {:?}: {msg}", c.as_slice()))
        }
        other => other,
    }
}

/// Runs the alternation from `c0`. In complex mode the basis after each `c`
/// step is replaced by the channel shapes at the new weights.
fn alternate(p: &MatchProblem, c0: ChannelWeights, complex: bool) -> Result<MatchResult> {
    p.validate()?;
    let (e, q, x, model) = (p.target, p.q, p.x, p.model);
    let mode = if complex {
        RenderMode::Complex
    } else {
        RenderMode::Simple
    };
    let basis_for = |c: &ChannelWeights| -> Result<Basis> {
        if complex {
            model.basis_at(c)
        } else {
            Ok(model.max_basis())
        }
    };
    let scale = target_matrix(e, x).norm_squared();
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let mut c = c0;
    let mut basis = basis_for(&c)?;
    let mut prev = corrected(&basis, &c, q, &Matrix3::identity());
    let mut trace = Vec::new();
    let mut best: Option<(f64, ChannelWeights)> = None;
    let mut streak = 0;
    let mut converged = false;

    for it in 1..=p.max_iters {
        let m = fit_m(&basis, &c, q, e, x).map_err(|err| annotate(err, it, &c))?;
        c = step_c(&m, &basis, q, e, x)?;
        basis = basis_for(&c)?;
        let now = corrected(&basis, &c, q, &m);
        let obj = (&now - target_matrix(e, x)).norm_squared();
        if trace.last().is_some_and(|last| obj > *last) {
            streak += 1;
        } else {
            streak = 0;
        }
        trace.push(obj);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, c.clone()));
        }
        if complex && streak >= OSCILLATION_STREAK {
            let (_, bc) = best.expect("at least one iterate");
            let result = finish(p, mode, bc, it, false, trace)?;
            return Err(Error::Oscillation {
                streak,
                best: Box::new(result),
            });
        }
        if (&now - &prev).norm_squared() / scale < p.tol {
            converged = true;
            break;
        }
        prev = now;
    }
    let iterations = trace.len();
    let final_c = if complex {
        best.expect("at least one iterate").1
    } else {
        c
    };
    finish(p, mode, final_c, iterations, converged, trace)
}

/// Refits `M` at the final weights so that the result is a fixed point of
/// the `M` half-step.
fn finish(
    p: &MatchProblem,
    mode: RenderMode,
    c: ChannelWeights,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> Result<MatchResult> {
    let basis = match mode {
        RenderMode::Simple => p.model.max_basis(),
        RenderMode::Complex => p.model.basis_at(&c)?,
    };
    let m = fit_m(&basis, &c, p.q, p.target, p.x).map_err(|err| annotate(err, iterations, &c))?;
    let objective = objective(&basis, &c, p.q, &m, p.target, p.x);
    Ok(MatchResult {
        mode,
        weights: c,
        m,
        objective,
        iterations,
        converged,
        trace,
    })
}

/// Alternation with the full-drive basis, from `p.start()`.
pub fn match_simple(p: &MatchProblem) -> Result<MatchResult> {
    alternate(p, p.start(), false)
}

/// Alternation with basis substitution, from `p.start()`. Returns the best
/// iterate seen, judged by the objective under the complex render.
pub fn match_complex(p: &MatchProblem) -> Result<MatchResult> {
    alternate(p, p.start(), true)
}

/// Solves `p` in its mode from the default start and from all-ones and
/// keeps the lower objective. A run that oscillated still competes with its
/// best iterate.
pub fn solve_match(p: &MatchProblem) -> Result<MatchResult> {
    let complex = p.mode == RenderMode::Complex;
    let starts = [p.start(), ChannelWeights::ones(p.model.channels())];
    let mut best: Option<MatchResult> = None;
    let mut first_err = None;
    for c0 in starts {
        let run = match alternate(p, c0, complex) {
            Err(Error::Oscillation { best, .. }) => Ok(*best),
            other => other,
        };
        match run {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.objective < b.objective) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("both starts failed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::illuminator::synthetic::{gaussian, SyntheticConfig};
    use crate::spectral::Matrix31x3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn luther_camera() -> SensorSet {
        SensorSet::new(*datasets::cie1931().matrix()).unwrap()
    }

    #[test]
    fn fit_m_identity_for_luther_camera() {
        let x = datasets::cie1931();
        let q = luther_camera();
        let model = SyntheticConfig::default().build().unwrap();
        let c = ChannelWeights::ones(10);
        let e = model.render(&c, RenderMode::Simple).unwrap();
        let b = model.max_basis();
        let m = fit_m(&b, &c, &q, &e, &x).unwrap();
        assert!((m - Matrix3::identity()).amax() < 1e-10);
        assert!(objective(&b, &c, &q, &m, &e, &x) < 1e-20);
    }

    #[test]
    fn fit_m_absorbs_weight_scale() {
        let x = datasets::cie1931();
        let q = datasets::nikon_d5100();
        let model = SyntheticConfig::default().build().unwrap();
        let b = model.max_basis();
        let e = datasets::d65();
        let c =
            ChannelWeights::new(vec![0.4, 0.3, 0.2, 0.5, 0.6, 0.4, 0.3, 0.2, 0.5, 0.5]).unwrap();
        let c2 = ChannelWeights::new(c.as_slice().iter().map(|v| v * 0.5).collect()).unwrap();
        let m = fit_m(&b, &c, &q, &e, &x).unwrap();
        let m2 = fit_m(&b, &c2, &q, &e, &x).unwrap();
        assert!((m2 * 0.5 - m).amax() < 1e-9 * m.amax());
        let o = objective(&b, &c, &q, &m, &e, &x);
        assert!((objective(&b, &c2, &q, &m2, &e, &x) - o).abs() < 1e-9 * o);
    }

    #[test]
    fn fit_m_matches_stacked_least_squares() {
        // Oracle: vec(M) from the 93×9 Kronecker system, solved by normal
        // equations.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = SensorSet::new(Matrix31x3::from_fn(|_, _| rng.random_range(0.0..1.0))).unwrap();
        let x = datasets::cie1931();
        let b = Basis::from_fn(3, |_, _| rng.random_range(0.0..1.0));
        let c = ChannelWeights::new(vec![0.3, 0.9, 0.5]).unwrap();
        let e = Spectrum::from_fn(|nm| 1.0 + nm / 700.0);
        let m = fit_m(&b, &c, &q, &e, &x).unwrap();
        let em = &b * DVector::from_column_slice(c.as_slice());
        let mut a = DMatrix::zeros(93, 9);
        let mut rhs = DVector::zeros(93);
        for l in 0..N {
            for j in 0..3 {
                for r in 0..3 {
                    a[(l * 3 + j, r * 3 + j)] = em[l] * q.matrix()[(l, r)];
                }
                rhs[l * 3 + j] = e[l] * x.matrix()[(l, j)];
            }
        }
        let v = (a.transpose() * &a).try_inverse().unwrap() * (a.transpose() * rhs);
        for r in 0..3 {
            for j in 0..3 {
                assert!((m[(r, j)] - v[r * 3 + j]).abs() < 1e-8 * m.amax());
            }
        }
    }

    #[test]
    fn fit_m_rank_error_for_single_narrow_channel() {
        let x = datasets::cie1931();
        let q = datasets::nikon_d5100();
        // One line narrow enough to excite only a couple of samples.
        let model = IlluminatorModel::new(
            vec!["line".into()],
            vec![0.0, 1.0],
            vec![vec![
                Spectrum::zeros(),
                Spectrum::illuminant(std::array::from_fn(|l| if l == 12 { 1.0 } else { 0.0 })),
            ]],
        )
        .unwrap();
        let err = fit_m(
            &model.max_basis(),
            &ChannelWeights::ones(1),
            &q,
            &datasets::d65(),
            &x,
        );
        assert!(matches!(err, Err(Error::Rank(_))));
    }

    #[test]
    fn step_c_examples() {
        let x = datasets::cie1931();
        let q = luther_camera();
        let e = gaussian(550.0, 200.0, 1.0);
        let b = Basis::from_column_slice(e.values());
        let c = step_c(&Matrix3::identity(), &b, &q, &e, &x).unwrap();
        assert!((c.as_slice()[0] - 1.0).abs() < 1e-12);
        let c = step_c(&Matrix3::identity(), &b, &q, &Spectrum::zeros(), &x).unwrap();
        assert_eq!(c.as_slice(), &[0.0]);
    }

    #[test]
    fn step_c_dominates_random_feasible_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = datasets::cie1931();
        let q = datasets::nikon_d5100();
        let model = SyntheticConfig::default().build().unwrap();
        let b = model.max_basis();
        let e = datasets::d65().scaled(0.01);
        let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..2.0));
        let c = step_c(&m, &b, &q, &e, &x).unwrap();
        let o = objective(&b, &c, &q, &m, &e, &x);
        let direct = (0..N)
            .flat_map(|l| (0..3).map(move |j| (l, j)))
            .map(|(l, j)| {
                let em: f64 = (0..10).map(|i| b[(l, i)] * c.as_slice()[i]).sum();
                let qm: f64 = (0..3).map(|r| q.matrix()[(l, r)] * m[(r, j)]).sum();
                (em * qm - e[l] * x.matrix()[(l, j)]).powi(2)
            })
            .sum::<f64>();
        assert!((o - direct).abs() < 1e-12 * direct.max(1.0));
        for _ in 0..50 {
            let r =
                ChannelWeights::new((0..10).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            assert!(o <= objective(&b, &r, &q, &m, &e, &x) + 1e-12);
        }
    }

    fn reference_setup() -> (SensorSet, CmfSet, IlluminatorModel) {
        (
            datasets::nikon_d5100(),
            datasets::cie1931(),
            SyntheticConfig::default().build().unwrap(),
        )
    }

    #[test]
    fn simple_trace_is_monotone_and_beats_baseline() {
        let (q, x, model) = reference_setup();
        let met = solve_metamer(&model, &datasets::d65(), &x, RenderMode::Simple).unwrap();
        let e = met.spectrum.clone();
        let p = MatchProblem::new(&e, &q, &x, &model, RenderMode::Simple);
        let r = match_simple(&p).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        let b = model.max_basis();
        let m0 = fit_m(&b, &met.weights, &q, &e, &x).unwrap();
        assert!(r.objective <= objective(&b, &met.weights, &q, &m0, &e, &x));
        // Fixed point of the M half-step.
        let m = fit_m(&b, &r.weights, &q, &e, &x).unwrap();
        assert!((m - r.m).amax() <= 1e-9 * r.m.amax());
    }

    #[test]
    fn matched_light_is_bluer_than_the_metamer() {
        let (q, x, model) = reference_setup();
        let met = solve_metamer(&model, &datasets::d65(), &x, RenderMode::Complex).unwrap();
        let p = MatchProblem::new(&met.spectrum, &q, &x, &model, RenderMode::Simple);
        let r = solve_match(&p).unwrap();
        let matched = r.render(&model, RenderMode::Simple).unwrap();
        assert!(matched.power_fraction_below(500.0) > met.spectrum.power_fraction_below(500.0));
    }

    #[test]
    fn luther_camera_needs_no_matching() {
        let (_, x, model) = reference_setup();
        let q = luther_camera();
        let c0 =
            ChannelWeights::new(vec![0.3, 0.5, 0.2, 0.6, 0.4, 0.3, 0.7, 0.2, 0.4, 0.4]).unwrap();
        let e = model.render(&c0, RenderMode::Simple).unwrap();
        let p = MatchProblem::new(&e, &q, &x, &model, RenderMode::Simple);
        let r = solve_match(&p).unwrap();
        let scale = target_matrix(&e, &x).norm_squared();
        assert!(r.objective <= 1e-20 * scale, "{}", r.objective);
        let matched = r.render(&model, RenderMode::Simple).unwrap();
        let refl: Vec<Spectrum> = datasets::colorchecker()
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        let stats = crate::correction::evaluate(&q, &e, &matched, &refl, &x).unwrap();
        assert!(stats.max < 1e-6, "{stats:?}");
    }

    #[test]
    fn two_channel_problem_reaches_grid_optimum() {
        let x = datasets::cie1931();
        let q = datasets::nikon_d5100();
        let levels = vec![0.0, 0.5, 1.0];
        let chans: Vec<Vec<Spectrum>> = [(470.0, 90.0, 1.0), (600.0, 120.0, 0.8)]
            .iter()
            .map(|&(mu, fw, pk)| {
                levels
                    .iter()
                    .map(|&w| gaussian(mu, fw, pk).scaled(w))
                    .collect()
            })
            .collect();
        let model = IlluminatorModel::new(vec!["a".into(), "b".into()], levels, chans).unwrap();
        let e = datasets::d65().scaled(0.01);
        let mut p = MatchProblem::new(&e, &q, &x, &model, RenderMode::Simple);
        // The default rule stops once steps get small, which on this slow
        // valley is ~3e-5 short of the optimum; compare optimality instead.
        p.tol = 1e-14;
        p.max_iters = 2000;
        let r = solve_match(&p).unwrap();
        let b = model.max_basis();
        let mut grid_best = f64::INFINITY;
        for i in 1..=500 {
            for j in 0..=500 {
                let c = ChannelWeights::new(vec![i as f64 * 0.002, j as f64 * 0.002]).unwrap();
                if let Ok(m) = fit_m(&b, &c, &q, &e, &x) {
                    grid_best = grid_best.min(objective(&b, &c, &q, &m, &e, &x));
                }
            }
        }
        assert!(
            r.objective <= grid_best * (1.0 + 1e-9),
            "{} vs {grid_best}",
            r.objective
        );
    }

    #[test]
    fn shift_free_complex_equals_simple() {
        let (q, x, _) = reference_setup();
        let model = SyntheticConfig::default().shift_free().build().unwrap();
        let e = datasets::d65();
        let s = solve_match(&MatchProblem::new(&e, &q, &x, &model, RenderMode::Simple)).unwrap();
        let c = solve_match(&MatchProblem::new(&e, &q, &x, &model, RenderMode::Complex)).unwrap();
        assert!(s.weights.max_abs_diff(&c.weights) < 1e-6);
    }

    #[test]
    fn complex_beats_simple_under_the_true_render() {
        let (q, x, model) = reference_setup();
        let met = solve_metamer(&model, &datasets::d65(), &x, RenderMode::Complex).unwrap();
        let e = met.spectrum;
        let s = solve_match(&MatchProblem::new(&e, &q, &x, &model, RenderMode::Simple)).unwrap();
        let c = solve_match(&MatchProblem::new(&e, &q, &x, &model, RenderMode::Complex)).unwrap();
        let true_obj = |w: &ChannelWeights| {
            let b = model.basis_at(w).unwrap();
            let m = fit_m(&b, w, &q, &e, &x).unwrap();
            objective(&b, w, &q, &m, &e, &x)
        };
        assert!(c.objective <= true_obj(&s.weights));
        assert!((c.objective - true_obj(&c.weights)).abs() <= 1e-12 * c.objective);
    }

    #[test]
    fn doubling_the_target_scales_objective_by_four() {
        let (q, x, model) = reference_setup();
        let e = datasets::d65();
        let e2 = e.scaled(2.0);
        let r1 = solve_match(&MatchProblem::new(&e, &q, &x, &model, RenderMode::Simple)).unwrap();
        let r2 = solve_match(&MatchProblem::new(&e2, &q, &x, &model, RenderMode::Simple)).unwrap();
        assert!(r1.weights.max_abs_diff(&r2.weights) < 1e-6);
        assert!((r2.objective / r1.objective - 4.0).abs() < 1e-6);
    }

    #[test]
    fn bad_problem_parameters() {
        let (q, x, model) = reference_setup();
        let e = datasets::d65();
        let mut p = MatchProblem::new(&e, &q, &x, &model, RenderMode::Simple);
        p.tol = 0.0;
        assert!(matches!(match_simple(&p), Err(Error::Domain(_))));
        p.tol = 1e-8;
        p.max_iters = 0;
        assert!(matches!(match_simple(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn result_json_is_row_major() {
        let r = MatchResult {
            mode: RenderMode::Simple,
            weights: ChannelWeights::ones(1),
            m: Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0),
            objective: 0.5,
            iterations: 1,
            converged: true,
            trace: vec![0.5],
        };
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(
            v["m"],
            serde_json::json!([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
        );
        assert_eq!(v["mode"], "simple");
    }
}
