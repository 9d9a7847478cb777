//! Nonlinear equilibrium, SVD prestress design and eigen-analysis.

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, nullity, AssembledSystem};
use crate::error::{Error, Result};
use crate::model::{Configuration, Model, TensionMode};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

/// One Newton iterate, reported for logging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub step_norm: f64,
    pub step_scale: f64,
}

#[derive(Debug, Clone)]
pub struct FormFindResult {
    pub config: Configuration,
    pub rest_lengths: DVector<f64>,
    pub tensions: DVector<f64>,
    /// ‖Eₐᵀ(A₂c t_c − w)‖∞ at the returned state.
    pub residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

/// Default force tolerance, 1e-8 · max(‖g‖∞, ‖f_ex‖∞, 1e-6·EA_max).
pub fn force_tolerance(model: &Model, gravity_force: &DVector<f64>) -> f64 {
    if let Some(t) = model.options.tol_force {
        return t;
    }
    let ea_max = model.spec.axial_stiffness().max();
    1e-8 * gravity_force
        .amax()
        .max(model.external_force.amax())
        .max(1e-6 * ea_max)
}

fn evaluate(
    model: &Model,
    config: &Configuration,
    rest: &DVector<f64>,
) -> Result<(AssembledSystem, DVector<f64>)> {
    let sys = assemble(model, config, rest)?;
    let r = sys.unbalanced_force(&model.external_force);
    Ok((sys, r))
}

/// Newton–Raphson equilibrium search over the free coordinates with a
/// halving line search. `start` supplies the fixed-node coordinates too.
///
/// Taut models iterate with bilateral members, so intermediate states may
/// hold compression; only the converged state must be in tension.
pub fn form_find(
    model: &Model,
    start: &Configuration,
    rest_lengths: &DVector<f64>,
) -> Result<FormFindResult> {
    if model.options.tension_mode != TensionMode::Taut {
        return newton(model, start, rest_lengths);
    }
    let mut bilateral = model.clone();
    bilateral.options.tension_mode = TensionMode::Bilateral;
    let res = newton(&bilateral, start, rest_lengths)?;
    if let Some(c) = (0..res.tensions.len()).find(|&c| res.tensions[c] < 0.0) {
        return Err(Error::Compression {
            cluster: model.topology.clusters()[c].name.clone(),
            tension: res.tensions[c],
        });
    }
    Ok(res)
}

fn newton(
    model: &Model,
    start: &Configuration,
    rest_lengths: &DVector<f64>,
) -> Result<FormFindResult> {
    let topo = &model.topology;
    let opts = &model.options;
    let (mut sys, mut residual) = evaluate(model, start, rest_lengths)?;
    let tol = force_tolerance(model, &sys.gravity_force);
    let mut config = start.clone();
    let mut history = Vec::new();
    let mut norm = residual.amax();
    let mut iterations = 0;
    loop {
        if norm <= tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: norm,
                history,
            });
        }
        let k_taa = sys.k_t_aa();
        let newton = k_taa
            .clone()
            .lu()
            .solve(&residual)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .map(|s| -s);
        let free = config.free_coords(topo);
        let norm2 = residual.norm();
        let mut accepted = None;
        let mut last_err = None;
        // a nearly singular tangent (pulley sliding along a straight cable)
        // spoils the Newton direction; the pseudo-inverse step drops it
        let directions = newton
            .into_iter()
            .chain(std::iter::once_with(|| -pseudo_solve(&k_taa, &residual)));
        'search: for step in directions {
            let mut scale = 1.0;
            for _ in 0..=opts.max_halvings {
                let trial = config.with_free_coords(topo, &(&free + &step * scale));
                match evaluate(model, &trial, rest_lengths) {
                    Ok((s, r)) if r.norm() < norm2 => {
                        accepted = Some((trial, s, r, step.norm() * scale, scale));
                        break 'search;
                    }
                    Ok(_) => {}
                    Err(e) => last_err = Some(e),
                }
                scale *= 0.5;
            }
        }
        if accepted.is_none() {
            // far from equilibrium the residual norm is a poor merit
            // function; fall back to a shifted Newton step on the potential
            // energy, whose gradient is the residual
            accepted = energy_descent_step(model, &sys, &config, &residual, rest_lengths, &mut last_err);
        }
        let Some((trial, s, r, step_norm, scale)) = accepted else {
            if nullity(&k_taa) == k_taa.nrows() {
                return Err(Error::SingularStiffness {
                    nullity: k_taa.nrows(),
                });
            }
            return Err(match last_err {
                Some(e @ Error::Compression { .. }) => e,
                _ => Error::NonConvergence {
                    iterations,
                    residual: norm,
                    history,
                },
            });
        };
        iterations += 1;
        config = trial;
        sys = s;
        residual = r;
        norm = residual.amax();
        let record = IterationRecord {
            iteration: iterations,
            residual: norm,
            step_norm,
            step_scale: scale,
        };
        debug!(
            "form-find iter {:3}  residual {:.3e}  step {:.3e}  scale {}",
            record.iteration, record.residual, record.step_norm, record.step_scale
        );
        history.push(record);
    }
    Ok(FormFindResult {
        config,
        rest_lengths: rest_lengths.clone(),
        tensions: sys.tensions.clone(),
        residual: norm,
        tolerance: tol,
        iterations,
        converged: true,
        history,
    })
}

type Accepted = (Configuration, AssembledSystem, DVector<f64>, f64, f64);

fn potential(model: &Model, config: &Configuration, sys: &AssembledSystem) -> f64 {
    let load = &model.external_force + &sys.gravity_force;
    sys.elastic_energy() - load.dot(config.coords())
}

fn energy_descent_step(
    model: &Model,
    sys: &AssembledSystem,
    config: &Configuration,
    residual: &DVector<f64>,
    rest_lengths: &DVector<f64>,
    last_err: &mut Option<Error>,
) -> Option<Accepted> {
    let topo = &model.topology;
    let k = sys.k_t_aa();
    let eig = SymmetricEigen::new(k.clone());
    let max = eig.eigenvalues.amax();
    let shift = (-eig.eigenvalues.min()).max(0.0) + 1e-3 * max;
    // (K + μI)⁻¹ r through the eigenbasis
    let mut step = DVector::zeros(residual.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        step -= v * (v.dot(residual) / (l + shift));
    }
    let slope = residual.dot(&step);
    let e0 = potential(model, config, sys);
    let free = config.free_coords(topo);
    let mut scale = 1.0;
    for _ in 0..=2 * model.options.max_halvings {
        let trial = config.with_free_coords(topo, &(&free + &step * scale));
        match evaluate(model, &trial, rest_lengths) {
            Ok((s, r)) if potential(model, &trial, &s) <= e0 + 1e-4 * scale * slope => {
                return Some((trial, s, r, step.norm() * scale, scale));
            }
            Ok(_) => {}
            Err(e) => *last_err = Some(e),
        }
        scale *= 0.5;
    }
    None
}

/// Minimum-norm solution of K x = r for symmetric K, ignoring eigenvalues
/// below the rank cutoff.
fn pseudo_solve(k: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(k.clone());
    let max = eig.eigenvalues.amax();
    let mut x = DVector::zeros(r.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > RANK_CUTOFF * max {
            let v = eig.eigenvectors.column(i);
            x += v * (v.dot(r) / l);
        }
    }
    x
}

/// Four-subspace decomposition of a matrix with the rank cutoff applied.
#[derive(Debug, Clone)]
pub struct Subspaces {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Null space (n_cols × (n_cols − r)).
    pub null_space: DMatrix<f64>,
    /// Left null space (n_rows × (n_rows − r)).
    pub left_null_space: DMatrix<f64>,
    /// Moore–Penrose pseudo-inverse with the same cutoff.
    pub pseudo_inverse: DMatrix<f64>,
}

/// Right singular vectors of `m` completed to a full square basis, sorted by
/// descending singular value.
fn full_right_basis(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = DMatrix::from_fn(cols, cols, |r, c| vt[(order[c], r)]);
    (sv, v)
}

pub fn subspaces(m: &DMatrix<f64>) -> Subspaces {
    let (rows, cols) = m.shape();
    let (sv, v) = full_right_basis(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_CUTOFF * smax).count();
    let null_space = v.columns(rank, cols - rank).into_owned();
    let (_, u) = full_right_basis(&m.transpose());
    let left_null_space = u.columns(rank, rows - rank).into_owned();
    // A⁺ = V₁ Σ₀⁻¹ U₁ᵀ with U₁ = A V₁ Σ₀⁻¹
    let mut pinv = DMatrix::zeros(cols, rows);
    for (i, s) in sv.iter().take(rank).enumerate() {
        let vi = v.column(i);
        let ui = m * vi / *s;
        pinv += vi * ui.transpose() / *s;
    }
    Subspaces {
        rank,
        singular_values: sv,
        null_space,
        left_null_space,
        pseudo_inverse: pinv,
    }
}

#[derive(Debug, Clone)]
pub struct PrestressSolution {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// V₂, n_ec × (n_ec − r).
    pub self_stress_modes: DMatrix<f64>,
    /// U₂, nₐ × (nₐ − r).
    pub mechanism_modes: DMatrix<f64>,
    pub coefficients: DVector<f64>,
    pub tensions: DVector<f64>,
    /// ‖Ā₂c t_c − wₐ‖∞.
    pub residual: f64,
    /// True when a nonzero free-node load was supplied.
    pub loaded: bool,
}

/// Free-node load wₐ = Eₐᵀ(f_ex + g) of the model at `config`.
pub fn free_node_load(model: &Model, config: &Configuration, rest: &DVector<f64>) -> Result<DVector<f64>> {
    let sys = assemble(model, config, rest)?;
    let w = &model.external_force + &sys.gravity_force;
    Ok(w.select_rows(&model.topology.free_dofs()))
}

/// Designs cluster tensions at an equilibrium configuration so that the
/// clusters in `designed` carry `targets`.
pub fn prestress_design(
    model: &Model,
    config: &Configuration,
    w_a: &DVector<f64>,
    designed: &[usize],
    targets: &[f64],
) -> Result<PrestressSolution> {
    let topo = &model.topology;
    if designed.len() != targets.len() {
        return Err(Error::param(
            "designed",
            "one target per designed cluster is required",
        ));
    }
    if let Some(&c) = designed.iter().find(|&&c| c >= topo.cluster_count()) {
        return Err(Error::param("designed", format!("no cluster {c}")));
    }
    let geom = crate::assembly::member_lengths(topo, config)?;
    let a2c = crate::assembly::equilibrium_matrix(topo, &geom);
    let a_bar = crate::assembly::constrained_equilibrium_matrix(topo, &a2c);
    if w_a.len() != a_bar.nrows() {
        return Err(Error::param("w_a", "length must equal the free coordinate count"));
    }
    let sub = subspaces(&a_bar);
    let nmodes = sub.null_space.ncols();
    let loaded = w_a.amax() > 0.0;
    if loaded {
        warn!("prestress design with a nonzero free-node load; a zero load is needed for feasibility");
    }
    if designed.len() != nmodes {
        return Err(Error::PrestressSpan {
            reason: format!(
                "{} designed cluster(s) for {} self-stress mode(s)",
                designed.len(),
                nmodes
            ),
        });
    }
    let particular = &sub.pseudo_inverse * w_a;
    let ed_v2 = sub.null_space.select_rows(designed);
    let rhs = DVector::from_iterator(
        designed.len(),
        designed.iter().zip(targets).map(|(&c, &t)| t - particular[c]),
    );
    let svd_ed = ed_v2.clone().svd(false, false);
    let smax = svd_ed.singular_values.max();
    let smin = svd_ed.singular_values.min();
    if nmodes > 0 && !(smin > 1e-12 * smax.max(1.0)) {
        return Err(Error::PrestressSpan {
            reason: "e_dᵀV₂ is singular".into(),
        });
    }
    let z = if nmodes == 0 {
        DVector::zeros(0)
    } else {
        ed_v2.lu().solve(&rhs).ok_or(Error::PrestressSpan {
            reason: "e_dᵀV₂ is singular".into(),
        })?
    };
    let tensions = particular + &sub.null_space * &z;
    if model.options.tension_mode == TensionMode::Taut {
        if let Some(c) = (0..tensions.len()).find(|&c| tensions[c] < 0.0) {
            return Err(Error::InfeasiblePrestress {
                cluster: topo.clusters()[c].name.clone(),
                tension: tensions[c],
            });
        }
    }
    let residual = (&a_bar * &tensions - w_a).amax();
    Ok(PrestressSolution {
        rank: sub.rank,
        singular_values: sub.singular_values,
        self_stress_modes: sub.null_space,
        mechanism_modes: sub.left_null_space,
        coefficients: z,
        tensions,
        residual,
        loaded,
    })
}

#[derive(Debug, Clone)]
pub struct ModalResult {
    /// Natural frequencies in Hz, ascending.
    pub frequencies: Vec<f64>,
    /// Generalized eigenvalues ω².
    pub omega_squared: Vec<f64>,
    /// M-orthonormal mode shapes over the free coordinates, one per column.
    pub mode_shapes: DMatrix<f64>,
    /// Lowest eigenvalues of K_Taa, N/m.
    pub stiffness_eigenvalues: Vec<f64>,
    pub stiffness_modes: DMatrix<f64>,
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Lowest `count` vibration modes of (K_Taa, M_aa) and stiffness eigenpairs of K_Taa.
pub fn modal_analysis(
    model: &Model,
    config: &Configuration,
    rest_lengths: &DVector<f64>,
    count: usize,
) -> Result<ModalResult> {
    let sys = assemble(model, config, rest_lengths)?;
    modal_from_system(&sys, count)
}

pub fn modal_from_system(sys: &AssembledSystem, count: usize) -> Result<ModalResult> {
    let k = sys.k_t_aa();
    let m = sys.mass_aa();
    let n = k.nrows();
    let count = count.min(n);
    let (kvals, kvecs) = sorted_eigen(k.clone());
    let kmax = kvals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let negative = kvals.iter().filter(|&&v| v < -1e-12 * kmax).count();
    if negative > 0 {
        return Err(Error::Unstable { negative });
    }
    let chol = Cholesky::new(m).ok_or(Error::SingularMass)?;
    let l = chol.l();
    // C = L⁻¹ K L⁻ᵀ
    let x = l.solve_lower_triangular(&k).ok_or(Error::SingularMass)?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::SingularMass)?;
    let c = (&c + c.transpose()) * 0.5;
    let (vals, vecs) = sorted_eigen(c);
    let phi = l
        .transpose()
        .solve_upper_triangular(&vecs.columns(0, count).into_owned())
        .ok_or(Error::SingularMass)?;
    let omega_squared: Vec<f64> = vals[..count].to_vec();
    let frequencies = omega_squared
        .iter()
        .map(|w2| w2.max(0.0).sqrt() / (2.0 * std::f64::consts::PI))
        .collect();
    Ok(ModalResult {
        frequencies,
        omega_squared,
        mode_shapes: phi,
        stiffness_eigenvalues: kvals[..count].to_vec(),
        stiffness_modes: kvecs.columns(0, count).into_owned(),
    })
}
