"""Primal log-barrier interior-point solver for the assembled subproblem.

Damped Newton steps with Armijo backtracking minimize t*f(x) + phi(x) for a
geometrically increasing weight t, where phi is the log barrier of the
scalar constraints plus the log-det barrier of the quantizer cones. The
feasible start is produced by a deterministic chain repair that re-tightens
the latency/rate bookkeeping variables against the current matrices and
inflates them slightly into the interior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .. import kernels
from ..matrixcore import min_eigval
from .layout import PrimalPoint, SolverOptions
from .program import ConvexProgram, surrogate_rate_rhs

ARMIJO = 0.3
SHRINK = 0.5
MAX_BACKTRACK = 50


class SubproblemError(RuntimeError):
    pass


@dataclass
class SolveDiagnostics:
    stages: list = field(default_factory=list)  # (t, objective, newton iters)
    newton_total: int = 0
    final_t: float = 0.0
    guard_used: bool = False
    repaired: bool = False

    @property
    def stage_objectives(self) -> list:
        return [s[1] for s in self.stages]


def interior_shift(program: ConvexProgram, point: PrimalPoint,
                   eps: float = 1e-5) -> PrimalPoint:
    """Deterministically re-tighten and inflate a point into the interior.

    Matrix variables and the bit split are kept (clipped into their boxes);
    every bookkeeping scalar is recomputed from its binding constraints at
    the program's auxiliary variables and inflated by the factor (1 + eps).
    """
    scn, opts, aux = program.scenario, program.options, program.aux
    sys, fl = scn.system, scn.fl
    band, c_f = sys.bandwidth_hz, sys.fronthaul_bps
    d_total = float(fl.bits_per_model)

    eta = float(np.clip(point.eta_l, 2.0 * opts.eta_floor,
                        1.0 - 2.0 * opts.eta_floor))
    if opts.split_free:
        d_pad = 1e-9 * d_total
        d_e = np.clip(point.bits.d_e, d_pad, d_total - d_pad)
    else:
        d_e = point.bits.d_e
    bits = point.bits.__class__(d_e=d_e, d_total=d_total)

    # Transmit factors strictly inside the power ball.
    q_e = [np.array(q) for q in point.q.q_tilde_e]
    q_c = [np.array(q) for q in point.q.q_tilde_c]
    cap = sys.p_tx * (1.0 - eps)
    for k in range(sys.n_ids):
        power = float(np.linalg.norm(q_e[k])**2 + np.linalg.norm(q_c[k])**2)
        if power > cap:
            scale = np.sqrt(cap / power)
            q_e[k] = q_e[k] * scale
            q_c[k] = q_c[k] * scale
    q = point.q.from_factors(q_e, q_c)

    # Quantizers strictly inside the PD cone.
    w = point.w
    if opts.quant_active:
        omega_floor = opts.omega_floor_rel * sys.noise_power
        mats = []
        for om in w.omega:
            lift = max(0.0, 2.0 * omega_floor - min_eigval(om))
            mats.append(om + lift * np.eye(om.shape[0]))
        w = w.from_matrices(mats)

    shifted = point.replace(q=q, w=w, bits=bits, eta_l=eta)
    grow = 1.0 + eps

    n_l = grow * (-fl.v_l * np.log2(eta))
    n_g = grow * (fl.v_g / (1.0 - eta))

    edge_rhs, cloud_rhs, comp_rhs = surrogate_rate_rhs(program, shifted)
    r_e = np.zeros(sys.n_ids)
    r_c = np.zeros(sys.n_ids)
    if edge_rhs is not None:
        r_e = (1.0 - eps) * band * edge_rhs
        if np.any(r_e <= opts.r_floor * (1.0 + 1e-9)):
            raise SubproblemError("infeasible subproblem: edge rate at floor")
    if cloud_rhs is not None:
        r_c = (1.0 - eps) * band * cloud_rhs
        if np.any(r_c <= opts.r_floor * (1.0 + 1e-9)):
            raise SubproblemError("infeasible subproblem: cloud rate at floor")
    r_f = np.zeros(sys.n_aps)
    mu_f = np.zeros(sys.n_aps)
    if comp_rhs is not None:
        r_f = np.maximum(grow * comp_rhs, 2.0 * opts.rf_floor)

    comp_coef = fl.cycles_per_sample * fl.samples_per_id / fl.cpu_hz
    tau_c = grow * max(n_l * comp_coef, opts.tau_floor)

    bound = opts.tau_floor
    d_c = bits.d_c
    for k in range(sys.n_ids):
        if edge_rhs is not None:
            lam = float(aux.lambda_w_e[k])
            bound = max(bound, ((1.0 / r_e[k] + lam**2 * d_e[k]) / (2 * lam))**2)
        if cloud_rhs is not None:
            lam = float(aux.lambda_w_c[k])
            bound = max(bound, ((1.0 / r_c[k] + lam**2 * d_c[k]) / (2 * lam))**2)
    tau_w = grow * bound

    if opts.quant_active:
        for i in range(sys.n_aps):
            lam = float(aux.lambda_f[i])
            mu_f[i] = grow * max(((r_f[i] + lam**2 * tau_w) / (2 * lam))**2,
                                 opts.mu_floor)

    bound = opts.tau_floor
    for i in range(sys.n_aps):
        ids = (range(sys.n_ids) if opts.fronthaul_sum_all_ids
               else scn.served[i])
        edge_bits = float(sum(d_e[k] for k in ids))
        quant = band * mu_f[i] if opts.quant_active else 0.0
        bound = max(bound, (edge_bits + quant) / c_f)
    tau_f = grow * bound

    lam = float(aux.lambda_total)
    tau_total = grow * max(
        ((tau_c + tau_w + tau_f + lam**2 * n_g) / (2 * lam))**2,
        opts.tau_floor)

    out = shifted.replace(r_e=r_e, r_c=r_c, r_f=r_f, mu_f=mu_f, n_l=n_l,
                          n_g=n_g, tau_c=tau_c, tau_w=tau_w, tau_f=tau_f,
                          tau_total=tau_total)
    vals, ok = kernels.constraint_values(program.arrays, program.pack(out))
    if not ok or np.max(vals, initial=-np.inf) >= 0.0:
        worst = {name: float(np.max(vals[idx]))
                 for name, idx in program.families.items()
                 if np.max(vals[idx]) >= 0.0}
        raise SubproblemError(
            f"infeasible subproblem: interior shift failed ({worst})")
    return out


def _newton_direction(hess: np.ndarray, grad: np.ndarray):
    n = hess.shape[0]
    scale = max(float(np.max(np.diagonal(hess), initial=0.0)), 1e-300)
    ridge = 0.0
    for _ in range(10):
        try:
            mat = hess if ridge == 0.0 else hess + ridge * np.eye(n)
            factor = scipy.linalg.cho_factor(mat, lower=True)
            direction = scipy.linalg.cho_solve(factor, -grad)
            # One pass of iterative refinement: the Hessian conditioning near
            # the barrier endgame otherwise caps the reachable decrement.
            resid = -grad - hess @ direction
            direction += scipy.linalg.cho_solve(factor, resid)
            dec2 = float(-grad @ direction)
            if dec2 >= 0.0:
                return direction, dec2
        except scipy.linalg.LinAlgError:
            pass
        ridge = max(ridge * 100.0, 1e-12 * scale)
    raise SubproblemError("Newton system not positive definite")


def _center(pa, x, t, tol, max_iter):
    """Damped-Newton centering at barrier weight t; returns (x, iters, dec2).

    Outside the quadratic-convergence region (decrement > 1/4) steps are
    Armijo-backtracked on the potential. Inside it the full Newton step is
    taken subject only to domain feasibility: at large t the potential is too
    large for its decreases to be resolvable in double precision, while the
    decrement (computed from gradient and Hessian) stays accurate.
    """
    dec2 = np.inf
    prev_dec2 = np.inf
    iters = 0
    for _ in range(max_iter):
        phi, grad, hess, ok, _ = kernels.barrier_eval(pa, x, t)
        if not ok:
            raise SubproblemError("barrier iterate left the domain")
        direction, dec2 = _newton_direction(hess, grad)
        if 0.5 * dec2 <= tol:
            break
        in_quad_zone = dec2 <= 0.0625  # decrement <= 1/4
        if in_quad_zone and dec2 >= 0.9 * prev_dec2:
            break  # roundoff floor: decrement no longer contracting
        prev_dec2 = dec2
        g_dot_d = float(grad @ direction)
        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACK):
            trial = x + step * direction
            if in_quad_zone:
                vals, ok_trial = kernels.constraint_values(pa, trial)
                ok_trial = ok_trial and float(np.max(vals, initial=-np.inf)) < 0.0
                if ok_trial:
                    x = trial
                    accepted = True
                    break
            else:
                phi_trial, ok_trial = kernels.potential(pa, trial, t)
                if ok_trial and phi_trial <= phi + ARMIJO * step * g_dot_d:
                    x = trial
                    accepted = True
                    break
            step *= SHRINK
        iters += 1
        if not accepted:
            if 0.5 * dec2 <= 1e4 * max(tol, 1e-12):
                break  # at the numerical floor of this stage
            raise SubproblemError("line search stalled")
    return x, iters, dec2


def solve(program: ConvexProgram, start: PrimalPoint, *,
          gap_rel: float = 1e-9, eps_interior: float = 1e-5,
          newton_tol: float = 1e-9, max_newton: int = 120,
          barrier_div: float = 10.0, t0: float | None = None):
    """Minimize the subproblem objective from a (weakly) feasible start.

    ``t0`` optionally warm-starts the barrier weight (useful when the start
    is already near-optimal, as in later alternating-optimization rounds).
    Returns (point, diagnostics). The returned objective never exceeds the
    start's: if the final centering ends microscopically above it (possible
    at an SCA fixed point), the untouched start is returned instead.
    """
    pa = program.arrays
    obj_unit = float(program.layout.units[pa.obj_idx])
    x_given = program.pack(start)
    vals, ok = kernels.constraint_values(pa, x_given)
    f_ref = None
    if ok and float(np.max(vals, initial=-np.inf)) <= 1e-9:
        f_ref = float(x_given[pa.obj_idx])

    diag = SolveDiagnostics()
    interior = interior_shift(program, start, eps_interior)
    diag.repaired = True
    x = program.pack(interior)

    f0 = abs(float(x[pa.obj_idx]))
    gap_target = gap_rel * max(f0, 1e-9)
    t_final = pa.m / gap_target
    t = max(pa.m / max(f0, 1e-9), 1e-2)
    if t0 is not None:
        t = min(max(t, t0), t_final)

    while True:
        x, iters, _ = _center(pa, x, t, newton_tol, max_newton)
        diag.newton_total += iters
        diag.stages.append((t, float(x[pa.obj_idx]) * obj_unit, iters))
        if pa.m / t <= gap_target:
            break
        t *= barrier_div

    # Polish the last centering so the stationarity residual is as small as
    # double precision allows at this weight.
    x, iters, _ = _center(pa, x, t, 1e-16, 12)
    diag.newton_total += iters
    diag.final_t = t

    f_end = float(x[pa.obj_idx])
    if f_ref is not None and f_end > f_ref:
        diag.guard_used = True
        return start, diag
    return program.unpack(x), diag
