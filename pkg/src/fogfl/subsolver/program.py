"""Assembly of the convexified subproblem for fixed auxiliary variables.

With the auxiliary variables frozen, every constraint of the restated
completion-time problem is convex in the real parametrization of
:mod:`.layout`: the quadratic-transform latency surrogates, the linearized
edge/cloud rate bounds (quadratic in the square-root covariance factors),
the compression-rate majorization (log-det in the quantizer covariance) and
the affine bookkeeping constraints. This module lowers them to the flat
term tables executed by the kernels backends.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..kernels.types import LN2, ProgramArrays, ProgramBuilder
from ..matrixcore import inv_hpd, logdet2
from ..scenario import Scenario
from .layout import PrimalPoint, SolverOptions, VarLayout


@dataclass
class ConvexProgram:
    """Assembled subproblem: term tables plus family bookkeeping."""

    scenario: Scenario
    aux: object
    options: SolverOptions
    layout: VarLayout
    arrays: ProgramArrays
    families: dict[str, list[int]]
    n_split_equalities: int

    @property
    def n_vars(self) -> int:
        return self.arrays.n

    @property
    def n_constraints(self) -> int:
        return self.arrays.m

    def pack(self, p: PrimalPoint) -> np.ndarray:
        return self.layout.pack(p)

    def unpack(self, x: np.ndarray) -> PrimalPoint:
        return self.layout.unpack(x)

    def _as_vector(self, p) -> np.ndarray:
        return p if isinstance(p, np.ndarray) else self.layout.pack(p)

    def constraint_values(self, p) -> np.ndarray:
        vals, _ = kernels.constraint_values(self.arrays, self._as_vector(p))
        return vals

    def jacobian(self, p) -> np.ndarray:
        return kernels.jacobian(self.arrays, self._as_vector(p))

    def max_violation(self, p) -> float:
        return float(np.max(self.constraint_values(p), initial=-np.inf))

    def family_counts(self) -> dict[str, int]:
        out = {name: len(idx) for name, idx in self.families.items()}
        out["bit_split_eq"] = self.n_split_equalities
        out["omega_cone"] = len(self.arrays.cone_blk)
        return out

    def family_values(self, p) -> dict[str, np.ndarray]:
        vals = self.constraint_values(p)
        return {name: vals[idx] for name, idx in self.families.items()}


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def assemble_subproblem(scn: Scenario, aux,
                        opts: SolverOptions | None = None) -> ConvexProgram:
    """Build the convex subproblem for fixed auxiliary variables ``aux``."""
    opts = opts or SolverOptions()
    lay = VarLayout(scn, opts)
    sys, fl = scn.system, scn.fl
    n_i, n_a = sys.n_ids, sys.n_aps
    sigma2, band, c_f = sys.noise_power, sys.bandwidth_hz, sys.fronthaul_bps
    d_total = float(fl.bits_per_model)
    omega_floor = opts.omega_floor_rel * sigma2

    for name in ("lambda_total",):
        if not np.isfinite(getattr(aux, name)):
            raise ValueError("auxiliary variables must be finite")

    b = ProgramBuilder(n_vars=lay.n, obj_idx=lay.var("tau_total"),
                       units=lay.units)
    blk = {}
    for key, kind, rows, cols, off in lay.blocks:
        blk[key] = b.add_block(off, rows, cols, kind)

    fam: dict[str, list[int]] = {}

    def new(family: str, const: float = 0.0) -> int:
        j = b.new_constraint(const)
        fam.setdefault(family, []).append(j)
        return j

    v = lay.var

    # (a) epigraph surrogate: tC+tW+tF - 2*lam*sqrt(tau_total) + lam^2*n_g <= 0
    lam_t = float(aux.lambda_total)
    j = new("epigraph")
    b.aff(j, v("tau_c"), 1.0)
    b.aff(j, v("tau_w"), 1.0)
    b.aff(j, v("tau_f"), 1.0)
    b.nsqrt(j, v("tau_total"), 2.0 * lam_t)
    b.aff(j, v("n_g"), lam_t * lam_t)

    # (b) compute latency per ID
    comp_coef = fl.cycles_per_sample * fl.samples_per_id / fl.cpu_hz
    for k in range(n_i):
        j = new("compute_latency")
        b.aff(j, v("n_l"), comp_coef)
        b.aff(j, v("tau_c"), -1.0)

    # (c) wireless latency surrogates, per active (stream, ID)
    def wireless(j, lam, rate_var, d_var, d_const):
        b.recip(j, rate_var, 1.0)
        b.nsqrt(j, v("tau_w"), 2.0 * lam)
        if d_var is not None:
            b.aff(j, d_var, lam * lam * d_const[0])
            b.add_const(j, lam * lam * d_const[1])
        else:
            b.add_const(j, lam * lam * d_const[1])

    for k in range(n_i):
        if opts.edge_active:
            lam = float(aux.lambda_w_e[k])
            j = new("wireless_latency")
            if opts.split_free:
                wireless(j, lam, v(f"r_e:{k}"), v(f"d_e:{k}"), (1.0, 0.0))
            else:
                wireless(j, lam, v(f"r_e:{k}"), None, (0.0, lay.frozen_d_e(k)))
        if opts.cloud_active:
            lam = float(aux.lambda_w_c[k])
            j = new("wireless_latency")
            if opts.split_free:
                # d_c = d_total - d_e
                wireless(j, lam, v(f"r_c:{k}"), v(f"d_e:{k}"), (-1.0, d_total))
            else:
                wireless(j, lam, v(f"r_c:{k}"), None,
                         (0.0, d_total - lay.frozen_d_e(k)))

    # (d) linear fronthaul latency per AP
    for i in range(n_a):
        j = new("fronthaul_latency")
        ids = range(n_i) if opts.fronthaul_sum_all_ids else scn.served[i]
        for k in ids:
            if opts.split_free:
                b.aff(j, v(f"d_e:{k}"), 1.0 / c_f)
            else:
                b.add_const(j, lay.frozen_d_e(k) / c_f)
        if opts.quant_active:
            b.aff(j, v(f"mu_f:{i}"), band / c_f)
        b.aff(j, v("tau_f"), -1.0)

    # (e) fronthaul quantization-time surrogate per AP
    if opts.quant_active:
        for i in range(n_a):
            lam = float(aux.lambda_f[i])
            j = new("fronthaul_qt")
            b.aff(j, v(f"r_f:{i}"), 1.0)
            b.nsqrt(j, v(f"mu_f:{i}"), 2.0 * lam)
            b.aff(j, v("tau_w"), lam * lam)

    # (f) linearized edge-rate bound per ID
    if opts.edge_active:
        for k in range(n_i):
            i_k = int(scn.association[k])
            gam = aux.gamma_e[k]
            theta = aux.theta_e[k]
            p_mat = np.eye(sys.m_i) + gam
            a0 = logdet2(p_mat) - float(np.real(np.trace(gam))) / LN2
            tpt = _hermitize(theta @ p_mat @ theta.conj().T)
            j = new("edge_rate",
                    const=-a0 + sigma2 * float(np.real(np.trace(
                        p_mat @ theta.conj().T @ theta))) / LN2)
            b.aff(j, v(f"r_e:{k}"), 1.0 / band)
            h_kk = scn.channels[i_k, k]
            b.clin(j, blk[("qe", k)], h_kk.conj().T @ theta @ p_mat, -1.0 / LN2)
            for l in range(n_i):
                h_il = scn.channels[i_k, l]
                a_l = _hermitize(h_il.conj().T @ tpt @ h_il)
                b.cquad(j, blk[("qe", l)], a_l, 1.0 / LN2)
                if opts.cloud_active:
                    b.cquad(j, blk[("qc", l)], a_l, 1.0 / LN2)

    # (g) linearized cloud-rate bound per ID
    if opts.cloud_active:
        stacked = [scn.stacked_channel(k) for k in range(n_i)]
        for k in range(n_i):
            gam = aux.gamma_c[k]
            theta = aux.theta_c[k]
            p_mat = np.eye(sys.m_i) + gam
            a0 = logdet2(p_mat) - float(np.real(np.trace(gam))) / LN2
            tpt = _hermitize(theta @ p_mat @ theta.conj().T)
            j = new("cloud_rate",
                    const=-a0 + sigma2 * float(np.real(np.trace(
                        p_mat @ theta.conj().T @ theta))) / LN2)
            b.aff(j, v(f"r_c:{k}"), 1.0 / band)
            b.clin(j, blk[("qc", k)], stacked[k].conj().T @ theta @ p_mat,
                   -1.0 / LN2)
            for l in range(n_i):
                a_l = _hermitize(stacked[l].conj().T @ tpt @ stacked[l])
                b.cquad(j, blk[("qc", l)], a_l, 1.0 / LN2)
            m_a = sys.m_a
            for i in range(n_a):
                block_ii = tpt[i * m_a:(i + 1) * m_a, i * m_a:(i + 1) * m_a]
                b.hlin(j, blk[("om", i)], _hermitize(block_ii), 1.0 / LN2)

    # (h) compression-rate majorization per AP
    if opts.quant_active:
        for i in range(n_a):
            sig_inv = inv_hpd(aux.sigma_f[i])
            j = new("compression",
                    const=logdet2(aux.sigma_f[i]) - sys.m_a / LN2
                    + sigma2 * float(np.real(np.trace(sig_inv))) / LN2)
            b.hlin(j, blk[("om", i)], sig_inv, 1.0 / LN2)
            b.nlogdet(j, blk[("om", i)], 1.0)
            b.aff(j, v(f"r_f:{i}"), -1.0)
            for l in range(n_i):
                h_il = scn.channels[i, l]
                a_l = _hermitize(h_il.conj().T @ sig_inv @ h_il)
                if opts.edge_active and int(scn.association[l]) != i:
                    b.cquad(j, blk[("qe", l)], a_l, 1.0 / LN2)
                if opts.cloud_active:
                    b.cquad(j, blk[("qc", l)], a_l, 1.0 / LN2)

    # (i)/(j) iteration-count bounds
    j = new("local_iters")
    b.nlog(j, v("eta_l"), fl.v_l / LN2)  # -v_l*log2(eta) = -(v_l/ln2)*ln(eta)
    b.aff(j, v("n_l"), -1.0)
    j = new("global_iters")
    b.inv1m(j, v("eta_l"), fl.v_g)
    b.aff(j, v("n_g"), -1.0)

    # (k) per-ID transmit power on the square-root factors
    eye_i = np.eye(sys.m_i)
    for k in range(n_i):
        j = new("power", const=-sys.p_tx)
        if opts.edge_active:
            b.cquad(j, blk[("qe", k)], eye_i, 1.0)
        if opts.cloud_active:
            b.cquad(j, blk[("qc", k)], eye_i, 1.0)

    # (l) bit-split box (the equality d_e + d_c = d_total is eliminated)
    if opts.split_free:
        for k in range(n_i):
            j = new("split_box")
            b.aff(j, v(f"d_e:{k}"), -1.0)
            j = new("split_box", const=-d_total)
            b.aff(j, v(f"d_e:{k}"), 1.0)

    # (m) floors and boxes keeping the barrier domain bounded and smooth
    def floor(name, lo, family="floors"):
        j = new(family, const=lo)
        b.aff(j, v(name), -1.0)

    for name in ("tau_total", "tau_c", "tau_w", "tau_f"):
        floor(name, opts.tau_floor)
    for k in range(n_i):
        if opts.edge_active:
            floor(f"r_e:{k}", opts.r_floor)
        if opts.cloud_active:
            floor(f"r_c:{k}", opts.r_floor)
    if opts.quant_active:
        for i in range(n_a):
            floor(f"r_f:{i}", opts.rf_floor)
            floor(f"mu_f:{i}", opts.mu_floor)
    floor("eta_l", opts.eta_floor)
    j = new("floors", const=-(1.0 - opts.eta_floor))
    b.aff(j, v("eta_l"), 1.0)

    # PD cones on the quantizer covariances
    if opts.quant_active:
        for i in range(n_a):
            b.cone(blk[("om", i)], omega_floor)

    return ConvexProgram(
        scenario=scn, aux=aux, options=opts, layout=lay, arrays=b.build(),
        families=fam, n_split_equalities=n_i,
    )


def surrogate_rate_rhs(program: ConvexProgram, point: PrimalPoint):
    """Rate-surrogate RHS values (per-bandwidth) at a point's matrices.

    Evaluates the assembled rate constraints at a placeholder vector whose
    scalar entries are domain-safe, then strips the known affine rate term:
    the edge/cloud families satisfy c = r/B - RHS and the compression family
    c = RHS - r_f, so RHS follows from the family values directly.
    Returns (edge_rhs, cloud_rhs, comp_rhs); inactive families are None.
    """
    scn = program.scenario
    band = scn.system.bandwidth_hz
    ph = point.replace(
        r_e=np.ones_like(point.r_e), r_c=np.ones_like(point.r_c),
        r_f=np.ones_like(point.r_f), mu_f=np.ones_like(point.mu_f),
        tau_c=1.0, tau_w=1.0, tau_f=1.0, tau_total=1.0,
        eta_l=0.5, n_l=1.0, n_g=1.0)
    vals = program.constraint_values(ph)
    fams = program.families
    edge_rhs = (1.0 / band - vals[fams["edge_rate"]]
                if "edge_rate" in fams else None)
    cloud_rhs = (1.0 / band - vals[fams["cloud_rate"]]
                 if "cloud_rate" in fams else None)
    comp_rhs = (vals[fams["compression"]] + 1.0
                if "compression" in fams else None)
    return edge_rhs, cloud_rhs, comp_rhs


@dataclass(frozen=True)
class KKTReport:
    """Stationarity/feasibility summary of a candidate solution."""

    max_violation: float
    stationarity: float       # Newton decrement of the barrier-augmented objective
    complementarity: float    # implied duality-gap measure m / t*
    barrier_weight: float     # t* minimizing the stationarity residual
    grad_max_rel_err: float | None = None


def check_kkt(program: ConvexProgram, point, grad_check: bool = False,
              fd_step: float = 1e-6) -> KKTReport:
    """Residual report at a point; optionally validate gradients by FD.

    Stationarity is measured as the Newton decrement of the barrier-augmented
    objective at the weight t* that best explains the point (the decrement is
    affine invariant, so it serves as a scale-free relative residual).
    """
    import scipy.linalg

    x = program._as_vector(point)
    pa = program.arrays
    vals, ok = kernels.constraint_values(pa, x)
    max_viol = float(np.max(vals, initial=-np.inf))

    stationarity = np.inf
    gap = np.inf
    t_star = np.nan
    if ok and max_viol < 0.0:
        # Gradient of the pure barrier (t=0); the stationary weight t* then
        # cancels the objective component of the residual.
        _, grad0, _, ok0, _ = kernels.barrier_eval(pa, x, 0.0)
        if ok0:
            t_star = max(-float(grad0[pa.obj_idx]), 1e-30)
            gap = pa.m / t_star
            _, grad, hess, okb, _ = kernels.barrier_eval(pa, x, t_star)
            if okb:
                ridge = 0.0
                scale = max(float(np.max(np.diagonal(hess))), 1e-300)
                for _ in range(8):
                    try:
                        mat = hess if ridge == 0.0 else hess + ridge * np.eye(pa.n)
                        factor = scipy.linalg.cho_factor(mat, lower=True)
                        step = scipy.linalg.cho_solve(factor, grad)
                        step += scipy.linalg.cho_solve(factor, grad - hess @ step)
                        stationarity = float(np.sqrt(max(grad @ step, 0.0)))
                        break
                    except scipy.linalg.LinAlgError:
                        ridge = max(ridge * 100.0, 1e-12 * scale)

    grad_err = None
    if grad_check:
        jac = kernels.jacobian(pa, x)
        jac_fd = np.empty_like(jac)
        for idx in range(pa.n):
            h = fd_step * max(1.0, abs(x[idx]))
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            vp, _ = kernels.constraint_values(pa, xp)
            vm, _ = kernels.constraint_values(pa, xm)
            jac_fd[:, idx] = (vp - vm) / (2.0 * h)
        scale = np.abs(jac) + np.abs(jac_fd) + 1e-6 * max(1.0, np.abs(jac).max())
        grad_err = float((np.abs(jac - jac_fd) / scale).max())

    return KKTReport(max_violation=max_viol, stationarity=stationarity,
                     complementarity=gap, barrier_weight=t_star,
                     grad_max_rel_err=grad_err)
