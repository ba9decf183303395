"""Alternating optimization of the completion time.

Each round: (1) compute the auxiliary variables in closed form at the
current point (they make every surrogate constraint tight there), (2) solve
the resulting convex subproblem with the barrier method, (3) re-evaluate the
true completion time from the exact rate/latency model. The true objective
sequence is nonincreasing by construction: the previous point is always
feasible for the new subproblem, and a guard returns it unchanged if the
numerically solved point fails to improve on it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .matrixcore import solve_hpd
from .phymodel import (BitSplit, LatencyReport, QuantizerCovariances,
                       TransmitCovariances, _all_rates, interference_covariances,
                       iteration_bounds, latency_breakdown)
from .scenario import Scenario
from .subsolver import (PrimalPoint, SolverOptions, assemble_subproblem,
                        solve)
from .subsolver.program import surrogate_rate_rhs

# Split sizes below this fraction of the payload are treated as zero when
# forming the wireless-latency auxiliaries (guards 1/d against roundoff).
_D_CLAMP_REL = 1e-12


@dataclass(frozen=True)
class AuxPoint:
    """Closed-form auxiliary variables of the convexification."""

    lambda_total: float
    lambda_w_e: np.ndarray | None
    lambda_w_c: np.ndarray | None
    lambda_f: np.ndarray | None
    gamma_e: tuple | None
    theta_e: tuple | None
    gamma_c: tuple | None
    theta_c: tuple | None
    sigma_f: tuple | None


@dataclass
class SolveReport:
    """Trajectory and outcome of one alternating-optimization run."""

    trajectory: list
    final: PrimalPoint
    final_latency: LatencyReport
    iterations: int
    terminated_by: str  # "threshold" | "max_iter"
    wall_time: float
    scheme: str
    subproblem_stats: list

    @property
    def converged(self) -> bool:
        return self.terminated_by == "threshold"

    @property
    def tau_total(self) -> float:
        return self.trajectory[-1]


def _hermitize(a):
    return 0.5 * (a + a.conj().T)


def update_auxiliaries(scn: Scenario, point: PrimalPoint,
                       opts: SolverOptions | None = None) -> AuxPoint:
    """Closed-form auxiliary update making every surrogate tight at `point`."""
    opts = opts or SolverOptions()
    sys = scn.system
    d_clamp = _D_CLAMP_REL * scn.fl.bits_per_model

    w_e, w_a, w_c = interference_covariances(
        scn, point.q, point.w if opts.cloud_active else None)

    gamma_e = theta_e = None
    lambda_w_e = None
    if opts.edge_active:
        gamma_e, theta_e = [], []
        for k in range(sys.n_ids):
            i = int(scn.association[k])
            h = scn.channels[i, k]
            qt = point.q.q_tilde_e[k]
            hq = h @ qt
            gamma_e.append(_hermitize(hq.conj().T @ solve_hpd(w_e[k], hq)))
            theta_e.append(solve_hpd(w_e[k] + hq @ hq.conj().T, hq))
        lambda_w_e = np.sqrt(point.tau_w) / np.maximum(point.bits.d_e, d_clamp)

    gamma_c = theta_c = None
    lambda_w_c = None
    if opts.cloud_active:
        gamma_c, theta_c = [], []
        for k in range(sys.n_ids):
            h = scn.stacked_channel(k)
            qt = point.q.q_tilde_c[k]
            hq = h @ qt
            gamma_c.append(_hermitize(hq.conj().T @ solve_hpd(w_c[k], hq)))
            theta_c.append(solve_hpd(w_c[k] + hq @ hq.conj().T, hq))
        lambda_w_c = np.sqrt(point.tau_w) / np.maximum(point.bits.d_c, d_clamp)

    lambda_f = sigma_f = None
    if opts.quant_active:
        sigma_f = tuple(_hermitize(w_a[i] + point.w.omega[i])
                        for i in range(sys.n_aps))
        lambda_f = np.sqrt(point.mu_f) / point.tau_w

    return AuxPoint(
        lambda_total=float(np.sqrt(point.tau_total) / point.n_g),
        lambda_w_e=lambda_w_e, lambda_w_c=lambda_w_c, lambda_f=lambda_f,
        gamma_e=tuple(gamma_e) if gamma_e is not None else None,
        theta_e=tuple(theta_e) if theta_e is not None else None,
        gamma_c=tuple(gamma_c) if gamma_c is not None else None,
        theta_c=tuple(theta_c) if theta_c is not None else None,
        sigma_f=sigma_f,
    )


def _tight_chain(scn: Scenario, opts: SolverOptions, q: TransmitCovariances,
                 w: QuantizerCovariances | None, d_e, eta_l: float,
                 shift: float, proportional_split: bool = False) -> PrimalPoint:
    """Point with bookkeeping scalars (rates, latencies) set from the exact
    model, optionally inflated by `shift` into the strict interior."""
    sys, fl = scn.system, scn.fl
    r_true_e, r_true_c, g = _all_rates(scn, q, w)
    if opts.edge_active and np.any(r_true_e <= 10.0 * opts.r_floor):
        raise ValueError("degenerate scenario: edge rate at noise floor")
    if opts.cloud_active and np.any(r_true_c <= 10.0 * opts.r_floor):
        raise ValueError("degenerate scenario: cloud rate at noise floor")

    lo, hi = 1.0 - shift, 1.0 + shift
    r_e = lo * r_true_e if opts.edge_active else np.zeros(sys.n_ids)
    r_c = lo * r_true_c if opts.cloud_active else np.zeros(sys.n_ids)
    r_f = np.zeros(sys.n_aps)
    if opts.quant_active:
        # The compression rate can underflow when quantizers are huge; the
        # floor keeps the chain and the subsequent auxiliaries resolvable.
        r_f = np.maximum(hi * g, 2.0 * opts.rf_floor)

    d_total = float(fl.bits_per_model)
    if proportional_split:
        d_e = d_total * r_e / (r_e + r_c)
    d_e = np.asarray(d_e, dtype=np.float64)
    bits = BitSplit(d_e=d_e, d_total=d_total)

    n_l, n_g = iteration_bounds(fl, eta_l)
    n_l, n_g = hi * n_l, hi * n_g
    tau_c = hi * n_l * fl.cycles_per_sample * fl.samples_per_id / fl.cpu_hz

    tau_w = 0.0
    for k in range(sys.n_ids):
        if bits.d_e[k] > 0.0 and opts.edge_active:
            tau_w = max(tau_w, bits.d_e[k] / r_e[k])
        if bits.d_c[k] > 0.0 and opts.cloud_active:
            tau_w = max(tau_w, bits.d_c[k] / r_c[k])
    tau_w = hi * max(tau_w, opts.tau_floor)

    mu_f = (np.maximum(hi * tau_w * r_f, 2.0 * opts.mu_floor)
            if opts.quant_active else np.zeros(sys.n_aps))
    tau_f = opts.tau_floor
    for i in range(sys.n_aps):
        edge_bits = float(bits.d_e[scn.served[i]].sum())
        quant = sys.bandwidth_hz * mu_f[i] if opts.quant_active else 0.0
        tau_f = max(tau_f, (edge_bits + quant) / sys.fronthaul_bps)
    tau_f = hi * tau_f
    tau_total = hi * n_g * (tau_c + tau_w + tau_f)

    return PrimalPoint(q=q, w=w, bits=bits, r_e=r_e, r_c=r_c, r_f=r_f,
                       mu_f=mu_f, tau_c=tau_c, tau_w=tau_w, tau_f=tau_f,
                       tau_total=tau_total, eta_l=eta_l, n_l=n_l, n_g=n_g)


def init_point(scn: Scenario, opts: SolverOptions | None = None,
               interior_shift: float = 1e-3) -> PrimalPoint:
    """Feasible starting point: identity covariance factors at full power
    (split evenly across active streams), noise-level quantizers, proportional
    bit split, eta_l = 0.5; then shifted strictly inside the constraint set."""
    opts = opts or SolverOptions()
    sys = scn.system
    m_i = sys.m_i
    n_streams = int(opts.edge_active) + int(opts.cloud_active)
    amp = np.sqrt(sys.p_tx / (n_streams * m_i)) * np.sqrt(1.0 - interior_shift)
    eye = np.eye(m_i, dtype=np.complex128)
    zero = np.zeros((m_i, m_i), dtype=np.complex128)
    q = TransmitCovariances.from_factors(
        q_tilde_e=[amp * eye if opts.edge_active else zero] * sys.n_ids,
        q_tilde_c=[amp * eye if opts.cloud_active else zero] * sys.n_ids,
    )
    w = None
    if opts.quant_active:
        w = QuantizerCovariances.from_matrices(
            [sys.noise_power * np.eye(sys.m_a)] * sys.n_aps)

    if opts.split_free:
        return _tight_chain(scn, opts, q, w, None, 0.5, interior_shift,
                            proportional_split=True)
    d_e = np.full(sys.n_ids, scn.fl.bits_per_model
                  if opts.scheme == "edge_only" else 0.0)
    return _tight_chain(scn, opts, q, w, d_e, 0.5, interior_shift)


def _capped_quantizers(scn: Scenario, point: PrimalPoint) -> QuantizerCovariances:
    """Quantizers for reviving the cloud path of an edge-only point.

    The edge-only optimizer drives the quantizers huge (its quantized stream
    carries nothing), which underflows the cloud rates. Eigenvalues are
    capped so that the compression rate stays tiny (its fronthaul cost is a
    <=0.1% perturbation of the baseline's fronthaul time) yet finite.
    """
    sys = scn.system
    _, w_a, _ = interference_covariances(scn, point.q, None)
    g_target = max(1e-6, 1e-3 * sys.fronthaul_bps * point.tau_f
                   / (sys.bandwidth_hz * point.tau_w))
    cap = max(float(np.real(np.trace(w_a[0]))) / (np.log(2.0) * g_target),
              4.0 * sys.noise_power)
    mats = []
    for om in point.w.omega:
        vals, vecs = np.linalg.eigh(om)
        vals = np.clip(vals, sys.noise_power, cap)
        mats.append((vecs * vals) @ vecs.conj().T)
    return QuantizerCovariances.from_matrices(mats)


def unfreeze_start(scn: Scenario, point: PrimalPoint, from_scheme: str,
                   opts: SolverOptions, bit_frac: float = 1e-4) -> PrimalPoint:
    """Turn a converged baseline point into a strictly interior rate-split
    start: a small power/bit share moves to the previously frozen stream,
    sized so the completion time is essentially unchanged."""
    sys = scn.system
    m_i = sys.m_i
    eye = np.eye(m_i, dtype=np.complex128)
    d_total = float(scn.fl.bits_per_model)
    if from_scheme == "edge_only":
        w = _capped_quantizers(scn, point)
    elif from_scheme == "cloud_only":
        w = point.w
    else:
        raise ValueError("from_scheme must be a baseline scheme")

    for power_frac in (1e-3, 1e-2, 0.1):
        seed_amp = np.sqrt(power_frac * sys.p_tx / m_i)
        keep = np.sqrt(1.0 - power_frac)
        if from_scheme == "edge_only":
            q_e = [keep * np.asarray(qt) for qt in point.q.q_tilde_e]
            q_c = [seed_amp * eye] * sys.n_ids
        else:
            q_e = [seed_amp * eye] * sys.n_ids
            q_c = [keep * np.asarray(qt) for qt in point.q.q_tilde_c]
        q = TransmitCovariances.from_factors(q_e, q_c)
        r_true_e, r_true_c, _ = _all_rates(scn, q, w)
        seeded = r_true_c if from_scheme == "edge_only" else r_true_e
        if np.all(seeded > 100.0 * opts.r_floor):
            break

    if from_scheme == "edge_only":
        new_bits = np.minimum(bit_frac * d_total,
                              0.45 * point.tau_w * r_true_c)
        d_e = d_total - new_bits
    else:
        d_e = np.minimum(bit_frac * d_total, 0.45 * point.tau_w * r_true_e)
    return _tight_chain(scn, opts, q, w, d_e, point.eta_l, 1e-5)


def true_latency(scn: Scenario, point: PrimalPoint) -> LatencyReport:
    """Exact completion-time evaluation at a point's matrix/bit variables."""
    return latency_breakdown(scn, point.q, point.w, point.bits, point.eta_l)


def _sca_loop(scn: Scenario, opts: SolverOptions, e_th: float, t_max: int,
              start: PrimalPoint | None) -> SolveReport:
    began = time.perf_counter()
    x = start if start is not None else init_point(scn, opts)
    rep = true_latency(scn, x)
    trajectory = [rep.tau_total]
    stats = []
    terminated = "max_iter"
    iterations = 0
    for it in range(1, t_max + 1):
        aux = update_auxiliaries(scn, x, opts)
        program = assemble_subproblem(scn, aux, opts)
        x_new, diag = solve(program, x)
        rep_new = true_latency(scn, x_new)
        if rep_new.tau_total > trajectory[-1]:
            # No numerical improvement: keep the incumbent (fixed point).
            x_new, rep_new = x, rep
        x, rep = x_new, rep_new
        trajectory.append(rep.tau_total)
        iterations = it
        stats.append({
            "iteration": it,
            "newton_steps": diag.newton_total,
            "stages": len(diag.stages),
            "final_t": diag.final_t,
            "guard_used": diag.guard_used,
            "tau_total": rep.tau_total,
        })
        if abs(trajectory[-1] - trajectory[-2]) < e_th:
            terminated = "threshold"
            break
    return SolveReport(trajectory=trajectory, final=x, final_latency=rep,
                       iterations=iterations, terminated_by=terminated,
                       wall_time=time.perf_counter() - began,
                       scheme=opts.scheme, subproblem_stats=stats)


def run(scn: Scenario, *, scheme: str = "rate_split", e_th: float = 1e-4,
        t_max: int = 100, multi_start: bool | None = None,
        forward_quantized: bool = True, start: PrimalPoint | None = None,
        baseline_reports: dict | None = None) -> SolveReport:
    """Optimize one scenario under the given scheme.

    For rate splitting with ``multi_start`` (the default), the two baseline
    schemes are solved first and their converged points seed two additional
    starts, so the returned completion time never exceeds the baselines'.
    Pre-computed baseline reports can be passed to avoid re-solving them.
    """
    opts = SolverOptions(scheme=scheme, forward_quantized=forward_quantized)
    if multi_start is None:
        multi_start = scheme == "rate_split" and start is None
    if scheme != "rate_split" or not multi_start:
        return _sca_loop(scn, opts, e_th, t_max, start)

    began = time.perf_counter()
    baselines = dict(baseline_reports or {})
    for base in ("edge_only", "cloud_only"):
        if base not in baselines:
            baselines[base] = _sca_loop(
                scn, SolverOptions(scheme=base), e_th, t_max, None)

    starts = [None]
    for base in ("edge_only", "cloud_only"):
        starts.append(unfreeze_start(scn, baselines[base].final, base, opts))
    reports = [_sca_loop(scn, opts, e_th, t_max, s) for s in starts]
    best = min(reports, key=lambda r: r.trajectory[-1])
    best.wall_time = time.perf_counter() - began
    return best


def convexified_residuals(scn: Scenario, point: PrimalPoint, aux: AuxPoint,
                          opts: SolverOptions | None = None) -> dict:
    """Per-family gaps between original expressions and their surrogates.

    Identity families report (original - surrogate); they vanish when the
    auxiliaries come from :func:`update_auxiliaries` at the same point and
    are nonnegative otherwise. The ``*_rate_slack`` entries report the
    surrogate rate-constraint slack (negative iff the point's rate variable
    is infeasible for the surrogate).
    """
    opts = opts or SolverOptions()
    program = assemble_subproblem(scn, aux, opts)
    edge_rhs, cloud_rhs, comp_rhs = surrogate_rate_rhs(program, point)
    band = scn.system.bandwidth_hz
    f_e, f_c, g = _all_rates(scn, point.q,
                             point.w if opts.quant_active else None)

    out = {}
    lam = aux.lambda_total
    out["epigraph"] = np.array([
        point.tau_total / point.n_g
        - (2.0 * lam * np.sqrt(point.tau_total) - lam**2 * point.n_g)])

    gaps = []
    for k in range(scn.system.n_ids):
        if opts.edge_active and point.bits.d_e[k] > 0.0:
            lam = aux.lambda_w_e[k]
            d = point.bits.d_e[k]
            gaps.append(point.tau_w / d
                        - (2.0 * lam * np.sqrt(point.tau_w) - lam**2 * d))
        if opts.cloud_active and point.bits.d_c[k] > 0.0:
            lam = aux.lambda_w_c[k]
            d = point.bits.d_c[k]
            gaps.append(point.tau_w / d
                        - (2.0 * lam * np.sqrt(point.tau_w) - lam**2 * d))
    out["wireless_latency"] = np.asarray(gaps)

    if opts.quant_active:
        lam = aux.lambda_f
        out["fronthaul_qt"] = (point.mu_f / point.tau_w
                               - (2.0 * lam * np.sqrt(point.mu_f)
                                  - lam**2 * point.tau_w))
        out["compression"] = comp_rhs - g
    if opts.edge_active:
        out["edge_rate"] = f_e / band - edge_rhs
        out["edge_rate_slack"] = band * edge_rhs - point.r_e
    if opts.cloud_active:
        out["cloud_rate"] = f_c / band - cloud_rhs
        out["cloud_rate_slack"] = band * cloud_rhs - point.r_c
    return out
