"""Variable layout: real parametrization of one subproblem's unknowns.

The optimization variables are packed into a flat real vector: scalar
variables first (latencies, rates, bit splits, accuracy, iteration counts),
then the transmit square-root factors as general complex blocks, then the
quantizer covariances as Hermitian blocks. Baseline schemes freeze parts of
the variable set (the frozen quantities simply do not appear in the vector).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..kernels.types import (GENERAL, HERMITIAN, cplx_pack, cplx_unpack,
                             herm_pack, herm_unpack)
from ..phymodel import BitSplit, QuantizerCovariances, TransmitCovariances
from ..scenario import SCHEMES, Scenario


@dataclass(frozen=True)
class SolverOptions:
    """Assembly-time options for the convex subproblem.

    ``fronthaul_sum_all_ids`` switches the linear fronthaul-latency
    constraint to sum the edge bits of every ID instead of only the serving
    AP's own IDs (kept for comparison; the per-AP sum is the default).
    ``forward_quantized=False`` removes the quantized fronthaul stream
    entirely (edge-only comparison mode).
    """

    scheme: str = "rate_split"
    forward_quantized: bool = True
    fronthaul_sum_all_ids: bool = False
    r_floor: float = 1.0      # bits/s, min edge/cloud stream rate
    rf_floor: float = 1e-9    # bits/symbol; keeps the compression constraint
    #                           resolvable when the quantizers grow huge
    tau_floor: float = 1e-9   # s
    mu_floor: float = 1e-9
    eta_floor: float = 1e-6
    omega_floor_rel: float = 1e-8  # times the noise power

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not self.forward_quantized and self.scheme != "edge_only":
            raise ValueError("quantized forwarding can only be disabled for edge_only")

    @property
    def edge_active(self) -> bool:
        return self.scheme != "cloud_only"

    @property
    def cloud_active(self) -> bool:
        return self.scheme != "edge_only"

    @property
    def split_free(self) -> bool:
        return self.scheme == "rate_split"

    @property
    def quant_active(self) -> bool:
        return self.forward_quantized


@dataclass(frozen=True)
class PrimalPoint:
    """One full assignment of the optimization variables."""

    q: TransmitCovariances
    w: QuantizerCovariances | None
    bits: BitSplit
    r_e: np.ndarray
    r_c: np.ndarray
    r_f: np.ndarray
    mu_f: np.ndarray
    tau_c: float
    tau_w: float
    tau_f: float
    tau_total: float
    eta_l: float
    n_l: float
    n_g: float

    def replace(self, **kw) -> "PrimalPoint":
        return replace(self, **kw)


class VarLayout:
    """Index bookkeeping between PrimalPoint fields and the real vector."""

    def __init__(self, scn: Scenario, opts: SolverOptions):
        self.scn = scn
        self.opts = opts
        sys = scn.system
        self.n_ids, self.n_aps = sys.n_ids, sys.n_aps
        self.m_i, self.m_a = sys.m_i, sys.m_a

        names = ["tau_total", "tau_c", "tau_w", "tau_f", "eta_l", "n_l", "n_g"]
        if opts.edge_active:
            names += [f"r_e:{k}" for k in range(self.n_ids)]
        if opts.cloud_active:
            names += [f"r_c:{k}" for k in range(self.n_ids)]
        if opts.split_free:
            names += [f"d_e:{k}" for k in range(self.n_ids)]
        if opts.quant_active:
            names += [f"r_f:{i}" for i in range(self.n_aps)]
            names += [f"mu_f:{i}" for i in range(self.n_aps)]
        self.scalars = {name: idx for idx, name in enumerate(names)}

        # (key, kind, rows, cols, offset); order: qe blocks, qc blocks, omega.
        self.blocks: list[tuple] = []
        self.block_pos: dict = {}
        off = len(names)
        if opts.edge_active:
            for k in range(self.n_ids):
                self._add_block(("qe", k), GENERAL, self.m_i, self.m_i, off)
                off += 2 * self.m_i * self.m_i
        if opts.cloud_active:
            for k in range(self.n_ids):
                self._add_block(("qc", k), GENERAL, self.m_i, self.m_i, off)
                off += 2 * self.m_i * self.m_i
        if opts.quant_active:
            for i in range(self.n_aps):
                self._add_block(("om", i), HERMITIAN, self.m_a, self.m_a, off)
                off += self.m_a * self.m_a
        self.n = off
        self.units = self._units(scn)

    @staticmethod
    def _pow2(value: float) -> float:
        return float(2.0 ** round(np.log2(value)))

    def _units(self, scn: Scenario) -> np.ndarray:
        """Power-of-two nondimensionalization scales per scalar variable.

        Rates are measured in units of the bandwidth, bits in units of the
        payload size, times in units of payload/bandwidth, iteration counts
        in units of their model constants. Powers of two keep the
        rescaling exact, so packing round-trips bit-for-bit.
        """
        sys, fl = scn.system, scn.fl
        tau_unit = self._pow2(fl.bits_per_model / sys.bandwidth_hz)
        rate_unit = self._pow2(sys.bandwidth_hz)
        units = np.ones(self.n)
        s = self.scalars
        units[s["tau_total"]] = self._pow2(tau_unit * fl.v_g)
        for name in ("tau_c", "tau_w", "tau_f"):
            units[s[name]] = tau_unit
        units[s["n_l"]] = self._pow2(8.0 * fl.v_l)
        units[s["n_g"]] = self._pow2(fl.v_g)
        for k in range(self.n_ids):
            if self.opts.edge_active:
                units[s[f"r_e:{k}"]] = rate_unit
            if self.opts.cloud_active:
                units[s[f"r_c:{k}"]] = rate_unit
            if self.opts.split_free:
                units[s[f"d_e:{k}"]] = self._pow2(fl.bits_per_model)
        if self.opts.quant_active:
            for i in range(self.n_aps):
                units[s[f"mu_f:{i}"]] = tau_unit
        return units

    def _add_block(self, key, kind, rows, cols, off):
        self.block_pos[key] = len(self.blocks)
        self.blocks.append((key, kind, rows, cols, off))

    def var(self, name: str) -> int:
        return self.scalars[name]

    def frozen_d_e(self, k: int) -> float:
        if self.opts.scheme == "edge_only":
            return float(self.scn.fl.bits_per_model)
        if self.opts.scheme == "cloud_only":
            return 0.0
        raise ValueError("d_e is a free variable under rate_split")

    # --- conversions -------------------------------------------------------
    def pack(self, p: PrimalPoint) -> np.ndarray:
        x = np.zeros(self.n)
        s = self.scalars
        x[s["tau_total"]] = p.tau_total
        x[s["tau_c"]] = p.tau_c
        x[s["tau_w"]] = p.tau_w
        x[s["tau_f"]] = p.tau_f
        x[s["eta_l"]] = p.eta_l
        x[s["n_l"]] = p.n_l
        x[s["n_g"]] = p.n_g
        for k in range(self.n_ids):
            if self.opts.edge_active:
                x[s[f"r_e:{k}"]] = p.r_e[k]
            if self.opts.cloud_active:
                x[s[f"r_c:{k}"]] = p.r_c[k]
            if self.opts.split_free:
                x[s[f"d_e:{k}"]] = p.bits.d_e[k]
        if self.opts.quant_active:
            for i in range(self.n_aps):
                x[s[f"r_f:{i}"]] = p.r_f[i]
                x[s[f"mu_f:{i}"]] = p.mu_f[i]
        for key, kind, rows, cols, off in self.blocks:
            if key[0] == "qe":
                x[off:off + 2 * rows * cols] = cplx_pack(p.q.q_tilde_e[key[1]])
            elif key[0] == "qc":
                x[off:off + 2 * rows * cols] = cplx_pack(p.q.q_tilde_c[key[1]])
            else:
                x[off:off + rows * rows] = herm_pack(p.w.omega[key[1]])
        return x / self.units

    def unpack(self, x: np.ndarray) -> PrimalPoint:
        x = x * self.units
        s = self.scalars
        m_i = self.m_i
        zeros = np.zeros((m_i, m_i), dtype=np.complex128)
        q_e = [zeros] * self.n_ids
        q_c = [zeros] * self.n_ids
        omega = [None] * self.n_aps
        for key, kind, rows, cols, off in self.blocks:
            if key[0] == "qe":
                q_e[key[1]] = cplx_unpack(x[off:off + 2 * rows * cols], rows, cols)
            elif key[0] == "qc":
                q_c[key[1]] = cplx_unpack(x[off:off + 2 * rows * cols], rows, cols)
            else:
                omega[key[1]] = herm_unpack(x[off:off + rows * rows], rows)

        def scal(name, default=0.0):
            return float(x[s[name]]) if name in s else default

        d_total = float(self.scn.fl.bits_per_model)
        if self.opts.split_free:
            d_e = np.array([x[s[f"d_e:{k}"]] for k in range(self.n_ids)])
        else:
            d_e = np.full(self.n_ids, self.frozen_d_e(0))
        return PrimalPoint(
            q=TransmitCovariances.from_factors(q_e, q_c),
            w=(QuantizerCovariances.from_matrices(omega)
               if self.opts.quant_active else None),
            bits=BitSplit(d_e=d_e, d_total=d_total),
            r_e=np.array([scal(f"r_e:{k}") for k in range(self.n_ids)]),
            r_c=np.array([scal(f"r_c:{k}") for k in range(self.n_ids)]),
            r_f=np.array([scal(f"r_f:{i}") for i in range(self.n_aps)]),
            mu_f=np.array([scal(f"mu_f:{i}") for i in range(self.n_aps)]),
            tau_c=scal("tau_c"), tau_w=scal("tau_w"), tau_f=scal("tau_f"),
            tau_total=scal("tau_total"), eta_l=scal("eta_l"),
            n_l=scal("n_l"), n_g=scal("n_g"),
        )
