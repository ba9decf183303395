"""Closed-form physical-layer model: covariances, rates and latency.

These are the exact (non-convexified) quantities: receive/interference
covariances at APs and at the cloud, achievable edge/cloud rates, the
fronthaul compression rate, iteration-count lower bounds and the resulting
completion-time breakdown. The optimizer's surrogates are checked against
these functions, and the alternating algorithm tracks its progress with them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matrixcore import check_hermitian, logdet2
from .scenario import FLConfig, Scenario

POWER_TOL = 1e-9


@dataclass(frozen=True)
class TransmitCovariances:
    """Square-root factors of the per-ID transmit covariances.

    q_tilde_e[k] and q_tilde_c[k] are (m_i, m_i) complex factors for the
    edge-decoded and cloud-decoded signal of ID k; the covariance of each
    signal is Q = q_tilde @ q_tilde^H, so it is PSD by construction.
    """

    q_tilde_e: tuple
    q_tilde_c: tuple

    @staticmethod
    def from_factors(q_tilde_e, q_tilde_c) -> "TransmitCovariances":
        return TransmitCovariances(
            q_tilde_e=tuple(np.asarray(q, dtype=np.complex128) for q in q_tilde_e),
            q_tilde_c=tuple(np.asarray(q, dtype=np.complex128) for q in q_tilde_c),
        )

    @property
    def n_ids(self) -> int:
        return len(self.q_tilde_e)

    def q_e(self, k: int) -> np.ndarray:
        q = self.q_tilde_e[k]
        return q @ q.conj().T

    def q_c(self, k: int) -> np.ndarray:
        q = self.q_tilde_c[k]
        return q @ q.conj().T

    def power(self, k: int) -> float:
        return float(np.linalg.norm(self.q_tilde_e[k]) ** 2
                     + np.linalg.norm(self.q_tilde_c[k]) ** 2)

    def check_power(self, p_tx: float, tol: float = POWER_TOL):
        for k in range(self.n_ids):
            if self.power(k) > p_tx + tol:
                raise ValueError(f"power constraint violated at ID {k}")


@dataclass(frozen=True)
class QuantizerCovariances:
    """Per-AP fronthaul quantization noise covariances (Hermitian PD)."""

    omega: tuple

    @staticmethod
    def from_matrices(omega) -> "QuantizerCovariances":
        return QuantizerCovariances(
            omega=tuple(check_hermitian(o) for o in omega)
        )

    def stacked(self) -> np.ndarray:
        """Block-diagonal covariance of the stacked quantization noise."""
        blocks = self.omega
        m = blocks[0].shape[0]
        n = len(blocks)
        out = np.zeros((n * m, n * m), dtype=np.complex128)
        for i, b in enumerate(blocks):
            out[i * m:(i + 1) * m, i * m:(i + 1) * m] = b
        return out


@dataclass(frozen=True)
class BitSplit:
    """Division of each ID's model-update payload into the two streams."""

    d_e: np.ndarray  # bits routed through edge decoding, per ID
    d_total: float   # payload size per ID, bits

    def __post_init__(self):
        d_e = np.asarray(self.d_e, dtype=np.float64)
        object.__setattr__(self, "d_e", d_e)
        if np.any(d_e < -1e-9) or np.any(d_e > self.d_total + 1e-9):
            raise ValueError("d_e entries must lie in [0, d_total]")

    @property
    def d_c(self) -> np.ndarray:
        return self.d_total - self.d_e


@dataclass(frozen=True)
class LatencyReport:
    """One completion-time evaluation: components, counts and rates."""

    tau_c: float
    tau_w: float
    tau_f: float
    tau_total: float
    n_l: float
    n_g: float
    n_l_ceil: int
    n_g_ceil: int
    eta_l: float
    r_e: np.ndarray  # bits/s
    r_c: np.ndarray  # bits/s
    r_f: np.ndarray  # bits/symbol


def interference_covariances(scn: Scenario, q: TransmitCovariances,
                             w: QuantizerCovariances | None):
    """Receive-side covariances (W_E per ID, W_A per AP, W_C per ID).

    W_E[k]: interference-plus-noise seen when AP i_k decodes the edge signal
    of ID k (other IDs' edge signals plus every cloud signal plus noise).
    W_A[i]: covariance of AP i's residual after subtracting its own decoded
    edge signals; this is what gets quantized onto the fronthaul.
    W_C[k]: noise-plus-interference for cloud decoding of ID k from the
    stacked quantized signals (requires quantizers; None disables it).
    """
    sys = scn.system
    sigma2 = sys.noise_power
    n_i, n_a, m_a = sys.n_ids, sys.n_aps, sys.m_a

    q_e = [q.q_e(k) for k in range(n_i)]
    q_c = [q.q_c(k) for k in range(n_i)]

    # Per-AP aggregate HQH^H terms, split by stream type.
    edge_cov = np.zeros((n_a, m_a, m_a), dtype=np.complex128)
    cloud_cov = np.zeros((n_a, m_a, m_a), dtype=np.complex128)
    for i in range(n_a):
        for k in range(n_i):
            h = scn.channels[i, k]
            edge_cov[i] += h @ q_e[k] @ h.conj().T
            cloud_cov[i] += h @ q_c[k] @ h.conj().T

    eye = sigma2 * np.eye(m_a)
    w_e = []
    for k in range(n_i):
        i = int(scn.association[k])
        h = scn.channels[i, k]
        own = h @ q_e[k] @ h.conj().T
        w_e.append(eye + (edge_cov[i] - own) + cloud_cov[i])

    w_a = []
    for i in range(n_a):
        served_edge = np.zeros((m_a, m_a), dtype=np.complex128)
        for k in scn.served[i]:
            h = scn.channels[i, k]
            served_edge += h @ q_e[k] @ h.conj().T
        w_a.append(eye + (edge_cov[i] - served_edge) + cloud_cov[i])

    if w is None:
        return w_e, w_a, None

    dim = n_a * m_a
    base = sigma2 * np.eye(dim, dtype=np.complex128) + w.stacked()
    total_cloud = np.zeros((dim, dim), dtype=np.complex128)
    stacked = [scn.stacked_channel(k) for k in range(n_i)]
    for k in range(n_i):
        total_cloud += stacked[k] @ q_c[k] @ stacked[k].conj().T
    w_c = []
    for k in range(n_i):
        own = stacked[k] @ q_c[k] @ stacked[k].conj().T
        w_c.append(base + (total_cloud - own))
    return w_e, w_a, w_c


def _rate_logdet(w_intf: np.ndarray, h: np.ndarray, q_cov: np.ndarray) -> float:
    """log2 det(I + W^-1 H Q H^H) via the stable logdet difference."""
    signal = h @ q_cov @ h.conj().T
    return logdet2(w_intf + signal) - logdet2(w_intf)


def edge_rate(scn: Scenario, q: TransmitCovariances, k: int) -> float:
    """Achievable rate (bits/s) of ID k's edge-decoded stream at AP i_k."""
    w_e, _, _ = interference_covariances(scn, q, None)
    i = int(scn.association[k])
    return scn.system.bandwidth_hz * _rate_logdet(w_e[k], scn.channels[i, k],
                                                  q.q_e(k))


def cloud_rate(scn: Scenario, q: TransmitCovariances,
               w: QuantizerCovariances, k: int) -> float:
    """Achievable rate (bits/s) of ID k's cloud-decoded stream."""
    _, _, w_c = interference_covariances(scn, q, w)
    return scn.system.bandwidth_hz * _rate_logdet(w_c[k], scn.stacked_channel(k),
                                                  q.q_c(k))


def compression_rate(scn: Scenario, q: TransmitCovariances,
                     w: QuantizerCovariances, i: int) -> float:
    """Fronthaul compression rate of AP i in bits per symbol.

    g_i = log2 det(I + Omega_i^-1 W_A[i]), evaluated as the logdet
    difference log2 det(Omega + W_A) - log2 det(Omega).
    """
    _, w_a, _ = interference_covariances(scn, q, None)
    omega = w.omega[i]
    return logdet2(omega + w_a[i]) - logdet2(omega)


def iteration_bounds(fl: FLConfig, eta_l: float) -> tuple[float, float]:
    """Lower bounds on the local and global iteration counts at accuracy eta_l."""
    if not 0.0 < eta_l < 1.0:
        raise ValueError("eta_l must lie in (0, 1)")
    n_l = -fl.v_l * math.log2(eta_l)
    n_g = fl.v_g / (1.0 - eta_l)
    return n_l, n_g


def _all_rates(scn: Scenario, q: TransmitCovariances,
               w: QuantizerCovariances | None):
    """Vector of true rates: (r_e bits/s, r_c bits/s, g bits/symbol)."""
    sys = scn.system
    w_e, w_a, w_c = interference_covariances(scn, q, w)
    r_e = np.empty(sys.n_ids)
    r_c = np.zeros(sys.n_ids)
    for k in range(sys.n_ids):
        i = int(scn.association[k])
        r_e[k] = sys.bandwidth_hz * _rate_logdet(w_e[k], scn.channels[i, k],
                                                 q.q_e(k))
        if w_c is not None:
            r_c[k] = sys.bandwidth_hz * _rate_logdet(
                w_c[k], scn.stacked_channel(k), q.q_c(k))
    if w is None:
        g = np.zeros(sys.n_aps)
    else:
        g = np.array([logdet2(w.omega[i] + w_a[i]) - logdet2(w.omega[i])
                      for i in range(sys.n_aps)])
    return r_e, r_c, g


def latency_breakdown(scn: Scenario, q: TransmitCovariances,
                      w: QuantizerCovariances | None, bits: BitSplit,
                      eta_l: float) -> LatencyReport:
    """Completion time at a given operating point, iteration counts at bound.

    Splits with zero bits contribute no upload latency regardless of their
    rate. Passing ``w=None`` models the no-quantized-forwarding variant in
    which the fronthaul carries only the decoded edge bits.
    """
    sys, fl = scn.system, scn.fl
    n_l, n_g = iteration_bounds(fl, eta_l)
    # IDs are homogeneous in (samples, cpu), so the worst-case max is flat.
    tau_c = n_l * fl.cycles_per_sample * fl.samples_per_id / fl.cpu_hz

    r_e, r_c, g = _all_rates(scn, q, w)
    d_e, d_c = bits.d_e, bits.d_c

    tau_w = 0.0
    for k in range(sys.n_ids):
        for d, r in ((d_e[k], r_e[k]), (d_c[k], r_c[k])):
            if d <= 0.0:
                continue
            if r <= 0.0:
                raise ValueError(f"unservable split: {d:.3g} bits at zero rate")
            tau_w = max(tau_w, d / r)

    tau_f = 0.0
    for i in range(sys.n_aps):
        edge_bits = float(d_e[scn.served[i]].sum())
        quant_bits = sys.bandwidth_hz * tau_w * g[i] if w is not None else 0.0
        tau_f = max(tau_f, (edge_bits + quant_bits) / sys.fronthaul_bps)

    tau_total = n_g * (tau_c + tau_w + tau_f)
    return LatencyReport(tau_c=tau_c, tau_w=tau_w, tau_f=tau_f,
                         tau_total=tau_total, n_l=n_l, n_g=n_g,
                         n_l_ceil=math.ceil(n_l), n_g_ceil=math.ceil(n_g),
                         eta_l=eta_l, r_e=r_e, r_c=r_c, r_f=g)
