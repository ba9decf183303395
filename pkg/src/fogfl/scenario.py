"""Network instances: system/training configuration, topology and channels.

A scenario is generated deterministically from a 64-bit seed using the
counter-based Philox generator with explicit stream splitting:

  * stream 0 draws the device (ID) positions,
  * stream 1 draws the access-point (AP) positions,
  * stream 2 + i*n_ids + k draws the fading matrix of the (AP i, ID k) link.

IDs are drawn before APs so that growing ``n_aps`` keeps every ID position
and every existing AP position unchanged, which makes sweeps over the number
of APs comparable seed by seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

_MAX_PLACEMENT_ATTEMPTS = 10**6

SCHEMES = ("rate_split", "edge_only", "cloud_only")


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class SystemConfig:
    """Physical-layer and topology constants.

    Noise power is normalized to one; the transmit power budget is derived
    from the SNR so only the ratio matters. The reference gain is applied as
    a linear amplitude factor 10**(ref_gain_db/20) on the channel matrix.
    """

    n_ids: int
    n_aps: int = 2
    m_i: int = 1
    m_a: int = 2
    bandwidth_hz: float = 20e6
    fronthaul_bps: float = 100e6
    snr_db: float = 10.0
    noise_power: float = 1.0
    radius_m: float = 200.0
    min_sep_m: float = 10.0
    ref_gain_db: float = 10.0
    ref_dist_m: float = 50.0
    pathloss_exp: float = 3.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_ids", "n_aps", "m_i", "m_a"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("bandwidth_hz", "fronthaul_bps", "radius_m",
                     "noise_power", "ref_dist_m"):
            _positive(name, getattr(self, name))
        _positive("pathloss_exp", self.pathloss_exp)
        if not self.min_sep_m < self.radius_m:
            raise ValueError("min_sep_m must be smaller than radius_m")
        if int(self.seed) < 0:
            raise ValueError("seed must be a non-negative 64-bit integer")

    @property
    def p_tx(self) -> float:
        """Transmit power budget in linear units (noise_power * SNR)."""
        return self.noise_power * 10.0 ** (self.snr_db / 10.0)


@dataclass(frozen=True)
class FLConfig:
    """Training-loop constants of the federated learning task."""

    alpha: float = 2.0
    beta: float = 4.0
    delta: float = 0.25
    xi: float = 0.1
    eta_g: float = 1e-3
    samples_per_id: int = 500
    bits_per_model: float = 28e3
    cpu_hz: float = 3e9
    cycles_per_sample: float = 200.0

    def __post_init__(self):
        if not 0.0 < self.xi <= self.alpha / self.beta:
            raise ValueError("xi must lie in (0, alpha/beta]")
        if not 0.0 < self.eta_g < 1.0:
            raise ValueError("eta_g must lie in (0, 1)")
        if not (2.0 - self.beta * self.delta) * self.delta * self.alpha > 0.0:
            raise ValueError("(2-beta*delta)*delta*alpha must be positive")
        for name in ("samples_per_id", "bits_per_model", "cpu_hz",
                     "cycles_per_sample"):
            _positive(name, getattr(self, name))

    @property
    def v_l(self) -> float:
        """Local-iteration constant: n_l >= v_l * log2(1/eta_l)."""
        return 2.0 / ((2.0 - self.beta * self.delta) * self.delta * self.alpha)

    @property
    def v_g(self) -> float:
        """Global-iteration constant: n_g >= v_g / (1 - eta_l)."""
        return -(2.0 * self.beta**2 * math.log(self.eta_g)) / (self.alpha**2 * self.xi)


@dataclass(frozen=True)
class RunConfig:
    """Optimizer-facing options that ride along in config files."""

    scheme: str = "rate_split"
    e_th: float = 1e-4
    t_max: int = 100

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        _positive("e_th", self.e_th)
        if int(self.t_max) < 1:
            raise ValueError("t_max must be >= 1")


_INT_KEYS = {"n_ids", "n_aps", "m_i", "m_a", "seed", "samples_per_id", "t_max"}
_SYSTEM_KEYS = {f.name for f in fields(SystemConfig)}
_FL_KEYS = {f.name for f in fields(FLConfig)}
_RUN_KEYS = {f.name for f in fields(RunConfig)}


def parse_config(text: str) -> tuple[SystemConfig, FLConfig, RunConfig]:
    """Parse a flat ``key = value`` document ('#' starts a comment).

    Unknown keys are rejected. Missing keys take the documented defaults;
    ``n_ids`` has no default and must be present.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in values:
            raise ValueError(f"duplicate key {key!r}")
        values[key] = val

    unknown = set(values) - _SYSTEM_KEYS - _FL_KEYS - _RUN_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "n_ids" not in values:
        raise ValueError("n_ids required")

    def convert(key: str, val: str):
        if key == "scheme":
            return val
        try:
            return int(val) if key in _INT_KEYS else float(val)
        except ValueError:
            raise ValueError(f"malformed value for {key!r}: {val!r}") from None

    converted = {k: convert(k, v) for k, v in values.items()}
    system = SystemConfig(**{k: v for k, v in converted.items() if k in _SYSTEM_KEYS})
    fl = FLConfig(**{k: v for k, v in converted.items() if k in _FL_KEYS})
    run = RunConfig(**{k: v for k, v in converted.items() if k in _RUN_KEYS})
    return system, fl, run


@dataclass(frozen=True)
class Scenario:
    """Immutable network instance: geometry, channels and association."""

    system: SystemConfig
    fl: FLConfig
    id_positions: np.ndarray  # (n_ids, 2) meters
    ap_positions: np.ndarray  # (n_aps, 2) meters
    channels: np.ndarray      # (n_aps, n_ids, m_a, m_i) complex
    association: np.ndarray   # (n_ids,) serving AP index per ID
    served: tuple = field(init=False)  # served[i] = array of ID indices at AP i

    def __post_init__(self):
        sys = self.system
        if self.channels.shape != (sys.n_aps, sys.n_ids, sys.m_a, sys.m_i):
            raise ValueError("channel tensor shape mismatch")
        groups = tuple(
            np.flatnonzero(self.association == i) for i in range(sys.n_aps)
        )
        object.__setattr__(self, "served", groups)

    @property
    def n_ids(self) -> int:
        return self.system.n_ids

    @property
    def n_aps(self) -> int:
        return self.system.n_aps

    def channel(self, i: int, k: int) -> np.ndarray:
        return self.channels[i, k]

    def stacked_channel(self, k: int) -> np.ndarray:
        """All-AP channel of ID k, AP blocks stacked vertically."""
        return self.channels[:, k].reshape(self.n_aps * self.system.m_a,
                                           self.system.m_i)


def pathloss_amplitude(system: SystemConfig, dist_m: float) -> float:
    """Amplitude scale factor applied to the unit-variance fading matrix."""
    gain = 10.0 ** (system.ref_gain_db / 20.0)
    return gain * (dist_m / system.ref_dist_m) ** (-system.pathloss_exp / 2.0)


def _stream(seed: int, stream: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_positions(rng, count, radius, min_sep, existing, attempts):
    """Uniform-in-disc draws with pairwise rejection against min_sep."""
    placed = list(existing)
    out = []
    for _ in range(count):
        while True:
            attempts[0] += 1
            if attempts[0] > _MAX_PLACEMENT_ATTEMPTS:
                raise ValueError("infeasible geometry")
            r = radius * math.sqrt(rng.random())
            phi = 2.0 * math.pi * rng.random()
            p = np.array([r * math.cos(phi), r * math.sin(phi)])
            if all(np.hypot(*(p - q)) >= min_sep for q in placed):
                break
        placed.append(p)
        out.append(p)
    return np.array(out).reshape(count, 2)


def generate_scenario(system: SystemConfig, fl: FLConfig) -> Scenario:
    """Draw a reproducible topology and Rayleigh-faded channel matrices."""
    attempts = [0]
    id_pos = _draw_positions(_stream(system.seed, 0), system.n_ids,
                             system.radius_m, system.min_sep_m, [], attempts)
    ap_pos = _draw_positions(_stream(system.seed, 1), system.n_aps,
                             system.radius_m, system.min_sep_m,
                             list(id_pos), attempts)

    channels = np.empty((system.n_aps, system.n_ids, system.m_a, system.m_i),
                        dtype=np.complex128)
    for i in range(system.n_aps):
        for k in range(system.n_ids):
            rng = _stream(system.seed, 2 + i * system.n_ids + k)
            fading = (rng.standard_normal((system.m_a, system.m_i))
                      + 1j * rng.standard_normal((system.m_a, system.m_i)))
            fading /= math.sqrt(2.0)
            dist = float(np.hypot(*(ap_pos[i] - id_pos[k])))
            channels[i, k] = pathloss_amplitude(system, dist) * fading

    dists = np.linalg.norm(id_pos[None, :, :] - ap_pos[:, None, :], axis=-1)
    association = np.argmin(dists, axis=0).astype(np.int64)
    return Scenario(system=system, fl=fl, id_positions=id_pos,
                    ap_positions=ap_pos, channels=channels,
                    association=association)


def with_seed(scn: Scenario, seed: int) -> Scenario:
    return generate_scenario(replace(scn.system, seed=seed), scn.fl)
