"""Quantum-dot biexciton-exciton cascade sources.

Energies are in ueV, times in ps, electric fields in kV/cm.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import erf

from .states import ket_to_dm, validate_dm, white_noise

HBAR = 658.2119569  # ueV ps

Transition = Literal["X", "XX"]


class UntunablePairError(ValueError):
    """No field inside the actuator range brings the two transitions into resonance."""


class FieldOutOfRangeError(ValueError):
    pass


@dataclass(frozen=True)
class QDSource:
    """Physical parameters of one strain-tunable dot.

    ``x_energy``/``xx_energy`` are zero-field transition energies, stored as
    offsets from a common reference. ``dephasing_x``/``dephasing_xx`` are pure
    dephasing times (``inf`` for none). ``noise_floor`` is the white-noise
    admixture of the pair state that is *not* due to multiphoton emission.
    ``timing_correlated=False`` replaces the cascade by two independently
    timed photons (each an exponential from the pump), which removes the
    energy-time correlation; it exists for ideal-limit comparisons.
    """

    name: str = "QD"
    x_energy: float = 0.0
    xx_energy: float = -4000.0
    slope_x: float = 0.0
    slope_xx: float = 0.0
    x_lifetime: float = 25.0
    xx_lifetime: float = 16.0
    fss: float = 0.0
    purcell_x: float = 1.0
    purcell_xx: float = 1.0
    g2_zero: float = 0.0
    blinking_on_fraction: float = 1.0
    efficiency_x: float = 1.0
    efficiency_xx: float = 1.0
    noise_floor: float = 0.0
    dephasing_x: float = math.inf
    dephasing_xx: float = math.inf
    field_range: tuple[float, float] = (-20.0, 20.0)
    timing_correlated: bool = True

    def __post_init__(self):
        if not (self.x_lifetime > 0 and self.xx_lifetime > 0):
            raise ValueError("lifetimes must be positive")
        if self.fss < 0:
            raise ValueError("fss must be >= 0")
        if not (0 <= self.g2_zero < 1):
            raise ValueError("g2_zero must lie in [0, 1)")
        if not (0 < self.blinking_on_fraction <= 1):
            raise ValueError("blinking_on_fraction must lie in (0, 1]")
        for name in ("efficiency_x", "efficiency_xx"):
            if not (0 < getattr(self, name) <= 1):
                raise ValueError(f"{name} must lie in (0, 1]")
        if not (0 <= self.noise_floor <= 1):
            raise ValueError("noise_floor must lie in [0, 1]")
        if not (self.dephasing_x > 0 and self.dephasing_xx > 0):
            raise ValueError("dephasing times must be positive (inf for none)")
        lo, hi = self.field_range
        if not lo < hi:
            raise ValueError("field_range must be (min, max) with min < max")

    def lifetime(self, transition: Transition) -> float:
        return self.x_lifetime if transition == "X" else self.xx_lifetime

    def dephasing(self, transition: Transition) -> float:
        return self.dephasing_x if transition == "X" else self.dephasing_xx

    def replace(self, **changes) -> "QDSource":
        return replace(self, **changes)


def _check_transition(transition: str) -> Transition:
    if transition not in ("X", "XX"):
        raise ValueError(f"transition must be 'X' or 'XX', got {transition!r}")
    return transition  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# polarization state of the pair


def fss_phase(source: QDSource, tau):
    """Relative HH/VV phase accumulated during an exciton dwell time ``tau``."""
    return source.fss * np.asarray(tau, dtype=float) / HBAR


def cascade_state(source: QDSource, tau: float) -> np.ndarray:
    """Pair state (XX photon, X photon) for an X emission delay ``tau`` after XX."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    phase = float(fss_phase(source, tau))
    return np.array([1, 0, 0, np.exp(1j * phase)], dtype=complex) / np.sqrt(2)


def multiphoton_noise(g2: float) -> float:
    """White-noise weight attributed to multiphoton emission.

    Linear order: each multiphoton event contributes an uncorrelated pair, and
    a g2 value contaminates coincidences at twice its rate.
    """
    return min(2.0 * g2, 1.0)


def noise_fraction(source: QDSource, include_g2: bool = True) -> float:
    eps_g2 = multiphoton_noise(source.g2_zero) if include_g2 else 0.0
    return 1.0 - (1.0 - source.noise_floor) * (1.0 - eps_g2)


def fss_coherence(source: QDSource) -> complex:
    """Exponential average of exp(-i S tau / hbar) over the exciton lifetime."""
    c = 1.0 / (1.0 + 1j * source.fss * source.x_lifetime / HBAR)
    if not source.timing_correlated:
        # independent emission times: the XX time enters with opposite sign
        c = c / (1.0 - 1j * source.fss * source.xx_lifetime / HBAR)
    return c


def time_averaged_pair_dm(source: QDSource, include_noise: bool = True,
                          include_g2: bool = True) -> np.ndarray:
    """Pair density matrix averaged over the exciton dwell time."""
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[3, 3] = 0.5
    c = 0.5 * fss_coherence(source)
    rho[0, 3] = c
    rho[3, 0] = np.conj(c)
    if include_noise:
        rho = white_noise(rho, noise_fraction(source, include_g2=include_g2))
    return validate_dm(rho)


def calibrate_noise_floor(source: QDSource, target_fef: float) -> float:
    """noise_floor that makes the time-averaged pair FEF equal ``target_fef``.

    The noise-free state has FEF 1/2 + |rho_HH,VV|; white noise of weight
    eps maps it to (1 - eps) FEF0 + eps/4, which is inverted in closed form.
    """
    c = abs(0.5 * fss_coherence(source))
    eps = (0.5 + c - target_fef) / (0.25 + c)
    floor = 1.0 - (1.0 - eps) / (1.0 - multiphoton_noise(source.g2_zero))
    if not 0.0 <= floor <= 1.0:
        raise ValueError(f"FEF {target_fef} is out of reach for this FSS and g2 (floor {floor:.4g})")
    return floor


def pair_dm_quadrature(source: QDSource, n_points: int = 1_000_000, t_max_factor: float = 60.0) -> np.ndarray:
    """Noise-free pair density matrix by direct numerical averaging over tau."""
    t = np.linspace(0.0, t_max_factor * source.x_lifetime, n_points)
    w = np.exp(-t / source.x_lifetime) / source.x_lifetime
    phase = np.exp(-1j * fss_phase(source, t))
    norm = trapezoid(w, t)
    c = 0.5 * trapezoid(w * phase, t) / norm
    rho = np.diag([0.5, 0, 0, 0.5]).astype(complex)
    rho[0, 3] = c
    rho[3, 0] = np.conj(c)
    return rho


def instantaneous_pair_dm(source: QDSource, tau: float) -> np.ndarray:
    return ket_to_dm(cascade_state(source, tau))


# ---------------------------------------------------------------------------
# energies and tuning


def tuned_energies(source: QDSource, field: float) -> tuple[float, float]:
    """(X, XX) transition energies at piezo field ``field``."""
    lo, hi = source.field_range
    if not lo - 1e-12 <= field <= hi + 1e-12:
        raise FieldOutOfRangeError(f"field {field} kV/cm outside actuator range [{lo}, {hi}]")
    return (source.x_energy + source.slope_x * field,
            source.xx_energy + source.slope_xx * field)


def transition_energy(source: QDSource, transition: Transition, field: float = 0.0) -> float:
    x, xx = tuned_energies(source, field)
    return x if _check_transition(transition) == "X" else xx


def tuning_range(source: QDSource, transition: Transition = "X") -> float:
    """Total energy shift of a transition over the full actuator sweep."""
    lo, hi = source.field_range
    slope = source.slope_x if _check_transition(transition) == "X" else source.slope_xx
    return abs(slope) * (hi - lo)


def find_resonance_field(fixed: QDSource, tuned: QDSource, transition: Transition,
                         fixed_field: float = 0.0) -> float:
    """Field on ``tuned`` that brings its transition onto that of ``fixed``."""
    transition = _check_transition(transition)
    slope = tuned.slope_x if transition == "X" else tuned.slope_xx
    if slope == 0:
        raise UntunablePairError(f"{tuned.name} has zero {transition} tuning slope")
    target = transition_energy(fixed, transition, fixed_field)
    zero = tuned.x_energy if transition == "X" else tuned.xx_energy
    f = (target - zero) / slope
    lo, hi = tuned.field_range
    if not lo <= f <= hi:
        raise UntunablePairError(
            f"{transition} detuning {target - zero:.3f} ueV needs {f:.3f} kV/cm, "
            f"outside actuator range [{lo}, {hi}]")
    return float(f)


def detuning(source1: QDSource, source2: QDSource, transition: Transition,
             field2: float, field1: float = 0.0) -> float:
    """Energy of source2's transition minus source1's, in ueV."""
    return transition_energy(source2, transition, field2) - transition_energy(source1, transition, field1)


# ---------------------------------------------------------------------------
# pair matching statistics

SpreadKind = Literal["std", "fwhm", "mean_abs_dev"]

_GAUSS_FWHM = 2.0 * math.sqrt(2.0 * math.log(2.0))


def spread_to_sigma(spread: float, kind: SpreadKind = "mean_abs_dev") -> float:
    """Gaussian standard deviation for a quoted spread of transition energies."""
    if kind == "std":
        return spread
    if kind == "fwhm":
        return spread / _GAUSS_FWHM
    if kind == "mean_abs_dev":
        return spread * math.sqrt(math.pi / 2.0)
    raise ValueError(f"unknown spread kind {kind!r}")


def pair_match_exact(spread: float, tuning_range: float, kind: SpreadKind = "mean_abs_dev") -> float:
    """Closed form of :func:`pair_match_probability` for the Gaussian model."""
    sigma = spread_to_sigma(spread, kind)
    if math.isinf(tuning_range):
        return 1.0
    return float(erf(tuning_range / (2.0 * sigma)))


_SHARD = 250_000


def pair_match_probability(spread: float, tuning_range: float, n_samples: int = 1_000_000,
                           seed: int = 0, kind: SpreadKind = "mean_abs_dev",
                           threads: int = 1) -> float:
    """Monte Carlo probability that two dots can be tuned onto one energy.

    X energies of both dots are drawn from a Gaussian whose width follows
    ``kind``; a pair matches when the energies differ by at most
    ``tuning_range``. Samples are split into fixed shards, each with a
    substream spawned from ``seed``, so ``threads`` never changes the result.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    sigma = spread_to_sigma(spread, kind)
    sizes = [_SHARD] * (n_samples // _SHARD)
    if n_samples % _SHARD:
        sizes.append(n_samples % _SHARD)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def count(args) -> int:
        ss, n = args
        rng = np.random.default_rng(ss)
        e = rng.normal(0.0, sigma, size=(2, n))
        return int(np.count_nonzero(np.abs(e[0] - e[1]) <= tuning_range))

    jobs = list(zip(streams, sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = sum(pool.map(count, jobs))
    else:
        hits = sum(map(count, jobs))
    return hits / n_samples


# ---------------------------------------------------------------------------
# temporal modes


def _traced_correlation_second(s, s2, g_first, g_second, dw):
    """Correlation of the second cascade photon with the first traced out.

    Returns int_0^min(s,s2) f(u,s) f(u,s2) exp(-i dw u) du for the cascade
    amplitude f(u,v) = sqrt(g1 g2) exp(-g1 u/2 - g2 (v-u)/2), 0 < u < v.
    """
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    m = np.minimum(s, s2)
    kappa = (g_first - g_second) + 1j * np.asarray(dw)
    km = kappa * m
    small = np.abs(km) < 1e-9
    with np.errstate(invalid="ignore", divide="ignore"):
        integral = np.where(small, m * (1 - km / 2), -np.expm1(-km) / np.where(kappa == 0, 1, kappa))
    out = g_first * g_second * np.exp(-g_second * (s + s2) / 2) * integral
    return np.where(m > 0, out, 0.0)


def _traced_correlation_first(s, s2, g_first, g_second, dw):
    """Correlation of the first cascade photon with the second traced out.

    Returns int_max(s,s2)^inf f(s,v) f(s2,v) exp(-i dw v) dv.
    """
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    big = np.maximum(s, s2)
    kappa = g_second + 1j * np.asarray(dw)
    expo = -(g_first - g_second) * (s + s2) / 2 - kappa * big
    out = g_first * g_second * np.exp(expo) / kappa
    return np.where(np.minimum(s, s2) >= 0, out, 0.0)


def traced_correlation(source: QDSource, transition: Transition, s, s2, dw=0.0):
    """Cascade correlation of one photon at times ``s`` and ``s2``, partner traced.

    ``dw`` (rad/ps) is the frequency mismatch of the partner photon between
    the two branches being correlated; zero gives the ordinary first-order
    coherence (without carrier phase or pure dephasing).
    """
    g_first = 1.0 / source.xx_lifetime
    g_second = 1.0 / source.x_lifetime
    transition = _check_transition(transition)
    if not source.timing_correlated:
        g, g_partner = (g_second, g_first) if transition == "X" else (g_first, g_second)
        s = np.asarray(s, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        partner = g_partner / (g_partner + 1j * np.asarray(dw))
        out = g * np.exp(-g * (s + s2) / 2) * partner
        return np.where((s >= 0) & (s2 >= 0), out, 0.0)
    if transition == "X":
        return _traced_correlation_second(s, s2, g_first, g_second, dw)
    return _traced_correlation_first(s, s2, g_first, g_second, dw)


@dataclass(frozen=True)
class PhotonWavepacket:
    """Temporal mode of one photon.

    ``lifetime`` is the decay time of the emitting level. With ``onset`` set to
    ``"cascade"`` the photon is the second of a cascade and its emission starts
    after an exponential delay of ``partner_lifetime``; with ``"pump"`` it
    starts at the excitation pulse. ``partner_lifetime`` on a ``"pump"`` photon
    means it is the first photon of a cascade whose partner is traced out.
    """

    lifetime: float
    central_energy: float = 0.0
    onset: Literal["pump", "cascade"] = "pump"
    partner_lifetime: float | None = None
    dephasing_time: float = math.inf
    origin_time_offset: float = 0.0

    def __post_init__(self):
        if self.lifetime <= 0:
            raise ValueError("lifetime must be positive")
        if self.onset == "cascade" and self.partner_lifetime is None:
            raise ValueError("cascade onset requires partner_lifetime")

    @classmethod
    def from_source(cls, source: QDSource, transition: Transition, field: float = 0.0,
                    with_partner: bool = True) -> "PhotonWavepacket":
        transition = _check_transition(transition)
        energy = transition_energy(source, transition, field)
        if not source.timing_correlated:
            return cls(source.lifetime(transition), energy, "pump", None, source.dephasing(transition))
        if transition == "X":
            return cls(source.x_lifetime, energy, "cascade", source.xx_lifetime, source.dephasing_x)
        partner = source.x_lifetime if with_partner else None
        return cls(source.xx_lifetime, energy, "pump", partner, source.dephasing_xx)

    def _envelope(self, t, t2):
        t = np.asarray(t, dtype=float) - self.origin_time_offset
        t2 = np.asarray(t2, dtype=float) - self.origin_time_offset
        g = 1.0 / self.lifetime
        if self.onset == "cascade":
            return _traced_correlation_second(t, t2, 1.0 / self.partner_lifetime, g, 0.0)
        if self.partner_lifetime is not None:
            return _traced_correlation_first(t, t2, g, 1.0 / self.partner_lifetime, 0.0)
        ok = (t >= 0) & (t2 >= 0)
        return np.where(ok, g * np.exp(-g * (t + t2) / 2), 0.0)

    def emission_density(self, t):
        return np.real(self._envelope(t, t))

    def coherence(self, t, t2):
        """First-order coherence G(t, t2) including carrier phase and dephasing."""
        t = np.asarray(t, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        d = t - t2
        g = self._envelope(t, t2) * np.exp(-1j * self.central_energy * d / HBAR)
        if math.isfinite(self.dephasing_time):
            g = g * np.exp(-np.abs(d) / self.dephasing_time)
        return g

    def mean_emission_time(self) -> float:
        base = self.lifetime + (self.partner_lifetime if self.onset == "cascade" else 0.0)
        return self.origin_time_offset + base
