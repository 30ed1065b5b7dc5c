"""Event-by-event simulation of the swapping experiment.

Each shot draws the classical variables of both sources (kept-photon
emission time, white-noise branch, pure-dephasing phase jumps), which leaves
every source in a pure photon-pair state. Detection times and a detector
pattern are then drawn from a proposal density, the exact two-photon
amplitude of that outcome is evaluated, and the conditional kept-pair state
is accumulated with its importance weight. Jitter and the coincidence window
act on the sampled detection times exactly as in the experiment.

This path shares no integration code with :mod:`qdswap.swap` and serves as
its oracle.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .interference import DETECTORS, apply_jitter, bsm_herald_batch
from .source import HBAR, QDSource, Transition, noise_fraction, transition_energy
from .states import BELL_ORDER, BellLabel, validate_dm
from .swap import InsufficientStatisticsError, SwapScenario, _check_resonance

CHUNK = 50_000
MIN_SHOTS = 100_000


@dataclass(frozen=True)
class _Emitter:
    """Frequencies (rad/ps), rates (1/ps) and noise of one source."""

    w_bsm: np.ndarray  # per polarization branch
    w_kept: np.ndarray
    w_mean: float
    noise: float
    dephasing: float
    g_xx: float
    g_x: float
    bsm: Transition
    correlated: bool

    @classmethod
    def build(cls, source: QDSource, bsm: Transition, field: float, reference: float,
              include_g2: bool) -> "_Emitter":
        e_bsm = transition_energy(source, bsm, field) - reference
        s = source.fss / 2.0
        x_split = np.array([s, -s])  # H, V of the X photon
        if bsm == "X":
            w_bsm, w_kept = (e_bsm + x_split) / HBAR, -x_split / HBAR
        else:
            w_bsm, w_kept = (e_bsm - x_split) / HBAR, x_split / HBAR
        return cls(w_bsm, w_kept, e_bsm / HBAR, noise_fraction(source, include_g2),
                   source.dephasing(bsm), 1.0 / source.xx_lifetime, 1.0 / source.x_lifetime,
                   bsm, source.timing_correlated)

    def sample(self, rng: np.random.Generator, n: int) -> dict:
        """Kept time, BSM emission time and branch labels for ``n`` shots."""
        if not self.correlated:
            g_b, g_k = (self.g_x, self.g_xx) if self.bsm == "X" else (self.g_xx, self.g_x)
            kept = rng.exponential(1.0 / g_k, n)
            t = rng.exponential(1.0 / g_b, n)
            params = {"kind": "free", "rate": g_b}
        elif self.bsm == "X":
            kept = rng.exponential(1.0 / self.g_xx, n)
            t = kept + rng.exponential(1.0 / self.g_x, n)
            params = {"kind": "after", "rate": self.g_x}
        else:
            # X emission time: XX delay plus X delay; the XX time is redrawn
            # from its distribution conditioned on the X time
            kept = rng.exponential(1.0 / self.g_xx, n) + rng.exponential(1.0 / self.g_x, n)
            a = self.g_xx - self.g_x
            u = rng.random(n)
            if abs(a) < 1e-12:
                t = u * kept
            else:
                t = -np.log1p(-u * -np.expm1(-a * kept)) / a
            params = {"kind": "before", "rate": a}
        noisy = rng.random(n) < self.noise
        labels = rng.integers(0, 2, size=(2, n))
        return {"kept": kept, "t": t, "noisy": noisy, "k": labels[0], "b": labels[1], **params}

    def density(self, draw: dict, t) -> np.ndarray:
        """Conditional emission density of the BSM photon at times ``t``."""
        kept = draw["kept"]
        r = draw["rate"]
        if draw["kind"] == "free":
            return np.where(t >= 0, r * np.exp(-r * np.clip(t, 0, None)), 0.0)
        if draw["kind"] == "after":
            dt = t - kept
            return np.where(dt >= 0, r * np.exp(-r * np.clip(dt, 0, None)), 0.0)
        inside = (t >= 0) & (t <= kept)
        if abs(r) < 1e-12:
            return np.where(inside, 1.0 / kept, 0.0)
        norm = -np.expm1(-r * kept) / r
        return np.where(inside, np.exp(-r * np.clip(t, 0, None)) / norm, 0.0)

    def amplitudes(self, draw: dict, t) -> np.ndarray:
        """phi[n, k, b]: amplitude for kept polarization k, BSM polarization b, BSM photon at t."""
        n = t.shape[0]
        root = np.sqrt(self.density(draw, t))
        phi = np.zeros((n, 2, 2), dtype=complex)
        for p in range(2):
            phi[:, p, p] = (math.sqrt(0.5) * root
                            * np.exp(-1j * (self.w_kept[p] * draw["kept"] + self.w_bsm[p] * t)))
        noisy = draw["noisy"]
        if np.any(noisy):
            idx = np.flatnonzero(noisy)
            phi[idx] = 0.0
            phi[idx, draw["k"][idx], draw["b"][idx]] = root[idx] * np.exp(-1j * self.w_mean * t[idx])
        return phi


def _phase_jump(rng: np.random.Generator, gap, dephasing: float) -> np.ndarray:
    """Phase difference of a random-telegraph phase between two times ``gap`` apart."""
    n = gap.shape[0]
    if math.isinf(dephasing):
        return np.zeros(n)
    jumped = rng.random(n) >= np.exp(-np.abs(gap) / dephasing)
    return np.where(jumped, rng.uniform(0.0, 2 * np.pi, n), 0.0)


def _run_chunk(args) -> tuple[np.ndarray, int]:
    seq, n, e1, e2, amp, patterns, window, sigma, station, herald = args
    rng = np.random.default_rng(seq)
    d1 = e1.sample(rng, n)
    d2 = e2.sample(rng, n)
    # symmetrized proposal: either photon may be the first click
    swap = rng.random(n) < 0.5
    t1 = np.where(swap, d2["t"], d1["t"])
    t2 = np.where(swap, d1["t"], d2["t"])
    q = 0.5 * (e1.density(d1, t1) * e2.density(d2, t2) + e1.density(d1, t2) * e2.density(d2, t1))
    pick = rng.integers(0, len(patterns), n)
    det = np.asarray(patterns)[pick]
    det1, det2 = det[:, 0], det[:, 1]

    a1, b1 = e1.amplitudes(d1, t1), e1.amplitudes(d1, t2)
    a2, b2 = e2.amplitudes(d2, t2), e2.amplitudes(d2, t1)
    # pure dephasing: source j's phase at t1 relative to t2
    j1 = np.exp(1j * _phase_jump(rng, t1 - t2, e1.dephasing))
    j2 = np.exp(1j * _phase_jump(rng, t1 - t2, e2.dephasing))
    a1 = a1 * j1[:, None, None]
    b2 = b2 * j2[:, None, None]

    # amp[source, pol, detector]; a photon keeps its polarization o = b
    s1d1 = amp[0][:, det1].T  # (n, pol)
    s1d2 = amp[0][:, det2].T
    s2d1 = amp[1][:, det1].T
    s2d2 = amp[1][:, det2].T
    # A[n, k1, k2, o1, o2]
    direct = (s1d1[:, None, None, :, None] * a1[:, :, None, :, None]
              * s2d2[:, None, None, None, :] * a2[:, None, :, None, :])
    # photon from source 1 at d2 (time t2, pol o2), source 2 at d1 (time t1, pol o1)
    crossed = (s1d2[:, None, None, None, :] * b1[:, :, None, None, :]
               * s2d1[:, None, None, :, None] * b2[:, None, :, :, None])
    amp_out = (direct + crossed).reshape(n, 4, 4)

    measured = np.column_stack([t1, t2])
    if sigma > 0:
        measured = apply_jitter(measured, sigma, rng)
    labels = bsm_herald_batch(det1, det2, measured[:, 0], measured[:, 1], window, station)
    keep = labels == BELL_ORDER.index(herald)
    weight = np.zeros(n)
    weight[keep] = len(patterns) / q[keep]
    rho = np.einsum("n,nko,nlo->kl", weight, amp_out, amp_out.conj())
    return rho, int(np.count_nonzero(keep))


def swapped_state_montecarlo(scenario: SwapScenario, herald: BellLabel | str, window: float = math.inf,
                             n_shots: int = 1_000_000, seed: int = 0, threads: int = 1,
                             include_g2: bool = True, allow_detuned: bool = False,
                             return_unnormalized: bool = False):
    """Heralded kept-pair state estimated from ``n_shots`` simulated events.

    Returns ``(rho, herald_count)``. The result depends only on ``seed`` and
    ``n_shots``; ``threads`` changes wall-clock time only.
    """
    if n_shots < MIN_SHOTS:
        raise ValueError(f"n_shots must be at least {MIN_SHOTS}")
    herald = BellLabel.parse(herald)
    _check_resonance(scenario, allow_detuned)
    station = scenario.station
    ref = transition_energy(scenario.source1, scenario.bsm_photon, 0.0)
    e1 = _Emitter.build(scenario.source1, scenario.bsm_photon, 0.0, ref, include_g2)
    e2 = _Emitter.build(scenario.source2, scenario.bsm_photon, scenario.field, ref, include_g2)
    amp = station.detector_amplitudes()
    patterns = [(DETECTORS.index(a), DETECTORS.index(b)) for a, b in station.patterns(herald)]
    if not patterns:
        raise ValueError(f"station has no pattern for {herald}")
    sigma = station.jitter_sigma

    sizes = [CHUNK] * (n_shots // CHUNK)
    if n_shots % CHUNK:
        sizes.append(n_shots % CHUNK)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(sq, n, e1, e2, amp, patterns, window, sigma, station, herald) for sq, n in zip(seqs, sizes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    # fixed summation order keeps the result independent of scheduling
    rho = sum(p[0] for p in parts) / n_shots
    count = sum(p[1] for p in parts)
    if count == 0 or np.trace(rho).real <= 0:
        raise InsufficientStatisticsError("no heralded events; increase n_shots or the window")
    rho = 0.5 * (rho + rho.conj().T)
    if return_unnormalized:
        return rho, count
    return validate_dm(rho / np.trace(rho).real), count
