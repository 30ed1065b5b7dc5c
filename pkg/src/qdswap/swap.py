"""Heralded entanglement swapping between two cascade sources.

Photon labelling: each source emits a BSM photon (sent to the Bell-state
measurement) and a kept photon (sent to tomography). With ``bsm_photon="X"``
the exciton photons interfere and the biexciton pair carries the swapped
state, and vice versa. Kept-pair density matrices are ordered
(source 1, source 2) over (HH, HV, VH, VV).

The heralded state is built from each source's correlation tensor
G_j[(k, b), (k', b')](s, s'): the kept photon (polarization k) traced over
its emission time, the BSM photon (polarization b) correlated between
detection times s and s'. Coincidence amplitudes of both detector
assignments are contracted with these tensors and integrated over detection
times with the jitter-smeared window acceptance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import roots_laguerre

from .interference import DETECTORS, BsmStation, pair_jitter_sigma, window_acceptance
from .source import (HBAR, QDSource, Transition, noise_fraction, traced_correlation,
                     transition_energy)
from .states import BellLabel, fully_entangled_fraction, validate_dm

CLASSICAL_LIMIT = 0.5
QKD_THRESHOLD = 0.8

_PAIRS = [(i, j) for i in range(4) for j in range(4) if i < j]


class DetunedScenarioError(ValueError):
    """The interfering transitions of the two sources are not in resonance."""


class InsufficientStatisticsError(RuntimeError):
    pass


@dataclass(frozen=True)
class SwapScenario:
    """Two sources, the interfering transition, the BSM station and the piezo field.

    Source 1 is held at zero field; ``field`` is applied to source 2.
    """

    source1: QDSource
    source2: QDSource
    bsm_photon: Transition = "X"
    station: BsmStation = field(default_factory=BsmStation)
    field: float = 0.0
    windows: tuple[float, ...] = (math.inf,)
    rep_rate: float = 160.0  # MHz, effective
    resonance_tolerance: float = 1.0  # ueV

    def __post_init__(self):
        if self.bsm_photon not in ("X", "XX"):
            raise ValueError("bsm_photon must be 'X' or 'XX'")
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be positive")

    @property
    def kept_photon(self) -> Transition:
        return "XX" if self.bsm_photon == "X" else "X"

    def detuning(self) -> float:
        """Energy of source 2's BSM transition minus source 1's (ueV)."""
        return (transition_energy(self.source2, self.bsm_photon, self.field)
                - transition_energy(self.source1, self.bsm_photon, 0.0))

    @property
    def detuned(self) -> bool:
        return abs(self.detuning()) > self.resonance_tolerance

    def corrected(self) -> "SwapScenario":
        """Scenario without multiphoton emission and with an ideal BS and PBSs."""
        return replace(self, source1=self.source1.replace(g2_zero=0.0),
                       source2=self.source2.replace(g2_zero=0.0), station=self.station.ideal())


# ---------------------------------------------------------------------------
# per-source correlation tensors


@dataclass(frozen=True)
class _SourceModel:
    source: QDSource
    bsm: Transition
    bsm_energy: np.ndarray  # (H, V) ueV, relative to the common reference
    kept_energy: np.ndarray  # (H, V) ueV
    mean_bsm_energy: float
    dephasing: float
    noise: float

    @classmethod
    def build(cls, source: QDSource, bsm: Transition, field: float, reference: float,
              include_g2: bool = True) -> "_SourceModel":
        kept = "XX" if bsm == "X" else "X"
        half = source.fss / 2.0
        # X photon: H at E_X + S/2, V at E_X - S/2; XX photon the opposite
        sign = {"X": np.array([1.0, -1.0]), "XX": np.array([-1.0, 1.0])}
        e_bsm = transition_energy(source, bsm, field) - reference
        return cls(source, bsm, e_bsm + half * sign[bsm], half * sign[kept],
                   e_bsm, source.dephasing(bsm), noise_fraction(source, include_g2))

    def tensor(self, s, s2) -> np.ndarray:
        """G[..., k, b, k', b'] for BSM-photon times ``s`` and ``s2`` (broadcast)."""
        s = np.asarray(s, dtype=float)[..., None, None]
        s2 = np.asarray(s2, dtype=float)[..., None, None]
        shape = np.broadcast(s, s2).shape[:-2]
        w_kept = self.kept_energy / HBAR
        w_bsm = self.bsm_energy / HBAR
        dw = w_kept[:, None] - w_kept[None, :]
        corr = traced_correlation(self.source, self.bsm, s, s2, dw)
        phase = np.exp(-1j * (w_bsm[:, None] * s - w_bsm[None, :] * s2))
        g = np.zeros(shape + (2, 2, 2, 2), dtype=complex)
        p, q = _P, _Q
        g[..., p, p, q, q] = 0.5 * (1.0 - self.noise) * corr * phase
        if self.noise > 0:
            base = traced_correlation(self.source, self.bsm, s[..., 0, 0], s2[..., 0, 0], 0.0)
            base = 0.25 * self.noise * base * np.exp(-1j * self.mean_bsm_energy / HBAR
                                                     * (s[..., 0, 0] - s2[..., 0, 0]))
            g[..., p, q, p, q] += base[..., None, None]
        if math.isfinite(self.dephasing):
            g *= np.exp(-np.abs(s - s2)[..., 0, 0] / self.dephasing)[..., None, None, None, None]
        return g


_P, _Q = np.meshgrid([0, 1], [0, 1], indexing="ij")


def _source_models(scenario: SwapScenario, include_g2: bool = True) -> tuple[_SourceModel, _SourceModel]:
    ref = transition_energy(scenario.source1, scenario.bsm_photon, 0.0)
    m1 = _SourceModel.build(scenario.source1, scenario.bsm_photon, 0.0, ref, include_g2)
    m2 = _SourceModel.build(scenario.source2, scenario.bsm_photon, scenario.field, ref, include_g2)
    return m1, m2


def _pattern_coefficients(station: BsmStation, d1: int, d2: int) -> np.ndarray:
    """c[assignment, o1, o2, b1, b2] for clicks on detectors d1 (time t1) and d2 (time t2).

    Assignment 0 sends source 1's photon to d1 and source 2's to d2;
    assignment 1 swaps them. A PBS keeps the polarization of a leaked
    photon, so the polarizations o1, o2 arriving at d1, d2 are unobserved
    labels summed incoherently.
    """
    amp = station.detector_amplitudes()
    c = np.zeros((2, 2, 2, 2, 2))
    for b1 in range(2):
        for b2 in range(2):
            c[0, b1, b2, b1, b2] = amp[0, b1, d1] * amp[1, b2, d2]
            c[1, b2, b1, b1, b2] = amp[0, b1, d2] * amp[1, b2, d1]
    return c


def _detector_pairs(station: BsmStation, herald: BellLabel | None) -> list[tuple[int, int]]:
    if herald is None:
        return list(_PAIRS)
    return [(DETECTORS.index(a), DETECTORS.index(b)) for a, b in station.patterns(herald)]


_LAG_X, _LAG_W = roots_laguerre(96)


class _Integrand:
    """Unnormalized kept-pair state density at detection-time difference d."""

    def __init__(self, scenario: SwapScenario, include_g2: bool = True, n_nodes: int | None = None):
        self.m1, self.m2 = _source_models(scenario, include_g2)
        station = scenario.station
        self.coeffs = {pair: _pattern_coefficients(station, *pair) for pair in _PAIRS}
        # same-detector double clicks, used only for completeness checks
        self.bunched = [_pattern_coefficients(station, k, k) for k in range(4)]
        rates = []
        for m in (self.m1, self.m2):
            rates.append(1.0 / m.source.x_lifetime)
            rates.append(1.0 / m.source.xx_lifetime)
        self.scale = 1.0 / (2.0 * min(rates))
        if n_nodes is None:
            self.x, self.w = _LAG_X, _LAG_W
        else:
            self.x, self.w = roots_laguerre(n_nodes)
        self._paths = {}

    def weights(self, pairs, bunched: bool = False) -> np.ndarray:
        """Summed coefficient products M[s, a, b, t, c, d] over detector patterns."""
        m = sum(np.einsum("sxyab,txycd->sabtcd", self.coeffs[p], self.coeffs[p]) for p in pairs)
        if bunched:
            # both photons on one detector at t1 == t2 is a measure-zero set in
            # the (t1, t2) plane; the density counts both orderings as distinct
            m = m + 0.5 * sum(np.einsum("sxyab,txycd->sabtcd", c, c) for c in self.bunched)
        return m

    def tensors(self, t1, t2):
        """Source tensors indexed [assignment, assignment', node, k, b, k', b']."""
        # source 1 sees (t1, t2) under assignments (0, 1); source 2 the reverse
        a1 = np.stack([t1, t2])
        a2 = np.stack([t2, t1])
        g1 = self.m1.tensor(a1[:, None, :], a1[None, :, :])
        g2 = self.m2.tensor(a2[:, None, :], a2[None, :, :])
        return g1, g2

    def at_delay(self, d: float, coef: np.ndarray) -> np.ndarray:
        s = self.scale * self.x
        weight = self.scale * self.w * np.exp(self.x)
        t1 = np.concatenate([s, s + d])
        t2 = np.concatenate([s + d, s])
        weight = np.concatenate([weight, weight])
        g1, g2 = self.tensors(t1, t2)
        key = "path"
        if key not in self._paths:
            self._paths[key] = np.einsum_path(_SPEC, weight, coef, g1, g2, optimize="optimal")[0]
        rho = np.einsum(_SPEC, weight, coef, g1, g2, optimize=self._paths[key])
        return rho.reshape(4, 4)


_SPEC = "n,sabtcd,stnkaKc,stnlbLd->klKL"


def _integrate_window(integrand: _Integrand, pairs, window: float, sigma: float,
                      bunched: bool = False, epsrel: float = 1e-6) -> np.ndarray:
    coef = integrand.weights(pairs, bunched)

    def f(d):
        return integrand.at_delay(d, coef).reshape(-1) * float(window_acceptance(d, window, sigma))

    if math.isinf(window):
        upper = np.inf
    else:
        upper = window + 10.0 * sigma
    val, _ = integrate.quad_vec(f, 0.0, upper, epsrel=epsrel, epsabs=1e-14, limit=2000)
    val = val.reshape(4, 4)
    return 0.5 * (val + val.conj().T)


def _check_resonance(scenario: SwapScenario, allow_detuned: bool):
    if scenario.detuned and not allow_detuned:
        raise DetunedScenarioError(
            f"{scenario.bsm_photon} transitions detuned by {scenario.detuning():.3f} ueV "
            f"(tolerance {scenario.resonance_tolerance} ueV)")


def heralded_unnormalized(scenario: SwapScenario, herald: BellLabel | str | None, window: float,
                          include_g2: bool = True, allow_detuned: bool = False,
                          bunched: bool = False) -> np.ndarray:
    """Kept-pair state weighted by the herald probability (trace = probability).

    ``herald=None`` sums every two-detector pattern; with ``bunched`` the
    same-detector double clicks are added too, which makes the result the
    full, unconditioned state.
    """
    _check_resonance(scenario, allow_detuned)
    station = scenario.station
    integrand = _Integrand(scenario, include_g2)
    label = None if herald is None else BellLabel.parse(herald)
    pairs = _detector_pairs(station, label)
    sigma = pair_jitter_sigma(station.jitter_sigma)
    return _integrate_window(integrand, pairs, window, sigma, bunched)


def swapped_state_analytic(scenario: SwapScenario, herald: BellLabel | str, window: float = math.inf,
                           include_g2: bool = True, allow_detuned: bool = False) -> np.ndarray:
    """Heralded kept-pair density matrix for a post-selection window (ps)."""
    herald = BellLabel.parse(herald)
    if herald not in (BellLabel.PSI_MINUS, BellLabel.PSI_PLUS):
        raise ValueError("the station heralds only Psi+ and Psi-")
    rho = heralded_unnormalized(scenario, herald, window, include_g2, allow_detuned)
    p = np.trace(rho).real
    if p <= 0:
        raise InsufficientStatisticsError("herald probability is zero for this window")
    return validate_dm(rho / p)


def herald_probability(scenario: SwapScenario, herald: BellLabel | str, window: float = math.inf,
                       include_g2: bool = True, allow_detuned: bool = False) -> float:
    """Probability per emitted photon pair pair that the window sees this herald."""
    rho = heralded_unnormalized(scenario, herald, window, include_g2, allow_detuned)
    return float(np.trace(rho).real)


def unheralded_state(scenario: SwapScenario, allow_detuned: bool = True) -> np.ndarray:
    """Kept-pair state with the BSM outcome ignored.

    Sum over every detection outcome (heralds, non-heralding coincidences and
    double clicks) of the conditional states weighted by their probabilities.
    """
    rho = heralded_unnormalized(scenario, None, math.inf, allow_detuned=allow_detuned, bunched=True)
    return validate_dm(rho / np.trace(rho).real)


# ---------------------------------------------------------------------------
# window scans


@dataclass
class SwapResult:
    windows: np.ndarray
    states: dict[BellLabel, list[np.ndarray]]
    fef: dict[BellLabel, np.ndarray]
    herald_probability: dict[BellLabel, np.ndarray]
    rate_hz: np.ndarray
    corrected_fef: dict[BellLabel, np.ndarray] | None = None

    def table(self) -> list[dict]:
        rows = []
        for i, w in enumerate(self.windows):
            row = {"window_ps": float(w),
                   "f_psi_minus": float(self.fef[BellLabel.PSI_MINUS][i]),
                   "f_psi_plus": float(self.fef[BellLabel.PSI_PLUS][i]),
                   "rate_hz": float(self.rate_hz[i])}
            if self.corrected_fef is not None:
                row["f_corrected_psi_minus"] = float(self.corrected_fef[BellLabel.PSI_MINUS][i])
                row["f_corrected_psi_plus"] = float(self.corrected_fef[BellLabel.PSI_PLUS][i])
            rows.append(row)
        return rows


HERALDS = (BellLabel.PSI_MINUS, BellLabel.PSI_PLUS)


def fidelity_vs_window(scenario: SwapScenario, windows: Sequence[float] | None = None,
                       budget=None, corrected: bool = True, allow_detuned: bool = False) -> SwapResult:
    """Heralded states, FEF and four-fold rate for each post-selection window.

    ``budget`` is a :class:`qdswap.rates.RateBudget` for the full window; the
    rate column scales it by the fraction of heralds accepted by the window.
    """
    from .rates import calibrated_budget

    windows = np.asarray(scenario.windows if windows is None else windows, dtype=float)
    if windows.size == 0:
        raise ValueError("at least one window is required")
    if np.any(np.diff(windows) < 0):
        raise ValueError("windows must be ascending")
    states = {h: [] for h in HERALDS}
    fef = {h: np.empty(len(windows)) for h in HERALDS}
    prob = {h: np.empty(len(windows)) for h in HERALDS}
    for h in HERALDS:
        for i, w in enumerate(windows):
            rho = heralded_unnormalized(scenario, h, w, allow_detuned=allow_detuned)
            p = np.trace(rho).real
            rho = validate_dm(rho / p)
            states[h].append(rho)
            fef[h][i] = fully_entangled_fraction(rho)
            prob[h][i] = p
    full = sum(herald_probability(scenario, h, math.inf, allow_detuned=allow_detuned) for h in HERALDS)
    accepted = (prob[HERALDS[0]] + prob[HERALDS[1]]) / full
    if budget is None:
        budget = calibrated_budget(scenario)
    rate = budget.four_fold_rate * accepted
    corr = None
    if corrected:
        ideal = scenario.corrected()
        corr = {h: np.array([fully_entangled_fraction(
            swapped_state_analytic(ideal, h, w, allow_detuned=allow_detuned)) for w in windows])
            for h in HERALDS}
    return SwapResult(windows, states, fef, prob, rate, corr)


def ideal_sources(lifetime_x: float = 25.0, lifetime_xx: float = 16.0) -> tuple[QDSource, QDSource]:
    """Two identical, resonant, noise-free sources with zero FSS and uncorrelated emission times."""
    s = QDSource(name="ideal", x_lifetime=lifetime_x, xx_lifetime=lifetime_xx, timing_correlated=False)
    return s.replace(name="ideal-1"), s.replace(name="ideal-2")


def ideal_scenario(bsm_photon: Transition = "X", **kw) -> SwapScenario:
    s1, s2 = ideal_sources(**kw)
    station = BsmStation(bs_reflectivity=0.5, pbs_extinction=0.0, detector_jitter_fwhm=0.0)
    return SwapScenario(s1, s2, bsm_photon, station)
