"""Two-photon interference at a beam splitter and the polarization-resolving BSM."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr, roots_laguerre

from .source import HBAR, PhotonWavepacket, QDSource, Transition
from .states import BELL_ORDER, BellLabel

Config = Literal["parallel", "orthogonal"]

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def jitter_sigma(fwhm: float) -> float:
    """Gaussian standard deviation of a detector jitter quoted as FWHM."""
    return fwhm / FWHM_PER_SIGMA


def pair_jitter_sigma(sigma_detector: float) -> float:
    """Spread of a two-detector time difference."""
    return math.sqrt(2.0) * sigma_detector


def window_acceptance(delay, window: float, sigma: float = 0.0):
    """Probability that a true delay ``delay`` is measured within [-window, window].

    ``sigma`` is the standard deviation of the measured delay error.
    """
    delay = np.asarray(delay, dtype=float)
    if math.isinf(window):
        return np.ones_like(delay)
    if sigma <= 0:
        return (np.abs(delay) <= window).astype(float)
    return ndtr((window - delay) / sigma) - ndtr((-window - delay) / sigma)


# ---------------------------------------------------------------------------
# time-resolved coincidences


def hom_coincidence_density(wp1: PhotonWavepacket, wp2: PhotonWavepacket, detuning: float | None = None,
                            config: Config = "parallel", bs_reflectivity: float = 0.5) -> Callable:
    """Joint detection density for one photon at output c (t1) and one at d (t2).

    ``detuning`` is the energy of photon 2 minus photon 1 in ueV; by default
    it is taken from the wavepackets' central energies. Integrating over the
    whole (t1, t2) plane gives R^2 + T^2 - 2RT|overlap|^2 (parallel) or
    R^2 + T^2 (orthogonal).
    """
    if config not in ("parallel", "orthogonal"):
        raise ValueError(f"config must be 'parallel' or 'orthogonal', got {config!r}")
    R = bs_reflectivity
    T = 1.0 - R
    if detuning is None:
        detuning = wp2.central_energy - wp1.central_energy
    w = detuning / HBAR
    # carrier phases are dropped; only the relative detuning enters
    a = replace_energy(wp1, 0.0)
    b = replace_energy(wp2, 0.0)

    def density(t1, t2):
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        direct = R * R * a.emission_density(t1) * b.emission_density(t2) \
            + T * T * b.emission_density(t1) * a.emission_density(t2)
        if config == "orthogonal":
            return direct
        cross = a.coherence(t1, t2) * b.coherence(t2, t1) * np.exp(-1j * w * (t2 - t1))
        return np.maximum(direct - 2.0 * R * T * np.real(cross), 0.0)

    return density


def replace_energy(wp: PhotonWavepacket, energy: float) -> PhotonWavepacket:
    return replace(wp, central_energy=energy)


_LAG_X, _LAG_W = roots_laguerre(160)


def _time_scale(wp1: PhotonWavepacket, wp2: PhotonWavepacket) -> float:
    return 0.5 * min(wp1.lifetime, wp2.lifetime)


def delay_density(wp1: PhotonWavepacket, wp2: PhotonWavepacket, detuning: float | None = None,
                  config: Config = "parallel", bs_reflectivity: float = 0.5) -> Callable:
    """Coincidence density versus delay tau = t2 - t1 (no jitter).

    The integral over the absolute time is done with Gauss-Laguerre nodes
    scaled to the shortest lifetime.
    """
    dens = hom_coincidence_density(wp1, wp2, detuning, config, bs_reflectivity)
    scale = _time_scale(wp1, wp2)
    off = max(wp1.origin_time_offset, wp2.origin_time_offset, 0.0)

    def c(tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        start = np.maximum(0.0, -tau) + off
        t = start[:, None] + scale * _LAG_X[None, :]
        vals = dens(t, t + tau[:, None]) * np.exp(_LAG_X)[None, :]
        return scale * vals @ _LAG_W

    return c


def windowed_coincidences(wp1: PhotonWavepacket, wp2: PhotonWavepacket, window: float,
                          config: Config = "parallel", detuning: float | None = None,
                          bs_reflectivity: float = 0.5, jitter: float = 0.0) -> float:
    """Coincidence probability with measured |delay| <= window.

    ``jitter`` is the per-detector Gaussian standard deviation in ps.
    """
    c = delay_density(wp1, wp2, detuning, config, bs_reflectivity)
    sig = pair_jitter_sigma(jitter)

    def f(tau):
        return float(c(tau)[0] * window_acceptance(tau, window, sig))

    reach = 60.0 * max(wp1.mean_emission_time(), wp2.mean_emission_time())
    lim = reach if math.isinf(window) else min(reach, window + 10 * sig + 1e-9)
    lo, _ = integrate.quad(f, -lim, 0.0, limit=400, epsabs=1e-13, epsrel=1e-10)
    hi, _ = integrate.quad(f, 0.0, lim, limit=400, epsabs=1e-13, epsrel=1e-10)
    return lo + hi


def visibility_analytic(wp1: PhotonWavepacket, wp2: PhotonWavepacket, window: float = math.inf,
                        detuning: float | None = None, bs_reflectivity: float = 0.5,
                        jitter: float = 0.0, g2: float = 0.0) -> float:
    """Raw visibility 1 - C_par/C_perp within a window, straight from the model.

    Multiphoton emission adds uncorrelated coincidences to the parallel
    configuration at ``2 * g2`` of the orthogonal rate.
    """
    par = windowed_coincidences(wp1, wp2, window, "parallel", detuning, bs_reflectivity, jitter)
    perp = windowed_coincidences(wp1, wp2, window, "orthogonal", detuning, bs_reflectivity, jitter)
    if perp <= 0:
        raise ValueError("no orthogonal coincidences inside the window")
    return 1.0 - (par + 2.0 * g2 * perp) / perp


def calibrate_dephasing(source: QDSource, transition: Transition, target: float,
                        bs_reflectivity: float = 0.5, jitter_fwhm: float = 0.0,
                        bounds: tuple[float, float] = (1.0, 1e5)) -> float:
    """Pure-dephasing time that puts the full-window raw visibility on ``target``.

    Two copies of the source's photon interfere; the multiphoton term uses
    the source's g2.
    """
    key = "dephasing_x" if transition == "X" else "dephasing_xx"

    def excess(td):
        wp = PhotonWavepacket.from_source(source.replace(**{key: td}), transition)
        return visibility_analytic(wp, wp, math.inf, 0.0, bs_reflectivity,
                                   jitter_sigma(jitter_fwhm), source.g2_zero) - target

    lo, hi = bounds
    if excess(lo) > 0 or excess(hi) < 0:
        raise ValueError(f"target visibility {target} not reachable by dephasing alone")
    return optimize.brentq(excess, lo, hi, xtol=1e-9, rtol=1e-12)


# ---------------------------------------------------------------------------
# histograms


@dataclass
class CoincidenceHistogram:
    bin_width: float
    delays: np.ndarray  # bin centres, ps
    counts: np.ndarray
    config: Config = "parallel"

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if self.delays.shape != self.counts.shape:
            raise ValueError("delays and counts differ in length")

    def integrate(self, window: float) -> float:
        """Counts within [-window, window], splitting partially covered bins."""
        lo = self.delays - self.bin_width / 2
        hi = self.delays + self.bin_width / 2
        overlap = np.clip(np.minimum(hi, window) - np.maximum(lo, -window), 0, None)
        return float(np.sum(self.counts * overlap / self.bin_width))


def simulate_hom(wp1: PhotonWavepacket, wp2: PhotonWavepacket, detuning: float | None = None,
                 bs_reflectivity: float = 0.5, jitter: float = 0.0, g2: float = 0.0,
                 bin_width: float = 2.0, max_delay: float = 200.0, total: float = 1.0,
                 seed: int | None = None) -> tuple[CoincidenceHistogram, CoincidenceHistogram]:
    """Parallel and orthogonal delay histograms.

    Counts are expected values scaled so the orthogonal histogram holds
    ``total`` coincidences over all delays; with ``seed`` they are Poisson
    sampled instead.
    """
    nb = int(round(2 * max_delay / bin_width))
    edges = -max_delay + bin_width * np.arange(nb + 1)
    centres = 0.5 * (edges[1:] + edges[:-1])
    sig = pair_jitter_sigma(jitter)
    step = min(bin_width, max(sig, 0.25)) / 8
    reach = max_delay + 8 * sig + 20 * max(wp1.lifetime, wp2.lifetime)
    tau = np.arange(-reach, reach + step / 2, step)

    out = {}
    for config in ("parallel", "orthogonal"):
        c = delay_density(wp1, wp2, detuning, config, bs_reflectivity)(tau) * step
        if sig > 0:
            cdf = ndtr((edges[None, :] - tau[:, None]) / sig)
            binned = c @ (cdf[:, 1:] - cdf[:, :-1])
        else:
            binned, _ = np.histogram(tau, bins=edges, weights=c)
        out[config] = binned
    norm = total / (bs_reflectivity ** 2 + (1 - bs_reflectivity) ** 2)
    perp = out["orthogonal"] * norm
    par = out["parallel"] * norm + 2.0 * g2 * perp
    if seed is not None:
        rng = np.random.default_rng(seed)
        par = rng.poisson(par).astype(float)
        perp = rng.poisson(perp).astype(float)
    return (CoincidenceHistogram(bin_width, centres, par, "parallel"),
            CoincidenceHistogram(bin_width, centres, perp, "orthogonal"))


def hom_visibility(histos: tuple[CoincidenceHistogram, CoincidenceHistogram], window: float) -> float:
    """V = 1 - C_par / C_perp integrated over [-window, window]."""
    par, perp = histos
    if par.bin_width != perp.bin_width or not np.allclose(par.delays, perp.delays):
        raise ValueError("histograms must share the same binning")
    if window < par.bin_width:
        raise ValueError("window must be at least one bin wide")
    c_perp = perp.integrate(window)
    if c_perp <= 0:
        raise ZeroDivisionError("visibility undefined: no orthogonal counts in window")
    return 1.0 - par.integrate(window) / c_perp


def corrected_visibility(v_raw: float, g2: float = 0.0, bs_imbalance: float = 0.0) -> float:
    """Remove multiphoton and beam-splitter contributions from a raw visibility.

    Inverts the forward model used in :func:`visibility_analytic`:
    V_raw = V * 2RT/(R^2+T^2) - 2 g2 with R = 1/2 + bs_imbalance. Written as
    v_raw + c_g2 + c_bs; the result is capped at 1.
    """
    R = 0.5 + bs_imbalance
    T = 1.0 - R
    if not 0 < R < 1:
        raise ValueError("bs_imbalance must keep the reflectivity inside (0, 1)")
    k = (R * R + T * T) / (2 * R * T)
    c_g2 = 2.0 * g2 * k
    c_bs = v_raw * (k - 1.0)
    return min(v_raw + c_g2 + c_bs, 1.0)


# ---------------------------------------------------------------------------
# Bell-state measurement station

DETECTORS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class BsmStation:
    """Beam splitter followed by one PBS on each output and four detectors.

    ``ports`` maps each detector to (BS output, polarization). The default
    places A/C on output c (H/V) and D/B on output d (H/V), which makes the
    AB and CD coincidences herald Psi- and AC, BD herald Psi+.
    ``pbs_extinction`` is the probability that a photon leaks into the wrong
    PBS port. ``detector_jitter_fwhm`` is per detector, in ps.
    """

    bs_reflectivity: float = 0.5
    pbs_extinction: float = 0.0
    detector_jitter_fwhm: float = 15.0
    ports: tuple[tuple[str, str, str], ...] = (
        ("A", "c", "H"), ("C", "c", "V"), ("D", "d", "H"), ("B", "d", "V"))
    herald_map: tuple[tuple[str, str], ...] = (
        ("AB", "PsiMinus"), ("CD", "PsiMinus"), ("AC", "PsiPlus"), ("BD", "PsiPlus"))

    def __post_init__(self):
        if not 0 < self.bs_reflectivity < 1:
            raise ValueError("bs_reflectivity must lie in (0, 1)")
        if not 0 <= self.pbs_extinction < 0.5:
            raise ValueError("pbs_extinction must lie in [0, 0.5)")
        if self.detector_jitter_fwhm < 0:
            raise ValueError("jitter must be >= 0")
        labels = [p[0] for p in self.ports]
        if sorted(labels) != sorted(DETECTORS):
            raise ValueError("ports must assign each of A, B, C, D once")
        seen = set()
        for pattern, label in self.herald_map:
            key = frozenset(pattern)
            if len(key) != 2 or not key <= set(DETECTORS):
                raise ValueError(f"bad herald pattern {pattern!r}")
            if key in seen:
                raise ValueError(f"pattern {pattern!r} assigned twice")
            if BellLabel.parse(label) not in (BellLabel.PSI_PLUS, BellLabel.PSI_MINUS):
                raise ValueError("a linear-optics BSM heralds only Psi+ and Psi-")
            seen.add(key)

    @property
    def jitter_sigma(self) -> float:
        return jitter_sigma(self.detector_jitter_fwhm)

    def port(self, detector: str) -> tuple[str, str]:
        for name, out, pol in self.ports:
            if name == detector:
                return out, pol
        raise KeyError(f"unknown detector label {detector!r}")

    def herald_for(self, d1: str, d2: str) -> BellLabel | None:
        key = frozenset((d1, d2))
        for pattern, label in self.herald_map:
            if frozenset(pattern) == key:
                return BellLabel.parse(label)
        return None

    def patterns(self, herald: BellLabel) -> list[tuple[str, str]]:
        herald = BellLabel.parse(herald)
        return [(p[0], p[1]) for p, l in self.herald_map if BellLabel.parse(l) is herald]

    def ideal(self) -> "BsmStation":
        """Same station with a balanced BS and perfect PBSs."""
        return replace(self, bs_reflectivity=0.5, pbs_extinction=0.0)

    def bs_amplitude(self, source_port: str, output: str) -> float:
        """Beam-splitter amplitude; input a carries source 1, b carries source 2."""
        r = math.sqrt(self.bs_reflectivity)
        t = math.sqrt(1.0 - self.bs_reflectivity)
        table = {("a", "c"): r, ("a", "d"): t, ("b", "c"): t, ("b", "d"): -r}
        return table[(source_port, output)]

    def pbs_amplitude(self, pol: str, port_pol: str) -> float:
        """Amplitude for a photon of polarization ``pol`` to exit the ``port_pol`` port.

        The photon keeps its polarization in either port, so leakage adds
        incoherently to the detection probability.
        """
        e = self.pbs_extinction
        return math.sqrt(1.0 - e) if pol == port_pol else math.sqrt(e)

    def detector_amplitudes(self) -> np.ndarray:
        """amp[source, pol, detector] for a photon from source 0/1 with pol H/V."""
        amp = np.zeros((2, 2, 4))
        for k, det in enumerate(DETECTORS):
            out, port_pol = self.port(det)
            for j, src in enumerate("ab"):
                for p, pol in enumerate("HV"):
                    amp[j, p, k] = self.bs_amplitude(src, out) * self.pbs_amplitude(pol, port_pol)
        return amp


def bsm_herald(detections: Sequence[tuple[str, float]], window: float,
               station: BsmStation | None = None) -> BellLabel | None:
    """Bell label heralded by a set of (detector, time) clicks, or None.

    Only two clicks on an allowed detector pair with |t1 - t2| <= window herald.
    """
    station = station or BsmStation()
    for det, _ in detections:
        station.port(det)
    if len(detections) != 2:
        return None
    (d1, t1), (d2, t2) = detections
    if d1 == d2 or abs(t1 - t2) > window:
        return None
    return station.herald_for(d1, d2)


def bsm_herald_batch(det1, det2, t1, t2, window: float, station: BsmStation | None = None) -> np.ndarray:
    """Vectorized :func:`bsm_herald` for two-click events.

    ``det1``/``det2`` are detector indices into ``DETECTORS``. Returns the
    index of the heralded label in ``BELL_ORDER``, or -1.
    """
    station = station or BsmStation()
    table = np.full((4, 4), -1, dtype=int)
    for i, a in enumerate(DETECTORS):
        for j, b in enumerate(DETECTORS):
            if i != j:
                label = station.herald_for(a, b)
                if label is not None:
                    table[i, j] = BELL_ORDER.index(label)
    det1 = np.asarray(det1, dtype=int)
    det2 = np.asarray(det2, dtype=int)
    code = table[det1, det2]
    inside = np.abs(np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float)) <= window
    return np.where(inside, code, -1)


def apply_jitter(times, sigma: float, seed: int | np.random.Generator | None = 0) -> np.ndarray:
    """Add independent Gaussian timing errors of standard deviation ``sigma``."""
    times = np.asarray(times, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return times.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return times + rng.normal(0.0, sigma, size=times.shape)
