"""Four-fold coincidence budget.

P_swap is the probability per excitation pulse that both sources emit a pair,
all four photons leave their sources and the BSM heralds. The rate adds the
transmission of the optical setup and the detector efficiencies, which are
kept apart from P_swap so that a source upgrade can be evaluated with the
setup unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .source import QDSource

SETUP_TRANSMISSION = 0.30  # fibres, gratings and polarization optics, per photon
DETECTOR_EFFICIENCY = 0.60
PAIR_GENERATION = 0.90  # two-photon excitation probability per pulse


@dataclass(frozen=True)
class RateBudget:
    """Named multiplicative factors.

    ``factors`` multiply into P_swap; ``setup`` only enters the rate.
    """

    factors: tuple[tuple[str, float], ...]
    setup: tuple[tuple[str, float], ...] = ()
    rep_rate: float = 160.0  # MHz

    def __post_init__(self):
        for name, value in self.factors + self.setup:
            if not 0 < value <= 1:
                raise ValueError(f"factor {name!r} = {value!r} must lie in (0, 1]")
        names = [n for n, _ in self.factors + self.setup]
        if len(set(names)) != len(names):
            raise ValueError("factor names must be unique")
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be positive")

    @property
    def p_swap(self) -> float:
        return math.prod(v for _, v in self.factors)

    @property
    def setup_efficiency(self) -> float:
        return math.prod(v for _, v in self.setup)

    @property
    def four_fold_rate(self) -> float:
        """Heralded four-fold coincidences per second."""
        return self.p_swap * self.setup_efficiency * self.rep_rate * 1e6

    def without(self, name: str) -> "RateBudget":
        """Budget with one factor set to 1."""
        if name not in dict(self.factors + self.setup):
            raise KeyError(name)
        return replace(self, factors=tuple(f for f in self.factors if f[0] != name),
                       setup=tuple(f for f in self.setup if f[0] != name))

    def table(self) -> list[dict]:
        rows = [{"factor": n, "group": "p_swap", "value": v} for n, v in self.factors]
        rows += [{"factor": n, "group": "setup", "value": v} for n, v in self.setup]
        rows.append({"factor": "P_swap", "group": "total", "value": self.p_swap})
        rows.append({"factor": "setup_efficiency", "group": "total", "value": self.setup_efficiency})
        rows.append({"factor": "four_fold_rate_hz", "group": "total", "value": self.four_fold_rate})
        return rows


def rate_budget(source1: QDSource, source2: QDSource, bsm_success: float = 0.5,
                pair_generation: float = PAIR_GENERATION, setup_transmission: float = SETUP_TRANSMISSION,
                detector_efficiency: float = DETECTOR_EFFICIENCY, rep_rate: float = 160.0) -> RateBudget:
    """Budget for two sources; blinking enters once per source (squared for a matched pair)."""
    factors = [
        ("pair_generation_1", pair_generation),
        ("pair_generation_2", pair_generation),
        ("blinking_1", source1.blinking_on_fraction),
        ("blinking_2", source2.blinking_on_fraction),
    ]
    for i, s in enumerate((source1, source2), start=1):
        factors.append((f"extraction_x_{i}", s.efficiency_x))
        factors.append((f"extraction_xx_{i}", s.efficiency_xx))
    factors.append(("bsm_success", bsm_success))
    setup = [("setup_transmission^4", setup_transmission ** 4),
             ("detector_efficiency^4", detector_efficiency ** 4)]
    return RateBudget(tuple(factors), tuple(setup), rep_rate)


def calibrated_budget(scenario) -> RateBudget:
    """Budget for a swap scenario, with the BSM success taken from the model."""
    from .swap import HERALDS, herald_probability

    success = sum(herald_probability(scenario, h, math.inf, allow_detuned=True) for h in HERALDS)
    return rate_budget(scenario.source1, scenario.source2, bsm_success=min(success, 1.0),
                       rep_rate=scenario.rep_rate)


def improved_sources(source1: QDSource, source2: QDSource,
                     extraction: float = 0.78) -> tuple[QDSource, QDSource]:
    """Blinking suppressed and extraction raised to state-of-the-art cavity values."""
    def up(s: QDSource) -> QDSource:
        return s.replace(blinking_on_fraction=1.0, efficiency_x=extraction, efficiency_xx=extraction)
    return up(source1), up(source2)


def improved_budget(source1: QDSource, source2: QDSource, bsm_success: float = 0.5,
                    pair_generation: float = 0.95, extraction: float = 0.78,
                    rep_rate: float = 160.0) -> RateBudget:
    """Improved-source preset evaluated with the unchanged setup."""
    s1, s2 = improved_sources(source1, source2, extraction)
    return rate_budget(s1, s2, bsm_success, pair_generation, rep_rate=rep_rate)
