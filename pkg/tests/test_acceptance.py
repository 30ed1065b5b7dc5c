"""Acceptance criteria, one test each, with one PASS/FAIL line per criterion."""
import csv
import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import bruteforce_fef, ginibre_state
from qdswap.cli import VERBS, main
from qdswap.config import bundled_config_path, bundled_configs, load_config
from qdswap.interference import jitter_sigma, visibility_analytic
from qdswap.montecarlo import swapped_state_montecarlo
from qdswap.rates import calibrated_budget, improved_sources, rate_budget
from qdswap.source import PhotonWavepacket, pair_match_probability
from qdswap.states import (BellLabel, PhysicalityError, bell_decompose_4q, bell_state, fully_entangled_fraction,
                           product_state_4q, trace_distance, validate_dm)
from qdswap.swap import (HERALDS, SwapScenario, ideal_scenario, swapped_state_analytic, unheralded_state)
from qdswap.tomography import reconstruct_mle, simulate_counts


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE[n] = line
    print(line)


def within(x, lo, hi):
    return lo <= x <= hi


@pytest.fixture(scope="module")
def cli_outputs(tmp_path_factory):
    """Every verb over every bundled config; {(config, verb): (exit code, out dir)}."""
    root = tmp_path_factory.mktemp("sweep")
    out = {}
    for cfg in bundled_configs():
        for verb in sorted(VERBS):
            d = root / cfg.stem / verb
            out[cfg.stem, verb] = (main([verb, "--config", str(cfg), "--out-dir", str(d)]), d)
    return out


def _swap_rows(cli_outputs, name):
    code, d = cli_outputs[name, "swap"]
    assert code == 0
    with open(d / "swap_table.csv", encoding="utf-8") as fh:
        fh.readline()
        return {float(r["window_ps"]): {k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)}


def test_criterion_1_bell_decomposition():
    t0 = time.perf_counter()
    phi = bell_state("PhiPlus")
    terms = bell_decompose_4q(product_state_4q(phi, phi), ((1, 4), (2, 3)))
    err = max(abs(c - (0.5 if a is b else 0.0)) for a, b, c in terms)
    dt = time.perf_counter() - t0
    ok = err < 1e-15 and dt < 1.0
    record(1, ok, f"max coefficient error {err:.1e}, {dt:.3f} s")
    assert ok


def test_criterion_2_hom_visibilities(cal_cfg):
    t0 = time.perf_counter()
    st = cal_cfg.station
    sig = jitter_sigma(st.detector_jitter_fwhm)
    v = {}
    for tr in ("X", "XX"):
        w1 = PhotonWavepacket.from_source(cal_cfg.source1, tr, 0.0)
        w2 = PhotonWavepacket.from_source(cal_cfg.source2, tr, cal_cfg.resonance_field(tr))
        g2 = 0.5 * (cal_cfg.source1.g2_zero + cal_cfg.source2.g2_zero)
        for w in (math.inf, 10.0):
            v[tr, w] = visibility_analytic(w1, w2, w, None, st.bs_reflectivity, sig, g2)
    dt = time.perf_counter() - t0
    ok = (within(v["X", math.inf], 0.38, 0.48) and within(v["XX", math.inf], 0.41, 0.51)
          and within(v["X", 10.0], 0.61, 0.71) and within(v["XX", 10.0], 0.56, 0.66) and dt < 60)
    record(2, ok, f"V_X {v['X', math.inf]:.3f}/{v['X', 10.0]:.3f}, V_XX {v['XX', math.inf]:.3f}/"
                  f"{v['XX', 10.0]:.3f} (full/10 ps), {dt:.1f} s")
    assert ok


def test_criterion_3_swap_fidelities(cli_outputs):
    xx = _swap_rows(cli_outputs, "calibrated")
    x = _swap_rows(cli_outputs, "calibrated-swap-x")
    inf = math.inf
    checks = [
        within(xx[inf]["f_psi_minus"], 0.55, 0.65), within(xx[inf]["f_psi_plus"], 0.51, 0.61),
        within(xx[20.0]["f_psi_minus"], 0.66, 0.76), within(xx[20.0]["f_psi_plus"], 0.60, 0.70),
        within(x[inf]["f_psi_minus"], 0.57, 0.68), within(x[inf]["f_psi_plus"], 0.57, 0.68),
        within(x[20.0]["f_psi_minus"], 0.66, 0.76), within(x[20.0]["f_psi_plus"], 0.66, 0.76),
    ]
    above = all(r[k] > 0.5 for tab in (xx, x) for r in tab.values() for k in ("f_psi_minus", "f_psi_plus"))
    ok = all(checks) and above
    record(3, ok, f"XX-entangled full {xx[inf]['f_psi_minus']:.3f}/{xx[inf]['f_psi_plus']:.3f}, "
                  f"20 ps {xx[20.0]['f_psi_minus']:.3f}/{xx[20.0]['f_psi_plus']:.3f}; X-entangled full "
                  f"{x[inf]['f_psi_minus']:.3f}/{x[inf]['f_psi_plus']:.3f}, 20 ps "
                  f"{x[20.0]['f_psi_minus']:.3f}/{x[20.0]['f_psi_plus']:.3f}")
    assert ok


def test_criterion_4_corrected_maxima(cli_outputs):
    def peak(tab):
        return max(max(r["f_corrected_psi_minus"], r["f_corrected_psi_plus"]) for r in tab.values())

    bsm_x = peak(_swap_rows(cli_outputs, "calibrated"))
    bsm_xx = peak(_swap_rows(cli_outputs, "calibrated-swap-x"))
    ok = within(bsm_x, 0.68, 0.78) and within(bsm_xx, 0.70, 0.80)
    record(4, ok, f"corrected maximum {bsm_x:.4f} (X BSM), {bsm_xx:.4f} (XX BSM)")
    assert ok


@pytest.mark.xfail(strict=True, reason="improved-source rate exceeds 2-4 kHz with the setup that gives a few Hz; "
                                        "see README, rate budget")
def test_criterion_5_rate_budget(cal_cfg, cal_scenario):
    t_model = time.perf_counter()
    success = dict(calibrated_budget(cal_scenario).factors)["bsm_success"]
    t_model = time.perf_counter() - t_model
    t0 = time.perf_counter()
    calibrated = rate_budget(cal_scenario.source1, cal_scenario.source2, success, rep_rate=cal_scenario.rep_rate)
    s1, s2 = improved_sources(cal_cfg.source1, cal_cfg.source2, cal_cfg.rates["improved_extraction"])
    improved = rate_budget(s1, s2, success, cal_cfg.rates["improved_pair_generation"],
                           rep_rate=cal_scenario.rep_rate)
    dt = time.perf_counter() - t0
    parts = {
        "P_swap": within(calibrated.p_swap, 1e-5, 4e-5),
        "rate": within(calibrated.four_fold_rate, 1.0, 10.0),
        "improved P_swap": within(improved.p_swap, 0.12, 0.22),
        "improved rate": within(improved.four_fold_rate, 2e3, 4e3),
    }
    ok = all(parts.values()) and dt < 1.0
    failed = [k for k, v in parts.items() if not v]
    record(5, ok, f"P_swap {calibrated.p_swap:.3g}, rate {calibrated.four_fold_rate:.3g} Hz, improved P_swap "
                  f"{improved.p_swap:.3f}, improved rate {improved.four_fold_rate:.4g} Hz, budget {dt:.4f} s "
                  f"(+{t_model:.1f} s for the model BSM success {success:.4f})"
                  + (f"; out of range: {', '.join(failed)}" if failed else ""))
    assert ok


def test_criterion_6_pair_matching(cal_cfg):
    m = cal_cfg.match
    t0 = time.perf_counter()
    p = pair_match_probability(m["spread"], m["tuning_range"], 1_000_000, cal_cfg.seed, m["spread_kind"])
    dt = time.perf_counter() - t0
    ok = abs(p - 0.07) <= 0.02 and dt < 10
    record(6, ok, f"match probability {p:.4f}, {dt:.2f} s")
    assert ok


@pytest.mark.slow
def test_criterion_7_montecarlo_oracle(cal_scenario):
    t0 = time.perf_counter()
    base = cal_scenario
    worst = 0.0
    for k, fss in enumerate((0.0, 1.0, 3.0)):
        for j, scale in enumerate((math.inf, 1.0, 0.5)):
            def adjust(s):
                return s.replace(fss=fss, dephasing_x=s.dephasing_x * scale, dephasing_xx=s.dephasing_xx * scale)

            sc = SwapScenario(adjust(base.source1), adjust(base.source2), base.bsm_photon, base.station,
                              base.field, base.windows, base.rep_rate, base.resonance_tolerance)
            for h in HERALDS:
                mc, _ = swapped_state_montecarlo(sc, h, 20.0, 10_000_000, seed=100 + 10 * k + j)
                worst = max(worst, trace_distance(mc, swapped_state_analytic(sc, h, 20.0)))
    dt = time.perf_counter() - t0
    ok = worst <= 0.02 and dt < 1800
    record(7, ok, f"max trace distance {worst:.4f} over 3x3 FSS x dephasing grid, both heralds, 1e7 shots, "
                  f"{dt:.0f} s")
    assert ok


def test_criterion_8_fef_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for i in range(50):
        rho = ginibre_state(rng, int(rng.integers(1, 5)))
        worst = max(worst, abs(fully_entangled_fraction(rho) - bruteforce_fef(rho, 20_000, seed=i)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-3 and dt < 300
    record(8, ok, f"max |FEF - brute force| {worst:.2e} on 50 states, {dt:.1f} s")
    assert ok


def test_criterion_9_tomography_round_trip():
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(100):
        rho = ginibre_state(rng, 1 + i % 4)
        est = reconstruct_mle(simulate_counts(rho, total_flux=1e4), use_expected=True)
        worst = max(worst, trace_distance(est, rho))
    ok = worst <= 1e-6
    record(9, ok, f"max trace distance {worst:.1e} over 100 noiseless reconstructions")
    assert ok


def _matrices(node, path=""):
    if isinstance(node, dict):
        if "real" in node and "imag" in node:
            yield path, np.array(node["real"]) + 1j * np.array(node["imag"])
        for k, v in node.items():
            yield from _matrices(v, f"{path}.{k}")
    elif isinstance(node, list):
        for i, v in enumerate(node):
            yield from _matrices(v, f"{path}[{i}]")


def test_criterion_10_physicality_sweep(cli_outputs):
    codes = {k: c for k, (c, _) in cli_outputs.items()}
    n, bad = 0, []
    for (cfg, verb), (_, d) in cli_outputs.items():
        for f in sorted(d.glob("*.json")):
            for where, rho in _matrices(json.loads(f.read_text())):
                n += 1
                try:
                    validate_dm(rho, clamp=False)
                    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -1e-12:
                        raise PhysicalityError("negative eigenvalue")
                except PhysicalityError as exc:
                    bad.append(f"{cfg}/{f.name}{where}: {exc}")
    failed_runs = [k for k, c in codes.items() if c != 0]
    ok = not bad and not failed_runs and n > 0
    record(10, ok, f"{n} matrices from {len(codes)} runs, {len(bad)} violations, {len(failed_runs)} failed runs")
    assert ok, bad[:5] + [str(k) for k in failed_runs]


def test_criterion_11_ideal_limits():
    ideal = load_config(bundled_config_path("ideal.toml")).swap_scenario()
    worst = 0.0
    for sc in (ideal, ideal_scenario("X"), ideal_scenario("XX")):
        for h in HERALDS:
            worst = max(worst, abs(fully_entangled_fraction(swapped_state_analytic(sc, h)) - 1.0))
    unh = abs(fully_entangled_fraction(unheralded_state(ideal)) - 0.25)
    det_cfg = load_config(bundled_config_path("detuned.toml"))
    det = det_cfg.swap_scenario()
    f_det = max(fully_entangled_fraction(swapped_state_analytic(det, h, w, allow_detuned=True))
                for h in HERALDS for w in det_cfg.windows)
    ok = worst < 1e-12 and unh < 1e-12 and f_det <= 0.55
    record(11, ok, f"ideal |f - 1| {worst:.1e}, unheralded |f - 1/4| {unh:.1e}, detuned max FEF {f_det:.3f}")
    assert ok
    assert BellLabel.PSI_MINUS in HERALDS
