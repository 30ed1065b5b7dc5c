"""Command-line runner: ``qdswap <verb> [--config FILE] ...``.

Exit codes: 0 success, 2 invalid input or config, 3 physics error (untunable
pair, detuned scenario, unphysical state), 4 insufficient statistics.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, bundled_config_path, load_config
from .interference import (PhotonWavepacket, corrected_visibility, hom_visibility, jitter_sigma,
                           simulate_hom, visibility_analytic)
from .montecarlo import swapped_state_montecarlo
from .rates import calibrated_budget, improved_sources, rate_budget
from .source import (FieldOutOfRangeError, UntunablePairError, pair_match_probability,
                     time_averaged_pair_dm, tuned_energies)
from .states import (BellLabel, PhysicalityError, concurrence, fully_entangled_fraction, purity,
                     trace_distance, validate_dm)
from .swap import (HERALDS, DetunedScenarioError, InsufficientStatisticsError, fidelity_vs_window,
                   unheralded_state)
from .tomography import (CountTable, MeasurementSetting, TomographyError, bootstrap_fef,
                         project_psd, reconstruct_linear, reconstruct_mle, simulate_counts, standard_settings)

SCHEMA_VERSION = 1
EXIT_INPUT, EXIT_PHYSICS, EXIT_STATS = 2, 3, 4


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, schema: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    buf.write(f"# schema: qdswap/{schema}/{SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, BellLabel):
        return x.value
    return x


def write_json(path: Path, schema: str, payload: dict) -> Path:
    doc = {"schema": f"qdswap/{schema}/{SCHEMA_VERSION}", **payload}
    path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def matrix_record(rho) -> dict:
    """Density matrix as real/imag lists; raises if it is not physical."""
    rho = validate_dm(rho, clamp=False)
    return {"real": rho.real.tolist(), "imag": rho.imag.tolist(),
            "fef": fully_entangled_fraction(rho), "concurrence": concurrence(rho), "purity": purity(rho)}


def _window(w: float):
    return "inf" if math.isinf(w) else w


# ---------------------------------------------------------------------------
# verbs


def cmd_source(cfg: ScenarioConfig, args, out: Path) -> list[Path]:
    doc = {"sources": {}}
    for s in (cfg.source1, cfg.source2):
        doc["sources"][s.name] = {"pair_state": matrix_record(time_averaged_pair_dm(s)), "fss_ueV": s.fss,
                                  "x_lifetime_ps": s.x_lifetime, "xx_lifetime_ps": s.xx_lifetime}
    doc["resonance_field_kV_cm"] = {t: cfg.resonance_field(t) for t in ("X", "XX")}
    lo, hi = cfg.source2.field_range
    rows = []
    for f in np.linspace(lo, hi, 33):
        x2, xx2 = tuned_energies(cfg.source2, f)
        x1, xx1 = tuned_energies(cfg.source1, 0.0)
        rows.append((f, x1, xx1, x2, xx2))
    return [write_json(out / "source.json", "source", doc),
            write_csv(out / "tuning.csv", "tuning",
                      ("field_kV_cm", "qd1_x_ueV", "qd1_xx_ueV", "qd2_x_ueV", "qd2_xx_ueV"), rows)]


def cmd_hom(cfg: ScenarioConfig, args, out: Path) -> list[Path]:
    opts = cfg.hom
    windows = opts.get("windows", (10.0, math.inf))
    paths = []
    st = cfg.station
    transitions = {"hom-X": ("X",), "hom-XX": ("XX",)}.get(cfg.scenario, ("X", "XX"))
    for k, tr in enumerate(transitions):
        f = cfg.field if cfg.field is not None else cfg.resonance_field(tr)
        w1 = PhotonWavepacket.from_source(cfg.source1, tr, 0.0)
        w2 = PhotonWavepacket.from_source(cfg.source2, tr, f)
        g2 = 0.5 * (cfg.source1.g2_zero + cfg.source2.g2_zero)
        sig = jitter_sigma(st.detector_jitter_fwhm)
        histos = simulate_hom(w1, w2, None, st.bs_reflectivity, sig, g2,
                              opts.get("bin_width", 2.0), opts.get("max_delay", 200.0),
                              opts.get("total", 1e5), seed=args.seed + k)
        par, perp = histos
        paths.append(write_csv(out / f"hom_{tr}_histogram.csv", "hom-histogram",
                               ("delay_ps", "counts_parallel", "counts_orthogonal"),
                               zip(par.delays, par.counts, perp.counts)))
        rows = []
        for w in windows:
            v_raw = hom_visibility(histos, min(w, opts.get("max_delay", 200.0)))
            v_model = visibility_analytic(w1, w2, w, None, st.bs_reflectivity, sig, g2)
            rows.append((_window(w), v_raw, corrected_visibility(v_raw, g2, st.bs_reflectivity - 0.5), v_model))
        paths.append(write_csv(out / f"hom_{tr}_visibility.csv", "hom-visibility",
                               ("window_ps", "v_raw", "v_corrected", "v_model"), rows))
    return paths


def cmd_swap(cfg: ScenarioConfig, args, out: Path) -> list[Path]:
    sc = cfg.swap_scenario()
    budget = rate_budget(sc.source1, sc.source2, bsm_success=_bsm_success(sc, cfg),
                         rep_rate=sc.rep_rate, **_rate_opts(cfg))
    res = fidelity_vs_window(sc, budget=budget, allow_detuned=cfg.allow_detuned)
    rows = []
    for i, row in enumerate(res.table()):
        rows.append((_window(row["window_ps"]), row["f_psi_minus"], row["f_psi_plus"], row["rate_hz"],
                     row["f_corrected_psi_minus"], row["f_corrected_psi_plus"],
                     res.herald_probability[BellLabel.PSI_MINUS][i], res.herald_probability[BellLabel.PSI_PLUS][i]))
    paths = [write_csv(out / "swap_table.csv", "swap-table",
                       ("window_ps", "f_psi_minus", "f_psi_plus", "rate_hz", "f_corrected_psi_minus",
                        "f_corrected_psi_plus", "p_herald_psi_minus", "p_herald_psi_plus"), rows)]
    states = []
    for i, w in enumerate(res.windows):
        states.append({"window_ps": _window(w),
                       **{h.value: matrix_record(res.states[h][i]) for h in HERALDS}})
    doc = {"bsm_photon": sc.bsm_photon, "field_kV_cm": sc.field, "detuning_ueV": sc.detuning(),
           "windows": states, "unheralded": matrix_record(unheralded_state(sc))}
    paths.append(write_json(out / "swap_states.json", "swap-states", doc))
    shots = args.shots if args.shots is not None else 0
    if shots:
        mc_rows = []
        for w in res.windows:
            for j, h in enumerate(HERALDS):
                rho_mc, count = swapped_state_montecarlo(sc, h, w, shots, args.seed + j, args.threads,
                                                         allow_detuned=cfg.allow_detuned)
                validate_dm(rho_mc, clamp=False)
                i = list(res.windows).index(w)
                mc_rows.append((_window(w), h.value, fully_entangled_fraction(rho_mc),
                                res.fef[h][i], trace_distance(rho_mc, res.states[h][i]), count))
        paths.append(write_csv(out / "swap_montecarlo.csv", "swap-montecarlo",
                               ("window_ps", "herald", "fef_montecarlo", "fef_analytic",
                                "trace_distance", "herald_count"), mc_rows))
    return paths


def _rate_opts(cfg: ScenarioConfig) -> dict:
    r = cfg.rates
    return {k: r[k] for k in ("pair_generation", "setup_transmission", "detector_efficiency") if k in r}


def _bsm_success(sc, cfg) -> float:
    return dict(calibrated_budget(sc).factors)["bsm_success"]


def cmd_rates(cfg: ScenarioConfig, args, out: Path) -> list[Path]:
    sc = cfg.swap_scenario()
    success = _bsm_success(sc, cfg)
    calibrated = rate_budget(sc.source1, sc.source2, bsm_success=success, rep_rate=sc.rep_rate, **_rate_opts(cfg))
    r = cfg.rates
    s1, s2 = improved_sources(sc.source1, sc.source2, r.get("improved_extraction", 0.78))
    opts = {**_rate_opts(cfg), "pair_generation": r.get("improved_pair_generation", 0.95)}
    improved = rate_budget(s1, s2, bsm_success=success, rep_rate=sc.rep_rate, **opts)
    rows = [("calibrated", x["factor"], x["group"], x["value"]) for x in calibrated.table()]
    rows += [("improved", x["factor"], x["group"], x["value"]) for x in improved.table()]
    return [write_csv(out / "rates.csv", "rates", ("budget", "factor", "group", "value"), rows),
            write_json(out / "rates.json", "rates", {
                "calibrated": {"p_swap": calibrated.p_swap, "four_fold_rate_hz": calibrated.four_fold_rate},
                "improved": {"p_swap": improved.p_swap, "four_fold_rate_hz": improved.four_fold_rate}})]


def cmd_match(cfg: ScenarioConfig, args, out: Path) -> list[Path]:
    m = cfg.match
    spread = m.get("spread", 3000.0)
    rng_ = m.get("tuning_range", 500.0)
    kind = m.get("spread_kind", "mean_abs_dev")
    n = m.get("samples", 1_000_000)
    p = pair_match_probability(spread, rng_, n, args.seed, kind, args.threads)
    return [write_csv(out / "match.csv", "match",
                      ("spread_ueV", "spread_kind", "tuning_range_ueV", "samples", "seed", "probability"),
                      [(spread, kind, rng_, n, args.seed, p)])]


def read_counts_csv(path: Path) -> CountTable:
    settings, counts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    need = {"setting_arm1", "setting_arm2", "counts"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise ConfigError("counts", f"CSV needs columns {sorted(need)}")
    for i, row in enumerate(reader):
        try:
            settings.append(MeasurementSetting(row["setting_arm1"].strip(), row["setting_arm2"].strip()))
            counts.append(int(row["counts"]))
        except ValueError as exc:
            raise ConfigError(f"counts[{i}]", str(exc)) from None
    return CountTable(settings, np.array(counts))


def cmd_tomo(cfg: ScenarioConfig, args, out: Path) -> list[Path]:
    t = cfg.tomo
    n_boot = t.get("bootstrap", 100)
    doc: dict = {}
    if args.counts:
        table = read_counts_csv(Path(args.counts))
        doc["input"] = str(args.counts)
    else:
        if cfg.scenario == "tomo-source":
            truth = time_averaged_pair_dm(cfg.source1)
            doc["truth"] = {"kind": "source", "source": cfg.source1.name}
        else:
            from .swap import swapped_state_analytic
            sc = cfg.swap_scenario()
            herald = BellLabel.parse(t.get("herald", "PsiMinus"))
            w = t.get("window", math.inf)
            truth = swapped_state_analytic(sc, herald, w, allow_detuned=cfg.allow_detuned)
            doc["truth"] = {"kind": "swap", "herald": herald.value, "window_ps": _window(w),
                            "bsm_photon": sc.bsm_photon}
        doc["truth"]["state"] = matrix_record(truth)
        table = simulate_counts(truth, standard_settings(), t.get("flux", 5000.0), args.seed)
    rho = reconstruct_mle(table)
    doc["mle"] = matrix_record(rho)
    lin, psd = reconstruct_linear(table, return_psd_flag=True)
    # the raw inversion may be unphysical; emit its PSD projection and keep the diagnostics
    doc["linear"] = matrix_record(project_psd(lin))
    doc["linear"].update(physical=psd, raw_min_eigenvalue=float(np.linalg.eigvalsh(lin).min()))
    if n_boot:
        err, _ = bootstrap_fef(table, rho, n_boot, args.seed + 1)
        doc["mle"]["fef_error"] = err
    doc["total_counts"] = table.total
    return [write_json(out / "tomo.json", "tomo", doc),
            write_csv(out / "tomo_counts.csv", "tomo-counts", ("setting_arm1", "setting_arm2", "counts"),
                      [(s.arm1, s.arm2, c) for s, c in zip(table.settings, table.counts)])]


VERBS = {"source": cmd_source, "hom": cmd_hom, "swap": cmd_swap, "tomo": cmd_tomo,
         "rates": cmd_rates, "match": cmd_match}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdswap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qdswap {__version__}")
    p.add_argument("verb", choices=sorted(VERBS))
    p.add_argument("--config", type=Path, default=None, help="scenario TOML (default: bundled calibrated.toml)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", type=Path, default=Path("qdswap-out"))
    p.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    p.add_argument("--shots", type=int, default=None, help="Monte Carlo shots per state (swap verb)")
    p.add_argument("--counts", type=Path, default=None, help="count-table CSV for the tomo verb")
    return p


def _report(kind: str, exc: BaseException, code: int) -> int:
    err = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        err["field"] = exc.field
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads", "must be at least 1")
        if args.shots is not None and args.shots < 0:
            raise ConfigError("--shots", "must be non-negative")
        cfg = load_config(args.config or bundled_config_path())
        if args.seed is None:
            args.seed = cfg.seed
        args.out_dir.mkdir(parents=True, exist_ok=True)
        paths = VERBS[args.verb](cfg, args, args.out_dir)
    except ConfigError as exc:
        return _report("input", exc, EXIT_INPUT)
    except (UntunablePairError, FieldOutOfRangeError, DetunedScenarioError, PhysicalityError) as exc:
        return _report("physics", exc, EXIT_PHYSICS)
    except (InsufficientStatisticsError, TomographyError) as exc:
        return _report("statistics", exc, EXIT_STATS)
    except ValueError as exc:
        return _report("input", exc, EXIT_INPUT)
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
