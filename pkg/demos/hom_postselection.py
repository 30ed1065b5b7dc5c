"""Two-photon interference between the remote dots, and what a window buys.

A short window discards late, dephased coincidences: visibility goes up,
counts go down.
"""
import math

import numpy as np

from qdswap.config import bundled_config_path, load_config
from qdswap.interference import corrected_visibility, jitter_sigma, visibility_analytic
from qdswap.source import PhotonWavepacket

cfg = load_config(bundled_config_path("calibrated.toml"))
st = cfg.station
g2 = cfg.source1.g2_zero
sig = jitter_sigma(st.detector_jitter_fwhm)

for tr in ("X", "XX"):
    a = PhotonWavepacket.from_source(cfg.source1, tr)
    b = PhotonWavepacket.from_source(cfg.source2, tr, cfg.resonance_field(tr))
    print(f"{tr} photons (field {cfg.resonance_field(tr):.2f} kV/cm)")
    for w in (5.0, 10.0, 20.0, 50.0, math.inf):
        v = visibility_analytic(a, b, w, None, st.bs_reflectivity, sig, g2)
        vc = corrected_visibility(v, g2, st.bs_reflectivity - 0.5)
        print(f"  window {w:>6} ps   V = {v:.3f}   corrected {vc:.3f}")

# detuning by a few linewidths washes the interference out
a = PhotonWavepacket.from_source(cfg.source1, "X")
b = PhotonWavepacket.from_source(cfg.source2, "X", cfg.resonance_field("X"))
for d in np.array([0.0, 10.0, 30.0, 120.0]):
    print(f"detuned by {d:5.1f} ueV: V = {visibility_analytic(a, b, math.inf, d):.3f}")
