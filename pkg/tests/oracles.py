"""Independent reference computations.

Nothing here imports the code under test except for plain data types, so the
tests compare two unrelated routes to the same number.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import optimize

S2 = 1.0 / math.sqrt(2.0)
PHI_PLUS = np.array([S2, 0, 0, S2], dtype=complex)
PSI_MINUS = np.array([0, S2, -S2, 0], dtype=complex)
PSI_PLUS = np.array([0, S2, S2, 0], dtype=complex)
PHI_MINUS = np.array([S2, 0, 0, -S2], dtype=complex)


def random_unitaries(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-random 2x2 unitaries from normalized complex Gaussian matrices."""
    z = (rng.normal(size=(n, 2, 2)) + 1j * rng.normal(size=(n, 2, 2))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=1, axis2=2)
    return q * (d / np.abs(d))[:, None, :]


def _u2(p) -> np.ndarray:
    a, b, c = p[:3]
    return np.array([[np.cos(a) * np.exp(1j * b), np.sin(a) * np.exp(1j * c)],
                     [-np.sin(a) * np.exp(-1j * c), np.cos(a) * np.exp(-1j * b)]])


def bruteforce_fef(rho, n_samples: int = 100_000, seed: int = 0) -> float:
    """max over local unitaries of <Phi|rho|Phi>, Phi = (U x 1)|Phi+>.

    (U_A x U_B)|Phi+> equals (U_A U_B^T x 1)|Phi+>, so one unitary suffices.
    Random search followed by Nelder-Mead refinement of the best candidates.
    """
    rho = np.asarray(rho, dtype=complex)
    rng = np.random.default_rng(seed)
    u = random_unitaries(rng, n_samples)
    phi = u.reshape(n_samples, 4) * S2
    vals = np.einsum("ni,ij,nj->n", phi.conj(), rho, phi).real
    best = vals.max()

    def neg(p):
        v = _u2(p).reshape(4) * S2
        return -np.real(v.conj() @ rho @ v)

    for _ in range(8):
        res = optimize.minimize(neg, rng.uniform(0, 2 * np.pi, 3), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        best = max(best, -res.fun)
    return float(best)


def werner_concurrence(p: float) -> float:
    return max(0.0, (3 * p - 1) / 2)


def werner_fef(p: float) -> float:
    return (1 + 3 * p) / 4


def ginibre_state(rng: np.random.Generator, rank: int = 4) -> np.ndarray:
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def hom_visibility_grid(lifetime: float, dephasing: float, window: float = math.inf,
                        n: int = 2000, t_max_factor: float = 14.0) -> float:
    """Visibility of two identical pump-onset exponential photons by 2D summation.

    Coincidence densities on the (t1, t2) grid: orthogonal |psi(t1)|^2 |psi(t2)|^2,
    parallel the same times 1 - exp(-2|t1 - t2|/T_d) for a balanced beam splitter.
    """
    h = t_max_factor * lifetime / n
    if math.isfinite(window):
        h = window / math.ceil(window / h)  # window edge on grid lines
    t = (np.arange(n) + 0.5) * h
    p = np.exp(-t / lifetime)
    tau = np.abs(t[:, None] - t[None, :])
    base = p[:, None] * p[None, :]
    keep = np.where(np.isclose(tau, window), 0.5, (tau <= window).astype(float))
    coh = np.exp(-2 * tau / dephasing) if math.isfinite(dephasing) else np.ones_like(tau)
    par = np.sum(base * (1 - coh) * keep)
    perp = np.sum(base * keep)
    return 1.0 - par / perp


def cascade_x_visibility(x_lifetime: float, xx_lifetime: float) -> float:
    """Full-window visibility of two X photons whose emission follows an XX decay.

    Tr(rho^2) of the timing-mixed X photon: G_xx / (G_xx + G_x).
    """
    gx, gxx = 1 / x_lifetime, 1 / xx_lifetime
    return gxx / (gxx + gx)


def match_probability_closed(mean_abs_dev: float, tuning_range: float) -> float:
    """P(|E1 - E2| <= range) for two Gaussian energies with the given mean absolute deviation."""
    sigma = mean_abs_dev * math.sqrt(math.pi / 2)
    return math.erf(tuning_range / (2 * sigma))


def bell_coefficients_by_hand(state16: np.ndarray, pairing) -> np.ndarray:
    """Bell x Bell amplitudes from explicit 16-term sums (no reshaping tricks)."""
    (a, b), (c, d) = pairing
    bells = [PHI_PLUS, PHI_MINUS, PSI_PLUS, PSI_MINUS]
    out = np.zeros((4, 4), dtype=complex)
    for i, u in enumerate(bells):
        for j, v in enumerate(bells):
            acc = 0j
            for idx in range(16):
                bits = [(idx >> (3 - k)) & 1 for k in range(4)]  # photons 1..4
                ua = u[2 * bits[a - 1] + bits[b - 1]]
                vc = v[2 * bits[c - 1] + bits[d - 1]]
                acc += np.conj(ua * vc) * state16[idx]
            out[i, j] = acc
    return out
