"""Two-qubit polarization tomography: simulated counts and reconstruction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from scipy import optimize

from .states import ket_to_dm, fully_entangled_fraction, validate_dm

_S = 1.0 / math.sqrt(2.0)

ANALYZERS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, 1j * _S], dtype=complex),
    "L": np.array([_S, -1j * _S], dtype=complex),
}

PAULIS = [np.eye(2, dtype=complex), np.array([[0, 1], [1, 0]], dtype=complex),
          np.array([[0, -1j], [1j, 0]], dtype=complex), np.array([[1, 0], [0, -1]], dtype=complex)]


class TomographyError(RuntimeError):
    """Reconstruction failed (rank-deficient settings or no convergence)."""


@dataclass(frozen=True)
class MeasurementSetting:
    arm1: str
    arm2: str

    def __post_init__(self):
        for a in (self.arm1, self.arm2):
            if a not in ANALYZERS:
                raise ValueError(f"unknown analyzer {a!r}; use one of {''.join(ANALYZERS)}")

    @property
    def label(self) -> str:
        return self.arm1 + self.arm2

    def projector(self) -> np.ndarray:
        return ket_to_dm(np.kron(ANALYZERS[self.arm1], ANALYZERS[self.arm2]))


def standard_settings() -> list[MeasurementSetting]:
    """All 36 combinations of the six Pauli eigenstates."""
    return [MeasurementSetting(a, b) for a, b in product(ANALYZERS, repeat=2)]


@dataclass
class CountTable:
    settings: list[MeasurementSetting]
    counts: np.ndarray
    expected: np.ndarray | None = None
    weights: np.ndarray = field(default=None)  # relative acquisition time per setting

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.shape != (len(self.settings),):
            raise ValueError("one count per setting is required")
        if np.any(self.counts < 0) or not np.all(np.equal(np.mod(self.counts, 1), 0)):
            raise ValueError("counts must be non-negative integers")
        self.counts = self.counts.astype(np.int64)
        if self.weights is None:
            self.weights = np.ones(len(self.settings))
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights <= 0):
            raise ValueError("acquisition weights must be positive")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def projectors(self) -> np.ndarray:
        return np.array([s.projector() for s in self.settings])


def measurement_probabilities(rho, settings: Sequence[MeasurementSetting]) -> np.ndarray:
    rho = np.asarray(rho)
    return np.array([np.real(np.trace(rho @ s.projector())) for s in settings])


def simulate_counts(rho, settings: Sequence[MeasurementSetting] | None = None, total_flux: float = 1e4,
                    seed: int | None = 0, weights=None) -> CountTable:
    """Expected and Poisson-sampled coincidences per setting.

    ``total_flux`` is the number of pairs sent through the whole measurement
    sequence; with equal weights each of the 36 standard settings sees 1/9
    of them (four outcomes per basis pair). ``seed=None`` returns the
    expected counts rounded to the nearest integer as the sample.
    """
    rho = validate_dm(rho)
    settings = list(settings or standard_settings())
    if total_flux <= 0:
        raise ValueError("total_flux must be positive")
    w = np.ones(len(settings)) if weights is None else np.asarray(weights, dtype=float)
    probs = np.clip(measurement_probabilities(rho, settings), 0, None)
    expected = total_flux * w * probs / _basis_pairs(settings, w)
    if seed is None:
        counts = np.rint(expected)
    else:
        counts = np.random.default_rng(seed).poisson(expected)
    return CountTable(settings, counts, expected, w)


def _basis_pairs(settings, weights) -> float:
    """Normalizer that makes total_flux the number of pairs per full sequence."""
    bases = {("HV" if s.arm1 in "HV" else "DA" if s.arm1 in "DA" else "RL",
              "HV" if s.arm2 in "HV" else "DA" if s.arm2 in "DA" else "RL") for s in settings}
    return max(len(bases), 1) * float(np.mean(weights))


def _design(table: CountTable) -> np.ndarray:
    """Rows map the 16 Pauli coefficients of rho to the mean count of each setting."""
    basis = [np.kron(a, b) for a in PAULIS for b in PAULIS]
    proj = table.projectors()
    return np.array([[np.real(np.trace(p @ b)) for b in basis] for p in proj]) * table.weights[:, None]


def _data(table: CountTable, use_expected: bool) -> np.ndarray:
    if not use_expected:
        return table.counts.astype(float)
    if table.expected is None:
        raise ValueError("table carries no expected counts")
    return np.asarray(table.expected, dtype=float)


def reconstruct_linear(table: CountTable, return_psd_flag: bool = False, use_expected: bool = False):
    """Least-squares inversion of the count record.

    The result is Hermitian with unit trace; it need not be positive. With
    ``return_psd_flag`` a second value reports whether it is.
    ``use_expected`` fits the noiseless expected counts instead.
    """
    a = _design(table)
    if np.linalg.matrix_rank(a, tol=1e-9 * np.max(np.abs(a))) < 16:
        raise TomographyError("setting set is not informationally complete")
    coeff, *_ = np.linalg.lstsq(a, _data(table, use_expected), rcond=None)
    basis = [np.kron(x, y) for x in PAULIS for y in PAULIS]
    m = sum(c * b for c, b in zip(coeff, basis))
    tr = np.trace(m).real
    if tr <= 0:
        raise TomographyError("no counts to reconstruct from")
    rho = m / tr
    rho = 0.5 * (rho + rho.conj().T)
    if return_psd_flag:
        return rho, bool(np.linalg.eigvalsh(rho).min() >= -1e-12)
    return rho


def project_psd(rho) -> np.ndarray:
    """Clip negative eigenvalues to zero and renormalize the trace."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0, None)
    out = (v * w) @ v.conj().T
    return out / np.trace(out).real


_DIAG = np.diag_indices(4)
_OFF = np.tril_indices(4, -1)


def _to_params(t: np.ndarray) -> np.ndarray:
    """4 real diagonal entries and 6 complex sub-diagonal entries of T."""
    off = t[_OFF]
    return np.concatenate([t[_DIAG].real, off.real, off.imag])


def _from_params(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[_DIAG] = x[:4]
    t[_OFF] = x[4:10] + 1j * x[10:]
    return t


def _x_minus_log1p(x: np.ndarray) -> np.ndarray:
    """x - log(1 + x) without cancellation for small x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = x[small]
    out = np.empty_like(x)
    out[small] = xs * xs * (0.5 - xs * (1 / 3 - xs * (0.25 - xs / 5)))
    xl = np.clip(x[~small], -1 + 1e-300, None)
    out[~small] = xl - np.log1p(xl)
    return out


def neg_log_likelihood(rho, table: CountTable, scale: float | None = None) -> float:
    """Poisson negative log-likelihood (constant terms dropped) with the best overall rate."""
    proj = table.projectors()
    p = np.real(np.einsum("ij,nji->n", np.asarray(rho), proj)) * table.weights
    n = table.counts.astype(float)
    if scale is None:
        scale = n.sum() / p.sum()
    mu = np.clip(scale * p, 1e-300, None)
    return float(np.sum(mu - n * np.log(mu)))


@dataclass
class MleResult:
    rho: np.ndarray
    iterations: int
    gradient_norm: float
    nll: float


def reconstruct_mle(table: CountTable, tol: float = 1e-8, max_iter: int = 10_000,
                    full_output: bool = False, use_expected: bool = False):
    """Maximum-likelihood state under the physical constraint rho = T^dag T / Tr.

    T is lower triangular; the overall count rate is absorbed into its norm.
    The Poisson deviance is minimized with L-BFGS and the analytic gradient,
    then polished by a trust-region Newton method on the exact Hessian.
    Convergence means the gradient norm of the count-normalized objective is
    below ``tol``.
    """
    proj = table.projectors()
    n = _data(table, use_expected)
    total = n.sum()
    if total <= 0:
        raise TomographyError("no counts to reconstruct from")
    w = table.weights
    nu = n / total  # count fractions keep the tolerance independent of flux
    nz = nu > 1e-14  # expected counts carry round-off where the true value is zero

    def fun(x):
        t = _from_params(x)
        m = t.conj().T @ t
        mu = np.real(np.einsum("ij,nji->n", m, proj)) * w
        mu_c = np.clip(mu, 1e-300, None)
        # Poisson deviance form: zero for a perfect fit, so L-BFGS's relative
        # stopping test keeps resolving progress near the optimum
        f = np.sum(mu[~nz]) + np.sum(nu[nz] * _x_minus_log1p((mu[nz] - nu[nz]) / nu[nz]))
        coef = w - np.where(nz, nu / mu_c * w, 0.0)
        g = np.einsum("n,nij->ij", coef, proj)
        tg = 2.0 * (t @ g)
        return f, np.concatenate([tg[_DIAG].real, tg[_OFF].real, tg[_OFF].imag])

    # directions E_k of the 16 real parameters and the constant second
    # derivatives 2 Re tr(E_k A_n E_l^dag) of each mean count
    basis = np.array([_from_params(e) for e in np.eye(16)])
    a_n = proj * w[:, None, None]
    curv = 2.0 * np.real(np.einsum("kij,njl,mil->nkm", basis, a_n, basis.conj()))

    def hessian(x):
        t = _from_params(x)
        mu = np.clip(np.real(np.einsum("ij,nji->n", t.conj().T @ t, proj)) * w, 1e-300, None)
        jac = 2.0 * np.real(np.einsum("kij,njl,il->nk", basis, a_n, t.conj()))
        ratio = np.where(nz, nu / mu, 0.0)
        hm = np.einsum("n,nkm->km", 1.0 - ratio, curv) + jac.T @ (jac * (ratio / mu)[:, None])
        return 0.5 * (hm + hm.T)

    start = project_psd(reconstruct_linear(table, use_expected=use_expected))
    # a small full-rank admixture keeps the triangular factor well defined
    start = 0.98 * start + 0.02 * np.eye(4) / 4
    x0 = _to_params(_lower_factor(start / _basis_pairs(table.settings, table.weights)))
    res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "gtol": tol * 1e-2, "ftol": 1e-16,
                                     "maxcor": 30})
    nit = int(res.nit)
    f, g = fun(res.x)
    gnorm = float(np.linalg.norm(g))
    x = res.x
    # L-BFGS stops once f no longer resolves progress; a trust-region Newton
    # method on the exact Hessian copes with the singular or slightly
    # indefinite curvature found near rank-deficient optima
    if gnorm > tol * 1e-2:
        pol = optimize.minimize(lambda y: fun(y)[0], x, jac=lambda y: fun(y)[1], hess=hessian,
                                method="trust-exact", options={"gtol": tol * 1e-2, "maxiter": max(max_iter - nit, 1)})
        f_p, g_p = fun(pol.x)
        if np.linalg.norm(g_p) < gnorm:
            x, f, g, gnorm = pol.x, f_p, g_p, float(np.linalg.norm(g_p))
        nit += int(pol.nit)
    res.x = x
    if not np.isfinite(f) or gnorm > tol:
        raise TomographyError(
            f"MLE did not converge: gradient norm {gnorm:.3g} after {nit} iterations ({res.message})")
    t = _from_params(res.x)
    m = t.conj().T @ t
    rho = validate_dm(m / np.trace(m).real)
    if full_output:
        return MleResult(rho, nit, gnorm, neg_log_likelihood(rho, table))
    return rho


def _lower_factor(m: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T^dag T = m (m positive definite)."""
    # reverse the index order so the upper Cholesky factor of the flipped
    # matrix becomes lower triangular in the original order
    j = np.eye(4)[::-1]
    u = np.linalg.cholesky(j @ m @ j).conj().T  # j m j = u^dag u, u upper
    return j @ u @ j


# ---------------------------------------------------------------------------
# error bars and the gated pipeline


@dataclass
class TomographyResult:
    rho: np.ndarray
    fef: float
    fef_error: float | None = None
    replicas: np.ndarray | None = None


def bootstrap_fef(table: CountTable, rho: np.ndarray | None = None, n_replicas: int = 100,
                  seed: int = 0) -> tuple[float, np.ndarray]:
    """Parametric bootstrap of the FEF: resample Poisson counts from the fitted state."""
    if n_replicas < 100:
        raise ValueError("use at least 100 bootstrap replicas")
    if rho is None:
        rho = reconstruct_mle(table)
    probs = np.clip(np.real(np.einsum("ij,nji->n", rho, table.projectors())), 0, None) * table.weights
    mean = probs / probs.sum() * table.total
    rng = np.random.default_rng(seed)
    fefs = np.empty(n_replicas)
    for i in range(n_replicas):
        sample = CountTable(table.settings, rng.poisson(mean), mean, table.weights)
        fefs[i] = fully_entangled_fraction(reconstruct_mle(sample))
    return float(np.std(fefs, ddof=1)), fefs


def tomography(table: CountTable, bootstrap: int = 0, seed: int = 0) -> TomographyResult:
    rho = reconstruct_mle(table)
    f = fully_entangled_fraction(rho)
    if bootstrap:
        err, reps = bootstrap_fef(table, rho, bootstrap, seed)
        return TomographyResult(rho, f, err, reps)
    return TomographyResult(rho, f)


def gated_tomography(scenario, herald, window: float = math.inf, flux: float = 5e3, seed: int = 0,
                     bootstrap: int = 0) -> tuple[np.ndarray, float]:
    """Heralded state -> Poisson counts -> MLE, as in the experiment.

    ``flux`` is the number of heralded pairs over the 36 settings.
    """
    from .swap import swapped_state_analytic

    truth = swapped_state_analytic(scenario, herald, window)
    table = simulate_counts(truth, standard_settings(), flux, seed)
    res = tomography(table, bootstrap, seed + 1)
    return res.rho, res.fef
