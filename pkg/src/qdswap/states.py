"""Two-qubit polarization state algebra.

Every state in the package uses the basis ordering (HH, HV, VH, VV); four-photon
states order photons 1..4 with photon 1 as the most significant qubit.
"""
from __future__ import annotations

from enum import Enum
from itertools import product

import numpy as np

BASIS_LABELS = ("HH", "HV", "VH", "VV")

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_FLOOR = -1e-9
NORM_TOL = 1e-12

_S = 1.0 / np.sqrt(2.0)


class PhysicalityError(ValueError):
    """Raised when a matrix is not a valid two-qubit density matrix."""


class BellLabel(Enum):
    PHI_PLUS = "PhiPlus"
    PHI_MINUS = "PhiMinus"
    PSI_PLUS = "PsiPlus"
    PSI_MINUS = "PsiMinus"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str | "BellLabel") -> "BellLabel":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("_", "").replace(" ", "")
        key = key.replace("+", "plus").replace("−", "minus").replace("-", "minus")
        for label in cls:
            if label.value.lower() == key:
                return label
        raise ValueError(f"unknown Bell label {name!r}")


# reporting order
BELL_ORDER = (BellLabel.PHI_PLUS, BellLabel.PHI_MINUS, BellLabel.PSI_PLUS, BellLabel.PSI_MINUS)

_BELL_VECTORS = {
    BellLabel.PHI_PLUS: np.array([_S, 0, 0, _S], dtype=complex),
    BellLabel.PHI_MINUS: np.array([_S, 0, 0, -_S], dtype=complex),
    BellLabel.PSI_PLUS: np.array([0, _S, _S, 0], dtype=complex),
    BellLabel.PSI_MINUS: np.array([0, _S, -_S, 0], dtype=complex),
}

# Magic basis: maximally entangled states are real vectors (up to a global
# phase) in these coordinates. Columns are e1..e4.
MAGIC_BASIS = np.column_stack([
    _BELL_VECTORS[BellLabel.PHI_PLUS],
    1j * _BELL_VECTORS[BellLabel.PHI_MINUS],
    1j * _BELL_VECTORS[BellLabel.PSI_PLUS],
    _BELL_VECTORS[BellLabel.PSI_MINUS],
])

_SIGMA_Y2 = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def bell_state(label: BellLabel | str) -> np.ndarray:
    """Canonical Bell state over (HH, HV, VH, VV)."""
    return _BELL_VECTORS[BellLabel.parse(label)].copy()


def bell_basis() -> np.ndarray:
    """4x4 unitary whose columns are the Bell states in reporting order."""
    return np.column_stack([_BELL_VECTORS[l] for l in BELL_ORDER])


def ket_to_dm(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def normalize(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    n = np.linalg.norm(psi)
    if n == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / n


def check_pure(psi, dim: int = 4) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (dim,):
        raise ValueError(f"expected {dim} amplitudes, got shape {psi.shape}")
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-10:
        raise ValueError("state is not normalized")
    return psi


def validate_dm(rho, clamp: bool = True) -> np.ndarray:
    """Check the density-matrix invariants and return a cleaned copy.

    Eigenvalues in [PSD_FLOOR, 0) are clamped to zero and the matrix is
    renormalized; anything further below the floor raises PhysicalityError.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise PhysicalityError(f"expected a 4x4 matrix, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise PhysicalityError("matrix has non-finite entries")
    herm_err = np.max(np.abs(rho - rho.conj().T))
    if herm_err > HERMITICITY_TOL * max(1.0, np.max(np.abs(rho))) * 10:
        raise PhysicalityError(f"matrix is not Hermitian (max deviation {herm_err:.3g})")
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise PhysicalityError(f"trace is {tr!r}, expected 1")
    w, v = np.linalg.eigh(rho)
    if w.min() < PSD_FLOOR:
        raise PhysicalityError(f"negative eigenvalue {w.min():.3g} below floor {PSD_FLOOR}")
    if clamp and w.min() < 0:
        w = np.clip(w, 0, None)
        rho = (v * w) @ v.conj().T
        rho = rho / np.trace(rho).real
        rho = 0.5 * (rho + rho.conj().T)
    return rho


def is_physical(rho) -> bool:
    try:
        validate_dm(rho, clamp=False)
    except PhysicalityError:
        return False
    return True


def fidelity_to_bell(rho, label: BellLabel | str) -> float:
    psi = _BELL_VECTORS[BellLabel.parse(label)]
    return float(np.real(psi.conj() @ np.asarray(rho) @ psi))


def bell_fidelities(rho) -> dict[BellLabel, float]:
    return {l: fidelity_to_bell(rho, l) for l in BELL_ORDER}


def fully_entangled_fraction(rho, return_state: bool = False):
    """Largest overlap of ``rho`` with any maximally entangled state.

    In the magic basis every maximally entangled state is a real unit vector
    times a phase, so the maximum is the top eigenvalue of the real part of
    rho expressed in that basis.
    """
    rho = validate_dm(rho)
    rho_m = MAGIC_BASIS.conj().T @ rho @ MAGIC_BASIS
    w, v = np.linalg.eigh(rho_m.real)
    f = float(min(max(w[-1], 0.0), 1.0))
    if return_state:
        return f, MAGIC_BASIS @ v[:, -1]
    return f


def best_bell_label(rho) -> tuple[BellLabel, float]:
    fids = bell_fidelities(rho)
    label = max(BELL_ORDER, key=lambda l: fids[l])
    return label, fids[label]


def concurrence(rho) -> float:
    """Wootters concurrence."""
    rho = validate_dm(rho)
    rho_tilde = _SIGMA_Y2 @ rho.conj() @ _SIGMA_Y2
    ev = np.linalg.eigvals(rho @ rho_tilde)
    lam = np.sqrt(np.clip(np.sort(ev.real)[::-1], 0, None))
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def trace_distance(rho, sigma) -> float:
    d = np.asarray(rho) - np.asarray(sigma)
    d = 0.5 * (d + d.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(d))))


def werner_state(p: float, label: BellLabel | str = BellLabel.PHI_PLUS) -> np.ndarray:
    return p * ket_to_dm(bell_state(label)) + (1 - p) * np.eye(4) / 4


def white_noise(rho, eps: float) -> np.ndarray:
    """Mix ``rho`` with the maximally mixed state: (1-eps) rho + eps I/4."""
    return (1 - eps) * np.asarray(rho) + eps * np.eye(4) / 4


def local_unitary(rho, u_a, u_b) -> np.ndarray:
    u = np.kron(u_a, u_b)
    return u @ np.asarray(rho) @ u.conj().T


# ---------------------------------------------------------------------------
# four-photon pure states


def _check_pairing(cut) -> tuple[tuple[int, int], tuple[int, int]]:
    try:
        (a, b), (c, d) = cut
    except (TypeError, ValueError):
        raise ValueError(f"pairing must look like ((a, b), (c, d)), got {cut!r}") from None
    photons = (a, b, c, d)
    if sorted(photons) != [1, 2, 3, 4]:
        raise ValueError(f"invalid pairing {cut!r}: each of photons 1-4 must appear exactly once")
    return (a, b), (c, d)


def _as_tensor(state) -> np.ndarray:
    psi = np.asarray(state, dtype=complex)
    if psi.shape == (2, 2, 2, 2):
        psi = psi.reshape(16)
    if psi.shape != (16,):
        raise ValueError(f"four-photon state needs 16 amplitudes, got {psi.shape}")
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-10:
        raise ValueError("four-photon state is not normalized")
    return psi.reshape(2, 2, 2, 2)


def product_state_4q(pair_12, pair_34) -> np.ndarray:
    return np.kron(np.asarray(pair_12, dtype=complex), np.asarray(pair_34, dtype=complex))


def bell_decompose_4q(state, cut) -> list[tuple[BellLabel, BellLabel, complex]]:
    """Coefficients of a four-photon state in the Bell x Bell basis of a pairing.

    ``cut`` is ((a, b), (c, d)) with 1-based photon numbers. Returns all 16
    (label_ab, label_cd, amplitude) triples in reporting order.
    """
    (a, b), (c, d) = _check_pairing(cut)
    psi = _as_tensor(state)
    # axes reordered to (a, b, c, d)
    t = np.transpose(psi, (a - 1, b - 1, c - 1, d - 1)).reshape(4, 4)
    bb = bell_basis()
    coeff = bb.conj().T @ t @ bb.conj()
    return [(BELL_ORDER[i], BELL_ORDER[j], complex(coeff[i, j]))
            for i, j in product(range(4), range(4))]


def bell_recompose_4q(terms, cut) -> np.ndarray:
    """Inverse of :func:`bell_decompose_4q`."""
    (a, b), (c, d) = _check_pairing(cut)
    t = np.zeros((4, 4), dtype=complex)
    for la, lc, amp in terms:
        t += amp * np.outer(bell_state(la), bell_state(lc))
    t = t.reshape(2, 2, 2, 2)
    order = (a - 1, b - 1, c - 1, d - 1)
    return np.transpose(t, np.argsort(order)).reshape(16)


def partial_projection(state, photons, projector) -> tuple[np.ndarray, float]:
    """Project two photons of a four-photon state onto a two-qubit state.

    Returns the unnormalized conditional state of the remaining pair (in
    increasing photon order) and the projection probability.
    """
    try:
        i, j = photons
    except (TypeError, ValueError):
        raise ValueError(f"photons must be a pair of indices, got {photons!r}") from None
    if i == j or not {i, j} <= {1, 2, 3, 4}:
        raise ValueError(f"invalid photon indices {photons!r}")
    psi = _as_tensor(state)
    proj = np.asarray(projector, dtype=complex).reshape(2, 2)
    rest = [k for k in (1, 2, 3, 4) if k not in (i, j)]
    t = np.transpose(psi, (i - 1, j - 1, rest[0] - 1, rest[1] - 1))
    cond = np.einsum("ij,ijkl->kl", proj.conj(), t).reshape(4)
    return cond, float(np.vdot(cond, cond).real)
