"""Dicke Hamiltonian, excitation-number charge, parity and charge sectors.

Units: hbar = 1 and all energies in units of the model energy scale.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .hilbert import BasisDescriptor, OperatorMatrix, boson_ops, spin_ops

__all__ = [
    "DickeParams",
    "MSector",
    "build_hamiltonian",
    "build_charge_M",
    "build_parity",
    "m_sectors",
    "charge_labels",
    "is_integrable",
    "conserved_limit",
]


@dataclass(frozen=True)
class DickeParams:
    N: int
    omega_b: float
    omega_at: float
    g: float
    alpha: float
    n_max: int

    def __post_init__(self):
        errs = self.validation_errors()
        if errs:
            raise InvalidArgument("; ".join(errs))

    def validation_errors(self) -> list[str]:
        errs = []
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            errs.append(f"N must be a positive integer, got {self.N!r}")
        if not isinstance(self.n_max, (int, np.integer)) or self.n_max < 1:
            errs.append(f"n_max must be a positive integer, got {self.n_max!r}")
        elif isinstance(self.N, (int, np.integer)) and self.n_max < self.N:
            errs.append(f"n_max ({self.n_max}) must be >= N ({self.N})")
        if not self.omega_b > 0:
            errs.append(f"omega_b must be > 0, got {self.omega_b}")
        if not self.omega_at > 0:
            errs.append(f"omega_at must be > 0, got {self.omega_at}")
        if not self.g >= 0:
            errs.append(f"g must be >= 0, got {self.g}")
        if not 0.0 <= self.alpha <= 1.0:
            errs.append(f"alpha must lie in [0, 1], got {self.alpha}")
        return errs

    @property
    def basis(self) -> BasisDescriptor:
        return BasisDescriptor(n_max=int(self.n_max), n_spins=int(self.N))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MSector:
    m_value: int
    member_indices: np.ndarray
    truncated: bool

    @property
    def size(self) -> int:
        return len(self.member_indices)


def conserved_limit(p: DickeParams) -> int | None:
    """Which excitation-number charge commutes with ``H(p)``, if any.

    Returns 0 for ``J + Jz + n`` (alpha = 0 or g = 0), 1 for ``J - Jz + n``
    (alpha = 1) and ``None`` in the chaotic regime.
    """
    if p.alpha == 0.0 or p.g == 0.0:
        return 0
    if p.alpha == 1.0:
        return 1
    return None


def is_integrable(p: DickeParams) -> bool:
    return conserved_limit(p) is not None


def _sparse(op: OperatorMatrix):
    return sp.csr_matrix(op.entries)


def build_hamiltonian(p: DickeParams) -> OperatorMatrix:
    """Dense Dicke Hamiltonian

    H = w_b b^dag b + w_at Jz
        + 2g/sqrt(N) [(1 - alpha)(J+ b + J- b^dag) + alpha (J+ b^dag + J- b)]
    """
    create, annihilate, number = (_sparse(x) for x in boson_ops(p.n_max))
    jz, jp, jm = (_sparse(x) for x in spin_ops(p.N))
    ib = sp.identity(p.n_max + 1, format="csr")
    isp = sp.identity(p.N + 1, format="csr")
    c = 2.0 * p.g / np.sqrt(p.N)
    h = p.omega_b * sp.kron(number, isp) + p.omega_at * sp.kron(ib, jz)
    if c != 0.0:
        rot = sp.kron(annihilate, jp) + sp.kron(create, jm)
        counter = sp.kron(create, jp) + sp.kron(annihilate, jm)
        h = h + c * ((1.0 - p.alpha) * rot + p.alpha * counter)
    return OperatorMatrix(p.basis, h.toarray(), hermitian=True)


def _check_limit(limit):
    if limit not in (0, 1):
        raise InvalidArgument(f"limit must be 0 or 1, got {limit!r}")


def charge_labels(N: int, n_max: int, limit: int = 0) -> np.ndarray:
    """Excitation-number eigenvalue of every basis state.

    ``limit=0`` gives ``J + m + n``; ``limit=1`` gives ``J - m + n``, the
    charge conserved by the purely counter-rotating coupling.
    """
    _check_limit(limit)
    n_b, i_s = np.divmod(np.arange((n_max + 1) * (N + 1)), N + 1)
    return n_b + i_s if limit == 0 else n_b + (N - i_s)


def build_charge_M(N: int, n_max: int, limit: int = 0) -> OperatorMatrix:
    """Excitation number ``J + Jz + b^dag b`` (the constant ``J`` is kept).

    With ``limit=1`` the sign of ``Jz`` is flipped.
    """
    basis = BasisDescriptor(n_max=n_max, n_spins=N)
    return OperatorMatrix(basis, np.diag(charge_labels(N, n_max, limit).astype(float)), hermitian=True)


def build_parity(N: int, n_max: int) -> OperatorMatrix:
    basis = BasisDescriptor(n_max=n_max, n_spins=N)
    signs = 1.0 - 2.0 * (charge_labels(N, n_max) % 2)
    return OperatorMatrix(basis, np.diag(signs), hermitian=True)


def m_sectors(N: int, n_max: int, limit: int = 0) -> list[MSector]:
    """Partition of the basis into eigenspaces of the excitation number.

    Sectors with ``m > n_max`` are clipped by the Fock cutoff and flagged.
    """
    labels = charge_labels(N, n_max, limit)
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    return [
        MSector(int(m), order[bounds[m]:bounds[m + 1]], bool(m > n_max))
        for m in range(len(counts))
    ]
