"""Truncated boson and collective-spin operators as dense matrices.

Composite basis index convention: ``i = n_boson * (N + 1) + i_spin`` where
``i_spin = m + J`` runs over ``m = -J, ..., J``.  The boson index varies
slower than the spin index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "BasisDescriptor",
    "OperatorMatrix",
    "boson_ops",
    "spin_ops",
    "identity",
    "tensor",
    "commutator_norm",
]


@dataclass(frozen=True)
class BasisDescriptor:
    """Basis of a boson factor, a spin factor, or their product.

    ``n_max is None`` marks a spin-only factor and ``n_spins is None`` a
    boson-only factor.
    """

    n_max: int | None = None
    n_spins: int | None = None

    def __post_init__(self):
        if self.n_max is None and self.n_spins is None:
            raise InvalidArgument("basis needs at least one factor")
        if self.n_max is not None and self.n_max < 1:
            raise InvalidArgument(f"n_max must be >= 1, got {self.n_max}")
        if self.n_spins is not None and self.n_spins < 1:
            raise InvalidArgument(f"N must be >= 1, got {self.n_spins}")

    @property
    def boson_dim(self) -> int:
        return 1 if self.n_max is None else self.n_max + 1

    @property
    def spin_dim(self) -> int:
        return 1 if self.n_spins is None else self.n_spins + 1

    @property
    def total_dim(self) -> int:
        return self.boson_dim * self.spin_dim

    @property
    def is_composite(self) -> bool:
        return self.n_max is not None and self.n_spins is not None

    def index(self, n_boson: int, i_spin: int) -> int:
        return n_boson * self.spin_dim + i_spin

    def split_index(self, i):
        """Inverse of :meth:`index`; works elementwise on arrays."""
        return np.divmod(i, self.spin_dim)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense matrix tagged with the basis it acts on.

    Real-valued operators are kept in ``float64``; anything with an imaginary
    part is ``complex128``.
    """

    basis: BasisDescriptor
    entries: np.ndarray = field(repr=False)
    hermitian: bool = False

    def __post_init__(self):
        a = self.entries
        d = self.basis.total_dim
        if a.ndim != 2 or a.shape != (d, d):
            raise InvalidArgument(f"matrix shape {a.shape} does not match basis dimension {d}")
        a.flags.writeable = False
        if self.hermitian:
            scale = np.abs(a).max() if a.size else 0.0
            if scale > 0 and np.abs(a - a.conj().T).max() > 1e-12 * scale:
                raise InvalidArgument("matrix flagged Hermitian is not Hermitian")

    @property
    def dim(self) -> int:
        return self.basis.total_dim

    @property
    def T(self) -> np.ndarray:
        return self.entries.T

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.basis, self.entries.conj().T.copy(), self.hermitian)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_same_basis(self, other)
        return OperatorMatrix(self.basis, self.entries @ other.entries)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_same_basis(self, other)
        return OperatorMatrix(self.basis, self.entries + other.entries, self.hermitian and other.hermitian)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_same_basis(self, other)
        return OperatorMatrix(self.basis, self.entries - other.entries, self.hermitian and other.hermitian)

    def scale(self, c) -> "OperatorMatrix":
        herm = self.hermitian and np.isreal(c)
        return OperatorMatrix(self.basis, c * self.entries, bool(herm))


def _check_same_basis(a: OperatorMatrix, b: OperatorMatrix):
    if a.basis != b.basis or a.entries.shape != b.entries.shape:
        raise InvalidArgument(f"basis mismatch: {a.basis} vs {b.basis}")


def boson_ops(n_max: int):
    """Truncated ladder operators on the Fock states ``0..n_max``.

    Returns ``(create, annihilate, number)``.
    """
    if n_max < 1:
        raise InvalidArgument(f"n_max must be >= 1, got {n_max}")
    basis = BasisDescriptor(n_max=n_max)
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    create = OperatorMatrix(basis, a.T.copy())
    annihilate = OperatorMatrix(basis, a)
    number = OperatorMatrix(basis, np.diag(np.arange(n_max + 1, dtype=float)), hermitian=True)
    return create, annihilate, number


def spin_ops(N: int):
    """Collective spin ``J = N/2`` operators in the ``|J, m>`` basis, ``m`` ascending.

    Returns ``(Jz, Jplus, Jminus)``.
    """
    if N < 1:
        raise InvalidArgument(f"N must be >= 1, got {N}")
    basis = BasisDescriptor(n_spins=N)
    J = N / 2
    m = np.arange(N + 1) - J
    jz = OperatorMatrix(basis, np.diag(m), hermitian=True)
    # Jplus |J,m> = sqrt(J(J+1) - m(m+1)) |J,m+1>
    jp = np.diag(np.sqrt(J * (J + 1) - m[:-1] * (m[:-1] + 1)), -1)
    return jz, OperatorMatrix(basis, jp), OperatorMatrix(basis, jp.T.copy())


def identity(basis: BasisDescriptor) -> OperatorMatrix:
    return OperatorMatrix(basis, np.eye(basis.total_dim), hermitian=True)


def tensor(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    """Kronecker product of a boson-factor operator with a spin-factor operator."""
    if a.basis.n_spins is not None or a.basis.n_max is None:
        raise InvalidArgument("first factor must act on the boson space only")
    if b.basis.n_max is not None or b.basis.n_spins is None:
        raise InvalidArgument("second factor must act on the spin space only")
    basis = BasisDescriptor(n_max=a.basis.n_max, n_spins=b.basis.n_spins)
    return OperatorMatrix(basis, np.kron(a.entries, b.entries), a.hermitian and b.hermitian)


def commutator_norm(a: OperatorMatrix, b: OperatorMatrix) -> float:
    """Frobenius norm of ``ab - ba``."""
    _check_same_basis(a, b)
    A, B = a.entries, b.entries
    if _is_diagonal(B):
        # [A, D]_ij = A_ij (d_j - d_i)
        d = np.diag(B)
        return float(np.linalg.norm(A * (d[None, :] - d[:, None])))
    if _is_diagonal(A):
        d = np.diag(A)
        return float(np.linalg.norm(B * (d[:, None] - d[None, :])))
    return float(np.linalg.norm(A @ B - B @ A))


def _is_diagonal(x: np.ndarray) -> bool:
    n = x.shape[0]
    # strided view of the off-diagonal part without copying
    return not np.any(x.reshape(-1)[:-1].reshape(n - 1, n + 1)[:, 1:]) if n > 1 else True
