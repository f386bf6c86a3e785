"""Hermitian eigendecomposition, optionally block-by-block along a conserved charge."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ChargeNotConserved, InvalidArgument, NumericFailure
from .hilbert import BasisDescriptor, OperatorMatrix
from .model import DickeParams, build_hamiltonian, build_parity, conserved_limit, m_sectors, MSector

__all__ = [
    "LabeledSpectrum",
    "eig_hermitian",
    "eig_in_sectors",
    "parity_split_eig",
    "diagonalize",
    "DEGENERACY_TOL",
]

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LabeledSpectrum:
    """Eigenpairs of a Hamiltonian plus per-eigenstate charge quantum numbers.

    ``eigenvectors[:, n]`` is eigenstate ``n`` in the full composite basis.
    ``charges`` maps a charge id (e.g. ``"M"``) to integer labels, one per
    eigenstate.  ``sector_of`` is ``-1`` for an unsectored decomposition.
    """

    energies: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    basis: BasisDescriptor
    sector_of: np.ndarray = field(repr=False)
    charges: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.basis.total_dim
        if self.energies.shape != (d,) or self.eigenvectors.shape != (d, d):
            raise InvalidArgument("spectrum arrays do not match basis dimension")
        for k, v in self.charges.items():
            if np.shape(v) != (d,):
                raise InvalidArgument(f"charge labels {k!r} have wrong length")

    @property
    def dim(self) -> int:
        return self.basis.total_dim

    @property
    def charge_labels(self) -> np.ndarray | None:
        return self.charges.get("M")

    def labels(self, charge_id: str) -> np.ndarray:
        try:
            return self.charges[charge_id]
        except KeyError:
            raise InvalidArgument(f"spectrum has no labels for charge {charge_id!r}") from None

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.energies) @ V.conj().T


def _eigh(a: np.ndarray):
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"eigensolver failed on a {a.shape[0]}x{a.shape[0]} block: {exc}") from exc


def eig_hermitian(A: OperatorMatrix) -> LabeledSpectrum:
    if not A.hermitian:
        raise InvalidArgument("eig_hermitian requires an operator flagged Hermitian")
    e, v = _eigh(A.entries)
    return LabeledSpectrum(e, v, A.basis, np.full(A.dim, -1, dtype=np.int64))


def _offblock_norm(H: np.ndarray, labels: np.ndarray, chunk: int = 512) -> float:
    """Frobenius norm of ``[H, diag(labels)]``, evaluated in row chunks."""
    total = 0.0
    lab = labels.astype(float)
    for start in range(0, H.shape[0], chunk):
        rows = H[start:start + chunk]
        diff = lab[None, :] - lab[start:start + chunk, None]
        total += float(np.sum(np.abs(rows * diff) ** 2))
    return np.sqrt(total)


def _blockwise(H: OperatorMatrix, blocks, labels: np.ndarray, tol: float, what: str):
    h = H.entries
    hnorm = float(np.linalg.norm(h))
    comm = _offblock_norm(h, labels)
    if comm > tol * max(hnorm, 1e-300):
        raise ChargeNotConserved(f"{what} does not commute with H: |[H, Q]|_F = {comm:.3e}, |H|_F = {hnorm:.3e}")
    d = H.dim
    energies = np.empty(d)
    vectors = np.zeros((d, d), dtype=h.dtype)
    sector_of = np.empty(d, dtype=np.int64)
    col = 0
    for sid, idx in enumerate(blocks):
        k = len(idx)
        if k == 0:
            continue
        e, v = _eigh(h[np.ix_(idx, idx)])
        energies[col:col + k] = e
        vectors[idx, col:col + k] = v
        sector_of[col:col + k] = sid
        col += k
    return energies, vectors, sector_of


def eig_in_sectors(H: OperatorMatrix, sectors: list[MSector], charge_id: str = "M",
                   tol: float = 1e-8) -> LabeledSpectrum:
    """Diagonalize ``H`` inside each charge sector and label eigenstates by sector.

    Raises :class:`ChargeNotConserved` when ``|[H, M]|_F > tol |H|_F``.
    """
    labels = np.empty(H.dim, dtype=np.int64)
    covered = 0
    for s in sectors:
        labels[s.member_indices] = s.m_value
        covered += s.size
    if covered != H.dim:
        raise InvalidArgument("sectors do not partition the basis")
    e, v, sector_of = _blockwise(H, [s.member_indices for s in sectors], labels, tol, f"charge {charge_id!r}")
    m_of_sector = np.array([s.m_value for s in sectors], dtype=np.int64)
    return LabeledSpectrum(e, v, H.basis, sector_of, {charge_id: m_of_sector[sector_of]})


def parity_split_eig(H: OperatorMatrix, parity: OperatorMatrix, tol: float = 1e-8) -> LabeledSpectrum:
    """Diagonalize the even and odd parity blocks separately.

    ``sector_of`` is 0 for the even block and 1 for the odd block.
    """
    p = np.diag(parity.entries).real
    if not np.allclose(parity.entries, np.diag(p)) or not np.all(np.abs(np.abs(p) - 1) < 1e-12):
        raise InvalidArgument("parity must be diagonal with entries +-1")
    odd = (p < 0).astype(np.int64)
    blocks = [np.flatnonzero(odd == 0), np.flatnonzero(odd == 1)]
    e, v, sector_of = _blockwise(H, blocks, odd, tol, "parity")
    return LabeledSpectrum(e, v, H.basis, sector_of)


def diagonalize(p: DickeParams, H: OperatorMatrix | None = None) -> LabeledSpectrum:
    """Pick the cheapest exact decomposition for ``H(p)``.

    Integrable parameters are diagonalized per excitation-number sector and
    carry ``"M"`` labels; otherwise the parity blocks are used.
    """
    if H is None:
        H = build_hamiltonian(p)
    limit = conserved_limit(p)
    if limit is not None:
        return eig_in_sectors(H, m_sectors(p.N, p.n_max, limit))
    return parity_split_eig(H, build_parity(p.N, p.n_max))
