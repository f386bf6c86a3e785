"""Two-projective-measurement protocol: propagators, transition probabilities and work PDFs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .ensembles import BetaVector, EnsembleWeights, _exponent, gge_weights
from .errors import InvalidArgument, NumericFailure
from .hilbert import BasisDescriptor, OperatorMatrix, identity
from .model import DickeParams, build_hamiltonian
from .spectra import LabeledSpectrum, diagonalize

__all__ = [
    "QuenchSchedule",
    "TransitionMatrix",
    "WorkDistribution",
    "ProtocolOutcome",
    "propagator",
    "transition_matrix",
    "forward_work_pdf",
    "generalized_work_pdf",
    "forward_protocol",
    "backward_protocol",
    "sample_work",
    "BINNING_TOL",
]

BINNING_TOL = 1e-9


@dataclass(frozen=True)
class QuenchSchedule:
    """Piecewise-constant drive; each segment is ``(duration, DickeParams)``.

    An empty schedule is a sudden quench.
    """

    segments: tuple = ()

    def __post_init__(self):
        segs = tuple((float(t), p) for t, p in self.segments)
        for t, p in segs:
            if not t >= 0:
                raise InvalidArgument(f"segment duration must be >= 0, got {t}")
            if not isinstance(p, DickeParams):
                raise InvalidArgument("segment parameters must be DickeParams")
        object.__setattr__(self, "segments", segs)

    @property
    def is_sudden(self) -> bool:
        return all(t == 0.0 for t, _ in self.segments)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """``probs[m, n] = |<m'|U|n>|^2``; rows are final eigenstates, columns initial ones."""

    probs: np.ndarray = field(repr=False)

    def transpose(self) -> "TransitionMatrix":
        return TransitionMatrix(self.probs.T)

    def max_stochastic_error(self) -> float:
        p = self.probs
        return float(max(np.abs(p.sum(axis=0) - 1).max(), np.abs(p.sum(axis=1) - 1).max()))


@dataclass(frozen=True, eq=False)
class WorkDistribution:
    """Exact discrete PDF on strictly increasing support values.

    ``pruned_mass`` is the probability of pair events dropped below the
    pruning floor (zero unless pruning was requested).
    """

    values: np.ndarray
    probabilities: np.ndarray
    binning_tol: float = BINNING_TOL
    pruned_mass: float = 0.0

    def __len__(self):
        return len(self.values)

    @property
    def support(self):
        return list(zip(self.values.tolist(), self.probabilities.tolist()))

    def mean(self) -> float:
        return float(self.values @ self.probabilities)

    def total(self) -> float:
        return float(self.probabilities.sum())

    def binned(self, width: float | None = None, n_bins: int = 60):
        """Histogram view for display: ``(bin_centers, probability_per_bin)``."""
        v = self.values
        if width is None:
            span = v[-1] - v[0]
            width = span / n_bins if span > 0 else 1.0
        if width <= 0:
            raise InvalidArgument("bin width must be positive")
        edges0 = np.floor(v[0] / width) * width
        idx = np.floor((v - edges0) / width).astype(np.int64)
        probs = np.bincount(idx, weights=self.probabilities)
        keep = probs > 0
        centers = edges0 + (np.arange(len(probs)) + 0.5) * width
        return centers[keep], probs[keep]

    @classmethod
    def from_pairs(cls, values, probabilities, binning_tol: float = BINNING_TOL, pruned_mass: float = 0.0):
        """Merge raw ``(value, probability)`` events whose values chain within ``binning_tol``.

        The merge is symmetric under ``v -> -v``: each merged point sits at the
        midpoint of its cluster.
        """
        values = np.asarray(values, dtype=float)
        probabilities = np.asarray(probabilities, dtype=float)
        order = np.argsort(values, kind="stable")
        v = values[order]
        p = probabilities[order]
        if len(v) == 0:
            return cls(v, p, binning_tol, pruned_mass)
        starts = np.concatenate([[0], np.flatnonzero(np.diff(v) > binning_tol) + 1])
        ends = np.concatenate([starts[1:], [len(v)]]) - 1
        merged_v = 0.5 * (v[starts] + v[ends])
        merged_p = np.add.reduceat(p, starts)
        return cls(merged_v, merged_p, binning_tol, pruned_mass)


@dataclass(frozen=True, eq=False)
class ProtocolOutcome:
    initial_weights: np.ndarray = field(repr=False)
    transitions: TransitionMatrix = field(repr=False)
    diag_weights_final: np.ndarray = field(repr=False)
    pdf_w: WorkDistribution
    pdf_W: WorkDistribution | None = None


def propagator(schedule: QuenchSchedule, basis: BasisDescriptor) -> OperatorMatrix:
    """Ordered product of ``exp(-i H_k t_k)``, later segments to the left."""
    U = None
    for t, p in schedule.segments:
        if p.basis != basis:
            raise InvalidArgument(f"segment basis {p.basis} differs from {basis}")
        if t == 0.0:
            continue
        spec = diagonalize(p)
        V = spec.eigenvectors
        seg = (V * np.exp(-1j * spec.energies * t)) @ V.conj().T
        U = seg if U is None else seg @ U
    if U is None:
        return identity(basis)
    return OperatorMatrix(basis, U)


def transition_matrix(spec_ini: LabeledSpectrum, spec_fin: LabeledSpectrum,
                      U: OperatorMatrix | None = None, tol: float = 1e-9) -> TransitionMatrix:
    """Squared overlaps between evolved initial eigenstates and final eigenstates.

    ``U=None`` is the sudden quench (identity propagator) and skips the
    multiplication.
    """
    if spec_ini.basis != spec_fin.basis:
        raise InvalidArgument("initial and final spectra live on different bases")
    Vi = spec_ini.eigenvectors
    if U is not None:
        if U.basis != spec_ini.basis:
            raise InvalidArgument("propagator basis does not match spectra")
        u = U.entries
        err = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
        if err > 1e-6:
            raise NumericFailure(f"propagator is not unitary (max |U^dag U - 1| = {err:.2e})")
        Vi = u @ Vi
    amp = spec_fin.eigenvectors.conj().T @ Vi
    if np.iscomplexobj(amp):
        probs = amp.real ** 2 + amp.imag ** 2
    else:
        probs = np.square(amp, out=amp)
    T = TransitionMatrix(probs)
    err = T.max_stochastic_error()
    if err > tol:
        raise NumericFailure(f"transition matrix not doubly stochastic (max deviation {err:.2e})")
    return T


def _pair_pdf(p_ini, T: TransitionMatrix, final_term, initial_term, binning_tol, prune_floor, tilt,
              chunk: int = 256) -> WorkDistribution:
    """PDF of ``final_term[m] - initial_term[n]`` under ``p_ini[n] T[m, n]``.

    With ``prune_floor > 0`` a pair event is dropped only if it is below the
    floor both in probability and in its share of ``<exp(-tilt * v)>``.
    """
    p = p_ini.probabilities if isinstance(p_ini, EnsembleWeights) else np.asarray(p_ini)
    P = T.probs
    if P.shape != (len(final_term), len(initial_term)) or p.shape != (len(initial_term),):
        raise InvalidArgument("dimension mismatch between weights, transitions and spectra")
    a = np.asarray(final_term, dtype=float)
    b = np.asarray(initial_term, dtype=float)
    cols = np.flatnonzero(p > 0)
    chunks = np.array_split(cols, max(1, len(cols) // chunk))

    def log_tilted(c):
        joint = P[:, c] * p[c]
        with np.errstate(divide="ignore"):
            return np.log(joint) - tilt * (a[:, None] - b[None, c])

    if prune_floor > 0:
        # exact log-normalization of the tilted measure, over all pairs
        log_norm = float(logsumexp([logsumexp(log_tilted(c)) for c in chunks]))
    vals, probs = [], []
    pruned = 0.0
    for c in chunks:
        joint = P[:, c] * p[c]
        v = a[:, None] - b[None, c]
        keep = joint > 0
        if prune_floor > 0:
            keep &= (joint > prune_floor) | (log_tilted(c) - log_norm > np.log(prune_floor))
            pruned += float(joint[~keep].sum())
        vals.append(v[keep])
        probs.append(joint[keep])
    return WorkDistribution.from_pairs(np.concatenate(vals), np.concatenate(probs), binning_tol, pruned)


def forward_work_pdf(p_ini, T: TransitionMatrix, spec_ini: LabeledSpectrum, spec_fin: LabeledSpectrum,
                     binning_tol: float = BINNING_TOL, prune_floor: float = 0.0, tilt_beta: float = 0.0):
    """Distribution of ``w = E'_m - E_n``."""
    return _pair_pdf(p_ini, T, spec_fin.energies, spec_ini.energies, binning_tol, prune_floor, tilt_beta)


def generalized_work_pdf(p_ini, T: TransitionMatrix, spec_ini: LabeledSpectrum, spec_fin: LabeledSpectrum,
                         betas_ini: BetaVector, betas_fin: BetaVector,
                         binning_tol: float = BINNING_TOL, prune_floor: float = 0.0):
    """Distribution of the dimensionless generalized work

    ``(b' E'_m + sum_k b'_k M'_km) - (b E_n + sum_k b_k M_kn)``.
    """
    a = -_exponent(spec_fin, betas_fin)
    b = -_exponent(spec_ini, betas_ini)
    return _pair_pdf(p_ini, T, a, b, binning_tol, prune_floor, 1.0)


def forward_protocol(spec_ini: LabeledSpectrum, spec_fin: LabeledSpectrum, U: OperatorMatrix | None,
                     betas_ini: BetaVector, betas_fin: BetaVector | None = None, *,
                     transitions: TransitionMatrix | None = None, initial_weights=None,
                     binning_tol: float = BINNING_TOL, prune_floor: float = 0.0) -> ProtocolOutcome:
    """Run the forward TPM protocol from ``gge_weights(spec_ini, betas_ini)``.

    ``initial_weights`` overrides the ensemble (``betas_ini`` still defines
    the generalized work).  ``pdf_W`` is built only when ``betas_fin`` is given.
    """
    T = transitions if transitions is not None else transition_matrix(spec_ini, spec_fin, U)
    p = gge_weights(spec_ini, betas_ini).probabilities if initial_weights is None else np.asarray(initial_weights)
    final = T.probs @ p
    pdf_w = forward_work_pdf(p, T, spec_ini, spec_fin, binning_tol, prune_floor, betas_ini.beta)
    pdf_W = None
    if betas_fin is not None:
        pdf_W = generalized_work_pdf(p, T, spec_ini, spec_fin, betas_ini, betas_fin, binning_tol, prune_floor)
    return ProtocolOutcome(p, T, final, pdf_w, pdf_W)


def backward_protocol(spec_fin: LabeledSpectrum, spec_ini: LabeledSpectrum, U: OperatorMatrix | None,
                      betas_bw: BetaVector, betas_end: BetaVector | None = None, *,
                      forward: TransitionMatrix | None = None, initial_weights=None,
                      binning_tol: float = BINNING_TOL, prune_floor: float = 0.0) -> ProtocolOutcome:
    """Time-reversed protocol: start on ``H'`` and evolve with ``U^-1`` back to ``H``.

    The backward transition matrix is the transpose of the forward one.
    ``betas_end`` are the temperatures attached to ``H`` (the forward initial
    ones) and enter the backward generalized work, so that generalized
    Crooks compares ``P_FW(W)`` with ``P_BW(-W)``.
    """
    if forward is None:
        forward = transition_matrix(spec_ini, spec_fin, U)
    return forward_protocol(spec_fin, spec_ini, None, betas_bw, betas_end, transitions=forward.transpose(),
                            initial_weights=initial_weights, binning_tol=binning_tol, prune_floor=prune_floor)


def sample_work(p_ini, T: TransitionMatrix, spec_ini: LabeledSpectrum, spec_fin: LabeledSpectrum,
                size: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Draw TPM outcomes ``(n, m)`` and return the sampled work values.

    Display only; the theorem checks always use the exact distributions.
    """
    rng = np.random.default_rng(rng)
    p = p_ini.probabilities if isinstance(p_ini, EnsembleWeights) else np.asarray(p_ini)
    n = rng.choice(len(p), size=size, p=p / p.sum())
    cdf = np.cumsum(T.probs[:, n], axis=0)
    u = rng.random(size) * cdf[-1]
    m = (cdf < u).sum(axis=0)
    return spec_fin.energies[m] - spec_ini.energies[n]
