"""Checks of the (generalized) Jarzynski and Tasaki-Crooks relations on exact work PDFs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .ensembles import EnsembleWeights
from .spectra import LabeledSpectrum
from .tpm import WorkDistribution

__all__ = [
    "JarzynskiCheck",
    "CrooksCheck",
    "OccupationTable",
    "SUPPORT_FLOOR",
    "check_jarzynski",
    "check_generalized_jarzynski",
    "crooks_pair",
    "standard_exponent",
    "generalized_exponent",
    "occupation_comparison",
    "total_variation",
]

SUPPORT_FLOOR = 1e-12


@dataclass(frozen=True)
class JarzynskiCheck:
    exponential_average: float
    target: float
    residual: float
    log_average: float
    log_target: float


@dataclass(frozen=True, eq=False)
class CrooksCheck:
    """Pointwise comparison ``lhs = P_FW(v)`` vs ``rhs = P_BW(-v) exp(exponent(v))``.

    ``rel_dev = |lhs - rhs| / rhs``, the deviation of the forward PDF from
    the prediction built on the backward one.  Points whose mirrored value
    has no backward support get ``rhs = 0`` and count toward
    ``support_mismatch_mass`` instead of the maximum.
    """

    values: np.ndarray = field(repr=False)
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    rel_dev: np.ndarray = field(repr=False)
    max_rel_deviation: float
    support_mismatch_mass: float
    skipped_mass: float

    @property
    def points(self):
        return list(zip(self.values.tolist(), self.lhs.tolist(), self.rhs.tolist()))

    @property
    def max_log_deviation(self) -> float:
        ok = self.rhs > 0
        if not ok.any():
            return 0.0
        return float(np.abs(np.log(self.lhs[ok] / self.rhs[ok])).max())


def check_jarzynski(pdf: WorkDistribution, beta: float, deltaF: float) -> JarzynskiCheck:
    """Compare ``<exp(-beta w)>`` with ``exp(-beta deltaF)`` in the log domain."""
    log_avg = float(logsumexp(-beta * pdf.values, b=pdf.probabilities))
    log_target = -beta * deltaF
    # the log-domain fields stay exact when the linear ones overflow
    with np.errstate(over="ignore"):
        return JarzynskiCheck(
            float(np.exp(log_avg)), float(np.exp(log_target)),
            float(abs(np.expm1(log_avg - log_target))), log_avg, log_target,
        )


def check_generalized_jarzynski(pdf_W: WorkDistribution, deltaCalF: float) -> JarzynskiCheck:
    """``<exp(-W)> = exp(-dF)`` for the dimensionless generalized work."""
    return check_jarzynski(pdf_W, 1.0, deltaCalF)


def standard_exponent(beta: float, deltaF: float):
    return lambda w: beta * (w - deltaF)


def generalized_exponent(deltaCalF: float):
    return lambda W: W - deltaCalF


def crooks_pair(pdf_fw: WorkDistribution, pdf_bw: WorkDistribution, exponent,
                support_floor: float = SUPPORT_FLOOR, tol: float | None = None) -> CrooksCheck:
    if tol is None:
        tol = max(pdf_fw.binning_tol, pdf_bw.binning_tol)
    mirrored = -pdf_bw.values[::-1]
    bw_prob = pdf_bw.probabilities[::-1]

    sel = pdf_fw.probabilities > support_floor
    v = pdf_fw.values[sel]
    lhs = pdf_fw.probabilities[sel]
    skipped = float(pdf_fw.probabilities[~sel].sum())

    rhs = np.zeros_like(lhs)
    matched = np.zeros(len(v), dtype=bool)
    if len(mirrored):
        j = np.searchsorted(mirrored, v)
        lo = np.clip(j - 1, 0, len(mirrored) - 1)
        hi = np.clip(j, 0, len(mirrored) - 1)
        nearest = np.where(np.abs(mirrored[lo] - v) <= np.abs(mirrored[hi] - v), lo, hi)
        matched = np.abs(mirrored[nearest] - v) <= tol
        with np.errstate(over="ignore"):
            rhs[matched] = np.exp(np.log(bw_prob[nearest[matched]]) + exponent(v[matched]))
    rel = np.full(len(v), np.inf)
    rel[matched] = np.abs(lhs[matched] - rhs[matched]) / rhs[matched]
    max_rel = float(rel[matched].max()) if matched.any() else 0.0
    return CrooksCheck(v, lhs, rhs, rel, max_rel, float(lhs[~matched].sum()), skipped)


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass(frozen=True, eq=False)
class OccupationTable:
    index: np.ndarray
    energy: np.ndarray
    label: np.ndarray | None
    actual: np.ndarray
    reference: np.ndarray
    total_variation: float

    def by_charge(self):
        """Marginals over the charge label: ``(labels, actual, reference)``."""
        if self.label is None:
            raise ValueError("spectrum carries no charge labels")
        lab = self.label.astype(np.int64)
        a = np.bincount(lab, weights=self.actual)
        r = np.bincount(lab, weights=self.reference)
        keep = (a > 0) | (r > 0)
        return np.flatnonzero(keep), a[keep], r[keep]

    def by_energy(self, width: float | None = None, n_bins: int = 60):
        e = self.energy
        if width is None:
            width = (e.max() - e.min()) / n_bins or 1.0
        e0 = np.floor(e.min() / width) * width
        idx = np.floor((e - e0) / width).astype(np.int64)
        a = np.bincount(idx, weights=self.actual)
        r = np.bincount(idx, weights=self.reference)
        centers = e0 + (np.arange(len(a)) + 0.5) * width
        keep = (a > 0) | (r > 0)
        return centers[keep], a[keep], r[keep]


def occupation_comparison(diag_weights, ensemble: EnsembleWeights, spec: LabeledSpectrum) -> OccupationTable:
    actual = np.asarray(diag_weights, dtype=float)
    ref = ensemble.probabilities
    if actual.shape != ref.shape or actual.shape != (spec.dim,):
        raise ValueError("occupation vectors do not match the spectrum")
    return OccupationTable(np.arange(spec.dim), spec.energies, spec.charge_labels, actual, ref,
                           total_variation(actual, ref))
