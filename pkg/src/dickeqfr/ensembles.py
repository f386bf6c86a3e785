"""Gibbs and generalized Gibbs ensembles on a labeled spectrum.

All ensembles here are diagonal in the (joint) eigenbasis of the Hamiltonian
and its charges, so an ensemble is a probability vector over eigenstates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import InfeasibleTarget, InvalidArgument, NumericFailure
from .hilbert import OperatorMatrix
from .spectra import LabeledSpectrum

__all__ = [
    "BetaVector",
    "EnsembleWeights",
    "FitTargets",
    "gge_weights",
    "expectation",
    "moment_jacobian",
    "fit_gibbs_beta",
    "fit_temperatures",
    "generalized_free_energy",
    "free_energy",
    "truncated_mass",
]

log = logging.getLogger(__name__)

ENERGY = "energy"


def _pairs(x) -> tuple:
    if x is None:
        return ()
    items = x.items() if isinstance(x, Mapping) else x
    return tuple((str(k), float(v)) for k, v in items)


@dataclass(frozen=True)
class BetaVector:
    """Inverse temperature plus generalized inverse temperatures keyed by charge id."""

    beta: float
    charge_betas: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "charge_betas", _pairs(self.charge_betas))
        ids = [k for k, _ in self.charge_betas]
        if len(set(ids)) != len(ids):
            raise InvalidArgument(f"duplicate charge ids in {ids}")

    def as_dict(self) -> dict:
        return dict(self.charge_betas)

    def get(self, charge_id: str, default: float = 0.0) -> float:
        return self.as_dict().get(charge_id, default)

    def with_charges(self, **betas) -> "BetaVector":
        d = self.as_dict()
        d.update(betas)
        return BetaVector(self.beta, d)


@dataclass(frozen=True, eq=False)
class EnsembleWeights:
    probabilities: np.ndarray = field(repr=False)
    log_partition: float


@dataclass(frozen=True)
class FitTargets:
    energy_target: float
    charge_targets: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "charge_targets", _pairs(self.charge_targets))


def _exponent(spec: LabeledSpectrum, betas: BetaVector) -> np.ndarray:
    x = -betas.beta * spec.energies
    for cid, bk in betas.charge_betas:
        if bk != 0.0 or cid in spec.charges:
            x = x - bk * spec.labels(cid)
    return x


def gge_weights(spec: LabeledSpectrum, betas: BetaVector) -> EnsembleWeights:
    """Weights ``exp(-beta E_n - sum_k beta_k M_kn) / Z`` computed in the log domain."""
    x = _exponent(spec, betas)
    logz = float(logsumexp(x))
    return EnsembleWeights(np.exp(x - logz), logz)


def _observable_diagonal(spec: LabeledSpectrum, observable) -> np.ndarray:
    if isinstance(observable, OperatorMatrix):
        if observable.basis != spec.basis:
            raise InvalidArgument("observable basis does not match spectrum")
        V = spec.eigenvectors
        return np.einsum("in,in->n", V.conj(), observable.entries @ V).real
    if observable == ENERGY:
        return spec.energies
    return spec.labels(observable)


def expectation(spec: LabeledSpectrum, w: EnsembleWeights, observable=ENERGY) -> float:
    """``tr(rho O)`` for ``"energy"``, a charge id, or an explicit operator."""
    p = w.probabilities
    if p.shape != (spec.dim,):
        raise InvalidArgument("weights do not match spectrum dimension")
    return float(p @ _observable_diagonal(spec, observable))


def _features(spec, charge_ids):
    return np.column_stack([spec.energies] + [spec.labels(c).astype(float) for c in charge_ids])


def _moments(X, p):
    mean = p @ X
    d = X - mean
    cov = (d * p[:, None]).T @ d
    return mean, cov


def moment_jacobian(spec: LabeledSpectrum, betas: BetaVector, charge_ids=None) -> np.ndarray:
    """``d<A_i>/d beta_j = -Cov(A_i, A_j)`` with ``A = (H, M_1, ...)``."""
    if charge_ids is None:
        charge_ids = [c for c, _ in betas.charge_betas]
    X = _features(spec, charge_ids)
    _, cov = _moments(X, gge_weights(spec, betas).probabilities)
    return -cov


def _check_interior(values, target, name):
    lo, hi = float(np.min(values)), float(np.max(values))
    if not lo < target < hi:
        raise InfeasibleTarget(f"target <{name}> = {target} outside attainable range ({lo}, {hi})")


def fit_gibbs_beta(spec: LabeledSpectrum, energy_target: float, xtol: float = 1e-15) -> float:
    """Solve ``<H>_beta = energy_target`` for a Gibbs state by bracketing.

    Only positive temperatures are searched.
    """
    E = spec.energies
    _check_interior(E, energy_target, "H")

    def resid(b):
        return float(gge_weights(spec, BetaVector(b)).probabilities @ E) - energy_target

    if resid(0.0) <= 0.0:
        raise InfeasibleTarget(
            f"energy target {energy_target} is not below the infinite-temperature mean {E.mean()}"
        )
    scale = max(float(E.max() - E.min()), 1e-300)
    hi = 1.0 / scale
    while resid(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6 / scale:
            raise NumericFailure("could not bracket the Gibbs inverse temperature")
    return brentq(resid, 0.0, hi, xtol=xtol * hi, rtol=4 * np.finfo(float).eps, maxiter=500)


def fit_temperatures(spec: LabeledSpectrum, targets: FitTargets, initial_guess: BetaVector | None = None,
                     rtol: float = 1e-8, max_iter: int = 200) -> BetaVector:
    """Match ``<H>`` and every ``<M_k>`` to their targets.

    Newton iteration on the convex function ``ln Z(b) + b . target`` whose
    gradient is the moment residual and whose Hessian is the covariance
    matrix.  Steps are backtracked on that function; if no descent step is
    found the iteration switches to Levenberg-style damping.
    """
    charge_ids = [c for c, _ in targets.charge_targets]
    target = np.array([targets.energy_target] + [t for _, t in targets.charge_targets])
    X = _features(spec, charge_ids)
    for j, name in enumerate(["H"] + charge_ids):
        _check_interior(X[:, j], target[j], name)
    tol = rtol * np.maximum(1.0, np.abs(target))

    if initial_guess is None:
        try:
            b0 = fit_gibbs_beta(spec, targets.energy_target)
        except (InfeasibleTarget, NumericFailure):
            b0 = 0.0
        theta = np.array([b0] + [0.0] * len(charge_ids))
    else:
        theta = np.array([initial_guess.beta] + [initial_guess.get(c) for c in charge_ids])

    def state(th):
        x = -(X @ th)
        logz = float(logsumexp(x))
        p = np.exp(x - logz)
        mean, cov = _moments(X, p)
        return logz + th @ target, mean - target, cov

    phi, r, cov = state(theta)
    lam = 0.0
    for it in range(max_iter):
        if np.all(np.abs(r) <= tol * 1e-2):
            break
        # Newton direction on rescaled variables; cov is the Hessian of phi
        d = np.sqrt(np.clip(np.diag(cov), 1e-300, None))
        hs = cov / np.outer(d, d)
        gs = -r / d
        step = None
        if lam == 0.0:
            try:
                step = np.linalg.solve(hs, -gs) / d
            except np.linalg.LinAlgError:
                lam = 1e-3
        if step is not None:
            t = 1.0
            while t > 1e-12:
                cand = theta + t * step
                phi_c, r_c, cov_c = state(cand)
                if np.isfinite(phi_c) and phi_c <= phi + 1e-4 * t * (gs @ (step * d)):
                    break
                t *= 0.5
            else:
                lam = 1e-3
                step = None
        if step is None:
            # Levenberg damping on the same residuals
            accepted = False
            while lam < 1e12:
                s = np.linalg.solve(hs + lam * np.eye(len(d)), -gs) / d
                cand = theta + s
                phi_c, r_c, cov_c = state(cand)
                if np.isfinite(phi_c) and phi_c < phi:
                    accepted = True
                    lam = max(lam / 10.0, 1e-12)
                    break
                lam *= 10.0
            if not accepted:
                break
        theta, phi, r, cov = cand, phi_c, r_c, cov_c
    else:
        it = max_iter
    if not np.all(np.abs(r) <= tol):
        raise NumericFailure(f"temperature fit did not converge after {it} iterations; residual {r.tolist()}")
    log.debug("fit converged in %d iterations, residual %s", it, r)
    return BetaVector(theta[0], dict(zip(charge_ids, theta[1:].tolist())))


def generalized_free_energy(spec: LabeledSpectrum, betas: BetaVector) -> float:
    """Dimensionless ``-ln Z_GGE``."""
    return -gge_weights(spec, betas).log_partition


def free_energy(spec: LabeledSpectrum, beta: float) -> float:
    """Gibbs free energy ``-ln Z / beta`` in energy units."""
    if beta == 0.0:
        raise InvalidArgument("free energy undefined at beta = 0")
    return generalized_free_energy(spec, BetaVector(beta)) / beta


def truncated_mass(spec: LabeledSpectrum, probabilities: np.ndarray) -> float:
    """Probability carried by excitation-number sectors clipped by the Fock cutoff.

    For labeled spectra this reads the labels; otherwise it projects each
    eigenstate onto the clipped basis states.
    """
    n_max = spec.basis.n_max
    labels = spec.charges.get("M")
    if labels is not None:
        return float(probabilities[labels > n_max].sum())
    from .model import charge_labels

    clipped = charge_labels(spec.basis.n_spins, n_max) > n_max
    V = spec.eigenvectors[clipped]
    return float(np.sum((np.abs(V) ** 2) @ probabilities))
