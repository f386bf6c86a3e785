"""Shared harness: run one exact forward/backward TPM instance and measure the fluctuation relations."""
import numpy as np

from dickeqfr.ensembles import BetaVector, gge_weights
from dickeqfr.model import DickeParams
from dickeqfr.qfr import (check_generalized_jarzynski, check_jarzynski, crooks_pair, generalized_exponent,
                          standard_exponent)
from dickeqfr.spectra import diagonalize
from dickeqfr.tpm import QuenchSchedule, backward_protocol, forward_protocol, propagator


def _betas(spec, beta, beta_m):
    if beta_m is not None and "M" in spec.charges:
        return BetaVector(beta, {"M": beta_m})
    return BetaVector(beta)


def run_instance(p_ini: DickeParams, p_fin: DickeParams, beta, beta_fin, beta_m=None, beta_m_fin=None,
                 segments=()):
    """Exact Gibbs/GGE initial state forward, exact reference state backward.

    Returns the worst residuals of the standard and generalized relations.
    ``beta_m`` values are dropped where the Hamiltonian has no labels.
    """
    si, sf = diagonalize(p_ini), diagonalize(p_fin)
    U = propagator(QuenchSchedule(tuple(segments)), p_ini.basis) if segments else None

    # standard relations: Gibbs at one temperature on both ends
    b = BetaVector(beta)
    fw = forward_protocol(si, sf, U, b)
    bw = backward_protocol(sf, si, U, b, forward=fw.transitions)
    logz_i = gge_weights(si, b).log_partition
    logz_f = gge_weights(sf, b).log_partition
    dF = -(logz_f - logz_i) / beta
    jar = check_jarzynski(fw.pdf_w, beta, dF)
    cro = crooks_pair(fw.pdf_w, bw.pdf_w, standard_exponent(beta, dF))

    # generalized relations: GGE (or Gibbs) with independent temperatures on each end
    bi, bf = _betas(si, beta, beta_m), _betas(sf, beta_fin, beta_m_fin)
    gfw = forward_protocol(si, sf, U, bi, bf, transitions=fw.transitions)
    gbw = backward_protocol(sf, si, U, bf, bi, forward=fw.transitions)
    dcalF = -(gge_weights(sf, bf).log_partition - gge_weights(si, bi).log_partition)
    gjar = check_generalized_jarzynski(gfw.pdf_W, dcalF)
    gjar_bw = check_generalized_jarzynski(gbw.pdf_W, -dcalF)
    gcro = crooks_pair(gfw.pdf_W, gbw.pdf_W, generalized_exponent(dcalF))

    return {
        "jarzynski": jar.residual,
        "crooks": cro.max_rel_deviation,
        "crooks_mismatch": cro.support_mismatch_mass,
        "generalized_jarzynski": max(gjar.residual, gjar_bw.residual),
        "generalized_crooks": gcro.max_rel_deviation,
        "generalized_crooks_mismatch": gcro.support_mismatch_mass,
        "stochastic": fw.transitions.max_stochastic_error(),
        "norm": max(abs(x.total() - 1) for x in (fw.pdf_w, bw.pdf_w, gfw.pdf_W, gbw.pdf_W)),
        "labels": ("M" in si.charges, "M" in sf.charges),
    }


def random_instance(draw_float, draw_choice, draw_int):
    """Build the argument tuple of ``run_instance`` from three draw callables."""
    N = draw_choice([1, 2, 3])
    n_max = draw_int(max(10, N), 40)

    def params():
        return DickeParams(N=N, omega_b=3.0, omega_at=10.0, g=draw_float(0.0, 8.0),
                           alpha=draw_choice([0.0, 0.5, 1.0]), n_max=n_max)

    p_ini, p_fin = params(), params()
    segments = ()
    if draw_choice(["sudden", "two-segment"]) == "two-segment":
        segments = ((draw_float(0.05, 2.0), params()), (draw_float(0.05, 2.0), p_fin))
    kw = dict(beta=draw_float(1e-3, 1.0), beta_fin=draw_float(1e-3, 1.0),
              beta_m=draw_float(1e-3, 1.0), beta_m_fin=draw_float(1e-3, 1.0))
    return p_ini, p_fin, segments, kw
