"""Quench experiment runner: forward quench, dephasing, reference fits, backward protocol, checks."""
from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cache import cached_diagonalize
from .config import ExperimentConfig
from .ensembles import (BetaVector, FitTargets, fit_temperatures, gge_weights, generalized_free_energy,
                        truncated_mass)
from .errors import InvalidArgument, TruncationGuardViolation
from .qfr import (check_generalized_jarzynski, check_jarzynski, crooks_pair, generalized_exponent,
                  occupation_comparison, standard_exponent)
from .tpm import (WorkDistribution, forward_work_pdf, generalized_work_pdf, propagator, sample_work,
                  transition_matrix)

log = logging.getLogger(__name__)

__all__ = ["ExperimentResult", "run_experiment", "write_pdf_csv", "read_pdf_csv"]


@dataclass
class ExperimentResult:
    summary: dict
    output_dir: Path | None
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    crooks: dict = field(default_factory=dict, repr=False)
    occupations: dict = field(default_factory=dict, repr=False)


def _fmt_row(values) -> str:
    return ",".join("%.17g" % v for v in values)


def _write_csv(path: Path, header, columns):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(_fmt_row(row) + "\n")


def write_pdf_csv(path: Path, pdf: WorkDistribution):
    _write_csv(path, ["value", "probability"], [pdf.values, pdf.probabilities])


def read_pdf_csv(path) -> WorkDistribution:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return WorkDistribution(data[:, 0], data[:, 1])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _betas_dict(b: BetaVector) -> dict:
    return {"beta": b.beta, **{f"beta_{k}": v for k, v in b.charge_betas}}


def _jcheck(c) -> dict:
    return {"exponential_average": c.exponential_average, "target": c.target, "residual": c.residual,
            "log_average": c.log_average, "log_target": c.log_target}


def _ccheck(c) -> dict:
    return {"max_rel_deviation": c.max_rel_deviation, "max_log_deviation": c.max_log_deviation,
            "support_mismatch_mass": c.support_mismatch_mass, "skipped_mass": c.skipped_mass,
            "n_points": int(len(c.values))}


@contextmanager
def _thread_limit(threads):
    if not threads:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=threads):
        yield


class _Timer:
    def __init__(self):
        self.timings = {}
        self._t = time.perf_counter()

    def lap(self, name):
        now = time.perf_counter()
        self.timings[name] = now - self._t
        self._t = now


def run_experiment(config: ExperimentConfig, output_dir=None, cache_dir=None, threads: int | None = None,
                   write: bool = True) -> ExperimentResult:
    """Execute the quench protocol described by ``config``.

    Output files are written to ``output_dir`` (default: the configured
    directory).  A truncation-guard violation raises
    :class:`TruncationGuardViolation` after the outputs are written.
    """
    with _thread_limit(threads):
        return _run(config, output_dir, cache_dir, write)


def _run(cfg: ExperimentConfig, output_dir, cache_dir, write) -> ExperimentResult:
    timer = _Timer()
    out = Path(output_dir) if output_dir is not None else cfg.outputs.directory
    formats = set(cfg.outputs.formats)
    files = []
    if write:
        out.mkdir(parents=True, exist_ok=True)
    tol = cfg.outputs.binning_tol
    floor = cfg.outputs.prune_floor

    spec_i = cached_diagonalize(cfg.model_initial, cache_dir)
    timer.lap("diagonalize_initial")
    spec_f = cached_diagonalize(cfg.model_final, cache_dir)
    timer.lap("diagonalize_final")

    betas_i = cfg.initial_ensemble.betas
    p_ini = gge_weights(spec_i, betas_i)
    U = None if cfg.schedule.is_sudden else propagator(cfg.schedule, cfg.model_initial.basis)
    T = transition_matrix(spec_i, spec_f, U)
    actual = T.probs @ p_ini.probabilities
    timer.lap("transitions")

    e_bar = float(actual @ spec_f.energies)
    has_m = "M" in spec_f.charges
    m_bar = float(actual @ spec_f.charges["M"]) if has_m else None
    refs: dict[str, BetaVector] = {}
    if has_m:
        refs["gge"] = fit_temperatures(spec_f, FitTargets(e_bar, {"M": m_bar}))
    refs["gibbs"] = fit_temperatures(spec_f, FitTargets(e_bar))
    if cfg.backward_reference.kind == "explicit-betas":
        refs["explicit"] = cfg.backward_reference.betas
    primary = {"fitted-gge": "gge", "fitted-gibbs": "gibbs", "explicit-betas": "explicit"}[
        cfg.backward_reference.kind]
    if primary not in refs:
        raise InvalidArgument(f"backward reference {primary!r} unavailable for this final Hamiltonian")
    ref_w = {k: gge_weights(spec_f, b) for k, b in refs.items()}
    timer.lap("fits")

    def bw_start(name):
        if cfg.backward_reference.start == "reference":
            return ref_w[name].probabilities
        return actual

    guard = {"initial": truncated_mass(spec_i, p_ini.probabilities), "actual": truncated_mass(spec_f, actual)}
    guard.update({k: truncated_mass(spec_f, w.probabilities) for k, w in ref_w.items()})

    # occupations
    occ = {k: occupation_comparison(actual, w, spec_f) for k, w in ref_w.items()}
    if write and "csv" in formats:
        labels = spec_f.charges.get("M", np.full(spec_f.dim, -1))
        cols = [np.arange(spec_f.dim), spec_f.energies, labels, actual,
                ref_w["gge"].probabilities if "gge" in ref_w else np.full(spec_f.dim, np.nan),
                ref_w["gibbs"].probabilities]
        header = ["index", "energy", "M_label", "actual_weight", "gge_weight", "gibbs_weight"]
        if "explicit" in ref_w:
            cols.append(ref_w["explicit"].probabilities)
            header.append("explicit_weight")
        _write_csv(out / "occupations.csv", header, cols)
        files.append("occupations.csv")
        centers, a, r = occ[primary].by_energy(cfg.outputs.display_bin_width)
        _write_csv(out / "occupations_binned.csv", ["energy", "actual_weight", f"{primary}_weight"], [centers, a, r])
        files.append("occupations_binned.csv")

    def emit_pdf(name, pdf):
        if not (write and "csv" in formats):
            return
        write_pdf_csv(out / f"{name}.csv", pdf)
        c, p = pdf.binned(cfg.outputs.display_bin_width)
        _write_csv(out / f"{name}_binned.csv", ["value", "probability"], [c, p])
        files.extend([f"{name}.csv", f"{name}_binned.csv"])

    def emit_crooks(name, chk):
        if not (write and "csv" in formats):
            return
        _write_csv(out / f"{name}.csv", ["value", "lhs", "rhs", "rel_dev"], [chk.values, chk.lhs, chk.rhs, chk.rel_dev])
        files.append(f"{name}.csv")

    # standard work, forward initial temperature
    beta = betas_i.beta
    logz_i_beta = -generalized_free_energy(spec_i, BetaVector(beta))
    logz_f_beta = -generalized_free_energy(spec_f, BetaVector(beta))
    beta_dF = -(logz_f_beta - logz_i_beta)
    T_bw = T.transpose()
    pdf_w_fw = forward_work_pdf(p_ini, T, spec_i, spec_f, tol, floor, beta)
    p_bw_primary = bw_start(primary)
    pdf_w_bw = forward_work_pdf(p_bw_primary, T_bw, spec_f, spec_i, tol, floor, refs[primary].beta)
    emit_pdf("pdf_w_fw", pdf_w_fw)
    emit_pdf("pdf_w_bw", pdf_w_bw)
    jar = {"fw_standard": _jcheck(check_jarzynski(pdf_w_fw, beta, beta_dF / beta if beta else 0.0))}
    crooks_std = crooks_pair(pdf_w_fw, pdf_w_bw, lambda w: beta * w - beta_dF)
    emit_crooks("crooks_standard", crooks_std)
    norms = {"pdf_w_fw": pdf_w_fw.total(), "pdf_w_bw": pdf_w_bw.total()}
    pruned = {"pdf_w_fw": pdf_w_fw.pruned_mass, "pdf_w_bw": pdf_w_bw.pruned_mass}
    del pdf_w_fw, pdf_w_bw
    timer.lap("pdf_w")

    logz_i = p_ini.log_partition
    delta_calF = {}
    crooks = {"standard": crooks_std}
    for name, b in refs.items():
        dcalF = -(ref_w[name].log_partition - logz_i)
        delta_calF[name] = dcalF
        fw = generalized_work_pdf(p_ini, T, spec_i, spec_f, betas_i, b, tol, floor)
        bw = generalized_work_pdf(bw_start(name), T_bw, spec_f, spec_i, b, betas_i, tol, floor)
        if name == primary:
            emit_pdf("pdf_W_fw", fw)
            emit_pdf("pdf_W_bw", bw)
        jar[f"fw_generalized_{name}"] = _jcheck(check_generalized_jarzynski(fw, dcalF))
        jar[f"bw_generalized_{name}"] = _jcheck(check_generalized_jarzynski(bw, -dcalF))
        chk = crooks_pair(fw, bw, generalized_exponent(dcalF))
        crooks[name] = chk
        emit_crooks(f"crooks_{name}", chk)
        norms[f"pdf_W_fw_{name}"] = fw.total()
        norms[f"pdf_W_bw_{name}"] = bw.total()
        pruned[f"pdf_W_fw_{name}"] = fw.pruned_mass
        pruned[f"pdf_W_bw_{name}"] = bw.pruned_mass
        del fw, bw
    timer.lap("pdf_W")

    if cfg.samples > 0 and write and "csv" in formats:
        s = sample_work(p_ini, T, spec_i, spec_f, cfg.samples, cfg.seeds)
        _write_csv(out / "samples_w_fw.csv", ["value"], [s])
        files.append("samples_w_fw.csv")

    summary = {
        "model_initial": cfg.model_initial.to_dict(),
        "model_final": cfg.model_final.to_dict(),
        "initial_betas": _betas_dict(betas_i),
        "schedule": [{"duration": t, **p.to_dict()} for t, p in cfg.schedule.segments],
        "backward_reference": {"kind": cfg.backward_reference.kind, "start": cfg.backward_reference.start},
        "targets": {"energy": e_bar, "M": m_bar},
        "fitted": {k: _betas_dict(b) for k, b in refs.items()},
        "delta_calF": delta_calF,
        "beta_deltaF": beta_dF,
        "deltaF": beta_dF / beta if beta else None,
        "jarzynski": jar,
        "crooks": {k: _ccheck(c) for k, c in crooks.items()},
        "occupations": {k: {"total_variation": o.total_variation} for k, o in occ.items()},
        "truncation_mass": guard,
        "transition_stochastic_error": T.max_stochastic_error(),
        "pdf_totals": norms,
        "pruned_mass": pruned,
        "binning_tol": tol,
        "prune_floor": floor,
    }
    summary = _jsonable(summary)
    timer.lap("checks")
    if write and "json" in formats:
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "timings.json").write_text(json.dumps(timer.timings, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
        files.extend(["summary.json", "timings.json"])

    result = ExperimentResult(summary, out if write else None, files, timer.timings, crooks, occ)
    worst = max(guard.values())
    if worst > cfg.outputs.truncation_guard:
        bad = {k: v for k, v in guard.items() if v > cfg.outputs.truncation_guard}
        exc = TruncationGuardViolation(
            f"probability on Fock-truncated sectors exceeds {cfg.outputs.truncation_guard:g}: {bad}; increase n_max"
        )
        exc.result = result
        raise exc
    return result
