"""On-disk cache of labeled spectra.

File layout: an 8-byte magic, a little-endian uint64 header length, a UTF-8
JSON header (dims, params, hash, array layout) and then the raw
little-endian float64 payload in header order.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

from .hilbert import BasisDescriptor
from .model import DickeParams, conserved_limit
from .spectra import LabeledSpectrum, diagonalize

log = logging.getLogger(__name__)

MAGIC = b"DQFRSPC1"
FORMAT_VERSION = 1
CACHE_ENV = "DICKEQFR_CACHE_DIR"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "dickeqfr"


def spectrum_key(p: DickeParams) -> str:
    limit = conserved_limit(p)
    payload = {
        "params": p.to_dict(),
        "decomposition": "parity" if limit is None else f"M-sectors/{limit}",
        "version": FORMAT_VERSION,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def save_spectrum(path: Path, spec: LabeledSpectrum, p: DickeParams, key: str) -> None:
    V = spec.eigenvectors
    is_complex = np.iscomplexobj(V)
    header = {
        "dims": spec.dim,
        "params": p.to_dict(),
        "hash": key,
        "complex": bool(is_complex),
        "charges": sorted(spec.charges),
    }
    hb = json.dumps(header, sort_keys=True).encode()
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        fh.write(spec.energies.astype("<f8").tobytes())
        if is_complex:
            fh.write(np.ascontiguousarray(V).view(np.float64).astype("<f8").tobytes())
        else:
            fh.write(np.ascontiguousarray(V, dtype="<f8").tobytes())
        fh.write(spec.sector_of.astype("<f8").tobytes())
        for cid in header["charges"]:
            fh.write(spec.charges[cid].astype("<f8").tobytes())
    os.replace(tmp, path)


def load_spectrum(path: Path, p: DickeParams, key: str) -> LabeledSpectrum | None:
    try:
        with open(path, "rb") as fh:
            if fh.read(8) != MAGIC:
                return None
            (hl,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hl))
            if header.get("hash") != key or header.get("params") != p.to_dict():
                return None
            d = header["dims"]

            def read(n):
                a = np.fromfile(fh, dtype="<f8", count=n)
                if a.size != n:
                    raise EOFError
                return a.astype(np.float64, copy=False)

            energies = read(d)
            if header["complex"]:
                V = read(2 * d * d).view(np.complex128).reshape(d, d)
            else:
                V = read(d * d).reshape(d, d)
            sector_of = read(d).astype(np.int64)
            charges = {cid: read(d).astype(np.int64) for cid in header["charges"]}
    except (OSError, EOFError, ValueError, KeyError):
        log.warning("ignoring unreadable cache file %s", path)
        return None
    return LabeledSpectrum(energies, V, BasisDescriptor(p.n_max, p.N), sector_of, charges)


def cached_diagonalize(p: DickeParams, cache_dir: Path | None = None, H=None) -> LabeledSpectrum:
    """``diagonalize(p)`` backed by the disk cache; ``cache_dir=None`` disables caching."""
    if cache_dir is None:
        return diagonalize(p, H)
    cache_dir = Path(cache_dir)
    key = spectrum_key(p)
    path = cache_dir / f"{key}.spec"
    if path.exists():
        spec = load_spectrum(path, p, key)
        if spec is not None:
            log.info("loaded spectrum from cache %s", path)
            return spec
    spec = diagonalize(p, H)
    try:
        cache_dir.mkdir(parents=True, exist_ok=True)
        save_spectrum(path, spec, p, key)
    except OSError as exc:
        log.warning("could not write spectrum cache %s: %s", path, exc)
    return spec
