"""
On-disk cache of memory kernels and process tensors.

Entries are keyed by the spectral-density fingerprint (which includes the
temperature) and the numerical parameters.  Every file carries a versioned
header that is checked on load; a mismatch counts as a miss.  Writes go to a
temporary file that is renamed into place, so concurrent readers only ever
see complete entries.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import numpy as np

from coopg2.bath import MemoryKernel, SpectralDensity, build_kernel
from coopg2.io import fingerprint
from coopg2.process_tensor import ProcessTensor, build_pt

log = logging.getLogger(__name__)

CACHE_ENV = "COOPG2_CACHE_DIR"
KERNEL_FORMAT_VERSION = 1


def default_cache_dir() -> Path | None:
    value = os.environ.get(CACHE_ENV)
    return Path(value) if value else None


class Store:
    """Kernel and PT cache in ``root`` (no caching when ``root`` is None)."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    # -- kernels ---------------------------------------------------------------

    def _kernel_key(self, sd: SpectralDensity, dt: float, t_mem: float) -> dict:
        return dict(version=KERNEL_FORMAT_VERSION, sd=sd.fingerprint(), dt=float(dt), t_mem=float(t_mem))

    def kernel(self, sd: SpectralDensity, dt: float, t_mem: float) -> MemoryKernel:
        key = self._kernel_key(sd, dt, t_mem)
        path = None if self.root is None else self.root / f"kernel-{fingerprint(key)}.npz"
        if path is not None and path.exists():
            try:
                with np.load(path) as data:
                    header = json.loads(bytes(data["header"]).decode())
                    if header.get("key") == key:
                        self.hits += 1
                        return MemoryKernel(header["dt"], header["n_steps"], data["eta"],
                                            truncation_error=header["truncation_error"],
                                            sd_fingerprint=header["sd_fingerprint"])
            except (OSError, KeyError, ValueError) as exc:
                log.warning("ignoring unreadable kernel cache entry %s: %s", path, exc)
        self.misses += 1
        kernel = build_kernel(sd, dt, t_mem)
        if path is not None:
            header = dict(key=key, dt=kernel.dt, n_steps=kernel.n_steps,
                          truncation_error=kernel.truncation_error, sd_fingerprint=kernel.sd_fingerprint)
            tmp = path.with_name(path.name + f".tmp{os.getpid()}")
            with open(tmp, "wb") as fh:
                np.savez(fh, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), eta=kernel.eta)
            tmp.replace(path)
        return kernel

    # -- process tensors ---------------------------------------------------------

    def pt_key(self, sd: SpectralDensity, dt: float, t_mem: float, svd_threshold: float, max_bond: int,
               paths: str) -> dict:
        return dict(sd=sd.fingerprint(), dt=float(dt), t_mem=float(t_mem), svd_threshold=float(svd_threshold),
                    max_bond=int(max_bond), paths=paths)

    def process_tensor(self, sd: SpectralDensity, dt: float, t_mem: float, svd_threshold: float = 1e-8,
                       max_bond: int = 256, paths: str = "all") -> ProcessTensor:
        """Converged (repeating) PT for ``sd``, built on a miss."""
        key = self.pt_key(sd, dt, t_mem, svd_threshold, max_bond, paths)
        path = None if self.root is None else self.root / f"pt-{fingerprint(key)}.npz"
        expect = dict(dt=float(dt), svd_threshold=float(svd_threshold), max_bond=int(max_bond),
                      sd_fingerprint=sd.fingerprint())
        if path is not None and path.exists():
            try:
                pt = ProcessTensor.load(path, expect)
                if pt.meta.get("key") == key:
                    self.hits += 1
                    return pt
            except (OSError, KeyError, ValueError) as exc:
                log.warning("ignoring unreadable PT cache entry %s: %s", path, exc)
        self.misses += 1
        kernel = self.kernel(sd, dt, t_mem)
        log.info("building process tensor (%s, dt=%g ps, %d memory steps)", paths, dt, kernel.n_steps)
        pt = build_pt(kernel, None, svd_threshold, max_bond, paths=paths)
        pt.meta["key"] = key
        if path is not None:
            pt.save(path)
        return pt
