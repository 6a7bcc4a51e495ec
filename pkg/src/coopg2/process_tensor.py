"""
Process tensors for emitters coupled to Gaussian phonon baths, and their
contraction with Markovian system dynamics.

A single emitter's Liouville pair ``(mu, nu)`` is flattened to
``alpha = 2*mu + nu`` (``gg, ge, eg, ee``), with occupation eigenvalues
``s+ = mu`` and ``s- = nu``.  The discretized influence functional

    F(alpha_1..alpha_n) = exp(-sum_{k >= k'} (s+_k - s-_k)(eta_{k-k'} s+_{k'} - eta*_{k-k'} s-_{k'}))

is stored as a matrix product operator with blocks ``Q[d_{l-1}, alpha_l, d_l]``
and closures ``q_l``; contracting the closure onto the bond of an extended
state gives the reduced state.  Bond bases of consecutive steps are aligned,
so that beyond the memory time the blocks converge to one repeated block.

A process tensor may be restricted to a path class.  The single-switch class
(populations, then at most one constant coherence) is exact for an emitter
whose Markovian dynamics never mixes populations and coherences, and it
compresses far better than the unrestricted tensor.

Step ``l`` of a trajectory applies the free propagator ``M`` and then block
``l``; the influence of site ``l`` is evaluated on the state at ``t_l``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import svd
from scipy.sparse.linalg import LinearOperator, gmres

from coopg2.bath import MemoryKernel
from coopg2.errors import BondOverflow, GridMismatch, NonConvergence, NotStationary
from coopg2.quantum import DIM, LDIM, DensityMatrix, EmitterOperator, Superoperator, sandwich, unvec

PT_FORMAT_VERSION = 2

# (s+, s-) for alpha = gg, ge, eg, ee
S_PLUS = np.array([0.0, 0.0, 1.0, 1.0])
S_MINUS = np.array([0.0, 1.0, 0.0, 1.0])
GG = 0
EE = 3

# Liouville (column-stacked) index of the two-emitter pair (alpha1, alpha2)
_mu1, _nu1, _mu2, _nu2 = (np.arange(4)[:, None] // 2, np.arange(4)[:, None] % 2,
                          np.arange(4)[None, :] // 2, np.arange(4)[None, :] % 2)
LIOUVILLE_INDEX = (2 * _mu1 + _mu2) + DIM * (2 * _nu1 + _nu2)
_PERM = LIOUVILLE_INDEX.reshape(-1)  # alpha-ordered position -> Liouville index


def to_alpha_order(superop: np.ndarray) -> np.ndarray:
    """Reorder a 16x16 Liouville matrix to ``(alpha1, alpha2)`` row/column order."""
    return np.asarray(superop)[np.ix_(_PERM, _PERM)]


def _gauge_weights(n: int) -> np.ndarray:
    """Fixed generic vector used to remove the phase freedom of singular vectors."""
    return 1.1 + np.cos(0.7 * np.arange(n) + 0.3)


# -- influence functional -----------------------------------------------------

def influence_factors(kernel: MemoryKernel):
    """On-site factors ``I0[alpha]`` and lag factors ``I[lag][alpha_later, alpha_earlier]``."""
    eta = kernel.eta
    diff = S_PLUS - S_MINUS
    i0 = np.exp(-diff * (eta[0] * S_PLUS - np.conj(eta[0]) * S_MINUS))
    lags = np.empty((kernel.n_steps + 1, 4, 4), dtype=complex)
    lags[0] = 1.0
    for k in range(1, kernel.n_steps + 1):
        lags[k] = np.exp(-np.outer(diff, eta[k] * S_PLUS - np.conj(eta[k]) * S_MINUS))
    return i0, lags


def brute_force_influence(kernel: MemoryKernel, n: int) -> np.ndarray:
    """Influence functional on all ``4**n`` paths by explicit summation (small n only)."""
    if n > 8:
        raise ValueError("brute force is limited to n <= 8")
    i0, lags = influence_factors(kernel)
    out = np.empty((4,) * n, dtype=complex)
    for path in itertools.product(range(4), repeat=n):
        val = 1.0 + 0j
        for k in range(n):
            val *= i0[path[k]]
            for kp in range(max(0, k - kernel.n_steps), k):
                val *= lags[k - kp][path[k], path[kp]]
        out[path] = val
    return out


def _string(kernel: MemoryKernel):
    """Factors grouped by their earlier site, as an MPS over ``K + 1`` sites."""
    i0, lags = influence_factors(kernel)
    kk = kernel.n_steps
    eye = np.arange(4)
    first = np.zeros((1, 4, 4), dtype=complex)
    first[0, eye, eye] = i0
    sites = [first]
    for lag in range(1, kk):
        t = np.zeros((4, 4, 4), dtype=complex)
        t[eye, :, eye] = lags[lag].T  # t[b, a, b] = I(a, b)
        sites.append(t)
    sites.append(lags[kk].T[:, :, None].copy())  # t[b, a, 0] = I(a, b)
    return sites


# -- process tensor -------------------------------------------------------------

@dataclass
class ProcessTensor:
    """MPO form of one emitter's influence functional.

    ``blocks[l-1]`` and ``closures[l-1]`` belong to step ``l``.  Once the block
    sequence has converged (``repeat_block`` set), steps beyond the stored
    ones reuse the converged block, so the horizon is unbounded.
    """

    dt: float
    kernel_steps: int
    blocks: list
    closures: list
    svd_threshold: float
    max_bond: int
    repeat_block: np.ndarray | None = None
    repeat_closure: np.ndarray | None = None
    converged_at: int | None = None
    sd_fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.blocks)

    @property
    def horizon(self) -> float:
        return math.inf if self.repeat_block is not None else self.n_steps

    def block(self, step: int) -> np.ndarray:
        """Block of step ``step >= 1`` as ``Q[d_{l-1}, alpha, d_l]``."""
        if step < 1:
            raise IndexError("steps are numbered from 1")
        if step <= len(self.blocks):
            return self.blocks[step - 1]
        if self.repeat_block is None:
            raise GridMismatch(f"process tensor covers {self.n_steps} steps, step {step} requested")
        return self.repeat_block

    def closure(self, step: int) -> np.ndarray:
        if step == 0:
            return np.ones(1, dtype=complex)
        if step <= len(self.closures):
            return self.closures[step - 1]
        if self.repeat_closure is None:
            raise GridMismatch(f"process tensor covers {self.n_steps} steps, step {step} requested")
        return self.repeat_closure

    def block_tensor(self, step: int) -> np.ndarray:
        """Block in ``[d_l, d_{l-1}, mu, nu]`` layout."""
        q = self.block(step)
        return q.transpose(2, 0, 1).reshape(q.shape[2], q.shape[0], 2, 2)

    @property
    def bond_dims(self) -> list:
        return [b.shape[2] for b in self.blocks]

    @property
    def max_bond_dim(self) -> int:
        return max(self.bond_dims, default=1)

    def is_trivial(self) -> bool:
        return self.max_bond_dim == 1 and all(np.allclose(b, 1.0, atol=0, rtol=0) for b in self.blocks)

    def contract(self, n: int) -> np.ndarray:
        """Full influence tensor over ``n`` steps (``4**n`` entries)."""
        t = self.block(1)[0]
        for step in range(2, n + 1):
            t = np.tensordot(t, self.block(step), axes=(-1, 0))
        return t @ self.closure(n)

    def stats(self) -> dict:
        dims = self.bond_dims
        return dict(max_bond=max(dims, default=1), final_bond=dims[-1] if dims else 1,
                    stored_steps=len(dims), converged_at=self.converged_at)

    # -- persistence ------------------------------------------------------------

    def header(self) -> dict:
        return dict(version=PT_FORMAT_VERSION, dt=self.dt, kernel_steps=self.kernel_steps,
                    n_steps=self.n_steps, svd_threshold=self.svd_threshold, max_bond=self.max_bond,
                    converged_at=self.converged_at, sd_fingerprint=self.sd_fingerprint,
                    shapes=[list(b.shape) for b in self.blocks], meta=self.meta)

    def save(self, path) -> None:
        arrays = {f"block_{i}": b for i, b in enumerate(self.blocks)}
        arrays.update({f"closure_{i}": c for i, c in enumerate(self.closures)})
        if self.repeat_block is not None:
            arrays["repeat_block"] = self.repeat_block
            arrays["repeat_closure"] = self.repeat_closure
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            np.savez(fh, header=np.frombuffer(json.dumps(self.header()).encode(), dtype=np.uint8), **arrays)
        tmp.replace(path)

    @classmethod
    def load(cls, path, expect: dict | None = None) -> "ProcessTensor":
        """Load a stored PT; ``expect`` entries must match the header (else ``ValueError``)."""
        with np.load(path) as data:
            header = json.loads(bytes(data["header"]).decode())
            if header.get("version") != PT_FORMAT_VERSION:
                raise ValueError(f"unsupported process tensor format {header.get('version')}")
            for key, value in (expect or {}).items():
                if header.get(key) != value:
                    raise ValueError(f"process tensor header mismatch on {key}")
            n = header["n_steps"]
            blocks = [data[f"block_{i}"] for i in range(n)]
            closures = [data[f"closure_{i}"] for i in range(n)]
            rep = data["repeat_block"] if "repeat_block" in data else None
            repc = data["repeat_closure"] if "repeat_closure" in data else None
        return cls(header["dt"], header["kernel_steps"], blocks, closures, header["svd_threshold"],
                   header["max_bond"], rep, repc, header["converged_at"], header["sd_fingerprint"],
                   header.get("meta", {}))


def trivial_pt(dt: float, threshold: float = 1e-8, max_bond: int = 256, fingerprint: str = "") -> ProcessTensor:
    one = np.ones((1, 4, 1), dtype=complex)
    e0 = np.ones(1, dtype=complex)
    return ProcessTensor(dt, 0, [one], [e0], threshold, max_bond, one, e0, 1, fingerprint)


def _keep(s: np.ndarray, threshold: float, ref: float | None = None) -> int:
    # relative cutoff: drop s_i < threshold * s_0
    ref = s[0] if ref is None and s.size else ref
    if s.size == 0 or not ref:
        return min(1, s.size)
    return int(np.count_nonzero(s >= threshold * ref))


# -- path classes ---------------------------------------------------------------

PATH_CLASSES = ("all", "single-switch")

# sectors of the single-switch class
_PRE, _GE, _EG, _POST = range(4)


@dataclass(frozen=True)
class PathClass:
    """Deterministic automaton over ``alpha`` sequences.

    ``table[s, alpha]`` is the sector after reading ``alpha`` in sector ``s``
    (``-1``: forbidden).  Stored blocks only carry the ``live`` sectors; the
    others exist inside the construction window, where the closures need them.
    """

    name: str
    table: np.ndarray
    start: int
    live: tuple
    population_weight: float

    @property
    def n_sectors(self) -> int:
        return self.table.shape[0]

    def weights(self) -> np.ndarray:
        w = self.population_weight
        return np.array([w, 1.0, 1.0, w], dtype=complex)

    def site(self) -> np.ndarray:
        """Automaton as an MPS site ``P[s_in, alpha, s_out]`` carrying the weights."""
        n = self.n_sectors
        p = np.zeros((n, 4, n), dtype=complex)
        w = self.weights()
        for s in range(n):
            for a in range(4):
                if self.table[s, a] >= 0:
                    p[s, a, self.table[s, a]] = w[a]
        return p


def path_class(name: str = "all") -> PathClass:
    """``"all"``: every path.  ``"single-switch"``: populations (``gg``/``ee``),
    then at most one constant coherence (``ge`` or ``eg``) until the end.

    The single-switch class is the complete path set of an emitter whose
    Markovian dynamics never couples populations and coherences, probed by
    one coherence-creating operator insertion.  Its construction weights
    diagonal sites by ``1/sqrt(2)``, so that the many equivalent population
    histories do not swamp the coherence information under the relative cutoff.
    """
    if name == "all":
        return PathClass(name, np.zeros((1, 4), dtype=int), 0, (0,), 1.0)
    if name != "single-switch":
        raise ValueError(f"unknown path class {name!r}; expected one of {PATH_CLASSES}")
    t = np.full((4, 4), -1, dtype=int)
    t[_PRE] = [_PRE, _GE, _EG, _PRE]
    t[_GE] = [_POST, _GE, -1, _POST]  # coherence -> diagonal only for closures
    t[_EG] = [_POST, -1, _EG, _POST]
    t[_POST] = [_POST, -1, -1, _POST]
    return PathClass(name, t, _PRE, (_PRE, _GE, _EG), 1.0 / math.sqrt(2.0))


def admissible(path, paths: str = "all") -> bool:
    """Whether an ``alpha`` sequence is represented by a stored PT of the class."""
    pc = path_class(paths)
    s = pc.start
    for a in path:
        s = pc.table[s, a]
        if s < 0 or s not in pc.live:
            return False
    return True


# -- sector-labelled factorizations ----------------------------------------------

def _row_sectors(table: np.ndarray, lab_l: np.ndarray) -> np.ndarray:
    return table[lab_l].reshape(-1)  # row (i, alpha) -> sector after the site


def _left_split(t, lab_l, lab_r, table, mode: str, threshold: float = 0.0):
    """``t[(i, alpha), j] = U @ R`` blockwise per sector of the right bond.

    ``mode`` is ``"qr"`` or ``"svd"``; with ``"svd"`` the relative cutoff is
    applied against the largest singular value of all sectors.  Returns
    ``U (dl*4, k)``, ``R (k, dr)`` and the labels of the new bond.
    """
    dl, _, dr = t.shape
    m = t.reshape(dl * 4, dr)
    rs = _row_sectors(table, lab_l)
    parts = []
    for s in np.unique(lab_r):
        rows = np.flatnonzero(rs == s)
        cols = np.flatnonzero(lab_r == s)
        if rows.size == 0:
            continue
        sub = m[np.ix_(rows, cols)]
        if mode == "qr":
            q, r = np.linalg.qr(sub)
            parts.append((s, rows, cols, q, r, None))
        else:
            u, sv, vh = svd(sub, full_matrices=False, lapack_driver="gesdd")
            parts.append((s, rows, cols, u, sv[:, None] * vh, sv))
    if mode == "svd":
        ref = max((p[5][0] for p in parts if p[5].size), default=0.0)
        parts = [(s, rows, cols, u[:, :k], r[:k], sv[:k])
                 for (s, rows, cols, u, r, sv) in parts
                 for k in [_keep(sv, threshold, ref)] if k > 0]
    k = sum(p[3].shape[1] for p in parts)
    big_u = np.zeros((dl * 4, k), dtype=complex)
    big_r = np.zeros((k, dr), dtype=complex)
    labels = np.empty(k, dtype=int)
    off = 0
    for s, rows, cols, u, r, _ in parts:
        w = u.shape[1]
        big_u[rows, off:off + w] = u
        big_r[np.ix_(np.arange(off, off + w), cols)] = r
        labels[off:off + w] = s
        off += w
    return big_u, big_r, labels


def _right_split(t, lab_l, threshold: float):
    """``t[i, (alpha, j)] = L @ V`` blockwise per sector of the left bond, truncated."""
    dl, _, dr = t.shape
    m = t.reshape(dl, 4 * dr)
    parts = []
    for s in np.unique(lab_l):
        rows = np.flatnonzero(lab_l == s)
        u, sv, vh = svd(m[rows], full_matrices=False, lapack_driver="gesdd")
        parts.append((s, rows, u * sv, vh, sv))
    ref = max((p[4][0] for p in parts if p[4].size), default=0.0)
    k_all = [_keep(p[4], threshold, ref) for p in parts]
    k = sum(k_all)
    big_l = np.zeros((dl, k), dtype=complex)
    big_v = np.zeros((k, 4 * dr), dtype=complex)
    labels = np.empty(k, dtype=int)
    off = 0
    for (s, rows, us, vh, _), w in zip(parts, k_all):
        big_l[rows, off:off + w] = us[:, :w]
        big_v[off:off + w] = vh[:w]
        labels[off:off + w] = s
        off += w
    return big_l, big_v.reshape(k, 4, dr), labels


def _overlap(a: list, b: list) -> np.ndarray:
    """``sum_f A[i, f] conj(B[j, f])`` for two MPS of equal length (open right legs matched)."""
    e = None
    for x, y in zip(reversed(a), reversed(b)):
        if e is None:
            e = np.einsum("iak,jak->ij", x, y.conj())
        else:
            e = np.einsum("iak,kl,jal->ij", x, e, y.conj(), optimize=True)
    return e


def _block_change(old, new, left, q, q_old) -> float:
    """Relative change of a block as seen by the future, and of the closure."""
    shape = (-1, new.shape[2])
    ref = np.max(np.abs(new.reshape(shape) @ left))
    d = np.max(np.abs((new - old).reshape(shape) @ left)) / ref
    return max(d, np.max(np.abs(q - q_old)) / np.max(np.abs(q)))


def build_pt(kernel: MemoryKernel, n_steps: int | None = None, svd_threshold: float = 1e-8,
             max_bond: int = 256, conv_tol: float | None = None, max_build: int | None = None,
             paths: str = "all") -> ProcessTensor:
    """Construct the process tensor by sequential kernel-layer absorption.

    The influence factors sharing an earlier site ``n`` form a string over
    sites ``n..n+K``.  A window MPS over the not-yet-final sites absorbs one
    string per step and is compressed (QR sweep, then SVD sweep discarding
    singular values below ``svd_threshold`` relative to the largest); its
    first site is then frozen as block ``n``.  Bond bases of consecutive
    steps are aligned by least squares, so that once the window is
    stationary the blocks repeat.  Building stops after ``n_steps`` blocks,
    or earlier once two consecutive blocks agree to ``conv_tol`` (that block
    then repeats forever).  With ``n_steps=None`` building continues until
    convergence.

    Convergence is measured on the map from the previous bond to the future,
    ``|(Q_n - Q_{n-1}) A_n| / |Q_n A_n|`` with ``A_n`` the new window's left
    factor, so that directions of negligible weight do not count.  The
    default ``conv_tol`` is ``max(1e-10, 1e2 * svd_threshold)``: block
    differences cannot fall below the truncation noise of the cutoff.

    ``paths`` restricts the tensor to a path class (see ``path_class``);
    outside the class the stored tensor is zero.  Every bond carries the
    sector of its path class, and all factorizations are blockwise in it.
    """
    if n_steps is not None and n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0 < svd_threshold < 1:
        raise ValueError("svd_threshold must be in (0, 1)")
    pc = path_class(paths)
    if kernel.is_zero():
        pt = trivial_pt(kernel.dt, svd_threshold, max_bond, kernel.sd_fingerprint)
        pt.meta["paths"] = "all"
        return pt
    kk = kernel.n_steps
    if conv_tol is None:
        conv_tol = max(1e-10, 1e2 * svd_threshold)
    string = _string(kernel)
    table = pc.table
    proj = pc.site()
    wts = pc.weights()
    pw = pc.population_weight
    sectors = np.arange(pc.n_sectors)
    live = np.array(pc.live)
    limit = n_steps if n_steps is not None else (max_build or 20 * kk + 200)
    window = [proj[pc.start:pc.start + 1].copy()] + [proj.copy() for _ in range(kk - 1)]
    labs = [np.array([pc.start])] + [sectors.copy() for _ in range(kk)]
    blocks: list = []
    closures: list = []
    meta = dict(paths=paths)
    prev = None
    for n in range(1, limit + 1):
        window.append(proj.copy())
        labs.append(sectors.copy())
        window = [
            np.einsum("iaj,kal->ikajl", w, s).reshape(w.shape[0] * s.shape[0], 4, w.shape[2] * s.shape[2])
            for w, s in zip(window, string)
        ]
        labs = [np.repeat(lab, s.shape[0]) for lab, s in zip(labs, string)] + [
            np.repeat(labs[-1], string[-1].shape[2])]
        nsite = len(window)
        for j in range(nsite - 1):
            dl, _, dr = window[j].shape
            q, r, lab = _left_split(window[j], labs[j], labs[j + 1], table, "qr")
            window[j] = q.reshape(dl, 4, -1)
            window[j + 1] = np.tensordot(r, window[j + 1], axes=(1, 0))
            labs[j + 1] = lab
        for j in range(nsite - 1, 0, -1):
            l, v, lab = _right_split(window[j], labs[j], svd_threshold)
            window[j] = v
            window[j - 1] = np.tensordot(window[j - 1], l, axes=(2, 0))
            labs[j] = lab
        dl = window[0].shape[0]
        u, rest, lab = _left_split(window[0], labs[0], labs[1], table, "svd", svd_threshold)
        # dead sectors only serve the closures of this step
        tail = window[1:]
        nxt = np.tensordot(rest, tail[0], axes=(1, 0))
        v = nxt[:, GG, :]
        for w in tail[1:]:
            v = v @ w[:, GG, :]
        # the closure traces the future, so its diagonal weights are removed
        q = v.sum(axis=1) * pw ** (-len(tail))
        keep = np.isin(lab, live)
        u, rest, lab, q = u[:, keep], rest[keep], lab[keep], q[keep]
        if lab.size > max_bond:
            raise BondOverflow(f"step {n}: bond {lab.size} exceeds max_bond={max_bond} "
                               f"at threshold {svd_threshold:g}")
        t = _align(u, rest, lab, tail, prev)
        u = u @ t
        rest = np.linalg.solve(t, rest)
        q = np.linalg.solve(t, q)
        block = u.reshape(dl, 4, -1) / wts[None, :, None]
        block = restore_causality(block, closures[-1] if closures else np.ones(1, complex), q)
        prev = (rest, tail, lab)
        window = [np.tensordot(rest, tail[0], axes=(1, 0))] + tail[1:]
        labs = [lab] + labs[2:]
        blocks.append(block)
        closures.append(q)
        if n > kk + 1 and blocks[-2].shape == block.shape and _block_change(blocks[-2], block, rest, q,
                                                                             closures[-2]) < conv_tol:
            return ProcessTensor(kernel.dt, kk, blocks, closures, svd_threshold, max_bond, block, q, n,
                                 kernel.sd_fingerprint, meta)
    if n_steps is None:
        raise NonConvergence(f"process tensor blocks did not converge within {limit} steps")
    return ProcessTensor(kernel.dt, kk, blocks, closures, svd_threshold, max_bond, None, None, None,
                         kernel.sd_fingerprint, meta)


def restore_causality(block: np.ndarray, q_prev: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Project a block onto ``Q[:, alpha, :] @ q = q_prev`` for diagonal ``alpha``.

    A diagonal site has no influence on the past, so tracing it leaves the
    earlier closure.  Truncation breaks this identity at the cutoff level,
    which shows up as a slow trace leak over long runs; the smallest
    (rank-one) correction restores it.
    """
    out = block.copy()
    for a in (GG, EE):
        m = out[:, a, :]
        rows = np.flatnonzero(np.any(m != 0, axis=1))
        cols = np.flatnonzero(np.any(m != 0, axis=0))
        qc = q[cols]
        nrm = np.vdot(qc, qc).real
        if rows.size == 0 or nrm == 0:
            continue
        resid = m[np.ix_(rows, cols)] @ qc - q_prev[rows]
        m[np.ix_(rows, cols)] -= np.outer(resid, qc.conj()) / nrm
    return out


def _align(u, rest, lab, tail, prev) -> np.ndarray:
    """Gauge ``T`` (block diagonal in the sectors) for the newly frozen bond.

    With a previous window of the same sector dimensions, ``T`` maps the new
    window onto the previous one by least squares (in the stationary regime
    both describe the same future functional).  Otherwise the phases of the
    singular vectors are fixed against a generic vector.
    """
    k = lab.size
    if prev is not None and np.array_equal(prev[2], lab):
        ov = _overlap(tail, prev[1])
        target = rest @ ov
        t = np.zeros((k, k), dtype=complex)
        for s in np.unique(lab):
            idx = np.flatnonzero(lab == s)
            sol = np.linalg.lstsq(prev[0][idx].T, target[idx].T, rcond=1e-13)[0].T
            t[np.ix_(idx, idx)] = sol
        if np.all(np.isfinite(t)) and np.linalg.cond(t) < 1e12:
            return t
    ph = _gauge_weights(u.shape[0]) @ u
    mag = np.abs(ph)
    ph = np.where(mag > 0, ph / np.where(mag > 0, mag, 1.0), 1.0)
    return np.diag(ph.conj())


# -- extended states ----------------------------------------------------------

def _emitter_pts(pts) -> dict:
    """Normalize a PT assignment to ``{emitter: ProcessTensor}``."""
    if pts is None:
        return {}
    if isinstance(pts, ProcessTensor):
        return {1: pts}
    if isinstance(pts, dict):
        out = dict(pts)
    else:
        out = {}
        for i, item in enumerate(pts):
            if isinstance(item, tuple):
                pt, emitter = item
            else:
                pt, emitter = item, i + 1
            if emitter in out:
                raise ValueError(f"emitter {emitter} has two process tensors")
            out[emitter] = pt
    if any(e not in (1, 2) for e in out):
        raise ValueError("process tensors attach to emitter 1 or 2")
    dts = {pt.dt for pt in out.values()}
    if len(dts) > 1:
        raise GridMismatch(f"process tensors disagree on dt: {sorted(dts)}")
    return out


def kron_factors(matrix: np.ndarray, tol: float = 1e-13):
    """Split an alpha-ordered 16x16 matrix into ``A1 (x) A2`` when it is a product, else None."""
    m = matrix.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(16, 16)
    u, s, vh = np.linalg.svd(m)
    if s[0] == 0:
        return np.zeros((4, 4), complex), np.zeros((4, 4), complex)
    if s[1] > tol * s[0]:
        return None
    root = math.sqrt(s[0])
    a1, a2 = (u[:, 0] * root).reshape(4, 4), (vh[0] * root).reshape(4, 4)
    # the split A1 (x) A2 = (c A1) (x) (A2 / c) is fixed by making A1 trace
    # preserving where possible, else by a real positive largest entry
    tr = np.array([1.0, 0.0, 0.0, 1.0])
    c = (tr @ a1 @ tr) / 2.0
    if abs(c) < 1e-12 * np.max(np.abs(a1)):
        big = a1.reshape(-1)[np.argmax(np.abs(a1))]
        c = big / abs(big)
    return a1 / c, a2 * c


def sector_preserving(m1: np.ndarray, tol: float = 1e-12) -> bool:
    """Whether a single-emitter map (alpha order) keeps ``gg/ee``, ``ge`` and ``eg`` apart."""
    m1 = np.asarray(m1)
    mask = np.ones((4, 4), bool)
    mask[np.ix_([0, 3], [0, 3])] = False
    mask[1, 1] = mask[2, 2] = False
    return bool(np.max(np.abs(m1[mask])) <= tol * max(np.max(np.abs(m1)), 1e-300))


def operator_schmidt(matrix: np.ndarray, tol: float = 1e-14):
    """``matrix = sum_k A1_k (x) A2_k`` in alpha order."""
    m = matrix.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(16, 16)
    u, s, vh = np.linalg.svd(m)
    keep = max(1, int(np.count_nonzero(s > tol * max(s[0], 1e-300))))
    return [((u[:, k] * s[k]).reshape(4, 4), vh[k].reshape(4, 4)) for k in range(keep)]


@dataclass
class ExtendedState:
    """System state with environment memory.

    ``tensor[alpha1, alpha2, d1, d2]`` (dense form), or a sum of products
    ``sum_t left[t][alpha1, d1] * right[t][alpha2, d2]`` (factored form, exact
    while the dynamics do not couple the emitters).  ``step`` counts steps
    since the baths were in equilibrium; ``None`` means the converged regime.
    """

    dt: float
    step: int | None
    closures: tuple
    tensor: np.ndarray | None = None
    left: np.ndarray | None = None
    right: np.ndarray | None = None

    @property
    def factored(self) -> bool:
        return self.tensor is None

    @property
    def time(self) -> float:
        return math.inf if self.step is None else self.step * self.dt

    def dense(self) -> np.ndarray:
        if self.tensor is not None:
            return self.tensor
        return np.einsum("tai,tbj->abij", self.left, self.right)

    def reduced_alpha(self) -> np.ndarray:
        q1, q2 = self.closures
        if self.tensor is not None:
            return np.einsum("abij,i,j->ab", self.tensor, q1, q2)
        return np.einsum("tai,i,tbj,j->ab", self.left, q1, self.right, q2)

    def reduced(self) -> DensityMatrix:
        flat = np.empty(LDIM, dtype=complex)
        flat[_PERM] = self.reduced_alpha().reshape(-1)
        return DensityMatrix.from_vector(flat, 0.0 if self.step is None else self.step * self.dt,
                                         subnormalized=True)

    def to_dense(self) -> "ExtendedState":
        return ExtendedState(self.dt, self.step, self.closures, tensor=self.dense())

    def scaled(self, factor: complex) -> "ExtendedState":
        if self.tensor is not None:
            return ExtendedState(self.dt, self.step, self.closures, tensor=self.tensor * factor)
        return ExtendedState(self.dt, self.step, self.closures, left=self.left * factor, right=self.right)


def initial_state(rho0: DensityMatrix, dt: float, factored: bool = True) -> ExtendedState:
    """``R = rho0 (x) delta_{d0}`` with trivial left bonds."""
    rho_alpha = rho0.vector[_PERM].reshape(4, 4)
    closures = (np.ones(1, complex), np.ones(1, complex))
    if not factored:
        return ExtendedState(dt, 0, closures, tensor=rho_alpha[:, :, None, None].copy())
    u, s, vh = np.linalg.svd(rho_alpha)
    keep = max(1, int(np.count_nonzero(s > 1e-15 * max(s[0], 1e-300))))
    left = (u[:, :keep] * s[:keep]).T[:, :, None]
    right = vh[:keep][:, :, None]
    return ExtendedState(dt, 0, closures, left=left.copy(), right=right.copy())


def insert_operator(state: ExtendedState, op_left: EmitterOperator, op_right: EmitterOperator) -> ExtendedState:
    """Apply ``rho -> opL rho opR^dag`` on the system indices; bond indices untouched."""
    sup = to_alpha_order(sandwich(op_left.matrix, op_right.matrix.conj().T))
    return apply_superoperator(state, sup)


def apply_superoperator(state: ExtendedState, sup_alpha: np.ndarray) -> ExtendedState:
    if state.tensor is not None:
        t = np.einsum("xy,yij->xij", sup_alpha, state.tensor.reshape(16, *state.tensor.shape[2:]))
        return ExtendedState(state.dt, state.step, state.closures, tensor=t.reshape(state.tensor.shape))
    lefts, rights = [], []
    for a1, a2 in operator_schmidt(sup_alpha):
        lefts.append(np.einsum("ab,tbi->tai", a1, state.left))
        rights.append(np.einsum("ab,tbi->tai", a2, state.right))
    return ExtendedState(state.dt, state.step, state.closures,
                         left=np.concatenate(lefts), right=np.concatenate(rights))


def _apply_blocks(t: np.ndarray, b1, b2) -> np.ndarray:
    """``t[a, b, i, j] -> sum_ij t[a, b, i, j] B1[i, a, k] B2[j, b, l]`` as per-alpha matrix products."""
    if b1 is not None:
        t = np.stack([np.matmul(b1[:, a, :].T, t[a]) for a in range(4)])  # [a, b, k, j]
    if b2 is not None:
        t = np.stack([np.matmul(t[:, b], b2[:, b, :]) for b in range(4)], axis=1)  # [a, b, k, l]
    return t


class Evolution:
    """Stepper for a fixed free propagator and PT assignment."""

    def __init__(self, pts, propagator: Superoperator | np.ndarray, dt: float | None = None):
        self.pts = _emitter_pts(pts)
        mat = propagator.matrix if isinstance(propagator, Superoperator) else np.asarray(propagator)
        self.m_alpha = to_alpha_order(mat)
        self.factors = kron_factors(self.m_alpha)
        pt_dt = {pt.dt for pt in self.pts.values()}
        if dt is None:
            dt = pt_dt.pop() if pt_dt else 1.0
        elif pt_dt and not math.isclose(pt_dt.pop(), dt, rel_tol=1e-12):
            raise GridMismatch("propagator dt differs from process tensor dt")
        self.dt = dt
        self.restricted = {e for e, pt in self.pts.items() if pt.meta.get("paths", "all") != "all"}
        for emitter in self.restricted:
            if self.factors is None or not sector_preserving(self.factors[emitter - 1]):
                raise ValueError(f"emitter {emitter}: a single-switch process tensor needs dynamics that "
                                 "keep populations and coherences of each emitter apart")

    def insert(self, state: ExtendedState, op_left: EmitterOperator, op_right: EmitterOperator) -> ExtendedState:
        """``insert_operator`` with a check that restricted emitters switch at most once."""
        for emitter in self.restricted:
            if state.factored:
                part = state.left if emitter == 1 else state.right  # [t, alpha, d]
            else:
                part = np.moveaxis(state.tensor, emitter - 1, 0)[None]  # [1, alpha, ...]
            ref = np.max(np.abs(part))
            if ref > 0 and np.max(np.abs(part[:, 1:3])) > 1e-12 * ref:
                raise ValueError(f"emitter {emitter} already carries a coherence; its single-switch "
                                 "process tensor admits no further switch")
        return insert_operator(state, op_left, op_right)

    def _blocks(self, step: int | None):
        out = []
        for emitter in (1, 2):
            pt = self.pts.get(emitter)
            if pt is None:
                out.append(None)
            elif step is None:
                if pt.repeat_block is None:
                    raise NotStationary("process tensor has no converged block")
                out.append(pt.repeat_block)
            else:
                out.append(pt.block(step))
        return out

    def closures(self, step: int | None):
        out = []
        for emitter in (1, 2):
            pt = self.pts.get(emitter)
            if pt is None:
                out.append(np.ones(1, complex))
            elif step is None:
                out.append(pt.repeat_closure)
            else:
                out.append(pt.closure(step))
        return tuple(out)

    def start(self, rho0: DensityMatrix) -> ExtendedState:
        return initial_state(rho0, self.dt, factored=self.factors is not None)

    def step(self, state: ExtendedState) -> ExtendedState:
        nxt = None if state.step is None else state.step + 1
        b1, b2 = self._blocks(nxt)
        if state.tensor is None and self.factors is not None:
            m1, m2 = self.factors
            left = np.einsum("ab,tbi->tai", m1, state.left)
            right = np.einsum("ab,tbi->tai", m2, state.right)
            if b1 is not None:
                left = np.einsum("tai,iaj->taj", left, b1)
            if b2 is not None:
                right = np.einsum("tai,iaj->taj", right, b2)
            return ExtendedState(self.dt, nxt, self.closures(nxt), left=left, right=right)
        t = state.dense()
        shape = t.shape
        t = (self.m_alpha @ t.reshape(16, -1)).reshape(shape)
        return ExtendedState(self.dt, nxt, self.closures(nxt), tensor=_apply_blocks(t, b1, b2))

    def run(self, state: ExtendedState, n: int, sample_steps=None, callback=None):
        """Advance ``n`` steps; returns reduced states at the requested step offsets."""
        wanted = set(range(n + 1)) if sample_steps is None else set(int(k) for k in sample_steps)
        if any(k < 0 or k > n for k in wanted):
            raise GridMismatch("sample steps must lie in [0, n]")
        out = {}
        if 0 in wanted:
            out[0] = state.reduced() if callback is None else callback(state)
        for k in range(1, n + 1):
            state = self.step(state)
            if k in wanted:
                out[k] = state.reduced() if callback is None else callback(state)
        return state, [out[k] for k in sorted(out)]

    # -- stationary extended state -------------------------------------------

    def _transfer_operator(self, dims):
        b1, b2 = self._blocks(None)
        m = self.m_alpha
        d1, d2 = dims

        def apply(x):
            t = (m @ x.reshape(16, d1 * d2)).reshape(4, 4, d1, d2)
            return _apply_blocks(t, b1, b2).reshape(-1)

        return apply

    def stationary(self, tol: float = 1e-12) -> ExtendedState:
        """Fixed point of the converged one-step map, normalized to unit trace.

        Solved directly (null vector of ``T - 1`` plus the trace condition)
        rather than by propagating for many lifetimes.  Large dense states use
        GMRES on ``1 - T^m`` with ``m`` the memory length: the bond modes are
        then strongly damped and the slow Markovian modes sit ``m`` times
        further from 1.  The start vector is the Markovian stationary state
        carried into the converged regime.
        """
        q1, q2 = self.closures(None)
        d1, d2 = len(q1), len(q2)
        if self.factors is not None:
            left = self._stationary_single(self.factors[0], 1)
            right = self._stationary_single(self.factors[1], 2)
            return ExtendedState(self.dt, None, (q1, q2), left=left[None], right=right[None])
        apply = self._transfer_operator((d1, d2))
        size = 16 * d1 * d2
        trace = np.zeros((4, 4, d1, d2), dtype=complex)
        for a in (0, 3):
            for b in (0, 3):
                trace[a, b] = np.outer(q1, q2)
        trace = trace.reshape(-1)
        if size <= 4096:
            t = np.column_stack([apply(col) for col in np.eye(size, dtype=complex)])
            x = _null_with_trace(t, trace)
        else:
            m = max(1, max((pt.kernel_steps for pt in self.pts.values()), default=1))

            def apply_m(x):
                for _ in range(m):
                    x = apply(x)
                return x

            x0 = self._converged_start().reshape(-1)
            x0 = x0 / (trace @ x0)
            # (1 - T^m) x + x0 (trace . x) = x0: trace is a left fixed vector of T, so any
            # solution has unit trace and is a fixed point; x0 keeps the rank-one term well scaled
            op = LinearOperator((size, size), matvec=lambda x: x - apply_m(x) + x0 * (trace @ x),
                                dtype=complex)
            x, info = gmres(op, x0, x0=x0, rtol=tol, restart=100, maxiter=20)
            if info != 0:
                raise NotStationary(f"stationary solve did not converge (info={info})")
            x = x / (trace @ x)
        return ExtendedState(self.dt, None, (q1, q2), tensor=x.reshape(4, 4, d1, d2))

    def _converged_start(self) -> np.ndarray:
        """Markovian stationary state propagated through the stored blocks (dense tensor)."""
        w, v = np.linalg.eig(self.m_alpha)
        rho_alpha = v[:, np.argmin(np.abs(w - 1.0))].reshape(4, 4)
        flat = np.empty(LDIM, dtype=complex)
        flat[_PERM] = rho_alpha.reshape(-1)
        rho = unvec(flat)
        rho = 0.5 * (rho + rho.conj().T) / np.trace(rho)
        state = initial_state(DensityMatrix(rho), self.dt, factored=False)
        n = max((pt.n_steps for pt in self.pts.values()), default=0)
        state, _ = self.run(state, n, sample_steps=[])
        return state.dense()

    def _stationary_single(self, m1: np.ndarray, emitter: int) -> np.ndarray:
        pt = self.pts.get(emitter)
        if pt is None:
            block = np.ones((1, 4, 1), complex)
            q = np.ones(1, complex)
        else:
            if pt.repeat_block is None:
                raise NotStationary(f"process tensor of emitter {emitter} has no converged block")
            block, q = pt.repeat_block, pt.repeat_closure
        d = block.shape[0]
        size = 4 * d
        # T[(a, k), (b, i)] = M1[a, b] Q[i, a, k]
        t = np.einsum("ab,iak->akbi", m1, block).reshape(size, size)
        trace = np.zeros((4, d), complex)
        trace[0] = q
        trace[3] = q
        x = _null_with_trace(t, trace.reshape(-1))
        return x.reshape(4, d)


def _null_with_trace(t: np.ndarray, trace: np.ndarray) -> np.ndarray:
    size = t.shape[0]
    a = np.vstack([t - np.eye(size), trace[None, :]])
    b = np.zeros(size + 1, dtype=complex)
    b[-1] = 1.0
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    resid = np.linalg.norm(a @ x - b)
    if resid > 1e-8:
        raise NotStationary(f"no normalizable fixed point (residual {resid:.2e})")
    return x


def propagate(rho0: DensityMatrix, pts, propagator: Superoperator, n: int, sample_steps=None,
              dt: float | None = None) -> list:
    """Reduced states ``rho(t_l)`` for ``l`` in ``sample_steps`` (default: every step 0..n).

    ``pts`` assigns process tensors to emitters: a dict ``{emitter: pt}``,
    a list of ``(pt, emitter)`` pairs, or a list whose i-th entry belongs to
    emitter ``i + 1``.
    """
    evo = Evolution(pts, propagator, dt)
    for emitter, pt in evo.pts.items():
        if n > pt.horizon:
            raise GridMismatch(f"emitter {emitter}: {n} steps requested, process tensor covers {pt.n_steps}")
    _, states = evo.run(evo.start(rho0), n, sample_steps)
    times = sorted(range(n + 1) if sample_steps is None else set(int(k) for k in sample_steps))
    return [DensityMatrix(s.matrix, k * evo.dt, False) for s, k in zip(states, times)]
