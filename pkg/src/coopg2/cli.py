"""
Command-line front end.

    coopg2 list-presets
    coopg2 validate --config fig2a
    coopg2 run --config my.cfg --out results --workers 4 --cache-dir ~/.cache/coopg2

``--config`` takes a config file or a preset name.  The PT cache directory
defaults to ``$COOPG2_CACHE_DIR``.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from coopg2.analytic import fit_model, fitted_curve, model_for
from coopg2.cache import CACHE_ENV, Store, default_cache_dir
from coopg2.config import ExperimentConfig, SuiteConfig, dump_config, load_config
from coopg2.dynamics import coherence_trajectory, g2_curve
from coopg2.errors import ConfigError, Coopg2Error
from coopg2.io import fingerprint
from coopg2.postprocess import InstrumentResponse, convolve_irf
from coopg2.presets import PRESETS, preset
from coopg2.quantum import KET_EE, KET_GG, KET_PSI_A, KET_PSI_S, DensityMatrix

log = logging.getLogger("coopg2")

INITIAL_KETS = {"psi_s": KET_PSI_S, "psi_a": KET_PSI_A, "ee": KET_EE, "gg": KET_GG}


def resolve_config(ref: str) -> SuiteConfig:
    """Load a config file, or a preset when ``ref`` names one and no such file exists."""
    path = Path(ref)
    if path.exists():
        return load_config(path)
    if ref in PRESETS:
        return preset(ref)
    raise ConfigError(f"no config file or preset named {ref!r}")


def run_experiment(cfg: SuiteConfig, exp: ExperimentConfig, out_dir: Path, cache_dir) -> list:
    """Compute one experiment and write its files; returns the written paths."""
    store = Store(cache_dir)
    sc = exp.scenario(cfg.numerics)
    extra = dict(experiment=exp.name, suite=cfg.tag)
    written = []
    if exp.kind == "coherence":
        rho0 = DensityMatrix.from_ket(INITIAL_KETS[exp.initial])
        traj = coherence_trajectory(sc, rho0, exp.t_max, store, exp.stride)
        written.append(traj.to_csv(out_dir / f"{exp.name}.coherence.csv", extra))
        return written
    curve = g2_curve(sc, store, method=exp.method)
    curve.label = exp.name
    written.append(curve.to_csv(out_dir / f"{exp.name}.csv", extra))
    curves = [curve]
    for model_name in exp.fits:
        model = model_for(model_name, curve)
        fit = fit_model(curve, model, cfg.fit_window)
        written.append(fit.save(out_dir / f"{exp.name}.fit-{model_name}.txt"))
        fc = fitted_curve(curve, fit, f"{exp.name}-{model_name}")
        written.append(fc.to_csv(out_dir / f"{exp.name}.fit-{model_name}.csv", extra))
        curves.append(fc)
    if exp.convolve:
        irf = InstrumentResponse(cfg.irf_fwhm)
        for c in curves:
            stem = c.label if c is not curve else exp.name
            conv = convolve_irf(c, irf)
            written.append(conv.to_csv(out_dir / f"{stem}.irf{irf.fwhm:g}ps.csv", extra))
    return written


def _provenance(exc: BaseException) -> str:
    tb = exc.__traceback__
    module = type(exc).__module__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("coopg2"):
            module = name
        tb = tb.tb_next
    return module


def _job(args):
    cfg, exp, out_dir, cache_dir = args
    try:
        paths = run_experiment(cfg, exp, out_dir, cache_dir)
        return exp.name, [str(p) for p in paths], None
    except Coopg2Error as exc:
        return exp.name, [], f"{_provenance(exc)}: {type(exc).__name__}: {exc}"


def run_suite(cfg: SuiteConfig, out: Path, workers: int = 1, cache_dir=None) -> int:
    out_dir = Path(out) / cfg.tag
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(dump_config(cfg))
    # phonon experiments first so their process tensors are published to the cache early
    jobs = sorted(cfg.experiments, key=lambda e: e.phonons.kind == "none")
    args = [(cfg, exp, out_dir, cache_dir) for exp in jobs]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, args))
    else:
        results = [_job(a) for a in args]
    failed = 0
    for name, paths, err in results:
        if err is None:
            for p in paths:
                print(f"{name}: wrote {p}")
        else:
            failed += 1
            print(f"{name}: FAILED {err}", file=sys.stderr)
    return 1 if failed else 0


def validate_suite(cfg: SuiteConfig, cache_dir=None, info: bool = False) -> list:
    """Dry-run diagnostics as ``(level, message)``; no computation.

    A valid config gives an empty list.  With ``info`` the PT cache status of
    every phonon experiment is reported as well.
    """
    diags = []
    num = cfg.numerics
    steps = num.tau_steps()
    tau = steps * num.dt
    if cfg.irf_fwhm is not None and any(e.convolve for e in cfg.experiments):
        h = np.diff(tau)
        bad = h[(h > cfg.irf_fwhm / 10) & (h <= 8 * cfg.irf_fwhm)]
        if bad.size:
            diags.append(("error", f"tau grid spacing {bad.max():.3g} ps is too coarse for the "
                                   f"{cfg.irf_fwhm:g} ps IRF; raise n_coarse"))
    if any(e.convolve for e in cfg.experiments) and cfg.irf_fwhm is None:
        diags.append(("error", "experiments request convolution but [postprocess] irf_fwhm is missing"))
    if any(e.fits for e in cfg.experiments):
        lo, hi = cfg.fit_window
        n_in = int(np.count_nonzero((tau >= lo) & (tau <= hi)))
        if n_in < 10:
            diags.append(("error", f"fit window holds only {n_in} grid points"))
    store = Store(cache_dir) if cache_dir is not None else None
    for exp in cfg.experiments:
        try:
            sc = exp.scenario(num)
        except (ConfigError, ValueError) as exc:
            diags.append(("error", f"[experiment {exp.name}] {exc}"))
            continue
        spec = sc.markov_spec()
        if exp.kind == "g2" and spec.gamma <= 0 and spec.gamma_p <= 0:
            diags.append(("error", f"[experiment {exp.name}] g2 needs gamma or gamma_p > 0"))
        for model_name in exp.fits:
            try:
                model_for(model_name, gamma=spec.gamma, gamma_p=spec.gamma_p)
            except Coopg2Error as exc:
                diags.append(("error", f"[experiment {exp.name}] fit {model_name}: {exc}"))
        if info and sc.has_phonons and exp.method == "pipeline":
            paths = "single-switch" if sc.geometry.value == "measurement-induced" else "all"
            dts = [num.dt, num.dt / 2] if num.richardson else [num.dt]
            for dt in dts:
                if store is None:
                    status = "no cache directory; will be built"
                else:
                    key = store.pt_key(sc.phonons, dt, num.t_mem, num.svd_threshold, num.max_bond, paths)
                    hit = (store.root / f"pt-{fingerprint(key)}.npz").exists()
                    status = "cached" if hit else "not cached; will be built"
                diags.append(("info", f"[experiment {exp.name}] PT at dt={dt:g} ps ({paths}): {status}"))
    return diags


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopg2", description="two-photon coincidences of cooperative emitters")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="compute a config or preset and write CSV files")
    run.add_argument("--config", required=True, help="config file or preset name")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--cache-dir", default=None, help=f"PT cache (default: ${CACHE_ENV})")
    val = sub.add_parser("validate", help="check a config without computing")
    val.add_argument("--config", required=True)
    val.add_argument("--cache-dir", default=None)
    sub.add_parser("list-presets", help="list built-in experiment suites")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "list-presets":
        for name, (desc, _) in PRESETS.items():
            print(f"{name:8s} {desc}")
        return 0
    cache_dir = args.cache_dir if args.cache_dir is not None else default_cache_dir()
    try:
        cfg = resolve_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.verb == "validate":
        diags = validate_suite(cfg, cache_dir, info=args.verbose)
        for level, msg in diags:
            print(f"{level}: {msg}")
        errors = sum(level == "error" for level, _ in diags)
        print(f"{cfg.tag}: {len(cfg.experiments)} experiments, {errors} errors")
        return 1 if errors else 0
    if args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return run_suite(cfg, Path(args.out), args.workers, cache_dir)
    except Coopg2Error as exc:
        print(f"{_provenance(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception:  # pragma: no cover - unexpected failures keep their traceback
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
