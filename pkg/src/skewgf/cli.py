"""Command-line entry point: ``skewgf <command> [--config PATH] [flags]``.

Exit status: 0 success, 1 a validation check failed, 2 bad configuration,
3 numerical failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dimension import lambda1_scaling_scan
from .error_analysis import BoundConfig, critical_radii, region_bound, uniform_bound
from .exceptions import (
    ConfigError,
    DegenerateKernelError,
    IllConditionedGramError,
    InconsistentVarianceError,
    KernelError,
    NoCriticalRadiusError,
)
from .field import PairedPoint
from .joint import build_joint_gram, sample_joint
from .kernels import RadialKernel
from .reporting import (
    BOUNDS_SCAN_COLUMNS,
    CHECK_COLUMNS,
    DIM_SCAN_COLUMNS,
    KERNEL_TABLE_COLUMNS,
    emit_report,
)
from .validation import run_bound_validation, run_covariance_validation, run_error_validation

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4

COMMANDS = ("kernel-info", "validate-cov", "validate-error", "validate-bound", "bounds", "dim-scan", "sample")
STOCHASTIC = {"validate-cov", "validate-error", "validate-bound", "sample"}
NUMERICAL_ERRORS = (
    IllConditionedGramError,
    NoCriticalRadiusError,
    InconsistentVarianceError,
    DegenerateKernelError,
    FloatingPointError,
    np.linalg.LinAlgError,
)

_TOP_KEYS = {
    "kernel", "D", "zstar", "bound", "samples", "seed", "threads", "out", "format",
    "points", "test_points", "n_points", "kernel_table", "bounds_scan", "dim_scan",
}
_SECTION_KEYS = {
    "bound": {"p", "pprime", "sigma_eigs", "r_region_sq"},
    "kernel_table": {"tau_max", "count"},
    "bounds_scan": {"r_max", "count"},
    "dim_scan": {"pprime", "target_r_sq", "dims", "d_min", "d_max", "count"},
}


@dataclass
class RunConfig:
    kernel: RadialKernel = field(default_factory=RadialKernel.se)
    D: int = 2
    zstar: np.ndarray | None = None
    p: float = 0.95
    pprime: float = 0.95
    sigma_eigs: tuple = ()
    r_region_sq: float | None = None
    samples: int = 200_000
    seed: int | None = None
    threads: int = 1
    out: str | None = None
    format: str = "record"
    points: list | None = None
    test_points: list | None = None
    n_points: int = 4
    tau_max: float = 4.0
    tau_count: int = 9
    r_max: float = 3.0
    r_count: int = 60
    dim_pprime: float | None = None
    target_r_sq: float = 1.0
    dims: list = field(default_factory=list)

    def bound_config(self):
        return BoundConfig(self.p, self.pprime, tuple(self.sigma_eigs), self.D, self.r_region_sq)


def _line_of(text, key):
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _field_error(path, msg, text, source):
    line = _line_of(text, path.split(".")[-1].split("[")[0])
    where = f"{source}:{line}" if line else source
    return ConfigError(f"{where}: field '{path}': {msg}")


def _number(raw, path, text, source, kind=float, positive=False, lo=None, hi=None):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise _field_error(path, f"expected a number, got {raw!r}", text, source)
    if kind is int and int(raw) != raw:
        raise _field_error(path, f"expected an integer, got {raw!r}", text, source)
    v = kind(raw)
    if positive and not v > 0:
        raise _field_error(path, f"must be positive, got {raw!r}", text, source)
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise _field_error(path, f"must lie in [{lo}, {hi}], got {raw!r}", text, source)
    return v


def _point(raw, D, path, text, source):
    try:
        if isinstance(raw, dict):
            extra = set(raw) - {"first", "second"}
            if extra:
                raise ValueError(f"unknown keys {sorted(extra)}")
            pt = PairedPoint(raw["first"], raw["second"])
        elif isinstance(raw, list) and len(raw) == 2 and all(isinstance(h, list) for h in raw):
            pt = PairedPoint(raw[0], raw[1])
        else:
            pt = PairedPoint.from_flat(raw)
    except (ValueError, KeyError, TypeError) as exc:
        raise _field_error(path, f"not a paired point: {exc}", text, source) from None
    if pt.dim != D:
        raise _field_error(path, f"point has dim {pt.dim}, expected D={D}", text, source)
    return pt


def parse_config(data, text="", source="<config>"):
    """Validate a decoded config mapping into a :class:`RunConfig`."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    cfg = RunConfig()
    unknown = set(data) - _TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise _field_error(key, f"unknown field (allowed: {', '.join(sorted(_TOP_KEYS))})", text, source)
    for sect, allowed in _SECTION_KEYS.items():
        if sect in data:
            if not isinstance(data[sect], dict):
                raise _field_error(sect, "expected an object", text, source)
            bad = set(data[sect]) - allowed
            if bad:
                k = sorted(bad)[0]
                raise _field_error(f"{sect}.{k}", f"unknown field (allowed: {', '.join(sorted(allowed))})", text, source)

    if "kernel" in data:
        try:
            cfg.kernel = RadialKernel.from_dict(data["kernel"])
        except (KernelError, ValueError, TypeError) as exc:
            raise _field_error("kernel", str(exc), text, source) from None
    if "D" in data:
        cfg.D = _number(data["D"], "D", text, source, int, positive=True)
    if "zstar" in data:
        z = data["zstar"]
        if not isinstance(z, list) or len(z) != cfg.D:
            raise _field_error("zstar", f"expected a list of {cfg.D} numbers", text, source)
        cfg.zstar = np.array([_number(v, f"zstar[{i}]", text, source) for i, v in enumerate(z)])

    b = data.get("bound", {})
    if "p" in b:
        cfg.p = _number(b["p"], "bound.p", text, source, lo=0.5, hi=1.0)
    if "pprime" in b:
        cfg.pprime = _number(b["pprime"], "bound.pprime", text, source, lo=0.0, hi=1.0)
    if "sigma_eigs" in b:
        e = b["sigma_eigs"]
        e = e if isinstance(e, list) else [e]
        cfg.sigma_eigs = tuple(
            _number(v, f"bound.sigma_eigs[{i}]", text, source, positive=True) for i, v in enumerate(e)
        )
    if "r_region_sq" in b:
        cfg.r_region_sq = _number(b["r_region_sq"], "bound.r_region_sq", text, source, positive=True)
    if b or cfg.sigma_eigs or cfg.r_region_sq is not None:
        try:
            if cfg.sigma_eigs or cfg.r_region_sq is not None:
                cfg.bound_config()
            else:
                BoundConfig(cfg.p, cfg.pprime, r_region_sq=1.0)
        except ValueError as exc:
            raise _field_error("bound", str(exc), text, source) from None

    if "samples" in data:
        cfg.samples = _number(data["samples"], "samples", text, source, int, positive=True)
    if "seed" in data:
        cfg.seed = _number(data["seed"], "seed", text, source, int, lo=0, hi=2**64 - 1)
    if "threads" in data:
        cfg.threads = _number(data["threads"], "threads", text, source, int, positive=True)
    if "out" in data:
        if not isinstance(data["out"], str):
            raise _field_error("out", "expected a path string", text, source)
        cfg.out = data["out"]
    if "format" in data:
        if data["format"] not in ("csv", "record"):
            raise _field_error("format", "expected 'csv' or 'record'", text, source)
        cfg.format = data["format"]
    if "n_points" in data:
        cfg.n_points = _number(data["n_points"], "n_points", text, source, int, positive=True)
    for key in ("points", "test_points"):
        if key in data:
            if not isinstance(data[key], list):
                raise _field_error(key, "expected a list of points", text, source)
            pts = [_point(v, cfg.D, f"{key}[{i}]", text, source) for i, v in enumerate(data[key])]
            if key == "test_points":
                for i, pt in enumerate(pts):
                    if pt.is_matched:
                        raise _field_error(f"test_points[{i}]", "test points must not be matched", text, source)
            setattr(cfg, key, pts)

    kt = data.get("kernel_table", {})
    if "tau_max" in kt:
        cfg.tau_max = _number(kt["tau_max"], "kernel_table.tau_max", text, source, positive=True)
    if "count" in kt:
        cfg.tau_count = _number(kt["count"], "kernel_table.count", text, source, int, lo=2)
    bs = data.get("bounds_scan", {})
    if "r_max" in bs:
        cfg.r_max = _number(bs["r_max"], "bounds_scan.r_max", text, source, positive=True)
    if "count" in bs:
        cfg.r_count = _number(bs["count"], "bounds_scan.count", text, source, int, positive=True)
    ds = data.get("dim_scan", {})
    if "pprime" in ds:
        cfg.dim_pprime = _number(ds["pprime"], "dim_scan.pprime", text, source, lo=0.0, hi=1.0)
    if "target_r_sq" in ds:
        cfg.target_r_sq = _number(ds["target_r_sq"], "dim_scan.target_r_sq", text, source, positive=True)
    if "dims" in ds:
        if not isinstance(ds["dims"], list) or not ds["dims"]:
            raise _field_error("dim_scan.dims", "expected a non-empty list of integers", text, source)
        cfg.dims = [
            _number(v, f"dim_scan.dims[{i}]", text, source, int, positive=True) for i, v in enumerate(ds["dims"])
        ]
    elif {"d_min", "d_max", "count"} & set(ds):
        lo = _number(ds.get("d_min", 30), "dim_scan.d_min", text, source, int, positive=True)
        hi = _number(ds.get("d_max", 3000), "dim_scan.d_max", text, source, int, positive=True)
        n = _number(ds.get("count", 25), "dim_scan.count", text, source, int, positive=True)
        if hi < lo:
            raise _field_error("dim_scan.d_max", "must be >= d_min", text, source)
        cfg.dims = _log_dims(lo, hi, n)
    return cfg


def _log_dims(lo, hi, n):
    return sorted({int(round(v)) for v in np.geomspace(lo, hi, n)})


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(data, text, str(path))


# -- commands -------------------------------------------------------------------


def _zstar(cfg):
    return cfg.zstar if cfg.zstar is not None else np.zeros(cfg.D)


def _default_points(cfg, n, seed_tag):
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1000 + seed_tag,)))
    z = _zstar(cfg)
    return [PairedPoint(z + 0.7 * rng.standard_normal(cfg.D), z + 0.7 * rng.standard_normal(cfg.D)) for _ in range(n)]


def cmd_kernel_info(cfg):
    k = cfg.kernel
    radii = critical_radii(k)
    taus = np.linspace(0.0, cfg.tau_max, cfg.tau_count)
    rows = [(float(t), k.h(t), k.dh(t), k.d2h(t)) for t in taus]
    payload = {
        "kernel": k.to_dict(),
        "table": [dict(zip(KERNEL_TABLE_COLUMNS, r)) for r in rows],
        "rc1_sq": radii.rc1_sq,
        "rc2_sq": radii.rc2_sq,
    }
    summary = [f"rc1_sq={radii.rc1_sq:.12g} rc2_sq={radii.rc2_sq:.12g}"]
    return payload, KERNEL_TABLE_COLUMNS, rows, summary, True


def _validation_output(rep):
    rows = [
        (c.name, c.closed_form_value, c.empirical_value, c.mc_standard_error, c.passed, c.rule) for c in rep.checks
    ]
    summary = rep.lines() + [f"{rep.campaign}: {'PASS' if rep.passed else 'FAIL'}"]
    return rep.to_record(), CHECK_COLUMNS, rows, summary, rep.passed


def cmd_validate_cov(cfg):
    pts = cfg.points if cfg.points is not None else _default_points(cfg, cfg.n_points, 0)
    rep = run_covariance_validation(cfg.kernel, cfg.D, pts, cfg.samples, cfg.seed, _zstar(cfg), cfg.threads)
    return _validation_output(rep)


def cmd_validate_error(cfg):
    pts = cfg.test_points
    if pts is None:
        pts = [p for p in _default_points(cfg, cfg.n_points, 1) if not p.is_matched]
    rep = run_error_validation(cfg.kernel, cfg.D, pts, cfg.samples, cfg.seed, _zstar(cfg), cfg.threads)
    return _validation_output(rep)


def cmd_validate_bound(cfg):
    if not cfg.sigma_eigs:
        raise ConfigError("field 'bound.sigma_eigs': validate-bound needs the input covariance spectrum")
    bc = BoundConfig(cfg.p, cfg.pprime, tuple(cfg.sigma_eigs), cfg.D, None)
    rep = run_bound_validation(cfg.kernel, bc, cfg.samples, cfg.seed, _zstar(cfg), cfg.threads)
    return _validation_output(rep)


def cmd_bounds(cfg):
    if not cfg.sigma_eigs and cfg.r_region_sq is None:
        raise ConfigError("field 'bound': bounds needs either sigma_eigs or r_region_sq")
    radii = critical_radii(cfg.kernel)
    report = uniform_bound(cfg.kernel, cfg.bound_config(), radii)
    qp = report.quantile_p
    rows = []
    for R in np.linspace(cfg.r_max / cfg.r_count, cfg.r_max, cfg.r_count):
        regime, vb = region_bound(cfg.kernel, float(R) ** 2, radii)
        rows.append((float(R), regime.value, vb, qp * math.sqrt(vb), qp * vb))
    payload = {
        "kernel": cfg.kernel.to_dict(),
        "report": report.to_record(),
        "scan": [dict(zip(BOUNDS_SCAN_COLUMNS, r)) for r in rows],
    }
    summary = [
        f"regime={report.regime.value} r_region_sq={report.r_region_sq:.12g} "
        f"variance_bound={report.variance_bound:.12g} b_uniform={report.b_uniform:.12g} "
        f"paper_literal_b={report.paper_literal_b:.12g}"
    ]
    return payload, BOUNDS_SCAN_COLUMNS, rows, summary, True


def cmd_dim_scan(cfg):
    dims = cfg.dims or _log_dims(30, 3000, 25)
    pp = cfg.dim_pprime if cfg.dim_pprime is not None else cfg.pprime
    scan = lambda1_scaling_scan(pp, cfg.target_r_sq, dims)
    # footer record carries the fitted slopes under the same columns
    rows = scan.rows() + [("slope", scan.slope_exact, scan.slope_fisher)]
    payload = {
        "pprime": scan.pprime,
        "target_r_sq": scan.target_r_sq,
        "slope_exact": scan.slope_exact,
        "slope_fisher": scan.slope_fisher,
        "rows": [dict(zip(DIM_SCAN_COLUMNS, r)) for r in scan.rows()],
    }
    summary = [f"slope_exact={scan.slope_exact:.6f} slope_fisher={scan.slope_fisher:.6f}"]
    return payload, DIM_SCAN_COLUMNS, rows, summary, True


def cmd_sample(cfg):
    pts = cfg.points if cfg.points is not None else _default_points(cfg, cfg.n_points, 0)
    gram = build_joint_gram(cfg.kernel, _zstar(cfg), pts)
    draws = sample_joint(gram, cfg.seed, cfg.samples, cfg.threads)
    D = cfg.D
    cols = [f"f{i}" for i in range(len(pts))] + [f"g{i}" for i in range(D)]
    cols += [f"H11_{i}_{j}" for i, j in zip(*np.triu_indices(D))]
    cols += [f"H12_{i}_{j}" for i, j in zip(*np.triu_indices(D, 1))]
    payload = {
        "columns": cols,
        "points": [p.to_record() for p in pts],
        "seed": cfg.seed,
        "samples": cfg.samples,
        "jitter_used": gram.jitter_used,
        "draws": draws.tolist(),
    }
    summary = [f"drew {cfg.samples} rows of {len(cols)} coordinates (jitter {gram.jitter_used:.3g})"]
    return payload, tuple(cols), draws.tolist(), summary, True


HANDLERS = {
    "kernel-info": cmd_kernel_info,
    "validate-cov": cmd_validate_cov,
    "validate-error": cmd_validate_error,
    "validate-bound": cmd_validate_bound,
    "bounds": cmd_bounds,
    "dim-scan": cmd_dim_scan,
    "sample": cmd_sample,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed (required for stochastic commands)")
    common.add_argument("--samples", type=int, metavar="N", help="Monte Carlo sample count")
    common.add_argument("--out", metavar="PATH", help="write the artifact here instead of stdout")
    common.add_argument("--threads", type=int, metavar="K", help="worker threads for sampling")
    common.add_argument("--format", choices=("csv", "record"), help="artifact format")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="skewgf", description="Skew-symmetric Gaussian field toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "kernel-info": "tabulate h, h', h'' and the critical radii",
        "validate-cov": "Monte Carlo check of field and model covariances",
        "validate-error": "Monte Carlo check of the error variance",
        "validate-bound": "end-to-end coverage of the uniform bound",
        "bounds": "uniform bound plus a radius scan",
        "dim-scan": "principal-eigenvalue scaling against dimension",
        "sample": "raw joint draws of field values and derivatives",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _apply_flags(cfg, args):
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("flag '--seed': must lie in [0, 2**64)")
        cfg.seed = args.seed
    if args.samples is not None:
        if args.samples < 1:
            raise ConfigError("flag '--samples': must be positive")
        cfg.samples = args.samples
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("flag '--threads': must be positive")
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out = args.out
    if args.format is not None:
        cfg.format = args.format
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        _apply_flags(cfg, args)
        if args.command in STOCHASTIC and cfg.seed is None:
            raise ConfigError(f"field 'seed': {args.command} is stochastic and needs --seed (or 'seed' in the config)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            payload, columns, rows, summary, ok = HANDLERS[args.command](cfg)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    try:
        text = emit_report(payload, cfg.format, cfg.out, columns, rows)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    stream = sys.stdout if cfg.out else sys.stderr
    if cfg.out is None:
        sys.stdout.write(text)
    for line in summary:
        print(line, file=stream)
    return EXIT_OK if ok else EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
