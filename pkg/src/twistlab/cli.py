"""Experiment driver: configuration, subcommands, seeding, CSV emission.

Every output file starts with ``# key: value`` header lines that echo the
exact configuration (plus its hash, the seed, and the code version), then a
column-name row, then comma-separated values printed with shortest
round-trip precision, so parse(write(rows)) == rows bit for bit.  Files are
written atomically (temp file then rename).

Parallelism: work is split into fixed-size tasks, each owning the Philox
stream keyed by (seed, domain, task-index); results are reduced in task
order, so output bytes are identical for every --threads value.  Exit
codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .exponents import (
    random_exponent_montecarlo,
    random_exponent_quadrature,
    random_exponent_series,
)
from .experiments import (
    DiffusedSpec,
    GridSpec,
    diffused_exponent,
    exponential_smallness_fit,
    lambda_scan,
)
from .fixedpoints import (
    bifurcation_map,
    double_zero_curves,
    find_fixed_points,
)
from .geometry import Rotation, SpherePoint, TangentState, rng_for, sample_tangent
from .linear import (
    Matrix2,
    avila_bochi,
    lambda_of_coset,
    stationary_densities,
    verify_m_delta_lebesgue,
)
from .twistmap import TwistFamily
from .exponents import MegnoAccumulator

OUTDIR_ENV = "TWISTLAB_OUTDIR"

# RNG stream domains; task indices vary within a domain
DOMAIN_MC = 1
DOMAIN_SCAN = 2
DOMAIN_DIFFUSED = 3
DOMAIN_MEGNO = 4

MC_CHUNK = 4096
DIFFUSED_CHUNK = 64


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Flat run configuration; file keys and flag names coincide."""

    subcommand: str = ""
    eps: List[float] = field(default_factory=lambda: [1.0])
    n: int = 1000
    m: int = 1000
    n_p: int = 128
    n_g: int = 16
    m_r: int = 64
    m_p: int = 64
    delta: float = 0.5
    seed: int = 1
    threads: int = 1
    outdir: str = "."
    estimator: str = "megno_improved"
    transient: int = 512
    grid: int = 16
    samples: int = 256
    beta: float = 0.3
    theta: float = 2.0
    matrix: List[float] = field(default_factory=lambda: [2.0, 0.0, 0.0, 0.5])
    n_alpha: int = 64
    n_z: int = 256

    def validate(self) -> None:
        for name in ("n", "m", "n_p", "m_r", "m_p", "samples", "n_alpha", "n_z"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_g < 2 or self.n_g % 2 != 0:
            raise ConfigError("n_g must be an even number of Simpson intervals >= 2")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.delta <= 0.0:
            raise ConfigError("delta must be > 0")
        if any(e < 0.0 for e in self.eps):
            raise ConfigError("eps values must be >= 0")
        if len(self.matrix) != 4:
            raise ConfigError("matrix needs exactly 4 entries a,b,c,d")

    def as_items(self) -> List[Tuple[str, str]]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                out.append((f.name, ",".join(repr(x) for x in v)))
            else:
                out.append((f.name, repr(v) if isinstance(v, float) else str(v)))
        return out

    def hash(self) -> str:
        canon = "\n".join(f"{k}={v}" for k, v in self.as_items())
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _parse_float_list(text: str) -> List[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def load_config_file(path: str, cfg: ExperimentConfig) -> ExperimentConfig:
    """Apply ``key = value`` lines to cfg; errors carry the line number."""
    valid = {f.name: f for f in fields(ExperimentConfig)}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            value = value.strip()
            if key not in valid:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                current = getattr(cfg, key)
                if isinstance(current, list) and key == "eps":
                    setattr(cfg, key, _parse_float_list(value))
                elif isinstance(current, list):
                    setattr(cfg, key, _parse_float_list(value))
                elif isinstance(current, bool):
                    setattr(cfg, key, value.lower() in ("1", "true", "yes"))
                elif isinstance(current, int):
                    setattr(cfg, key, int(value))
                elif isinstance(current, float):
                    setattr(cfg, key, float(value))
                else:
                    setattr(cfg, key, value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return cfg


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # shortest round-trip decimal
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_result_file(path: str, cfg: ExperimentConfig, columns: Sequence[str], rows) -> None:
    """Atomic CSV write with a provenance header echoing the full config."""
    lines = [f"# twistlab: {cfg.subcommand}", f"# version: {__version__}", f"# config_hash: {cfg.hash()}"]
    lines.extend(f"# {k}: {v}" for k, v in cfg.as_items())
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    payload = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".twistlab-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_result_file(path: str):
    """Parse a result file back into (meta dict, columns, rows of floats/str)."""
    meta: Dict[str, str] = {}
    columns: List[str] = []
    rows: List[list] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                meta[key] = value
            elif not columns:
                columns = line.split(",")
            elif line:
                parsed = []
                for item in line.split(","):
                    try:
                        parsed.append(float(item))
                    except ValueError:
                        parsed.append(item)
                rows.append(parsed)
    return meta, columns, rows


def verify_result_file(path: str) -> None:
    """Re-check header-vs-body consistency; raises on any mismatch."""
    meta, columns, rows = read_result_file(path)
    cfg = ExperimentConfig()
    for f in fields(ExperimentConfig):
        if f.name not in meta:
            raise ConfigError(f"{path}: header missing config key {f.name!r}")
        value = meta[f.name]
        current = getattr(cfg, f.name)
        if isinstance(current, list):
            setattr(cfg, f.name, _parse_float_list(value))
        elif isinstance(current, int):
            setattr(cfg, f.name, int(value))
        elif isinstance(current, float):
            setattr(cfg, f.name, float(value))
        else:
            setattr(cfg, f.name, value)
    if cfg.hash() != meta.get("config_hash"):
        raise ConfigError(f"{path}: config hash does not match echoed config")
    for i, row in enumerate(rows):
        if len(row) != len(columns):
            raise ConfigError(f"{path}: row {i} has {len(row)} fields, expected {len(columns)}")


def _run_tasks(tasks, threads: int):
    """Evaluate thunks in order-preserving fashion; thread count never
    changes the reduction order."""
    if threads <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: t(), tasks))


def _out(cfg: ExperimentConfig, name: str) -> str:
    return os.path.join(cfg.outdir, name)


# ---------------------------------------------------------------- commands


def cmd_random_exact(cfg: ExperimentConfig) -> int:
    rows = []
    for eps in cfg.eps:
        est = random_exponent_quadrature(eps)
        small = random_exponent_series(eps, "small") if eps > 0 else 0.0
        large = random_exponent_series(eps, "large") if eps > 0 else float("nan")
        rows.append((eps, est.value, est.std_error, small, large))
        print(f"eps={eps:g} R={est.value:.7f} err_bound={est.std_error:.2e}")
    write_result_file(
        _out(cfg, "random_exact.csv"),
        cfg,
        ("eps", "R_quadrature", "quad_error", "R_series_small", "R_series_large"),
        rows,
    )
    return 0


def cmd_random_mc(cfg: ExperimentConfig) -> int:
    rows = []
    for eps in cfg.eps:
        n_chunks = (cfg.m + MC_CHUNK - 1) // MC_CHUNK
        sizes = [min(MC_CHUNK, cfg.m - i * MC_CHUNK) for i in range(n_chunks)]
        tasks = [
            (lambda size=size, idx=idx: random_exponent_montecarlo(
                eps, cfg.n, size, rng_for(cfg.seed, DOMAIN_MC, idx), return_runs=True
            ))
            for idx, size in enumerate(sizes)
        ]
        runs = np.concatenate([r for _, r in _run_tasks(tasks, cfg.threads)])
        value = float(runs.mean())
        se = float(runs.std(ddof=1) / np.sqrt(len(runs))) if len(runs) > 1 else 0.0
        kappa = se * np.sqrt(float(cfg.n) * len(runs))
        exact = random_exponent_quadrature(eps).value
        rows.append((eps, value, se, kappa, exact, cfg.n, len(runs)))
        print(f"eps={eps:g} R_mc={value:.7f} stderr={se:.2e} kappa={kappa:.4f} R={exact:.7f}")
    write_result_file(
        _out(cfg, "random_mc.csv"),
        cfg,
        ("eps", "R_mc", "stderr", "kappa", "R_quadrature", "N", "M"),
        rows,
    )
    return 0


def cmd_lambda_scan(cfg: ExperimentConfig) -> int:
    grid = GridSpec(cfg.n_g)
    cell_rows = []
    summary_rows = []
    for idx, eps in enumerate(cfg.eps):
        rng = rng_for(cfg.seed, DOMAIN_SCAN, idx)
        scan = lambda_scan(
            eps, grid, cfg.n_p, cfg.m, rng, estimator=cfg.estimator, transient=cfg.transient
        )
        exact = random_exponent_quadrature(eps).value
        for i, theta in enumerate(scan.thetas):
            for j, beta in enumerate(scan.betas):
                cell_rows.append(
                    (
                        eps,
                        float(theta),
                        float(beta),
                        float(scan.lambda_cells[i, j]),
                        float(scan.sigma_cells[i, j]),
                        float(scan.weights[i, j]),
                        float(scan.h_table[i, j]),
                    )
                )
        summary_rows.append(
            (
                eps,
                scan.lambda_num,
                scan.lambda_extrap,
                exact,
                scan.sigma_s2,
                scan.sigma_total,
            )
        )
        print(
            f"eps={eps:g} Lambda_num={scan.lambda_num:.6f} "
            f"Lambda_extrap={scan.lambda_extrap:.6f} R={exact:.6f}"
        )
        _write_h_matrix(_out(cfg, f"lambda_scan_h_{idx}.dat"), scan)
    if len(summary_rows) >= 3 and all(r[2] > 0.0 for r in summary_rows):
        # indicative small-eps trend fit; coefficients carry no guarantees
        a, b = exponential_smallness_fit(
            [r[0] for r in summary_rows], [r[2] for r in summary_rows]
        )
        print(f"trend fit: log(Lambda) ~ {a:.3f} - {b:.3f}/eps (indicative only)")
    write_result_file(
        _out(cfg, "lambda_scan.csv"),
        cfg,
        ("eps", "theta", "beta", "lambda_g", "sigma_g", "weight", "h"),
        cell_rows,
    )
    write_result_file(
        _out(cfg, "lambda_summary.csv"),
        cfg,
        ("eps", "Lambda_num", "Lambda_extrap", "R_quadrature", "sigma_S2", "sigma_total"),
        summary_rows,
    )
    return 0


def _write_h_matrix(path: str, scan) -> None:
    """Whitespace matrix of h(theta, beta) for contour/3-D plotting."""
    lines = [
        "# twistlab: lambda-scan h-table",
        f"# eps: {scan.eps!r}",
        "# rows: theta nodes, columns: beta nodes",
    ]
    for i in range(scan.h_table.shape[0]):
        lines.append(" ".join(repr(v) for v in scan.h_table[i]))
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".twistlab-")
    with os.fdopen(fd, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def cmd_diffused(cfg: ExperimentConfig) -> int:
    rows = []
    for idx, eps in enumerate(cfg.eps):
        n_chunks = (cfg.m_r + DIFFUSED_CHUNK - 1) // DIFFUSED_CHUNK
        sizes = [min(DIFFUSED_CHUNK, cfg.m_r - i * DIFFUSED_CHUNK) for i in range(n_chunks)]
        tasks = [
            (lambda size=size, tid=(idx * 100000 + t): diffused_exponent(
                DiffusedSpec(eps, cfg.delta, cfg.n, size, cfg.m_p),
                rng_for(cfg.seed, DOMAIN_DIFFUSED, tid),
                return_group_means=True,
            ))
            for t, size in enumerate(sizes)
        ]
        groups = np.concatenate([g for _, g in _run_tasks(tasks, cfg.threads)])
        value = float(groups.mean())
        se = float(groups.std(ddof=1) / np.sqrt(len(groups))) if len(groups) > 1 else 0.0
        rows.append((eps, cfg.delta, value, se))
        print(f"eps={eps:g} delta={cfg.delta:g} R_diffused={value:.6f} stderr={se:.2e}")
    write_result_file(
        _out(cfg, "diffused.csv"), cfg, ("eps", "delta", "R_eps_delta", "stderr"), rows
    )
    return 0


def cmd_fixed_points(cfg: ExperimentConfig) -> int:
    rows = []
    for eps in cfg.eps:
        records = find_fixed_points(cfg.beta, cfg.theta, eps)
        for r in records:
            rows.append(
                (
                    eps,
                    cfg.theta,
                    cfg.beta,
                    r.b,
                    r.location.longitude,
                    r.location.latitude,
                    r.trace,
                    r.stability,
                    r.residual,
                    ";".join(r.flags) if r.flags else "ok",
                )
            )
        print(f"eps={eps:g}: {len(records)} fixed points "
              f"({''.join(sorted(r.stability for r in records))})")
    write_result_file(
        _out(cfg, "fixed_points.csv"),
        cfg,
        ("eps", "theta", "beta", "b", "longitude", "latitude", "trace", "stability", "residual", "flags"),
        rows,
    )
    return 0


def cmd_bifurcation_map(cfg: ExperimentConfig) -> int:
    rows = []
    for eps in cfg.eps:
        bmap = bifurcation_map(eps, cfg.grid)
        for i in range(cfg.grid):
            for j in range(cfg.grid):
                c = bmap.cells[i][j]
                flags = []
                if c.flagged:
                    flags.append("flagged")
                if c.boundary:
                    flags.append("boundary")
                rows.append(
                    (eps, c.theta, c.beta, c.n_e, c.n_h, c.n_r, c.code, ";".join(flags) or "ok")
                )
        counts = bmap.counts()
        print(f"eps={eps:g}: fixed-point counts range {counts.min()}..{counts.max()}")
    write_result_file(
        _out(cfg, "bifurcation_map.csv"),
        cfg,
        ("eps", "theta", "beta", "nE", "nH", "nR", "code", "flags"),
        rows,
    )
    return 0


def cmd_double_zero_curves(cfg: ExperimentConfig) -> int:
    b, m, beta = double_zero_curves(cfg.samples)
    rows = [(float(bi), float(mi), float(betai)) for bi, mi, betai in zip(b, m, beta)]
    write_result_file(_out(cfg, "double_zero_curves.csv"), cfg, ("b", "m", "beta"), rows)
    print(f"double-zero curves: {len(rows)} samples, beta in "
          f"[{beta.min():.6f}, {beta.max():.6f}]")
    return 0


def cmd_megno_demo(cfg: ExperimentConfig) -> int:
    eps = cfg.eps[0]
    rng = rng_for(cfg.seed, DOMAIN_MEGNO, 0)
    axis = np.array([np.cos(cfg.beta), 0.0, np.sin(cfg.beta)])
    g = Rotation.from_axis_angle(axis, cfg.theta)
    family = TwistFamily(eps)
    state = sample_tangent(rng)
    acc = MegnoAccumulator()
    total = 0.0
    rows = []
    for k in range(1, cfg.n + 1):
        state, ls = family.tangent_apply(state)
        state = TangentState(SpherePoint(g.apply(state.point.vec)), g.apply(state.direction))
        acc.update(ls)
        total += ls
        if k >= 4:
            rows.append((k, float(acc.y_hat()), float(acc.improved()), total / k))
    write_result_file(
        _out(cfg, "megno_demo.csv"), cfg, ("k", "y_hat", "y_improved", "classical"), rows
    )
    print(f"megno-demo: eps={eps:g} theta={cfg.theta:g} beta={cfg.beta:g} "
          f"final_y_hat={rows[-1][1]:.6f}")
    return 0


def cmd_linear_check(cfg: ExperimentConfig) -> int:
    a = Matrix2.of(np.array(cfg.matrix).reshape(2, 2)).normalized()
    ab = avila_bochi(a)
    lam = lambda_of_coset(a)

    alphas, phi = stationary_densities(a, cfg.delta, cfg.n_alpha, cfg.n_z)
    dev = float(np.max(np.abs(phi.mean(axis=0) - 1.0)))
    dev2 = verify_m_delta_lebesgue(a, cfg.delta, 2 * cfg.n_alpha, 2 * cfg.n_z)

    z = (np.arange(cfg.n_z) + 0.5) * (2.0 * np.pi / cfg.n_z)
    density_rows = [
        (float(alpha), float(zi), float(phi[i, j]))
        for i, alpha in enumerate(alphas)
        for j, zi in enumerate(z)
    ]
    write_result_file(
        _out(cfg, "linear_densities.csv"), cfg, ("alpha", "z", "phi"), density_rows
    )
    write_result_file(
        _out(cfg, "linear_mdelta.csv"),
        cfg,
        ("delta", "max_deviation"),
        [(cfg.delta, dev), (cfg.delta, dev2)],
    )
    write_result_file(
        _out(cfg, "linear_check.csv"),
        cfg,
        ("avila_bochi", "lambda_coset", "difference", "delta", "m_delta_dev", "m_delta_dev_refined"),
        [(ab, lam, abs(lam - ab), cfg.delta, dev, dev2)],
    )
    print(f"avila_bochi={ab:.6f} lambda_coset={lam:.6f} "
          f"m_delta_dev={dev:.2e} refined={dev2:.2e}")
    return 0


def cmd_verify(cfg: ExperimentConfig, paths: Sequence[str]) -> int:
    for path in paths:
        verify_result_file(path)
        print(f"{path}: ok")
    return 0


# -------------------------------------------------------------------- main

_COMMANDS = {
    "random-exact": cmd_random_exact,
    "random-mc": cmd_random_mc,
    "lambda-scan": cmd_lambda_scan,
    "diffused": cmd_diffused,
    "fixed-points": cmd_fixed_points,
    "bifurcation-map": cmd_bifurcation_map,
    "double-zero-curves": cmd_double_zero_curves,
    "megno-demo": cmd_megno_demo,
    "linear-check": cmd_linear_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twistlab", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    defaults = ExperimentConfig()

    def add_common(p):
        p.add_argument("--config", help="key = value config file; flags override it")
        p.add_argument("--eps", type=str, default=None, help="comma-separated eps list")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--outdir", type=str, default=None)
        p.add_argument("--n", type=int, default=None, help="iterates per orbit")
        p.add_argument("--m", type=int, default=None, help="samples / iterate budget")
        p.add_argument("--n-p", dest="n_p", type=int, default=None, help="starts per rotation")
        p.add_argument("--n-g", dest="n_g", type=int, default=None, help="Simpson intervals per axis")
        p.add_argument("--m-r", dest="m_r", type=int, default=None, help="rotation samples")
        p.add_argument("--m-p", dest="m_p", type=int, default=None, help="starts per rotation (diffused)")
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--estimator", choices=("classical", "megno", "megno_improved"), default=None)
        p.add_argument("--transient", type=int, default=None)
        p.add_argument("--grid", type=int, default=None, help="bifurcation-map cells per axis")
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--theta", type=float, default=None)
        p.add_argument("--matrix", type=str, default=None, help="a,b,c,d entries")
        p.add_argument("--n-alpha", dest="n_alpha", type=int, default=None)
        p.add_argument("--n-z", dest="n_z", type=int, default=None)

    for name in _COMMANDS:
        add_common(sub.add_parser(name))
    vp = sub.add_parser("verify")
    vp.add_argument("files", nargs="+")
    _ = defaults
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    cfg.subcommand = args.subcommand
    cfg.outdir = os.environ.get(OUTDIR_ENV, cfg.outdir)
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ConfigError(f"{args.config}: config file not found")
        load_config_file(args.config, cfg)
    for f in fields(ExperimentConfig):
        if f.name in ("subcommand",):
            continue
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if f.name in ("eps", "matrix"):
            setattr(cfg, f.name, _parse_float_list(value))
        else:
            setattr(cfg, f.name, value)
    cfg.validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.subcommand == "verify":
            cfg = ExperimentConfig()
            cfg.subcommand = "verify"
            return cmd_verify(cfg, args.files)
        cfg = config_from_args(args)
        os.makedirs(cfg.outdir, exist_ok=True)
        return _COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
