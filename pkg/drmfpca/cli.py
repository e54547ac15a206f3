"""Command-line interface: ``drm basis|fit|quantiles|density|ku|bench``."""

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .analysis import AUTO, DensityRatioAnalysis
from .baselines import ku_fit, ku_quantile
from .el_drm import DrmFit, fit_drm
from .estimators import drm_density, quantile_table
from .exceptions import DataError, DRMError, ValidationError
from .fixed_basis import parse_basis_spec
from .fpca_basis import AdaptiveBasis, explained_variance
from .kde import ReferenceFamily, k_grid_from_range
from .multisample import Layout, MultiSample, load_csv
from .simbench import QUANTILE_LEVELS, ScenarioId, ScenarioSpec, run_benchmark

logger = logging.getLogger(__name__)

CURVE_POINTS = 512


def _fmt(value: float) -> str:
    return f"{value:.6g}"


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors map to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ValidationError(f"{self.prog}: {message}")


def _parse_floats(text: str, name: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValidationError(f"{name}: expected comma-separated numbers, got {text!r}")


def _parse_range(text: str, name: str) -> Tuple[float, float, float]:
    parts = text.split(":")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"{name}: expected lo:hi:step, got {text!r}")
    return lo, hi, step


@dataclass(frozen=True)
class RunConfig:
    """Validated options for one CLI invocation.

    Attributes:
        command: Subcommand name
        input: Input CSV path
        layout: CSV layout
        bandwidth: ``silverman``, ``adaptive`` or a fixed bandwidth
        bw_family: Pilot family of the adaptive search
        k_grid: Candidate scale factors, or None for the default grid
        floor: None, ``auto`` or a floor constant
        basis: ``auto``, ``rich`` or a ``poly:`` spec
        d: ``auto`` or a fixed dimension
        threshold: Explained-variance threshold
        bic_max: Largest BIC candidate
        basis_file: Serialized adaptive basis to fit with
        dump: Where to write the serialized basis
        curves: Where to write eigenfunction curves
        levels: Quantile levels
        grid: Density grid (lo, hi, points)
        L: Number of K&U components
        grid_size: K&U grid size
        as_json: Emit JSON instead of tables
        out: Output path, or None for stdout
        threads: Worker count
    """

    command: str
    input: Optional[Path] = None
    layout: Layout = Layout.LONG
    bandwidth: Union[str, float] = "silverman"
    bw_family: ReferenceFamily = ReferenceFamily.NORMAL
    k_grid: Optional[np.ndarray] = None
    floor: Union[None, str, float] = None
    basis: str = AUTO
    d: Union[str, int] = AUTO
    threshold: float = 0.95
    bic_max: int = 4
    basis_file: Optional[Path] = None
    dump: Optional[Path] = None
    curves: Optional[Path] = None
    levels: Tuple[float, ...] = QUANTILE_LEVELS
    grid: Optional[Tuple[float, float, int]] = None
    L: int = 2
    grid_size: int = 512
    as_json: bool = False
    out: Optional[Path] = None
    threads: Optional[int] = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        """Validate parsed arguments, rejecting conflicting basis policies.

        Raises:
            ValidationError: If an option is malformed or options conflict
        """
        options: Dict[str, Any] = {"command": args.command}
        if getattr(args, "input", None) is not None:
            options["input"] = Path(args.input)
            options["layout"] = Layout(args.layout)
        if hasattr(args, "bandwidth"):
            options["bandwidth"] = _parse_bandwidth(args.bandwidth)
            options["bw_family"] = ReferenceFamily(args.bw_family)
            if args.bw_grid:
                options["k_grid"] = k_grid_from_range(*_parse_range(args.bw_grid, "--bw-grid"))
            if args.kde_floor is not None:
                options["floor"] = _parse_floor(args.kde_floor)
        if hasattr(args, "d"):
            options["d"] = _parse_d(args.d)
            options["threshold"] = args.threshold
            if args.bic_max < 1:
                raise ValidationError(f"--bic-max must be at least 1, got {args.bic_max}")
            options["bic_max"] = args.bic_max
        if hasattr(args, "basis"):
            options["basis"] = args.basis
            if args.basis != AUTO:
                parse_basis_spec(args.basis)
                if options["d"] != AUTO:
                    raise ValidationError(
                        f"--basis {args.basis} conflicts with --d {args.d}; "
                        "a fixed basis has no dimension to choose"
                    )
            if args.basis_file is not None:
                if args.basis != AUTO or options["d"] != AUTO:
                    raise ValidationError("--basis-file conflicts with --basis and --d")
                options["basis_file"] = Path(args.basis_file)
        if getattr(args, "levels", None) is not None:
            options["levels"] = _parse_floats(args.levels, "--levels")
            if not options["levels"]:
                raise ValidationError("--levels: no levels given")
            if not all(0.0 < tau < 1.0 for tau in options["levels"]):
                raise ValidationError(f"--levels must lie in (0, 1), got {args.levels!r}")
        for name in ("dump", "curves", "out"):
            if getattr(args, name, None) is not None:
                options[name] = Path(getattr(args, name))
        if args.command == "density":
            lo, hi, points = _parse_range(args.grid, "--grid")
            if not (hi > lo and points >= 2 and float(points).is_integer()):
                raise ValidationError(f"--grid: expected lo < hi and n >= 2, got {args.grid!r}")
            options["grid"] = (lo, hi, int(points))
        if args.command == "ku":
            options["L"] = args.L
            options["grid_size"] = args.grid
        options["as_json"] = bool(getattr(args, "json", False))
        options["threads"] = args.threads
        return cls(**options)


def _parse_bandwidth(text: str) -> Union[str, float]:
    if text in ("silverman", "adaptive"):
        return text
    if text.startswith("fixed:"):
        try:
            h = float(text[len("fixed:"):])
        except ValueError:
            h = float("nan")
        if h > 0:
            return h
    raise ValidationError(
        f"--bandwidth must be silverman, adaptive or fixed:<h> with h > 0, got {text!r}"
    )


def _parse_floor(text: str) -> Union[str, float]:
    if text == AUTO:
        return AUTO
    try:
        value = float(text)
    except ValueError:
        value = float("nan")
    if not value > 0:
        raise ValidationError(f"--kde-floor must be 'auto' or a positive number, got {text!r}")
    return value


def _parse_d(text: str) -> Union[str, int]:
    if text == AUTO:
        return AUTO
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"--d must be 'auto' or an integer, got {text!r}")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="drm",
        description="Density ratio model with data-adaptive basis functions.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
    )
    parser.add_argument("--threads", type=int, default=None, help="worker count")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_command(name: str, help_text: str) -> _Parser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--input", required=True, help="CSV file of samples")
        sub.add_argument("--layout", choices=[m.value for m in Layout], default="long")
        sub.add_argument("--out", help="write output here instead of stdout")
        sub.add_argument("--json", action="store_true", help="emit JSON")
        return sub

    def bandwidth_options(sub: _Parser) -> None:
        sub.add_argument("--bandwidth", default="silverman", help="silverman|adaptive|fixed:<h>")
        sub.add_argument(
            "--bw-family", choices=[f.value for f in ReferenceFamily], default="normal"
        )
        sub.add_argument("--bw-grid", help="scale grid lo:hi:step for --bandwidth adaptive")
        sub.add_argument("--kde-floor", help="floor constant C, or 'auto'")

    def basis_options(sub: _Parser, fixed_allowed: bool) -> None:
        bandwidth_options(sub)
        sub.add_argument("--d", default=AUTO, help="auto or number of eigenfunctions")
        sub.add_argument("--threshold", type=float, default=0.95)
        sub.add_argument("--bic-max", type=int, default=4)
        if fixed_allowed:
            sub.add_argument("--basis", default=AUTO, help="auto|rich|poly:<terms>")
            sub.add_argument("--basis-file", help="serialized adaptive basis (JSON)")

    basis = data_command("basis", "eigenvalues and eigenfunctions of the adaptive basis")
    basis_options(basis, fixed_allowed=False)
    basis.add_argument("--dump", help="write the serialized basis (JSON) here")
    basis.add_argument("--curves", help="write eigenfunction curves (CSV) here")

    fit = data_command("fit", "empirical likelihood fit")
    basis_options(fit, fixed_allowed=True)

    quantiles = data_command("quantiles", "quantiles of every population")
    basis_options(quantiles, fixed_allowed=True)
    quantiles.add_argument("--levels", default="0.1,0.3,0.5,0.7,0.9")

    density = data_command("density", "smoothed densities on a grid")
    basis_options(density, fixed_allowed=True)
    density.add_argument("--grid", required=True, help="lo:hi:n")

    ku = data_command("ku", "Kneip-Utikal functional PCA baseline quantiles")
    ku.add_argument("--L", type=int, default=2)
    ku.add_argument("--grid", type=int, default=512, help="grid size")
    ku.add_argument("--levels", default="0.1,0.3,0.5,0.7,0.9")

    bench = commands.add_parser("bench", help="Monte Carlo simulation benchmark")
    bench.add_argument("--scenario", choices=[s.value for s in ScenarioId], required=True)
    bench.add_argument("--n", type=int, default=500)
    bench.add_argument("--reps", type=int, default=200)
    bench.add_argument("--seed", type=int, default=42)
    bench.add_argument("--estimators", default="truth,adaptive,rich,np,ku2")
    bench.add_argument("--bw-grid", help="scale grid lo:hi:step for the adaptive basis")
    bench.add_argument("--out", help="report file (stdout when omitted)")
    bench.add_argument("--raw", help="per-repetition errors (CSV)")
    bench.add_argument("--json", action="store_true", help="emit JSON instead of TSV")
    return parser


def _analysis(config: RunConfig, ms: MultiSample) -> DensityRatioAnalysis:
    return DensityRatioAnalysis(
        ms,
        bandwidth=config.bandwidth,
        bw_family=config.bw_family,
        k_grid=config.k_grid,
        floor=config.floor,
        d=config.d,
        threshold=config.threshold,
        bic_candidates=range(1, config.bic_max + 1),
        threads=config.threads,
    )


def _load_basis_file(path: Path) -> AdaptiveBasis:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"Cannot read basis file {path}: {e}")
    except ValueError as e:
        raise DataError(f"Basis file {path} is not valid JSON: {e}")
    return AdaptiveBasis.from_dict(data)


def _fit(config: RunConfig, ms: MultiSample) -> DrmFit:
    if config.basis_file is not None:
        return fit_drm(ms, _load_basis_file(config.basis_file))
    if config.basis != AUTO:
        return fit_drm(ms, parse_basis_spec(config.basis))
    return _analysis(config, ms).fit


def _table(header: Sequence[str], rows: Sequence[Sequence[Any]], sep: str) -> str:
    lines = [sep.join(header)]
    for row in rows:
        lines.append(sep.join(v if isinstance(v, str) else _fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _run_basis(config: RunConfig, ms: MultiSample) -> str:
    analysis = _analysis(config, ms)
    basis = analysis.basis
    explained = explained_variance(basis.spectrum)
    if config.dump is not None:
        _write(config.dump, json.dumps(basis.to_dict()))
    if config.curves is not None:
        h = float(np.max(analysis.bandwidths))
        grid = np.linspace(ms.values.min() - h, ms.values.max() + h, CURVE_POINTS)
        curves = np.column_stack([grid, basis(grid)])
        header = ["x", *(f"psi{j}" for j in range(basis.d))]
        _write(config.curves, _table(header, curves.tolist(), ","))
    if config.as_json:
        return json.dumps(
            {
                "d": basis.d,
                "eigenvalues": basis.spectrum.tolist(),
                "explained": explained.tolist(),
                "provenance": basis.provenance,
            }
        )
    rows = [[str(j), value, share] for j, (value, share) in enumerate(zip(basis.spectrum, explained))]
    return _table(["j", "eigenvalue", "explained"], rows, "\t")


def _run_fit(config: RunConfig, ms: MultiSample) -> str:
    fit = _fit(config, ms)
    data = fit.to_dict()
    keys = ("alpha", "beta", "loglik", "converged", "iterations", "constraint_residual")
    return json.dumps({key: data[key] for key in keys})


def _quantile_output(config: RunConfig, ms: MultiSample, table: np.ndarray) -> str:
    labels = list(ms.labels) or [str(k) for k in range(ms.m + 1)]
    if config.as_json:
        return json.dumps(
            {"levels": list(config.levels), "populations": labels, "quantiles": table.tolist()}
        )
    rows = [[label, *values] for label, values in zip(labels, table)]
    return _table(["population", *(_fmt(t) for t in config.levels)], rows, "\t")


def _run_quantiles(config: RunConfig, ms: MultiSample) -> str:
    return _quantile_output(config, ms, quantile_table(_fit(config, ms), config.levels))


def _run_density(config: RunConfig, ms: MultiSample) -> str:
    assert config.grid is not None
    lo, hi, points = config.grid
    grid = np.linspace(lo, hi, points)
    fit = _fit(config, ms)
    curves = np.column_stack([grid, *(drm_density(fit, r, grid) for r in range(ms.m + 1))])
    if config.as_json:
        return json.dumps({"grid": grid.tolist(), "densities": curves[:, 1:].T.tolist()})
    header = ["x", *(f"g{r}" for r in range(ms.m + 1))]
    return _table(header, curves.tolist(), ",")


def _run_ku(config: RunConfig, ms: MultiSample) -> str:
    model = ku_fit(ms, config.L, config.grid_size)
    table = np.array(
        [[ku_quantile(model, r, tau) for tau in config.levels] for r in range(ms.m + 1)]
    )
    return _quantile_output(config, ms, table)


def _run_bench(args: argparse.Namespace) -> str:
    spec = ScenarioSpec.from_id(args.scenario, args.n, args.reps, args.seed)
    k_grid = k_grid_from_range(*_parse_range(args.bw_grid, "--bw-grid")) if args.bw_grid else None
    report = run_benchmark(spec, args.estimators, k_grid=k_grid, threads=args.threads)
    if args.raw:
        _write(Path(args.raw), report.to_raw_csv())
    if args.json:
        return json.dumps(report.to_dict())
    return report.to_tsv()


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    except OSError as e:
        raise DataError(f"Cannot write {path}: {e}")


def _emit(text: str, out: Optional[Path], stream: TextIO) -> None:
    if out is not None:
        _write(out, text)
    else:
        stream.write(text if text.endswith("\n") else text + "\n")


_COMMANDS = {
    "basis": _run_basis,
    "fit": _run_fit,
    "quantiles": _run_quantiles,
    "density": _run_density,
    "ku": _run_ku,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI.

    Returns:
        0 on success, 1 for usage errors, 2 for data errors, 3 for numeric
        and convergence errors

    Example:
        ```bash
        drm fit --input samples.csv --basis poly:x
        drm bench --scenario s1 --n 500 --reps 200 --out report.tsv
        ```
    """
    try:
        args = _build_parser().parse_args(argv)
        logging.basicConfig(
            level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command == "bench":
            _emit(_run_bench(args), Path(args.out) if args.out else None, sys.stdout)
            return 0
        config = RunConfig.from_args(args)
        assert config.input is not None
        ms = load_csv(config.input, config.layout)
        _emit(_COMMANDS[config.command](config, ms), config.out, sys.stdout)
    except DRMError as e:
        sys.stderr.write(f"drm: error: {e}\n")
        if e.details:
            logger.debug("details: %s", e.details)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
