"""Simulation scenarios, ground truth, and the Monte Carlo benchmark.

Each repetition draws m+1 = 6 samples from a named scenario using its own
counter-based random stream, runs every requested estimator, and records the
integrated squared error of each density estimate and the squared error of
each quantile estimate. The report scales averages by the sample sizes.
"""

import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.integrate import quad, trapezoid
from scipy.optimize import brentq

from .analysis import DensityRatioAnalysis
from .baselines import ku_fit, ku_quantile, np_densities, np_quantiles
from .el_drm import fit_drm
from .estimators import drm_density, drm_quantile
from .exceptions import (
    BenchmarkError,
    DRMError,
    EnvelopeError,
    NumericError,
    ValidationError,
)
from .fixed_basis import FixedBasis, rich_basis
from .kde import ReferenceFamily
from .multisample import MultiSample
from .runtime import parallel_map

logger = logging.getLogger(__name__)

QUANTILE_LEVELS = (0.1, 0.3, 0.5, 0.7, 0.9)
IMSE_POINTS = 2048
IMSE_TAIL = 1e-4
SELF_DESIGNED_CENTERS = (-0.6745, 0.6745)
_PHI_MAX = 1.0 / math.sqrt(2.0 * math.pi)
_QUAD_TOLERANCE = 1e-10


class ScenarioId(Enum):
    """Simulation scenarios."""

    NORMAL_EQVAR = "s1"
    NORMAL_UNEQVAR = "s2"
    GAMMA = "s3"
    SELF_DESIGNED = "s4"
    WEIBULL = "weibull"
    NORMAL_MIXTURE = "mixture"


_PARAMETERS: Dict[ScenarioId, Tuple[Tuple[float, ...], ...]] = {
    # (mean, variance)
    ScenarioId.NORMAL_EQVAR: tuple(
        (mu, 6.0) for mu in (18.0, 18.5, 18.5, 17.5, 19.0, 18.0)
    ),
    ScenarioId.NORMAL_UNEQVAR: tuple(
        zip((18.0, 18.5, 18.5, 17.5, 18.0, 18.0), (6.0, 6.5, 7.0, 6.0, 6.5, 6.0))
    ),
    # (shape, scale)
    ScenarioId.GAMMA: tuple(
        zip((6.0, 6.0, 7.0, 7.0, 8.0, 8.0), (1.5, 1.4, 1.3, 1.2, 1.1, 1.0))
    ),
    # (beta_1, beta_2) on phi(x - xi_1), phi(x - xi_2)
    ScenarioId.SELF_DESIGNED: tuple(
        zip((0.0, 2.0, 1.0, 0.0, -2.0, 3.0), (0.0, -3.0, 1.0, -2.0, 2.0, -1.0))
    ),
    # (shape, scale)
    ScenarioId.WEIBULL: tuple(
        zip((4.5, 5.0, 6.0, 6.5, 7.0, 7.5), (10.0, 9.0, 11.0, 11.5, 12.5, 12.0))
    ),
    # (weight, mean_1, variance_1, mean_2, variance_2)
    ScenarioId.NORMAL_MIXTURE: tuple(
        zip(
            (0.5, 0.5, 0.3, 0.5, 0.4, 0.2),
            (15.0, 15.0, 15.5, 16.0, 14.5, 15.0),
            (3.0, 3.0, 3.5, 3.0, 3.5, 3.0),
            (18.0, 18.0, 17.0, 19.0, 17.0, 16.0),
            (3.0, 3.5, 4.0, 4.0, 4.5, 3.0),
        )
    ),
}

_TRUTH_BASES: Dict[ScenarioId, Tuple[str, ...]] = {
    ScenarioId.NORMAL_EQVAR: ("x",),
    ScenarioId.NORMAL_UNEQVAR: ("x", "x2"),
    ScenarioId.GAMMA: ("x", "logx"),
    ScenarioId.SELF_DESIGNED: tuple(f"normpdf:{c}" for c in SELF_DESIGNED_CENTERS),
}

_REFERENCE_FAMILIES: Dict[ScenarioId, ReferenceFamily] = {
    ScenarioId.GAMMA: ReferenceFamily.GAMMA,
    ScenarioId.WEIBULL: ReferenceFamily.GAMMA,
}


@dataclass(frozen=True)
class ScenarioSpec:
    """A simulation scenario with its design.

    Attributes:
        scenario: Scenario identifier
        parameters: Per-population parameter tuples for the scenario family
        sample_size: n_r for every population
        reps: Number of repetitions
        seed: Master seed
    """

    scenario: ScenarioId
    parameters: Tuple[Tuple[float, ...], ...]
    sample_size: int = 500
    reps: int = 200
    seed: int = 42

    def __post_init__(self) -> None:
        if self.sample_size < 2:
            raise ValidationError(f"sample_size must be at least 2, got {self.sample_size}")
        if self.reps < 0:
            raise ValidationError(f"reps must be nonnegative, got {self.reps}")
        for params in self.parameters:
            _check_parameters(self.scenario, params)

    @classmethod
    def from_id(
        cls,
        scenario: Union[ScenarioId, str],
        sample_size: int = 500,
        reps: int = 200,
        seed: int = 42,
    ) -> "ScenarioSpec":
        """Build the standard design of a scenario.

        Example:
            ```python
            spec = ScenarioSpec.from_id("s3", sample_size=1000, reps=50)
            ```
        """
        scenario = ScenarioId(scenario)
        return cls(scenario, _PARAMETERS[scenario], sample_size, reps, seed)

    @property
    def populations(self) -> int:
        return len(self.parameters)

    @property
    def reference_family(self) -> ReferenceFamily:
        """Pilot family used by the adaptive bandwidth search."""
        return _REFERENCE_FAMILIES.get(self.scenario, ReferenceFamily.NORMAL)

    def truth_basis(self) -> FixedBasis:
        """The basis under which the scenario satisfies the model exactly.

        Raises:
            ValidationError: For scenarios outside the model (Weibull, mixture)
        """
        if self.scenario not in _TRUTH_BASES:
            raise ValidationError(f"Scenario {self.scenario.value} has no true basis")
        return FixedBasis(_TRUTH_BASES[self.scenario])


def _check_parameters(scenario: ScenarioId, params: Tuple[float, ...]) -> None:
    if scenario in (ScenarioId.NORMAL_EQVAR, ScenarioId.NORMAL_UNEQVAR):
        ok = len(params) == 2 and params[1] > 0
    elif scenario in (ScenarioId.GAMMA, ScenarioId.WEIBULL):
        ok = len(params) == 2 and params[0] > 0 and params[1] > 0
    elif scenario is ScenarioId.SELF_DESIGNED:
        ok = len(params) == 2
    else:
        ok = len(params) == 5 and 0 < params[0] < 1 and params[2] > 0 and params[4] > 0
    if not ok:
        raise ValidationError(f"Invalid {scenario.value} parameters {params}")


class Population:
    """A population with closed-form (or quadrature) density, CDF and quantiles."""

    def pdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def ppf(self, tau: float) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class _FrozenPopulation(Population):
    distribution: Any = field(repr=False)
    draw: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        return self.distribution.pdf(x)

    def cdf(self, x: float) -> float:
        return float(self.distribution.cdf(x))

    def ppf(self, tau: float) -> float:
        return float(self.distribution.ppf(tau))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.draw(rng, n)


def _normal(mean: float, variance: float) -> Population:
    sd = math.sqrt(variance)
    return _FrozenPopulation(
        stats.norm(loc=mean, scale=sd), lambda rng, n: rng.normal(mean, sd, size=n)
    )


def _gamma(shape: float, scale: float) -> Population:
    return _FrozenPopulation(
        stats.gamma(a=shape, scale=scale),
        lambda rng, n: rng.gamma(shape, scale, size=n),
    )


def _weibull(shape: float, scale: float) -> Population:
    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return scale * (-np.log1p(-rng.random(n))) ** (1.0 / shape)

    return _FrozenPopulation(stats.weibull_min(c=shape, scale=scale), draw)


def _invert(cdf: Callable[[float], float], tau: float, lo: float, hi: float) -> float:
    return float(brentq(lambda t: cdf(t) - tau, lo, hi, xtol=_QUAD_TOLERANCE))


@dataclass(frozen=True)
class MixturePopulation(Population):
    """Two-component normal mixture."""

    weight: float
    mean1: float
    variance1: float
    mean2: float
    variance2: float

    def _components(self) -> Tuple[Any, Any]:
        return (
            stats.norm(self.mean1, math.sqrt(self.variance1)),
            stats.norm(self.mean2, math.sqrt(self.variance2)),
        )

    def pdf(self, x: np.ndarray) -> np.ndarray:
        first, second = self._components()
        return self.weight * first.pdf(x) + (1.0 - self.weight) * second.pdf(x)

    def cdf(self, x: float) -> float:
        first, second = self._components()
        return float(self.weight * first.cdf(x) + (1.0 - self.weight) * second.cdf(x))

    def ppf(self, tau: float) -> float:
        spread = 10.0 * math.sqrt(max(self.variance1, self.variance2))
        lo = min(self.mean1, self.mean2) - spread
        hi = max(self.mean1, self.mean2) + spread
        return _invert(self.cdf, tau, lo, hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        first = rng.random(n) < self.weight
        means = np.where(first, self.mean1, self.mean2)
        sds = np.sqrt(np.where(first, self.variance1, self.variance2))
        return means + sds * rng.standard_normal(n)


def _self_designed_exponent(x: np.ndarray, beta1: float, beta2: float) -> np.ndarray:
    xi1, xi2 = SELF_DESIGNED_CENTERS
    return beta1 * stats.norm.pdf(x - xi1) + beta2 * stats.norm.pdf(x - xi2)


def _integrate(func: Callable[[float], float], lo: float, hi: float) -> float:
    result = quad(
        func, lo, hi, epsabs=_QUAD_TOLERANCE, epsrel=_QUAD_TOLERANCE, limit=200, full_output=1
    )
    if len(result) > 3:
        raise NumericError(f"Quadrature did not converge on [{lo}, {hi}]: {result[3]}")
    return float(result[0])


def self_designed_alpha(beta1: float, beta2: float) -> float:
    """Normalizing constant alpha = -log integral phi(x) exp(beta' phi-terms) dx over [-10, 10]."""
    mass = _integrate(
        lambda t: float(stats.norm.pdf(t) * math.exp(_self_designed_exponent(t, beta1, beta2))),
        -10.0,
        10.0,
    )
    return -math.log(mass)


@dataclass(frozen=True)
class SelfDesignedPopulation(Population):
    """Density phi(x) exp{alpha + beta1 phi(x - xi1) + beta2 phi(x - xi2)}."""

    beta1: float
    beta2: float
    alpha: float

    @classmethod
    def build(cls, beta1: float, beta2: float) -> "SelfDesignedPopulation":
        return cls(beta1, beta2, self_designed_alpha(beta1, beta2))

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return stats.norm.pdf(x) * np.exp(
            self.alpha + _self_designed_exponent(x, self.beta1, self.beta2)
        )

    def cdf(self, x: float) -> float:
        if x <= -10.0:
            return 0.0
        return min(1.0, _integrate(lambda t: float(self.pdf(t)), -10.0, min(x, 10.0)))

    def ppf(self, tau: float) -> float:
        return _invert(self.cdf, tau, -10.0, 10.0)

    @property
    def envelope_exponent(self) -> float:
        return self.alpha + (max(self.beta1, 0.0) + max(self.beta2, 0.0)) * _PHI_MAX

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Rejection sampling with a standard normal proposal."""
        rate = math.exp(-self.envelope_exponent)
        if rate < 0.01:
            raise EnvelopeError(
                f"Rejection envelope accepts {rate:.2%} of proposals",
                details={"alpha": self.alpha, "rate": rate},
            )
        shift = self.envelope_exponent - self.alpha
        draws: List[np.ndarray] = []
        kept = proposed = 0
        while kept < n:
            batch = max(256, int(1.2 * (n - kept) / rate))
            x = rng.standard_normal(batch)
            u = rng.random(batch)
            accept = x[u < np.exp(_self_designed_exponent(x, self.beta1, self.beta2) - shift)]
            draws.append(accept)
            kept += accept.size
            proposed += batch
            if kept < 0.01 * proposed:
                raise EnvelopeError(
                    f"Rejection sampler accepted {kept} of {proposed} proposals",
                    details={"accepted": kept, "proposed": proposed},
                )
        return np.concatenate(draws)[:n]


def truth(spec: ScenarioSpec) -> Tuple[Population, ...]:
    """True population distributions of a scenario.

    Raises:
        NumericError: If a quadrature fails to converge
    """
    builders: Dict[ScenarioId, Callable[..., Population]] = {
        ScenarioId.NORMAL_EQVAR: _normal,
        ScenarioId.NORMAL_UNEQVAR: _normal,
        ScenarioId.GAMMA: _gamma,
        ScenarioId.SELF_DESIGNED: SelfDesignedPopulation.build,
        ScenarioId.WEIBULL: _weibull,
        ScenarioId.NORMAL_MIXTURE: MixturePopulation,
    }
    build = builders[spec.scenario]
    return tuple(build(*params) for params in spec.parameters)


def rep_generator(seed: int, rep: int) -> np.random.Generator:
    """Counter-based stream for one repetition, keyed on (seed, rep)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))


def generate(
    spec: ScenarioSpec, rep: int, populations: Optional[Sequence[Population]] = None
) -> MultiSample:
    """Draw the samples of one repetition.

    Args:
        spec: Scenario design
        rep: Repetition index
        populations: Precomputed ``truth(spec)``, to avoid repeating quadratures

    Returns:
        MultiSample with ``spec.sample_size`` draws per population
    """
    populations = populations if populations is not None else truth(spec)
    rng = rep_generator(spec.seed, rep)
    return MultiSample.from_arrays(
        [p.sample(rng, spec.sample_size) for p in populations],
        labels=[f"G{k}" for k in range(len(populations))],
    )


def imse_accumulate(
    estimated: Callable[[np.ndarray], np.ndarray],
    true: Callable[[np.ndarray], np.ndarray],
    lower: float,
    upper: float,
    points: int = IMSE_POINTS,
) -> float:
    """Integrated squared error by the trapezoid rule on a uniform grid."""
    grid = np.linspace(lower, upper, points)
    return float(trapezoid((estimated(grid) - true(grid)) ** 2, grid))


@dataclass(frozen=True)
class EstimatorSpec:
    """One benchmarked estimator, e.g. ``truth``, ``fpc2``, ``ku3`` or ``np``."""

    kind: str
    size: Optional[int] = None

    @property
    def label(self) -> str:
        return f"{self.kind}{self.size}" if self.size is not None else self.kind


_SIMPLE_ESTIMATORS = ("truth", "adaptive", "rich", "np")
_SIZED_ESTIMATORS = ("fpc", "ku")


def parse_estimators(text: Union[str, Sequence[str]]) -> Tuple[EstimatorSpec, ...]:
    """Parse a comma-separated estimator list such as ``truth,adaptive,ku2,np``."""
    names = text.split(",") if isinstance(text, str) else list(text)
    parsed = []
    for name in (n.strip().lower() for n in names if n.strip()):
        if name in _SIMPLE_ESTIMATORS:
            parsed.append(EstimatorSpec(name))
            continue
        for prefix in _SIZED_ESTIMATORS:
            suffix = name[len(prefix):]
            if name.startswith(prefix) and suffix.isdigit():
                parsed.append(EstimatorSpec(prefix, int(suffix)))
                break
        else:
            raise ValidationError(
                f"Unknown estimator {name!r}; use truth, adaptive, rich, np, fpc<d> or ku<L>"
            )
    if not parsed:
        raise ValidationError("No estimators requested")
    return tuple(parsed)


@dataclass(frozen=True)
class _RepOutcome:
    ise: Dict[str, np.ndarray]
    squared_errors: Dict[str, np.ndarray]
    failures: Dict[str, str]


@dataclass(frozen=True)
class BenchReport:
    """Per-repetition errors and their scaled averages.

    Attributes:
        scenario: Scenario identifier
        estimators: Estimator labels, in request order
        sample_sizes: n_r per population
        levels: Quantile levels
        reps: Repetitions attempted
        ise: Label mapped to a (reps ok) x (m+1) matrix of integrated squared errors
        squared_errors: Label mapped to (reps ok) x (m+1) x levels squared errors
        rep_ids: Label mapped to the repetition indices that succeeded
        failures: Label mapped to {rep: message} for excluded repetitions
    """

    scenario: ScenarioId
    estimators: Tuple[str, ...]
    sample_sizes: np.ndarray
    levels: Tuple[float, ...]
    reps: int
    ise: Dict[str, np.ndarray]
    squared_errors: Dict[str, np.ndarray]
    rep_ids: Dict[str, np.ndarray]
    failures: Dict[str, Dict[int, str]]

    def scaled_imse(self, label: str) -> np.ndarray:
        """n_r x IMSE per population."""
        return self.sample_sizes * self.ise[label].mean(axis=0)

    def scaled_quantile_mse(self, label: str) -> np.ndarray:
        """Per level, the average over populations of n_r x MSE."""
        mse = self.squared_errors[label].mean(axis=0)
        return (self.sample_sizes[:, None] * mse).mean(axis=0)

    def to_tsv(self) -> str:
        """Table with rows per estimator: IMSE per population and average,
        then quantile MSE per level and average, at 6 significant digits."""
        populations = [f"G{k}" for k in range(self.sample_sizes.size)]
        quantiles = [f"q{round(100 * tau)}" for tau in self.levels]
        header = ["method", *populations, "imse_avg", *quantiles, "mse_avg"]
        lines = ["\t".join(header)]
        for label in self.estimators:
            imse = self.scaled_imse(label)
            mse = self.scaled_quantile_mse(label)
            values = [*imse, imse.mean(), *mse, mse.mean()]
            lines.append("\t".join([label, *(f"{v:.6g}" for v in values)]))
        return "\n".join(lines) + "\n"

    def to_raw_csv(self) -> str:
        """Every per-repetition error, one row each, for external plotting."""
        buffer = io.StringIO()
        buffer.write("method,rep,population,metric,level,value\n")
        for label in self.estimators:
            for row, rep in enumerate(self.rep_ids[label]):
                for r in range(self.sample_sizes.size):
                    buffer.write(f"{label},{rep},{r},ise,,{float(self.ise[label][row, r])!r}\n")
                    for j, tau in enumerate(self.levels):
                        value = self.squared_errors[label][row, r, j]
                        buffer.write(f"{label},{rep},{r},sqerr,{tau},{float(value)!r}\n")
        return buffer.getvalue()

    def to_dict(self) -> Dict[str, Any]:
        """Scaled summaries per estimator plus the excluded repetitions."""
        return {
            "scenario": self.scenario.value,
            "estimators": list(self.estimators),
            "sample_sizes": self.sample_sizes.tolist(),
            "levels": list(self.levels),
            "reps": self.reps,
            "imse": {label: self.scaled_imse(label).tolist() for label in self.estimators},
            "quantile_mse": {
                label: self.scaled_quantile_mse(label).tolist() for label in self.estimators
            },
            "failures": {
                label: {str(rep): message for rep, message in sorted(failed.items())}
                for label, failed in self.failures.items()
            },
        }


def _drm_outcome(
    fit_density: Callable[[int, np.ndarray], np.ndarray],
    quantile: Callable[[int, float], float],
    populations: Sequence[Population],
    ranges: Sequence[Tuple[float, float]],
    true_quantiles: np.ndarray,
    levels: Sequence[float],
) -> Tuple[np.ndarray, np.ndarray]:
    ise = np.array(
        [
            imse_accumulate(lambda x, r=r: fit_density(r, x), p.pdf, lo, hi)
            for r, (p, (lo, hi)) in enumerate(zip(populations, ranges))
        ]
    )
    estimates = np.array(
        [[quantile(r, tau) for tau in levels] for r in range(len(populations))]
    )
    return ise, (estimates - true_quantiles) ** 2


def run_benchmark(
    spec: ScenarioSpec,
    estimators: Union[str, Sequence[EstimatorSpec]],
    levels: Sequence[float] = QUANTILE_LEVELS,
    k_grid: Optional[Sequence[float]] = None,
    family: Optional[ReferenceFamily] = None,
    threads: Optional[int] = None,
    max_failure_rate: float = 0.05,
) -> BenchReport:
    """Run the Monte Carlo benchmark.

    Repetitions run concurrently; each uses its own stream keyed on
    (seed, rep), and results are aggregated in repetition order, so the
    report does not depend on the thread count.

    Args:
        spec: Scenario design
        estimators: Estimators to compare (see ``parse_estimators``)
        levels: Quantile levels
        k_grid: Bandwidth scale grid for the adaptive basis
        family: Pilot family for the bandwidth search (scenario default if None)
        threads: Worker count for repetitions
        max_failure_rate: Largest tolerated fraction of failed repetitions per
            estimator

    Returns:
        BenchReport

    Raises:
        BenchmarkError: If there are no repetitions or an estimator fails too often

    Example:
        ```python
        spec = ScenarioSpec.from_id("s1", sample_size=500, reps=200, seed=42)
        report = run_benchmark(spec, "truth,adaptive,np")
        print(report.to_tsv())
        ```
    """
    if spec.reps == 0:
        raise BenchmarkError("run_benchmark: zero repetitions give an empty report")
    chosen = parse_estimators(estimators) if isinstance(estimators, str) else tuple(estimators)
    labels = tuple(e.label for e in chosen)
    if len(set(labels)) != len(labels):
        raise ValidationError(f"Duplicate estimators in {labels}")
    family = family or spec.reference_family

    populations = truth(spec)
    ranges = [(p.ppf(IMSE_TAIL), p.ppf(1.0 - IMSE_TAIL)) for p in populations]
    true_quantiles = np.array([[p.ppf(tau) for tau in levels] for p in populations])
    truth_basis = spec.truth_basis() if any(e.kind == "truth" for e in chosen) else None

    def run_rep(rep: int) -> _RepOutcome:
        ms = generate(spec, rep, populations)
        analysis = DensityRatioAnalysis(
            ms, bandwidth="adaptive", bw_family=family, k_grid=k_grid, threads=1
        )
        ise: Dict[str, np.ndarray] = {}
        errors: Dict[str, np.ndarray] = {}
        failures: Dict[str, str] = {}
        for estimator in chosen:
            try:
                if estimator.kind == "np":
                    kdes = np_densities(ms)
                    ise[estimator.label] = np.array(
                        [
                            imse_accumulate(kde, p.pdf, lo, hi)
                            for kde, p, (lo, hi) in zip(kdes, populations, ranges)
                        ]
                    )
                    errors[estimator.label] = (np_quantiles(ms, levels) - true_quantiles) ** 2
                    continue
                if estimator.kind == "ku":
                    model = ku_fit(ms, estimator.size or 0)
                    ise[estimator.label], errors[estimator.label] = _drm_outcome(
                        model.density,
                        lambda r, tau: ku_quantile(model, r, tau),
                        populations,
                        ranges,
                        true_quantiles,
                        levels,
                    )
                    continue
                if estimator.kind == "truth":
                    fit = fit_drm(ms, truth_basis)
                elif estimator.kind == "rich":
                    fit = fit_drm(ms, rich_basis())
                elif estimator.kind == "adaptive":
                    fit = analysis.fit
                else:
                    fit = analysis.fit_with(analysis.basis_with_d(estimator.size or 0))
                ise[estimator.label], errors[estimator.label] = _drm_outcome(
                    lambda r, x, fit=fit: drm_density(fit, r, x),
                    lambda r, tau, fit=fit: drm_quantile(fit, r, tau),
                    populations,
                    ranges,
                    true_quantiles,
                    levels,
                )
            except DRMError as e:
                failures[estimator.label] = str(e)
        return _RepOutcome(ise=ise, squared_errors=errors, failures=failures)

    logger.info(
        "Running %s: %d reps of n=%d for %s", spec.scenario.value, spec.reps, spec.sample_size, labels
    )
    outcomes = parallel_map(run_rep, list(range(spec.reps)), threads)

    ise: Dict[str, np.ndarray] = {}
    squared: Dict[str, np.ndarray] = {}
    rep_ids: Dict[str, np.ndarray] = {}
    failures: Dict[str, Dict[int, str]] = {}
    for label in labels:
        failures[label] = {
            rep: o.failures[label] for rep, o in enumerate(outcomes) if label in o.failures
        }
        ok = [rep for rep, o in enumerate(outcomes) if label in o.ise]
        if failures[label]:
            logger.warning(
                "%s failed in %d of %d repetitions", label, len(failures[label]), spec.reps
            )
        if not ok or len(failures[label]) > max_failure_rate * spec.reps:
            raise BenchmarkError(
                f"run_benchmark: {label} failed in {len(failures[label])} of "
                f"{spec.reps} repetitions",
                details={"failures": failures[label]},
            )
        rep_ids[label] = np.array(ok, dtype=int)
        ise[label] = np.vstack([outcomes[rep].ise[label] for rep in ok])
        squared[label] = np.stack([outcomes[rep].squared_errors[label] for rep in ok])

    return BenchReport(
        scenario=spec.scenario,
        estimators=labels,
        sample_sizes=np.full(spec.populations, spec.sample_size),
        levels=tuple(levels),
        reps=spec.reps,
        ise=ise,
        squared_errors=squared,
        rep_ids=rep_ids,
        failures=failures,
    )
