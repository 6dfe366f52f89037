"""Pydantic models for experiment configuration, result rows and reports."""

from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from simdm.predictors import (
    ConstantPredictor,
    DataPredictor,
    GaussianPriorPredictor,
    GMMPriorPredictor,
)
from simdm.schedule import NoiseSchedule

RecoveryMethod = Literal["sim_dms", "sim_dmis", "sim_dmfis"]
VerifyTarget = Literal["lemma1", "lemma2", "lipschitz", "theorem1", "roundtrip"]

ScalarOrVector = Union[float, list[float]]


def _length_issue(name: str, value: object, n: int) -> Optional[str]:
    if isinstance(value, list) and len(value) != n:
        return f"{name} has length {len(value)}, expected run.n = {n}"
    return None


class _Block(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")


# Link


class LinkSpec(_Block):
    """Link function with Gaussian noise placement (pre-link for sign, post-link otherwise)."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid", frozen=True)

    kind: Literal["linear", "sign", "cubic"] = "sign"
    sigma: float = Field(0.0, ge=0.0)
    noise_position: Optional[Literal["pre", "post"]] = None

    @property
    def position(self) -> Literal["pre", "post"]:
        if self.noise_position is not None:
            return self.noise_position
        return "pre" if self.kind == "sign" else "post"


# Predictor blocks


class ConstantPredictorBlock(_Block):
    kind: Literal["constant"]
    c: ScalarOrVector = 1.0

    def dimension_issues(self, n: int) -> list[str]:
        issue = _length_issue("predictor.c", self.c, n)
        return [issue] if issue else []

    def build(self, schedule: NoiseSchedule, n: int) -> DataPredictor:
        return ConstantPredictor(schedule, np.broadcast_to(np.asarray(self.c, float), (n,)))


class GaussianPredictorBlock(_Block):
    kind: Literal["gaussian"]
    mean: ScalarOrVector = 0.0
    variance: Union[PositiveFloat, list[PositiveFloat]] = 1.0

    def dimension_issues(self, n: int) -> list[str]:
        issues = [
            _length_issue("predictor.mean", self.mean, n),
            _length_issue("predictor.variance", self.variance, n),
        ]
        return [issue for issue in issues if issue]

    def build(self, schedule: NoiseSchedule, n: int) -> DataPredictor:
        return GaussianPriorPredictor(
            schedule,
            mean=np.broadcast_to(np.asarray(self.mean, float), (n,)),
            variance=np.broadcast_to(np.asarray(self.variance, float), (n,)),
        )


class GMMPredictorBlock(_Block):
    """
    Gaussian-mixture prior.

    Either list the component ``means`` explicitly, or give ``components`` to
    draw that many orthonormal unit-norm modes from ``mode_seed``.
    """

    kind: Literal["gmm"]
    components: Optional[PositiveInt] = None
    means: Optional[list[list[float]]] = None
    weights: Optional[list[float]] = None
    variance: PositiveFloat = 0.01
    mode_seed: int = 0

    @model_validator(mode="after")
    def _check_components(self) -> "GMMPredictorBlock":
        if self.means is None and self.components is None:
            raise ValueError("gmm needs either 'means' or 'components'")
        count = len(self.means) if self.means is not None else self.components
        if self.weights is not None and len(self.weights) != count:
            raise ValueError("gmm 'weights' must have one entry per component")
        return self

    def dimension_issues(self, n: int) -> list[str]:
        if self.means is not None:
            return [
                f"predictor.means[{k}] has length {len(mean)}, expected run.n = {n}"
                for k, mean in enumerate(self.means)
                if len(mean) != n
            ]
        if self.components > n:
            return [f"predictor.components = {self.components} exceeds run.n = {n}"]
        return []

    def build(self, schedule: NoiseSchedule, n: int) -> DataPredictor:
        if self.means is None:
            predictor = GMMPriorPredictor.well_separated(
                schedule, n, self.components, self.variance, seed=self.mode_seed
            )
            if self.weights is None:
                return predictor
            return GMMPriorPredictor(schedule, self.weights, predictor.means, self.variance)
        count = len(self.means)
        weights = self.weights if self.weights is not None else [1.0 / count] * count
        return GMMPriorPredictor(schedule, weights, self.means, self.variance)


PredictorBlock = Annotated[
    Union[ConstantPredictorBlock, GaussianPredictorBlock, GMMPredictorBlock],
    Field(discriminator="kind"),
]


# Remaining experiment blocks


class MethodGridBlock(_Block):
    """Step counts for one estimator; unset counts fall back to the grid block."""

    n_samp: Optional[PositiveInt] = Field(None, alias="N_samp")
    n_inv: Optional[PositiveInt] = Field(None, alias="N_inv")


class GridBlock(_Block):
    """
    Time grids shared by every estimator.

    ``[grid.sim_dms]`` style sub-blocks give one estimator its own step
    counts, e.g. N_samp = 50 for sim_dms next to N_samp = 100, N_inv = 50
    for sim_dmis.
    """

    n_samp: PositiveInt = Field(50, alias="N_samp")
    n_inv: Optional[PositiveInt] = Field(None, alias="N_inv")
    spacing: Literal["uniform-t", "uniform-lambda", "quadratic-t"] = "uniform-t"
    sampler: Literal["ddim", "dm2m"] = "ddim"
    inverter: Literal["naive_ddim", "first_order", "second_order"] = "second_order"
    sim_dms: Optional[MethodGridBlock] = None
    sim_dmis: Optional[MethodGridBlock] = None
    sim_dmfis: Optional[MethodGridBlock] = None

    def steps_for(self, method: Optional[str] = None) -> tuple[int, Optional[int]]:
        """Return (N_samp, N_inv) for a method; N_inv None means 'same as N_samp'."""
        overrides = {
            "sim_dms": self.sim_dms,
            "sim_dmis": self.sim_dmis,
            "sim_dmfis": self.sim_dmfis,
        }
        override = overrides.get(method) if method else None
        if override is None:
            return self.n_samp, self.n_inv
        n_samp = override.n_samp if override.n_samp is not None else self.n_samp
        n_inv = override.n_inv if override.n_inv is not None else self.n_inv
        return n_samp, n_inv


class RecoveryConfig(_Block):
    """
    Estimator selection and tuning constants.

    ``C_s_prime`` has no default: supply it or sweep it.
    """

    method: list[RecoveryMethod] = Field(default_factory=lambda: ["sim_dmis"])
    c_s: Optional[PositiveFloat] = Field(None, alias="C_s")
    c_s_prime: Optional[PositiveFloat] = Field(None, alias="C_s_prime")

    @model_validator(mode="before")
    @classmethod
    def _wrap_single_method(cls, data):
        if isinstance(data, dict) and isinstance(data.get("method"), str):
            data = {**data, "method": [data["method"]]}
        return data


class RunBlock(_Block):
    n: PositiveInt
    m: Union[PositiveInt, list[PositiveInt]]
    trials: PositiveInt = 1
    base_seed: int = Field(0, ge=0)
    output: str = "results.csv"
    x_star_file: Optional[str] = None
    dump_vectors: bool = False
    peak: Optional[PositiveFloat] = None

    @property
    def m_list(self) -> list[int]:
        return list(self.m) if isinstance(self.m, list) else [self.m]


class SweepBlock(_Block):
    c_s: list[PositiveFloat] = Field(default_factory=list, alias="C_s")
    c_s_prime: list[PositiveFloat] = Field(default_factory=list, alias="C_s_prime")
    n_samp: list[PositiveInt] = Field(default_factory=list, alias="N_samp")
    n_inv: list[PositiveInt] = Field(default_factory=list, alias="N_inv")


class Lemma1Settings(_Block):
    n: PositiveInt = 1000
    C: float = Field(3.0, ge=0.0)
    trials: int = Field(100, ge=100)


class Lemma2Settings(_Block):
    n: PositiveInt = 64
    m_list: list[PositiveInt] = Field(default_factory=lambda: [2**8, 2**10, 2**12, 2**14])
    C_prime: PositiveFloat = 10.0
    trials: PositiveInt = 50
    mu_samples: int = Field(1_000_000, ge=1_000_000)
    slope_range: tuple[float, float] = (-0.65, -0.35)
    min_success_rate: float = Field(0.99, ge=0.0, le=1.0)
    exact_moments: bool = False


class LipschitzSettings(_Block):
    pairs: PositiveInt = 200


class Theorem1Settings(_Block):
    grid_sizes: list[PositiveInt] = Field(default_factory=lambda: [16, 32, 64, 128])
    t_list: list[PositiveFloat] = Field(default_factory=lambda: [0.3, 0.5, 0.8])
    k1: Literal[1, 2] = 2
    k2: Literal[1, 2] = 2
    batch: PositiveInt = 8
    order_slack: float = 0.3


class RoundtripSettings(_Block):
    grid_sizes: list[PositiveInt] = Field(default_factory=lambda: [25, 50, 100])
    samples: PositiveInt = 8
    exact_tolerance: PositiveFloat = 1e-10


class VerifyBlock(_Block):
    lemma1: Lemma1Settings = Field(default_factory=Lemma1Settings)
    lemma2: Lemma2Settings = Field(default_factory=Lemma2Settings)
    lipschitz: LipschitzSettings = Field(default_factory=LipschitzSettings)
    theorem1: Theorem1Settings = Field(default_factory=Theorem1Settings)
    roundtrip: RoundtripSettings = Field(default_factory=RoundtripSettings)


class ExperimentConfig(_Block):
    """Top-level experiment configuration; validated before any computation."""

    predictor: PredictorBlock
    schedule: NoiseSchedule = Field(default_factory=NoiseSchedule)
    grid: GridBlock = Field(default_factory=GridBlock)
    link: LinkSpec = Field(default_factory=LinkSpec)
    recovery: Optional[RecoveryConfig] = None
    run: RunBlock
    sweep: Optional[SweepBlock] = None
    verify: VerifyBlock = Field(default_factory=VerifyBlock)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        issues = self.predictor.dimension_issues(self.run.n)
        issues.extend(self._step_count_issues())
        if self.recovery is not None:
            swept_c_s = self.sweep is not None and bool(self.sweep.c_s)
            swept_prime = self.sweep is not None and bool(self.sweep.c_s_prime)
            needs_constants = any(method != "sim_dmfis" for method in self.recovery.method)
            if needs_constants and self.recovery.c_s is None and not swept_c_s:
                issues.append("recovery.C_s is required for sim_dms and sim_dmis")
            if needs_constants and self.recovery.c_s_prime is None and not swept_prime:
                issues.append("recovery.C_s_prime is required (no default); supply or sweep it")
        if issues:
            raise ValueError("; ".join(issues))
        return self

    def _step_count_issues(self) -> list[str]:
        issues = []
        for prefix, method in (
            ("grid", None),
            ("grid.sim_dms", "sim_dms"),
            ("grid.sim_dmis", "sim_dmis"),
            ("grid.sim_dmfis", "sim_dmfis"),
        ):
            if method is not None and getattr(self.grid, method) is None:
                continue
            n_samp, n_inv = self.grid.steps_for(method)
            if self.grid.sampler == "dm2m" and n_samp < 2:
                issues.append(f"{prefix}.N_samp must be >= 2 for dm2m sampling")
            if self.grid.inverter == "second_order" and (n_inv or n_samp) < 2:
                issues.append(f"{prefix}.N_inv must be >= 2 for second-order inversion")
        return issues

    def build_predictor(self) -> DataPredictor:
        return self.predictor.build(self.schedule, self.run.n)


# Results and reports


class ResultRow(BaseModel):
    """One CSV row per (trial, method, m)."""

    model_config = ConfigDict(populate_by_name=True)

    seed: int
    method: RecoveryMethod
    link: str
    n: int
    m: int
    sigma: float
    c_s: Optional[float] = Field(None, alias="C_s")
    c_s_prime: Optional[float] = Field(None, alias="C_s_prime")
    n_inv: int = Field(alias="N_inv")
    n_samp: int = Field(alias="N_samp")
    t_star: float
    nfe: int
    cosine: float
    rel_l2: float
    psnr: float
    wall_ms: float


class RecoveryMetrics(BaseModel):
    cosine: float
    rel_l2: float
    psnr: float
    degenerate: bool = False


class LipschitzReport(BaseModel):
    """Lipschitz certificate of a generator: per-step factors (ddim) or L-tilde_i (dm2m)."""

    method: Literal["ddim", "dm2m"]
    per_step: list[float]
    L: float


class BoundCheckReport(BaseModel):
    """Outcome of a Monte Carlo check of one probabilistic inequality."""

    inequality: str
    trials: int
    successes: int
    bound: float
    constant: float
    quantiles: dict[str, float]
    m: Optional[int] = None

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @model_validator(mode="after")
    def _check_counts(self) -> "BoundCheckReport":
        if self.successes > self.trials:
            raise ValueError("successes cannot exceed trials")
        return self


class Lemma2Report(BaseModel):
    link: str
    n: int
    mu: float
    per_m: list[BoundCheckReport]
    median_errors: list[float]
    slope: float
    e1_rate: float


class Theorem1Report(BaseModel):
    t: float
    k1: int
    k2: int
    points: list[tuple[float, float]]
    order: Optional[float] = None
