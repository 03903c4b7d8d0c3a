"""
Monte-Carlo success-rate experiments for the l1 decoders.

Every trial draws a fresh system from its matrix source and a fresh initial
state, spreads a total attack budget S over the window, decodes and counts
the trial as a success when the initial state is recovered to within
``success_tol`` by a unique minimizer.

Matrix sources:
    ideal_gaussian_coding  i.i.d. N(0, 1) coding matrix (no dynamics), decoded
                           by direct l1 regression
    random_lti             A ~ N(0, 1/n), one nonzero per row of C
    designed_feedback      dense C, feedback placing well-spread poles in
                           [0.6, 0.98], then support perturbation if needed;
                           draws short of s_i = p are redrawn
    poor_feedback          dense C, feedback placing poles drawn uniformly
                           from (0.05, 0.95)
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from secest.core.conditions import (
    fixed_support_correctable,
    max_correctable,
    q_cap,
    support_profile,
)
from secest.core.decoder import decode, is_exact_recovery, row_support_decode
from secest.core.design import perturb_for_security, place_poles
from secest.core.errors import (
    IllConditionedAssignment,
    InvalidExperiment,
    NoImprovement,
    SecestError,
    UncontrollablePair,
    UnobservableWindow,
)
from secest.core.model import (
    AttackPolicy,
    AttackSequence,
    LtiSystem,
    ObservabilityCode,
    build_observability,
    generate_attacks,
)
from secest.utils.schema_validator import SchemaValidator

logger = logging.getLogger(__name__)

MATRIX_SOURCES = ("ideal_gaussian_coding", "designed_feedback", "poor_feedback", "random_lti")
DEFAULT_ORDERING = ("ideal_gaussian_coding", "designed_feedback", "poor_feedback")
DESIGN_INPUTS = 2
DESIGNED_POLE_RANGE = (0.6, 0.98)
POOR_POLE_RANGE = (0.05, 0.95)
MAX_REDRAWS = 20


@dataclass
class ExperimentConfig:
    n: int = 8
    p: int = 10
    T: int = 8
    matrix_source: str = "designed_feedback"
    s_range: List[int] = field(default_factory=list)
    trials_per_point: int = 100
    seed: int = 0
    decoder_method: str = "qr"
    success_tol: float = 1e-4
    amplitude: float = 10.0
    threads: int = 1

    def __post_init__(self):
        if not self.s_range:
            self.s_range = list(range(0, self.p * self.T + 1, 4))
        self.s_range = [int(s) for s in self.s_range]
        self.validate()

    def validate(self) -> None:
        result = SchemaValidator().validate_experiment(self.schema_document())
        if not result["valid"]:
            raise InvalidExperiment(f"Invalid experiment configuration: {result['errors']}")
        if max(self.s_range) > self.p * self.T:
            raise InvalidExperiment(f"Budgets {self.s_range} exceed p*T = {self.p * self.T}")
        if self.threads < 1:
            raise InvalidExperiment("threads must be at least 1")

    def schema_document(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "p": self.p,
            "window": self.T,
            "matrix_source": self.matrix_source,
            "s_range": self.s_range,
            "trials_per_point": self.trials_per_point,
            "seed": self.seed,
        }

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_config(cls, config: Dict[str, Any], matrix_source: str, **overrides) -> "ExperimentConfig":
        mc = config.get("montecarlo", {})
        n, p, T = int(mc.get("n", 8)), int(mc.get("p", 10)), int(mc.get("window", 8))
        s_range = mc.get("s_range") or list(range(0, p * T + 1, int(mc.get("s_step", 4))))
        values = dict(
            n=n, p=p, T=T,
            matrix_source=matrix_source,
            s_range=list(s_range),
            trials_per_point=int(mc.get("trials_per_point", 100)),
            seed=int(config.get("execution", {}).get("seed", 0)),
            decoder_method=config.get("decoder", {}).get("method", "qr"),
            success_tol=float(config.get("decoder", {}).get("success_tol", 1e-4)),
            amplitude=float(config.get("attacks", {}).get("amplitude", 10.0)),
            threads=int(config.get("execution", {}).get("threads", 1)),
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class TrialOutcome:
    success: bool
    error: float
    nonunique: bool = False


@dataclass
class SuccessRateTable:
    """One row per budget S: success_rate, mean_error (over failed trials), trials, failures_nonunique."""

    matrix_source: str
    n: int
    p: int
    T: int
    frame: pd.DataFrame

    @property
    def budgets(self) -> List[int]:
        return [int(s) for s in self.frame["S"]]

    @property
    def success_rates(self) -> np.ndarray:
        return self.frame["success_rate"].to_numpy()

    def rate_at(self, S: int) -> float:
        row = self.frame.loc[self.frame["S"] == S]
        if row.empty:
            raise KeyError(f"Budget {S} not in table")
        return float(row["success_rate"].iloc[0])

    def budget_line(self) -> int:
        return budget_line(self.p, self.T)

    def phase_transition(self, threshold: float = 0.5) -> Optional[int]:
        """Largest S whose success rate is still at least ``threshold``."""
        passing = self.frame.loc[self.frame["success_rate"] >= threshold, "S"]
        return int(passing.max()) if not passing.empty else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "matrix_source": self.matrix_source,
            "n": self.n,
            "p": self.p,
            "T": self.T,
            "budget_line": self.budget_line(),
            "phase_transition": self.phase_transition(),
            "rows": self.frame.to_dict(orient="records"),
        }


def budget_line(p: int, T: int) -> int:
    """ceil(p/2 - 1) * T: total attack budget guaranteed correctable by the per-step cap."""
    return q_cap(p) * T


def _random_output_matrix(p: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """One nonzero entry per row; every state is seen when p >= n."""
    columns = list(rng.permutation(n)[:min(p, n)]) + list(rng.integers(0, n, size=max(p - n, 0)))
    C = np.zeros((p, n))
    values = rng.standard_normal(p)
    values[values == 0.0] = 1.0
    C[np.arange(p), columns] = values
    return C


def _distinct_poles(low: float, high: float, n: int, rng: np.random.Generator,
                    spread: bool) -> np.ndarray:
    if spread:
        base = np.linspace(low, high, n)
        jitter = (high - low) / (4 * max(n - 1, 1))
        return np.sort(np.clip(base + rng.uniform(-jitter, jitter, size=n), low, high))
    while True:
        poles = np.sort(rng.uniform(low, high, size=n))
        if n < 2 or np.min(np.diff(poles)) > 1e-3:
            return poles


def _feedback_system(n: int, p: int, rng: np.random.Generator, designed: bool) -> LtiSystem:
    A_o = rng.standard_normal((n, n)) / math.sqrt(n)
    B = rng.standard_normal((n, DESIGN_INPUTS))
    C = rng.standard_normal((p, n))
    low, high = DESIGNED_POLE_RANGE if designed else POOR_POLE_RANGE
    poles = _distinct_poles(low, high, n, rng, spread=designed)
    G = place_poles(A_o, B, poles)
    if designed and support_profile(A_o + B @ G, C).min_s < p:
        # strict: a draw that cannot reach s_i = p raises NoImprovement and is redrawn
        G = perturb_for_security(A_o, B, C, poles, max_shift=0.02, iterations=50, strict=True).gain
    return LtiSystem(A_o, B, C, G)


def draw_system(source: str, n: int, p: int, T: int,
                rng: np.random.Generator) -> Tuple[Optional[LtiSystem], ObservabilityCode]:
    """
    Draw a system and its coding matrix from ``source``. Unobservable or
    ill-conditioned draws are redrawn, and so are designed systems short of
    s_i = p. The ideal source has no system and returns None in its place.
    """
    if source not in MATRIX_SOURCES:
        raise InvalidExperiment(f"Unknown matrix source {source!r}; expected one of {MATRIX_SOURCES}")
    for _ in range(MAX_REDRAWS):
        try:
            if source == "ideal_gaussian_coding":
                return None, ObservabilityCode.from_matrix(rng.standard_normal((p * T, n)), T)
            if source == "random_lti":
                sys = LtiSystem(rng.standard_normal((n, n)) / math.sqrt(n), np.zeros((n, 1)),
                                _random_output_matrix(p, n, rng))
            else:
                sys = _feedback_system(n, p, rng, designed=source == "designed_feedback")
            return sys, build_observability(sys, T)
        except (UnobservableWindow, IllConditionedAssignment, UncontrollablePair, NoImprovement) as e:
            logger.debug(f"Redrawing {source} system: {e}")
    raise InvalidExperiment(f"Could not draw a usable {source} system in {MAX_REDRAWS} attempts")


def sample_code(source: str, n: int, p: int, T: int, rng: np.random.Generator) -> ObservabilityCode:
    """Coding matrix of a ``draw_system`` draw."""
    return draw_system(source, n, p, T, rng)[1]


def run_trial(cfg: ExperimentConfig, S: int, rng: np.random.Generator) -> TrialOutcome:
    """One draw of system, initial state and attack; decode and classify."""
    code = sample_code(cfg.matrix_source, cfg.n, cfg.p, cfg.T, rng)
    x0 = rng.standard_normal(cfg.n)
    attacks = generate_attacks(AttackPolicy.CHANGING_SUPPORT_BUDGET, cfg.p, cfg.T,
                               {"budget": S, "amplitude": cfg.amplitude}, rng=rng)
    y = code.phi @ x0 + attacks.stacked()
    method = "direct" if cfg.matrix_source == "ideal_gaussian_coding" else cfg.decoder_method
    try:
        result = decode(code, y, method)
    except SecestError as e:
        logger.debug(f"Trial decode failed at S={S}: {e}")
        return TrialOutcome(success=False, error=1.0)
    error = float(np.linalg.norm(result.x0_hat - x0) / max(np.linalg.norm(x0), 1e-12))
    exact = is_exact_recovery(result.x0_hat, x0, cfg.success_tol)
    return TrialOutcome(success=exact and result.unique, error=error,
                        nonunique=exact and not result.unique)


def _aggregate(S: int, outcomes: Sequence[TrialOutcome]) -> Dict[str, Any]:
    successes = sum(o.success for o in outcomes)
    failed = [o.error for o in outcomes if not o.success]
    return {
        "S": S,
        "success_rate": successes / len(outcomes),
        "mean_error": float(np.mean(failed)) if failed else 0.0,
        "trials": len(outcomes),
        "successes": successes,
        "failures_nonunique": sum(o.nonunique for o in outcomes),
    }


def run_montecarlo(cfg: ExperimentConfig) -> SuccessRateTable:
    """
    Success rate per budget S. Trial (i, k) uses the generator seeded with
    [seed, i, k], so tables are reproducible regardless of thread count.
    """
    jobs = [(i, S, k) for i, S in enumerate(cfg.s_range) for k in range(cfg.trials_per_point)]

    def _job(job: Tuple[int, int, int]) -> TrialOutcome:
        i, S, k = job
        return run_trial(cfg, S, np.random.default_rng([cfg.seed, i, k]))

    logger.info(f"Monte-Carlo {cfg.matrix_source}: n={cfg.n}, p={cfg.p}, T={cfg.T}, "
                f"{len(cfg.s_range)} budgets x {cfg.trials_per_point} trials")
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as executor:
            outcomes = list(executor.map(_job, jobs))
    else:
        outcomes = [_job(job) for job in jobs]

    rows = []
    for i, S in enumerate(cfg.s_range):
        start = i * cfg.trials_per_point
        rows.append(_aggregate(S, outcomes[start:start + cfg.trials_per_point]))
    table = SuccessRateTable(cfg.matrix_source, cfg.n, cfg.p, cfg.T, pd.DataFrame(rows))
    logger.info(f"{cfg.matrix_source}: phase transition at S={table.phase_transition()}, "
                f"budget line {table.budget_line()}")
    return table


def run_p_sweep(cfg: ExperimentConfig, p_values: Sequence[int] = (8, 10, 12)) -> Dict[int, SuccessRateTable]:
    """Same source for several sensor counts; budgets above p*T are dropped."""
    tables = {}
    for p in p_values:
        budgets = [s for s in cfg.s_range if s <= int(p) * cfg.T]
        sweep_cfg = ExperimentConfig(**{**cfg.to_dict(), "p": int(p), "s_range": budgets})
        tables[int(p)] = run_montecarlo(sweep_cfg)
    return tables


def check_table_invariants(tables: Dict[str, SuccessRateTable],
                           ordering: Sequence[str] = DEFAULT_ORDERING,
                           tolerance: float = 0.07,
                           min_fraction: float = 0.9) -> List[str]:
    """
    Sanity checks on success-rate tables; returns human-readable violations.

    - success_rate = successes / trials and lies in [0, 1]
    - mean_error >= 0, and 0 when every trial succeeded
    - success rate does not trend upward in S (Spearman correlation <= 0)
    - sources listed in ``ordering`` are ordered within ``tolerance`` on at
      least ``min_fraction`` of the shared budgets
    """
    violations: List[str] = []
    for source, table in tables.items():
        frame = table.frame
        if ((frame["success_rate"] < 0) | (frame["success_rate"] > 1)).any():
            violations.append(f"{source}: success rate outside [0, 1]")
        if not np.allclose(frame["success_rate"], frame["successes"] / frame["trials"]):
            violations.append(f"{source}: success rate does not match successes / trials")
        if (frame["mean_error"] < 0).any():
            violations.append(f"{source}: negative mean error")
        perfect = frame["success_rate"] == 1.0
        if (frame.loc[perfect, "mean_error"].abs() > 1e-12).any():
            violations.append(f"{source}: nonzero mean error at success rate 1")
        if len(frame) > 2 and frame["success_rate"].nunique() > 1:
            rho = spearmanr(frame["S"], frame["success_rate"]).correlation
            if np.isfinite(rho) and rho > 0:
                violations.append(f"{source}: success rate increases with S (Spearman {rho:.3f})")

    present = [s for s in ordering if s in tables]
    for better, worse in zip(present, present[1:]):
        shared = sorted(set(tables[better].budgets) & set(tables[worse].budgets))
        if not shared:
            continue
        held = sum(tables[better].rate_at(S) + tolerance >= tables[worse].rate_at(S) for S in shared)
        if held / len(shared) < min_fraction:
            violations.append(f"ordering {better} >= {worse} holds on only {held}/{len(shared)} budgets")
    return violations


def _spread_system(n: int, p: int, rng: np.random.Generator) -> LtiSystem:
    A = np.diag(np.linspace(0.5, 0.9, n))
    return LtiSystem(A, np.zeros((n, 1)), rng.standard_normal((p, n)))


def run_fixed_vs_roving_demo(n: int = 2, p: int = 4, T: int = 4, seed: int = 0,
                             amplitude: float = 10.0) -> Dict[str, Any]:
    """
    Contrast the fixed-support (row-support) decoder with the l1 decoder.

    A cycling attack hits sensor t mod p at step t, so over T = p steps the
    error matrix has full row support and no sensor is clean; the
    row-support decoder cannot explain the data while the l1 decoder still
    recovers x0. A fixed-support attack on sensor 0 is handled by both.
    """
    if p > 4 or T > 4:
        raise InvalidExperiment("The row-support decoder is exponential; use p <= 4 and T <= 4")
    rng = np.random.default_rng(seed)
    sys = _spread_system(n, p, rng)
    code = build_observability(sys, T)
    x0 = rng.standard_normal(n)

    cycling = np.zeros((T, p))
    for t in range(T):
        cycling[t, t % p] = amplitude * (1.0 + rng.random())
    fixed = np.zeros((T, p))
    fixed[:, 0] = amplitude * (1.0 + rng.random(T))

    report: Dict[str, Any] = {
        "n": n, "p": p, "T": T,
        "x0": x0,
        "q_max": max_correctable(support_profile(sys.a_closed, sys.c), p),
        "single_snapshot_correctable": fixed_support_correctable(sys.c),
    }
    for name, vectors in (("cycling", cycling), ("fixed", fixed)):
        attack = AttackSequence(vectors)
        y = code.phi @ x0 + attack.stacked()
        row_x, excluded = row_support_decode(code, y)
        l1 = decode(code, y, "qr")
        report[name] = {
            "row_support": int(np.count_nonzero(np.any(vectors != 0, axis=0))),
            "row_support_decoder": {
                "x0_hat": row_x,
                "excluded_sensors": sorted(excluded),
                "success": row_x is not None and is_exact_recovery(row_x, x0),
            },
            "l1_decoder": {
                "x0_hat": l1.x0_hat,
                "success": is_exact_recovery(l1.x0_hat, x0),
            },
        }
    logger.info(f"Cycling attack: row-support decoder success={report['cycling']['row_support_decoder']['success']}, "
                f"l1 decoder success={report['cycling']['l1_decoder']['success']}")
    return report


def run_decoder_equivalence(trials: int = 100, seed: int = 0, max_n: int = 6, max_p: int = 8,
                            tol: float = 1e-6) -> Dict[str, Any]:
    """
    Compare the two-phase decoder with direct l1 regression on random
    observable systems (T = n). Trials where either LP reports an
    alternative optimum are skipped.
    """
    rng = np.random.default_rng(seed)
    compared, skipped, worst = 0, 0, 0.0
    violations: List[int] = []
    for trial in range(trials):
        n = int(rng.integers(2, max_n + 1))
        p = int(rng.integers(n, max_p + 1)) if n < max_p else max_p
        code = sample_code("random_lti", n, p, n, rng)
        x0 = rng.standard_normal(n)
        budget = int(rng.integers(0, budget_line(p, n) + 1))
        attacks = generate_attacks(AttackPolicy.CHANGING_SUPPORT_BUDGET, p, n, {"budget": budget}, rng=rng)
        y = code.phi @ x0 + attacks.stacked()
        try:
            via_qr = decode(code, y, "qr")
            via_direct = decode(code, y, "direct")
        except SecestError as e:
            logger.debug(f"Equivalence trial {trial} failed to decode: {e}")
            skipped += 1
            continue
        if not (via_qr.unique and via_direct.unique):
            skipped += 1
            continue
        compared += 1
        gap = float(np.max(np.abs(via_qr.x0_hat - via_direct.x0_hat)))
        worst = max(worst, gap)
        if gap > tol:
            violations.append(trial)
    logger.info(f"Decoder equivalence: {compared} compared, {skipped} skipped, max gap {worst:.2e}")
    return {"trials": trials, "compared": compared, "skipped": skipped,
            "max_difference": worst, "violations": violations}
