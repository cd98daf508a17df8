"""
Frequency-table estimation of plant states and measurements.

The attacker learns transition and emission tallies from the historian, then
predicts the next state of every variable by Chapman-Kolmogorov propagation
and the measurements either by a Naive Bayes posterior with a cutoff
(univariate variables) or by the maximum of the joint emission table
(variables observed by several sensors).
"""

import csv
import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ArgumentError, ConfigError, DomainError, UndefinedPosteriorError
from .ics_model import HistorianLog, LogRecord, StateSpaceModel, simulate

logger = logging.getLogger(__name__)

BELIEF_TOLERANCE = 1e-9
PAGE_SIZE = 4096
# Brute-force sizing counts in KB: 4 KB per page and 10^6 KB per GB.
BYTES_PER_GB = 1024 * 10**6
DEFAULT_SPRAY_GB = 1.2

MODES = ("univariate", "multivariate")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _normalize_rows(counts: np.ndarray) -> np.ndarray:
    """Row-normalize; rows without mass become uniform."""
    sums = counts.sum(axis=1, keepdims=True)
    out = np.full(counts.shape, 1.0 / counts.shape[1])
    np.divide(counts, sums, out=out, where=sums > 0)
    return out


@dataclass(frozen=True, eq=False)
class FrequencyTables:
    """Smoothed tallies learned from a historian log; immutable once fitted."""

    trans_counts: Tuple[np.ndarray, ...]
    obs_counts: Tuple[np.ndarray, ...]
    priors: Tuple[np.ndarray, ...]
    parents: Tuple[int, ...]
    meas_values: Tuple[Tuple[float, ...], ...]
    smoothing: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "trans_counts", tuple(_readonly(c) for c in self.trans_counts))
        object.__setattr__(self, "obs_counts", tuple(_readonly(c) for c in self.obs_counts))
        object.__setattr__(self, "priors", tuple(_readonly(c) for c in self.priors))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        counts = self.trans_counts + self.obs_counts + self.priors
        if any(np.any(c < 0) for c in counts):
            raise ArgumentError("Frequency counts must be non-negative")
        lengths = {len(self.obs_counts), len(self.priors), len(self.parents), len(self.meas_values)}
        if len(lengths) > 1:
            raise ArgumentError("Measurement tables disagree in length")
        for j, p in enumerate(self.parents):
            if not 0 <= p < self.M:
                raise DomainError(f"Measurement {j} observes unknown state variable {p}")
            expected = (self.trans_counts[p].shape[0], len(self.meas_values[j]))
            if self.obs_counts[j].shape != expected or self.priors[j].shape != expected[1:]:
                raise ArgumentError(f"Emission table {j} has shape {self.obs_counts[j].shape}")

    @property
    def M(self) -> int:
        return len(self.trans_counts)

    @property
    def P(self) -> int:
        return len(self.obs_counts)

    @cached_property
    def state_sizes(self) -> Tuple[int, ...]:
        return tuple(int(c.shape[0]) for c in self.trans_counts)

    @cached_property
    def multivariate(self) -> FrozenSet[int]:
        ids, counts = np.unique(np.asarray(self.parents, dtype=np.int64), return_counts=True)
        return frozenset(int(i) for i in ids[counts > 1])

    def children(self, var_id: int) -> List[int]:
        return [j for j, p in enumerate(self.parents) if p == var_id]

    @cached_property
    def transition_matrices(self) -> Tuple[np.ndarray, ...]:
        return tuple(_readonly(_normalize_rows(c)) for c in self.trans_counts)

    @cached_property
    def emission_matrices(self) -> Tuple[np.ndarray, ...]:
        """p(y | x) per measurement variable, rows indexed by parent state code."""
        return tuple(_readonly(_normalize_rows(c)) for c in self.obs_counts)

    def transition_matrix(self, var_id: int) -> np.ndarray:
        self._check_state(var_id)
        return self.transition_matrices[var_id]

    def emission_matrix(self, meas_id: int) -> np.ndarray:
        self._check_meas(meas_id)
        return self.emission_matrices[meas_id]

    def _check_state(self, var_id: int) -> None:
        if not 0 <= var_id < self.M:
            raise DomainError(f"Unknown state variable id {var_id}")

    def _check_meas(self, meas_id: int) -> None:
        if not 0 <= meas_id < self.P:
            raise DomainError(f"Unknown measurement variable id {meas_id}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trans_counts": [c.tolist() for c in self.trans_counts],
            "obs_counts": [c.tolist() for c in self.obs_counts],
            "priors": [c.tolist() for c in self.priors],
            "parents": list(self.parents),
            "meas_values": [list(v) for v in self.meas_values],
            "smoothing": self.smoothing,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FrequencyTables":
        return cls(
            trans_counts=tuple(np.array(c, dtype=float) for c in data["trans_counts"]),
            obs_counts=tuple(np.array(c, dtype=float).reshape(-1, len(v))
                             for c, v in zip(data["obs_counts"], data["meas_values"])),
            priors=tuple(np.array(c, dtype=float) for c in data["priors"]),
            parents=tuple(data["parents"]),
            meas_values=tuple(tuple(v) for v in data["meas_values"]),
            smoothing=data.get("smoothing", 1.0),
        )


def fit(log: HistorianLog, alpha: float = 1.0) -> FrequencyTables:
    """Tally transitions and emissions over the log, plus `alpha` in every cell."""
    if len(log) < 2:
        raise ArgumentError(f"Fitting needs at least 2 records, got {len(log)}")
    if alpha < 0:
        raise ArgumentError(f"Smoothing must be non-negative, got {alpha}")

    trans = []
    for i, n in enumerate(log.state_sizes):
        pairs = log.states[:-1, i] * n + log.states[1:, i]
        trans.append(np.bincount(pairs, minlength=n * n).reshape(n, n) + alpha)

    obs, priors = [], []
    for j, p in enumerate(log.parents):
        n, q = log.state_sizes[p], len(log.meas_values[j])
        pairs = log.states[:, p] * q + log.measurements[:, j]
        obs.append(np.bincount(pairs, minlength=n * q).reshape(n, q) + alpha)
        priors.append(np.bincount(log.measurements[:, j], minlength=q) + alpha)

    tables = FrequencyTables(
        tuple(trans), tuple(obs), tuple(priors), log.parents, log.meas_values, alpha
    )
    logger.info(f"Fitted frequency tables over {len(log)} records (M={tables.M}, P={tables.P})")
    return tables


@dataclass(frozen=True, eq=False)
class Belief:
    """One probability vector per state variable. Normalization is checked on use."""

    vectors: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(np.asarray(v, dtype=float) for v in self.vectors))

    @classmethod
    def one_hot(cls, codes: Sequence[int], sizes: Sequence[int]) -> "Belief":
        vectors = []
        for c, n in zip(codes, sizes):
            if not 0 <= c < n:
                raise DomainError(f"Code {c} outside a domain of size {n}")
            vec = np.zeros(int(n))
            vec[int(c)] = 1.0
            vectors.append(vec)
        return cls(tuple(vectors))

    @classmethod
    def uniform(cls, sizes: Sequence[int]) -> "Belief":
        return cls(tuple(np.full(int(n), 1.0 / n) for n in sizes))

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, var_id: int) -> np.ndarray:
        return self.vectors[var_id]

    def check(self, var_id: int) -> np.ndarray:
        if not 0 <= var_id < len(self.vectors):
            raise DomainError(f"Belief has no variable {var_id}")
        vec = self.vectors[var_id]
        if np.any(vec < 0) or abs(vec.sum() - 1.0) > BELIEF_TOLERANCE:
            raise ArgumentError(f"Belief for variable {var_id} is not normalized (sum={vec.sum()})")
        return vec

    def replace(self, var_id: int, vector: np.ndarray) -> "Belief":
        vectors = list(self.vectors)
        vectors[var_id] = np.asarray(vector, dtype=float)
        return Belief(tuple(vectors))

    def mode(self, var_id: int) -> int:
        return int(np.argmax(self.vectors[var_id]))


class MeasurementEstimate(NamedTuple):
    index: int
    value: float
    posterior: float
    accepted: bool


def _propagate(tables: FrequencyTables, prior: np.ndarray, var_id: int) -> np.ndarray:
    kernel = tables.transition_matrix(var_id)
    if prior.shape != (kernel.shape[0],):
        raise ArgumentError(
            f"Belief for variable {var_id} has {prior.shape[0]} entries, "
            f"kernel has {kernel.shape[0]}"
        )
    predicted = prior @ kernel
    return predicted / predicted.sum()


def predict_state(tables: FrequencyTables, belief_prev: Belief, var_id: int) -> Belief:
    """Chapman-Kolmogorov step: sum over predecessors of p(x_k | x_{k-1}) b(x_{k-1})."""
    tables._check_state(var_id)
    prior = belief_prev.check(var_id)
    return belief_prev.replace(var_id, _propagate(tables, prior, var_id))


def predict_state_multi(
    tables: FrequencyTables, belief_prev: Belief, var_id: int, observed: Mapping[int, int]
) -> Belief:
    """
    Condition the previous belief on jointly observed sensors, then propagate.

    `observed` maps measurement ids to the value index each sensor last reported;
    the sensors are taken as conditionally independent given their parent state.
    """
    tables._check_state(var_id)
    if not observed:
        raise ArgumentError("Joint estimation needs at least one observed measurement")
    prior = belief_prev.check(var_id)
    posterior = prior.copy()
    for meas_id, value_index in observed.items():
        tables._check_meas(meas_id)
        if tables.parents[meas_id] != var_id:
            raise ArgumentError(f"Measurement {meas_id} does not observe state variable {var_id}")
        emission = tables.emission_matrices[meas_id]
        if not 0 <= value_index < emission.shape[1]:
            raise DomainError(
                f"Value index {value_index} outside the domain of measurement {meas_id}"
            )
        posterior = posterior * emission[:, value_index]
    total = posterior.sum()
    if total <= 0:
        raise UndefinedPosteriorError(
            f"Observations of variable {var_id} have zero joint likelihood"
        )
    return belief_prev.replace(var_id, _propagate(tables, posterior / total, var_id))


def measurement_posterior(tables: FrequencyTables, x_k: int, meas_id: int) -> np.ndarray:
    """p(y | x_k) over every candidate y, from p(x_k | y) p(y) normalized."""
    tables._check_meas(meas_id)
    counts = tables.obs_counts[meas_id]
    if not 0 <= x_k < counts.shape[0]:
        raise DomainError(f"State code {x_k} outside the parent domain of measurement {meas_id}")
    col_sums = counts.sum(axis=0)
    likelihood = np.zeros(counts.shape[1])
    np.divide(counts[x_k], col_sums, out=likelihood, where=col_sums > 0)
    prior = tables.priors[meas_id]
    prior = prior / prior.sum() if prior.sum() > 0 else np.full(prior.shape, 1.0 / prior.size)
    joint = likelihood * prior
    total = joint.sum()
    if total <= 0:
        raise UndefinedPosteriorError(
            f"State code {x_k} has zero likelihood for every value of measurement {meas_id}"
        )
    return joint / total


def estimate_measurement(
    tables: FrequencyTables, x_k: int, meas_id: int, cutoff: float
) -> MeasurementEstimate:
    """Naive Bayes estimate; accepted only if the winning posterior exceeds `cutoff`."""
    posterior = measurement_posterior(tables, x_k, meas_id)
    best = int(np.argmax(posterior))
    p = float(posterior[best])
    return MeasurementEstimate(best, tables.meas_values[meas_id][best], p, p > cutoff)


def estimate_measurement_multi(
    tables: FrequencyTables, x_k: int, meas_id: int
) -> MeasurementEstimate:
    """Highest-probability value of p(y | x_k); the first maximum wins ties."""
    emission = tables.emission_matrix(meas_id)
    if not 0 <= x_k < emission.shape[0]:
        raise DomainError(f"State code {x_k} outside the parent domain of measurement {meas_id}")
    row = emission[x_k]
    best = int(np.argmax(row))
    return MeasurementEstimate(best, tables.meas_values[meas_id][best], float(row[best]), True)


def runner_up(scores: np.ndarray) -> int:
    """Index of the second-best score, or -1 for a single candidate."""
    if scores.size < 2:
        return -1
    order = np.argsort(-scores, kind="stable")
    return int(order[1])


@dataclass
class EstimatorConfig:
    cutoff: float = 0.5
    mode: str = "multivariate"
    smoothing: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.cutoff <= 1.0:
            raise ConfigError(f"Cutoff must lie in [0, 1], got {self.cutoff}")
        if self.mode not in MODES:
            raise ConfigError(f"Unknown estimation mode: {self.mode}")
        if self.smoothing < 0:
            raise ConfigError(f"Smoothing must be non-negative, got {self.smoothing}")

    def to_dict(self) -> Dict[str, Any]:
        return {"cutoff": self.cutoff, "mode": self.mode, "smoothing": self.smoothing}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EstimatorConfig":
        unknown = set(data) - {"cutoff", "mode", "smoothing"}
        if unknown:
            raise ConfigError(f"Unknown estimator settings: {sorted(unknown)}")
        return cls(**data)


@dataclass
class EstimateResult:
    """Estimated x_k and y_k. Rejected measurements keep their best index but no value."""

    x_hat: np.ndarray
    y_index: np.ndarray
    y_hat: Tuple[Optional[float], ...]
    state_posteriors: np.ndarray
    meas_posteriors: np.ndarray
    rejected: List[int]
    state_alternates: np.ndarray
    meas_alternates: np.ndarray
    mode: str = "multivariate"

    @property
    def M(self) -> int:
        return int(self.x_hat.shape[0])

    @property
    def P(self) -> int:
        return int(self.y_index.shape[0])

    def accepted(self, meas_id: int) -> bool:
        return meas_id not in self.rejected

    def mean_posterior(self) -> float:
        scores = np.concatenate([self.state_posteriors, self.meas_posteriors])
        return float(scores.mean()) if scores.size else 1.0

    def least_confident(self) -> Optional[Tuple[str, int]]:
        """The variable with an alternative whose winning posterior is lowest."""
        candidates = [
            (float(p), "state", i)
            for i, p in enumerate(self.state_posteriors)
            if self.state_alternates[i] >= 0
        ] + [
            (float(p), "measurement", j)
            for j, p in enumerate(self.meas_posteriors)
            if self.meas_alternates[j] >= 0
        ]
        if not candidates:
            return None
        _, kind, var_id = min(candidates)
        return kind, var_id

    def to_rows(self, model: Optional[StateSpaceModel] = None) -> List[Dict[str, Any]]:
        rows = []
        for i in range(self.M):
            name = model.states[i].name if model else f"x_{i}"
            rows.append({
                "var": name,
                "kind": "state",
                "estimate": int(self.x_hat[i]),
                "posterior": float(self.state_posteriors[i]),
                "accepted": True,
            })
        for j in range(self.P):
            name = model.measurements[j].name if model else f"y_{j}"
            rows.append({
                "var": name,
                "kind": "measurement",
                "estimate": self.y_hat[j],
                "posterior": float(self.meas_posteriors[j]),
                "accepted": self.accepted(j),
            })
        return rows

    def to_csv(self, path: Union[str, Path], model: Optional[StateSpaceModel] = None) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as f:
            fieldnames = ["var", "kind", "estimate", "posterior", "accepted"]
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(self.to_rows(model))
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "x_hat": self.x_hat.tolist(),
            "y_index": self.y_index.tolist(),
            "y_hat": list(self.y_hat),
            "state_posteriors": self.state_posteriors.tolist(),
            "meas_posteriors": self.meas_posteriors.tolist(),
            "rejected": list(self.rejected),
        }


class ImposterEstimator:
    """
    Dispatches each variable to the univariate or the joint estimator.

    The cutoff applies in both modes: a joint estimate is kept only when its
    p(y | x_k) exceeds it.
    """

    def __init__(self, tables: FrequencyTables, config: Optional[EstimatorConfig] = None):
        self.tables = tables
        self.config = config or EstimatorConfig()
        self.strategies = {
            "univariate": self._estimate_univariate,
            "multivariate": self._estimate_multivariate,
        }

    def estimate(
        self,
        belief_0: Belief,
        known_states: Optional[Sequence[int]] = None,
        last_measurements: Optional[Sequence[int]] = None,
    ) -> EstimateResult:
        if self.config.mode not in self.strategies:
            raise ConfigError(f"Unknown estimation mode: {self.config.mode}")
        if len(belief_0) != self.tables.M:
            raise ArgumentError(
                f"Belief covers {len(belief_0)} variables, tables have {self.tables.M}"
            )
        if known_states is not None and len(known_states) != self.tables.M:
            raise ArgumentError("Known state vector does not match the number of state variables")
        if last_measurements is not None and len(last_measurements) != self.tables.P:
            raise ArgumentError("Last measurement vector does not match the number of measurements")
        return self.strategies[self.config.mode](belief_0, known_states, last_measurements)

    def _estimate_univariate(self, belief_0, known_states, last_measurements) -> EstimateResult:
        return self._run(belief_0, known_states, last_measurements, joint=frozenset())

    def _estimate_multivariate(self, belief_0, known_states, last_measurements) -> EstimateResult:
        return self._run(belief_0, known_states, last_measurements, joint=self.tables.multivariate)

    def _predict(
        self, belief: Belief, var_id: int, joint: FrozenSet[int], last_measurements
    ) -> np.ndarray:
        if var_id in joint and last_measurements is not None:
            observed = {j: int(last_measurements[j]) for j in self.tables.children(var_id)}
            return predict_state_multi(self.tables, belief, var_id, observed)[var_id]
        return predict_state(self.tables, belief, var_id)[var_id]

    def _run(
        self, belief_0, known_states, last_measurements, joint: FrozenSet[int]
    ) -> EstimateResult:
        tables = self.tables
        x_hat = np.zeros(tables.M, dtype=np.int64)
        state_post = np.ones(tables.M)
        state_alt = np.full(tables.M, -1, dtype=np.int64)
        for i in range(tables.M):
            if known_states is not None:
                x_hat[i] = int(known_states[i])
                continue
            predicted = self._predict(belief_0, i, joint, last_measurements)
            x_hat[i] = int(np.argmax(predicted))
            state_post[i] = float(predicted[x_hat[i]])
            state_alt[i] = runner_up(predicted)

        y_index = np.zeros(tables.P, dtype=np.int64)
        meas_post = np.zeros(tables.P)
        meas_alt = np.full(tables.P, -1, dtype=np.int64)
        y_hat: List[Optional[float]] = []
        rejected = []
        for j, parent in enumerate(tables.parents):
            x_k = int(x_hat[parent])
            if parent in joint:
                est = estimate_measurement_multi(tables, x_k, j)
                est = est._replace(accepted=est.posterior > self.config.cutoff)
                scores = tables.emission_matrices[j][x_k]
            else:
                est = estimate_measurement(tables, x_k, j, self.config.cutoff)
                scores = measurement_posterior(tables, x_k, j)
            y_index[j] = est.index
            meas_post[j] = est.posterior
            meas_alt[j] = runner_up(scores)
            if est.accepted:
                y_hat.append(est.value)
            else:
                y_hat.append(None)
                rejected.append(j)

        logger.debug(
            f"Estimated {tables.M} states and {tables.P} measurements, {len(rejected)} rejected"
        )
        return EstimateResult(
            x_hat,
            y_index,
            tuple(y_hat),
            state_post,
            meas_post,
            rejected,
            state_alt,
            meas_alt,
            self.config.mode,
        )


def run_imposter_estimation(
    tables: FrequencyTables,
    config: EstimatorConfig,
    belief_0: Belief,
    known_states: Optional[Sequence[int]] = None,
    last_measurements: Optional[Sequence[int]] = None,
) -> EstimateResult:
    """Estimate x_k and y_k for every variable from the belief at k-1."""
    return ImposterEstimator(tables, config).estimate(belief_0, known_states, last_measurements)


class Accuracy(NamedTuple):
    state: float
    measurement: float


def accuracy(result: EstimateResult, truth: LogRecord) -> Accuracy:
    """Fraction of variables estimated exactly; rejected measurements count as wrong."""
    if result.M != len(truth.x) or result.P != len(truth.y):
        raise ArgumentError("Estimate and truth record differ in dimensions")
    state_acc = float(np.mean(result.x_hat == np.asarray(truth.x))) if result.M else 1.0
    if not result.P:
        return Accuracy(state_acc, 1.0)
    hits = result.y_index == np.asarray(truth.y)
    hits[list(result.rejected)] = False
    return Accuracy(state_acc, float(np.mean(hits)))


def score_steps(
    estimator: ImposterEstimator, log: HistorianLog, first_k: int, last_k: int
) -> Accuracy:
    """
    Mean one-step accuracy over records `first_k`..`last_k` of `log`.

    States are scored from their predictions; measurements are scored with the
    true parent state supplied.
    """
    if not 2 <= first_k <= last_k <= len(log):
        raise ArgumentError(f"Records {first_k}..{last_k} not scorable in a log of {len(log)}")
    sizes = log.state_sizes
    state_scores, meas_scores = [], []
    for k in range(first_k, last_k + 1):
        prev, cur = log.record(k - 1), log.record(k)
        belief = Belief.one_hot(prev.x, sizes)
        predicted = estimator.estimate(belief, last_measurements=prev.y)
        observed = estimator.estimate(belief, known_states=cur.x)
        state_scores.append(accuracy(predicted, cur).state)
        meas_scores.append(accuracy(observed, cur).measurement)
    return Accuracy(float(np.mean(state_scores)), float(np.mean(meas_scores)))


def evaluate_accuracy(
    model: StateSpaceModel,
    seed: int,
    training_length: int,
    test_steps: int = 50,
    horizon: Optional[int] = None,
    config: Optional[EstimatorConfig] = None,
) -> Accuracy:
    """
    Train on the first `training_length` records; score the `test_steps` after `horizon`.

    Measurement accuracy is conditioned on the true parent state of each scored step,
    not on the predicted one.
    """
    config = config or EstimatorConfig()
    horizon = training_length if horizon is None else horizon
    if horizon < training_length:
        raise ArgumentError(f"Horizon {horizon} precedes the end of training ({training_length})")
    if test_steps < 1:
        raise ArgumentError(f"Need at least one test step, got {test_steps}")
    rng = np.random.default_rng(seed)
    x_0 = rng.integers(0, model.state_sizes)
    log = simulate(model, x_0, horizon + test_steps, rng)
    estimator = ImposterEstimator(fit(log.window(0, training_length), config.smoothing), config)
    result = score_steps(estimator, log, horizon + 1, horizon + test_steps)
    logger.info(
        f"Accuracy after {training_length} training steps: "
        f"states {result.state:.4f}, measurements {result.measurement:.4f}"
    )
    return result


class Combinations(NamedTuple):
    c_x: int
    c_y: int
    pages_bytes: int
    attempts: int

    @property
    def pages(self) -> int:
        return self.pages_bytes // PAGE_SIZE

    @property
    def pages_gb(self) -> Fraction:
        return Fraction(self.pages_bytes, BYTES_PER_GB)


def spray_budget_bytes(spray_gb: float = DEFAULT_SPRAY_GB) -> Fraction:
    if spray_gb <= 0:
        raise ArgumentError(f"Spray budget must be positive, got {spray_gb}")
    return Fraction(str(spray_gb)) * BYTES_PER_GB


def combinations(
    domain_sizes_states: Sequence[int],
    domain_sizes_meas: Sequence[int] = (),
    spray_gb: float = DEFAULT_SPRAY_GB,
) -> Combinations:
    """Exact search-space size: one guessed page per state and per measurement combination."""
    sizes = list(domain_sizes_states) + list(domain_sizes_meas)
    if any(int(n) < 1 for n in sizes):
        raise ArgumentError("Domain sizes must be at least 1")
    c_x = math.prod(int(n) for n in domain_sizes_states)
    c_y = math.prod(int(n) for n in domain_sizes_meas)
    # Empty categories contribute no pages.
    pages = (c_x if len(domain_sizes_states) else 0) + (c_y if len(domain_sizes_meas) else 0)
    pages_bytes = PAGE_SIZE * pages
    attempts = math.ceil(Fraction(pages_bytes) / spray_budget_bytes(spray_gb))
    return Combinations(c_x, c_y, pages_bytes, attempts)


def candidate_pages_needed(mean_posterior: float) -> int:
    """One or two imposter pages depending on how sure the estimate is."""
    if not 0.0 < mean_posterior <= 1.0:
        raise ArgumentError(f"Mean posterior must lie in (0, 1], got {mean_posterior}")
    return min(2, math.ceil(1.0 / mean_posterior - 1e-12))
