"""
Discrete-time state-space model of an industrial plant.

The model is the ground truth the attacker observes through the historian:
every state variable follows its own Markov kernel p(x_k | x_{k-1}) and every
measurement variable is emitted from its parent state through p(y_k | x_k).
Noise enters as mixing with the uniform distribution.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ArgumentError, DomainError

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-12
DOMINANT_LOW = 0.8
DOMINANT_HIGH = 0.95
DEFAULT_NOISE = 0.02

SUCTION_OFF = 0
SUCTION_ON = 1
THRESHOLD_CM = 2

WAREHOUSE_STATES = 420
WAREHOUSE_MEASUREMENTS = 160
# Domain-size multisets for the warehouse, states drawn from {2,3,4} and
# measurements from {3,4,5}. Means are 3.005 and 4.0125; the products are the
# warehouse's combination counts (2.4e200 and 2.1e96).
_STATE_SIZE_POOL = [2] * 4 + [4] * 7 + [3] * 408
_MEAS_SIZE_POOL = [3] * 7 + [5] * 9 + [4] * 143
_SUBSYSTEMS = ("hbw", "vgr", "mpo", "sl")
_LABELS = ("IDLE", "RUN", "HOLD", "FAULT")

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class StateVariable:
    """A discrete state variable; a label's code is its index in `labels`."""

    id: int
    name: str
    labels: Tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise DomainError(f"State variable {self.name} has an empty domain")
        if len(set(self.labels)) != len(self.labels):
            raise DomainError(f"State variable {self.name} has duplicate labels")

    @property
    def size(self) -> int:
        return len(self.labels)

    def code_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DomainError(f"{label!r} is not a label of {self.name}") from None


@dataclass(frozen=True)
class MeasurementVariable:
    """A discrete measurement observing one state variable."""

    id: int
    name: str
    values: Tuple[float, ...]
    parent: int
    unit: str = "cm"
    kind: str = "int16"

    def __post_init__(self):
        if not self.values:
            raise DomainError(f"Measurement variable {self.name} has an empty domain")
        if len(set(self.values)) != len(self.values):
            raise DomainError(f"Measurement variable {self.name} has duplicate values")

    @property
    def size(self) -> int:
        return len(self.values)

    def index_of(self, value: float) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise DomainError(f"{value!r} is not a value of {self.name}") from None


@dataclass(eq=False)
class StateSpaceModel:
    """Per-variable transition and observation kernels plus noise levels."""

    states: List[StateVariable]
    measurements: List[MeasurementVariable]
    transition: List[np.ndarray]
    observation: List[np.ndarray]
    state_noise: float = DEFAULT_NOISE
    meas_noise: float = DEFAULT_NOISE

    def __post_init__(self):
        self.transition = [np.asarray(t, dtype=float) for t in self.transition]
        self.observation = [np.asarray(o, dtype=float) for o in self.observation]
        if len(self.transition) != len(self.states):
            raise ArgumentError("One transition kernel is required per state variable")
        if len(self.observation) != len(self.measurements):
            raise ArgumentError("One observation table is required per measurement variable")
        for noise in (self.state_noise, self.meas_noise):
            if not 0.0 <= noise < 1.0:
                raise ArgumentError(f"Noise probability {noise} outside [0, 1)")
        for var, kernel in zip(self.states, self.transition):
            _check_stochastic(kernel, (var.size, var.size), var.name)
        for meas, table in zip(self.measurements, self.observation):
            if not 0 <= meas.parent < len(self.states):
                raise DomainError(f"{meas.name} observes unknown state variable {meas.parent}")
            parent = self.states[meas.parent]
            _check_stochastic(table, (parent.size, meas.size), meas.name)

    @property
    def M(self) -> int:
        return len(self.states)

    @property
    def P(self) -> int:
        return len(self.measurements)

    @cached_property
    def state_sizes(self) -> np.ndarray:
        return np.array([v.size for v in self.states], dtype=np.int64)

    @cached_property
    def meas_sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.measurements], dtype=np.int64)

    @cached_property
    def parents(self) -> np.ndarray:
        return np.array([m.parent for m in self.measurements], dtype=np.int64)

    @cached_property
    def multivariate(self) -> FrozenSet[int]:
        """State variables observed by more than one measurement variable."""
        ids, counts = np.unique(self.parents, return_counts=True)
        return frozenset(int(i) for i in ids[counts > 1])

    def children(self, var_id: int) -> List[int]:
        return [m.id for m in self.measurements if m.parent == var_id]

    def state_by_name(self, name: str) -> StateVariable:
        for var in self.states:
            if var.name == name:
                return var
        raise DomainError(f"Unknown state variable {name!r}")

    def measurement_by_name(self, name: str) -> MeasurementVariable:
        for meas in self.measurements:
            if meas.name == name:
                return meas
        raise DomainError(f"Unknown measurement variable {name!r}")

    @cached_property
    def transition_cdf(self) -> np.ndarray:
        return _padded_cdf(self.transition, self.state_sizes, self.state_sizes)

    @cached_property
    def observation_cdf(self) -> np.ndarray:
        row_sizes = self.state_sizes[self.parents] if self.P else np.zeros(0, dtype=np.int64)
        return _padded_cdf(self.observation, row_sizes, self.meas_sizes)

    def check_states(self, x: Sequence[int]) -> np.ndarray:
        arr = np.asarray(x, dtype=np.int64)
        if arr.shape != (self.M,):
            raise DomainError(f"State vector has shape {arr.shape}, expected ({self.M},)")
        bad = np.flatnonzero((arr < 0) | (arr >= self.state_sizes))
        if bad.size:
            var = self.states[int(bad[0])]
            raise DomainError(f"Code {int(arr[bad[0]])} outside the domain of {var.name}")
        return arr

    def to_dict(self) -> Dict[str, Any]:
        return {
            "states": [{"id": v.id, "name": v.name, "labels": list(v.labels)} for v in self.states],
            "measurements": [
                {
                    "id": m.id,
                    "name": m.name,
                    "values": list(m.values),
                    "parent": m.parent,
                    "unit": m.unit,
                    "kind": m.kind,
                }
                for m in self.measurements
            ],
            "transition": [t.tolist() for t in self.transition],
            "observation": [o.tolist() for o in self.observation],
            "state_noise": self.state_noise,
            "meas_noise": self.meas_noise,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StateSpaceModel":
        return cls(
            states=[StateVariable(s["id"], s["name"], tuple(s["labels"])) for s in data["states"]],
            measurements=[
                MeasurementVariable(
                    m["id"], m["name"], tuple(m["values"]), m["parent"],
                    m.get("unit", "cm"), m.get("kind", "int16"),
                )
                for m in data["measurements"]
            ],
            transition=data["transition"],
            observation=data["observation"],
            state_noise=data.get("state_noise", DEFAULT_NOISE),
            meas_noise=data.get("meas_noise", DEFAULT_NOISE),
        )


@dataclass(frozen=True)
class LogRecord:
    k: int
    x: Tuple[int, ...]
    y: Tuple[int, ...]  # value indices into each measurement domain


@dataclass(eq=False)
class HistorianLog:
    """Time-indexed states (codes) and measurements (value indices), k = 1..T."""

    states: np.ndarray
    measurements: np.ndarray
    meas_values: Tuple[Tuple[float, ...], ...] = field(default=())
    state_sizes: Tuple[int, ...] = field(default=())
    parents: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        self.measurements = np.asarray(self.measurements, dtype=np.int64)
        if self.states.ndim != 2 or self.measurements.ndim != 2:
            raise ArgumentError("Historian arrays must be two-dimensional")
        if self.states.shape[0] != self.measurements.shape[0]:
            raise ArgumentError("State and measurement records differ in length")
        M, P = self.states.shape[1], self.measurements.shape[1]
        # Hand-built logs may omit the model metadata; infer domains from the data.
        if not self.state_sizes:
            self.state_sizes = tuple(
                int(self.states[:, i].max()) + 1 if len(self) else 1 for i in range(M)
            )
        if not self.meas_values:
            self.meas_values = tuple(
                tuple(range(int(self.measurements[:, j].max()) + 1 if len(self) else 1))
                for j in range(P)
            )
        if len(self.state_sizes) != M or len(self.meas_values) != P:
            raise ArgumentError("Log metadata does not match the record dimensions")
        if P and len(self.parents) != P:
            raise ArgumentError("Measurement records need the parent state of every variable")

    def __len__(self) -> int:
        return int(self.states.shape[0])

    def record(self, k: int) -> LogRecord:
        if not 1 <= k <= len(self):
            raise ArgumentError(f"No record at k={k}")
        x = tuple(int(c) for c in self.states[k - 1])
        y = tuple(int(i) for i in self.measurements[k - 1])
        return LogRecord(k, x, y)

    def measurement_values(self, k: int) -> Tuple[float, ...]:
        rec = self.record(k)
        return tuple(self.meas_values[j][i] for j, i in enumerate(rec.y))

    def window(self, start: int, stop: int) -> "HistorianLog":
        """Records start+1..stop as a new log (0-based half-open slice)."""
        return HistorianLog(
            self.states[start:stop],
            self.measurements[start:stop],
            self.meas_values,
            self.state_sizes,
            self.parents,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "records": [
                {"k": k, "x": self.record(k).x, "y": list(self.measurement_values(k))}
                for k in range(1, len(self) + 1)
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], model: StateSpaceModel) -> "HistorianLog":
        records = data["records"]
        for expected, rec in enumerate(records, start=1):
            if rec["k"] != expected:
                raise ArgumentError(f"Record k={rec['k']} out of sequence (expected {expected})")
        states = [model.check_states(rec["x"]) for rec in records]
        meas = [
            [model.measurements[j].index_of(v) for j, v in enumerate(rec["y"])] for rec in records
        ]
        return cls(
            np.array(states, dtype=np.int64).reshape(len(records), model.M),
            np.array(meas, dtype=np.int64).reshape(len(records), model.P),
            *_log_metadata(model),
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        M, P = self.states.shape[1], self.measurements.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["k"] + [f"x_{i}" for i in range(M)] + [f"y_{j}" for j in range(P)])
            for k in range(1, len(self) + 1):
                writer.writerow([k, *self.record(k).x, *self.measurement_values(k)])
        return path


@dataclass(eq=False)
class WarehouseScenario:
    """The automated high-bay warehouse plant with its two attack-relevant variables."""

    model: StateSpaceModel
    suction_var: int
    threshold_var: int

    @property
    def suction(self) -> StateVariable:
        return self.model.states[self.suction_var]

    @property
    def threshold(self) -> MeasurementVariable:
        return self.model.measurements[self.threshold_var]


def _check_stochastic(kernel: np.ndarray, shape: Tuple[int, int], name: str) -> None:
    if kernel.shape != shape:
        raise ArgumentError(f"Kernel for {name} has shape {kernel.shape}, expected {shape}")
    if np.any(kernel < 0):
        raise ArgumentError(f"Kernel for {name} has negative entries")
    if np.any(np.abs(kernel.sum(axis=1) - 1.0) > ROW_TOLERANCE):
        raise ArgumentError(f"Kernel rows for {name} do not sum to 1")


def _padded_cdf(
    tables: List[np.ndarray], row_sizes: np.ndarray, col_sizes: np.ndarray
) -> np.ndarray:
    rows = int(row_sizes.max()) if len(tables) else 1
    cols = int(col_sizes.max()) if len(tables) else 1
    # Padding sits above 1 so a uniform draw never selects it.
    cdf = np.full((len(tables), rows, cols), 2.0)
    for i, table in enumerate(tables):
        r, c = table.shape
        cum = np.cumsum(table, axis=1)
        cum[:, -1] = 1.0
        cdf[i, :r, :c] = cum
    return cdf


def _sample(
    cdf_rows: np.ndarray, sizes: np.ndarray, noise: float, rng: np.random.Generator
) -> np.ndarray:
    n = cdf_rows.shape[0]
    u = rng.random(n)
    codes = (cdf_rows < u[:, None]).sum(axis=1)
    perturbed = rng.random(n) < noise
    uniform = rng.integers(0, sizes) if n else np.zeros(0, dtype=np.int64)
    return np.where(perturbed, uniform, codes).astype(np.int64)


def step(
    model: StateSpaceModel, x_prev: Sequence[int], rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """One model step: returns (state codes, measurement value indices)."""
    x_prev = model.check_states(x_prev)
    trans_rows = model.transition_cdf[np.arange(model.M), x_prev]
    x = _sample(trans_rows, model.state_sizes, model.state_noise, rng)
    obs_rows = model.observation_cdf[np.arange(model.P), x[model.parents]]
    y = _sample(obs_rows, model.meas_sizes, model.meas_noise, rng)
    return x, y


def nominal_step(model: StateSpaceModel, x_prev: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free mode of the model: most probable next state and its most probable reading."""
    x_prev = model.check_states(x_prev)
    x = np.array(
        [int(np.argmax(model.transition[i][c])) for i, c in enumerate(x_prev)], dtype=np.int64
    )
    parents = [x[m.parent] for m in model.measurements]
    y = np.array(
        [int(np.argmax(model.observation[j][c])) for j, c in enumerate(parents)], dtype=np.int64
    )
    return x, y


def simulate(
    model: StateSpaceModel, x_0: Sequence[int], T: int, rng: np.random.Generator
) -> HistorianLog:
    """Run T steps from x_0; record k is produced from record k-1 alone."""
    if T < 1:
        raise ArgumentError(f"Simulation length must be at least 1, got {T}")
    x = model.check_states(x_0)
    states = np.empty((T, model.M), dtype=np.int64)
    meas = np.empty((T, model.P), dtype=np.int64)
    for k in range(T):
        x, y = step(model, x, rng)
        states[k] = x
        meas[k] = y
    logger.debug(f"Simulated {T} steps of a model with M={model.M}, P={model.P}")
    return HistorianLog(states, meas, *_log_metadata(model))


def _log_metadata(model: StateSpaceModel) -> Tuple[Any, ...]:
    return (
        tuple(m.values for m in model.measurements),
        tuple(int(n) for n in model.state_sizes),
        tuple(int(p) for p in model.parents),
    )


def _check_var(model: StateSpaceModel, var_id: int) -> StateVariable:
    if not 0 <= var_id < model.M:
        raise DomainError(f"Unknown state variable id {var_id}")
    return model.states[var_id]


def transition_prob(model: StateSpaceModel, var_id: int, code_prev: int, code_next: int) -> float:
    var = _check_var(model, var_id)
    for code in (code_prev, code_next):
        if not 0 <= code < var.size:
            raise DomainError(f"Code {code} outside the domain of {var.name}")
    return float(model.transition[var_id][code_prev, code_next])


def observation_prob(
    model: StateSpaceModel, meas_id: int, state_code: int, value_index: int
) -> float:
    if not 0 <= meas_id < model.P:
        raise DomainError(f"Unknown measurement variable id {meas_id}")
    meas = model.measurements[meas_id]
    parent = model.states[meas.parent]
    if not 0 <= state_code < parent.size:
        raise DomainError(f"Code {state_code} outside the domain of {parent.name}")
    if not 0 <= value_index < meas.size:
        raise DomainError(f"Value index {value_index} outside the domain of {meas.name}")
    return float(model.observation[meas_id][state_code, value_index])


def dominant_row(rng: np.random.Generator, size: int, column: Optional[int] = None) -> np.ndarray:
    """A probability row with one entry in [0.8, 0.95] and the rest Dirichlet-spread."""
    if size == 1:
        return np.ones(1)
    col = int(rng.integers(size)) if column is None else column
    peak = rng.uniform(DOMINANT_LOW, DOMINANT_HIGH)
    rest = rng.dirichlet(np.ones(size - 1)) * (1.0 - peak)
    row = np.insert(rest, col, peak)
    return row / row.sum()


def model_from_tables(
    transition: Sequence[Any],
    observation: Sequence[Any] = (),
    parents: Sequence[int] = (),
    meas_values: Optional[Sequence[Sequence[float]]] = None,
    state_noise: float = 0.0,
    meas_noise: float = 0.0,
) -> StateSpaceModel:
    """Build a model from explicit kernels, naming variables x<i> / y<j>."""
    transition = [np.asarray(t, dtype=float) for t in transition]
    observation = [np.asarray(o, dtype=float) for o in observation]
    states = [
        StateVariable(i, f"x{i}", tuple(f"s{c}" for c in range(t.shape[0])))
        for i, t in enumerate(transition)
    ]
    if meas_values is None:
        meas_values = [tuple(range(o.shape[1])) for o in observation]
    measurements = [
        MeasurementVariable(j, f"y{j}", tuple(vals), int(p))
        for j, (vals, p) in enumerate(zip(meas_values, parents))
    ]
    return StateSpaceModel(states, measurements, transition, observation, state_noise, meas_noise)


def random_model(
    seed: Seed,
    state_sizes: Sequence[int],
    meas_sizes: Sequence[int] = (),
    parents: Optional[Sequence[int]] = None,
    state_noise: float = DEFAULT_NOISE,
    meas_noise: float = DEFAULT_NOISE,
) -> StateSpaceModel:
    """Seeded model with dominant-entry kernels, for experiments and property checks."""
    rng = np.random.default_rng(seed)
    if parents is None:
        parents = [int(rng.integers(len(state_sizes))) for _ in meas_sizes]
    transition = [np.array([dominant_row(rng, n) for _ in range(n)]) for n in state_sizes]
    observation = [
        np.array([dominant_row(rng, q) for _ in range(state_sizes[p])])
        for q, p in zip(meas_sizes, parents)
    ]
    meas_values = [tuple(range(q)) for q in meas_sizes]
    return model_from_tables(transition, observation, parents, meas_values, state_noise, meas_noise)


def _measurement_domain(rng: np.random.Generator, size: int) -> Tuple[str, str, Tuple[float, ...]]:
    if rng.random() < 0.2:
        temps = np.sort(rng.choice(np.arange(20, 260, 5), size=size, replace=False))
        return "temp", "degC", tuple(float(t) for t in temps)
    positions = np.sort(rng.choice(np.arange(0, 400), size=size, replace=False))
    return "pos", "cm", tuple(int(p) for p in positions)


def build_warehouse_model(seed: int, noise: float = DEFAULT_NOISE) -> WarehouseScenario:
    """The high-bay warehouse plant: M=420, N~3, P=160, Q~4, fully determined by `seed`."""
    rng = np.random.default_rng(seed)

    state_sizes = [2] + [int(n) for n in rng.permutation(_STATE_SIZE_POOL)]
    states = [StateVariable(0, "suctionstate", ("OFF", "ON"))]
    for i, n in enumerate(state_sizes[1:], start=1):
        labels = ("OFF", "ON") if n == 2 else _LABELS[:n]
        states.append(StateVariable(i, f"{_SUBSYSTEMS[i % 4]}_state_{i:03d}", labels))

    # Suction stays ON through the carry phase.
    transition = [np.array([dominant_row(rng, 2, column=SUCTION_ON) for _ in range(2)])]
    for n in state_sizes[1:]:
        transition.append(np.array([dominant_row(rng, n) for _ in range(n)]))

    measurements = [MeasurementVariable(0, "S_theta", (THRESHOLD_CM, 7, 12, 18), 0, "cm", "int16")]
    observation = [
        np.array([dominant_row(rng, 4), dominant_row(rng, 4, column=0)])
    ]
    meas_sizes = [int(q) for q in rng.permutation(_MEAS_SIZE_POOL)]
    for j, q in enumerate(meas_sizes, start=1):
        parent = int(rng.integers(WAREHOUSE_STATES))
        quantity, unit, values = _measurement_domain(rng, q)
        kind = "float64" if unit == "degC" else "int16"
        name = f"{_SUBSYSTEMS[j % 4]}_{quantity}_{j:03d}"
        measurements.append(MeasurementVariable(j, name, values, parent, unit, kind))
        observation.append(np.array([dominant_row(rng, q) for _ in range(state_sizes[parent])]))

    model = StateSpaceModel(states, measurements, transition, observation, noise, noise)
    logger.info(f"Built warehouse model (seed={seed}, M={model.M}, P={model.P})")
    return WarehouseScenario(model=model, suction_var=0, threshold_var=0)
