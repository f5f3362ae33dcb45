"""Multi-channel LTI plant, bounded noise waveforms and per-node measurement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class NoiseSignal:
    """Deterministic bounded waveform ``sum_k amp[:, k] * f(freq[:, k] t + phase[:, k])``.

    ``f`` is ``sin`` or ``cos``.  Every component is bounded by the row sum of
    ``|amp|``, and so is its derivative scaled by the largest frequency.
    """

    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray
    function: str = "sin"
    spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.function not in ("sin", "cos"):
            raise ValueError(f"unknown waveform {self.function!r}")
        amp = np.atleast_2d(np.asarray(self.amplitude, dtype=float))
        freq = np.broadcast_to(np.atleast_2d(np.asarray(self.frequency, dtype=float)), amp.shape).copy()
        phase = np.broadcast_to(np.atleast_2d(np.asarray(self.phase, dtype=float)), amp.shape).copy()
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "frequency", freq)
        object.__setattr__(self, "phase", phase)

    @property
    def dim(self) -> int:
        return self.amplitude.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        arg = self.frequency * t + self.phase
        wave = np.sin(arg) if self.function == "sin" else np.cos(arg)
        return (self.amplitude * wave).sum(axis=1)

    def sup_bound(self) -> float:
        """Upper bound on the Euclidean norm of the signal."""
        return float(np.linalg.norm(np.abs(self.amplitude).sum(axis=1)))

    def derivative_bound(self) -> float:
        return float(np.linalg.norm((np.abs(self.amplitude * self.frequency)).sum(axis=1)))

    @classmethod
    def sinusoid(cls, amplitude, frequency, phase=0.0, function="sin") -> "NoiseSignal":
        amp = np.asarray(amplitude, dtype=float).reshape(-1, 1)
        freq = np.broadcast_to(np.asarray(frequency, dtype=float).reshape(-1, 1), amp.shape)
        ph = np.broadcast_to(np.asarray(phase, dtype=float).reshape(-1, 1), amp.shape)
        spec = {
            "type": "sinusoid",
            "function": function,
            "amplitude": amp[:, 0].tolist(),
            "frequency": freq[:, 0].tolist(),
            "phase": ph[:, 0].tolist(),
        }
        return cls(amp, freq, ph, function, spec)

    @classmethod
    def bounded_random(cls, dim: int, bound: float, seed: int, n_terms: int = 8,
                       max_frequency: float = 1.0) -> "NoiseSignal":
        """Seeded pseudo-random waveform with every component in ``[-bound, bound]``."""
        rng = np.random.default_rng(seed)
        weights = rng.uniform(0.5, 1.0, size=(dim, n_terms))
        amp = bound * weights / weights.sum(axis=1, keepdims=True)
        freq = rng.uniform(0.0, max_frequency, size=(dim, n_terms))
        phase = rng.uniform(0.0, 2 * np.pi, size=(dim, n_terms))
        spec = {"type": "bounded-random", "dim": dim, "bound": bound, "seed": seed,
                "n_terms": n_terms, "max_frequency": max_frequency}
        return cls(amp, freq, phase, "sin", spec)


@dataclass(frozen=True)
class NoiseBounds:
    """Sup-norm bounds of process noise, measurement noise and its rate.

    Reporting metadata only; no estimator or controller reads these.
    """

    omega_b: float = 0.0
    nu_b: float = 0.0
    nu_d: float = 0.0

    def __post_init__(self):
        if min(self.omega_b, self.nu_b, self.nu_d) < 0:
            raise ValueError("noise bounds must be nonnegative")


def _as_matrix(x, rows=None, cols=None, name="matrix") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(rows or 0, cols or 0)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PlantModel:
    """``dx/dt = A x + sum_i B_i u_i + w(t)``, ``y_i = C_i x + v_i(t)``."""

    A: np.ndarray
    inputs: tuple
    outputs: tuple
    process_noise: NoiseSignal | None = None
    measurement_noise: tuple | None = None

    def __post_init__(self):
        a = _as_matrix(self.A, name="A")
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got shape {a.shape}")
        n = a.shape[0]
        outs = tuple(_as_matrix(c, cols=n, name=f"C[{i}]") for i, c in enumerate(self.outputs))
        n_nodes = len(outs)
        if n_nodes == 0:
            raise ValueError("plant needs at least one output channel")
        ins = self.inputs
        if ins is None or len(ins) == 0:
            ins = tuple(np.zeros((n, 0)) for _ in range(n_nodes))
        ins = tuple(_as_matrix(b, rows=n, name=f"B[{i}]") for i, b in enumerate(ins))
        if len(ins) != n_nodes:
            raise ValueError(f"got {len(ins)} input matrices for {n_nodes} output matrices")
        for i, b in enumerate(ins):
            if b.shape[0] != n:
                raise ValueError(f"B[{i}] has {b.shape[0]} rows, expected {n}")
        for i, c in enumerate(outs):
            if c.shape[1] != n:
                raise ValueError(f"C[{i}] has {c.shape[1]} columns, expected {n}")
        if self.process_noise is not None and self.process_noise.dim != n:
            raise ValueError(f"process noise has dimension {self.process_noise.dim}, expected {n}")
        meas = self.measurement_noise
        if meas is not None:
            meas = tuple(meas)
            if len(meas) != n_nodes:
                raise ValueError(f"need {n_nodes} measurement-noise entries, got {len(meas)}")
            for i, (sig, c) in enumerate(zip(meas, outs)):
                if sig is not None and sig.dim != c.shape[0]:
                    raise ValueError(f"measurement noise {i} has dimension {sig.dim}, expected {c.shape[0]}")
            if all(sig is None for sig in meas):
                meas = None
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "inputs", ins)
        object.__setattr__(self, "outputs", outs)
        object.__setattr__(self, "measurement_noise", meas)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_nodes(self) -> int:
        return len(self.outputs)

    @property
    def input_dims(self) -> list[int]:
        return [b.shape[1] for b in self.inputs]

    @property
    def output_dims(self) -> list[int]:
        return [c.shape[0] for c in self.outputs]

    @property
    def output_offsets(self) -> np.ndarray:
        """Start index of ``y_j`` inside the stacked output, plus the total."""
        return np.concatenate([[0], np.cumsum(self.output_dims)]).astype(int)

    @property
    def B_stacked(self) -> np.ndarray:
        return np.hstack(self.inputs)

    @property
    def C_stacked(self) -> np.ndarray:
        return np.vstack(self.outputs)

    @property
    def noisy(self) -> bool:
        return self.process_noise is not None or self.measurement_noise is not None

    def without_noise(self) -> "PlantModel":
        return PlantModel(self.A, self.inputs, self.outputs)

    def omega(self, t: float) -> np.ndarray:
        if self.process_noise is None:
            return np.zeros(self.n)
        return self.process_noise(t)

    def nu(self, i: int, t: float) -> np.ndarray:
        if self.measurement_noise is None or self.measurement_noise[i] is None:
            return np.zeros(self.output_dims[i])
        return self.measurement_noise[i](t)

    def nu_stacked(self, t: float) -> np.ndarray:
        if self.measurement_noise is None:
            return np.zeros(int(self.output_offsets[-1]))
        return np.concatenate([self.nu(i, t) for i in range(self.n_nodes)])

    def noise_bounds(self) -> NoiseBounds:
        omega_b = self.process_noise.sup_bound() if self.process_noise is not None else 0.0
        nu_b = nu_d = 0.0
        if self.measurement_noise is not None:
            sigs = [s for s in self.measurement_noise if s is not None]
            nu_b = float(np.sqrt(sum(s.sup_bound() ** 2 for s in sigs)))
            nu_d = float(np.sqrt(sum(s.derivative_bound() ** 2 for s in sigs)))
        return NoiseBounds(omega_b, nu_b, nu_d)


def plant_derivative(model: PlantModel, x: np.ndarray, u: Sequence[np.ndarray], t: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({model.n},)")
    if len(u) != model.n_nodes:
        raise ValueError(f"expected {model.n_nodes} input vectors, got {len(u)}")
    dx = model.A @ x
    for i, (b, ui) in enumerate(zip(model.inputs, u)):
        ui = np.asarray(ui, dtype=float).reshape(-1)
        if ui.shape[0] != b.shape[1]:
            raise ValueError(f"u[{i}] has length {ui.shape[0]}, expected {b.shape[1]}")
        if b.shape[1]:
            dx = dx + b @ ui
    return dx + model.omega(t)


def measure(model: PlantModel, x: np.ndarray, i: int, t: float) -> np.ndarray:
    if not 0 <= i < model.n_nodes:
        raise IndexError(f"node {i} out of range for {model.n_nodes} nodes")
    return model.outputs[i] @ np.asarray(x, dtype=float) + model.nu(i, t)
