"""Model evaluation: builtin analytic models and an external process client.

Every model maps an ``(m, d)`` array of input points to ``m`` outputs.

External wire protocol (one JSON object per line over the child's stdin and
stdout)::

    request:  {"points": [[x11, ..., x1d], ..., [xm1, ..., xmd]]}
    response: {"values": [y1, ..., ym]}

Batches are sent one at a time and answered in order.  See
:mod:`canonical_ouq.echo_model` for a reference wrapper.
"""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, ModelEvaluationError, ModelTimeout, ProcessExit, ProtocolError

log = logging.getLogger(__name__)


def hydraulic_eval(q, ks, zv, zm):
    """River height ``H = (Q / (300 Ks sqrt((Zm - Zv) / 5000)))**0.6``.

    Works elementwise on arrays.
    """
    q, ks, zv, zm = (np.asarray(a, dtype=float) for a in (q, ks, zv, zm))
    if np.any(q <= 0) or np.any(ks <= 0):
        raise DomainError("hydraulic model needs Q > 0 and Ks > 0")
    if np.any(zm <= zv):
        raise DomainError("hydraulic model needs Zm > Zv")
    h = (q / (300.0 * ks * np.sqrt((zm - zv) / 5000.0))) ** 0.6
    return h if h.ndim else float(h)


def builtin_linear(x):
    """First coordinate of ``x``."""
    x = np.asarray(x, dtype=float)
    return x[..., 0] if x.ndim else float(x)


class Model:
    """Base class: ``evaluate(points) -> values`` on an ``(m, d)`` array."""

    dimension: int
    units: str = ""
    reentrant: bool = True

    def evaluate(self, points) -> np.ndarray:
        raise NotImplementedError

    def _check(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.dimension) if self.dimension > 1 else pts[:, None]
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ModelEvaluationError(f"expected points of shape (m, {self.dimension}), got {pts.shape}")
        return pts

    def __call__(self, x) -> float:
        return float(self.evaluate(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class BuiltinModel(Model):
    name: str
    dimension: int
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    units: str = ""

    def evaluate(self, points) -> np.ndarray:
        pts = self._check(points)
        try:
            out = np.asarray(self.func(pts), dtype=float)
        except (DomainError, ModelEvaluationError):
            raise
        except Exception as exc:
            raise ModelEvaluationError(f"{self.name}: {exc}") from exc
        if out.shape != (pts.shape[0],):
            raise ModelEvaluationError(f"{self.name}: returned shape {out.shape}")
        return out


def _hydraulic_points(pts):
    return hydraulic_eval(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3])


def builtin_model(name: str, dimension: int | None = None) -> BuiltinModel:
    """Builtin models by name: ``hydraulic`` (d=4), ``linear`` and ``square`` (any d)."""
    if name == "hydraulic":
        if dimension not in (None, 4):
            raise ConfigError(f"hydraulic model has dimension 4, not {dimension}")
        return BuiltinModel("hydraulic", 4, _hydraulic_points, units="m")
    if name == "linear":
        return BuiltinModel("linear", dimension or 1, builtin_linear)
    if name == "square":
        return BuiltinModel("square", dimension or 1, lambda p: p[:, 0] ** 2)
    raise ConfigError(f"unknown builtin model {name!r}")


@dataclass(frozen=True)
class ExternalModelConfig:
    command: Sequence[str]
    cwd: str | None = None
    batch_size: int = 1024
    timeout: float = 60.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.command:
            raise ConfigError("external model command is empty")


class ExternalModel(Model):
    """Black-box model living in a child process.

    One process per instance, started lazily.  Requests are serialized by a
    lock, so concurrent callers simply queue their batches.  Results are cached
    by the exact bytes of each point.
    """

    reentrant = False

    def __init__(self, config: ExternalModelConfig, dimension: int, units: str = "", cache_size: int = 200_000):
        self.config = config
        self.dimension = dimension
        self.units = units
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._cache: OrderedDict[bytes, float] = OrderedDict()
        self._cache_size = cache_size
        self.batches_sent = 0

    def _start(self):
        log.debug("starting external model %s", self.config.command)
        try:
            self._proc = subprocess.Popen(
                list(self.config.command),
                cwd=self.config.cwd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProcessExit(f"cannot start external model: {exc}") from exc
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()

    @staticmethod
    def _pump(stream, lines):
        for line in stream:
            lines.put(line)
        lines.put(None)

    def _roundtrip(self, batch: np.ndarray) -> np.ndarray:
        if self._proc is None or self._proc.poll() is not None:
            self._start()
        request = json.dumps({"points": batch.tolist()}) + "\n"
        try:
            self._proc.stdin.write(request)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProcessExit(f"external model closed its input: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.config.timeout)
        except queue.Empty:
            self._kill()
            raise ModelTimeout(f"no response within {self.config.timeout} s") from None
        if line is None:
            code = self._proc.wait()
            self._proc = None
            raise ProcessExit(f"external model exited with code {code}")
        self.batches_sent += 1
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed response: {line[:200]!r}") from exc
        if not isinstance(msg, dict) or "values" not in msg:
            raise ProtocolError("response lacks a 'values' field")
        values = msg["values"]
        if not isinstance(values, list) or len(values) != len(batch):
            got = len(values) if isinstance(values, list) else type(values).__name__
            raise ProtocolError(f"expected {len(batch)} values, got {got}")
        try:
            return np.array([float(v) for v in values])
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"non-numeric value in response: {exc}") from exc

    def evaluate(self, points) -> np.ndarray:
        pts = np.ascontiguousarray(self._check(points))
        keys = [row.tobytes() for row in pts]
        out = np.empty(len(pts))
        with self._lock:
            missing = []
            for i, key in enumerate(keys):
                hit = self._cache.get(key)
                if hit is None:
                    missing.append(i)
                else:
                    out[i] = hit
            # distinct points only; duplicates inside one call share a slot
            todo: dict[bytes, list[int]] = {}
            for i in missing:
                todo.setdefault(keys[i], []).append(i)
            uniq = list(todo)
            rows = np.array([pts[todo[k][0]] for k in uniq]).reshape(-1, self.dimension)
            size = self.config.batch_size
            for start in range(0, len(uniq), size):
                vals = self._roundtrip(rows[start : start + size])
                for key, v in zip(uniq[start : start + size], vals):
                    for i in todo[key]:
                        out[i] = v
                    self._cache[key] = v
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return out

    def handshake(self, point) -> float:
        """Evaluate one point, bypassing the cache."""
        with self._lock:
            return float(self._roundtrip(np.atleast_2d(np.asarray(point, dtype=float)))[0])

    def _kill(self):
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()
            self._proc = None

    def __del__(self):
        try:
            self._kill()
        except Exception:
            pass


def external_batch_eval(config: ExternalModelConfig, points) -> list[float]:
    """One-shot evaluation of ``points`` through a fresh external process."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or not len(pts):
        raise ValueError("points must be a non-empty list of d-vectors")
    with ExternalModel(config, pts.shape[1]) as model:
        return model.evaluate(pts).tolist()
