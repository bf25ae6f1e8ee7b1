"""External black-box objectives speaking a one-line request/response protocol.

For every evaluation the command receives one UTF-8 line
``name=value name=value ...`` on stdin and answers with one line holding a
single real number. In one-shot mode a fresh process is spawned per
evaluation; in persistent mode one process serves all requests in order.
"""

from __future__ import annotations

import logging
import math
import queue
import subprocess
import threading
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DFOTRConfigError, ExternalObjectiveError, ExternalTimeoutError

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600.0
TERMINATE_GRACE_SECONDS = 2.0


@dataclass(frozen=True)
class ParameterSpec:
    """One tunable parameter: name, box and whether it is searched in log10."""

    name: str
    lo: float
    hi: float
    log: bool = False

    def __post_init__(self):
        if not self.name or any(c.isspace() or c == "=" for c in self.name):
            raise DFOTRConfigError(f"invalid parameter name {self.name!r}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise DFOTRConfigError(
                f"parameter {self.name}: need finite lo < hi, got [{self.lo}, {self.hi}]"
            )
        if self.log and self.lo <= 0:
            raise DFOTRConfigError(
                f"parameter {self.name}: log scale needs a positive lower bound"
            )

    @classmethod
    def parse(cls, text: str) -> ParameterSpec:
        """Parse ``name:lo:hi`` or ``name:lo:hi:log``."""
        parts = text.split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
            raise DFOTRConfigError(f"parameter must be name:lo:hi[:log], got {text!r}")
        try:
            lo, hi = float(parts[1]), float(parts[2])
        except ValueError as e:
            raise DFOTRConfigError(f"non-numeric bound in {text!r}") from e
        return cls(name=parts[0], lo=lo, hi=hi, log=len(parts) == 4)

    @property
    def internal_bounds(self) -> tuple[float, float]:
        if self.log:
            return math.log10(self.lo), math.log10(self.hi)
        return self.lo, self.hi

    def to_external(self, u: float) -> float:
        lo, hi = self.internal_bounds
        u = min(max(u, lo), hi)
        value = 10.0**u if self.log else u
        return min(max(value, self.lo), self.hi)

    def to_internal(self, value: float) -> float:
        return math.log10(value) if self.log else value


class ParameterSpace:
    """Ordered parameters; maps optimizer coordinates to command arguments.

    The optimizer works in internal coordinates (log10 for log-scaled
    parameters). Candidates outside the box are clipped before dispatch.
    """

    def __init__(self, params: Sequence[ParameterSpec]):
        if not params:
            raise DFOTRConfigError("parameter space must not be empty")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise DFOTRConfigError(f"duplicate parameter names in {names}")
        self.params = tuple(params)

    @classmethod
    def parse(cls, texts: Sequence[str]) -> ParameterSpace:
        return cls([ParameterSpec.parse(t) for t in texts])

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def internal_box(self) -> list[tuple[float, float]]:
        return [p.internal_bounds for p in self.params]

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (lo + hi) for lo, hi in self.internal_box])

    def to_external(self, u: np.ndarray) -> dict[str, float]:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.dim:
            raise DFOTRConfigError(f"expected {self.dim} coordinates, got {u.size}")
        return {p.name: p.to_external(float(x)) for p, x in zip(self.params, u, strict=True)}

    def to_internal(self, values: Mapping[str, float]) -> np.ndarray:
        return np.array([p.to_internal(float(values[p.name])) for p in self.params])

    def format_request(self, values: Mapping[str, float]) -> str:
        return " ".join(f"{name}={values[name]!r}" for name in self.names)


def parse_response(text: str) -> float:
    """Read the single real number of a response line."""
    tokens = text.strip().split()
    if len(tokens) != 1:
        raise ExternalObjectiveError(f"expected one number in response, got {text.strip()!r}")
    try:
        value = float(tokens[0])
    except ValueError:
        raise ExternalObjectiveError(f"non-numeric response {tokens[0]!r}") from None
    if not math.isfinite(value):
        raise ExternalObjectiveError(f"non-finite response {tokens[0]!r}")
    return value


class ExternalObjective:
    """Objective evaluated by an external command.

    Returns the command's raw response (e.g. validation accuracy); wrap in
    :class:`dfo_tr.core.Negated` to maximize it.
    """

    supports_subsampling = False

    def __init__(
        self,
        command: Sequence[str],
        space: ParameterSpace,
        timeout: float = DEFAULT_TIMEOUT,
        persistent: bool = False,
    ):
        if not command:
            raise DFOTRConfigError("external command must not be empty")
        if not timeout > 0:
            raise DFOTRConfigError(f"timeout must be positive, got {timeout}")
        self.command = list(command)
        self.space = space
        self.timeout = timeout
        self.persistent = persistent
        self.evaluations: list[tuple[dict[str, float], float]] = []
        self._proc: subprocess.Popen[str] | None = None
        self._stdout_queue: queue.Queue[tuple[str, str | None]] = queue.Queue()
        self._stderr_tail: deque[str] = deque(maxlen=50)

    @property
    def dim(self) -> int:
        return self.space.dim

    def evaluate(self, w: np.ndarray) -> float:
        params = self.space.to_external(w)
        request = self.space.format_request(params)
        logger.debug("External request: %s", request)
        line = self._ask_persistent(request) if self.persistent else self._ask_once(request)
        value = parse_response(line)
        self.evaluations.append((params, value))
        return value

    def _ask_once(self, request: str) -> str:
        try:
            completed = subprocess.run(
                self.command,
                input=request + "\n",
                capture_output=True,
                text=True,
                encoding="utf-8",
                timeout=self.timeout,
                check=False,
            )
        except subprocess.TimeoutExpired as e:
            logger.error("External command timed out after %ss", self.timeout)
            raise ExternalTimeoutError(
                f"external command timed out after {self.timeout}s"
            ) from e
        except OSError as e:
            raise ExternalObjectiveError(f"failed to start {self.command!r}: {e}") from e
        if completed.returncode != 0:
            logger.error("External command exited with code %d", completed.returncode)
            raise ExternalObjectiveError(
                f"external command exited with code {completed.returncode}: "
                f"{completed.stderr.strip()}"
            )
        lines = [ln for ln in completed.stdout.splitlines() if ln.strip()]
        if not lines:
            raise ExternalObjectiveError(
                f"external command wrote no response; stderr: {completed.stderr.strip()}"
            )
        return lines[0]

    # Persistent mode

    def _drain_stdout(self, proc: subprocess.Popen[str]) -> None:
        try:
            for line in proc.stdout:  # type: ignore[union-attr]
                self._stdout_queue.put(("line", line))
        except (OSError, ValueError) as e:
            self._stdout_queue.put(("error", str(e)))
        finally:
            self._stdout_queue.put(("eof", None))

    def _drain_stderr(self, proc: subprocess.Popen[str]) -> None:
        try:
            for line in proc.stderr:  # type: ignore[union-attr]
                self._stderr_tail.append(line.rstrip("\n"))
        except (OSError, ValueError):
            pass

    def _start(self) -> subprocess.Popen[str]:
        try:
            proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise ExternalObjectiveError(f"failed to start {self.command!r}: {e}") from e
        self._stdout_queue = queue.Queue()
        self._stderr_tail.clear()
        threading.Thread(target=self._drain_stdout, args=(proc,), daemon=True).start()
        threading.Thread(target=self._drain_stderr, args=(proc,), daemon=True).start()
        logger.info("Started persistent black-box process pid=%d", proc.pid)
        return proc

    def _stderr_text(self) -> str:
        return "\n".join(self._stderr_tail)

    def _ask_persistent(self, request: str) -> str:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = self._start()
        proc = self._proc
        try:
            proc.stdin.write(request + "\n")  # type: ignore[union-attr]
            proc.stdin.flush()  # type: ignore[union-attr]
        except (BrokenPipeError, OSError) as e:
            self._fail(proc)
            raise ExternalObjectiveError(
                f"external process closed its input: {self._stderr_text()}"
            ) from e

        while True:
            try:
                kind, payload = self._stdout_queue.get(timeout=self.timeout)
            except queue.Empty:
                self.close()
                logger.error("Persistent black-box timed out after %ss", self.timeout)
                raise ExternalTimeoutError(
                    f"external process timed out after {self.timeout}s"
                ) from None
            if kind == "line" and payload and payload.strip():
                return payload
            if kind == "line":
                continue
            code = self._fail(proc)
            logger.error("Persistent black-box exited (code %s)", code)
            raise ExternalObjectiveError(
                f"external process exited with code {code} before responding: "
                f"{self._stderr_text()}"
            )

    def _fail(self, proc: subprocess.Popen[str]) -> int | None:
        try:
            code = proc.wait(timeout=TERMINATE_GRACE_SECONDS)
        except subprocess.TimeoutExpired:
            proc.kill()
            code = proc.wait()
        self._proc = None
        return code

    def close(self) -> None:
        """Stop the persistent process, if any."""
        proc, self._proc = self._proc, None
        if proc is None:
            return
        if proc.stdin:
            try:
                proc.stdin.close()
            except OSError:
                pass
        if proc.poll() is None:
            proc.terminate()
            try:
                proc.wait(timeout=TERMINATE_GRACE_SECONDS)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()

    def __enter__(self) -> ExternalObjective:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


__all__ = [
    "DEFAULT_TIMEOUT",
    "ExternalObjective",
    "ParameterSpace",
    "ParameterSpec",
    "parse_response",
]
