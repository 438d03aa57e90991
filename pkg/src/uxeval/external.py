"""Subprocess model oracle speaking newline-delimited JSON.

Protocol: one request object ``{"id": k, "x": [...]}`` per line on the
child's stdin, one response ``{"id": k, "y": [...]}`` per line on its
stdout, exactly one request in flight at a time. Any malformed line, id
mismatch, or class-count change is a protocol error; a missing response
within the timeout is a timeout error. The oracle serializes access
internally, so callers may share it across workers.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading

import numpy as np

from .errors import DimensionMismatch, OracleProtocol, OracleTimeout


class ExternalOracle:
    def __init__(self, command, timeout: float = 10.0, n_classes: int | None = None,
                 n_features: int | None = None):
        self.command = list(command)
        self.timeout = float(timeout)
        self.n_classes = n_classes
        self.n_features = n_features
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._next_id = 0
        self._broken: str | None = None

    # -- lifecycle ------------------------------------------------------

    def start(self) -> None:
        if self._proc is not None:
            return
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        reader = threading.Thread(target=self._read_loop, daemon=True)
        reader.start()

    def _read_loop(self) -> None:
        assert self._proc is not None and self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def close(self) -> None:
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.terminate()
            proc.wait(timeout=2.0)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()

    def __enter__(self) -> "ExternalOracle":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        self.close()

    # -- queries ----------------------------------------------------------

    def _query(self, x: np.ndarray) -> np.ndarray:
        if self._broken:
            raise OracleProtocol(f"oracle disabled after earlier failure: {self._broken}")
        self.start()
        assert self._proc is not None and self._proc.stdin is not None
        request_id = self._next_id
        self._next_id += 1
        try:
            self._proc.stdin.write(json.dumps({"id": request_id, "x": x.tolist()}) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            self._fail(OracleProtocol(f"could not write request: {exc}"))
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self._fail(OracleTimeout(f"no response within {self.timeout} s"))
        if line is None:
            self._fail(OracleProtocol("oracle closed its stdout"))
        try:
            response = json.loads(line)
        except json.JSONDecodeError:
            self._fail(OracleProtocol(f"malformed response line: {line!r}"))
        if not isinstance(response, dict) or "id" not in response or "y" not in response:
            self._fail(OracleProtocol(f"response missing id/y: {line!r}"))
        if response["id"] != request_id:
            self._fail(OracleProtocol(f"response id {response['id']} != request id {request_id}"))
        y = np.asarray(response["y"], dtype=np.float64)
        if y.ndim != 1:
            self._fail(OracleProtocol("response y is not a flat list"))
        if self.n_classes is None:
            self.n_classes = int(y.shape[0])
        elif y.shape[0] != self.n_classes:
            self._fail(OracleProtocol(f"expected {self.n_classes} classes, got {y.shape[0]}"))
        if not np.isfinite(y).all():
            self._fail(OracleProtocol("response contains non-finite values"))
        return y

    def _fail(self, error) -> None:
        self._broken = str(error)
        self.close()
        raise error

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise DimensionMismatch(f"oracle expects {self.n_features} features, got {X.shape[1]}")
        with self._lock:  # one in-flight request at a time
            rows = [self._query(x) for x in X]
        return np.stack(rows)


def query_external(oracle: ExternalOracle, batch) -> np.ndarray:
    """Batch prediction through an external oracle; same contract as predict."""
    from .oracle import predict

    return predict(oracle, batch)
