"""Client for the out-of-process teacher bridge.

The bridge is any executable speaking newline-delimited JSON on its
standard streams: it emits one metadata line on startup
({"tool", "model", "output_space"}), then answers requests
{"id", "rgb", "width", "height"} with {"id", "status", "disparity", "msg"},
where "disparity" is the path of a PFM it wrote. Responses may arrive out
of order; "id" is the only correlation.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from pathlib import Path

import numpy as np

from .dataio import read_pfm, save_rgb8
from .errors import BridgeError


class BridgeTeacher:
    """TeacherBackend served by a subprocess over stdio JSONL."""

    output_space = "inverse_depth_relative"

    def __init__(self, command: str, timeout: float = 120.0):
        self._timeout = timeout
        self._pending: dict[str, dict] = {}
        self._counter = 0
        self._tmp = tempfile.TemporaryDirectory(prefix="pano360-bridge-")
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise BridgeError(f"cannot start bridge {command!r}: {e}") from e
        meta = self._read_line()
        if meta.get("output_space") != self.output_space:
            raise BridgeError(f"bridge metadata malformed or missing: {meta}")
        self.metadata = meta
        self.name = str(meta.get("model", "bridge"))

    def _read_line(self) -> dict:
        line = self._proc.stdout.readline()
        if not line:
            code = self._proc.poll()
            raise BridgeError(f"bridge closed its output (exit code {code})")
        try:
            return json.loads(line)
        except json.JSONDecodeError as e:
            raise BridgeError(f"bridge sent invalid JSON: {line!r}") from e

    def infer(self, rgb: np.ndarray, rays=None, seed=None) -> np.ndarray:
        rgb = np.asarray(rgb)
        req_id = f"q{self._counter}"
        self._counter += 1
        png = Path(self._tmp.name) / f"{req_id}.png"
        save_rgb8(png, rgb)
        req = {
            "id": req_id,
            "rgb": str(png),
            "width": int(rgb.shape[1]),
            "height": int(rgb.shape[0]),
        }
        if self._proc.poll() is not None:
            raise BridgeError("bridge process has exited")
        try:
            self._proc.stdin.write(json.dumps(req) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise BridgeError(f"bridge pipe broken: {e}") from e
        resp = self._await(req_id)
        if resp.get("status") != "ok":
            raise BridgeError(f"bridge error for {req_id}: {resp.get('msg')}")
        out = read_pfm(resp["disparity"]).astype(np.float64)
        if out.shape != rgb.shape[:2]:
            raise BridgeError(f"bridge returned {out.shape} for {rgb.shape[:2]} input")
        return out

    def _await(self, req_id: str) -> dict:
        # out-of-order tolerant: park unrelated responses until asked for
        if req_id in self._pending:
            return self._pending.pop(req_id)
        while True:
            resp = self._read_line()
            rid = resp.get("id")
            if rid == req_id:
                return resp
            if rid is not None:
                self._pending[rid] = resp

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=10)
            except Exception:
                self._proc.kill()
        self._tmp.cleanup()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
