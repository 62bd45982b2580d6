"""Byte protocol for running the prior denoiser in another process.

Request (client to server), little-endian::

    b"DNRQ" | u32 ndim | u32 dims[ndim] | f64 sigma_t | float32 image[prod(dims)]

Response::

    b"DNRS" | u32 ndim | u32 dims[ndim] | float32 image[prod(dims)]

The response shape must equal the request shape. The server reads requests
from stdin and answers on stdout until end of input. Images travel in model
units (the ``[-1, 1]`` range of the scale map).
"""

from __future__ import annotations

import argparse
import shlex
import struct
import subprocess
import sys

import numpy as np

from .ddrm import DenoiserError, PriorDenoiser, reference_denoisers

REQ, RESP = b"DNRQ", b"DNRS"


def _read_exact(stream, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            break
        buf += chunk
    return buf


def encode_request(image, sigma: float) -> bytes:
    a = np.ascontiguousarray(image, dtype="<f4")
    return (REQ + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
            + struct.pack("<d", float(sigma)) + a.tobytes())


def encode_response(image) -> bytes:
    a = np.ascontiguousarray(image, dtype="<f4")
    return RESP + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape) + a.tobytes()


def _read_header(stream, magic: bytes):
    head = _read_exact(stream, 8)
    if not head:
        return None
    if len(head) < 8 or head[:4] != magic:
        raise DenoiserError(f"protocol error: expected {magic!r} header")
    (ndim,) = struct.unpack("<I", head[4:])
    if ndim > 8:
        raise DenoiserError(f"protocol error: ndim {ndim} too large")
    raw = _read_exact(stream, 4 * ndim)
    if len(raw) < 4 * ndim:
        raise DenoiserError("protocol error: truncated shape")
    return struct.unpack(f"<{ndim}I", raw)


def _read_array(stream, dims):
    n = int(np.prod(dims, dtype=np.int64)) * 4
    raw = _read_exact(stream, n)
    if len(raw) < n:
        raise DenoiserError("protocol error: truncated image")
    return np.frombuffer(raw, dtype="<f4").reshape(dims)


def read_request(stream):
    """``(image, sigma)`` or ``None`` at end of input."""
    dims = _read_header(stream, REQ)
    if dims is None:
        return None
    raw = _read_exact(stream, 8)
    if len(raw) < 8:
        raise DenoiserError("protocol error: truncated sigma")
    (sigma,) = struct.unpack("<d", raw)
    return _read_array(stream, dims), sigma


def read_response(stream):
    dims = _read_header(stream, RESP)
    if dims is None:
        raise DenoiserError("denoiser process closed its output")
    return _read_array(stream, dims)


class SubprocessDenoiser(PriorDenoiser):
    """Client side: keeps one server process alive and sends one image per call.

    Data crosses the pipe as float32, so results are rounded to single precision.
    """

    def __init__(self, command):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = None

    def _ensure(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(self.command, stdin=subprocess.PIPE,
                                          stdout=subprocess.PIPE)
        return self._proc

    def predict_x0(self, x_t, sigma_t):
        x = np.asarray(x_t, dtype=np.float64)
        p = self._ensure()
        try:
            p.stdin.write(encode_request(x, sigma_t))
            p.stdin.flush()
            out = read_response(p.stdout)
        except (BrokenPipeError, OSError) as exc:
            raise DenoiserError(f"denoiser process failed: {exc}") from exc
        if out.shape != x.shape:
            raise DenoiserError(f"denoiser returned shape {out.shape}, expected {x.shape}")
        return out.astype(np.float64)

    def close(self):
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
            self._proc = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def serve(denoiser: PriorDenoiser, stdin=None, stdout=None) -> int:
    """Answer requests until end of input; returns the number served."""
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    count = 0
    while True:
        req = read_request(stdin)
        if req is None:
            return count
        img, sigma = req
        out = np.asarray(denoiser.predict_x0(img.astype(np.float64), sigma))
        stdout.write(encode_response(out.reshape(img.shape)))
        stdout.flush()
        count += 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="reference denoiser server over stdin/stdout")
    ap.add_argument("--prior", choices=("gaussian", "soft", "identity"), default="gaussian")
    ap.add_argument("--variance", type=float, default=1.0)
    ap.add_argument("--kappa", type=float, default=1.0)
    args = ap.parse_args(argv)
    serve(reference_denoisers(args.variance, args.kappa)[args.prior])
    return 0


if __name__ == "__main__":
    sys.exit(main())
