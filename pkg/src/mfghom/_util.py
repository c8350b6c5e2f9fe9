"""Shared helpers: probability hygiene, mixed-radix codes, parallel map, writers."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Entries of a probability object may undershoot zero by at most this much
# before we call it a real error rather than roundoff.
NEG_TOL = -1e-14


class CapExceeded(Exception):
    """A computation refused to start because it would blow a resource cap.

    Carries ``required_cap`` so callers can tell the user what setting would
    let the computation proceed.
    """

    def __init__(self, message, required_cap=None):
        super().__init__(message)
        self.required_cap = required_cap


def clean_distribution(arr, tol, what, exc=ValueError):
    """Validate and tidy probability vectors along the last axis.

    Entries below ``NEG_TOL`` or row sums off by more than ``tol`` raise
    ``exc``; tiny negatives are clipped and rows renormalized exactly once.
    Returns a float64 copy.
    """
    out = np.array(arr, dtype=np.float64)
    if out.size and np.min(out) < NEG_TOL:
        raise exc(f"{what}: negative probability entry {np.min(out):.3e}")
    np.clip(out, 0.0, None, out=out)
    sums = out.sum(axis=-1)
    if out.size and np.max(np.abs(sums - 1.0)) > tol:
        worst = np.max(np.abs(sums - 1.0))
        raise exc(f"{what}: row mass off by {worst:.3e} (tolerance {tol:.1e})")
    out /= sums[..., None]
    return out


def decode_codes(codes, base, width):
    """Mixed-radix decode: integer codes -> digit arrays of shape (..., width).

    Digit 0 is the least significant (player 0)."""
    codes = np.asarray(codes)
    digits = np.empty(codes.shape + (width,), dtype=np.int64)
    rem = codes
    for i in range(width):
        digits[..., i] = rem % base
        rem = rem // base
    return digits


def encode_digits(digits, base):
    """Inverse of :func:`decode_codes`."""
    digits = np.asarray(digits)
    width = digits.shape[-1]
    codes = np.zeros(digits.shape[:-1], dtype=np.int64)
    mult = 1
    for i in range(width):
        codes += digits[..., i] * mult
        mult *= base
    return codes


def parallel_map(fn, items, threads):
    """Order-preserving map, optionally on a thread pool.

    Results are identical for every thread count; threads only change wall
    time.  ``threads <= 1`` runs inline.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def dump_json(obj, path):
    """Deterministic JSON writer (sorted keys, fixed separators, newline)."""
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, separators=(",", ": "))
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def jsonable(x):
    """Recursively convert numpy scalars/arrays to plain Python types."""
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x
