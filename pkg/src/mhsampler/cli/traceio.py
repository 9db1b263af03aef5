"""Trace CSV reading and writing.

Header: ``iter,<coordinates...>,log_target,accepted`` followed, for block
samplers, by one ``accepted.<block>`` column per block. Reals are written
with 17 significant digits so a round trip is exact.
"""
from __future__ import annotations

import csv
import math

import numpy as np

from ..diagnostics import Trace


class TraceFormatError(ValueError):
    def __init__(self, message: str, row=None, path=None):
        self.row = row
        where = f"{path}" if path else "trace"
        if row is not None:
            where += f": row {row}"
        super().__init__(f"{where}: {message}")


def fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_trace(path, trace: Trace, start_iter: int = 1) -> None:
    header = ["iter", *trace.coord_names, "log_target", "accepted"]
    if trace.block_flags is not None:
        header += [f"accepted.{b}" for b in trace.block_names]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(len(trace)):
            row = [str(start_iter + t)]
            row += [fmt(v) for v in trace.positions[t].tolist()]
            row.append(fmt(float(trace.log_targets[t])))
            row.append("1" if trace.accept_flags[t] else "0")
            if trace.block_flags is not None:
                row += ["1" if f else "0" for f in trace.block_flags[t]]
            fh.write(",".join(row) + "\n")


def read_trace(path) -> Trace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TraceFormatError("empty file", None, path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 4 or header[0] != "iter":
        raise TraceFormatError("header must start with 'iter' and hold log_target and accepted", 1, path)
    try:
        i_log = header.index("log_target")
    except ValueError:
        raise TraceFormatError("missing log_target column", 1, path) from None
    if i_log + 1 >= len(header) or header[i_log + 1] != "accepted":
        raise TraceFormatError("'accepted' must follow 'log_target'", 1, path)
    coords = tuple(header[1:i_log])
    if not coords:
        raise TraceFormatError("no coordinate columns", 1, path)
    block_cols = header[i_log + 2:]
    if any(not b.startswith("accepted.") for b in block_cols):
        raise TraceFormatError("unexpected columns after 'accepted'", 1, path)
    blocks = tuple(b[len("accepted."):] for b in block_cols)
    body = rows[1:]
    if not body:
        raise TraceFormatError("no data rows", None, path)
    d = len(coords)
    pos = np.empty((len(body), d))
    logs = np.empty(len(body))
    acc = np.empty(len(body), dtype=bool)
    bflags = np.empty((len(body), len(blocks)), dtype=bool) if blocks else None
    for k, row in enumerate(body):
        rowno = k + 2
        if len(row) != len(header):
            raise TraceFormatError(f"expected {len(header)} fields, found {len(row)}", rowno, path)
        try:
            int(row[0])
            pos[k] = [float(v) for v in row[1:i_log]]
            logs[k] = float(row[i_log])
            flags = [_flag(v) for v in row[i_log + 1:]]
        except ValueError as exc:
            raise TraceFormatError(str(exc), rowno, path) from None
        if any(math.isnan(v) for v in pos[k]):
            raise TraceFormatError("NaN position", rowno, path)
        acc[k] = flags[0]
        if bflags is not None:
            bflags[k] = flags[1:]
    return Trace(pos, acc, logs, "", None, coords, bflags, blocks)


def _flag(v: str) -> bool:
    if v == "1":
        return True
    if v == "0":
        return False
    raise ValueError(f"accept flag must be 0 or 1, got {v!r}")
