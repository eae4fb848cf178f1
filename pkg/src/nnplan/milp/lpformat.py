"""CPLEX-style LP file export and an external-solver bridge.

Layout of an exported file::

    \\ nnplan LP export
    \\ model: <name>
    Maximize                       (or Minimize)
     obj: + 3 x - 0.5 y + 1.5      (trailing constant only if non-zero)
    Subject To
     c0: + 1 x + 1 y <= 1.5
    Bounds
     0 <= x <= 3
     y free
     z = 2
    Binaries
     b0 b1
    End

Variables and rows are written in id order, every number with 17
significant digits (``%.17g``) so the file is bit-exact for a model and
re-reading it recovers the same doubles.  Every variable gets an explicit
bounds line.  Names are sanitized to ``[A-Za-z0-9_.]`` and made unique.
Long lines wrap with a leading space.

Solution files read back by :func:`read_solution` are plain text::

    # comments start with '#'
    status optimal
    objective 12.5
    x 1
    y 0.5

``status`` is one of the solve statuses, and one ``name value`` line is given
per variable (names as written in the LP file).
"""

from __future__ import annotations

import math
import re
import shlex
import subprocess
import tempfile
import time
from pathlib import Path

import numpy as np

from nnplan.milp.model import BINARY, STATUSES, MilpModel, SolveResult, relative_gap

LINE_WIDTH = 200
_BAD = re.compile(r"[^A-Za-z0-9_.]")


class LPFormatError(ValueError):
    pass


def fmt(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    s = f"{v:.17g}"
    return "0" if s == "-0" else s


def lp_names(model: MilpModel) -> list[str]:
    names, seen = [], set()
    for i, v in enumerate(model.vars):
        base = _BAD.sub("_", v.name) or "v"
        if base[0].isdigit() or base[0] == "." or re.match(r"[eE]\d", base) or \
                base.lower() in ("free", "inf", "infinity"):
            base = "v_" + base
        name = base
        if name in seen:
            name = f"{base}_{i}"
        seen.add(name)
        names.append(name)
    return names


def _wrap(head: str, tokens: list[str]) -> list[str]:
    lines, cur = [], head
    for tok in tokens:
        if len(cur) + 1 + len(tok) > LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = "  " + tok
        else:
            cur = f"{cur} {tok}"
    lines.append(cur)
    return lines


def _terms(pairs, names) -> list[str]:
    toks = []
    for i, c in pairs:
        toks.append(f"{'-' if c < 0 else '+'} {fmt(abs(c))} {names[i]}")
    return toks


def lp_text(model: MilpModel) -> str:
    model.check()
    names = lp_names(model)
    out = ["\\ nnplan LP export", f"\\ model: {model.name}",
           "Maximize" if model.sense == "max" else "Minimize"]
    obj = _terms(sorted(model.objective.items()), names)
    if model.obj_constant != 0.0:
        c = model.obj_constant
        obj.append(f"{'-' if c < 0 else '+'} {fmt(abs(c))}")
    if not obj:
        obj = [f"+ 0 {names[0]}"] if names else []
    out += _wrap(" obj:", obj)
    out.append("Subject To")
    rel = {"<=": "<=", ">=": ">=", "==": "="}
    for r, con in enumerate(model.constraints):
        toks = _terms(zip(con.indices, con.coefs), names) or [f"0 {names[0]}"]
        toks += [rel[con.sense], fmt(con.rhs)]
        out += _wrap(f" r{r}:", toks)
    out.append("Bounds")
    for name, v in zip(names, model.vars):
        if v.lower == v.upper:
            out.append(f" {name} = {fmt(v.lower)}")
        elif v.lower == -math.inf and v.upper == math.inf:
            out.append(f" {name} free")
        else:
            out.append(f" {fmt(v.lower)} <= {name} <= {fmt(v.upper)}")
    bins = [names[i] for i, v in enumerate(model.vars) if v.kind == BINARY]
    if bins:
        out.append("Binaries")
        out += _wrap("", bins)
    out.append("End")
    return "\n".join(out) + "\n"


def export_lp(model: MilpModel, path: str | Path) -> None:
    Path(path).write_text(lp_text(model))


def read_solution(path: str | Path, model: MilpModel) -> SolveResult:
    names = lp_names(model)
    index = {n: i for i, n in enumerate(names)}
    status, objective = None, math.nan
    x = np.full(model.n_vars, math.nan)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise LPFormatError(f"{path}:{lineno}: expected 'key value', got {raw!r}")
        key, val = parts
        if key == "status":
            if val not in STATUSES:
                raise LPFormatError(f"{path}:{lineno}: unknown status {val!r}")
            status = val
        elif key == "objective":
            objective = float(val)
        elif key in index:
            x[index[key]] = float(val)
        else:
            raise LPFormatError(f"{path}:{lineno}: unknown variable {key!r}")
    if status is None:
        raise LPFormatError(f"{path}: missing status line")
    if status in ("infeasible", "unbounded"):
        return SolveResult(status)
    if np.isnan(x).any():
        missing = [names[i] for i in np.flatnonzero(np.isnan(x))[:5]]
        raise LPFormatError(f"{path}: no value for {missing}")
    if math.isnan(objective):
        objective = model.evaluate(x)
    return SolveResult(status, x, objective, objective, relative_gap(objective, objective))


def solve_external(model: MilpModel, command: str, workdir: str | Path | None = None,
                   timeout: float | None = None) -> SolveResult:
    """Export the model, run ``command`` and parse the solution file.

    ``command`` may use ``{lp}`` and ``{sol}`` placeholders for the paths of
    the written LP file and the expected solution file.
    """
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        lp = Path(tmp) / "model.lp"
        sol = Path(tmp) / "model.sol"
        export_lp(model, lp)
        args = [a.format(lp=lp, sol=sol) for a in shlex.split(command)]
        start = time.perf_counter()
        proc = subprocess.run(args, capture_output=True, text=True, timeout=timeout)
        if proc.returncode != 0:
            raise LPFormatError(f"external solver exited with {proc.returncode}: {proc.stderr[-500:]}")
        if not sol.exists():
            raise LPFormatError("external solver wrote no solution file")
        res = read_solution(sol, model)
        res.wall_time = time.perf_counter() - start
        return res
