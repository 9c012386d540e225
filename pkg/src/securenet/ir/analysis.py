"""Static analyses over programs: ScaleDown counting and liveness."""

from __future__ import annotations

from dataclasses import dataclass

from .hlil import IRError, Program

BYTES_PER_ELEMENT = 8


def count_scaledown(p: Program) -> int:
    """Number of elements truncated by ScaleDown calls (batch of one)."""
    return sum(p.size(c.inputs[0]) for c in p.calls if c.op == "ScaleDown")


@dataclass
class Liveness:
    live: list  # frozenset of names live at each statement
    peak_bytes: int
    peak_index: int
    total_bytes: int
    free_after: dict  # statement index -> names whose last use is that statement
    first_def: dict
    last_use: dict

    @property
    def ratio(self) -> float:
        return self.peak_bytes / self.total_bytes if self.total_bytes else 0.0


def liveness(p: Program) -> Liveness:
    """Live ranges under an 8-byte, non-aliasing buffer model.

    Weights and the input are materialized lazily at their first use, so a
    parameter only occupies memory from the statement that first reads it.
    A tensor stays live through its last use; the program output stays live
    to the end.  At each statement the live set holds its operands and its
    result, and the peak is the largest byte total over statements.
    """
    sources = set(p.params) | ({p.input} if p.input is not None else set())
    first_def: dict = {}
    last_use: dict = {}
    end = len(p.calls)
    for idx, c in enumerate(p.calls):
        for n in c.inputs:
            if n not in first_def:
                if n not in sources:
                    raise IRError(f"{n!r} used at statement {idx} before definition")
                first_def[n] = idx
            last_use[n] = idx
        if c.output in first_def:
            raise IRError(f"{c.output!r} defined twice (program is not in SSA form)")
        first_def[c.output] = idx
        last_use.setdefault(c.output, idx)
    if p.output is not None:
        last_use[p.output] = end

    size = {n: p.size(n) * BYTES_PER_ELEMENT for n in first_def}
    live = []
    peak = 0
    peak_idx = -1
    for idx in range(end):
        here = frozenset(n for n in first_def if first_def[n] <= idx <= last_use[n])
        live.append(here)
        b = sum(size[n] for n in here)
        if b > peak:
            peak, peak_idx = b, idx
    free_after: dict = {}
    for n, idx in last_use.items():
        if idx < end:
            free_after.setdefault(idx, []).append(n)
    return Liveness(
        live=live,
        peak_bytes=peak,
        peak_index=peak_idx,
        total_bytes=sum(size.values()),
        free_after={k: sorted(v) for k, v in free_after.items()},
        first_def=first_def,
        last_use=last_use,
    )
