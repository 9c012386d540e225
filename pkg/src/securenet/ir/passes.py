"""MPC-aware peephole rewrites."""

from __future__ import annotations

from .hlil import Call, Program, check_program, with_calls


def relu_maxpool_switch(p: Program) -> Program:
    """Rewrite ``MaxPool(ReLU(A))`` into ``ReLU(MaxPool(A))``.

    Max and ReLU commute (both are monotone), so values are unchanged while
    the number of ReLUs shrinks by the pooling factor.  The rewrite fires only
    when the ReLU result feeds that single MaxPool and nothing else; other
    uses would still need the full-size activation.
    """
    uses = p.uses()
    producers = p.producers()
    drop = set()
    replace_at = {}
    decls = dict(p.decls)
    for idx, c in enumerate(p.calls):
        if c.op != "MaxPool":
            continue
        src = c.inputs[0]
        pidx = producers.get(src)
        if pidx is None or p.calls[pidx].op != "ReLU":
            continue
        if uses.get(src) != [idx] or src == p.output:
            continue
        relu = p.calls[pidx]
        pooled = f"{c.output}_prerelu"
        k = 1
        while pooled in decls:
            pooled = f"{c.output}_prerelu{k}"
            k += 1
        decls[pooled] = decls[c.output]
        del decls[src]
        drop.add(pidx)
        replace_at[idx] = [
            Call("MaxPool", (relu.inputs[0],), pooled, dict(c.attrs)),
            Call("ReLU", (pooled,), c.output, dict(relu.attrs)),
        ]
    if not replace_at:
        return p
    calls = []
    for idx, c in enumerate(p.calls):
        if idx in drop:
            continue
        calls.extend(replace_at.get(idx, [c]))
    out = with_calls(p, calls, decls)
    check_program(out)
    return out
