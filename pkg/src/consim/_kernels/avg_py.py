"""Numpy fallback for the fixed-point averaging round kernel."""

import numpy as np


def run_rounds(x, eu, ev, den, rounds):
    """Iterate ``rounds`` synchronous averaging rounds in place on x.

    x: int64 node values (fixed point); eu/ev: int64 endpoint indices per
    edge; den: int64 weight denominator per edge. Each round computes the
    rounded delta round((x[ev]-x[eu])/den) from the round-start snapshot and
    applies +delta at eu and -delta at ev, conserving sum(x) exactly.
    """
    x = np.asarray(x)
    eu = np.asarray(eu)
    ev = np.asarray(ev)
    den = np.asarray(den)
    for _ in range(rounds):
        diff = x[ev] - x[eu]
        mag = np.abs(diff)
        delta = (2 * mag + den) // (2 * den)
        np.negative(delta, out=delta, where=diff < 0)
        np.add.at(x, eu, delta)
        np.subtract.at(x, ev, delta)
    return x
