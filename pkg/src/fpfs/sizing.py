"""Analytical memory models, false-positive prediction and the space
lower bound.

These closed forms predict the bit totals of the constructions in
filters.py and double as test oracles: a built filter's serialized size
must track its model within the slack introduced by table rounding.
All model arithmetic is double precision; rounding happens only at
presentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .filters import compute_a_if_c1, compute_a_tf, select_if_params
from .xorfunc import DEFAULT_EPSILON

LOG2_E = math.log2(math.e)


def m_naive(s: int, t: int, r: int, epsilon: float = DEFAULT_EPSILON) -> float:
    """Bits for the single-table construction: (s + t) * (1 + eps) * r."""
    return (s + t) * (1.0 + epsilon) * r


def m_tf(s: int, t: int, r: int, epsilon: float = DEFAULT_EPSILON) -> tuple[float, int]:
    """(bits, a) for the two-table construction.

    s * (1+eps) * (r+a) covers the widened first stage plus the 1-bit
    storage of every member; the residual keys add t / 2**(r+a-1)
    entries of (1+eps) bits each.
    """
    a = compute_a_tf(s, t, r) if s else 0
    bits = s * (1.0 + epsilon) * (r + a) + t / 2.0 ** (r + a - 1) * (1.0 + epsilon)
    return bits, a


def m_if(
    s: int,
    t: int,
    r: int,
    epsilon: float = DEFAULT_EPSILON,
    c_mode: str = "cmin",
) -> tuple[float, int, int]:
    """(bits, a, c) for the fused construction.

    c1 mode stores s + t/2**(r+a-1) keys at full width r+a; cmin mode
    keeps per-subfilter load under s, costing s * (1+eps) * (r+a+c-1).
    """
    if c_mode == "c1":
        a = compute_a_if_c1(s, t, r) if s else 0
        bits = (s + t / 2.0 ** (r + a - 1)) * (1.0 + epsilon) * (r + a)
        return bits, a, 1
    if c_mode != "cmin":
        raise ValueError(f"c_mode must be 'c1' or 'cmin', got {c_mode!r}")
    a, c = select_if_params(s, t, r) if s else (0, 1)
    bits = s * (1.0 + epsilon) * (r + a + c - 1)
    return bits, a, c


def extra_bits_if(s: int, t: int, r: int, a: int) -> int:
    """Cell bits the fused construction adds over an (r-1)-bit stage
    when widening by a: a + 1 + ceil(t / (s * 2**(r+a-1)))."""
    if s < 1:
        raise ValueError("s must be >= 1")
    return a + 1 + -(-t // (s << (r + a - 1)))


def predicted_fpp(variant: str, r: int, a: int = 0) -> float:
    """Stray-key match probability: 2**-r, or 2**-(r+a) once widened."""
    if variant in ("plain", "naive"):
        return 2.0 ** -r
    if variant in ("tf", "if"):
        return 2.0 ** -(r + a)
    raise ValueError(f"unknown variant {variant!r}")


def lower_bound(s: int, t: int, fpp: float) -> float:
    """Information-theoretic bit floor for any filter meeting the contract.

    Counting argument: there are I = C(u,s) * C(u-s,t) admissible (S, T)
    inputs, while one memory state answering positive on a fraction p of
    the universe serves W = C(s + p*(u-s-t), s) * C((1-p)*(u-s-t)+t, t)
    of them, so log2(I/W) bits are needed; for a large universe this is
    s*log2(1/p) + t*log2(1/(1-p)) >= s*log2(1/p) + t*p*log2(e).  The
    achieved rate p may sit below the requested fpp, so the bound takes
    the best p <= fpp.  The objective is convex in p with stationary
    point p = s/t, giving the closed form below; tests hold it against a
    plain grid scan.
    """
    if not 0.0 < fpp < 0.5:
        raise ValueError(f"fpp must be in (0, 0.5), got {fpp}")
    if s < 1 or t < 1:
        raise ValueError("lower bound requires s >= 1 and t >= 1")
    best = min(fpp, s / t)
    return s * math.log2(1.0 / best) + t * best * LOG2_E


@dataclass
class SizingReport:
    """Predicted bits for every construction at one (s, t, r) point."""

    s: int
    t: int
    r: int
    epsilon: float
    naive_bits: float
    tf_bits: float
    if_c1_bits: float
    if_cmin_bits: float
    a_tf: int
    a_if_c1: int
    a_if: int
    c: int
    predicted_fpp: float
    lower_bound_bits: float | None = None

    def bits_per_element(self, variant: str) -> float:
        bits = {
            "naive": self.naive_bits,
            "tf": self.tf_bits,
            "if_c1": self.if_c1_bits,
            "if_cmin": self.if_cmin_bits,
        }[variant]
        return bits / self.s if self.s else float("nan")


def report(
    s: int,
    t: int,
    r: int,
    epsilon: float = DEFAULT_EPSILON,
    fpp: float | None = None,
) -> SizingReport:
    naive = m_naive(s, t, r, epsilon)
    tf_bits, a_tf = m_tf(s, t, r, epsilon)
    c1_bits, a_c1, _ = m_if(s, t, r, epsilon, "c1")
    cmin_bits, a_if, c = m_if(s, t, r, epsilon, "cmin")
    lb = lower_bound(s, t, fpp) if fpp is not None and t >= 1 else None
    return SizingReport(
        s=s,
        t=t,
        r=r,
        epsilon=epsilon,
        naive_bits=naive,
        tf_bits=tf_bits,
        if_c1_bits=c1_bits,
        if_cmin_bits=cmin_bits,
        a_tf=a_tf,
        a_if_c1=a_c1,
        a_if=a_if,
        c=c,
        predicted_fpp=predicted_fpp("tf", r, a_tf),
        lower_bound_bits=lb,
    )


def sweep(
    s: int,
    r: int,
    epsilon: float = DEFAULT_EPSILON,
    t_values: list[int] | None = None,
    fpp: float | None = None,
) -> list[SizingReport]:
    """One SizingReport per T size; the raw data behind the memory plots."""
    if t_values is None:
        t_values = [10**k for k in range(4, 10)]
    return [report(s, t, r, epsilon, fpp) for t in t_values]
