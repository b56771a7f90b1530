"""Parameter sets for the binary-counter constructions.

Indexing: ``r[i - 1]`` is r(i) for bits i = 1..n, ``delta_j[j - 1]`` and
``p_j[j - 1]`` cover j = 1..f(n), and ``f[i - 1]`` is f(i).
"""

from __future__ import annotations

from dataclasses import dataclass

from gmpy2 import mpq

from ..rational import ZERO

Interval = tuple[mpq, mpq]


def default_f(n: int) -> tuple[int, ...]:
    return tuple(3 + 6 * i for i in range(1, n + 1))


@dataclass(frozen=True)
class SimpleParams:
    n: int
    r: tuple[mpq, ...]
    eps: mpq

    @classmethod
    def default(cls, n: int) -> "SimpleParams":
        return cls(n, tuple(mpq(4) ** i for i in range(1, n + 1)), mpq(1, 1024))

    def violations(self) -> list[str]:
        out = []
        if len(self.r) != self.n:
            out.append("need one reward per bit")
        total = ZERO
        for i, ri in enumerate(self.r, start=1):
            if not ri > total:
                out.append(f"r({i}) must exceed the sum of lower rewards")
            total += ri
        if not 0 < self.eps < self.r[0] / 1024:
            out.append("eps must lie in (0, r(1)/2^10)")
        return out


@dataclass(frozen=True)
class FullParams:
    n: int
    r: tuple[mpq, ...]
    c: tuple[mpq, ...]
    eps: mpq
    delta_j: tuple[mpq, ...]
    p_j: tuple[mpq, ...]
    alpha: mpq
    f: tuple[int, ...]

    @classmethod
    def default(cls, n: int) -> "FullParams":
        f = default_f(n)
        delta = mpq(1, 2 ** (100 * n))
        return cls(
            n=n,
            r=tuple(mpq(2) ** (2 * i + 1) for i in range(1, n + 1)),
            c=(ZERO,) + tuple(mpq(2) ** (2 * i) for i in range(2, n + 1)),
            eps=delta,
            delta_j=tuple(3 * j * delta for j in range(1, f[-1] + 1)),
            p_j=tuple(mpq(1, 4**j) for j in range(1, f[-1] + 1)),
            alpha=mpq(1, 2 ** (1000 * n)),
            f=f,
        )

    @classmethod
    def reachability_midpoints(cls, n: int) -> "FullParams":
        """Midpoints of the reachability parameter ranges (see ``reachability_ranges``)."""
        rng = reachability_ranges(n)
        mid = lambda iv: (iv[0] + iv[1]) / 2  # noqa: E731
        return cls(
            n=n,
            r=tuple(mid(iv) for iv in rng.r),
            c=(ZERO,) + tuple(mid(iv) for iv in rng.c[1:]),
            eps=mid(rng.eps),
            delta_j=tuple(mid(iv) for iv in rng.delta_j),
            p_j=tuple(iv[0] for iv in rng.p_j),
            alpha=rng.alpha[0],
            f=rng.f,
        )

    def violations(self) -> list[str]:
        out = []
        if len(self.r) != self.n or len(self.c) != self.n or len(self.f) != self.n:
            out.append("need r, c and f for every bit")
        top = max(self.f[1:], default=0)
        if len(self.delta_j) < top or len(self.p_j) < top:
            out.append("delta_j and p_j must cover j = 1..max f(i)")
        if not 0 < self.alpha < 1:
            out.append("alpha must lie in (0, 1)")
        if any(not 0 < p < 1 for p in self.p_j):
            out.append("p_j must lie in (0, 1)")
        if self.c and self.c[0] != 0:
            out.append("c(1) must be 0")
        return out


@dataclass(frozen=True)
class ParamRanges:
    """Interval-valued parameters (effective values after gadgets or perturbation)."""

    n: int
    r: tuple[Interval, ...]
    c: tuple[Interval, ...]
    eps: Interval
    delta_j: tuple[Interval, ...]
    p_j: tuple[Interval, ...]
    alpha: Interval
    f: tuple[int, ...]


def reach_offset(n: int) -> int:
    """Scale offset K in r(i) ~ 2^(4i+2-K); the nominal 5n only bounds values by 1/4 for n > 6."""
    return max(5 * n, 4 * n + 7)


def robust_ranges(n: int) -> ParamRanges:
    f = default_f(n)
    two = mpq(2)
    nn = mpq(n)
    return ParamRanges(
        n=n,
        r=tuple((two ** (7 * (i - 1) + 4), two ** (7 * (i - 1) + 6)) for i in range(1, n + 1)),
        c=((ZERO, ZERO),)
        + tuple((two ** (7 * (i - 1) + 1), two ** (7 * (i - 1) + 3)) for i in range(2, n + 1)),
        eps=(two ** (-100 * n), two ** (-100 * n + 2)),
        delta_j=tuple((mpq(2 * j, 4 * n * n), mpq(2 * j + 1, 4 * n * n)) for j in range(1, f[-1] + 1)),
        p_j=tuple((nn ** -(4 * j + 3), nn ** -(4 * j + 1)) for j in range(1, f[-1] + 1)),
        alpha=(nn ** (-1000 * n - 2), nn ** (-1000 * n)),
        f=f,
    )


def reachability_ranges(n: int) -> ParamRanges:
    f = default_f(n)
    k = reach_offset(n)
    two = mpq(2)
    alpha = two ** (-400 * n - 400 * f[-1] ** 2)
    return ParamRanges(
        n=n,
        r=tuple((two ** (4 * i + 2 - k), two ** (4 * i + 3 - k)) for i in range(1, n + 1)),
        c=((ZERO, ZERO),) + tuple((two ** (4 * i - k), two ** (4 * i + 1 - k)) for i in range(2, n + 1)),
        eps=(two ** (-100 * n - 1), two ** (-100 * n)),
        delta_j=tuple(
            (two ** (-200 * n + 2 * j), two ** (-200 * n + 2 * j + 1)) for j in range(1, f[-1] + 1)
        ),
        p_j=tuple((two ** (-400 * j * j),) * 2 for j in range(1, f[-1] + 1)),
        alpha=(alpha, alpha),
        f=f,
    )
