"""Expansions x = sum a_{e_i} lam^i over a finite digit alphabet.

The maps ``x -> lam*x + lam*a_j`` are the same similitudes as
``lam*x + (1-lam)*p_j`` with anchors ``p_j = lam*a_j/(1-lam)``, so an
alphabet and a base give an ordinary IfsSystem whose codings are exactly
the expansions (digit index j standing for a_j).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .ifs import Contraction, IfsSystem, parse_number


def _ratio(lam):
    lam = parse_number(lam)
    if not 0 < lam < 1:
        raise ValueError(f"base ratio must lie in (0, 1), got {lam}")
    return lam


@dataclass(frozen=True)
class Alphabet:
    digits: tuple

    def __post_init__(self):
        digits = tuple(parse_number(a) for a in self.digits)
        if len(digits) < 2:
            raise ValueError("an alphabet needs at least two digits")
        if any(b <= a for a, b in zip(digits, digits[1:])):
            raise ValueError("alphabet digits must be strictly increasing")
        object.__setattr__(self, "digits", digits)

    @classmethod
    def parse(cls, text: str) -> "Alphabet":
        return cls(tuple(part for part in text.split(",") if part.strip()))

    @property
    def n(self) -> int:
        return len(self.digits)

    @property
    def exact(self) -> bool:
        return all(isinstance(a, Fraction) for a in self.digits)

    @property
    def max_gap(self):
        return max(b - a for a, b in zip(self.digits, self.digits[1:]))

    @property
    def span(self):
        return self.digits[-1] - self.digits[0]

    def __str__(self) -> str:
        return "{" + ",".join(str(a) for a in self.digits) + "}"


@dataclass(frozen=True)
class ExpansionDigits:
    alphabet: Alphabet
    lam: object
    indices: tuple                 # 1-based positions in the alphabet

    @property
    def digits(self) -> tuple:
        return tuple(self.alphabet.digits[j - 1] for j in self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def to_csv(self) -> str:
        lines = ["position,index,digit"]
        for i, (j, a) in enumerate(zip(self.indices, self.digits), start=1):
            lines.append(f"{i},{j},{a}")
        return "\n".join(lines) + "\n"


def pedicini_check(A: Alphabet, lam) -> tuple:
    """Gap condition ``max gap <= lam*(a_n - a_1)/(1 - lam)`` and its margin.

    Equality counts as passing.  Exact whenever the alphabet and ratio are.
    """
    lam = _ratio(lam)
    margin = lam * A.span / (1 - lam) - A.max_gap
    return margin >= 0, margin


def pedicini_threshold(A: Alphabet):
    """Smallest ratio passing the gap condition: ``g / (g + span)``."""
    g = A.max_gap
    return g / (g + A.span)


def expansion_interval(A: Alphabet, lam) -> tuple:
    lam = _ratio(lam)
    return A.digits[0] * lam / (1 - lam), A.digits[-1] * lam / (1 - lam)


def ifs_of_alphabet(A: Alphabet, lam) -> IfsSystem:
    lam = _ratio(lam)
    return IfsSystem(tuple(Contraction(lam, (lam * a / (1 - lam),)) for a in A.digits))


def _prepare(A: Alphabet, lam, x):
    lam = _ratio(lam)
    x = parse_number(x)
    exact = isinstance(lam, Fraction) and isinstance(x, Fraction) and A.exact
    if not exact:
        lam, x = float(lam), float(x)
        digits = [float(a) for a in A.digits]
    else:
        digits = list(A.digits)
    lo, hi = digits[0] * lam / (1 - lam), digits[-1] * lam / (1 - lam)
    slack = 0 if exact else 64 * 2.0 ** -52 * max(abs(lo), abs(hi), 1.0)
    if not lo - slack <= x <= hi + slack:
        raise ValueError(f"x = {x} lies outside the expansion interval [{lo}, {hi}]")
    return lam, x, digits, lo, hi, slack


def _expand(A: Alphabet, lam, x, N: int, order) -> ExpansionDigits:
    lam0 = _ratio(lam)
    lam, r, digits, lo, hi, slack = _prepare(A, lam, x)
    out = []
    for _ in range(N):
        for j in order(len(digits)):
            nxt = r / lam - digits[j]
            if lo - slack <= nxt <= hi + slack:
                break
        else:
            raise ValueError(f"no digit keeps the residual representable after {len(out)} digits")
        out.append(j + 1)
        r = min(max(nxt, lo), hi) if slack else nxt
    return ExpansionDigits(A, lam0, tuple(out))


def greedy_expansion(A: Alphabet, lam, x, N: int) -> ExpansionDigits:
    """Largest digit keeping the shifted residual ``r/lam - a`` in the interval."""
    return _expand(A, lam, x, N, lambda n: range(n - 1, -1, -1))


def lazy_expansion(A: Alphabet, lam, x, N: int) -> ExpansionDigits:
    """Smallest digit keeping the shifted residual in the interval."""
    return _expand(A, lam, x, N, lambda n: range(n))


def evaluate(d: ExpansionDigits) -> tuple:
    """Partial sum and a bound on the remaining tail.

    The tail of any infinite continuation is at most
    ``max|a| * lam^(N+1) / (1 - lam)``.
    """
    lam = d.lam
    exact = isinstance(lam, Fraction) and d.alphabet.exact
    if not exact:
        lam = float(lam)
    digits = d.digits if exact else [float(a) for a in d.digits]
    value = Fraction(0) if exact else 0.0
    for a in reversed(digits):
        value = lam * (value + a)
    amax = max(abs(d.alphabet.digits[0]), abs(d.alphabet.digits[-1]))
    bound = amax * lam ** (len(digits) + 1) / (1 - lam)
    return value, bound

