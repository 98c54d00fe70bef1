"""Cookie environments, total drift and the recurrence/ballisticity regime."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Iterable

import numpy as np


class Transience(str, enum.Enum):
    TRANSIENT_RIGHT = "TransientRight"
    TRANSIENT_LEFT = "TransientLeft"
    RECURRENT = "RecurrentOscillating"


class SpeedSign(str, enum.Enum):
    POSITIVE = "Positive"
    ZERO = "Zero"
    NEGATIVE = "Negative"


@dataclass(frozen=True)
class Regime:
    transience: Transience
    speed_sign: SpeedSign

    def __post_init__(self):
        if self.speed_sign is SpeedSign.POSITIVE and self.transience is not Transience.TRANSIENT_RIGHT:
            raise ValueError("positive speed requires transience to the right")
        if self.speed_sign is SpeedSign.NEGATIVE and self.transience is not Transience.TRANSIENT_LEFT:
            raise ValueError("negative speed requires transience to the left")


def _exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        # shortest round-trip decimal, so 0.7 means 7/10
        return Fraction(Decimal(repr(float(value))))
    try:
        return Fraction(Decimal(str(value).strip()))
    except (InvalidOperation, ValueError) as exc:
        raise ValueError(f"not a decimal probability: {value!r}") from exc


@dataclass(frozen=True, eq=False)
class CookieEnvironment:
    """Cookie strengths ``p_1..p_M``; cookie ``j`` is eaten on the j-th visit to a site.

    Entries are kept both as floats (for the numerics) and as exact fractions
    of their decimal representation (for threshold comparisons of the drift).
    ``M = 0`` is the simple symmetric walk.
    """

    exact: tuple[Fraction, ...]
    probs: np.ndarray = field(init=False, repr=False)

    def __init__(self, probs: Iterable = ()):
        exact = tuple(_exact(p) for p in probs)
        for p in exact:
            if not 0 < p < 1:
                raise ValueError(f"cookie strengths must lie in the open interval (0, 1), got {float(p)}")
        object.__setattr__(self, "exact", exact)
        arr = np.array([float(p) for p in exact], dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @classmethod
    def parse(cls, text: str) -> "CookieEnvironment":
        """Parse ``"0.9,0.8,0.7"``; an empty string is the environment with no cookies."""
        text = text.strip()
        if not text:
            return cls(())
        return cls(_token(tok) for tok in text.split(","))

    @classmethod
    def from_json(cls, text: str) -> "CookieEnvironment":
        return cls(str(p) for p in json.loads(text)["probs"])

    def to_json(self) -> str:
        return json.dumps({"probs": self.as_list()})

    def as_list(self) -> list[float]:
        return [float(p) for p in self.probs]

    @property
    def M(self) -> int:
        return len(self.exact)

    def __len__(self) -> int:
        return self.M

    def __iter__(self):
        return iter(self.as_list())

    def __eq__(self, other) -> bool:
        return isinstance(other, CookieEnvironment) and self.exact == other.exact

    def __hash__(self) -> int:
        return hash(self.exact)

    def __repr__(self) -> str:
        return f"CookieEnvironment({self.format()})"

    def format(self) -> str:
        return ",".join(_fmt(p) for p in self.exact)

    def padded(self, M: int) -> "CookieEnvironment":
        """Append fair cookies up to length ``M``; a 1/2 cookie is the same as no cookie."""
        if M < self.M:
            raise ValueError("cannot shorten an environment")
        return CookieEnvironment(self.exact + (Fraction(1, 2),) * (M - self.M))


def _token(tok: str) -> Fraction:
    tok = tok.strip()
    if not tok:
        raise ValueError("empty entry in environment list")
    try:
        return Fraction(Decimal(tok))
    except (InvalidOperation, ValueError, OverflowError) as exc:
        raise ValueError(f"not a decimal number: {tok!r}") from exc


def _fmt(p: Fraction) -> str:
    d = Decimal(p.numerator) / Decimal(p.denominator)
    return format(d.normalize(), "f") if d == Fraction(d) else repr(float(p))


def as_env(env) -> CookieEnvironment:
    """Accept an environment, a sequence of strengths or a comma-separated string."""
    if isinstance(env, CookieEnvironment):
        return env
    if isinstance(env, str):
        return CookieEnvironment.parse(env)
    return CookieEnvironment(env)


def exact_drift(env) -> Fraction:
    env = as_env(env)
    return sum((2 * p - 1 for p in env.exact), Fraction(0))


def total_drift(env) -> float:
    """Total drift ``sum_j (2 p_j - 1)`` of the cookies at one site."""
    env = as_env(env)
    return float(np.sum(2.0 * env.probs - 1.0)) if env.M else 0.0


def classify(env) -> Regime:
    """Recurrence/transience and speed sign, decided on the exact drift."""
    d = exact_drift(env)
    if d > 1:
        tr = Transience.TRANSIENT_RIGHT
    elif d < -1:
        tr = Transience.TRANSIENT_LEFT
    else:
        tr = Transience.RECURRENT
    if d > 2:
        sign = SpeedSign.POSITIVE
    elif d < -2:
        sign = SpeedSign.NEGATIVE
    else:
        sign = SpeedSign.ZERO
    return Regime(tr, sign)


def mirror(env) -> CookieEnvironment:
    """Reflect the environment: every cookie ``p`` becomes ``1 - p``."""
    env = as_env(env)
    return CookieEnvironment(1 - p for p in env.exact)


def pad_pair(p, q) -> tuple[CookieEnvironment, CookieEnvironment]:
    p, q = as_env(p), as_env(q)
    M = max(p.M, q.M)
    return p.padded(M), q.padded(M)

