"""Angular-momentum coupling coefficients.

Clebsch-Gordan coefficients are evaluated with the Racah closed-form sum in
exact integer arithmetic (all angular momenta enter as doubled integers), so
the only rounding happens in the final square root.  Phases follow the
Condon-Shortley convention.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial, isqrt, sqrt


def _as_twice(x) -> int:
    """Coerce a (half-)integer to a doubled integer, e.g. 2.5 -> 5."""
    t = round(2 * x)
    if abs(2 * x - t) > 1e-9:
        raise ValueError(f"{x!r} is not a half-integer")
    return int(t)


def _fact2(twice: int) -> int:
    """factorial(twice / 2) for an even doubled integer."""
    if twice < 0 or twice % 2:
        raise ValueError(f"factorial argument {twice}/2 is not a non-negative integer")
    return factorial(twice // 2)


@lru_cache(maxsize=4096)
def _cg_twice(tj1: int, tm1: int, tj2: int, tm2: int, tj: int, tm: int) -> float:
    if tm1 + tm2 != tm:
        return 0.0
    if not (abs(tj1 - tj2) <= tj <= tj1 + tj2):
        return 0.0
    if (tj1 + tj2 + tj) % 2:
        return 0.0
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tm) > tj:
        return 0.0
    if (tj1 - tm1) % 2 or (tj2 - tm2) % 2 or (tj - tm) % 2:
        return 0.0

    # Racah's closed form; every factorial argument below is an integer.
    pref = Fraction(tj + 1) * Fraction(
        _fact2(tj1 + tj2 - tj) * _fact2(tj1 - tj2 + tj) * _fact2(-tj1 + tj2 + tj),
        _fact2(tj1 + tj2 + tj + 2),
    )
    pref *= Fraction(
        _fact2(tj1 + tm1) * _fact2(tj1 - tm1)
        * _fact2(tj2 + tm2) * _fact2(tj2 - tm2)
        * _fact2(tj + tm) * _fact2(tj - tm),
        1,
    )

    ksum = Fraction(0)
    kmin = max(0, (tj2 - tj - tm1) // 2, (tj1 + tm2 - tj) // 2)
    kmax = min((tj1 + tj2 - tj) // 2, (tj1 - tm1) // 2, (tj2 + tm2) // 2)
    for k in range(kmin, kmax + 1):
        den = (
            factorial(k)
            * _fact2(tj1 + tj2 - tj - 2 * k)
            * _fact2(tj1 - tm1 - 2 * k)
            * _fact2(tj2 + tm2 - 2 * k)
            * _fact2(tj - tj2 + tm1 + 2 * k)
            * _fact2(tj - tj1 - tm2 + 2 * k)
        )
        ksum += Fraction((-1) ** k, den)

    if ksum == 0:
        return 0.0
    value2 = pref * ksum * ksum
    sign = 1.0 if ksum > 0 else -1.0
    # exact sqrt when possible, float otherwise
    num, den = value2.numerator, value2.denominator
    rn, rd = isqrt(num), isqrt(den)
    if rn * rn == num and rd * rd == den:
        return sign * rn / rd
    return sign * sqrt(num / den)


def clebsch_gordan(j1, m1, j2, m2, j, m) -> float:
    """<j1 m1; j2 m2 | j m> in the Condon-Shortley convention."""
    return _cg_twice(
        _as_twice(j1), _as_twice(m1),
        _as_twice(j2), _as_twice(m2),
        _as_twice(j), _as_twice(m),
    )


def wigner_3j(j1, m1, j2, m2, j3, m3) -> float:
    """Wigner 3-j symbol, derived from the Clebsch-Gordan coefficient."""
    tj1, tj2, tj3 = _as_twice(j1), _as_twice(j2), _as_twice(j3)
    tm3 = _as_twice(m3)
    if _as_twice(m1) + _as_twice(m2) + tm3 != 0:
        return 0.0
    phase = (-1.0) ** ((tj1 - tj2 - tm3) // 2)
    return phase / sqrt(tj3 + 1) * clebsch_gordan(j1, m1, j2, m2, j3, -m3)
