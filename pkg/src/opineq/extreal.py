"""Extended-real scalar with a tagged +infinity.

Function values live in (-inf, +inf].  +inf is a tag, never an overflow
float, so arithmetic stays testable: finite + inf = inf, comparisons are
total, and inf - inf raises instead of producing NaN.  -inf is never
stored (proper functions only take it as a limit, not a value).
"""

import math

from .errors import PreconditionError


class ExtReal:
    __slots__ = ("_value", "_inf")

    def __init__(self, value=0.0, inf=False):
        if inf:
            self._value = math.inf
            self._inf = True
        else:
            value = float(value)
            if math.isnan(value):
                raise PreconditionError("NaN is not an extended-real value")
            if math.isinf(value):
                if value < 0:
                    raise PreconditionError("-inf is not representable")
                self._value = math.inf
                self._inf = True
            else:
                self._value = value
                self._inf = False

    @classmethod
    def pos_inf(cls):
        return cls(inf=True)

    @property
    def is_inf(self):
        return self._inf

    @property
    def is_finite(self):
        return not self._inf

    @property
    def value(self):
        """Finite value; raises on +inf so callers cannot leak the sentinel."""
        if self._inf:
            raise PreconditionError("extended-real +inf has no finite value")
        return self._value

    def __float__(self):
        # math.inf escape hatch used only by formatting code
        return self._value

    @staticmethod
    def _coerce(other):
        if isinstance(other, ExtReal):
            return other
        if isinstance(other, (int, float)):
            return ExtReal(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if self._inf or other._inf:
            return ExtReal.pos_inf()
        return ExtReal(self._value + other._value)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if other._inf:
            if self._inf:
                raise PreconditionError("inf - inf is a rejected operation")
            raise PreconditionError("finite - inf would be -inf, not representable")
        if self._inf:
            return ExtReal.pos_inf()
        return ExtReal(self._value - other._value)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other.__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if self._inf or other._inf:
            a = self._value if not self._inf else None
            b = other._value if not other._inf else None
            finite = b if a is None else a
            if finite is not None and finite == 0.0:
                raise PreconditionError("0 * inf is a rejected operation")
            if finite is not None and finite < 0.0:
                raise PreconditionError("negative * inf would be -inf, not representable")
            return ExtReal.pos_inf()
        return ExtReal(self._value * other._value)

    __rmul__ = __mul__

    def _cmp_key(self):
        return self._value  # +inf compares as math.inf: total order

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._inf == other._inf and self._value == other._value

    def __lt__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._cmp_key() < other._cmp_key()

    def __le__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._cmp_key() <= other._cmp_key()

    def __gt__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._cmp_key() > other._cmp_key()

    def __ge__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._cmp_key() >= other._cmp_key()

    def __hash__(self):
        return hash((self._inf, self._value))

    def __repr__(self):
        return "ExtReal(+inf)" if self._inf else f"ExtReal({self._value!r})"
