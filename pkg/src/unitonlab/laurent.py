"""Laurent-polynomial matrices and scalars in the loop parameter.

Coefficients live either in complex floating point (default) or in an exact
rational-complex backend (`QC` entries inside object arrays).  The exact
backend makes the disk-holomorphy verdict of the constant-potential test a
true decision procedure instead of a float comparison.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

TRIM_RTOL = 1e-12


class QC:
    """Complex scalar with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @staticmethod
    def of(x):
        if isinstance(x, QC):
            return x
        if isinstance(x, complex):
            # only exact dyadic floats round-trip; callers wanting exactness
            # should pass Fractions
            return QC(Fraction(x.real), Fraction(x.imag))
        return QC(x)

    def __add__(self, other):
        o = QC.of(other)
        return QC(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = QC.of(other)
        return QC(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return QC.of(other) - self

    def __mul__(self, other):
        o = QC.of(other)
        return QC(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = QC.of(other)
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("rational-complex division by zero")
        return QC((self.re * o.re + self.im * o.im) / d,
                  (self.im * o.re - self.re * o.im) / d)

    def __neg__(self):
        return QC(-self.re, -self.im)

    def __eq__(self, other):
        o = QC.of(other)
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return self.re != 0 or self.im != 0

    def conjugate(self):
        return QC(self.re, -self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __abs__(self):
        return abs(complex(self))

    def __repr__(self):
        return f"QC({self.re}, {self.im})"


def qc_matrix(rows):
    """Build an exact-backend matrix from nested ints/Fractions/QC entries."""
    rows = [[QC.of(x) if not isinstance(x, QC) else x for x in r] for r in rows]
    out = np.empty((len(rows), len(rows[0])), dtype=object)
    for i, r in enumerate(rows):
        out[i, :] = r
    return out


def _is_exact(arr):
    return arr.dtype == object


def _zeros_like_backend(shape, exact):
    if exact:
        out = np.empty(shape, dtype=object)
        out[...] = QC(0)
        return out
    return np.zeros(shape, dtype=complex)


def _mat_is_zero(m, tol):
    if _is_exact(m):
        return not any(bool(QC.of(x)) for x in m.flat)
    return np.max(np.abs(m)) <= tol


def _mat_norm(m):
    if _is_exact(m):
        return max((abs(QC.of(x)) for x in m.flat), default=0.0)
    return float(np.max(np.abs(m))) if m.size else 0.0


def _to_complex(m):
    if _is_exact(m):
        return np.array([[complex(QC.of(x)) for x in row] for row in m], dtype=complex)
    return np.asarray(m, dtype=complex)


class LaurentMatrix:
    """Finitely supported map degree -> square matrix, with exact arithmetic.

    Stored coefficients are trimmed: degrees whose matrix norm falls below
    TRIM_RTOL times the largest coefficient norm (exact zeros on the exact
    backend) are dropped, so dmin/dmax are always post-trim.
    """

    def __init__(self, n, coeffs=None):
        self.n = int(n)
        self.coeffs = {}
        if coeffs:
            for d, m in coeffs.items():
                m = m if isinstance(m, np.ndarray) else np.asarray(m, dtype=complex)
                if m.shape != (self.n, self.n):
                    raise ValueError(f"coefficient at degree {d} has shape {m.shape}, expected {(self.n, self.n)}")
                self.coeffs[int(d)] = m
        self._trim()

    def _trim(self):
        if not self.coeffs:
            return
        scale = max(_mat_norm(m) for m in self.coeffs.values())
        tol = TRIM_RTOL * scale
        self.coeffs = {d: m for d, m in self.coeffs.items() if not _mat_is_zero(m, tol)}

    # -- constructors -------------------------------------------------

    @staticmethod
    def identity(n, exact=False):
        if exact:
            m = qc_matrix([[1 if i == j else 0 for j in range(n)] for i in range(n)])
        else:
            m = np.eye(n, dtype=complex)
        return LaurentMatrix(n, {0: m})

    @staticmethod
    def zero(n):
        return LaurentMatrix(n, {})

    @staticmethod
    def monomial(n, deg, mat):
        return LaurentMatrix(n, {deg: mat})

    # -- structure ----------------------------------------------------

    @property
    def is_zero(self):
        return not self.coeffs

    @property
    def exact(self):
        return any(_is_exact(m) for m in self.coeffs.values())

    @property
    def dmin(self):
        if self.is_zero:
            raise ValueError("zero Laurent matrix has no degree bounds")
        return min(self.coeffs)

    @property
    def dmax(self):
        if self.is_zero:
            raise ValueError("zero Laurent matrix has no degree bounds")
        return max(self.coeffs)

    def coeff(self, d):
        if d in self.coeffs:
            return self.coeffs[d]
        return _zeros_like_backend((self.n, self.n), self.exact)

    # -- ring operations ----------------------------------------------

    def _check_dim(self, other):
        if self.n != other.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        self._check_dim(other)
        out = {}
        for d in set(self.coeffs) | set(other.coeffs):
            out[d] = self.coeff(d) + other.coeff(d)
        return LaurentMatrix(self.n, out)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return LaurentMatrix(self.n, {d: -m for d, m in self.coeffs.items()})

    def __matmul__(self, other):
        self._check_dim(other)
        out = {}
        for da, ma in self.coeffs.items():
            for db, mb in other.coeffs.items():
                d = da + db
                prod = ma @ mb
                out[d] = prod if d not in out else out[d] + prod
        return LaurentMatrix(self.n, out)

    def scale(self, c):
        return LaurentMatrix(self.n, {d: m * c for d, m in self.coeffs.items()})

    def shift(self, k):
        """Multiply by the k-th power of the loop parameter."""
        return LaurentMatrix(self.n, {d + k: m for d, m in self.coeffs.items()})

    def scalar_mul(self, s: "LaurentScalar"):
        out = {}
        for da, ca in s.coeffs.items():
            for db, mb in self.coeffs.items():
                d = da + db
                prod = mb * ca
                out[d] = prod if d not in out else out[d] + prod
        return LaurentMatrix(self.n, out)

    def circle_adjoint(self):
        """Pointwise conjugate transpose on the unit circle (degree k -> -k)."""
        out = {}
        for d, m in self.coeffs.items():
            if _is_exact(m):
                mh = np.empty((self.n, self.n), dtype=object)
                for i in range(self.n):
                    for j in range(self.n):
                        mh[i, j] = QC.of(m[j, i]).conjugate()
            else:
                mh = m.conj().T
            out[-d] = mh
        return LaurentMatrix(self.n, out)

    def to_float(self):
        return LaurentMatrix(self.n, {d: _to_complex(m) for d, m in self.coeffs.items()})

    # -- evaluation ---------------------------------------------------

    def __call__(self, lam):
        return evaluate(self, lam)

    def norm(self):
        return max((_mat_norm(m) for m in self.coeffs.values()), default=0.0)

    def allclose(self, other, tol=1e-10):
        return (self - other).norm() <= tol

    def __repr__(self):
        if self.is_zero:
            return f"LaurentMatrix(n={self.n}, 0)"
        return f"LaurentMatrix(n={self.n}, degrees [{self.dmin},{self.dmax}])"

    # -- serialization ------------------------------------------------

    def to_json_dict(self):
        terms = []
        for d in sorted(self.coeffs):
            m = _to_complex(self.coeffs[d])
            terms.append({"deg": d, "re": m.real.tolist(), "im": m.imag.tolist()})
        return {"n": self.n, "terms": terms}

    @staticmethod
    def from_json_dict(obj):
        n = int(obj["n"])
        coeffs = {}
        for t in obj["terms"]:
            coeffs[int(t["deg"])] = np.asarray(t["re"], dtype=float) + 1j * np.asarray(t["im"], dtype=float)
        return LaurentMatrix(n, coeffs)


def lmul(a: LaurentMatrix, b: LaurentMatrix) -> LaurentMatrix:
    """Exact convolution product of two Laurent matrices."""
    return a @ b


def evaluate(a: LaurentMatrix, lam) -> np.ndarray:
    """Evaluate a Laurent matrix at a nonzero complex point."""
    lam = complex(lam)
    if lam == 0:
        raise ValueError("cannot evaluate a Laurent matrix at 0")
    out = np.zeros((a.n, a.n), dtype=complex)
    for d, m in a.coeffs.items():
        out += _to_complex(m) * lam ** d
    return out


class LaurentScalar:
    """Finitely supported map degree -> complex (or exact rational-complex)."""

    def __init__(self, coeffs=None):
        self.coeffs = {}
        if coeffs:
            for d, c in coeffs.items():
                self.coeffs[int(d)] = c
        self._trim()

    def _trim(self):
        exact = self.exact
        if exact:
            self.coeffs = {d: c for d, c in self.coeffs.items() if bool(QC.of(c))}
            return
        if not self.coeffs:
            return
        scale = max(abs(complex(c)) for c in self.coeffs.values())
        tol = TRIM_RTOL * scale
        self.coeffs = {d: c for d, c in self.coeffs.items() if abs(complex(c)) > tol}

    @property
    def exact(self):
        return any(isinstance(c, (QC, Fraction, int)) for c in self.coeffs.values())

    @property
    def is_zero(self):
        return not self.coeffs

    @property
    def dmin(self):
        if self.is_zero:
            raise ValueError("zero Laurent scalar has no degree bounds")
        return min(self.coeffs)

    @property
    def dmax(self):
        if self.is_zero:
            raise ValueError("zero Laurent scalar has no degree bounds")
        return max(self.coeffs)

    @staticmethod
    def const(c):
        return LaurentScalar({0: c})

    def __add__(self, other):
        out = dict(self.coeffs)
        for d, c in other.coeffs.items():
            out[d] = out[d] + c if d in out else c
        return LaurentScalar(out)

    def __neg__(self):
        return LaurentScalar({d: -c for d, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        out = {}
        for da, ca in self.coeffs.items():
            for db, cb in other.coeffs.items():
                d = da + db
                p = ca * cb
                out[d] = out[d] + p if d in out else p
        return LaurentScalar(out)

    def __call__(self, lam):
        lam = complex(lam)
        if lam == 0:
            raise ValueError("cannot evaluate a Laurent scalar at 0")
        return sum(complex(c) * lam ** d for d, c in self.coeffs.items())

    def __repr__(self):
        return f"LaurentScalar({self.coeffs})"


class MuPolynomial:
    """Monic polynomial in an auxiliary variable with LaurentScalar coefficients.

    coeffs[k] multiplies the k-th power of the variable; there are n+1 of
    them and the leading one is exactly 1.
    """

    def __init__(self, coeffs):
        self.coeffs = list(coeffs)
        lead = self.coeffs[-1]
        if not (len(lead.coeffs) == 1 and lead.coeffs.get(0) is not None):
            raise ValueError("polynomial is not monic")
        one = lead.coeffs[0]
        ok = (one == QC(1)) if isinstance(one, (QC, Fraction, int)) else abs(complex(one) - 1) < 1e-12
        if not ok:
            raise ValueError("polynomial is not monic")

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, lam, mu):
        return sum(c(lam) * complex(mu) ** k for k, c in enumerate(self.coeffs))

    def evaluate_matrix(self, p: LaurentMatrix) -> LaurentMatrix:
        """Substitute a Laurent matrix for the variable (Horner)."""
        exact = p.exact
        acc = LaurentMatrix.identity(p.n, exact=exact).scalar_mul(self.coeffs[-1])
        for k in range(len(self.coeffs) - 2, -1, -1):
            acc = acc @ p + LaurentMatrix.identity(p.n, exact=exact).scalar_mul(self.coeffs[k])
        return acc


def char_poly(p: LaurentMatrix) -> MuPolynomial:
    """Characteristic polynomial of a Laurent matrix over the Laurent ring.

    Expands det(mu*I - p) by memoized Laplace expansion along rows; entries
    are degree <= 1 polynomials in mu, so no divisions occur and the result
    is exact on the exact backend.
    """
    n = p.n
    exact = p.exact
    one = QC(1) if exact else 1.0 + 0j
    zero_s = LaurentScalar({})

    # entry (i, j) of mu*I - p as a dict mu_power -> LaurentScalar
    def entry(i, j):
        e = {}
        pij = LaurentScalar({d: m[i, j] for d, m in p.coeffs.items()})
        if not pij.is_zero:
            e[0] = -pij
        if i == j:
            e[1] = LaurentScalar({0: one})
        return e

    entries = [[entry(i, j) for j in range(n)] for i in range(n)]

    def poly_add(a, b):
        out = dict(a)
        for k, c in b.items():
            out[k] = out[k] + c if k in out else c
        return {k: c for k, c in out.items() if not c.is_zero}

    def poly_mul(a, b):
        out = {}
        for ka, ca in a.items():
            for kb, cb in b.items():
                k = ka + kb
                prod = ca * cb
                out[k] = out[k] + prod if k in out else prod
        return {k: c for k, c in out.items() if not c.is_zero}

    def poly_neg(a):
        return {k: -c for k, c in a.items()}

    memo = {}

    def minor_det(row, cols):
        # determinant of the submatrix on rows row..n-1 and column set cols
        if row == n:
            return {0: LaurentScalar({0: one})}
        key = cols
        if key in memo:
            return memo[key]
        acc = {}
        sign = 1
        for idx, j in enumerate(cols):
            e = entries[row][j]
            if e:
                rest = minor_det(row + 1, cols[:idx] + cols[idx + 1:])
                term = poly_mul(e, rest)
                acc = poly_add(acc, term if sign > 0 else poly_neg(term))
            sign = -sign
        memo[key] = acc
        return acc

    det = minor_det(0, tuple(range(n)))
    coeffs = [det.get(k, zero_s) for k in range(n + 1)]
    return MuPolynomial(coeffs)


def is_disk_holomorphic(q: MuPolynomial) -> bool:
    """True iff no coefficient carries a negative degree of the loop parameter."""
    return all(c.is_zero or c.dmin >= 0 for c in q.coeffs)


def disk_holomorphy_witness(q: MuPolynomial):
    """Most negative (mu_power, degree) offending disk holomorphy, or None."""
    worst = None
    for k, c in enumerate(q.coeffs):
        if c.is_zero or c.dmin >= 0:
            continue
        if worst is None or c.dmin < worst[1]:
            worst = (k, c.dmin)
    return worst
