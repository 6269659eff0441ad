"""Graded nilpotent algebra and its local group.

Freezing the structure constants of a frame at a point g, and zeroing
the entries that escape the grading, yields a nilpotent Lie algebra
graded by the field degrees.  Its group is realized on R^N in canonical
coordinates of the first kind: the product is the Baker-Campbell-
Hausdorff series, finite here because brackets of weight above the
depth M vanish.

Convention: bch_product(a, b) is log(exp a . exp b), the coordinate of
the point reached by flowing along a first and then along b.  The
series is evaluated from a precomputed commutator-word table with exact
rational coefficients, available through depth 6.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from .errors import (ConfigError, GradingViolation, JacobiViolation,
                     OutOfDomain, UnsupportedDepth)
from .frame import Frame, StructureField, structure_constants, weighted_norm

_MAX_DEPTH = 6


@functools.lru_cache(maxsize=None)
def _dynkin_table(max_weight: int):
    """Commutator-word expansion of log(exp X exp Y) up to max_weight.

    Keys are words over {0: X, 1: Y}, read as right-nested brackets
    [w0, [w1, [... wn]]]; values are exact Fraction coefficients from
    the Dynkin series.  Words whose right-nested bracket vanishes
    identically (repeated last letter) are dropped.
    """
    table = {}

    def rec(parts, weight):
        n = len(parts)
        if n >= 1:
            word = []
            for r, s in parts:
                word.extend([0] * r)
                word.extend([1] * s)
            word = tuple(word)
            if len(word) == 1 or word[-1] != word[-2]:
                coeff = Fraction((-1) ** (n - 1), n) / weight
                for r, s in parts:
                    coeff /= factorial(r) * factorial(s)
                table[word] = table.get(word, Fraction(0)) + coeff
        if weight < max_weight:
            for extra in range(1, max_weight - weight + 1):
                for r in range(extra + 1):
                    rec(parts + [(r, extra - r)], weight + extra)

    rec([], 0)
    return {w: float(c) for w, c in table.items() if c != 0}


def _word_table(depth: int):
    if depth > _MAX_DEPTH:
        raise UnsupportedDepth(
            f"group operations support depth at most {_MAX_DEPTH}, "
            f"got {depth}")
    return _dynkin_table(depth)


@dataclass(frozen=True)
class GradedAlgebra:
    """Structure tensor c_bar with the grading enforced exactly.

    c_bar[i, j, k] is the e_k coefficient of [e_i, e_j]; it is zero
    unless deg_i + deg_j = deg_k.
    """

    c_bar: np.ndarray
    degrees: tuple
    depth_m: int

    def __post_init__(self):
        c = np.asarray(self.c_bar, dtype=float)
        n = len(self.degrees)
        if c.shape != (n, n, n):
            raise ConfigError(
                f"structure tensor shape {c.shape} does not match "
                f"{n} degrees")
        object.__setattr__(self, "c_bar", c)
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))

    @property
    def dim_n(self):
        return len(self.degrees)

    def bracket(self, a, b):
        """[a, b] in coordinates, batched over leading axes."""
        return np.einsum("...i,...j,ijk->...k", a, b, self.c_bar)

    def validate(self, tolerance: float = 1e-9):
        """Check grading, antisymmetry, Jacobi and step-M nilpotency."""
        c = self.c_bar
        deg = np.asarray(self.degrees)
        off = c[deg[:, None, None] + deg[None, :, None] != deg[None, None, :]]
        if off.size and np.max(np.abs(off)) != 0.0:
            raise GradingViolation(
                "graded algebra has nonzero off-grading entries",
                residual=float(np.max(np.abs(off))))
        anti = np.max(np.abs(c + np.swapaxes(c, 0, 1)))
        if anti > tolerance:
            raise JacobiViolation(
                f"structure tensor not antisymmetric: defect {anti:.3e}")
        jac = (np.einsum("ijm,mkl->ijkl", c, c)
               + np.einsum("jkm,mil->ijkl", c, c)
               + np.einsum("kim,mjl->ijkl", c, c))
        jac_res = float(np.max(np.abs(jac))) if jac.size else 0.0
        if jac_res > tolerance:
            raise JacobiViolation(
                f"Jacobi identity fails: residual {jac_res:.3e} "
                f"(the frame is not regular at this point)")
        # lower central series via iterated adjoint action; span holds an
        # orthonormal basis of the current term
        span = np.eye(self.dim_n)
        norm = 0.0
        for _ in range(self.depth_m):
            new = np.einsum("ijk,jm->kim", c, span).reshape(self.dim_n, -1)
            norm = float(np.linalg.norm(new, ord=2)) if new.size else 0.0
            if norm <= tolerance:
                span = np.zeros((self.dim_n, 0))
                break
            q, s, _ = np.linalg.svd(new, full_matrices=False)
            span = q[:, s > max(tolerance, 1e-13 * s[0])]
        if span.shape[1]:
            raise JacobiViolation(
                f"algebra is not nilpotent of step {self.depth_m}: "
                f"lower central series survives with norm {norm:.3e}")
        return jac_res


def nilpotentize(structure: StructureField, degrees, depth_m: int,
                 tolerance: float = 1e-9) -> GradedAlgebra:
    """Truncate structure constants to the grading and validate.

    Entries c_ijk with deg_i + deg_j != deg_k are set to zero; the rest
    are antisymmetrized to remove solver roundoff.  Raises
    JacobiViolation when the truncation is not a Lie algebra, which
    flags a non-regular input frame.
    """
    c = np.array(structure.c, dtype=float)
    deg = np.asarray(degrees)
    on_grading = deg[:, None, None] + deg[None, :, None] == deg[None, None, :]
    c = np.where(on_grading, c, 0.0)
    c = 0.5 * (c - np.swapaxes(c, 0, 1))
    alg = GradedAlgebra(c, tuple(degrees), int(depth_m))
    alg.validate(tolerance)
    return alg


def algebra_at(frame: Frame, g, strict: bool = True,
               tolerance: float = 1e-8) -> GradedAlgebra:
    """Graded algebra of a frame at base point g."""
    structure = structure_constants(frame, g, strict=strict,
                                    tolerance=tolerance)
    return nilpotentize(structure, frame.degrees, frame.depth_m)


@dataclass(frozen=True)
class GroupElement:
    """Point of the local group in first-kind coordinates.

    x may carry leading batch axes; all operations broadcast.
    """

    x: np.ndarray
    algebra: GradedAlgebra

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.shape[-1:] != (self.algebra.dim_n,):
            raise ConfigError(
                f"coordinate shape {x.shape} does not end in "
                f"({self.algebra.dim_n},)")
        object.__setattr__(self, "x", x)

    @classmethod
    def identity(cls, algebra: GradedAlgebra) -> "GroupElement":
        return cls(np.zeros(algebra.dim_n), algebra)

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return bch_product(self, other)

    def inverse(self) -> "GroupElement":
        return group_inverse(self)

    def dilate(self, eps: float) -> "GroupElement":
        return homogeneous_dilation(self, eps)

    def norm(self):
        return homogeneous_norm(self)


def _require_same_algebra(a: GroupElement, b: GroupElement):
    if a.algebra is not b.algebra and not (
            a.algebra.degrees == b.algebra.degrees
            and np.array_equal(a.algebra.c_bar, b.algebra.c_bar)):
        raise OutOfDomain("group elements belong to different algebras")


def bch_coords(alg: GradedAlgebra, a, b) -> np.ndarray:
    """BCH product in coordinates, batched; exact at depth <= 6."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    table = _word_table(alg.depth_m)
    letters = (a, b)
    suffix_cache = {}

    def value(word):
        if word not in suffix_cache:
            if len(word) == 1:
                suffix_cache[word] = letters[word[0]]
            else:
                suffix_cache[word] = alg.bracket(letters[word[0]],
                                                 value(word[1:]))
        return suffix_cache[word]

    out = None
    for word, coeff in table.items():
        term = coeff * value(word)
        out = term if out is None else out + term
    return out


def bch_product(a: GroupElement, b: GroupElement) -> GroupElement:
    """Group product: flow along a, then along b."""
    _require_same_algebra(a, b)
    return GroupElement(bch_coords(a.algebra, a.x, b.x), a.algebra)


def group_inverse(a: GroupElement) -> GroupElement:
    """Coordinate negation; exact inverse in first-kind coordinates."""
    return GroupElement(-a.x, a.algebra)


def dilate_coords(degrees, a, eps) -> np.ndarray:
    deg = np.asarray(degrees, dtype=float)
    return np.asarray(a, dtype=float) * np.asarray(eps, dtype=float)[..., None] ** deg


def homogeneous_dilation(a: GroupElement, eps) -> GroupElement:
    """delta_eps: scale coordinate i by eps**deg_i; any eps > 0."""
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise OutOfDomain("dilation parameter must be positive")
    return GroupElement(dilate_coords(a.algebra.degrees, a.x, eps), a.algebra)


def dist_inf_group(a: GroupElement, b: GroupElement):
    """Group quasimetric: weighted norm of the coordinates of b seen
    from a, i.e. of inverse(a) * b."""
    _require_same_algebra(a, b)
    z = bch_coords(a.algebra, -a.x, b.x)
    return weighted_norm(a.algebra.degrees, z)


def homogeneous_norm(a: GroupElement):
    """|a| = distance from the identity; equals the weighted norm."""
    return weighted_norm(a.algebra.degrees, a.x)


def nilpotent_field(alg: GradedAlgebra, i: int, x) -> np.ndarray:
    """The i-th left-invariant field at x (1-based index), batched.

    Defined as d/dt at t = 0 of bch_coords(x, t e_i): only the words
    of the BCH table containing the letter Y exactly once contribute.
    """
    x = np.asarray(x, dtype=float)
    e = np.zeros(alg.dim_n)
    e[i - 1] = 1.0
    table = _word_table(alg.depth_m)
    out = np.zeros(np.broadcast_shapes(x.shape, e.shape))
    for word, coeff in table.items():
        if sum(word) != 1:
            continue
        acc = x if word[-1] == 0 else np.broadcast_to(e, x.shape)
        for letter in word[-2::-1]:
            acc = alg.bracket(x if letter == 0 else e, acc)
        out = out + coeff * acc
    return out


def nilpotent_frame_matrix(alg: GradedAlgebra, x) -> np.ndarray:
    """All fields at once: out[..., i, j] = j-th component of field i+1."""
    rows = [nilpotent_field(alg, i, x) for i in range(1, alg.dim_n + 1)]
    return np.stack(rows, axis=-2)


def estimate_triangle_constant(alg: GradedAlgebra, n: int = 10000,
                               seed: int = 0, radius: float = 1.0) -> float:
    """max |a*b| / (|a| + |b|) over n sampled pairs in the weighted box."""
    rng = np.random.default_rng(seed)
    deg = np.asarray(alg.degrees, dtype=float)
    half = radius ** deg
    a = rng.uniform(-half, half, size=(n, alg.dim_n))
    b = rng.uniform(-half, half, size=(n, alg.dim_n))
    prod = bch_coords(alg, a, b)
    num = weighted_norm(alg.degrees, prod)
    den = weighted_norm(alg.degrees, a) + weighted_norm(alg.degrees, b)
    return float(np.max(num / den))


def estimate_symmetry_defect(alg: GradedAlgebra, n: int = 10000,
                             seed: int = 0, radius: float = 1.0) -> float:
    """max over pairs of d(a,b)/d(b,a) for the group quasimetric."""
    rng = np.random.default_rng(seed)
    deg = np.asarray(alg.degrees, dtype=float)
    half = radius ** deg
    a = rng.uniform(-half, half, size=(n, alg.dim_n))
    b = rng.uniform(-half, half, size=(n, alg.dim_n))
    d_ab = weighted_norm(alg.degrees, bch_coords(alg, -a, b))
    d_ba = weighted_norm(alg.degrees, bch_coords(alg, -b, a))
    return float(np.max(d_ab / d_ba))
