"""Weighted polynomial vector-field frames on R^N.

A frame is a basis of vector fields X_1, ..., X_N with polynomial
coefficients and integer degrees 1 = deg X_1 <= ... <= deg X_N = M.  The
degree-m layer H_m is spanned by the fields of degree <= m.  Frames are the
input to every other module: charts, nilpotentizations, and the whole
verification harness are built from them.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
import yaml

from .errors import ConfigError, GradingViolation, SingularFrame

_TOL_GRADING = 1e-8
_TOL_SPAN_SV = 1e-10
_COND_MAX = 1e8


def _symbols(n: int):
    return sp.symbols(f"x1:{n + 1}")


def _parse_poly(text, syms, where=""):
    """Parse one coefficient expression; must be polynomial in x1..xN."""
    try:
        expr = sp.sympify(text, locals={str(s): s for s in syms}, rational=True)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse coefficient {text!r}{where}: {exc}") from None
    extra = expr.free_symbols - set(syms)
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise ConfigError(f"coefficient {text!r}{where} uses unknown symbols: {names}")
    if not expr.is_polynomial(*syms):
        raise ConfigError(f"coefficient {text!r}{where} is not polynomial")
    return sp.expand(expr)


def _compile_entries(exprs, syms):
    """Compile flat sympy expressions into f(X: (..., n_sym)) -> (..., n_expr)."""
    fns = [sp.lambdify(syms, e, modules="numpy") for e in exprs]

    def call(pts):
        pts = np.asarray(pts, dtype=float)
        cols = [pts[..., k] for k in range(len(syms))]
        out = np.empty(pts.shape[:-1] + (len(fns),), dtype=float)
        for j, fn in enumerate(fns):
            out[..., j] = fn(*cols)
        return out

    return call


@dataclass(frozen=True)
class Frame:
    """A weighted polynomial frame.

    coeffs[i][j] is the sympy coefficient of d/dx_{j+1} in the field
    X_{i+1}; layer_dims[m-1] = dim H_m is derived from the degrees.
    """

    name: str
    dim_n: int
    depth_m: int
    degrees: tuple
    coeffs: tuple          # tuple of tuples of sympy expressions
    alpha: float = 1.0
    coordinate_radius: float = 1.0

    @property
    def layer_dims(self):
        return tuple(sum(1 for d in self.degrees if d <= m)
                     for m in range(1, self.depth_m + 1))

    @property
    def symbols(self):
        return _symbols(self.dim_n)

    @functools.cached_property
    def _fields_fn(self):
        flat = [self.coeffs[i][j] for i in range(self.dim_n)
                for j in range(self.dim_n)]
        f = _compile_entries(flat, self.symbols)
        n = self.dim_n
        return lambda pts: f(pts).reshape(np.shape(pts)[:-1] + (n, n))

    @functools.cached_property
    def _dfields_fn(self):
        syms = self.symbols
        flat = [sp.diff(self.coeffs[i][j], syms[k])
                for i in range(self.dim_n)
                for j in range(self.dim_n)
                for k in range(self.dim_n)]
        f = _compile_entries(flat, syms)
        n = self.dim_n
        return lambda pts: f(pts).reshape(np.shape(pts)[:-1] + (n, n, n))

    def fields(self, pts):
        """Coefficient rows at pts: out[..., i, j] = j-th component of X_{i+1}."""
        return self._fields_fn(pts)

    def dfields(self, pts):
        """Jacobian tensor: out[..., i, j, k] = d(X_{i+1})_j / dx_{k+1}."""
        return self._dfields_fn(pts)

    def degree_weights(self, eps):
        """eps**deg for each field, broadcasting over eps."""
        eps = np.asarray(eps, dtype=float)
        return eps[..., None] ** np.asarray(self.degrees, dtype=float)


def make_frame(name, degrees, coeff_rows, alpha=1.0, coordinate_radius=1.0):
    """Build and structurally validate a Frame.

    coeff_rows: N rows, each a sequence of N polynomial expressions
    (strings or sympy) giving the components of one field.
    """
    degrees = tuple(int(d) for d in degrees)
    n = len(degrees)
    if n == 0:
        raise ConfigError("frame needs at least one field")
    m = degrees[-1]
    if degrees[0] != 1:
        raise ConfigError(f"first field must have degree 1, got {degrees[0]}")
    if any(b < a for a, b in zip(degrees, degrees[1:])):
        raise ConfigError(f"degrees must be nondecreasing, got {degrees}")
    if any(d < 1 or d > m for d in degrees):
        raise ConfigError(f"degrees must lie in [1, {m}], got {degrees}")
    if len(coeff_rows) != n:
        raise ConfigError(f"expected {n} fields, got {len(coeff_rows)}")
    syms = _symbols(n)
    rows = []
    for i, row in enumerate(coeff_rows):
        row = list(row)
        if len(row) == 0:
            raise ConfigError(f"field X{i + 1} has an empty coefficient list")
        if len(row) != n:
            raise ConfigError(
                f"field X{i + 1} has {len(row)} coefficients, expected {n}")
        rows.append(tuple(_parse_poly(c, syms, where=f" (field X{i + 1})")
                          for c in row))
    return Frame(name=name, dim_n=n, depth_m=m, degrees=degrees,
                 coeffs=tuple(rows), alpha=float(alpha),
                 coordinate_radius=float(coordinate_radius))


def weighted_norm(degrees, v) -> np.ndarray:
    """max_i |v_i|^(1/deg_i), batched over leading axes of v."""
    v = np.asarray(v, dtype=float)
    exponents = 1.0 / np.asarray(degrees, dtype=float)
    return np.max(np.abs(v) ** exponents, axis=-1)


def eval_frame(frame: Frame, p) -> np.ndarray:
    """Frame matrix at p: column i is X_{i+1}(p).

    Batched: p of shape (..., N) gives (..., N, N).
    """
    rows = frame.fields(p)
    return np.swapaxes(rows, -1, -2)


def frame_drift(frame: Frame, p, coeffs) -> np.ndarray:
    """sum_i coeffs_i X_i(p), batched over leading axes."""
    return np.einsum("...ij,...i->...j", frame.fields(p), coeffs)


def bracket(frame: Frame, i: int, j: int, p) -> np.ndarray:
    """Lie bracket [X_i, X_j] at p (1-based field indices).

    Computed as (DX_j)X_i - (DX_i)X_j with exact symbolic derivatives,
    which matches the differential-operator commutator X_i X_j - X_j X_i.
    """
    n = frame.dim_n
    if not (1 <= i <= n and 1 <= j <= n):
        raise ConfigError(f"field indices must lie in 1..{n}, got ({i}, {j})")
    F = frame.fields(p)
    D = frame.dfields(p)
    xi = F[..., i - 1, :]
    xj = F[..., j - 1, :]
    return (np.einsum("...jk,...k->...j", D[..., j - 1, :, :], xi)
            - np.einsum("...jk,...k->...j", D[..., i - 1, :, :], xj))


@dataclass(frozen=True)
class StructureField:
    """Structure constants c[i, j, k] with [X_i, X_j] = sum_k c_ijk X_k at a point."""

    base_point: np.ndarray
    c: np.ndarray
    residual_grading: float


def structure_constants(frame: Frame, p, strict: bool = True,
                        tolerance: float = _TOL_GRADING) -> StructureField:
    """Solve the frame decomposition of every bracket at p.

    residual_grading is the largest |c_ijk| over triples where
    deg X_k > deg X_i + deg X_j; with strict=True such an escape raises
    GradingViolation.  Negative controls call with strict=False and keep
    the truncated tensor.
    """
    p = np.asarray(p, dtype=float)
    n = frame.dim_n
    F = eval_frame(frame, p)
    cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > _COND_MAX:
        raise SingularFrame(
            f"frame matrix at {p.tolist()} has condition number {cond:.3e}")
    D = frame.dfields(p)
    rows = frame.fields(p)
    # b[i, j, :] = [X_{i+1}, X_{j+1}](p)
    b = (np.einsum("jlk,ik->ijl", D, rows) - np.einsum("ilk,jk->ijl", D, rows))
    c = np.linalg.solve(F[None, None, :, :], b[..., None])[..., 0]
    deg = np.asarray(frame.degrees)
    escape = deg[None, None, :] > deg[:, None, None] + deg[None, :, None]
    residual = float(np.max(np.abs(np.where(escape, c, 0.0)))) if n else 0.0
    if strict and residual > tolerance:
        idx = np.argwhere(escape & (np.abs(c) > tolerance))
        entries = [(int(i) + 1, int(j) + 1, int(k) + 1, float(c[i, j, k]))
                   for i, j, k in idx[:8]]
        raise GradingViolation(
            f"brackets escape the declared grading at {p.tolist()}: "
            f"residual {residual:.3e}, entries {entries}",
            residual=residual, entries=entries)
    return StructureField(base_point=p, c=c, residual_grading=residual)


@dataclass
class RegularityReport:
    """Point-sweep verdict on the three defining frame properties."""

    n_points: int
    worst_condition: float
    worst_layer_sv: float        # smallest singular value over layers/points
    max_grading_residual: float
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


def validate_regularity(frame: Frame, n_points: int = 1000, seed: int = 0,
                        box_scale: float = 1.0, points=None,
                        tolerance: float = _TOL_GRADING) -> RegularityReport:
    """Empirically check frame regularity on random points in a box.

    Per point: (1) the frame matrix is well conditioned, (2) the first
    dim H_m fields are independent for every layer m, (3) brackets do not
    escape the grading beyond tolerance.
    """
    if points is None:
        rng = np.random.default_rng(seed)
        points = rng.uniform(-box_scale, box_scale, size=(n_points, frame.dim_n))
    else:
        points = np.atleast_2d(np.asarray(points, dtype=float))
    report = RegularityReport(n_points=len(points), worst_condition=0.0,
                              worst_layer_sv=np.inf, max_grading_residual=0.0)
    mats = eval_frame(frame, points)
    conds = np.linalg.cond(mats)
    report.worst_condition = float(np.max(conds))
    bad = np.nonzero(~np.isfinite(conds) | (conds > _COND_MAX))[0]
    for i in bad:
        report.failures.append((int(i), "singular",
                                f"condition {conds[i]:.3e}"))
    good = np.isfinite(conds) & (conds <= _COND_MAX)
    for m, dim in enumerate(frame.layer_dims, start=1):
        sub = mats[..., :dim]                    # columns X_1..X_dim
        svals = np.linalg.svd(sub, compute_uv=False)
        smin = svals[..., -1]
        report.worst_layer_sv = min(report.worst_layer_sv, float(np.min(smin)))
        for i in np.nonzero(good & (smin < _TOL_SPAN_SV))[0]:
            report.failures.append(
                (int(i), "span", f"layer H_{m} rank-deficient, sv {smin[i]:.3e}"))
    for i in np.nonzero(good)[0]:
        try:
            sf = structure_constants(frame, points[i], strict=True,
                                     tolerance=tolerance)
            report.max_grading_residual = max(report.max_grading_residual,
                                              sf.residual_grading)
        except GradingViolation as exc:
            report.max_grading_residual = max(report.max_grading_residual,
                                              exc.residual)
            report.failures.append((int(i), "grading", str(exc)))
    if not np.isfinite(report.worst_layer_sv):
        report.worst_layer_sv = 0.0
    return report


# ---------------------------------------------------------------------------
# built-in frames

def _heisenberg():
    return make_frame("heisenberg", (1, 1, 2),
                      [("1", "0", "-x2/2"),
                       ("0", "1", "x1/2"),
                       ("0", "0", "1")])


def _heisenberg_curved():
    # same algebra at the origin, on-grading constant c_123 = 1 + 2 x1
    return make_frame("heisenberg-curved", (1, 1, 2),
                      [("1", "0", "-x2/2"),
                       ("0", "1", "x1/2 + x1**2"),
                       ("0", "0", "1")])


def _heisenberg_mislabeled():
    # negative control: [X1, X2] = X3 escapes the declared grading (1+1 < 3)
    return make_frame("heisenberg-mislabeled", (1, 1, 3),
                      [("1", "0", "-x2/2"),
                       ("0", "1", "x1/2"),
                       ("0", "0", "1")])


def _engel():
    return make_frame("engel", (1, 1, 2, 3),
                      [("1", "0", "0", "0"),
                       ("0", "1", "x1", "x3"),
                       ("0", "0", "1", "0"),
                       ("0", "0", "0", "1")])


def _engel_curved():
    return make_frame("engel-curved", (1, 1, 2, 3),
                      [("1", "0", "0", "0"),
                       ("0", "1", "x1 + x1**2", "x3"),
                       ("0", "0", "1", "0"),
                       ("0", "0", "0", "1")])


def _grushin_regularized():
    # anisotropic plane: X2 weighted 2, off-grading bracket [X1, X2] = X1
    return make_frame("grushin-regularized", (1, 2),
                      [("1", "0"),
                       ("x1", "1")])


def _abelian(n):
    if n < 1:
        raise ConfigError(f"abelian frame needs dimension >= 1, got {n}")
    rows = [["1" if j == i else "0" for j in range(n)] for i in range(n)]
    return make_frame(f"abelian:{n}", (1,) * n, rows)


_BUILTINS = {
    "heisenberg": _heisenberg,
    "heisenberg-curved": _heisenberg_curved,
    "heisenberg-mislabeled": _heisenberg_mislabeled,
    "engel": _engel,
    "engel-curved": _engel_curved,
    "grushin-regularized": _grushin_regularized,
}


def builtin_names():
    return sorted(_BUILTINS) + ["abelian:<N>"]


def builtin_frame(name: str) -> Frame:
    if name.startswith("abelian:"):
        tail = name.split(":", 1)[1]
        try:
            n = int(tail)
        except ValueError:
            raise ConfigError(f"bad abelian dimension {tail!r}") from None
        return _abelian(n)
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown built-in frame {name!r}; known: {', '.join(builtin_names())}"
        ) from None


def parse_frame_dict(data: dict, name: str = "frame") -> Frame:
    """Build a frame from a parsed definition mapping."""
    if not isinstance(data, dict):
        raise ConfigError(f"frame definition must be a mapping, got {type(data).__name__}")
    known = {"name", "dim_n", "depth_m", "degrees", "alpha",
             "coordinate_radius", "fields"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown frame keys: {', '.join(sorted(unknown))}")
    for key in ("degrees", "fields"):
        if key not in data:
            raise ConfigError(f"frame definition is missing {key!r}")
    degrees = data["degrees"]
    rows = data["fields"]
    if not isinstance(rows, (list, tuple)):
        raise ConfigError("fields must be a list of coefficient lists")
    fr = make_frame(str(data.get("name", name)), degrees, rows,
                    alpha=data.get("alpha", 1.0),
                    coordinate_radius=data.get("coordinate_radius", 1.0))
    if "dim_n" in data and int(data["dim_n"]) != fr.dim_n:
        raise ConfigError(
            f"dim_n = {data['dim_n']} but {fr.dim_n} fields were given")
    if "depth_m" in data and int(data["depth_m"]) != fr.depth_m:
        raise ConfigError(
            f"depth_m = {data['depth_m']} but max degree is {fr.depth_m}")
    return fr


def load_frame(path: str) -> Frame:
    """Load a frame from a YAML definition file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read frame file {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse frame file {path}: {exc}") from None
    return parse_frame_dict(data, name=path)


def resolve_frame(spec: str) -> Frame:
    """Resolve a CLI frame argument: built-in name or definition file path."""
    if spec.startswith("abelian:") or spec in _BUILTINS:
        return builtin_frame(spec)
    import os
    if os.path.exists(spec):
        return load_frame(spec)
    raise ConfigError(
        f"{spec!r} is neither a built-in frame ({', '.join(builtin_names())}) "
        f"nor a readable file")
