"""Differentials of maps between charts as degree-blocked homomorphisms.

A differentiable map between two charted spaces is approximated, to
first homogeneous order, by a linear map of tangent-group coordinates
that preserves the grading: entry (j, i) can be nonzero only when the
target degree of j equals the source degree of i.  This module fits
that matrix numerically by rescaling the map through the dilations of
both charts, checks the five equivalent residual forms of
differentiability on a shared probe set, and verifies the chain rule
for compositions.

Maps are supplied as polynomial coordinate expressions (the same
small language the frames use) or picked from the built-in catalog.
"""

from dataclasses import dataclass, replace

import numpy as np
import sympy as sp

from .errors import ConfigError, Diverging, OutOfDomain
from .expmap import Chart, dist_inf
from .frame import _compile_entries, _parse_poly, _symbols, weighted_norm
from .limits import ConvergenceReport, EpsilonLadder, estimate_limit
from .nilpotent import GradedAlgebra, algebra_at, bch_coords
from .report import CheckRow, Rung

__all__ = [
    "HomogeneousHom", "check_homogeneous_hom", "PointMap", "make_map",
    "compose_maps", "builtin_map_names", "builtin_map", "resolve_map",
    "pansu_differential", "check_equivalences", "chain_rule_check",
]


# ---------------------------------------------------------------------------
# degree-blocked linear maps

@dataclass(frozen=True)
class HomogeneousHom:
    """Linear map of tangent-group coordinates with a degree block pattern.

    Rows belong to target coordinates, columns to source coordinates.
    The candidate is stored as given; check_homogeneous_hom reports
    whether it actually respects the blocks and the group product.
    """

    matrix: np.ndarray
    source: GradedAlgebra
    target: GradedAlgebra

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        want = (self.target.dim_n, self.source.dim_n)
        if m.shape != want:
            raise ConfigError(f"matrix shape {m.shape}, expected {want}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, alg: GradedAlgebra) -> "HomogeneousHom":
        return cls(np.eye(alg.dim_n), alg, alg)

    def __call__(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.matrix.T

    def compose(self, inner: "HomogeneousHom") -> "HomogeneousHom":
        if inner.target.degrees != self.source.degrees:
            raise OutOfDomain("composition needs matching middle degrees")
        return HomogeneousHom(self.matrix @ inner.matrix,
                              inner.source, self.target)


def _block_mask(target: GradedAlgebra, source: GradedAlgebra) -> np.ndarray:
    dt = np.asarray(target.degrees)[:, None]
    ds = np.asarray(source.degrees)[None, :]
    return dt == ds


def check_homogeneous_hom(candidate: HomogeneousHom, samples=None, *,
                          n_samples: int = 200, seed: int = 0,
                          radius: float = 0.5,
                          tolerance: float = 1e-8) -> list:
    """Verify the block pattern and the homomorphism property on samples.

    Returns check rows; nothing is raised, failures are reported.  The
    off-block entries must be exactly zero, the product residual
    max |L(a * b) - L(a) * L(b)| stays within the tolerance, and the
    matrix commutes with the paired dilations as an identity.
    """
    src, dst = candidate.source, candidate.target
    mask = _block_mask(dst, src)
    off = np.abs(candidate.matrix[~mask])
    worst_off = float(off.max()) if off.size else 0.0
    rows = [CheckRow(
        check_id="hom_block_pattern", passed=bool(np.all(off == 0.0)),
        tolerance=0.0,
        rungs=[Rung(eps=0.0, measured=worst_off, reference=0.0,
                    error=worst_off)],
        detail=f"largest off-block entry {worst_off:.3g}")]

    if samples is None:
        rng = np.random.default_rng(seed)
        shape = (n_samples, src.dim_n)
        scale = radius ** np.asarray(src.degrees, dtype=float)
        a = rng.uniform(-1.0, 1.0, shape) * scale
        b = rng.uniform(-1.0, 1.0, shape) * scale
    else:
        a, b = (np.asarray(s, dtype=float) for s in samples)
    lhs = candidate(bch_coords(src, a, b))
    rhs = bch_coords(dst, candidate(a), candidate(b))
    resid = float(np.max(np.abs(lhs - rhs)))
    rows.append(CheckRow(
        check_id="hom_product_residual", passed=resid <= tolerance,
        tolerance=tolerance,
        rungs=[Rung(eps=0.0, measured=resid, reference=0.0, error=resid)],
        detail=f"max |L(a b) - L(a) L(b)| = {resid:.3e} "
               f"over {len(np.atleast_2d(a))} pairs"))

    # dilation commutation is a per-entry matrix identity
    worst = 0.0
    for t in (0.5, 0.1, 2.0):
        dl = (t ** np.asarray(dst.degrees, dtype=float))[:, None] \
            * candidate.matrix
        ld = candidate.matrix \
            * (t ** np.asarray(src.degrees, dtype=float))[None, :]
        worst = max(worst, float(np.max(np.abs(dl - ld))))
    rows.append(CheckRow(
        check_id="hom_dilation_commutation", passed=worst == 0.0,
        tolerance=0.0,
        rungs=[Rung(eps=0.0, measured=worst, reference=0.0, error=worst)],
        detail=f"max |delta_t L - L delta_t| = {worst:.3g} "
               "over t in {0.5, 0.1, 2}"))
    return rows


# ---------------------------------------------------------------------------
# point maps

@dataclass(frozen=True)
class PointMap:
    """A map between chart coordinate spaces, evaluated batched."""

    name: str
    dim_in: int
    dim_out: int
    fn: object

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if pts.shape[-1:] != (self.dim_in,):
            raise ConfigError(
                f"map {self.name} takes {self.dim_in} coordinates, "
                f"got shape {pts.shape}")
        return self.fn(pts)


def make_map(name: str, exprs, dim_in: int) -> PointMap:
    """Compile coordinate expressions in x1..x{dim_in} into a PointMap."""
    syms = _symbols(dim_in)
    parsed = [_parse_poly(e, syms, where=f" (component {j + 1} of {name})")
              for j, e in enumerate(exprs)]
    return PointMap(name=name, dim_in=dim_in, dim_out=len(parsed),
                    fn=_compile_entries(parsed, syms))


def compose_maps(outer: PointMap, inner: PointMap) -> PointMap:
    if inner.dim_out != outer.dim_in:
        raise ConfigError(
            f"cannot compose: {inner.name} produces {inner.dim_out} "
            f"coordinates, {outer.name} takes {outer.dim_in}")
    return PointMap(name=f"{outer.name}({inner.name})",
                    dim_in=inner.dim_in, dim_out=outer.dim_out,
                    fn=lambda pts: outer(inner(pts)))


_ROT_C, _ROT_S = sp.cos(sp.Rational(3, 10)), sp.sin(sp.Rational(3, 10))

_MAP_TABLE = {
    # automorphisms of the dimension-3 step-2 group
    "shear": ("x1 + x2", "x2", "x3"),
    "rotation": (f"{sp.N(_ROT_C, 20)}*x1 - {sp.N(_ROT_S, 20)}*x2",
                 f"{sp.N(_ROT_S, 20)}*x1 + {sp.N(_ROT_C, 20)}*x2", "x3"),
    "anisotropic": ("2*x1", "x2/2", "x3"),
    "dilation-half": ("x1/2", "x2/2", "x3/4"),
    # automorphism plus perturbations of homogeneous order above the degree
    "shear-perturbed": ("x1 + x2 + x1**2", "x2", "x3 + x1**3"),
    # degree-1 coordinate leaking into the degree-2 slot: not differentiable
    "vertical-leak": ("x1", "x2", "x3 + x1"),
}


def builtin_map_names():
    return ("identity",) + tuple(sorted(_MAP_TABLE))


def builtin_map(name: str, dim: int = 3) -> PointMap:
    if name == "identity":
        return PointMap(name="identity", dim_in=dim, dim_out=dim,
                        fn=lambda pts: np.array(pts, dtype=float))
    if name not in _MAP_TABLE:
        raise ConfigError(
            f"unknown map {name!r}; built-ins: "
            f"{', '.join(builtin_map_names())}")
    return make_map(name, _MAP_TABLE[name], 3)


def resolve_map(spec: str, dim: int = 3) -> PointMap:
    """Resolve a CLI map argument: built-in name or definition file."""
    if spec == "identity" or spec in _MAP_TABLE:
        return builtin_map(spec, dim)
    import os
    if os.path.exists(spec):
        import yaml
        try:
            with open(spec, "r", encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse map file {spec}: {exc}") from None
        if not isinstance(data, dict) or "exprs" not in data:
            raise ConfigError(f"map file {spec} needs an 'exprs' list")
        return make_map(str(data.get("name", spec)), data["exprs"],
                        int(data.get("dim_in", dim)))
    raise ConfigError(
        f"{spec!r} is neither a built-in map ({', '.join(builtin_map_names())}) "
        f"nor a readable file")


# ---------------------------------------------------------------------------
# the differential

def _probe_coords(alg: GradedAlgebra, radius: float) -> np.ndarray:
    """Deterministic probe set: per-axis ticks plus two mixed points."""
    deg = np.asarray(alg.degrees, dtype=float)
    n = alg.dim_n
    ticks = radius ** deg
    probes = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = ticks[i]
        probes.append(e)
        probes.append(-e)
    mixed = (radius / 2.0) ** deg
    probes.append(mixed)
    probes.append(-mixed)
    return np.stack(probes)


def _rebased(chart: Chart, base) -> Chart:
    return replace(chart, base=np.asarray(base, dtype=float), _structure=None)


def _metric_floor(chart: Chart) -> float:
    tol = max(chart.ode_tolerance, chart.newton_tolerance)
    return 10.0 * tol ** (1.0 / max(chart.frame.degrees))


def _rescaled_images(f: PointMap, source: Chart, target: Chart,
                     probes: np.ndarray, eps_values: np.ndarray):
    """coords of delta_{1/t} f(delta_t v) at f(base), per rung t."""
    src_deg = np.asarray(source.frame.degrees, dtype=float)
    dst_deg = np.asarray(target.frame.degrees, dtype=float)
    out = []
    for t in eps_values:
        pts = source.exp_map(probes * t ** src_deg)
        images = f(pts)
        coords = target.normal_coords(images)
        out.append(coords * t ** -dst_deg)
    return out


def pansu_differential(f: PointMap, source: Chart, target: Chart,
                       ladder: EpsilonLadder = None, *,
                       probe_radius: float = 0.5,
                       tolerance: float = 1e-3):
    """Fit the degree-blocked differential of f at the source base.

    Per rung t the map is conjugated by the paired dilations,
    v -> delta_{1/t} f(delta_t v), and evaluated on a deterministic
    probe set; the matrix is fitted block by block at the smallest
    rung, and the residual ladder of the rescaled family against that
    matrix is reported.  Raises Diverging when the residuals grow,
    which is the numerical signature of a map that is not
    differentiable at the base.

    Returns (HomogeneousHom, ConvergenceReport).
    """
    ladder = ladder or EpsilonLadder()
    target = _rebased(target, f(source.base))
    src_alg = algebra_at(source.frame, source.base)
    dst_alg = algebra_at(target.frame, target.base)
    probes = _probe_coords(src_alg, probe_radius)
    eps_values = ladder.eps_values
    rescaled = _rescaled_images(f, source, target, probes, eps_values)

    # block least squares at the smallest rung; off-blocks exactly zero
    W = rescaled[-1]
    matrix = np.zeros((dst_alg.dim_n, src_alg.dim_n))
    src_deg = np.asarray(src_alg.degrees)
    dst_deg = np.asarray(dst_alg.degrees)
    for d in sorted(set(dst_alg.degrees)):
        rows = np.nonzero(dst_deg == d)[0]
        cols = np.nonzero(src_deg == d)[0]
        if len(cols) == 0:
            continue
        sol, *_ = np.linalg.lstsq(probes[:, cols], W[:, rows], rcond=None)
        matrix[np.ix_(rows, cols)] = sol.T
    hom = HomogeneousHom(matrix, src_alg, dst_alg)

    predicted = hom(probes)
    residuals = [float(np.max(weighted_norm(
        dst_alg.degrees, bch_coords(dst_alg, -w, predicted)))) for w in rescaled]
    floor = _metric_floor(target) / eps_values
    report = estimate_limit(residuals, None, ladder, tolerance=tolerance,
                            floor=floor)
    return hom, report


def check_equivalences(f: PointMap, source: Chart, target: Chart,
                       L: HomogeneousHom, ladder: EpsilonLadder = None, *,
                       probe_radius: float = 0.5,
                       tolerance: float = 1e-3) -> list:
    """Evaluate the five equivalent residual forms of differentiability.

    All five are measured on one probe set along one ladder t -> 0:

      1. group distance at f(base) between the dilation-conjugated map
         and L, uniform over probes;
      2. group distance between f(v) and L(v) against the source
         space distance, as v -> base along dilations;
      3. space distance in the target against the source group
         distance;
      4. space distance in the target against the source space
         distance;
      5. space distance between f(delta_t v) and L(delta_t v) against
         t, uniform over probes.

    A differential makes all five vanish together; a wrong candidate
    makes none of them.  Returns five check rows.
    """
    ladder = ladder or EpsilonLadder()
    target = _rebased(target, f(source.base))
    src_alg = L.source
    dst_alg = L.target
    probes = _probe_coords(src_alg, probe_radius)
    src_deg = np.asarray(source.frame.degrees, dtype=float)
    eps_values = ladder.eps_values

    rescaled = _rescaled_images(f, source, target, probes, eps_values)
    predicted = L(probes)
    src_norms = weighted_norm(src_alg.degrees, probes)

    r1, r2, r3, r4, r5 = [], [], [], [], []
    for k, t in enumerate(eps_values):
        r1.append(float(np.max(weighted_norm(
            dst_alg.degrees, bch_coords(dst_alg, -rescaled[k], predicted)))))

        scaled_coords = probes * t ** src_deg
        v_pts = source.exp_map(scaled_coords)
        f_coords = target.normal_coords(f(v_pts))
        L_pts = target.exp_map(L(scaled_coords))
        num_group = weighted_norm(
            dst_alg.degrees, bch_coords(dst_alg, -f_coords, L(scaled_coords)))
        num_space = dist_inf(target.frame, f(v_pts), L_pts,
                             ode_tolerance=target.ode_tolerance,
                             newton_tolerance=target.newton_tolerance)
        den_group = t * src_norms
        den_space = source.dist_from_base(v_pts)
        den_space = np.where(den_space == 0.0, np.inf, den_space)
        r2.append(float(np.max(num_group / den_space)))
        r3.append(float(np.max(num_space / den_group)))
        r4.append(float(np.max(num_space / den_space)))
        r5.append(float(np.max(num_space / t)))

    floor = _metric_floor(target) / eps_values
    names = ("rescaled_family_vs_L", "group_gap_vs_space_distance",
             "space_gap_vs_group_distance", "space_gap_vs_space_distance",
             "space_gap_vs_scale")
    rows = []
    for name, values in zip(names, (r1, r2, r3, r4, r5)):
        try:
            rep = estimate_limit(values, None, ladder, tolerance=tolerance,
                                 floor=floor)
            passed, detail = rep.converged, \
                f"final residual {rep.values[-1]:.3e}, " \
                f"order {rep.fitted_order:.3g}"
            rungs = rep.rungs()
        except Diverging as exc:
            rep = exc.report
            passed = False
            detail = f"diverging: {exc}"
            rungs = rep.rungs()
        rows.append(CheckRow(check_id=f"equivalence_{name}", passed=passed,
                             tolerance=tolerance,
                             fitted_order=rep.fitted_order, rungs=rungs,
                             detail=detail))
    return rows


@dataclass(frozen=True)
class ChainRuleReport:
    """Composition differential against the product of the factors."""

    outer: HomogeneousHom
    inner: HomogeneousHom
    composed: HomogeneousHom
    product: HomogeneousHom
    gap: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.tolerance


def chain_rule_check(f: PointMap, phi: PointMap, source: Chart, mid: Chart,
                     target: Chart, ladder: EpsilonLadder = None, *,
                     tolerance: float = 1e-4) -> ChainRuleReport:
    """Differential of phi(f) against the product of the differentials.

    Estimates the three matrices independently, multiplies the factors,
    and reports the largest entry gap.
    """
    inner, _ = pansu_differential(f, source, mid, ladder)
    mid_at_image = _rebased(mid, f(source.base))
    outer, _ = pansu_differential(phi, mid_at_image, target, ladder)
    composed, _ = pansu_differential(compose_maps(phi, f), source, target,
                                     ladder)
    product = outer.compose(inner)
    gap = float(np.max(np.abs(composed.matrix - product.matrix)))
    return ChainRuleReport(outer=outer, inner=inner, composed=composed,
                           product=product, gap=gap, tolerance=tolerance)
