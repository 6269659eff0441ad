"""Words over a local group and the scaled products that globalize them.

A word is a finite tuple of letters multiplied at a contracted scale:
every letter is shrunk by a factor s_n small enough that all partial
products stay where the product is defined, the tree of products is
folded, and the result is expanded back.  At that scale the product is
associative for every parenthesization, words compare through a
quasimetric that collapses a word and its single-step contractions to
the same class, and iterated dilations witness contractibility of the
group to its identity.

Letters are group elements (exact products via the series) or chart
points (products through the scale maps of a chart, at a small but
finite fold scale).
"""

from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

from .errors import ConfigError, OutOfChart, OutOfDomain
from .expmap import Chart
from .frame import weighted_norm
from .limits import chart_quasimetric, sigma_eps
from .nilpotent import (GradedAlgebra, GroupElement, _require_same_algebra,
                        algebra_at, bch_coords, estimate_triangle_constant)

__all__ = [
    "Word", "parenthesizations", "left_comb", "right_comb", "word_scale",
    "scaled_product", "word_distance", "associativity_spread",
    "contract_once", "contractibility_witness", "dilation_path_modulus",
]


# -- parenthesizations: full binary trees with leaves 0..n-1 in order --

@lru_cache(maxsize=None)
def _span_trees(i: int, j: int) -> tuple:
    if j - i == 1:
        return (i,)
    out = []
    for k in range(i + 1, j):
        for left in _span_trees(i, k):
            for right in _span_trees(k, j):
                out.append((left, right))
    return tuple(out)


def parenthesizations(n: int) -> tuple:
    """All full binary trees over n ordered leaves.

    A leaf is its index, an inner node a pair (left, right); the count
    is the Catalan number C(n-1), so 14 trees for n = 5.
    """
    if n < 1:
        raise ConfigError("a word needs at least one letter")
    return _span_trees(0, n)


def left_comb(n: int):
    """(((0, 1), 2), ...): fold strictly from the left."""
    return reduce(lambda t, k: (t, k), range(1, n), 0)


def right_comb(n: int):
    """(0, (1, (2, ...))): fold strictly from the right."""
    return reduce(lambda t, k: (k, t), range(n - 2, -1, -1), n - 1)


def _leaves(tree) -> tuple:
    if isinstance(tree, tuple):
        return _leaves(tree[0]) + _leaves(tree[1])
    return (tree,)


def _check_tree(tree, n: int):
    got = _leaves(tree)
    if got != tuple(range(n)):
        raise ConfigError(f"tree leaves {got} must enumerate 0..{n - 1} "
                          "in order")


@dataclass(frozen=True)
class Word:
    """An ordered tuple of letters sharing one local group.

    Group mode (chart is None) stores GroupElement letters over one
    algebra; chart mode stores manifold coordinate arrays and folds
    products through the chart's scale maps.
    """

    letters: tuple
    chart: Chart = None

    def __post_init__(self):
        letters = tuple(self.letters)
        if not letters:
            raise ConfigError("a word needs at least one letter")
        if self.chart is None:
            if not all(isinstance(a, GroupElement) for a in letters):
                raise ConfigError("group-mode letters must be GroupElement")
            for a in letters[1:]:
                _require_same_algebra(letters[0], a)
        else:
            letters = tuple(np.asarray(a, dtype=float) for a in letters)
            dim = self.chart.frame.dim_n
            for a in letters:
                if a.shape[-1:] != (dim,):
                    raise ConfigError(
                        f"letter shape {a.shape} does not end in ({dim},)")
        object.__setattr__(self, "letters", letters)

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def algebra(self) -> GradedAlgebra:
        if self.chart is None:
            return self.letters[0].algebra
        return algebra_at(self.chart.frame, self.chart.base)


def word_scale(alg: GradedAlgebra, n: int, c_hat: float = None) -> float:
    """Contraction factor s_n for words of length n.

    Shrinks letters far enough below the estimated triangle constant
    that all n - 1 partial products stay in the admissible region.
    """
    if c_hat is None:
        c_hat = estimate_triangle_constant(alg)
    return 0.1 / (n * c_hat ** (n - 1))


def _fold_group(tree, tilde):
    if isinstance(tree, tuple):
        return _fold_group(tree[0], tilde) * _fold_group(tree[1], tilde)
    return tilde[tree]


def _fold_chart(chart, tree, tilde, fold_eps):
    if isinstance(tree, tuple):
        a = _fold_chart(chart, tree[0], tilde, fold_eps)
        b = _fold_chart(chart, tree[1], tilde, fold_eps)
        return sigma_eps(chart, a, b, fold_eps)
    return tilde[tree]


def _contracted_fold(word: Word, tree, s: float, fold_eps: float):
    """Fold the delta_s-scaled letters without the final expansion."""
    if word.chart is None:
        tilde = [a.dilate(s) for a in word.letters]
        return _fold_group(tree, tilde)
    chart = word.chart
    try:
        tilde = [chart.dilate(p, s) for p in word.letters]
        return _fold_chart(chart, tree, tilde, fold_eps)
    except OutOfChart as exc:
        raise OutOfDomain(
            "an intermediate product left the admissible ball: "
            f"{exc}") from exc


def scaled_product(word: Word, tree=None, *, scale: float = None,
                   fold_eps: float = 1e-3):
    """Product of a word's letters, folded along a parenthesization.

    Letters are shrunk by the word scale, folded along `tree` (left
    comb by default), and expanded back.  The contraction keeps every
    partial product inside the region where the product behaves, which
    is what makes the result independent of the tree.  Returns a
    GroupElement in group mode, a point array in chart mode.
    """
    tree = left_comb(word.n) if tree is None else tree
    _check_tree(tree, word.n)
    s = word_scale(word.algebra, word.n) if scale is None else scale
    folded = _contracted_fold(word, tree, s, fold_eps)
    if word.chart is None:
        return folded.dilate(1.0 / s)
    try:
        return word.chart.dilate(folded, 1.0 / s)
    except OutOfChart as exc:
        raise OutOfDomain(
            f"the rescaled product left the admissible ball: {exc}") from exc


def _common_scale(w1: Word, w2: Word) -> float:
    n = max(w1.n, w2.n)
    return word_scale(w1.algebra, n)


def word_distance(w1: Word, w2: Word, *, tree1=None, tree2=None,
                  fold_eps: float = 1e-3):
    """Quasimetric between two words over the same local group.

    Both words are contracted by the scale of the longer one, folded,
    compared, and the distance is expanded by the same factor.  Using
    one shared scale is what collapses a word and its single-step
    contractions to distance zero.
    """
    if (w1.chart is None) != (w2.chart is None):
        raise OutOfDomain("cannot compare group-mode and chart-mode words")
    if w1.chart is None:
        _require_same_algebra(w1.letters[0], w2.letters[0])
    elif w1.chart is not w2.chart:
        raise OutOfDomain("words live in different charts")
    s = _common_scale(w1, w2)
    tree1 = left_comb(w1.n) if tree1 is None else tree1
    tree2 = left_comb(w2.n) if tree2 is None else tree2
    _check_tree(tree1, w1.n)
    _check_tree(tree2, w2.n)
    a = _contracted_fold(w1, tree1, s, fold_eps)
    b = _contracted_fold(w2, tree2, s, fold_eps)
    if w1.chart is None:
        alg = w1.algebra
        d = weighted_norm(alg.degrees, bch_coords(alg, -a.x, b.x)) / s
    else:
        d = chart_quasimetric(w1.chart)(a, b) / s
    return float(d) if np.ndim(d) == 0 else d


def associativity_spread(word: Word, *, scale: float = None,
                         fold_eps: float = 1e-3):
    """Largest coordinate gap between scaled products over all trees.

    Folds are shared across trees (one product per distinct contiguous
    bracketing).  The products are compared coordinate by coordinate
    at the contracted scale, each coordinate rescaled by s^(-degree)
    so the gap reads at the scale of the expanded products.  Batched
    letters give the spread per batch row.
    """
    trees = parenthesizations(word.n)
    s = word_scale(word.algebra, word.n) if scale is None else scale
    if len(trees) < 2:
        return 0.0
    degrees = np.asarray(word.algebra.degrees, dtype=float)
    rescale = s ** -degrees
    cache = {}

    if word.chart is None:
        tilde = [a.dilate(s) for a in word.letters]

        def fold(tree):
            if tree not in cache:
                cache[tree] = (tilde[tree] if not isinstance(tree, tuple)
                               else fold(tree[0]) * fold(tree[1]))
            return cache[tree]

        coords = np.stack([fold(t).x for t in trees])
    else:
        chart = word.chart
        try:
            tilde = [chart.dilate(p, s) for p in word.letters]

            def fold(tree):
                if tree not in cache:
                    cache[tree] = (tilde[tree] if not isinstance(tree, tuple)
                                   else sigma_eps(chart, fold(tree[0]),
                                                  fold(tree[1]), fold_eps))
                return cache[tree]

            pts = np.stack([np.atleast_2d(fold(t)) for t in trees])
            coords = chart.normal_coords(
                pts.reshape(-1, pts.shape[-1])).reshape(pts.shape)
        except OutOfChart as exc:
            raise OutOfDomain(
                "an intermediate product left the admissible ball: "
                f"{exc}") from exc

    gaps = np.abs(coords[:, None] - coords[None, :]) * rescale
    out = gaps.max(axis=(0, 1, -1))
    if word.chart is not None and np.ndim(word.letters[0]) == 1:
        return float(out[0])
    return float(out) if np.ndim(out) == 0 else out


def contract_once(word: Word, i: int, *, fold_eps: float = 1e-3) -> Word:
    """Replace letters i and i + 1 by their single product."""
    if not 0 <= i < word.n - 1:
        raise ConfigError(f"need 0 <= i < {word.n - 1}, got {i}")
    if word.chart is None:
        merged = word.letters[i] * word.letters[i + 1]
    else:
        try:
            merged = sigma_eps(word.chart, word.letters[i],
                               word.letters[i + 1], fold_eps)
        except OutOfChart as exc:
            raise OutOfDomain(
                f"the merged letter left the admissible ball: {exc}") from exc
    return Word(word.letters[:i] + (merged,) + word.letters[i + 2:],
                chart=word.chart)


def contractibility_witness(alg: GradedAlgebra, s: float, a, k: int
                            ) -> GroupElement:
    """Apply the contractive automorphism delta_s to a, k times.

    Each step multiplies the homogeneous norm by s, so the iterates
    march geometrically to the identity.
    """
    if not 0.0 < s < 1.0:
        raise ConfigError(f"contraction ratio must lie in (0, 1), got {s}")
    if k < 0:
        raise ConfigError(f"iteration count must be nonnegative, got {k}")
    out = a if isinstance(a, GroupElement) else GroupElement(a, alg)
    for _ in range(k):
        out = out.dilate(s)
    return out


def dilation_path_modulus(a: GroupElement, n_steps: int = 16) -> float:
    """Largest gap between consecutive samples of t -> delta_t(a).

    The path joins the identity at t = 0 to a at t = 1; a modulus that
    shrinks as the grid refines witnesses continuity of the path, and
    with it linear connectivity of the local group.
    """
    if n_steps < 1:
        raise ConfigError("need at least one step")
    alg = a.algebra
    ts = np.linspace(0.0, 1.0, n_steps + 1)
    degrees = np.asarray(alg.degrees, dtype=float)
    pts = a.x[..., None, :] * ts[:, None] ** degrees
    gaps = weighted_norm(alg.degrees,
                         bch_coords(alg, -pts[..., :-1, :], pts[..., 1:, :]))
    return float(np.max(gaps))
