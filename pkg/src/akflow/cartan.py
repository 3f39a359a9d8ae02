"""Tableaux, Cartan characters, prolongation and Cartan's test in exact arithmetic.

A tableau ``A`` is a subspace of ``Hom(V, W)`` with ``dim V = n`` and
``dim W = m``, given by spanning ``m x n`` matrices.  All ranks are computed
over QQ with sympy's ``DomainMatrix``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from sympy import QQ
from sympy.polys.matrices import DomainMatrix


def _qq(x) -> QQ:
    if isinstance(x, str):
        f = Fraction(x.strip())
    else:
        f = Fraction(x)
    return QQ(f.numerator, f.denominator)


def _dm(rows: list[list], ncols: int) -> DomainMatrix:
    if not rows:
        return DomainMatrix.zeros((0, ncols), QQ)
    return DomainMatrix([[_qq(v) for v in r] for r in rows], (len(rows), ncols), QQ)


def rank(rows: list[list], ncols: int) -> int:
    if not rows:
        return 0
    return _dm(rows, ncols).rank()


@dataclass
class Tableau:
    """Subspace of m x n matrices spanned by ``generators`` (reduced to a basis)."""

    n: int
    m: int
    generators: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("tableau dimensions must be positive")
        vecs = []
        for gen in self.generators:
            if len(gen) != self.m or any(len(row) != self.n for row in gen):
                raise ValueError(f"generator shape must be {self.m}x{self.n}")
            vecs.append([_qq(v) for row in gen for v in row])
        self.basis = self._reduce(vecs)

    def _reduce(self, vecs):
        if not vecs:
            return []
        rref, pivots = _dm(vecs, self.m * self.n).rref()
        rows = rref.to_list()
        return [rows[k] for k in range(len(pivots))]

    @property
    def dim(self) -> int:
        return len(self.basis)

    def entry(self, l: int, a: int, i: int):
        """Entry (a, i) of basis element l."""
        return self.basis[l][a * self.n + i]

    @classmethod
    def from_json(cls, data: dict) -> "Tableau":
        return cls(int(data["n"]), int(data["m"]), [[[str(v) for v in row] for row in g]
                                                    for g in data.get("generators", [])])

    def to_json(self) -> dict:
        gens = [[[str(self.entry(l, a, i)) for i in range(self.n)] for a in range(self.m)]
                for l in range(self.dim)]
        return {"n": self.n, "m": self.m, "generators": gens}


@dataclass
class CartanReport:
    dim_A: int
    characters: list
    prolongation_dim: int
    involutive: bool
    flag_seed: int

    def to_json(self) -> dict:
        return {"dim_A": self.dim_A, "characters": list(self.characters),
                "prolongation_dim": self.prolongation_dim, "involutive": self.involutive,
                "cartan_bound": sum((k + 1) * s for k, s in enumerate(self.characters)),
                "flag_seed": self.flag_seed}


def characters_for_flag(t: Tableau, flag: list[list]) -> list[int]:
    """Characters along a given flag ``v_1, ..., v_n`` (rows of ``flag``)."""
    if t.dim == 0:
        return [0] * t.n
    dims = [t.dim]
    for k in range(1, t.n + 1):
        # columns: basis elements; rows: the components of a(v_1), ..., a(v_k)
        rows = []
        for v in flag[:k]:
            for a in range(t.m):
                rows.append([sum(t.entry(l, a, i) * _qq(v[i]) for i in range(t.n)) for l in range(t.dim)])
        dims.append(t.dim - rank(rows, t.dim))
    return [dims[k - 1] - dims[k] for k in range(1, t.n + 1)]


def random_flag(n: int, rng: random.Random, bound: int = 5) -> list[list[int]]:
    while True:
        flag = [[rng.randint(-bound, bound) for _ in range(n)] for _ in range(n)]
        if rank(flag, n) == n:
            return flag


def characters(t: Tableau, trials: int = 20, seed: int = 0) -> list[int]:
    """Lexicographically maximal characters over ``trials`` seeded random flags."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = random.Random(seed)
    best = None
    for _ in range(trials):
        s = characters_for_flag(t, random_flag(t.n, rng))
        if best is None or s > best:
            best = s
    return best


def prolongation_dim(t: Tableau) -> int:
    """dim of ``(A (x) V*) cap (W (x) S^2 V*)`` via the symmetry constraints.

    Unknowns ``c[l, j]`` define ``P_j = sum_l c[l, j] A_l``; the constraints are
    ``(P_j)_{a i} = (P_i)_{a j}`` for ``i < j``.
    """
    n, m, d = t.n, t.m, t.dim
    if d == 0:
        return 0
    nvar = d * n
    rows = []
    for a in range(m):
        for i in range(n):
            for j in range(i + 1, n):
                row = [QQ(0)] * nvar
                for l in range(d):
                    row[l * n + j] += t.entry(l, a, i)
                    row[l * n + i] -= t.entry(l, a, j)
                rows.append(row)
    return nvar - rank(rows, nvar)


def cartan_test(t: Tableau, seed: int = 0, trials: int = 20) -> CartanReport:
    s = characters(t, trials=trials, seed=seed)
    p = prolongation_dim(t)
    bound = sum((k + 1) * sk for k, sk in enumerate(s))
    if sum(s) != t.dim or p > bound:
        raise AssertionError(f"Cartan inequality violated: dim A(1) = {p} > {bound} (characters {s})")
    return CartanReport(t.dim, s, p, p == bound, seed)


def cauchy_riemann_tableau() -> Tableau:
    """The tableau ``[[x, y], [-y, x]]``."""
    return Tableau(2, 2, [[["1", "0"], ["0", "1"]], [["0", "1"], ["-1", "0"]]])
