"""Root-lattice bases: Gram construction, orientation, corners, relevant vectors,
and brute-force nearest-point oracles.

Bases are kept as generator matrices G whose rows b_1..b_n satisfy b_j . e_1 = 0
for j >= 2 and b_1 . e_1 > 0, so the first coordinate plays the role of the
decoded bit axis everywhere downstream.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, FactorizationError, InternalCheckError, ResourceError

FAMILY_AN = "an"
FAMILY_DN_CONST_A = "dn-const-a"
FAMILY_DN_SECOND = "dn-second"
FAMILY_EN = "en"
FAMILIES = (FAMILY_AN, FAMILY_DN_CONST_A, FAMILY_DN_SECOND, FAMILY_EN)

#: smallest/largest dimension per family (None = no upper limit here; the
#: corner cap below still applies to anything that enumerates {0,1}^n).
FAMILY_RANGES = {
    FAMILY_AN: (1, None),
    FAMILY_DN_CONST_A: (2, None),
    FAMILY_DN_SECOND: (2, None),
    FAMILY_EN: (6, 8),
}

CORNER_CAP = 20
GEOM_TOL = 1e-9
FIRST_COORD_TOL = 1e-12
BOX_BUDGET = 2_000_000


@dataclass(frozen=True)
class FamilyId:
    """A lattice family tag plus dimension, validated on construction."""

    family: str
    n: int

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise DomainError(
                f"unknown family {self.family!r}; expected one of {FAMILIES}"
            )
        lo, hi = FAMILY_RANGES[self.family]
        if self.n < lo or (hi is not None and self.n > hi):
            hi_s = str(hi) if hi is not None else "inf"
            raise DomainError(
                f"family {self.family!r} requires {lo} <= n <= {hi_s}, got n={self.n}"
            )


def build_gram(fid: FamilyId) -> np.ndarray:
    """Integer Gram matrix of the family, unscaled (minimal squared norm 2).

    All four patterns share the base "2 on the diagonal, 1 off the diagonal";
    the variants adjust the first rows:
      - dn-const-a doubles the first row/column (so ||b_1||^2 = 4),
      - dn-second zeroes b_1 . b_2,
      - en zeroes b_1 . b_2 and b_1 . b_3.
    """
    n = fid.n
    g = np.ones((n, n), dtype=np.int64) + np.eye(n, dtype=np.int64)
    if fid.family == FAMILY_DN_CONST_A:
        g[0, :] = 2
        g[:, 0] = 2
        g[0, 0] = 4
    elif fid.family == FAMILY_DN_SECOND:
        g[0, 1] = g[1, 0] = 0
    elif fid.family == FAMILY_EN:
        g[0, 1] = g[1, 0] = 0
        g[0, 2] = g[2, 0] = 0
    return g


@dataclass(frozen=True, eq=False)
class OrientedBasis:
    """Generator matrix G (rows b_1..b_n) with gram = G G^T.

    The orientation puts b_2..b_n inside the hyperplane {y : y . e_1 = 0}
    and makes b_1 . e_1 > 0, i.e. G is upper triangular with positive diagonal.
    """

    gram: np.ndarray
    G: np.ndarray
    fid: FamilyId | None = None

    def __post_init__(self) -> None:
        self.gram.setflags(write=False)
        self.G.setflags(write=False)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def b1_e1(self) -> float:
        """First coordinate of b_1 (height of the C^1 corner layer)."""
        return float(self.G[0, 0])

    @cached_property
    def Ginv(self) -> np.ndarray:
        inv = np.linalg.inv(self.G)
        inv.setflags(write=False)
        return inv

    @cached_property
    def gram_is_integral(self) -> bool:
        return bool(np.issubdtype(self.gram.dtype, np.integer))


def orient_basis(gram: np.ndarray, fid: FamilyId | None = None) -> OrientedBasis:
    """Factor a positive-definite Gram matrix into the oriented generator.

    Uses a Cholesky factorization with row/column order reversed so the zero
    pattern lands in the leading coordinates of b_2..b_n:
        G = J . chol(J . gram . J) . J,   J = anti-identity.
    The result is upper triangular with positive diagonal, which gives both
    orientation conditions at once (determinant = +sqrt(det gram)).
    """
    gram = np.asarray(gram)
    n = gram.shape[0]
    if gram.shape != (n, n) or not np.allclose(gram, gram.T, atol=GEOM_TOL):
        raise FactorizationError("gram matrix must be square symmetric")
    J = np.eye(n)[::-1]
    try:
        L = np.linalg.cholesky(J @ (gram.astype(float)) @ J)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"gram matrix not positive definite: {exc}") from exc
    G = J @ L @ J
    basis = OrientedBasis(gram=gram.copy(), G=G, fid=fid)
    _check_orientation(basis)
    return basis


def build_basis(fid: FamilyId) -> OrientedBasis:
    """Convenience: build_gram + orient_basis for a family instance."""
    return orient_basis(build_gram(fid), fid)


def _check_orientation(basis: OrientedBasis) -> None:
    G, gram = basis.G, basis.gram.astype(float)
    if not np.allclose(G @ G.T, gram, atol=GEOM_TOL):
        raise InternalCheckError("G G^T does not reproduce the gram matrix")
    if basis.n > 1 and np.abs(G[1:, 0]).max() > FIRST_COORD_TOL:
        raise InternalCheckError("b_j . e_1 != 0 for some j >= 2 after orientation")
    if G[0, 0] <= 0:
        raise InternalCheckError("b_1 . e_1 <= 0 after orientation")


def scale_to_unit_volume(basis: OrientedBasis) -> OrientedBasis:
    """Rescale the gram by det(gram)^(-1/n) so Vol(P(B)) = |det G| = 1."""
    gram = basis.gram.astype(float)
    det = float(np.linalg.det(gram))
    return orient_basis(gram * det ** (-1.0 / basis.n), basis.fid)


@dataclass(frozen=True, eq=False)
class CornerSet:
    """The 2^n corners of P(B): integer labels z in {0,1}^n and points x = zG."""

    z: np.ndarray  # (2^n, n) int64, lexicographically ordered
    x: np.ndarray  # (2^n, n) float
    c0_rows: np.ndarray  # row indices with z_1 = 0
    c1_rows: np.ndarray  # row indices with z_1 = 1


def enumerate_corners(basis: OrientedBasis) -> CornerSet:
    """All corners zG for z in {0,1}^n, split by the first integer coordinate."""
    n = basis.n
    if n > CORNER_CAP:
        raise ResourceError(f"corner enumeration capped at n <= {CORNER_CAP}, got {n}")
    z = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    x = z @ basis.G
    return CornerSet(
        z=z,
        x=x,
        c0_rows=np.flatnonzero(z[:, 0] == 0),
        c1_rows=np.flatnonzero(z[:, 0] == 1),
    )


def minimal_squared_norm(basis: OrientedBasis) -> float:
    """Minimal nonzero squared norm of the lattice.

    For the integer Gram matrices used here every squared norm is an even
    integer (z gram z^T = sum z_i^2 gram_ii + 2 sum_{i<j} ...), and each family
    has a diagonal entry equal to 2, so the minimum is exactly 2. We still
    compute it from the r=1 box to keep the value tied to the input.
    """
    n = basis.n
    z = np.array(list(itertools.product((-1, 0, 1), repeat=n)), dtype=np.int64)
    norms = np.einsum("ij,jk,ik->i", z, basis.gram.astype(np.float64), z)
    pos = norms[norms > GEOM_TOL]
    if pos.size == 0:
        raise InternalCheckError("no nonzero vector found in the r=1 box")
    return float(pos.min())


def _box_vectors(n: int, r: int) -> np.ndarray:
    """All integer vectors in [-r, r]^n, materialized in blocks along axis 0."""
    side = 2 * r + 1
    if side**n > 50_000_000:
        raise ResourceError(f"box enumeration (2r+1)^n = {side**n} too large")
    grid = np.indices((side,) * n).reshape(n, -1).T - r
    return grid.astype(np.int64)


def relevant_vectors(basis: OrientedBasis, r: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Minimal-norm shell by exhaustive enumeration of z in [-r, r]^n.

    For root lattices the Voronoi-relevant vectors are exactly this shell, and
    its size is the kissing number. Returns (Z, X) with X = Z G.

    The n = 8, r = 4 case is chunked along the first coordinate to keep memory
    at a few hundred MB.
    """
    n = basis.n
    gram = basis.gram.astype(np.int64) if basis.gram_is_integral else None
    side = 2 * r + 1
    total = side**n

    def norms_of(zblock: np.ndarray) -> np.ndarray:
        if gram is not None:
            return np.einsum("ij,jk,ik->i", zblock, gram, zblock)
        g = basis.gram.astype(float)
        return np.einsum("ij,jk,ik->i", zblock, g, zblock)

    if total <= 8_000_000:
        Z = _box_vectors(n, r)
        norms = norms_of(Z)
        pos = norms > (GEOM_TOL if gram is None else 0)
        if not pos.any():
            raise InternalCheckError("empty shell: no nonzero vectors enumerated")
        minn = norms[pos].min()
        if gram is not None:
            keep = pos & (norms == minn)
        else:
            keep = pos & (norms <= minn + GEOM_TOL)
        Z = Z[keep]
    else:
        tail = _box_vectors(n - 1, r)
        minn = None
        blocks: list[np.ndarray] = []
        for a in range(-r, r + 1):
            zblock = np.concatenate(
                [np.full((tail.shape[0], 1), a, dtype=np.int64), tail], axis=1
            )
            norms = norms_of(zblock)
            pos = norms > 0
            if not pos.any():
                continue
            bmin = norms[pos].min()
            if minn is None or bmin < minn:
                minn = bmin
                blocks = [zblock[pos & (norms == bmin)]]
            elif bmin == minn:
                blocks.append(zblock[pos & (norms == bmin)])
        if minn is None:
            raise InternalCheckError("empty shell: no nonzero vectors enumerated")
        Z = np.concatenate(blocks, axis=0)
    # canonical order for reproducibility
    order = np.lexsort(Z.T[::-1])
    Z = Z[order]
    return Z, Z @ basis.G


def cvp_corners(basis: OrientedBasis, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest corner of P(B) to y; ties broken by lexicographically smallest z.

    Returns (z, x). The corner list is generated in lexicographic z order and
    argmin takes the first minimum, which realizes the tie-break.
    """
    corners = enumerate_corners(basis)
    d2 = ((corners.x - np.asarray(y, dtype=float)) ** 2).sum(axis=1)
    row = int(np.flatnonzero(d2 == d2.min())[0])
    return corners.z[row].copy(), corners.x[row].copy()


def cvp_corners_batch(
    basis: OrientedBasis, Y: np.ndarray, chunk: int = 4096
) -> np.ndarray:
    """Row indices into the lexicographic corner list of the nearest corner.

    Chunked so that n = 16 stays within memory; callers map rows to z via
    enumerate_corners(basis).z[rows].
    """
    corners = enumerate_corners(basis)
    X = corners.x
    x2 = (X**2).sum(axis=1)
    out = np.empty(Y.shape[0], dtype=np.int64)
    for lo in range(0, Y.shape[0], chunk):
        block = Y[lo : lo + chunk]
        d2 = x2[None, :] - 2.0 * (block @ X.T)
        out[lo : lo + chunk] = d2.argmin(axis=1)
    return out


def cvp_box(basis: OrientedBasis, y: np.ndarray, r: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force nearest lattice point over z in floor(alpha) + [-r, r+1]^n.

    Ground-truth oracle for small n; raises ResourceError when the box exceeds
    the budget. Ties go to the lexicographically smallest z.
    """
    if r < 1:
        raise DomainError("cvp_box requires r >= 1")
    n = basis.n
    side = 2 * r + 2
    if side**n > BOX_BUDGET:
        raise ResourceError(f"cvp_box budget exceeded: (2r+2)^n = {side**n}")
    y = np.asarray(y, dtype=float)
    base = np.floor(y @ basis.Ginv).astype(np.int64)
    offs = np.array(list(itertools.product(range(-r, r + 2), repeat=n)), dtype=np.int64)
    Z = base[None, :] + offs
    X = Z @ basis.G
    d2 = ((X - y) ** 2).sum(axis=1)
    rows = np.flatnonzero(d2 == d2.min())
    # lexicographic tie-break over the candidate z rows
    best = rows[np.lexsort(Z[rows].T[::-1])[0]]
    return Z[best].copy(), X[best].copy()


def sample_parallelotope(
    basis: OrientedBasis, seed: int, count: int
) -> np.ndarray:
    """count i.i.d. uniform points of P(B): y = alpha G, alpha ~ U[0,1)^n."""
    if count < 1:
        raise DomainError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.random((count, basis.n)) @ basis.G


# ---------------------------------------------------------------------------
# projected domain D(B): the image of P(B) under dropping the first coordinate
# ---------------------------------------------------------------------------

def fiber_interval_batch(
    basis: OrientedBasis, Yt: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """For each ytilde row, the t-interval with (t, ytilde) in P(B).

    alpha(t) = t * Ginv[0] + (0, ytilde) Ginv must lie in [0,1)^n coordinatewise;
    the interval is empty iff hi <= lo. Returns (lo, hi) arrays.
    """
    n = basis.n
    Yt = np.atleast_2d(np.asarray(Yt, dtype=float))
    r = basis.Ginv[0]
    a0 = np.concatenate([np.zeros((Yt.shape[0], 1)), Yt], axis=1) @ basis.Ginv
    lo = np.full(Yt.shape[0], -np.inf)
    hi = np.full(Yt.shape[0], np.inf)
    for j in range(n):
        rj = r[j]
        if abs(rj) < 1e-15:
            inside = (a0[:, j] >= 0.0) & (a0[:, j] < 1.0)
            lo = np.where(inside, lo, np.inf)
            continue
        t0 = (0.0 - a0[:, j]) / rj
        t1 = (1.0 - a0[:, j]) / rj
        lo = np.maximum(lo, np.minimum(t0, t1))
        hi = np.minimum(hi, np.maximum(t0, t1))
    return lo, hi


def fiber_interval(basis: OrientedBasis, yt: np.ndarray) -> tuple[float, float] | None:
    """Scalar version of fiber_interval_batch; None when the fiber is empty."""
    lo, hi = fiber_interval_batch(basis, np.asarray(yt, dtype=float)[None, :])
    if hi[0] - lo[0] <= 1e-12:
        return None
    return float(lo[0]), float(hi[0])


def domain_contains(basis: OrientedBasis, Yt: np.ndarray) -> np.ndarray:
    """Boolean mask: ytilde rows whose fiber through P(B) is nonempty."""
    lo, hi = fiber_interval_batch(basis, Yt)
    return hi - lo > 1e-12


def domain_bbox(basis: OrientedBasis) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box of D(B) from the projected corners.

    D(B) is the projection of a parallelotope, i.e. a zonotope; coordinate
    extremes are attained at projected corners, so the corner hull box is exact.
    """
    corners = enumerate_corners(basis)
    proj = corners.x[:, 1:]
    return proj.min(axis=0), proj.max(axis=0)


def sample_domain(basis: OrientedBasis, seed: int, count: int) -> np.ndarray:
    """count uniform points of D(B) by rejection from its bounding box."""
    if basis.n == 1:
        return np.zeros((count, 0))
    lo, hi = domain_bbox(basis)
    rng = np.random.default_rng(seed)
    d = basis.n - 1
    out = np.empty((count, d))
    have = 0
    batch = max(4 * count, 20_000)
    while have < count:
        cand = lo + rng.random((batch, d)) * (hi - lo)
        keep = cand[domain_contains(basis, cand)]
        take = min(count - have, keep.shape[0])
        out[have : have + take] = keep[:take]
        have += take
    return out


def project_points(Y: np.ndarray) -> np.ndarray:
    """Drop the first coordinate: R^n points to their D(B) representatives."""
    return np.asarray(Y, dtype=float)[..., 1:]


# ---------------------------------------------------------------------------
# JSON export/import
# ---------------------------------------------------------------------------

def basis_to_json(basis: OrientedBasis) -> str:
    """Serialize {family, n, gram, generator} row-major.

    Floats go through repr (shortest round-trip form, up to 17 significant
    digits), so reloading reproduces bit-identical matrices.
    """
    payload = {
        "family": basis.fid.family if basis.fid else None,
        "n": basis.n,
        "gram": [[_num(v) for v in row] for row in np.asarray(basis.gram).tolist()],
        "generator": [[float(v) for v in row] for row in basis.G.tolist()],
    }
    return json.dumps(payload, indent=2)


def _num(v: float | int) -> float | int:
    return int(v) if float(v).is_integer() else float(v)


def basis_from_json(text: str) -> OrientedBasis:
    """Inverse of basis_to_json; revalidates orientation invariants."""
    payload = json.loads(text)
    gram = np.asarray(payload["gram"])
    if np.all(gram == np.round(gram)):
        gram = gram.astype(np.int64)
    fid = None
    if payload.get("family"):
        fid = FamilyId(payload["family"], int(payload["n"]))
    G = np.asarray(payload["generator"], dtype=float)
    basis = OrientedBasis(gram=gram, G=G, fid=fid)
    _check_orientation(basis)
    return basis
