"""Relative pose from reciprocal marker observations.

Camera ``p`` sees markers M1, M2 mounted on robot ``q``; camera ``q`` sees
M3 (and optionally M4) mounted on robot ``p``. The unknown ray lengths to
three markers are found by eliminating variables from the inter-marker
distance equations with Sylvester resultants, the pose for every real
positive solution follows from absolute orientation, and the candidate with
the lowest reprojection error over all observed markers wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DegenerateBearing,
    DegenerateConfiguration,
    NoPositiveRoots,
    NoSolution,
)
from .geometry import (
    CameraIntrinsics,
    Pose,
    absolute_orientation,
    as_vec3,
    bearing_from_pixel,
    project,
)
from .polysolve import (
    DEFAULT_IMAG_TOL,
    real_roots,
    resultant_quadratics,
    resultant_quartic_quadratic,
)

log = logging.getLogger(__name__)

PARALLEL_BEARING_TOL = 1e-10
# loose pre-check before Newton polishing, relative to the magnitude of the terms
PRECHECK_RTOL = 1e-4
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    imag_tol: float = DEFAULT_IMAG_TOL
    use_filter: bool = True
    # allowed distance-equation residual, relative to the squared scene scale
    residual_tol: float = 1e-6
    newton_iters: int = 4


@dataclass(frozen=True)
class RigConfig:
    """Intrinsics of both cameras and the marker positions in their host frames.

    ``q1``, ``q2`` (markers M1, M2) are fixed to robot q and expressed in
    frame {q}; ``p3``, ``p4`` (M3, M4) are fixed to robot p in frame {p}.
    """

    intrinsics_p: CameraIntrinsics
    intrinsics_q: CameraIntrinsics
    q1: np.ndarray
    q2: np.ndarray
    p3: np.ndarray
    p4: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("q1", "q2", "p3", "p4"):
            v = getattr(self, name)
            if v is None:
                continue
            v = as_vec3(v).copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if np.linalg.norm(self.q1 - self.q2) <= 1e-6:
            raise ValueError("markers q1 and q2 must be distinct")
        if np.linalg.norm(self.p3) == 0.0:
            raise ValueError("marker p3 must not sit at the optical center")
        if self.p4 is not None and np.linalg.norm(self.p4 - self.p3) <= 1e-6:
            raise ValueError("markers p3 and p4 must be distinct")

    @property
    def has_m4(self) -> bool:
        return self.p4 is not None


def _as_pixel(px) -> np.ndarray:
    v = np.asarray(px, dtype=float).reshape(2).copy()
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite pixel {v}")
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class ObservationPair:
    """Pixel positions: M1, M2 in camera p's image, M3 (and M4) in camera q's."""

    px_m1: np.ndarray
    px_m2: np.ndarray
    px_m3: np.ndarray
    px_m4: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("px_m1", "px_m2", "px_m3", "px_m4"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _as_pixel(v))

    @property
    def has_m4(self) -> bool:
        return self.px_m4 is not None


@dataclass(frozen=True)
class ScaleTriple:
    s1: float
    s2: float
    s3: float
    residuals: tuple = (0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])


@dataclass(frozen=True)
class CandidateSolution:
    pose: Pose
    scales: ScaleTriple
    cost: float
    source_triple: tuple
    # distances of M1..M4 from the observing optical center implied by ``pose``
    ranges: dict = field(default_factory=dict)

    @property
    def s4(self) -> Optional[float]:
        return self.ranges.get("m4")


@dataclass
class TripleDiagnostics:
    triple: tuple
    num_raw_roots: int = 0
    num_positive_roots: int = 0
    num_filtered_roots: int = 0
    used_fallback: bool = False
    error: Optional[str] = None


@dataclass(frozen=True)
class SolveReport:
    best: CandidateSolution
    all_candidates: list
    triples: list
    markers_used: int

    @property
    def num_raw_roots(self) -> int:
        return sum(d.num_raw_roots for d in self.triples)

    @property
    def num_positive_roots(self) -> int:
        return sum(d.num_positive_roots for d in self.triples)

    @property
    def num_filtered_roots(self) -> int:
        return sum(d.num_filtered_roots for d in self.triples)


@dataclass(frozen=True)
class ScaleSystem:
    """Distance equations for one marker triple.

    Observer camera A sees markers ``x1``, ``x2`` (known in frame B) along unit
    bearings ``b1``, ``b2``; camera B sees marker ``y3`` (known in frame A)
    along bearing ``c3``. Unknowns are the ray lengths ``s1``, ``s2`` (from A)
    and ``s3`` (from B)::

        s1^2 + s2^2 - 2 s1 s2 (b1.b2) - |x1 - x2|^2                      = 0
        s2^2 - s3^2 - 2 s2 (b2.y3) + 2 s3 (x2.c3) + |y3|^2 - |x2|^2      = 0
        s1^2 - s3^2 - 2 s1 (b1.y3) + 2 s3 (x1.c3) + |y3|^2 - |x1|^2      = 0
    """

    b1: np.ndarray
    b2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    y3: np.ndarray
    c3: np.ndarray

    @property
    def cos12(self) -> float:
        return float(self.b1 @ self.b2)

    def quadratics(self):
        """The three equations as ascending coefficient lists.

        Returns ``(eq12, eq23, eq31)``: ``eq12`` and ``eq23`` are monic
        quadratics in ``s2`` with coefficients polynomial in ``s1`` and ``s3``
        respectively; ``eq31`` is a quadratic in ``s3`` (leading coefficient
        -1) with coefficients polynomial in ``s1``.
        """
        d12 = float(np.sum((self.x1 - self.x2) ** 2))
        y3sq = float(self.y3 @ self.y3)
        a0 = np.array([-d12, 0.0, 1.0])
        a1 = np.array([0.0, -2.0 * self.cos12])
        b0 = np.array([y3sq - float(self.x2 @ self.x2), 2.0 * float(self.x2 @ self.c3), -1.0])
        b1 = np.array([-2.0 * float(self.b2 @ self.y3)])
        d0 = np.array([y3sq - float(self.x1 @ self.x1), -2.0 * float(self.b1 @ self.y3), 1.0])
        d1 = np.array([2.0 * float(self.x1 @ self.c3)])
        one = np.array([1.0])
        return [a0, a1, one], [b0, b1, one], [d0, d1, -one]

    def residuals(self, s1: float, s2: float, s3: float) -> np.ndarray:
        e1 = np.linalg.norm(s1 * self.b1 - s2 * self.b2) ** 2 - np.sum((self.x1 - self.x2) ** 2)
        e2 = np.linalg.norm(s2 * self.b2 - self.y3) ** 2 - np.linalg.norm(self.x2 - s3 * self.c3) ** 2
        e3 = np.linalg.norm(self.y3 - s1 * self.b1) ** 2 - np.linalg.norm(s3 * self.c3 - self.x1) ** 2
        return np.array([e1, e2, e3])

    def _jacobian(self, s1, s2, s3) -> np.ndarray:
        c12 = self.cos12
        return np.array(
            [
                [2 * s1 - 2 * s2 * c12, 2 * s2 - 2 * s1 * c12, 0.0],
                [0.0, 2 * s2 - 2 * float(self.b2 @ self.y3), -2 * s3 + 2 * float(self.x2 @ self.c3)],
                [2 * s1 - 2 * float(self.b1 @ self.y3), 0.0, -2 * s3 + 2 * float(self.x1 @ self.c3)],
            ]
        )

    def scene_scale(self, s=None) -> float:
        vals = [np.linalg.norm(self.x1), np.linalg.norm(self.x2), np.linalg.norm(self.y3)]
        if s is not None:
            vals.extend(abs(float(v)) for v in s)
        return max(max(vals), 1e-12)

    def polish(self, s: np.ndarray, iters: int) -> np.ndarray:
        s = np.array(s, dtype=float)
        res = np.linalg.norm(self.residuals(*s))
        for _ in range(iters):
            if res == 0.0:
                break
            try:
                step = np.linalg.solve(self._jacobian(*s), self.residuals(*s))
            except np.linalg.LinAlgError:
                break
            s_new = s - step
            res_new = np.linalg.norm(self.residuals(*s_new))
            if not np.isfinite(res_new) or res_new >= res:
                break
            s, res = s_new, res_new
        return s

    def pose(self, triple: ScaleTriple) -> Pose:
        """Rigid transform from frame A to frame B implied by ``triple``."""
        src = np.stack([triple.s1 * self.b1, triple.s2 * self.b2, self.y3])
        dst = np.stack([self.x1, self.x2, triple.s3 * self.c3])
        return absolute_orientation(src, dst)


def _check_bearings(b1, b2):
    if float(b1 @ b2) > 1.0 - PARALLEL_BEARING_TOL:
        raise DegenerateBearing("both markers project onto the same viewing ray")


def build_scale_system(cfg: RigConfig, obs: ObservationPair) -> ScaleSystem:
    """Distance equations for the M1, M2, M3 triple."""
    b1 = bearing_from_pixel(cfg.intrinsics_p, obs.px_m1)
    b2 = bearing_from_pixel(cfg.intrinsics_p, obs.px_m2)
    _check_bearings(b1, b2)
    c3 = bearing_from_pixel(cfg.intrinsics_q, obs.px_m3)
    return ScaleSystem(b1, b2, cfg.q1, cfg.q2, cfg.p3, c3)


def scale_polynomial(system: ScaleSystem):
    """Univariate polynomial in ``s1`` left after eliminating ``s2`` then ``s3``.

    Returns ``(poly, r)`` where ``r`` is the intermediate resultant in
    ``(s1, s3)``.
    """
    eq12, eq23, eq31 = system.quadratics()
    r = resultant_quadratics(eq12, eq23)
    poly = resultant_quartic_quadratic(r.in_second(), eq31)
    return poly, r


def _real_quadratic_roots(c2: float, c1: float, c0: float, tol: float) -> list:
    """Real roots of ``c2 x^2 + c1 x + c0``; a slightly negative discriminant counts as zero."""
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < 0.0:
        if disc < -tol * max(c1 * c1, abs(4.0 * c2 * c0), 1e-300):
            return []
        disc = 0.0
    sq = np.sqrt(disc)
    # numerically stable pairing of the two roots
    qv = -0.5 * (c1 + np.copysign(sq, c1) if c1 != 0.0 else sq)
    roots = []
    if qv != 0.0:
        roots.append(qv / c2)
        roots.append(c0 / qv)
    else:
        roots.append(0.0)
    return roots


def _solve_scales_system(system: ScaleSystem, opts: SolverOptions, diag: TripleDiagnostics):
    poly, r = scale_polynomial(system)
    roots = real_roots(poly, opts.imag_tol)
    diag.num_raw_roots = len(roots)
    _, eq23, eq31 = system.quadratics()
    d0p, d1, _ = eq31
    b0p, b1, _ = eq23
    pv = np.polynomial.polynomial.polyval

    found = []
    for s1 in roots:
        if s1 <= 0.0:
            continue
        d0 = pv(s1, d0p)
        # -s3^2 + d1 s3 + d0 = 0
        for s3 in _real_quadratic_roots(-1.0, d1[0], d0, PRECHECK_RTOL):
            if s3 <= 0.0:
                continue
            terms = np.abs(r.coeffs) * np.outer(s1 ** np.arange(r.coeffs.shape[0]),
                                                s3 ** np.arange(r.coeffs.shape[1]))
            if abs(r(s1, s3)) > PRECHECK_RTOL * max(terms.sum(), 1e-300):
                continue
            b0 = pv(s3, b0p)
            for s2 in _real_quadratic_roots(1.0, b1[0], b0, PRECHECK_RTOL):
                if s2 <= 0.0:
                    continue
                e1 = system.residuals(s1, s2, s3)[0]
                scale = system.scene_scale((s1, s2, s3)) ** 2
                if abs(e1) > PRECHECK_RTOL * 4.0 * scale:
                    continue
                found.append((s1, s2, s3))

    triples = []
    for s in found:
        s = system.polish(np.array(s), opts.newton_iters)
        if np.any(s <= 0.0):
            continue
        res = system.residuals(*s)
        scale = system.scene_scale(s)
        if np.max(np.abs(res)) > opts.residual_tol * scale**2:
            continue
        if any(np.max(np.abs(s - t.as_array())) <= 1e-9 * scale for t in triples):
            continue
        triples.append(ScaleTriple(float(s[0]), float(s[1]), float(s[2]), tuple(float(x) for x in res)))
    diag.num_positive_roots = len(triples)
    if not triples:
        raise NoPositiveRoots("no all-positive scale triple satisfies the distance equations")
    return triples


def solve_scales(cfg: RigConfig, obs: ObservationPair, opts: SolverOptions = SolverOptions()) -> list:
    """All positive scale triples ``(s1, s2, s3)`` for the M1, M2, M3 markers."""
    system = build_scale_system(cfg, obs)
    return _solve_scales_system(system, opts, TripleDiagnostics(("m1", "m2", "m3")))


def _filter_bounds(geom):
    if isinstance(geom, ScaleSystem):
        x1, x2, y3 = geom.x1, geom.x2, geom.y3
    else:
        x1, x2, y3 = geom.q1, geom.q2, geom.p3
    return float(np.linalg.norm(y3)), max(float(np.linalg.norm(x1)), float(np.linalg.norm(x2)))


def filter_roots(triples, geom) -> list:
    """Drop triples where an observed marker is nearer than the observer's own marker.

    ``geom`` is a :class:`RigConfig` (M1, M2, M3 roles) or a
    :class:`ScaleSystem`. Kept triples satisfy ``s1, s2 >= |p3|`` and
    ``s3 >= max(|q1|, |q2|)``.
    """
    own, other = _filter_bounds(geom)
    return [t for t in triples if t.s1 >= own and t.s2 >= own and t.s3 >= other]


def _project_cost(K: CameraIntrinsics, point: np.ndarray, px: np.ndarray) -> float:
    h = K.K @ point
    if h[2] <= 0.0 or point[2] <= 0.0:
        return np.inf
    d = px - h[:2] / h[2]
    return float(d @ d)


def reprojection_cost(pose: Pose, cfg: RigConfig, obs: ObservationPair) -> float:
    """Summed squared pixel error of all observed markers under ``pose``.

    Returns ``inf`` if any marker would lie on or behind the observing camera.
    """
    R, t = pose.rotation, pose.translation
    cost = 0.0
    cost += _project_cost(cfg.intrinsics_p, R.T @ (cfg.q1 - t), obs.px_m1)
    cost += _project_cost(cfg.intrinsics_p, R.T @ (cfg.q2 - t), obs.px_m2)
    cost += _project_cost(cfg.intrinsics_q, R @ cfg.p3 + t, obs.px_m3)
    if cfg.has_m4 and obs.has_m4:
        cost += _project_cost(cfg.intrinsics_q, R @ cfg.p4 + t, obs.px_m4)
    return cost


def _marker_ranges(pose: Pose, cfg: RigConfig) -> dict:
    R, t = pose.rotation, pose.translation
    out = {
        "m1": float(np.linalg.norm(cfg.q1 - t)),
        "m2": float(np.linalg.norm(cfg.q2 - t)),
        "m3": float(np.linalg.norm(R @ cfg.p3 + t)),
    }
    if cfg.has_m4:
        out["m4"] = float(np.linalg.norm(R @ cfg.p4 + t))
    return out


def _triple_systems(cfg: RigConfig, obs: ObservationPair):
    """Yield ``(labels, system_factory, swapped)`` for every usable marker triple."""
    Kp, Kq = cfg.intrinsics_p, cfg.intrinsics_q

    def forward(y3, px3):
        def make():
            b1 = bearing_from_pixel(Kp, obs.px_m1)
            b2 = bearing_from_pixel(Kp, obs.px_m2)
            _check_bearings(b1, b2)
            return ScaleSystem(b1, b2, cfg.q1, cfg.q2, y3, bearing_from_pixel(Kq, px3))

        return make

    def swapped(y3, px3):
        def make():
            b1 = bearing_from_pixel(Kq, obs.px_m3)
            b2 = bearing_from_pixel(Kq, obs.px_m4)
            _check_bearings(b1, b2)
            return ScaleSystem(b1, b2, cfg.p3, cfg.p4, y3, bearing_from_pixel(Kp, px3))

        return make

    yield ("m1", "m2", "m3"), forward(cfg.p3, obs.px_m3), False
    if cfg.has_m4 and obs.has_m4:
        yield ("m1", "m2", "m4"), forward(cfg.p4, obs.px_m4), False
        yield ("m3", "m4", "m1"), swapped(cfg.q1, obs.px_m1), True
        yield ("m3", "m4", "m2"), swapped(cfg.q2, obs.px_m2), True


def solve_mutual_pose(
    cfg: RigConfig, obs: ObservationPair, opts: SolverOptions = SolverOptions()
) -> SolveReport:
    """Estimate the pose from frame {p} to frame {q}.

    With three markers a single triple is solved. When M4 is configured and
    observed, the triples (M1, M2, M4), (M3, M4, M1) and (M3, M4, M2) add
    hypotheses; the last two are solved with the roles of the cameras
    exchanged and their poses inverted. Every candidate is scored on all
    observed markers and the cheapest one is returned.
    """
    if obs.has_m4 and not cfg.has_m4:
        raise ValueError("observation contains M4 but the rig has no p4 marker")

    candidates = []
    diags = []
    degenerate = False
    for labels, make_system, swapped in _triple_systems(cfg, obs):
        diag = TripleDiagnostics(labels)
        diags.append(diag)
        try:
            system = make_system()
            triples = _solve_scales_system(system, opts, diag)
        except (DegenerateBearing, NoPositiveRoots) as exc:
            diag.error = f"{type(exc).__name__}: {exc}"
            log.debug("triple %s: %s", labels, diag.error)
            continue

        kept = filter_roots(triples, system) if opts.use_filter else list(triples)
        diag.num_filtered_roots = len(kept) if opts.use_filter else len(triples)
        if not kept:
            diag.used_fallback = True
            kept = list(triples)

        for triple in kept:
            try:
                pose = system.pose(triple)
            except DegenerateConfiguration as exc:
                degenerate = True
                log.debug("triple %s: %s", labels, exc)
                continue
            if swapped:
                pose = pose.inverse()
            cost = reprojection_cost(pose, cfg, obs)
            candidates.append(
                CandidateSolution(pose, triple, cost, labels, _marker_ranges(pose, cfg))
            )
        log.debug(
            "triple %s: raw=%d positive=%d filtered=%d fallback=%s",
            labels, diag.num_raw_roots, diag.num_positive_roots,
            diag.num_filtered_roots, diag.used_fallback,
        )

    finite = [c for c in candidates if np.isfinite(c.cost)]
    if not finite:
        if degenerate and not candidates:
            raise DegenerateConfiguration("every candidate triple is collinear")
        raise NoSolution("no marker triple produced a candidate in front of both cameras")

    best = _select_best(finite)
    n_used = 4 if (cfg.has_m4 and obs.has_m4) else 3
    return SolveReport(best, candidates, diags, n_used)


def _select_best(candidates: list) -> CandidateSolution:
    lowest = min(c.cost for c in candidates)
    tied = [c for c in candidates if c.cost - lowest <= TIE_RTOL * abs(lowest)]
    # ties go to the shorter translation; min() keeps the first on exact equality
    return min(tied, key=lambda c: (float(np.linalg.norm(c.pose.translation)), c.cost))


def swap_roles(cfg: RigConfig, obs: ObservationPair):
    """Exchange cameras p and q; requires four markers.

    The returned problem has M3, M4 as the markers seen by the new camera p
    and M1, M2 as those seen by the new camera q, so its solution is the
    inverse of the original pose.
    """
    if not (cfg.has_m4 and obs.has_m4):
        raise ValueError("role swap needs all four markers")
    cfg2 = RigConfig(cfg.intrinsics_q, cfg.intrinsics_p, cfg.p3, cfg.p4, cfg.q1, cfg.q2)
    obs2 = ObservationPair(obs.px_m3, obs.px_m4, obs.px_m1, obs.px_m2)
    return cfg2, obs2


def render_observation(cfg: RigConfig, pose: Pose) -> ObservationPair:
    """Noise-free pixels of every configured marker under ``pose``.

    Raises:
        NonPositiveDepth: if a marker sits behind the camera observing it.
    """
    R, t = pose.rotation, pose.translation
    return ObservationPair(
        project(cfg.intrinsics_p, R.T @ (cfg.q1 - t)),
        project(cfg.intrinsics_p, R.T @ (cfg.q2 - t)),
        project(cfg.intrinsics_q, R @ cfg.p3 + t),
        project(cfg.intrinsics_q, R @ cfg.p4 + t) if cfg.has_m4 else None,
    )


__all__ = [
    "CandidateSolution",
    "ObservationPair",
    "RigConfig",
    "ScaleSystem",
    "ScaleTriple",
    "SolveReport",
    "SolverOptions",
    "TripleDiagnostics",
    "build_scale_system",
    "filter_roots",
    "render_observation",
    "reprojection_cost",
    "scale_polynomial",
    "solve_mutual_pose",
    "solve_scales",
    "swap_roles",
]
