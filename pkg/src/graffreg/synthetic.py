"""Synthetic scenes with known ground truth, and error metrics.

Two generators:

* :func:`generate_scene` - line/plane features scattered in a box, copied to
  the source frame through the inverse ground-truth transform, perturbed,
  and partially replaced by random outliers.
* :func:`generate_pnl_scene` - image-space line segments back-projected
  with random depth; targets are 3D world lines, sources are the
  interpretation planes through the camera centre.
* :func:`generate_map_query` - a feature map and a shuffled noisy subset of
  it, for correspondence-free registration.

In both, ``T_gt`` maps source features onto their targets.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .cost import FeaturePair, PairKind, make_pairs
from .errors import DegenerateSegment
from .manifold import AffineSubspace, RigidTransform, apply_transform, line, plane

Array = np.ndarray


@dataclass(frozen=True)
class SceneConfig:
    n_pairs: int = 20
    feature_kind: PairKind = PairKind.LINE_LINE
    noise_sigma: float = 0.0          # positional noise on anchors (scene units)
    angular_noise: float = 0.0        # radians, directions and normals
    outlier_ratio: float = 0.0
    scene_extent: float = 5.0         # features anchored in [-extent, extent]^3
    translation_box: float = 3.0      # ground-truth t uniform in [-box, box]^3
    pixel_noise: float = 0.0          # PnL only: endpoint noise in pixels
    depth_range: tuple[float, float] = (2.0, 10.0)  # PnL only
    min_segment_px: float = 1.0       # PnL only
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_kind", PairKind(self.feature_kind))
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if not 0.0 <= self.outlier_ratio < 1.0:
            raise ValueError("outlier_ratio must be in [0, 1)")


@dataclass(frozen=True)
class CameraModel:
    focal: float = 800.0
    principal_point: tuple[float, float] = (320.0, 240.0)
    image_size: tuple[int, int] = (640, 480)

    def __post_init__(self) -> None:
        if self.focal <= 0:
            raise ValueError("focal must be positive")

    def ray(self, pixel: Array) -> Array:
        u, v = np.asarray(pixel, dtype=float)
        cx, cy = self.principal_point
        return np.array([(u - cx) / self.focal, (v - cy) / self.focal, 1.0])


@dataclass
class Scene:
    targets: list[AffineSubspace]
    sources: list[AffineSubspace]
    T_gt: RigidTransform
    inlier_mask: Array
    kind: PairKind

    @property
    def pairs(self) -> list[FeaturePair]:
        return make_pairs(self.targets, self.sources)


def random_unit(rng: np.random.Generator, size: int | None = None) -> Array:
    v = rng.normal(size=(size or 1, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v if size else v[0]


def random_transform(rng: np.random.Generator, box: float) -> RigidTransform:
    R = Rotation.random(random_state=rng).as_matrix()
    return RigidTransform(R, rng.uniform(-box, box, size=3))


def perturb_direction(v: Array, sigma: float, rng: np.random.Generator) -> Array:
    """Tilt unit vector v by an angle ~ N(0, sigma) about a random perpendicular axis."""
    if sigma == 0.0:
        return v
    axis = np.cross(v, random_unit(rng))
    axis /= np.linalg.norm(axis)
    return Rotation.from_rotvec(axis * rng.normal(scale=sigma)).apply(v)


def _random_feature(kind_dim: int, rng: np.random.Generator, extent: float) -> AffineSubspace:
    anchor = rng.uniform(-extent, extent, size=3)
    if kind_dim == 1:
        return line(random_unit(rng), anchor)
    return plane(random_unit(rng, 2).T, anchor)


def _perturb(s: AffineSubspace, cfg: SceneConfig, rng: np.random.Generator) -> AffineSubspace:
    anchor = s.displacement + rng.normal(scale=cfg.noise_sigma, size=3) if cfg.noise_sigma else s.displacement
    if s.dim_sub == 1:
        return line(perturb_direction(s.basis[:, 0], cfg.angular_noise, rng), anchor)
    n = perturb_direction(s.normal(), cfg.angular_noise, rng)
    # Rotate the plane basis along with its normal.
    axis = np.cross(s.normal(), n)
    if np.linalg.norm(axis) > 0:
        ang = np.arctan2(np.linalg.norm(axis), s.normal() @ n)
        basis = Rotation.from_rotvec(axis / np.linalg.norm(axis) * ang).apply(s.basis.T).T
    else:
        basis = s.basis
    return plane(basis, anchor)


def _outlier_indices(n: int, ratio: float, rng: np.random.Generator) -> Array:
    n_out = int(round(ratio * n))
    mask = np.ones(n, dtype=bool)
    mask[rng.choice(n, size=n_out, replace=False)] = False
    return mask


def generate_scene(cfg: SceneConfig) -> Scene:
    rng = np.random.default_rng(cfg.rng_seed)
    kt, ks = cfg.feature_kind.dims
    T_gt = random_transform(rng, cfg.translation_box)
    T_inv = T_gt.inverse()
    targets, sources = [], []
    for _ in range(cfg.n_pairs):
        tgt = _random_feature(kt, rng, cfg.scene_extent)
        if ks > kt:
            # A plane containing the target line.
            extra = np.cross(tgt.basis[:, 0], random_unit(rng))
            src_world = plane(np.column_stack([tgt.basis[:, 0], extra]), tgt.displacement)
        else:
            src_world = tgt
        targets.append(tgt)
        sources.append(apply_transform(T_inv, _perturb(src_world, cfg, rng)))
    mask = _outlier_indices(cfg.n_pairs, cfg.outlier_ratio, rng)
    for i in np.flatnonzero(~mask):
        sources[i] = apply_transform(T_inv, _random_feature(ks, rng, cfg.scene_extent))
    return Scene(targets, sources, T_gt, mask, cfg.feature_kind)


@dataclass
class MapQuery:
    """A feature map and a shuffled, noisy subset of it seen from another frame."""

    targets: list[AffineSubspace]
    sources: list[AffineSubspace]
    T_gt: RigidTransform
    matches: list[tuple[int, int]]  # (target_idx, source_idx), sorted by target
    kind: PairKind


def generate_map_query(cfg: SceneConfig, n_map: int = 60) -> MapQuery:
    """``n_map`` random map features; ``cfg.n_pairs`` of them form the query.

    Query features are moved by the inverse ground truth, perturbed as in
    :func:`generate_scene` and shuffled, so matches must be recovered.
    """
    if not 1 <= cfg.n_pairs <= n_map:
        raise ValueError("query size must lie in [1, n_map]")
    rng = np.random.default_rng(cfg.rng_seed)
    dim = cfg.feature_kind.dims[0]
    if cfg.feature_kind.dims[1] != dim:
        raise ValueError("map/query scenes need same-dimension features (l2l or p2p)")
    T_gt = random_transform(rng, cfg.translation_box)
    T_inv = T_gt.inverse()
    targets = [_random_feature(dim, rng, cfg.scene_extent) for _ in range(n_map)]
    chosen = rng.choice(n_map, size=cfg.n_pairs, replace=False)
    order = rng.permutation(cfg.n_pairs)
    sources = [apply_transform(T_inv, _perturb(targets[chosen[k]], cfg, rng)) for k in order]
    matches = sorted((int(chosen[k]), j) for j, k in enumerate(order))
    return MapQuery(targets, sources, T_gt, matches, cfg.feature_kind)


def backproject_line(cam: CameraModel, p1: Array, p2: Array) -> AffineSubspace:
    """Interpretation plane of an image segment: through the camera centre and both rays."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if np.linalg.norm(p1 - p2) < 1.0:
        raise DegenerateSegment(f"segment endpoints {p1.tolist()} and {p2.tolist()} are closer than 1 px")
    return AffineSubspace.from_raw(np.column_stack([cam.ray(p1), cam.ray(p2)]), np.zeros(3))


def _random_segment(cam: CameraModel, rng: np.random.Generator, min_len: float) -> tuple[Array, Array]:
    w, h = cam.image_size
    while True:
        p = rng.uniform((0.0, 0.0), (w, h), size=(2, 2))
        if np.linalg.norm(p[0] - p[1]) >= max(min_len, 1.0):
            return p[0], p[1]


def generate_pnl_scene(cfg: SceneConfig, cam: CameraModel = CameraModel()) -> Scene:
    """Line-to-plane scene: world lines (targets) vs camera interpretation planes (sources).

    Segments are back-projected at random depths in the camera frame; the
    world frame is then centred on the mean of those endpoints and rotated
    randomly, so ||t_gt|| is the distance from the camera to the scene and
    relative translation errors do not depend on an arbitrary origin.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    R = random_transform(rng, cfg.translation_box).rotation
    lo, hi = cfg.depth_range
    segs, ends = [], []
    for _ in range(cfg.n_pairs):
        p1, p2 = _random_segment(cam, rng, cfg.min_segment_px)
        segs.append((p1, p2))
        ends.append((cam.ray(p1) * rng.uniform(lo, hi), cam.ray(p2) * rng.uniform(lo, hi)))
    centre = np.mean([x for pair in ends for x in pair], axis=0)
    T_gt = RigidTransform(R, -R @ centre)
    targets, sources = [], []
    for (p1, p2), (x1, x2) in zip(segs, ends):
        targets.append(line(R @ (x2 - x1), R @ (x1 - centre)))
        while True:
            q1 = p1 + rng.normal(scale=cfg.pixel_noise, size=2) if cfg.pixel_noise else p1
            q2 = p2 + rng.normal(scale=cfg.pixel_noise, size=2) if cfg.pixel_noise else p2
            if np.linalg.norm(q1 - q2) >= 1.0:
                break
        sources.append(backproject_line(cam, q1, q2))
    mask = _outlier_indices(cfg.n_pairs, cfg.outlier_ratio, rng)
    for i in np.flatnonzero(~mask):
        sources[i] = backproject_line(cam, *_random_segment(cam, rng, cfg.min_segment_px))
    return Scene(targets, sources, T_gt, mask, PairKind.LINE_PLANE)


def rotation_error(R_hat: Array, R_gt: Array) -> float:
    """Angle of R_hat^T R_gt in degrees."""
    c = (np.trace(np.asarray(R_hat).T @ np.asarray(R_gt)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


class TranslationError(NamedTuple):
    value: float
    absolute: bool  # True when t_gt = 0 and ``value`` is ||t_hat||


def translation_error(t_hat: Array, t_gt: Array) -> TranslationError:
    """||t_hat - t_gt|| / ||t_gt|| in percent."""
    t_hat = np.asarray(t_hat, dtype=float)
    t_gt = np.asarray(t_gt, dtype=float)
    ref = np.linalg.norm(t_gt)
    if ref == 0.0:
        return TranslationError(float(np.linalg.norm(t_hat)), True)
    return TranslationError(float(100.0 * np.linalg.norm(t_hat - t_gt) / ref), False)


PNL_EPSILON = 1e-3


def default_epsilon(cfg: SceneConfig, protocol: str = "generic") -> float:
    """Rotation inlier threshold matched to the scene noise.

    Generic scenes tilt each source direction by at most a few angular
    sigmas; (4 sigma)^2 admits practically every inlier.  Back-projected
    segments have heavy-tailed normal errors (short segments are poorly
    constrained), so the PnL threshold is fixed from the empirical
    residual distribution at one pixel of endpoint noise and scaled.
    """
    if protocol == "pnl":
        # Residuals scale with the squared pixel noise.
        return PNL_EPSILON * max(cfg.pixel_noise, 0.25) ** 2
    return max((4.0 * cfg.angular_noise) ** 2, 1e-6)


BENCH_COLUMNS = ("ratio", "repeat", "rot_err_deg", "trans_err_pct", "inliers_found", "wall_ms")


@dataclass(frozen=True)
class BenchmarkSpec:
    scene: SceneConfig
    ratios: tuple[float, ...] = (0.0, 0.4, 0.8)
    repeats: int = 5
    protocol: str = "generic"  # or "pnl"
    timing: bool = True
    threads: int = 1
    solver: "object | None" = field(default=None)


def _scene_for(spec: BenchmarkSpec, ratio_idx: int, repeat: int) -> Scene:
    seed = int(np.random.SeedSequence([spec.scene.rng_seed, ratio_idx, repeat]).generate_state(1)[0])
    cfg = replace(spec.scene, outlier_ratio=spec.ratios[ratio_idx], rng_seed=seed)
    if spec.protocol == "pnl":
        return generate_pnl_scene(cfg)
    return generate_scene(cfg)


def _run_one(args) -> dict:
    from .solver import SolverConfig, register_pairs

    spec, ratio_idx, repeat = args
    scene = _scene_for(spec, ratio_idx, repeat)
    solver = spec.solver or SolverConfig()
    start = time.perf_counter()
    result = register_pairs(scene.pairs, solver)
    wall_ms = 1000.0 * (time.perf_counter() - start)
    T = result.transform
    return {
        "ratio": spec.ratios[ratio_idx],
        "repeat": repeat,
        "rot_err_deg": rotation_error(T.rotation, scene.T_gt.rotation),
        "trans_err_pct": translation_error(T.translation, scene.T_gt.translation).value,
        "inliers_found": len(result.inliers),
        "true_inliers_recovered": bool(np.all(np.isin(np.flatnonzero(scene.inlier_mask), result.inliers))),
        "wall_ms": wall_ms if spec.timing else None,
    }


def run_benchmark(spec: BenchmarkSpec) -> list[dict]:
    """One row per (ratio, repeat), ordered by ratio then repeat."""
    jobs = [(spec, r, k) for r in range(len(spec.ratios)) for k in range(spec.repeats)]
    if spec.threads > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def summarize(rows: Sequence[dict]) -> list[dict]:
    out = []
    for ratio in sorted({r["ratio"] for r in rows}):
        sel = [r for r in rows if r["ratio"] == ratio]
        times = [r["wall_ms"] for r in sel if r["wall_ms"] is not None]
        out.append({
            "ratio": ratio,
            "runs": len(sel),
            "median_rot_err_deg": float(np.median([r["rot_err_deg"] for r in sel])),
            "median_trans_err_pct": float(np.median([r["trans_err_pct"] for r in sel])),
            "median_wall_ms": float(np.median(times)) if times else None,
        })
    return out


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for r in rows:
        writer.writerow([
            repr(float(r["ratio"])),
            r["repeat"],
            f"{r['rot_err_deg']:.17g}",
            f"{r['trans_err_pct']:.17g}",
            r["inliers_found"],
            "" if r["wall_ms"] is None else f"{r['wall_ms']:.3f}",
        ])
    return buf.getvalue()
